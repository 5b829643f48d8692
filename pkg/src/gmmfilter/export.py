"""CSV and JSON writers/readers for traces, truth, densities and mixtures."""
import csv
import json
from pathlib import Path

import numpy as np

COUNT_COLUMNS = ("n_pred_pre", "n_pred", "n_pred_used", "n_filt_pre", "n_filt", "n_filt_used")


def _fmt(x):
    # repr gives the shortest string that round-trips exactly
    return repr(float(x))


def ensure_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


class KalmanTrace:
    """Adapts :class:`~gmmfilter.baselines.KalmanResult` to the trace interface."""

    method = "kalman"

    def __init__(self, result):
        self.result = result
        N = result.filt_means.shape[0]
        self.t = np.arange(1, N + 1)
        self.pred_means = result.pred_means[:N]
        self.filt_means = result.filt_means
        self.loglik = result.loglik

    def __len__(self):
        return self.t.size

    def moments(self, kind, t):
        r = self.result
        if kind == "predicted":
            return r.pred_means[t - 1], r.pred_covs[t - 1]
        return r.filt_means[t - 1], r.filt_covs[t - 1]


def write_trace(path, trace):
    """One row per step: counts (blank when not applicable), means, log-likelihood increment."""
    n = trace.pred_means.shape[1]
    header = (
        ["method", "t", *COUNT_COLUMNS]
        + [f"pred_mean_{i}" for i in range(n)]
        + [f"filt_mean_{i}" for i in range(n)]
        + ["loglik"]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, t in enumerate(trace.t):
            if hasattr(trace, "n_filt"):
                counts = [int(getattr(trace, c)[i]) for c in COUNT_COLUMNS]
            elif trace.method == "kalman":
                counts = [1] * len(COUNT_COLUMNS)
            else:
                counts = [""] * len(COUNT_COLUMNS)
            w.writerow(
                [trace.method, int(t), *counts]
                + [_fmt(v) for v in trace.pred_means[i]]
                + [_fmt(v) for v in trace.filt_means[i]]
                + [_fmt(trace.loglik[i])]
            )


def read_trace(path):
    """Read a trace CSV into a dict of column arrays (plus ``method``)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty trace")
    out = {"method": rows[0]["method"], "t": np.array([int(r["t"]) for r in rows])}
    pred = _indexed(rows[0], "pred_mean_")
    filt = _indexed(rows[0], "filt_mean_")
    out["pred_means"] = np.array([[float(r[k]) for k in pred] for r in rows])
    out["filt_means"] = np.array([[float(r[k]) for k in filt] for r in rows])
    out["loglik"] = np.array([float(r["loglik"]) for r in rows])
    for c in COUNT_COLUMNS:
        if rows[0].get(c, "") != "":
            out[c] = np.array([int(r[c]) for r in rows])
    return out


def _indexed(row, prefix):
    keys = [k for k in row if k.startswith(prefix)]
    return sorted(keys, key=lambda k: int(k[len(prefix):]))


def write_truth(path, measurements, states=None):
    ys = np.atleast_2d(np.asarray(measurements, dtype=float).T).T
    header = ["t"]
    if states is not None:
        header += [f"x_{i}" for i in range(states.shape[1])]
    header += [f"y_{i}" for i in range(ys.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ys.shape[0]):
            row = [i + 1]
            if states is not None:
                row += [_fmt(v) for v in states[i]]
            row += [_fmt(v) for v in ys[i]]
            w.writerow(row)


def read_truth(path):
    """Return ``(states or None, measurements or None)`` from a truth CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    xs = _indexed(rows[0], "x_")
    ys = _indexed(rows[0], "y_")
    states = np.array([[float(r[k]) for k in xs] for r in rows]) if xs else None
    meas = np.array([[float(r[k]) for k in ys] for r in rows]) if ys else None
    return states, meas


def write_densities(path, axes, densities):
    """Long-format density grids: ``method, kind, t, x_0[, x_1], density``."""
    n = len(axes)
    header = ["method", "kind", "t"] + [f"x_{i}" for i in range(n)] + ["density"]
    if n == 1:
        pts = axes[0][:, None]
    else:
        mx, my = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([mx.ravel(), my.ravel()])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for method, kind, t, dens in densities:
            for p, d in zip(pts, np.ravel(dens)):
                w.writerow([method, kind, int(t), *(_fmt(v) for v in p), _fmt(d)])


def write_mixtures(path, trace):
    data = {
        "method": trace.method,
        "steps": [
            {"t": int(t), "predicted": p.to_dict(), "filtered": f.to_dict()}
            for t, p, f in zip(trace.t, trace.predicted, trace.filtered)
        ],
    }
    write_json(path, data)


def write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
