"""Error and component-count summaries for filter traces."""
import numpy as np

from .export import COUNT_COLUMNS


def _get(trace, key):
    if isinstance(trace, dict):
        return trace.get(key)
    return getattr(trace, key, None)


def rmse(estimates, truth):
    """Root mean squared error over steps, using the Euclidean error per step."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float).T).T
    truth = np.atleast_2d(np.asarray(truth, dtype=float).T).T
    if estimates.shape != truth.shape:
        raise ValueError(f"length mismatch: estimates {estimates.shape}, truth {truth.shape}")
    return float(np.sqrt(np.mean(np.sum((estimates - truth) ** 2, axis=1))))


def metrics_report(states, traces, runtimes=None, density_files=()):
    """Per-method RMSE and count statistics as a JSON-ready dict.

    ``traces`` maps method names to trace objects or to dicts read back with
    :func:`gmmfilter.export.read_trace`. RMSE entries are omitted when
    ``states`` is ``None``.
    """
    methods = {}
    for name, tr in traces.items():
        entry = {"steps": int(len(_get(tr, "t")))}
        if states is not None:
            pred, filt = _get(tr, "pred_means"), _get(tr, "filt_means")
            if len(pred) != len(states):
                raise ValueError(
                    f"{name}: trace has {len(pred)} steps but truth has {len(states)}"
                )
            entry["rmse_pred"] = rmse(pred, states)
            entry["rmse_filt"] = rmse(filt, states)
            entry["rmse_pred_per_state"] = [
                float(v) for v in np.sqrt(np.mean((np.asarray(pred) - states) ** 2, axis=0))
            ]
        counts = {}
        for c in COUNT_COLUMNS:
            vals = _get(tr, c)
            if vals is not None:
                vals = np.asarray(vals)
                counts[c] = {"mean": float(np.mean(vals)), "max": int(np.max(vals)),
                             "min": int(np.min(vals))}
        if counts:
            entry["counts"] = counts
            entry["n_pred_per_step"] = [int(v) for v in _get(tr, "n_pred")]
            entry["n_filt_per_step"] = [int(v) for v in _get(tr, "n_filt")]
        if runtimes and name in runtimes:
            entry["runtime_s"] = float(runtimes[name])
        methods[name] = entry
    return {"methods": methods, "density_files": list(density_files)}


def format_table(report):
    lines = [f"{'method':<10} {'steps':>6} {'rmse_pred':>12} {'rmse_filt':>12} {'max_n_filt':>10}"]
    for name, e in report["methods"].items():
        rp = f"{e['rmse_pred']:.6g}" if "rmse_pred" in e else "-"
        rf = f"{e['rmse_filt']:.6g}" if "rmse_filt" in e else "-"
        mx = str(e["counts"]["n_filt"]["max"]) if "counts" in e else "-"
        lines.append(f"{name:<10} {e['steps']:>6} {rp:>12} {rf:>12} {mx:>10}")
    return "\n".join(lines)
