"""State-space model definitions, linearization, component splitting and simulation."""
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.stats import norm

from .errors import LinearizationError
from .linalg import sqrt_factor
from .mixture import GaussianComponent, GaussianMixture, sample

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Signal:
    """Step-indexed offset signal ``t -> amplitude * g(t)``.

    ``kind`` is one of ``none``, ``constant``, ``sin``, ``cos`` or
    ``gaussian``. Trigonometric kinds evaluate ``g(t) = sin/cos(frequency*t + phase)``.
    ``gaussian`` draws ``std * z`` with ``z`` seeded by ``(seed, t)``, so the
    value is a pure function of the step.
    """

    kind: str = "none"
    amplitude: tuple = (0.0,)
    frequency: float = 1.0
    phase: float = 0.0
    std: float = 1.0
    seed: int = 0

    KINDS = ("none", "constant", "sin", "cos", "gaussian")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}; expected one of {self.KINDS}")
        amp = tuple(float(a) for a in np.atleast_1d(self.amplitude))
        object.__setattr__(self, "amplitude", amp)

    @classmethod
    def zeros(cls, dim):
        return cls("none", (0.0,) * dim)

    @property
    def dim(self):
        return len(self.amplitude)

    def __call__(self, t):
        amp = np.array(self.amplitude)
        if self.kind == "none":
            return np.zeros_like(amp)
        if self.kind == "constant":
            return amp
        if self.kind == "sin":
            return amp * np.sin(self.frequency * t + self.phase)
        if self.kind == "cos":
            return amp * np.cos(self.frequency * t + self.phase)
        z = np.random.default_rng([int(self.seed), int(t)]).standard_normal()
        return amp * (self.std * z)

    def to_dict(self):
        d = {"kind": self.kind, "amplitude": list(self.amplitude)}
        if self.kind in ("sin", "cos"):
            d.update(frequency=self.frequency, phase=self.phase)
        elif self.kind == "gaussian":
            d.update(std=self.std, seed=self.seed)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _offset(value, dim):
    if value is None:
        return Signal.zeros(dim)
    if callable(value):
        return value
    return Signal("constant", tuple(np.atleast_1d(np.asarray(value, dtype=float))))


@dataclass(frozen=True, eq=False)
class ProcessComponent:
    """``beta * N(x'; A x + u(t), Q_sqrt.T @ Q_sqrt)``."""

    weight: float
    A: np.ndarray
    Q_sqrt: np.ndarray
    offset: Callable = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q_sqrt, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n) or Q.shape != (n, n):
            raise ValueError(f"process component shapes inconsistent: A {A.shape}, Q_sqrt {Q.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Q_sqrt", Q)
        object.__setattr__(self, "offset", _offset(self.offset, n))


@dataclass(frozen=True, eq=False)
class MeasurementComponent:
    """``gamma * N(y; C x + v(t), R_sqrt.T @ R_sqrt)``."""

    weight: float
    C: np.ndarray
    R_sqrt: np.ndarray
    offset: Callable = None

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        R = np.atleast_2d(np.asarray(self.R_sqrt, dtype=float))
        p = C.shape[0]
        if R.shape != (p, p):
            raise ValueError(f"measurement component shapes inconsistent: C {C.shape}, R_sqrt {R.shape}")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "R_sqrt", R)
        object.__setattr__(self, "offset", _offset(self.offset, p))


def _check_weights(weights, what):
    total = float(np.sum(weights))
    if abs(total - 1.0) > _WEIGHT_TOL:
        raise ValueError(f"{what} weights sum to {total!r}, expected 1")


@dataclass(frozen=True, eq=False)
class GmmStateSpaceModel:
    """Mixture prior, mixture process model and mixture measurement model."""

    prior: GaussianMixture
    process: tuple
    measurement: tuple

    def __post_init__(self):
        object.__setattr__(self, "process", tuple(self.process))
        object.__setattr__(self, "measurement", tuple(self.measurement))
        if not self.process or not self.measurement:
            raise ValueError("model needs at least one process and one measurement component")
        _check_weights(self.prior.weights, "prior")
        _check_weights([c.weight for c in self.process], "process")
        _check_weights([c.weight for c in self.measurement], "measurement")
        n = self.prior.dim
        for j, c in enumerate(self.process):
            if c.A.shape != (n, n):
                raise ValueError(f"process component {j}: A has shape {c.A.shape}, state dim is {n}")
        p = self.measurement[0].C.shape[0]
        for k, c in enumerate(self.measurement):
            if c.C.shape != (p, n):
                raise ValueError(
                    f"measurement component {k}: C has shape {c.C.shape}, expected {(p, n)}"
                )

    @property
    def n(self):
        return self.prior.dim

    @property
    def p(self):
        return self.measurement[0].C.shape[0]

    is_linear = True


@dataclass(frozen=True, eq=False)
class NonlinearModel:
    """Additive-Gaussian nonlinear model ``x' = f(x, t) + w``, ``y = h(x, t) + e``.

    ``f``, ``h`` and their Jacobians must broadcast over leading axes of
    ``x``: ``f(x[..., n], t) -> [..., n]`` and ``f_jacobian -> [..., n, n]``,
    ``h -> [..., p]`` and ``h_jacobian -> [..., p, n]``.
    """

    f: Callable
    f_jacobian: Callable
    h: Callable
    h_jacobian: Callable
    Q_sqrt: np.ndarray
    R_sqrt: np.ndarray
    prior: GaussianMixture
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "Q_sqrt", np.atleast_2d(np.asarray(self.Q_sqrt, dtype=float)))
        object.__setattr__(self, "R_sqrt", np.atleast_2d(np.asarray(self.R_sqrt, dtype=float)))
        _check_weights(self.prior.weights, "prior")
        if self.Q_sqrt.shape != (self.n, self.n):
            raise ValueError(f"Q_sqrt shape {self.Q_sqrt.shape} does not match state dim {self.n}")

    @property
    def n(self):
        return self.prior.dim

    @property
    def p(self):
        return self.R_sqrt.shape[0]

    is_linear = False


def linearize_process(nm, x_hat, t):
    """First-order expansion of ``f`` about ``x_hat``: returns ``(A, u)``.

    ``x_hat`` may carry leading batch axes.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    A = np.asarray(nm.f_jacobian(x_hat, t), dtype=float)
    fx = np.asarray(nm.f(x_hat, t), dtype=float)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(fx))):
        raise LinearizationError(f"non-finite process linearization at t={t}")
    return A, fx - np.einsum("...ij,...j->...i", A, x_hat)


def linearize_measurement(nm, x_hat, t):
    """First-order expansion of ``h`` about ``x_hat``: returns ``(C, v)``."""
    x_hat = np.asarray(x_hat, dtype=float)
    C = np.asarray(nm.h_jacobian(x_hat, t), dtype=float)
    hx = np.asarray(nm.h(x_hat, t), dtype=float)
    if not (np.all(np.isfinite(C)) and np.all(np.isfinite(hx))):
        raise LinearizationError(f"non-finite measurement linearization at t={t}")
    return C, hx - np.einsum("...ij,...j->...i", C, x_hat)


def finite_difference_jacobian(fun, x, t, rel_step=1e-6):
    """Central-difference Jacobian of ``fun(x, t)`` at a single point."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(fun(x, t))
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        J[:, i] = (np.atleast_1d(fun(x + e, t)) - np.atleast_1d(fun(x - e, t))) / (2.0 * h)
    return J


def jacobian_errors(nm, points, t=1):
    """Worst scaled discrepancy between supplied and finite-difference Jacobians.

    The error of each entry is ``|J - J_fd| / max(|J|, 1)``. Returns a
    ``(process, measurement)`` pair of maxima over ``points``.
    """
    worst_f = worst_h = 0.0
    for x in np.atleast_2d(points):
        for fun, jac, which in ((nm.f, nm.f_jacobian, 0), (nm.h, nm.h_jacobian, 1)):
            J = np.atleast_2d(jac(x, t))
            Jfd = finite_difference_jacobian(fun, x, t)
            err = float(np.max(np.abs(J - Jfd) / np.maximum(np.abs(J), 1.0)))
            if which == 0:
                worst_f = max(worst_f, err)
            else:
                worst_h = max(worst_h, err)
    return worst_f, worst_h


# -- component splitting ---------------------------------------------------


@dataclass(frozen=True)
class SplitConfig:
    """Replace each component by ``n_split`` narrower ones along its widest axis."""

    n_split: int = 3
    spread: float = 0.5

    def __post_init__(self):
        if self.n_split < 1:
            raise ValueError("n_split must be >= 1")
        if not 0.0 < self.spread <= 1.0:
            raise ValueError("spread must lie in (0, 1]")

    def offsets(self):
        """Standardized offsets of the sub-means and the variance they account for."""
        q = norm.ppf((np.arange(self.n_split) + 0.5) / self.n_split)
        q = 0.5 * (q - q[::-1])  # exact antisymmetry
        s = self.spread * q
        return s, float(np.mean(s * s))


def split_mixture(m, cfg):
    """Split every component of ``m``; sub-components are kept adjacent and in order."""
    if cfg is None or cfg.n_split == 1:
        return m
    s, frac = cfg.offsets()
    P = m.covariances
    vals, vecs = np.linalg.eigh(P)
    lam = vals[:, -1].clip(min=0.0)
    axis = vecs[:, :, -1]
    # sign-fix the axis so the split is deterministic
    pivot = np.argmax(np.abs(axis), axis=1)
    axis = axis * np.sign(axis[np.arange(len(m)), pivot])[:, None]
    step = np.sqrt(lam)[:, None] * axis  # (N, n)
    means = m.means[:, None, :] + s[None, :, None] * step[:, None, :]
    # remove the variance now carried by the spread of the sub-means
    P_sub = P - frac * lam[:, None, None] * np.einsum("ni,nj->nij", axis, axis)
    R_sub = sqrt_factor(P_sub)
    k = cfg.n_split
    N, n = m.means.shape
    return GaussianMixture(
        np.repeat(m.weights / k, k),
        means.reshape(N * k, n),
        np.repeat(R_sub, k, axis=0),
    )


def split_component(c, cfg):
    """Split one component; weights, mean and covariance are preserved."""
    if cfg.n_split == 1:
        return [c]
    return split_mixture(GaussianMixture.from_components([c]), cfg).components


# -- simulation -----------------------------------------------------------


class Simulation(NamedTuple):
    states: np.ndarray
    measurements: np.ndarray
    process_modes: Optional[np.ndarray] = None
    measurement_modes: Optional[np.ndarray] = None


def simulate(model, N, rng):
    """Simulate ``N`` states and measurements; steps are numbered ``t = 1..N``."""
    if N < 1:
        raise ValueError("need at least one step")
    n, p = model.n, model.p
    x = sample(model.prior, rng, 1)[0]
    states = np.empty((N, n))
    ys = np.empty((N, p))
    if model.is_linear:
        beta = np.array([c.weight for c in model.process])
        gamma = np.array([c.weight for c in model.measurement])
        pmodes = np.empty(max(N - 1, 0), dtype=int)
        mmodes = np.empty(N, dtype=int)
    for i in range(N):
        t = i + 1
        states[i] = x
        if model.is_linear:
            k = rng.choice(len(gamma), p=gamma)
            mc = model.measurement[k]
            mmodes[i] = k
            ys[i] = mc.C @ x + mc.offset(t) + mc.R_sqrt.T @ rng.standard_normal(p)
        else:
            ys[i] = model.h(x, t) + model.R_sqrt.T @ rng.standard_normal(p)
        if i == N - 1:
            break
        if model.is_linear:
            j = rng.choice(len(beta), p=beta)
            pc = model.process[j]
            pmodes[i] = j
            x = pc.A @ x + pc.offset(t) + pc.Q_sqrt.T @ rng.standard_normal(n)
        else:
            x = model.f(x, t) + model.Q_sqrt.T @ rng.standard_normal(n)
    if model.is_linear:
        return Simulation(states, ys, pmodes, mmodes)
    return Simulation(states, ys)


# -- builtin nonlinear models -------------------------------------------------


def _quadratic_measurement(prior, amplitude=5.0, time_step=0.1, process_var=0.01,
                           meas_var=25.0, meas_scale=1.0):
    def f(x, t):
        return x + amplitude * np.cos(time_step * t)

    def f_jac(x, t):
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape + (1,))

    def h(x, t):
        return meas_scale * np.asarray(x) ** 2

    def h_jac(x, t):
        return (2.0 * meas_scale * np.asarray(x, dtype=float))[..., None]

    return f, f_jac, h, h_jac, process_var, meas_var


def _ucm_benchmark(prior, a=0.5, b=25.0, c=8.0, d=0.05, omega=1.2, process_var=1.0,
                   meas_var=1.0, form="standard"):
    if form not in ("standard", "printed"):
        raise ValueError(f"form must be 'standard' or 'printed', got {form!r}")

    if form == "standard":
        def f(x, t):
            x = np.asarray(x, dtype=float)
            return a * x + b * x / (1.0 + x * x) + c * np.cos(omega * t)

        def f_jac(x, t):
            x = np.asarray(x, dtype=float)
            return (a + b * (1.0 - x * x) / (1.0 + x * x) ** 2)[..., None]
    else:
        def f(x, t):
            x = np.asarray(x, dtype=float)
            return (a + b) * x + c * np.cos(omega * t)

        def f_jac(x, t):
            x = np.asarray(x, dtype=float)
            return np.full(x.shape + (1,), a + b)

    def h(x, t):
        return d * np.asarray(x, dtype=float) ** 2

    def h_jac(x, t):
        return (2.0 * d * np.asarray(x, dtype=float))[..., None]

    return f, f_jac, h, h_jac, process_var, meas_var


NONLINEAR_BUILTINS = {
    "quadratic-measurement": _quadratic_measurement,
    "ucm-benchmark": _ucm_benchmark,
}


def build_nonlinear(name, prior, params=None):
    """Instantiate a registered scalar nonlinear model."""
    params = dict(params or {})
    try:
        factory = NONLINEAR_BUILTINS[name]
    except KeyError:
        raise ValueError(
            f"unknown nonlinear model {name!r}; known: {sorted(NONLINEAR_BUILTINS)}"
        ) from None
    f, f_jac, h, h_jac, qv, rv = factory(prior, **params)
    return NonlinearModel(
        f, f_jac, h, h_jac, np.sqrt([[qv]]), np.sqrt([[rv]]), prior, name=name, params=params
    )


def grid_prior(lo, hi, counts, variance):
    """Equal-weight prior with means on a regular grid spanning ``[lo, hi]`` per axis."""
    counts = np.atleast_1d(counts)
    axes = [np.linspace(lo, hi, int(c)) for c in counts]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    n = mesh.shape[1]
    R = np.sqrt(variance) * np.eye(n)
    N = mesh.shape[0]
    return GaussianMixture(np.full(N, 1.0 / N), mesh, np.repeat(R[None], N, axis=0))
