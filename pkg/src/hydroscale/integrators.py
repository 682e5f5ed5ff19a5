"""Semi-implicit Euler-Maruyama solvers for the small-noise family.

Every solver advances

    x_{k+1} = (I + dt A)^{-1} [x_k + dt F_k + G_k]

with A diagonal, the drift F_k and the forcing G_k evaluated at the left node
t_k.  States may carry leading replica axes: a state array of shape (R, n)
is advanced for R replicas at once, with increments of shape (steps, R, m).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import InvalidInput, ModelSpec, norms, op_apply, v_norm_sq
from .stochastics import HEADER, ControlPath, CovarianceSpec, TimeGrid, WienerIncrements, pad_noise

# replica states beyond this magnitude count as blown up
BLOWUP_LEVEL = 1e150


class IntegrationError(RuntimeError):
    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


@dataclass(frozen=True)
class ScalingSpec:
    """Noise level eps and deviation scale lam; lam = 1 is the fluctuation regime."""

    eps: float
    lam: float = 1.0

    def __post_init__(self):
        if not (self.eps >= 0 and np.isfinite(self.eps)):
            raise InvalidInput("eps must be finite and >= 0")
        if not self.lam >= 1:
            raise InvalidInput("lam must be >= 1")

    @classmethod
    def moderate(cls, eps, a=0.25):
        if not 0 < a < 0.5:
            raise InvalidInput("exponent a must lie in (0, 1/2)")
        if not 0 < eps:
            raise InvalidInput("eps must be > 0")
        return cls(eps, eps**-a)

    @classmethod
    def skeleton_limit(cls):
        """eps = 0, lam = inf: no noise and no nonlinear correction."""
        return cls(0.0, np.inf)

    @property
    def sqrt_eps(self):
        return np.sqrt(self.eps)

    @property
    def shift(self):
        """sqrt(eps) * lam, the size of the nonlinear correction."""
        return 0.0 if self.eps == 0 else float(np.sqrt(self.eps) * self.lam)

    @property
    def inv_lam(self):
        return 0.0 if np.isinf(self.lam) else 1.0 / self.lam

    def check_moderate(self):
        if not self.shift < 1:
            raise InvalidInput(f"sqrt(eps)*lam = {self.shift:.3g} must be < 1 in the deviation regime")
        if self.eps <= 0:
            raise InvalidInput("deviation runs need eps > 0")


@dataclass(eq=False)
class StatePath:
    """States at the nodes of ``grid``: shape (steps + 1, [R,] n)."""

    grid: TimeGrid
    states: np.ndarray
    provenance: dict = field(default_factory=dict)
    blown_up: np.ndarray | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape[0] != self.grid.steps + 1:
            raise InvalidInput(f"path needs {self.grid.steps + 1} nodes, got {self.states.shape[0]}")

    @property
    def terminal(self):
        return self.states[-1]

    @property
    def n(self):
        return self.states.shape[-1]

    def __sub__(self, other):
        return self.states - (other.states if isinstance(other, StatePath) else other)

    def norms(self, model):
        return norms(model, self.states)

    def sup_sq(self, x=None):
        """max_k |x_k|^2 along the path (per replica)."""
        x = self.states if x is None else x
        return np.max(np.sum(x**2, axis=-1), axis=0)

    def energy_integral(self, model, x=None):
        """sum_{k>=1} dt ||x_k||^2, the right-endpoint rule of the energy identity."""
        x = self.states if x is None else x
        return self.grid.dt * np.sum(v_norm_sq(model, x[1:]), axis=0)

    def distance(self, model, other):
        """sup_t |x - y|^2 + int ||x - y||^2 dt per replica."""
        d = self.states - (other.states if isinstance(other, StatePath) else other)
        return self.sup_sq(d) + self.energy_integral(model, d)

    def replica(self, i):
        return StatePath(self.grid, self.states[:, i], dict(self.provenance, replica=int(i)))

    def to_bytes(self, seed=0):
        if self.states.ndim != 2:
            raise InvalidInput("only single-replica paths serialize")
        arr = np.ascontiguousarray(self.states, dtype="<f8")
        return HEADER.pack(float(self.grid.T), int(self.grid.steps), int(self.n), int(seed)) + arr.tobytes()

    @classmethod
    def from_bytes(cls, data, provenance=None):
        T, steps, n, _ = HEADER.unpack_from(data, 0)
        body = np.frombuffer(data, dtype="<f8", offset=HEADER.size)
        if body.size != (steps + 1) * n:
            raise InvalidInput("binary payload does not match header")
        return cls(TimeGrid(T, steps), body.reshape(steps + 1, n).copy(), dict(provenance or {}))

    def write(self, path_stem):
        """Binary states plus a JSON sidecar with the provenance."""
        seed = int(self.provenance.get("seed", 0))
        with open(f"{path_stem}.bin", "wb") as f:
            f.write(self.to_bytes(seed))
        with open(f"{path_stem}.json", "w") as f:
            json.dump(self.provenance, f, indent=2, sort_keys=True, default=_json_default)

    @classmethod
    def read(cls, path_stem):
        with open(f"{path_stem}.bin", "rb") as f:
            data = f.read()
        with open(f"{path_stem}.json") as f:
            prov = json.load(f)
        return cls.from_bytes(data, prov)

    def write_csv(self, path, model):
        if self.states.ndim != 2:
            raise InvalidInput("only single-replica paths export to CSV")
        nt = self.norms(model)
        t = self.grid.nodes()
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["t", "h_norm", "v_norm", "interp_norm"])
            for k in range(t.shape[0]):
                wr.writerow([f"{x:.17g}" for x in (t[k], nt.h_norm[k], nt.v_norm[k], nt.interp[k])])


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x)}")


# ------------------------------------------------------------------ plumbing


def _increments(inc, grid, m_cov):
    arr = inc.increments if isinstance(inc, WienerIncrements) else np.asarray(inc, dtype=float)
    if isinstance(inc, WienerIncrements) and inc.grid != grid:
        raise InvalidInput("increments live on a different grid")
    if arr.shape[0] != grid.steps or arr.shape[-1] != m_cov:
        raise InvalidInput(f"increments must have shape (steps={grid.steps}, ..., m={m_cov})")
    return arr


def _base_path(u0_path, grid, n):
    arr = u0_path.states if isinstance(u0_path, StatePath) else np.asarray(u0_path, dtype=float)
    if isinstance(u0_path, StatePath) and u0_path.grid != grid:
        raise InvalidInput("base path lives on a different grid")
    if arr.shape != (grid.steps + 1, n):
        raise InvalidInput(f"base path must have shape ({grid.steps + 1}, {n})")
    return arr


def _control(phi, grid, cov):
    if isinstance(phi, ControlPath):
        if phi.grid != grid:
            raise InvalidInput("control lives on a different grid")
        return pad_cols(phi.physical(cov), cov.m)
    arr = np.asarray(phi, dtype=float)
    if arr.shape[0] != grid.steps:
        raise InvalidInput("control must have one row per step")
    return arr


def pad_cols(x, m):
    if x.shape[-1] == m:
        return x
    out = np.zeros(x.shape[:-1] + (m,))
    out[..., : x.shape[-1]] = x
    return out


def _noise(model, t, u, w):
    """sigma(t,u) w for a physical noise vector w with cov.m <= noise_dim entries."""
    return op_apply(model.noise_coefficient(t, u), pad_noise(w, model.noise_dim), model.dimension)


def _check_cov(model, cov):
    if cov.m > model.noise_dim:
        raise InvalidInput(f"covariance has {cov.m} modes, model noise has {model.noise_dim}")


def march(model: ModelSpec, grid: TimeGrid, x0, step_terms, on_blowup="raise", check_every=1):
    """Generic semi-implicit loop.

    ``step_terms(k, t, x)`` returns (F_k, G_k).  With on_blowup="flag",
    replicas that leave the finite range are zeroed and reported instead of
    aborting the run.
    """
    dt = grid.dt
    resolvent = 1.0 / (1.0 + dt * model.a_spectrum)
    x = np.array(x0, dtype=float)
    states = np.empty((grid.steps + 1,) + x.shape)
    states[0] = x
    bad = np.zeros(x.shape[:-1], dtype=bool)
    for k in range(grid.steps):
        t = k * dt
        f, g = step_terms(k, t, x)
        x = resolvent * (x + dt * f + g)
        if (k + 1) % check_every == 0 or k + 1 == grid.steps:
            finite = np.all(np.isfinite(x), axis=-1) & (np.max(np.abs(x), axis=-1, initial=0.0) < BLOWUP_LEVEL)
            if not np.all(finite):
                if on_blowup == "raise":
                    raise IntegrationError(f"non-finite state at step {k + 1} (t = {(k + 1) * dt:.6g})", step=k + 1)
                bad |= ~finite
                x[~finite] = 0.0
        states[k + 1] = x
    return states, bad


def _path(grid, states, bad, **prov):
    return StatePath(grid, states, prov, bad if bad.ndim and bad.any() else None)


# ------------------------------------------------------------------ solvers


def solve_deterministic(model: ModelSpec, xi, grid: TimeGrid, on_blowup="raise") -> StatePath:
    xi = model.check_state(xi)

    def terms(k, t, u):
        return -model.B(u, u) - model.reaction(t, u), 0.0

    states, bad = march(model, grid, xi, terms, on_blowup)
    return _path(grid, states, bad, equation="deterministic")


def solve_sde(model, cov: CovarianceSpec, xi, grid, scaling: ScalingSpec, inc, on_blowup="raise") -> StatePath:
    """Small-noise equation with forcing sqrt(eps) sigma(t_k, u_k) dW_k."""
    xi = model.check_state(xi)
    _check_cov(model, cov)
    dw = _increments(inc, grid, cov.m)
    se = scaling.sqrt_eps
    x0 = np.broadcast_to(xi, dw.shape[1:-1] + (model.dimension,))

    def terms(k, t, u):
        f = -model.B(u, u) - model.reaction(t, u)
        if se == 0:
            return f, 0.0
        return f, se * _noise(model, t, u, dw[k])

    states, bad = march(model, grid, x0, terms, on_blowup)
    return _path(grid, states, bad, equation="small-noise", eps=scaling.eps)


def _linear_drift(model, u0, k, t, x):
    base = u0[k]
    return -(model.B(x, base) + model.B(base, x) + op_apply(model.reaction_derivative(t, base), x, model.dimension))


def solve_linearized(model, cov, u0_path, grid, inc, on_blowup="raise") -> StatePath:
    """Fluctuation limit: linear drift about u0, noise sigma(t, u0) dW, zero start."""
    _check_cov(model, cov)
    u0 = _base_path(u0_path, grid, model.dimension)
    dw = _increments(inc, grid, cov.m)
    x0 = np.zeros(dw.shape[1:-1] + (model.dimension,))

    def terms(k, t, x):
        return _linear_drift(model, u0, k, t, x), _noise(model, t, u0[k], dw[k])

    states, bad = march(model, grid, x0, terms, on_blowup)
    return _path(grid, states, bad, equation="linearized")


def _deviation_drift(model, u0, s, k, t, x):
    base = u0[k]
    if s == 0:
        return _linear_drift(model, u0, k, t, x), base
    full = base + s * x
    react = (model.reaction(t, full) - model.reaction(t, base)) / s
    return -(model.B(x, full) + model.B(base, x) + react), full


def solve_moderate(model, cov, u0_path, grid, scaling: ScalingSpec, inc, on_blowup="raise") -> StatePath:
    """Deviation process (u^eps - u0) / (sqrt(eps) lam), integrated directly."""
    scaling.check_moderate()
    _check_cov(model, cov)
    u0 = _base_path(u0_path, grid, model.dimension)
    dw = _increments(inc, grid, cov.m)
    s, il = scaling.shift, scaling.inv_lam
    x0 = np.zeros(dw.shape[1:-1] + (model.dimension,))

    def terms(k, t, x):
        f, full = _deviation_drift(model, u0, s, k, t, x)
        return f, il * _noise(model, t, full, dw[k])

    states, bad = march(model, grid, x0, terms, on_blowup)
    return _path(grid, states, bad, equation="moderate", eps=scaling.eps, lam=scaling.lam)


def solve_skeleton(model, cov, u0_path, grid, h) -> StatePath:
    """Controlled linearization forced by sigma(t, u0) h' dt, zero start."""
    _check_cov(model, cov)
    u0 = _base_path(u0_path, grid, model.dimension)
    hp = _control(h, grid, cov)
    x0 = np.zeros(hp.shape[1:-1] + (model.dimension,))
    dt = grid.dt

    def terms(k, t, x):
        return _linear_drift(model, u0, k, t, x), dt * _noise(model, t, u0[k], hp[k])

    states, _ = march(model, grid, x0, terms)
    return _path(grid, states, np.zeros(()), equation="skeleton")


def solve_controlled(model, cov, u0_path, grid, scaling: ScalingSpec, inc, phi, on_blowup="raise") -> StatePath:
    """Deviation process with the extra forcing sigma(t, u0 + s x) phi' dt.

    ``ScalingSpec.skeleton_limit()`` removes the noise and the nonlinear
    correction, which reduces the recursion to solve_skeleton.
    """
    if scaling.eps > 0:
        scaling.check_moderate()
    _check_cov(model, cov)
    u0 = _base_path(u0_path, grid, model.dimension)
    php = _control(phi, grid, cov)
    s, il = scaling.shift, scaling.inv_lam
    dw = None if inc is None else _increments(inc, grid, cov.m)
    batch = () if dw is None else dw.shape[1:-1]
    x0 = np.zeros(batch + (model.dimension,))
    dt = grid.dt

    def terms(k, t, x):
        f, full = _deviation_drift(model, u0, s, k, t, x)
        w = dt * php[k]
        if dw is not None and il != 0:
            w = w + il * dw[k]
        return f, _noise(model, t, full, w)

    states, bad = march(model, grid, x0, terms, on_blowup)
    return _path(grid, states, bad, equation="controlled", eps=scaling.eps, lam=scaling.lam)


# ------------------------------------------------------------------ scheme validation


@dataclass
class ConvergenceResult:
    dts: np.ndarray
    errors: np.ndarray
    order: float
    monotone: bool
    intercept: float = 0.0

    def to_dict(self):
        return {
            "dts": self.dts.tolist(),
            "errors": self.errors.tolist(),
            "order": self.order,
            "monotone": self.monotone,
        }


SOLVERS = ("sde", "deterministic")


def self_convergence(
    model, cov, xi, grid: TimeGrid, levels=4, n_rep=64, seed=0, scaling=None, solver="sde", reference=None
) -> ConvergenceResult:
    """Strong order from dyadic refinements sharing one set of fine increments.

    ``grid`` is the finest grid; level l uses steps / 2^l.  Without a
    ``reference`` the finest solution is the oracle and the coarsest
    ``levels`` grids are compared against it.  ``reference(fine_increments)``
    may instead return exact terminal states of shape (R, n), in which case the
    finest grid is also scored.
    """
    if levels < 3:
        raise InvalidInput("self_convergence needs at least 3 refinement levels")
    if grid.steps % 2**levels:
        raise InvalidInput(f"steps must be divisible by 2^{levels}")
    if solver not in SOLVERS:
        raise InvalidInput(f"solver must be one of {SOLVERS}")
    from .stochastics import sample_block

    scaling = scaling or ScalingSpec(1.0)
    fine = sample_block(cov, grid, seed, range(n_rep))
    if solver == "deterministic":
        fine = np.zeros_like(fine)
        scaling = ScalingSpec(0.0)

    def terminal(level):
        f = 2**level
        g = TimeGrid(grid.T, grid.steps // f)
        inc = fine.reshape(g.steps, f, n_rep, cov.m).sum(axis=1)
        return solve_sde(model, cov, xi, g, scaling, inc).terminal

    if reference is None:
        oracle = terminal(0)
        lv = range(1, levels + 1)
    else:
        oracle = np.asarray(reference(fine))
        lv = range(0, levels + 1)
    dts, errs = [], []
    for level in lv:
        d = terminal(level) - oracle
        dts.append(grid.dt * 2**level)
        errs.append(np.sqrt(np.mean(np.sum(d**2, axis=-1))))
    dts, errs = np.asarray(dts), np.asarray(errs)
    monotone = bool(np.all(np.diff(errs) > 0))
    if not monotone:
        warnings.warn("strong errors are not monotone in the step size", RuntimeWarning, stacklevel=2)
    fit = stats.linregress(np.log(dts), np.log(np.maximum(errs, 1e-300)))
    return ConvergenceResult(dts, errs, float(fit.slope), monotone, float(fit.intercept))
