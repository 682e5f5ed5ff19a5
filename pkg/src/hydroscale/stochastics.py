"""Q-Wiener increments, Cameron-Martin controls and the action functional.

Noise coordinates are the eigenbasis of the covariance Q with eigenvalues
q_j.  Increments are stored in physical units (variance q_j dt); controls are
stored in Q^{1/2}-coordinates, so the H0 norm of a control is Euclidean.

Random streams come from a Philox counter-based generator keyed by
(base_seed, replica).  Within a replica the counter runs over (step, mode) in
row-major order, so draws never depend on how replicas are scheduled.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .core import InvalidInput, ModelSpec, op_apply

HEADER = struct.Struct("<dqqQ")
_U64 = 2**64


@dataclass(frozen=True)
class TimeGrid:
    T: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise InvalidInput("T must be > 0")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidInput("steps must be an integer >= 1")

    @property
    def dt(self):
        return self.T / self.steps

    def nodes(self):
        return np.arange(self.steps + 1) * self.dt

    def refine(self, factor):
        return TimeGrid(self.T, self.steps * factor)


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        if q.size < 1:
            raise InvalidInput("covariance needs at least one mode")
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise InvalidInput("covariance eigenvalues must be finite and >= 0")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    def __eq__(self, other):
        return isinstance(other, CovarianceSpec) and np.array_equal(self.q, other.q)

    @property
    def m(self):
        return self.q.shape[0]

    @property
    def sqrt_q(self):
        return np.sqrt(self.q)

    @property
    def trace(self):
        return float(self.q.sum())

    @classmethod
    def power_law(cls, m, exponent=2.0, scale=1.0):
        """q_j = scale * j^(-exponent), j = 1..m."""
        return cls(scale * np.arange(1, m + 1, dtype=float) ** -exponent)

    @classmethod
    def uniform(cls, m, value=1.0):
        return cls(np.full(m, float(value)))


def replica_key(base: int, replica: int) -> np.ndarray:
    """Philox key for one replica; integer-only and injective in (base, replica)."""
    base, replica = int(base), int(replica)
    if replica < 0:
        raise InvalidInput("replica index must be >= 0")
    if not (0 <= base < _U64 and replica < _U64):
        raise InvalidInput("seed and replica must fit in 64 unsigned bits")
    return np.array([base, replica], dtype=np.uint64)


def replica_generator(base: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=replica_key(base, replica)))


def standard_draws(grid: TimeGrid, m: int, seed: int, replica: int = 0):
    """Standard normal array (steps, m) for one replica."""
    return replica_generator(seed, replica).standard_normal((grid.steps, m))


def standard_block(grid: TimeGrid, m: int, seed: int, replicas):
    """Standard normals for several replicas, layout (steps, R, m)."""
    out = np.empty((grid.steps, len(replicas), m))
    for i, r in enumerate(replicas):
        out[:, i, :] = standard_draws(grid, m, seed, r)
    return out


def sample_block(cov: CovarianceSpec, grid: TimeGrid, seed: int, replicas):
    """Increments for several replicas, layout (steps, R, m)."""
    return standard_block(grid, cov.m, seed, replicas) * np.sqrt(cov.q * grid.dt)


@dataclass(frozen=True, eq=False)
class WienerIncrements:
    grid: TimeGrid
    increments: np.ndarray
    seed: int = 0

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 2 or inc.shape[0] != self.grid.steps:
            raise InvalidInput(f"increments must have shape (steps={self.grid.steps}, m)")
        object.__setattr__(self, "increments", inc)

    @property
    def m(self):
        return self.increments.shape[1]

    def __add__(self, other):
        _same_grid(self.grid, other.grid)
        return WienerIncrements(self.grid, self.increments + other.increments, self.seed)

    def scaled(self, c):
        return WienerIncrements(self.grid, c * self.increments, self.seed)

    def terminal(self):
        return self.increments.sum(axis=0)

    def coarsen(self, factor):
        """Sum blocks of ``factor`` fine increments into one coarse increment."""
        if factor < 1 or self.grid.steps % factor:
            raise InvalidInput("coarsening factor must divide the step count")
        inc = self.increments.reshape(self.grid.steps // factor, factor, self.m).sum(axis=1)
        return WienerIncrements(TimeGrid(self.grid.T, self.grid.steps // factor), inc, self.seed)

    def to_bytes(self):
        return _pack(self.grid, self.increments, self.seed)

    @classmethod
    def from_bytes(cls, data):
        grid, arr, seed = _unpack(data)
        return cls(grid, arr, seed)

    def write_binary(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def read_binary(cls, path):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    def write_csv(self, path):
        _write_table(path, self.grid, self.increments, "dW")


def sample_increments(cov: CovarianceSpec, grid: TimeGrid, seed: int, replica: int = 0) -> WienerIncrements:
    """Draws dW_kj ~ N(0, q_j dt), reproducible from (seed, replica)."""
    inc = standard_draws(grid, cov.m, seed, replica) * np.sqrt(cov.q * grid.dt)
    return WienerIncrements(grid, inc, int(seed))


def zero_increments(grid: TimeGrid, m: int) -> WienerIncrements:
    return WienerIncrements(grid, np.zeros((grid.steps, m)), 0)


@dataclass(frozen=True, eq=False)
class ControlPath:
    """Piecewise constant control h'(t_k) = sum_j coeffs[k, j] sqrt(q_j) e_j."""

    grid: TimeGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[0] != self.grid.steps:
            raise InvalidInput(f"control coefficients must have shape (steps={self.grid.steps}, m)")
        object.__setattr__(self, "coeffs", c)

    @property
    def m(self):
        return self.coeffs.shape[1]

    @classmethod
    def zero(cls, grid, m):
        return cls(grid, np.zeros((grid.steps, m)))

    @classmethod
    def constant(cls, grid, values):
        values = np.atleast_1d(np.asarray(values, dtype=float))
        return cls(grid, np.tile(values, (grid.steps, 1)))

    def h0_norm_sq(self):
        """|h'(t_k)|_0^2 per step."""
        return np.sum(self.coeffs**2, axis=1)

    def energy(self):
        """int |h'|_0^2 dt with left-endpoint quadrature."""
        return float(self.grid.dt * np.sum(self.coeffs**2))

    def action(self):
        return 0.5 * self.energy()

    def scaled(self, c):
        return ControlPath(self.grid, c * self.coeffs)

    def __add__(self, other):
        _same_grid(self.grid, other.grid)
        return ControlPath(self.grid, self.coeffs + other.coeffs)

    def check_support(self, cov: CovarianceSpec):
        if self.m > cov.m:
            raise InvalidInput(f"control has {self.m} modes, covariance has {cov.m}")
        dead = cov.q[: self.m] == 0
        if np.any(self.coeffs[:, dead] != 0):
            raise InvalidInput("control acts on modes with q_j = 0")

    def physical(self, cov: CovarianceSpec):
        """h'(t_k) in noise coordinates, shape (steps, m)."""
        self.check_support(cov)
        return self.coeffs * cov.sqrt_q[: self.m]

    def to_bytes(self, seed=0):
        return _pack(self.grid, self.coeffs, seed)

    @classmethod
    def from_bytes(cls, data):
        grid, arr, _ = _unpack(data)
        return cls(grid, arr)

    def write_binary(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def read_binary(cls, path):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    def write_csv(self, path):
        _write_table(path, self.grid, self.coeffs, "c", left_nodes=True)


def action(h: ControlPath) -> float:
    return h.action()


def clip_to_ball(h: ControlPath, N: float) -> ControlPath:
    """Radial projection onto {int |h'|_0^2 <= N}."""
    if not N > 0:
        raise InvalidInput("ball radius N must be > 0")
    e = h.energy()
    if e <= N:
        return h
    return h.scaled(np.sqrt(N / e))


def apply_noise_operator(model: ModelSpec, cov: CovarianceSpec, t, u, w):
    """sigma(t,u) applied to sum_j w_j sqrt(q_j) e_j (w in Q^{1/2}-coordinates)."""
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != cov.m:
        raise InvalidInput(f"w needs {cov.m} entries")
    if cov.m > model.noise_dim:
        raise InvalidInput(f"covariance has {cov.m} modes, model noise has {model.noise_dim}")
    if np.any((cov.q == 0) & (w != 0)):
        raise InvalidInput("nonzero coordinate on a mode with q_j = 0")
    phys = pad_noise(w * cov.sqrt_q, model.noise_dim)
    return op_apply(model.noise_coefficient(t, u), phys, model.dimension)


def pad_noise(x, m_model):
    m = x.shape[-1]
    if m == m_model:
        return x
    out = np.zeros(x.shape[:-1] + (m_model,))
    out[..., :m] = x
    return out


def _same_grid(a, b):
    if a != b:
        raise InvalidInput(f"grid mismatch: {a} vs {b}")


def _pack(grid, arr, seed):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return HEADER.pack(float(grid.T), int(grid.steps), int(arr.shape[1]), int(seed)) + arr.tobytes()


def _unpack(data):
    T, steps, m, seed = HEADER.unpack_from(data, 0)
    body = np.frombuffer(data, dtype="<f8", offset=HEADER.size)
    if body.size != steps * m:
        raise InvalidInput(f"binary payload has {body.size} values, header says {steps}x{m}")
    return TimeGrid(T, steps), body.reshape(steps, m).copy(), seed


def _write_table(path, grid, arr, prefix, left_nodes=True):
    t = grid.nodes()[:-1] if left_nodes else grid.nodes()[1:]
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["t"] + [f"{prefix}_{j}" for j in range(arr.shape[1])])
        for k in range(arr.shape[0]):
            wr.writerow([f"{t[k]:.17g}"] + [f"{x:.17g}" for x in arr[k]])
