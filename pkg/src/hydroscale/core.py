"""Abstract hydrodynamical system: operators, norms and linear-map helpers.

A model lives on a finite truncation of the state space H = R^n.  States are
numpy arrays whose last axis has length ``n``; any leading axes are treated as
independent batch members (replicas), so every callable on a ModelSpec must
broadcast over them.

Linear maps returned by ``noise_coefficient`` and ``reaction_derivative`` are
either a :class:`Diag` (diagonal, possibly acting on fewer input coordinates
than the state dimension) or a dense ndarray of shape ``(..., n_out, n_in)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

# declared hypothesis constants must be strictly positive
CONST_FLOOR = 1e-12


class InvalidInput(ValueError):
    """Raised for arguments that violate an operation's preconditions."""


@dataclass(frozen=True)
class Diag:
    """Diagonal linear map: coordinate j -> values[..., j] * e_j.

    The input dimension is ``values.shape[-1]``; outputs are padded with
    zeros up to the target dimension.
    """

    values: np.ndarray


def op_apply(op, w, n_out):
    """Apply a Diag or dense operator to ``w`` and return an ``n_out`` vector."""
    w = np.asarray(w, dtype=float)
    if isinstance(op, Diag):
        m = op.values.shape[-1]
        if w.shape[-1] != m:
            raise InvalidInput(f"operator expects {m} input coordinates, got {w.shape[-1]}")
        prod = op.values * w
        if m == n_out:
            return prod
        out = np.zeros(prod.shape[:-1] + (n_out,))
        out[..., :m] = prod
        return out
    return np.einsum("...ij,...j->...i", op, w)


def op_transpose_apply(op, p):
    """Apply the transpose of a Diag or dense operator to ``p``."""
    p = np.asarray(p, dtype=float)
    if isinstance(op, Diag):
        m = op.values.shape[-1]
        return op.values * p[..., :m]
    return np.einsum("...ji,...j->...i", op, p)


def op_matrix(op, n_out):
    """Dense matrix (..., n_out, n_in) of a Diag or dense operator."""
    if isinstance(op, Diag):
        v = op.values
        m = v.shape[-1]
        mat = np.zeros(v.shape[:-1] + (n_out, m))
        idx = np.arange(m)
        mat[..., idx, idx] = v
        return mat
    return np.asarray(op, dtype=float)


def op_norm(op):
    """Operator norm |op|_{L(H)} (spectral norm)."""
    if isinstance(op, Diag):
        return np.max(np.abs(op.values), axis=-1)
    return np.linalg.norm(op, ord=2, axis=(-2, -1))


def lq_norm_sq(op, q):
    """|S|^2_{L_Q} = tr(S Q S*) = sum_j q_j |S e_j|^2."""
    q = np.asarray(q, dtype=float)
    if isinstance(op, Diag):
        v = op.values
        m = min(v.shape[-1], q.shape[0])
        return np.sum(q[:m] * v[..., :m] ** 2, axis=-1)
    op = np.asarray(op, dtype=float)
    m = min(op.shape[-1], q.shape[0])
    return np.sum(q[:m] * np.sum(op[..., :, :m] ** 2, axis=-2), axis=-1)


@dataclass(frozen=True)
class Constants:
    """Declared nominal values of the structural constants.

    ``rp0``/``rp1`` bound |R'(t,u)| <= rp0 |u| + rp1, ``rp_lip`` is the
    Lipschitz constant of u -> R'(t,u); ``kappa``/``holder_C`` are the time
    regularity exponent and constant of the noise.  The noise constants K0,
    K1, L1 and holder_C depend on the covariance and come from
    ``ModelSpec.noise_constants``.
    """

    a0: float = 1.0
    R0: float = CONST_FLOOR
    R1: float = CONST_FLOOR
    rp0: float = CONST_FLOOR
    rp1: float = CONST_FLOOR
    rp_lip: float = CONST_FLOOR
    kappa: float = 1.0

    def __post_init__(self):
        for name, val in vars(self).items():
            if not (np.isfinite(val) and val > 0):
                raise InvalidInput(f"constant {name} must be finite and > 0, got {val}")


def _l2(v):
    return np.sqrt(np.sum(np.asarray(v, dtype=float) ** 2, axis=-1))


class GeometricMeanNorm:
    """Default interpolation norm ||v||_H = (|v| ||v||)^(1/2); saturates a0 = 1."""

    def __init__(self, a_spectrum):
        self.a_spectrum = np.asarray(a_spectrum, dtype=float)
        # ||v||_H >= lower_constant |v|
        self.lower_constant = float(np.min(self.a_spectrum)) ** 0.25

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return np.sqrt(_l2(v) * np.sqrt(np.sum(self.a_spectrum * v**2, axis=-1)))


def _zero_bilinear(u, v):
    return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(v)))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """An abstract system du + (Au + B(u,u) + R(t,u)) dt = sigma(t,u) dW.

    ``noise_constants(q)`` returns the declared dict with keys K0, K1, L1,
    holder_C valid for covariance eigenvalues ``q``.
    """

    name: str
    dimension: int
    a_spectrum: np.ndarray
    bilinear: Callable
    reaction: Callable
    reaction_derivative: Callable
    noise_coefficient: Callable
    noise_constants: Callable
    constants: Constants
    interp_norm: Callable | None = None
    noise_dim: int | None = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.array(self.a_spectrum, dtype=float)
        if a.shape != (self.dimension,):
            raise InvalidInput(f"a_spectrum must have length {self.dimension}")
        if not np.all(a > 0):
            raise InvalidInput("A must be positive: all a_spectrum entries > 0")
        a.setflags(write=False)
        object.__setattr__(self, "a_spectrum", a)
        if self.interp_norm is None:
            object.__setattr__(self, "interp_norm", GeometricMeanNorm(a))
            self.notes.setdefault("interp_norm", "geometric mean (|v| ||v||)^(1/2)")
        if self.noise_dim is None:
            object.__setattr__(self, "noise_dim", self.dimension)

    def check_state(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[-1:] != (self.dimension,):
            raise InvalidInput(
                f"state has trailing dimension {v.shape[-1:] or ()}, model '{self.name}' needs {self.dimension}"
            )
        return v

    def B(self, u, v=None):
        return self.bilinear(u, u if v is None else v)

    def trilinear(self, u1, u2, u3):
        """(B(u1,u2), u3) along the last axis."""
        return np.sum(self.bilinear(u1, u2) * u3, axis=-1)

    def linearized_matrix(self, t, u0):
        """Dense matrix of x -> B(x,u0) + B(u0,x) + R'(t,u0) x for a single u0."""
        n = self.dimension
        eye = np.eye(n)
        u0b = np.broadcast_to(u0, (n, n))
        # row i of the batch is the image of e_i, hence the transpose
        cols = self.bilinear(eye, u0b) + self.bilinear(u0b, eye)
        mat = cols.T + op_matrix(self.reaction_derivative(t, u0), n)
        return mat


class NormTriple(NamedTuple):
    h_norm: np.ndarray
    v_norm: np.ndarray
    interp: np.ndarray


def norms(model: ModelSpec, v) -> NormTriple:
    """(|v|, ||v|| = |A^(1/2) v|, ||v||_H) along the last axis."""
    v = model.check_state(v)
    h = _l2(v)
    vn = np.sqrt(np.sum(model.a_spectrum * v**2, axis=-1))
    return NormTriple(h, vn, np.asarray(model.interp_norm(v), dtype=float))


def v_norm_sq(model: ModelSpec, v):
    return np.sum(model.a_spectrum * np.asarray(v) ** 2, axis=-1)
