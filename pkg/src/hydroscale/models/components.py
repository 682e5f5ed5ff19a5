"""Noise coefficients and reaction terms shared by the shipped models.

All components are small module-level classes so that a ModelSpec can be
pickled and shipped to worker processes.
"""

import numpy as np

from ..core import CONST_FLOOR, Diag, InvalidInput


def _floor(x):
    return max(float(x), CONST_FLOOR)


class DiagonalNoise:
    """sigma(t,u) e_j = g_j * m(t) * (1 + gamma * tanh(u_j)) e_j, j < len(gains).

    ``m(t) = (1 + sin t)/2`` when ``modulated`` else 1.  The entries are
    bounded by g_j (1 + gamma) and Lipschitz in u_j with constant g_j gamma,
    which gives explicit growth and Lipschitz constants for any covariance.
    """

    def __init__(self, gains, gamma=0.5, modulated=False):
        self.gains = np.asarray(gains, dtype=float)
        if np.any(self.gains < 0):
            raise InvalidInput("noise gains must be >= 0")
        if not 0 <= gamma < 1:
            raise InvalidInput("gamma must lie in [0, 1)")
        self.gamma = float(gamma)
        self.modulated = bool(modulated)

    def modulation(self, t):
        return 0.5 * (1.0 + np.sin(t)) if self.modulated else 1.0

    def __call__(self, t, u):
        m = self.gains.shape[0]
        u = np.asarray(u, dtype=float)
        vals = self.gains * self.modulation(t)
        if self.gamma:
            vals = vals * (1.0 + self.gamma * np.tanh(u[..., :m]))
        else:
            vals = np.broadcast_to(vals, u.shape[:-1] + (m,))
        return Diag(vals)

    def constants(self, q):
        q = np.asarray(q, dtype=float)
        m = min(q.shape[0], self.gains.shape[0])
        g2 = q[:m] * self.gains[:m] ** 2
        k0 = (1.0 + self.gamma) ** 2 * g2.sum()
        l1 = self.gamma**2 * (g2.max() if m else 0.0)
        # |m(t1) - m(t2)| <= |t1 - t2| / 2
        holder = 0.5 * np.sqrt(k0) if self.modulated else 0.0
        return {"K0": _floor(k0), "K1": _floor(l1), "L1": _floor(l1), "holder_C": _floor(holder)}


class ConstantNoise(DiagonalNoise):
    """Additive noise sigma(t,u) = diag(s)."""

    def __init__(self, amplitudes):
        super().__init__(amplitudes, gamma=0.0, modulated=False)


class NoReaction:
    def __call__(self, t, u):
        return np.zeros(np.shape(u))

    def derivative(self, t, u):
        return Diag(np.zeros(np.shape(u)))

    def constants(self):
        return {}


class LinearReaction:
    """R(t,u) = rho * u (rho >= 0 is damping)."""

    def __init__(self, rho):
        self.rho = float(rho)

    def __call__(self, t, u):
        return self.rho * np.asarray(u, dtype=float)

    def derivative(self, t, u):
        return Diag(np.full(np.shape(u), self.rho))

    def constants(self):
        r = abs(self.rho)
        return {"R1": _floor(r), "rp1": _floor(r)}


# max |f'| and max |f''| of f(x) = x^3 / (1 + x^2); f' peaks at x^2 = 3 with 9/8
_CUBIC_D1 = 9.0 / 8.0


def _cubic_d2_max():
    x = np.linspace(0.0, 20.0, 200001)
    d2 = 2 * x * (3 - x**2) / (1 + x**2) ** 3
    return float(np.max(np.abs(d2))) * (1 + 1e-6)


_CUBIC_D2 = _cubic_d2_max()


class CubicSaturatingReaction:
    """Entrywise R(t,u)_i = rho u_i + gamma u_i^3 / (1 + u_i^2).

    Globally Lipschitz with a Lipschitz derivative, so the reaction bounds hold while
    R stays genuinely nonlinear.
    """

    def __init__(self, rho, gamma):
        self.rho = float(rho)
        self.gamma = float(gamma)

    def __call__(self, t, u):
        u = np.asarray(u, dtype=float)
        return self.rho * u + self.gamma * u**3 / (1.0 + u**2)

    def derivative(self, t, u):
        u = np.asarray(u, dtype=float)
        x2 = u**2
        return Diag(self.rho + self.gamma * (3 * x2 + x2**2) / (1 + x2) ** 2)

    def constants(self):
        lip = abs(self.rho) + abs(self.gamma) * _CUBIC_D1
        return {"R1": _floor(lip), "rp1": _floor(lip), "rp_lip": _floor(abs(self.gamma) * _CUBIC_D2)}


class MatrixReaction:
    """R(t,u) = M u for a dense matrix M."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)

    def __call__(self, t, u):
        return np.asarray(u, dtype=float) @ self.matrix.T

    def derivative(self, t, u):
        return np.broadcast_to(self.matrix, np.shape(u)[:-1] + self.matrix.shape)

    def constants(self):
        r = np.linalg.norm(self.matrix, 2) if self.matrix.size else 0.0
        return {"R1": _floor(r), "rp1": _floor(r)}


def make_reaction(kind, n, rho=0.05, gamma=0.5, matrix=None):
    if kind == "none":
        return NoReaction()
    if kind == "linear":
        return LinearReaction(rho)
    if kind == "cubic":
        return CubicSaturatingReaction(rho, gamma)
    if kind == "matrix":
        mat = np.zeros((n, n)) if matrix is None else np.asarray(matrix, dtype=float)
        if mat.shape != (n, n):
            raise InvalidInput(f"reaction matrix must be {n}x{n}")
        return MatrixReaction(mat)
    raise InvalidInput(f"unknown reaction kind {kind!r}")


def gains_vector(gains, n):
    g = np.broadcast_to(np.asarray(gains, dtype=float), (n,)) if np.ndim(gains) == 0 else np.asarray(gains, dtype=float)
    if g.shape[0] > n:
        raise InvalidInput(f"at most {n} noise gains allowed")
    return np.array(g, dtype=float)
