"""Minimal control energy to reach a terminal half-space through the skeleton.

The skeleton recursion is affine-linear in the control:

    X_{k+1} = M_k X_k + N_k c_k,   M_k = D (I - dt L_k),   N_k = dt D sigma(t_k, u0_k) Q^{1/2}

with D = (I + dt A)^{-1} and L_k the linearization about u0 at t_k.  The
penalized objective

    J(c) = 1/2 dt |c|^2 + beta/2 (<e, X_N(c)> - target)^2

is a strictly convex quadratic; its gradient uses the exact transpose of the
recursion, so the discrete problem is solved, not a discretized continuum one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import InvalidInput, op_matrix
from ..integrators import _base_path, _check_cov, solve_skeleton
from ..stochastics import ControlPath

# keep per-step matrices in memory below this many floats
_CACHE_LIMIT = 20_000_000


class SkeletonControlProblem:
    def __init__(self, model, cov, u0_path, grid, probe, target, beta):
        _check_cov(model, cov)
        if not beta > 0:
            raise InvalidInput("beta must be > 0")
        probe = np.asarray(probe, dtype=float)
        if probe.shape != (model.dimension,):
            raise InvalidInput("probe must be a state vector")
        nrm = np.linalg.norm(probe)
        if not nrm > 0:
            raise InvalidInput("probe must be nonzero")
        self.model, self.cov, self.grid = model, cov, grid
        self.u0 = _base_path(u0_path, grid, model.dimension)
        self.probe = probe / nrm
        self.target = float(target)
        self.beta = float(beta)
        self.n, self.m = model.dimension, cov.m
        self.resolvent = 1.0 / (1.0 + grid.dt * model.a_spectrum)
        self._mats = None
        if grid.steps * (self.n * self.n + self.n * self.m) <= _CACHE_LIMIT:
            self._mats = [self._step_matrices(k) for k in range(grid.steps)]
        self._g = None

    def _step_matrices(self, k):
        dt = self.grid.dt
        t = k * dt
        base = self.u0[k]
        lin = self.model.linearized_matrix(t, base)
        M = self.resolvent[:, None] * (np.eye(self.n) - dt * lin)
        sig = op_matrix(self.model.noise_coefficient(t, base), self.n)
        # pad or cut sigma to the covariance modes
        cols = np.zeros((self.n, self.m))
        w = min(sig.shape[-1], self.m)
        cols[:, :w] = sig[:, :w]
        N = dt * self.resolvent[:, None] * cols * self.cov.sqrt_q[None, :]
        return M, N

    def matrices(self, k):
        return self._mats[k] if self._mats is not None else self._step_matrices(k)

    def forward(self, c):
        """Skeleton states (steps + 1, n) for coefficients c of shape (steps, m)."""
        c = np.asarray(c, dtype=float).reshape(self.grid.steps, self.m)
        x = np.zeros((self.grid.steps + 1, self.n))
        for k in range(self.grid.steps):
            M, N = self.matrices(k)
            x[k + 1] = M @ x[k] + N @ c[k]
        return x

    def terminal_functional(self, c):
        return float(self.probe @ self.forward(c)[-1])

    def adjoint(self, p_terminal):
        """Gradient of <p_terminal, X_N(c)> with respect to c, shape (steps, m)."""
        p = np.asarray(p_terminal, dtype=float)
        g = np.empty((self.grid.steps, self.m))
        for k in range(self.grid.steps - 1, -1, -1):
            M, N = self.matrices(k)
            g[k] = N.T @ p
            p = M.T @ p
        return g

    @property
    def sensitivity(self):
        """d<e, X_N>/dc, computed once."""
        if self._g is None:
            self._g = self.adjoint(self.probe)
        return self._g

    def objective(self, c):
        c = np.asarray(c, dtype=float).reshape(self.grid.steps, self.m)
        r = self.terminal_functional(c) - self.target
        return 0.5 * self.grid.dt * float(np.sum(c**2)) + 0.5 * self.beta * r * r

    def gradient(self, c):
        c = np.asarray(c, dtype=float).reshape(self.grid.steps, self.m)
        r = self.terminal_functional(c) - self.target
        return self.grid.dt * c + self.beta * r * self.sensitivity

    def hessian_apply(self, v):
        v = np.asarray(v, dtype=float).reshape(self.grid.steps, self.m)
        return self.grid.dt * v + self.beta * float(np.sum(self.sensitivity * v)) * self.sensitivity


def conjugate_gradient(apply_h, b, x0, tol, max_iter):
    """Linear CG for H x = b with H symmetric positive definite."""
    x = x0.copy()
    r = b - apply_h(x)
    p = r.copy()
    rr = float(np.sum(r * r))
    stop = tol * max(np.sqrt(float(np.sum(b * b))), 1e-300)
    it = 0
    while np.sqrt(rr) > stop and it < max_iter:
        hp = apply_h(p)
        alpha = rr / float(np.sum(p * hp))
        x += alpha * p
        r -= alpha * hp
        rr_new = float(np.sum(r * r))
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    return x, it, np.sqrt(rr)


@dataclass
class RateSolution:
    control: ControlPath
    path: object
    I_hat: float
    terminal_residual: float
    iterations: int
    gradient_norm: float
    converged: bool
    beta: float
    extra: dict = field(default_factory=dict)


def rate_function(model, cov, u0_path, grid, probe, target, beta, tol=1e-10, max_iter=200, problem=None) -> RateSolution:
    """Minimize the penalized skeleton objective by conjugate gradients."""
    prob = problem or SkeletonControlProblem(model, cov, u0_path, grid, probe, target, beta)
    b = prob.beta * prob.target * prob.sensitivity
    x0 = np.zeros((grid.steps, cov.m))
    c, it, res = conjugate_gradient(prob.hessian_apply, b, x0, tol, max_iter)
    gnorm = float(np.linalg.norm(prob.gradient(c)))
    h = ControlPath(grid, c)
    path = solve_skeleton(model, cov, u0_path, grid, h)
    resid = abs(float(prob.probe @ path.terminal) - prob.target)
    conv = res <= tol * max(float(np.linalg.norm(b)), 1e-300) or prob.target == 0
    return RateSolution(h, path, h.action(), resid, it, gnorm, bool(conv), prob.beta)


def richardson_zero(betas, values):
    """Evaluate at 1/beta = 0 the polynomial through (1/beta_i, value_i)."""
    x = 1.0 / np.asarray(betas, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.shape[0] < 2:
        return float(y[-1])
    coeffs = np.polyfit(x, y, x.shape[0] - 1)
    return float(np.polyval(coeffs, 0.0))


@dataclass
class RateSweep:
    betas: list
    solutions: list
    I_values: list
    I_extrapolated: float

    def rows(self):
        return [
            {"beta": b, "I_hat": s.I_hat, "terminal_residual": s.terminal_residual, "iterations": s.iterations,
             "gradient_norm": s.gradient_norm, "converged": s.converged}
            for b, s in zip(self.betas, self.solutions)
        ]


def rate_sweep(model, cov, u0_path, grid, probe, target, betas=(1e2, 1e3, 1e4), tol=1e-10, max_iter=200) -> RateSweep:
    """rate_function over increasing penalties plus extrapolation to the hard constraint."""
    betas = sorted(float(b) for b in betas)
    base = SkeletonControlProblem(model, cov, u0_path, grid, probe, target, betas[0])
    sols = []
    for b in betas:
        base.beta = b
        sols.append(rate_function(model, cov, u0_path, grid, probe, target, b, tol, max_iter, problem=base))
    vals = [s.I_hat for s in sols]
    return RateSweep(betas, sols, vals, richardson_zero(betas, vals))
