"""Tail probabilities of a terminal functional of the deviation process.

Plain Monte Carlo counts hits of {<e, Z(T)> >= c}.  The importance-sampled
estimator shifts the standardized increments by lam c_kj sqrt(dt), where c is
a skeleton control reaching the threshold; under the shift the recursion is
the controlled deviation equation and the likelihood ratio

    log w = sum_kj ( -mu_kj xi'_kj + mu_kj^2 / 2 ),   mu = lam c sqrt(dt)

is exact for the discrete scheme.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..core import InvalidInput
from ..integrators import ScalingSpec, solve_deterministic, solve_moderate
from ..parallel import concat, map_blocks, replica_blocks
from ..stochastics import ControlPath, standard_block
from .clt import check_eps_list
from .rate import SkeletonControlProblem, rate_function

MIN_ESS = 100.0
TAIL_BLOCK = 4096


@dataclass
class TailEstimate:
    eps: float
    lam: float
    replicas: int
    threshold: float
    p_hat: float
    se: float
    decay: float | None
    censored: bool
    importance: bool
    hits: int
    ess: float = 0.0
    tilt_action: float | None = None
    censored_bound: float | None = None

    def row(self):
        d = asdict(self)
        d["lam_sq"] = self.lam**2
        return d


def _tail_block(task):
    model, cov, grid, u0, probe, scalings, seed, reps, tilt = task
    xi = standard_block(grid, cov.m, seed, reps)
    scale = np.sqrt(cov.q * grid.dt)
    R = len(reps)
    phi = np.empty((R, len(scalings)))
    logw = np.zeros((R, len(scalings)))
    bad = np.zeros((R, len(scalings)), dtype=bool)
    for i, sc in enumerate(scalings):
        if tilt is None:
            shifted = xi
        else:
            mu = sc.lam * tilt * np.sqrt(grid.dt)
            shifted = xi + mu[:, None, :]
            logw[:, i] = -np.einsum("krm,km->r", shifted, mu) + 0.5 * np.sum(mu**2)
        z = solve_moderate(model, cov, u0, grid, sc, shifted * scale, on_blowup="flag")
        phi[:, i] = z.terminal @ probe
        if z.blown_up is not None:
            bad[:, i] = z.blown_up
    return {"phi": phi, "logw": logw, "bad": bad}


def skeleton_tilt(model, cov, u0_path, grid, probe, threshold, beta=1e4):
    """Skeleton control rescaled so its terminal functional equals the threshold."""
    prob = SkeletonControlProblem(model, cov, u0_path, grid, probe, threshold, beta)
    sol = rate_function(model, cov, u0_path, grid, probe, threshold, beta, problem=prob)
    reached = prob.terminal_functional(sol.control.coeffs)
    if reached == 0:
        raise InvalidInput("the skeleton cannot reach the threshold along this probe")
    return sol.control.scaled(threshold / reached)


def mdp_tail_experiment(
    model, cov, xi, grid, probe, threshold, a, eps_list, n_rep, seed, importance=False, tilt=None, jobs=1
) -> list:
    """P(<e, Z^eps(T)> >= c) with lam = eps^{-a}, one estimate per eps."""
    eps_list = check_eps_list(eps_list)
    probe = np.asarray(probe, dtype=float)
    if probe.shape != (model.dimension,) or not np.linalg.norm(probe) > 0:
        raise InvalidInput("probe must be a nonzero state vector")
    probe = probe / np.linalg.norm(probe)
    scalings = [ScalingSpec.moderate(e, a) for e in eps_list]
    for s in scalings:
        s.check_moderate()
    xi = model.check_state(xi)
    u0 = solve_deterministic(model, xi, grid)
    tilt_path = None
    if importance:
        if tilt is None:
            tilt_path = skeleton_tilt(model, cov, u0, grid, probe, threshold)
        else:
            tilt_path = tilt if isinstance(tilt, ControlPath) else ControlPath(grid, tilt)
        tilt_path.check_support(cov)
        tilt_arr = np.zeros((grid.steps, cov.m))
        tilt_arr[:, : tilt_path.m] = tilt_path.coeffs
    else:
        tilt_arr = None
    tasks = [
        (model, cov, grid, u0.states, probe, scalings, seed, reps, tilt_arr)
        for reps in replica_blocks(n_rep, TAIL_BLOCK)
    ]
    res = map_blocks(_tail_block, tasks, jobs)
    phi, logw, bad = concat(res, "phi"), concat(res, "logw"), concat(res, "bad")
    out = []
    for i, sc in enumerate(scalings):
        ok = ~bad[:, i]
        hit = (phi[:, i] >= threshold) & ok
        nrep = int(ok.sum())
        if tilt_arr is None:
            p = hit.sum() / nrep
            se = np.sqrt(p * (1 - p) / nrep)
            # unit weights on the hits: (sum w)^2 / sum w^2 = hit count
            ess = float(hit.sum())
        else:
            w = np.where(hit, np.exp(logw[:, i]), 0.0)
            p = float(np.mean(np.where(ok, w, 0.0)) * n_rep / nrep)
            se = float(np.std(w[ok], ddof=1) / np.sqrt(nrep))
            ess = float(np.sum(w) ** 2 / np.sum(w**2)) if np.any(w > 0) else 0.0
        censored = p == 0
        decay = None if censored else float(-np.log(p) / sc.lam**2)
        bound = float(-np.log(3.0 / nrep) / sc.lam**2) if censored else None
        out.append(
            TailEstimate(
                sc.eps, sc.lam, nrep, float(threshold), float(p), float(se), decay, bool(censored),
                tilt_arr is not None, int(hit.sum()), ess,
                None if tilt_path is None else tilt_path.action(), bound,
            )
        )
    return out


def secant_decay(estimates):
    """Rate estimate from the last two levels: -(log p2 - log p1) / (lam2^2 - lam1^2).

    Cancels the polynomial prefactor of the tail that biases -log p / lam^2.
    """
    usable = [e for e in estimates if not e.censored and e.p_hat > 0]
    if len(usable) < 2:
        return None
    e1, e2 = usable[-2], usable[-1]
    return float(-(np.log(e2.p_hat) - np.log(e1.p_hat)) / (e2.lam**2 - e1.lam**2))
