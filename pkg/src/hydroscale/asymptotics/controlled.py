"""Controlled deviation processes: convergence to the skeleton, time modulus, moments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import InvalidInput, v_norm_sq
from ..integrators import ScalingSpec, solve_controlled, solve_deterministic, solve_skeleton
from ..parallel import concat, map_blocks, replica_blocks
from ..stochastics import ControlPath, clip_to_ball, sample_block
from .clt import check_eps_list
from .common import ErrorStatistic, SlopeFit, check_exclusions, fit_loglog, mean_se


def _prepare_control(phi, grid, cov, N):
    if not isinstance(phi, ControlPath):
        phi = ControlPath(grid, phi)
    phi.check_support(cov)
    if N is not None:
        phi = clip_to_ball(phi, N)
    return phi


def _controlled_block(task):
    model, cov, grid, u0, phi, scalings, seed, reps, xphi = task
    inc = sample_block(cov, grid, seed, reps)
    R = len(reps)
    out = {k: np.empty((R, len(scalings))) for k in ("sup", "en")}
    out["term"] = np.empty((R, len(scalings), model.dimension))
    out["bad"] = np.zeros((R, len(scalings)), dtype=bool)
    for i, sc in enumerate(scalings):
        x = solve_controlled(model, cov, u0, grid, sc, inc, phi, on_blowup="flag")
        d = x.states - xphi[:, None, :]
        out["sup"][:, i] = x.sup_sq(d)
        out["en"][:, i] = x.energy_integral(model, d)
        out["term"][:, i] = d[-1]
        if x.blown_up is not None:
            out["bad"][:, i] = x.blown_up
    return out


@dataclass
class ControlledResult:
    stats: list
    monotone: bool
    ratio: float
    skeleton: object

    def rows(self):
        return [s.row() for s in self.stats]


def controlled_convergence(model, cov, xi, grid, phi, eps_list, n_rep, seed, a=0.25, N=None, jobs=1):
    """Distance between the controlled deviation process and the skeleton, same control.

    Every eps uses the same increments per replica.  Rows also carry the
    largest z-score of the mean terminal gap E[X^eps(T) - X^phi(T)].
    """
    eps_list = check_eps_list(eps_list)
    if n_rep < 2:
        raise InvalidInput("n_rep must be >= 2")
    xi = model.check_state(xi)
    phi = _prepare_control(phi, grid, cov, N)
    u0 = solve_deterministic(model, xi, grid).states
    xphi = solve_skeleton(model, cov, u0, grid, phi)
    scalings = [ScalingSpec.moderate(e, a) for e in eps_list]
    for s in scalings:
        s.check_moderate()
    tasks = [(model, cov, grid, u0, phi, scalings, seed, reps, xphi.states) for reps in replica_blocks(n_rep)]
    res = map_blocks(_controlled_block, tasks, jobs)
    sup, en, term, bad = concat(res, "sup"), concat(res, "en"), concat(res, "term"), concat(res, "bad")
    stats_ = []
    for i, sc in enumerate(scalings):
        ok = ~bad[:, i]
        excluded = int(n_rep - ok.sum())
        check_exclusions(excluded, n_rep)
        gap = term[ok, i]
        gm = gap.mean(axis=0)
        gse = gap.std(axis=0, ddof=1) / np.sqrt(gap.shape[0])
        z = np.where(gse > 0, np.abs(gm) / np.where(gse > 0, gse, 1.0), np.where(gm == 0, 0.0, np.inf))
        stats_.append(
            ErrorStatistic.from_samples(
                sc.eps, sup[ok, i], en[ok, i], excluded, lam=sc.lam,
                terminal_gap=float(np.max(np.abs(gm))), terminal_gap_z=float(np.max(z)),
            )
        )
    D = np.array([s.D for s in stats_])
    return ControlledResult(stats_, bool(np.all(np.diff(D) < 0)), float(D[-1] / D[0]), xphi)


# ------------------------------------------------------------------ time modulus


def shift_steps(grid, n):
    """Grid steps covered by a shift of 2^-n; psi_n(s) = (s + 2^-n) ^ T on the grid."""
    j = int(np.floor(2.0**-n / grid.dt * (1 + 1e-12)))
    if j < 1:
        raise InvalidInput(f"shift 2^-{n} is shorter than the step {grid.dt:.3g}")
    return j


def modulus_of(states, grid, j):
    """sum_k dt |x(psi(t_k)) - x(t_k)|^2 over k < steps, per replica."""
    N = grid.steps
    idx = np.minimum(np.arange(N) + j, N)
    d = states[idx] - states[:N]
    return grid.dt * np.sum(d**2, axis=(0, -1))


def _modulus_block(task):
    model, cov, grid, u0, phi, sc, seed, reps, shifts = task
    inc = sample_block(cov, grid, seed, reps)
    x = solve_controlled(model, cov, u0, grid, sc, inc, phi, on_blowup="flag")
    size = x.sup_sq() + x.energy_integral(model)
    mods = np.stack([modulus_of(x.states, grid, j) for j in shifts], axis=1)
    bad = np.zeros(len(reps), dtype=bool) if x.blown_up is None else x.blown_up
    return {"mods": mods, "size": size, "bad": bad}


@dataclass
class ModulusResult:
    n_list: list
    M: np.ndarray
    M_se: np.ndarray
    kept: int
    excluded: int
    fit: SlopeFit

    def rows(self):
        return [
            {"n": int(n), "shift": 2.0**-n, "M_n": float(m), "M_se": float(s), "kept": self.kept}
            for n, m, s in zip(self.n_list, self.M, self.M_se)
        ]


def increment_modulus(model, cov, xi, grid, scaling, phi, n_list, n_rep, seed, clip_M=np.inf, N=None, jobs=1):
    """M_n = E[int_0^T |X(psi_n(s)) - X(s)|^2 ds] over replicas with sup|X|^2 + int ||X||^2 <= clip_M."""
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InvalidInput("n_list must be increasing")
    shifts = [shift_steps(grid, n) for n in n_list]
    if n_rep < 2:
        raise InvalidInput("n_rep must be >= 2")
    scaling.check_moderate()
    xi = model.check_state(xi)
    phi = _prepare_control(phi, grid, cov, N)
    u0 = solve_deterministic(model, xi, grid).states
    tasks = [(model, cov, grid, u0, phi, scaling, seed, reps, shifts) for reps in replica_blocks(n_rep)]
    res = map_blocks(_modulus_block, tasks, jobs)
    mods, size, bad = concat(res, "mods"), concat(res, "size"), concat(res, "bad")
    check_exclusions(int(bad.sum()), n_rep)
    keep = ~bad & (size <= clip_M)
    if keep.sum() < 2:
        raise InvalidInput("fewer than 2 replicas stay below the clip level")
    M = np.array([mean_se(mods[keep, i])[0] for i in range(len(n_list))])
    S = np.array([mean_se(mods[keep, i])[1] for i in range(len(n_list))])
    fit = fit_loglog([2.0**-n for n in n_list], M)
    return ModulusResult(n_list, M, S, int(keep.sum()), int(bad.sum()), fit)


# ------------------------------------------------------------------ moments


@dataclass
class MomentAudit:
    rows: list
    uniform: bool
    growth: dict


def path_moments(model, path, p):
    """Replica means of sup|x|^2p, int ||x||^2, int |x|^(2p-2) ||x||^2, int ||x||_H^4."""
    if p not in (1, 2):
        raise InvalidInput("p must be 1 or 2")
    x = path.states
    dt = path.grid.dt
    h2 = np.sum(x**2, axis=-1)
    v2 = v_norm_sq(model, x)
    hn = np.asarray(model.interp_norm(x), dtype=float)
    vals = {
        "sup_pow": np.max(h2**p, axis=0),
        "energy": dt * np.sum(v2[1:], axis=0),
        "weighted_energy": dt * np.sum((h2 ** (p - 1) * v2)[1:], axis=0),
        "interp_4": dt * np.sum(hn[1:] ** 4, axis=0),
    }
    return {k: float(np.mean(v)) for k, v in vals.items()}


def moment_audit(model, paths, p=2, factor=2.0) -> MomentAudit:
    """Moments per noise level; uniform when no moment exceeds ``factor`` times its first-level value.

    ``paths`` is a sequence of (eps, StatePath) ordered from the largest eps down.
    """
    rows = []
    for eps, path in paths:
        r = {"eps": float(eps)}
        r.update(path_moments(model, path, p))
        rows.append(r)
    growth = {}
    uniform = True
    for key in ("sup_pow", "energy", "weighted_energy", "interp_4"):
        vals = np.array([r[key] for r in rows])
        first = vals[0]
        top = vals.max() if vals.size else 0.0
        growth[key] = float(top / first) if first > 0 else (0.0 if top == 0 else np.inf)
        uniform &= bool(top <= factor * first) or top == 0
    return MomentAudit(rows, bool(uniform), growth)
