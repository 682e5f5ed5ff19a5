"""Same-noise coupling of the fluctuation field with its Gaussian limit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import InvalidInput
from ..integrators import ScalingSpec, solve_deterministic, solve_linearized, solve_sde
from ..parallel import concat, map_blocks, replica_blocks
from ..stochastics import sample_block
from .common import ErrorStatistic, SlopeFit, check_exclusions, fit_loglog


def check_eps_list(eps_list, upper=1.0):
    eps = [float(e) for e in eps_list]
    if not eps:
        raise InvalidInput("eps_list must not be empty")
    if any(not (0 < e <= upper) for e in eps):
        raise InvalidInput(f"every eps must lie in (0, {upper}]")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise InvalidInput("eps_list must be strictly decreasing")
    return eps


def _bad(path, shape):
    return np.zeros(shape, dtype=bool) if path.blown_up is None else path.blown_up


def _clt_block(task):
    model, cov, xi, grid, eps_list, seed, reps, u0 = task
    inc = sample_block(cov, grid, seed, reps)
    R = len(reps)
    v0 = solve_linearized(model, cov, u0, grid, inc, on_blowup="flag")
    bad0 = _bad(v0, (R,))
    out = {k: np.empty((R, len(eps_list))) for k in ("d_sup", "d_en", "f_sup", "f_en")}
    out["bad"] = np.zeros((R, len(eps_list)), dtype=bool)
    for i, eps in enumerate(eps_list):
        ue = solve_sde(model, cov, xi, grid, ScalingSpec(eps), inc, on_blowup="flag")
        diff = ue.states - u0[:, None, :]
        dev = diff / np.sqrt(eps) - v0.states
        out["d_sup"][:, i] = ue.sup_sq(dev)
        out["d_en"][:, i] = ue.energy_integral(model, dev)
        out["f_sup"][:, i] = ue.sup_sq(diff)
        out["f_en"][:, i] = ue.energy_integral(model, diff)
        out["bad"][:, i] = bad0 | _bad(ue, (R,))
    return out


@dataclass
class CLTResult:
    stats: list
    first_order: list
    slope_D: SlopeFit
    slope_first_order: SlopeFit
    strictly_decreasing: bool

    def rows(self):
        rows = []
        for s, f in zip(self.stats, self.first_order):
            r = s.row()
            r.update({"first_order": f.D, "first_order_se": f.D_se})
            rows.append(r)
        return rows


def clt_experiment(model, cov, xi, grid, eps_list, n_rep, seed, jobs=1) -> CLTResult:
    """D(eps) = E[sup|V^eps - V0|^2 + int ||V^eps - V0||^2] with V^eps = (u^eps - u0)/sqrt(eps).

    u^eps and V0 share the increments of each replica.  The first-order
    distance E[sup|u^eps - u0|^2 + int ||u^eps - u0||^2] is recorded alongside.
    """
    eps_list = check_eps_list(eps_list)
    if n_rep < 2:
        raise InvalidInput("n_rep must be >= 2")
    xi = model.check_state(xi)
    u0 = solve_deterministic(model, xi, grid).states
    tasks = [(model, cov, xi, grid, eps_list, seed, reps, u0) for reps in replica_blocks(n_rep)]
    res = map_blocks(_clt_block, tasks, jobs)
    d_sup, d_en = concat(res, "d_sup"), concat(res, "d_en")
    f_sup, f_en = concat(res, "f_sup"), concat(res, "f_en")
    bad = concat(res, "bad")
    stats_, first = [], []
    for i, eps in enumerate(eps_list):
        ok = ~bad[:, i]
        excluded = int(n_rep - ok.sum())
        check_exclusions(excluded, n_rep)
        stats_.append(ErrorStatistic.from_samples(eps, d_sup[ok, i], d_en[ok, i], excluded))
        first.append(ErrorStatistic.from_samples(eps, f_sup[ok, i], f_en[ok, i], excluded))
    D = np.array([s.D for s in stats_])
    F = np.array([s.D for s in first])
    decreasing = bool(np.all(np.diff(D) < 0))
    return CLTResult(stats_, first, fit_loglog(eps_list, D), fit_loglog(eps_list, F), decreasing)
