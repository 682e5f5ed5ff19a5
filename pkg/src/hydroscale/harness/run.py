"""Dispatch of configured experiments, verdicts and report files."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import os
import re
import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from .. import __version__
from ..asymptotics import (
    clt_experiment,
    controlled_convergence,
    increment_modulus,
    mdp_tail_experiment,
    rate_sweep,
    secant_decay,
)
from ..core import InvalidInput
from ..integrators import ScalingSpec, self_convergence, solve_controlled, solve_deterministic, solve_sde
from ..models import build_model
from ..models.ou import LinearOUParams, ou_terminal_oracle
from ..stochastics import ControlPath, CovarianceSpec, TimeGrid, clip_to_ball, replica_key, sample_increments
from ..verifier import verify_all
from .config import ExperimentConfig

DUMP_REPLICAS = 4


def replica_seed(base: int, replica: int):
    """Generator key of one replica; see stochastics.replica_key."""
    return replica_key(base, replica)


@dataclass
class ExperimentReport:
    config: dict
    tables: dict
    summary: dict
    verdicts: dict
    wall_clock: float = 0.0
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.verdicts.values())

    def summary_document(self):
        return {
            "config": self.config,
            "summary": self.summary,
            "verdicts": self.verdicts,
            "passed": self.passed,
            "provenance": self.provenance,
            "wall_clock_seconds": self.wall_clock,
        }


# ------------------------------------------------------------------ builders


def make_model(cfg: ExperimentConfig):
    return build_model(cfg.model.name, **cfg.model.params)


def make_covariance(cfg: ExperimentConfig, model):
    c = cfg.covariance
    m = c.m if c.m is not None else model.noise_dim
    if c.kind == "explicit":
        cov = CovarianceSpec(c.values)
    elif c.kind == "uniform":
        cov = CovarianceSpec.uniform(m, c.scale)
    else:
        cov = CovarianceSpec.power_law(m, c.exponent, c.scale)
    if cov.m > model.noise_dim:
        raise InvalidInput(f"covariance has {cov.m} modes, model noise has {model.noise_dim}")
    return cov


def make_initial(cfg: ExperimentConfig, n):
    x = cfg.xi
    if x.preset == "zero":
        return np.zeros(n)
    if x.preset == "single-mode":
        if x.mode >= n:
            raise InvalidInput(f"xi.mode must be < {n}")
        v = np.zeros(n)
        v[x.mode] = x.amplitude
        return v
    if x.preset == "explicit":
        if x.values is None or len(x.values) != n:
            raise InvalidInput(f"xi.values must list {n} numbers")
        return np.asarray(x.values, dtype=float)
    m = re.fullmatch(r"random\((\d+)\)", x.preset)
    seed = int(m.group(1)) if m else x.seed
    v = np.random.default_rng(seed).standard_normal(n)
    return x.amplitude * v / np.linalg.norm(v)


def make_control(cfg: ExperimentConfig, grid, cov):
    c = cfg.control
    if c.kind == "zero":
        phi = ControlPath.zero(grid, cov.m)
    elif c.kind == "explicit":
        phi = ControlPath(grid, np.asarray(c.coeffs, dtype=float))
    else:
        vals = np.zeros(cov.m)
        k = min(len(c.values), cov.m)
        vals[:k] = c.values[:k]
        vals[cov.q == 0] = 0.0
        phi = ControlPath.constant(grid, vals)
    phi.check_support(cov)
    return clip_to_ball(phi, c.N)


def unit_probe(n, mode):
    if mode >= n:
        raise InvalidInput(f"probe_mode must be < {n}")
    e = np.zeros(n)
    e[mode] = 1.0
    return e


# ------------------------------------------------------------------ experiments


def _exp_verify(cfg, model, cov, xi, grid, jobs):
    v = cfg.verify
    rep = verify_all(model, cov, v.samples, cfg.seed, v.slack, v.etas, v.tol)
    rows = [dict(condition=k, **{kk: vv for kk, vv in d.items() if kk != "detail"}) for k, d in rep.to_dict().items()]
    verdicts = {f"verify.{k}": c.passed for k, c in rep.conditions.items()}
    return {"verify": rows}, {"verifier": rep.to_dict(), "interp_norm": model.notes.get("interp_norm")}, verdicts


def _exp_clt(cfg, model, cov, xi, grid, jobs):
    r = clt_experiment(model, cov, xi, grid, cfg.scaling.eps_list, cfg.replicas, cfg.seed, jobs)
    c = cfg.clt
    verdicts = {}
    if c.max_D is not None:
        verdicts["clt.max_D"] = bool(max(s.D for s in r.stats) <= c.max_D)
    else:
        verdicts["clt.strictly_decreasing"] = r.strictly_decreasing
        verdicts["clt.slope_D"] = bool(r.slope_D.slope >= c.min_slope)
        lo, hi = c.first_order_slope
        verdicts["clt.first_order_slope"] = bool(lo <= r.slope_first_order.slope <= hi)
    summary = {
        "slope_D": r.slope_D.to_dict(),
        "slope_first_order": r.slope_first_order.to_dict(),
        "strictly_decreasing": r.strictly_decreasing,
        "coupling": "u^eps and the Gaussian limit share each replica's increments",
    }
    return {"clt": r.rows()}, summary, verdicts


def _exp_mdp(cfg, model, cov, xi, grid, jobs):
    m = cfg.mdp
    probe = unit_probe(model.dimension, m.probe_mode)
    eps = cfg.scaling.eps_list
    tables, verdicts = {}, {}
    est_is = est_mc = None
    if m.importance:
        est_is = mdp_tail_experiment(model, cov, xi, grid, probe, m.threshold, cfg.scaling.a, eps, cfg.replicas,
                                     cfg.seed, importance=True, jobs=jobs)
        tables["tail_importance"] = [e.row() for e in est_is]
        for e in est_is:
            verdicts[f"mdp.ess[lam2={e.lam**2:.6g}]"] = bool(e.ess >= m.min_ess)
    if m.plain_replicas or not m.importance:
        n = m.plain_replicas or cfg.replicas
        est_mc = mdp_tail_experiment(model, cov, xi, grid, probe, m.threshold, cfg.scaling.a, eps, n,
                                     cfg.seed + 1, importance=False, jobs=jobs)
        tables["tail_plain"] = [e.row() for e in est_mc]
    primary = est_is if est_is is not None else est_mc
    summary = {"secant_decay": secant_decay(primary)}
    if m.reference is not None:
        for e in primary:
            ok = e.decay is not None and abs(e.decay - m.reference) <= m.tolerance * m.reference
            verdicts[f"mdp.decay[lam2={e.lam**2:.6g}]"] = bool(ok)
        summary["reference"] = m.reference
        sec = summary["secant_decay"]
        summary["secant_within_tolerance"] = sec is not None and abs(sec - m.reference) <= m.tolerance * m.reference
    if est_is is not None and est_mc is not None:
        for a, b in zip(est_is, est_mc):
            if a.ess >= m.min_ess and b.ess >= m.min_ess:
                comb = np.hypot(a.se, b.se)
                verdicts[f"mdp.consistency[lam2={a.lam**2:.6g}]"] = bool(abs(a.p_hat - b.p_hat) <= 3 * comb)
    return tables, summary, verdicts


def _exp_rate(cfg, model, cov, xi, grid, jobs):
    r = cfg.rate
    u0 = solve_deterministic(model, xi, grid)
    sw = rate_sweep(model, cov, u0, grid, unit_probe(model.dimension, r.probe_mode), r.target, r.betas, r.tol, r.max_iter)
    verdicts = {f"rate.converged[beta={b:g}]": s.converged for b, s in zip(sw.betas, sw.solutions)}
    summary = {"I_extrapolated": sw.I_extrapolated, "I_values": sw.I_values}
    if r.reference is not None:
        verdicts["rate.extrapolated"] = bool(abs(sw.I_extrapolated - r.reference) <= r.tolerance * r.reference)
        summary["reference"] = r.reference
    return {"rate": sw.rows()}, summary, verdicts


def _exp_controlled(cfg, model, cov, xi, grid, jobs):
    phi = make_control(cfg, grid, cov)
    r = controlled_convergence(model, cov, xi, grid, phi, cfg.scaling.eps_list, cfg.replicas, cfg.seed,
                               cfg.scaling.a, cfg.control.N, jobs)
    verdicts = {"controlled.monotone": r.monotone, "controlled.ratio": bool(r.ratio <= cfg.controlled.max_ratio)}
    summary = {"ratio_final_initial": r.ratio, "control_energy": phi.energy(),
               "coupling": "controlled process and skeleton share the control; eps levels share increments"}
    return {"controlled": r.rows()}, summary, verdicts


def _exp_modulus(cfg, model, cov, xi, grid, jobs):
    md = cfg.modulus
    phi = make_control(cfg, grid, cov)
    sc = ScalingSpec.moderate(md.eps, cfg.scaling.a)
    clip = np.inf if md.clip_M is None else md.clip_M
    r = increment_modulus(model, cov, xi, grid, sc, phi, md.n_list, cfg.replicas, cfg.seed, clip, cfg.control.N, jobs)
    verdicts = {"modulus.exponent": bool(r.fit.slope >= md.min_exponent)}
    summary = {"fit": r.fit.to_dict(), "kept": r.kept, "excluded": r.excluded, "eps": md.eps, "lam": sc.lam}
    return {"modulus": r.rows()}, summary, verdicts


def _exp_convergence(cfg, model, cov, xi, grid, jobs):
    c = cfg.convergence
    ref = None
    if c.oracle == "ou-exact":
        if cfg.model.name != "ou":
            raise InvalidInput("the exact oracle exists only for the ou model")
        p = LinearOUParams(**cfg.model.params)
        ref = lambda inc: ou_terminal_oracle(p, xi, grid, inc)  # noqa: E731
    r = self_convergence(model, cov, xi, grid, c.levels, cfg.replicas, cfg.seed, ScalingSpec(c.eps), c.solver, ref)
    rows = [{"dt": d, "error": e} for d, e in zip(r.dts, r.errors)]
    verdicts = {"convergence.order": bool(r.order >= c.min_order)}
    return {"convergence": rows}, {"order": r.order, "monotone": r.monotone}, verdicts


EXPERIMENTS = {
    "verify": _exp_verify,
    "clt": _exp_clt,
    "mdp": _exp_mdp,
    "rate": _exp_rate,
    "controlled": _exp_controlled,
    "modulus": _exp_modulus,
    "convergence": _exp_convergence,
}


def run(cfg: ExperimentConfig, jobs=1, out_root=None, dump_paths=False) -> ExperimentReport:
    """Run one configured experiment; writes files when ``out_root`` is given."""
    t0 = time.perf_counter()
    model = make_model(cfg)
    cov = make_covariance(cfg, model)
    xi = make_initial(cfg, model.dimension)
    grid = TimeGrid(cfg.grid.T, cfg.grid.steps)
    tables, summary, verdicts = EXPERIMENTS[cfg.kind](cfg, model, cov, xi, grid, jobs)
    summary["covariance"] = {"kind": cfg.covariance.kind, "m": cov.m, "trace": cov.trace}
    report = ExperimentReport(
        cfg.echo(), tables, _plain(summary), {k: bool(v) for k, v in verdicts.items()},
        time.perf_counter() - t0, {"version": __version__, "seed": cfg.seed, "model": model.name},
    )
    if out_root is not None:
        out = write_report(report, out_root, cfg.kind)
        if dump_paths:
            dump_replica_paths(cfg, model, cov, xi, grid, os.path.join(out, "paths"))
        report.provenance["output_dir"] = out
    return report


# ------------------------------------------------------------------ persistence


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    return x


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_table(path, rows):
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(keys)
        for r in rows:
            wr.writerow([_cell(r.get(k)) for k in keys])


def write_report(report: ExperimentReport, out_root, kind):
    stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S_%f")
    base = os.path.join(out_root, kind)
    out = os.path.join(base, stamp)
    os.makedirs(out, exist_ok=False)
    with open(os.path.join(out, "config.yaml"), "w") as f:
        yaml.safe_dump(report.config, f, sort_keys=True)
    for name, rows in report.tables.items():
        write_table(os.path.join(out, f"{name}.csv"), rows)
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(report.summary_document(), f, indent=2, sort_keys=True)
    link = os.path.join(base, "latest")
    tmp = link + ".tmp"
    if os.path.lexists(tmp):
        os.remove(tmp)
    os.symlink(stamp, tmp)
    os.replace(tmp, link)
    return out


def dump_replica_paths(cfg, model, cov, xi, grid, directory):
    """Binary dumps of the first replicas' simulated paths, one file pair per (eps, replica)."""
    os.makedirs(directory, exist_ok=True)
    n = min(DUMP_REPLICAS, cfg.replicas)
    u0 = solve_deterministic(model, xi, grid)
    u0.provenance.update(seed=cfg.seed)
    u0.write(os.path.join(directory, "deterministic"))
    if cfg.kind in ("verify", "rate"):
        return
    phi = make_control(cfg, grid, cov) if cfg.kind in ("controlled", "modulus") else None
    eps_list = [cfg.modulus.eps] if cfg.kind == "modulus" else cfg.scaling.eps_list
    for r in range(n):
        inc = sample_increments(cov, grid, cfg.seed, r)
        for eps in eps_list:
            if phi is not None:
                path = solve_controlled(model, cov, u0, grid, ScalingSpec.moderate(eps, cfg.scaling.a), inc, phi)
            else:
                path = solve_sde(model, cov, xi, grid, ScalingSpec(eps), inc)
            path.provenance.update(seed=cfg.seed, replica=r)
            path.write(os.path.join(directory, f"{path.provenance['equation']}_eps{eps:g}_rep{r}"))
