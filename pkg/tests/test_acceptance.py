"""Acceptance suite: one verdict line per criterion at its stated tolerance."""

import json
import os
import time

import numpy as np
import pytest

from hydroscale.asymptotics import (
    SkeletonControlProblem,
    clt_experiment,
    controlled_convergence,
    increment_modulus,
    mdp_tail_experiment,
    rate_sweep,
    secant_decay,
)
from hydroscale.harness import load_config, parse_config, run
from hydroscale.integrators import ScalingSpec, self_convergence, solve_deterministic
from hydroscale.models import build_model
from hydroscale.models.ou import LinearOUParams, ou_terminal_oracle
from hydroscale.stochastics import ControlPath, CovarianceSpec, TimeGrid
from hydroscale.verifier import verify_all

OU_RATE = 1.0 / (1.0 - np.exp(-2.0))
SHELL_EPS = [1e-2, 1e-3, 1e-4, 1e-5]


def _shell_start(model):
    xi = np.zeros(model.dimension)
    xi[:2] = [1.0, 0.5]
    return xi


@pytest.fixture(scope="module")
def shell_clt():
    model = build_model("shell")
    cov = CovarianceSpec.power_law(model.noise_dim)
    return clt_experiment(model, cov, _shell_start(model), TimeGrid(1.0, 1000), SHELL_EPS, 256, 7)


def test_criterion_01_hypothesis_verification(acceptance_log):
    t0 = time.perf_counter()
    models = {
        "shell": build_model("shell"),
        "ns2d(K=8)": build_model("ns2d", max_wavenumber=8),
        "ou": build_model("ou"),
    }
    failed, worst_anti = [], 0.0
    for name, model in models.items():
        rep = verify_all(model, CovarianceSpec.power_law(model.noise_dim), 10_000, seed=0, slack=1.1)
        worst_anti = max(worst_anti, rep.conditions["antisymmetry"].empirical_constant)
        failed += [f"{name}:{k}" for k, c in rep.conditions.items() if not c.passed]
    elapsed = time.perf_counter() - t0
    ok = not failed and worst_anti <= 1e-10 and elapsed <= 60
    acceptance_log(1, "hypothesis verification", ok,
                   f"failed={failed or 'none'} antisymmetry={worst_anti:.2e} runtime={elapsed:.1f}s (<= 60s)")
    assert ok


def test_criterion_02_energy_identity(acceptance_log):
    model = build_model("shell", noise_gains=0.0, reaction="none")
    xi = _shell_start(model)
    path = solve_deterministic(model, xi, TimeGrid(1.0, 2**14))
    total = float(np.sum(path.terminal**2) + 2 * path.energy_integral(model))
    rel = abs(total - np.sum(xi**2)) / np.sum(xi**2)
    ok = rel <= 0.01
    acceptance_log(2, "energy identity", ok, f"relative defect {rel:.2e} (<= 1e-2)")
    assert ok


def test_criterion_03_scheme_validation(acceptance_log):
    t0 = time.perf_counter()
    p = LinearOUParams()
    ou = build_model("ou")
    xi = np.ones(1)
    grid = TimeGrid(1.0, 2**12)
    r_ou = self_convergence(ou, CovarianceSpec.uniform(1), xi, grid, 4, 256, 1,
                            reference=lambda inc: ou_terminal_oracle(p, xi, grid, inc))
    shell = build_model("shell")
    r_sh = self_convergence(shell, CovarianceSpec.power_law(shell.noise_dim), _shell_start(shell),
                            TimeGrid(1.0, 2**14), 4, 64, 1)
    elapsed = time.perf_counter() - t0
    ok = r_ou.order >= 0.9 and r_sh.order >= 0.4 and elapsed <= 120
    acceptance_log(3, "scheme validation", ok,
                   f"OU order {r_ou.order:.3f} (>= 0.9), shell order {r_sh.order:.3f} (>= 0.4), runtime {elapsed:.1f}s")
    assert ok


def test_criterion_04_first_order_rate(shell_clt, acceptance_log):
    s = shell_clt.slope_first_order.slope
    ok = abs(s - 1.0) <= 0.2
    acceptance_log(4, "first-order distance rate", ok, f"slope {s:.4f} (1.0 +- 0.2)")
    assert ok


def test_criterion_05_fluctuation_coupling(shell_clt, acceptance_log):
    ou = build_model("ou")
    r_ou = clt_experiment(ou, CovarianceSpec.uniform(1), np.ones(1), TimeGrid(1.0, 1000), SHELL_EPS, 256, 7)
    d_ou = max(s.D for s in r_ou.stats)
    slope = shell_clt.slope_D.slope
    ok = shell_clt.strictly_decreasing and slope >= 0.4 and d_ou <= 1e-20
    acceptance_log(5, "fluctuation coupling", ok,
                   f"shell D decreasing={shell_clt.strictly_decreasing} slope {slope:.4f} (>= 0.4); OU max D {d_ou:.2e} (<= 1e-20)")
    assert ok


def test_criterion_06_mdp_gaussian_oracle(acceptance_log):
    ou = build_model("ou")
    cov = CovarianceSpec.uniform(1)
    grid = TimeGrid(1.0, 1000)
    probe = np.ones(1)
    # lam = eps^(-1/4): lam^2 in {4, 8, 16}
    eps = [4.0**-2, 8.0**-2, 16.0**-2]
    est = mdp_tail_experiment(ou, cov, np.ones(1), grid, probe, 1.0, 0.25, eps, 10_000, 11, importance=True)
    decays = [e.decay for e in est]
    errs = [abs(d - OU_RATE) / OU_RATE if d is not None else np.inf for d in decays]
    tail_ok = all(e <= 0.15 for e in errs)
    u0 = solve_deterministic(ou, np.ones(1), grid)
    sweep = rate_sweep(ou, cov, u0, grid, probe, 1.0)
    rate_err = abs(sweep.I_extrapolated - OU_RATE) / OU_RATE
    ok = tail_ok and rate_err <= 0.01
    detail = ", ".join(f"lam^2={e.lam**2:.0f}: {d:.4f} ({x:.1%})" for e, d, x in zip(est, decays, errs))
    acceptance_log(6, "moderate deviation Gaussian oracle", ok,
                   f"-log p/lam^2 vs {OU_RATE:.5f} within 15%: {detail}; ESS min {min(e.ess for e in est):.0f}; "
                   f"secant {secant_decay(est):.4f}; rate_function {sweep.I_extrapolated:.5f} ({rate_err:.2%}, <= 1%)")
    assert ok


def test_criterion_07_adjoint_gradient(acceptance_log):
    worst = {}
    for name in ("ou", "shell"):
        model = build_model(name)
        cov = CovarianceSpec.power_law(model.noise_dim)
        grid = TimeGrid(1.0, 100)
        xi = np.zeros(model.dimension)
        xi[0] = 1.0
        probe = np.zeros(model.dimension)
        probe[0] = 1.0
        prob = SkeletonControlProblem(model, cov, solve_deterministic(model, xi, grid), grid, probe, 1.0, 1e3)
        rng = np.random.default_rng(0)
        errs = []
        for _ in range(20):
            c, d = rng.standard_normal((2, grid.steps, cov.m))
            h = 1e-4
            fd = (prob.objective(c + h * d) - prob.objective(c - h * d)) / (2 * h)
            ad = float(np.sum(prob.gradient(c) * d))
            errs.append(abs(fd - ad) / abs(ad))
        worst[name] = max(errs)
    ok = all(v <= 1e-6 for v in worst.values())
    acceptance_log(7, "adjoint gradient", ok, ", ".join(f"{k} max rel err {v:.2e}" for k, v in worst.items()) + " (<= 1e-6)")
    assert ok


def test_criterion_08_controlled_convergence(acceptance_log):
    model = build_model("shell")
    cov = CovarianceSpec.power_law(model.noise_dim)
    grid = TimeGrid(1.0, 1000)
    phi = ControlPath.constant(grid, [1.0, 0.5])
    r = controlled_convergence(model, cov, _shell_start(model), grid, phi, [1e-2, 1e-3, 1e-4], 256, 3, a=0.25, N=1.0)
    ok = r.monotone and r.ratio <= 0.1
    D = ", ".join(f"{s.D:.4g}" for s in r.stats)
    acceptance_log(8, "controlled process convergence", ok, f"D = [{D}] monotone={r.monotone} final/initial {r.ratio:.4f} (<= 0.1)")
    assert ok


def test_criterion_09_time_modulus(acceptance_log):
    model = build_model("shell")
    cov = CovarianceSpec.power_law(model.noise_dim)
    grid = TimeGrid(1.0, 1024)
    phi = ControlPath.constant(grid, [1.0, 0.5])
    r = increment_modulus(model, cov, _shell_start(model), grid, ScalingSpec.moderate(1e-3, 0.25), phi,
                          [2, 3, 4, 5, 6], 256, 3, N=1.0)
    ok = r.fit.slope >= 0.5
    acceptance_log(9, "time modulus", ok, f"decay exponent {r.fit.slope:.3f} (>= 0.5), kept {r.kept} replicas")
    assert ok


def _outputs(report):
    d = report.provenance["output_dir"]
    out = {}
    for name in sorted(os.listdir(d)):
        with open(os.path.join(d, name), "rb") as f:
            raw = f.read()
        if name == "summary.json":
            doc = json.loads(raw)
            doc.pop("wall_clock_seconds")
            raw = json.dumps(doc, sort_keys=True).encode()
        out[name] = raw
    return out


def test_criterion_10_reproducibility(tmp_path, acceptance_log):
    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    mismatches = []
    for name, overrides in (("clt_shell.yaml", ["replicas=600", "grid.steps=300"]),
                            ("mdp_ou.yaml", ["replicas=9000", "mdp.plain_replicas=9000"])):
        cfg = load_config(os.path.join(root, name), overrides)
        first = run(cfg, jobs=1, out_root=str(tmp_path / "j1"))
        replay_cfg = load_config(os.path.join(first.provenance["output_dir"], "config.yaml"))
        for jobs in (2, 4):
            again = run(replay_cfg, jobs=jobs, out_root=str(tmp_path / f"j{jobs}"))
            if _outputs(again) != _outputs(first):
                mismatches.append(f"{name}@jobs={jobs}")
        assert parse_config(first.config) == cfg
    ok = not mismatches
    acceptance_log(10, "reproducibility", ok, f"byte-identical statistics across jobs 1/2/4 and replay; mismatches={mismatches or 'none'}")
    assert ok
