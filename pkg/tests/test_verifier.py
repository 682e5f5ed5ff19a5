import dataclasses
import json

import numpy as np
import pytest

from hydroscale.core import InvalidInput
from hydroscale.models import build_model
from hydroscale.models.shell import ShellParams, make_shell_model
from hydroscale.stochastics import CovarianceSpec
from hydroscale.verifier import (
    draw_probes,
    verify_all,
    verify_antisymmetry,
    verify_bilinear_bound,
    verify_interpolation,
    verify_noise_and_reaction,
)


def test_shell_and_ou_pass_everything(shell, ou):
    for model in (shell, ou):
        rep = verify_all(model, CovarianceSpec.power_law(model.noise_dim), 2000, seed=3)
        failed = [k for k, c in rep.conditions.items() if not c.passed]
        assert not failed


def test_ns_small_passes_everything(ns_small):
    rep = verify_all(ns_small, CovarianceSpec.power_law(ns_small.noise_dim), 500, seed=3)
    assert rep.passed
    assert np.isfinite(rep.conditions["interpolation"].empirical_constant)


def test_broken_shell_fails_antisymmetry(rng):
    bad = make_shell_model(ShellParams(a=1.0, b=-0.3, c=-0.5), check_coefficients=False)
    rep = verify_antisymmetry(bad, 200, seed=0)
    assert not rep.conditions["antisymmetry"].passed
    # the residual of one probe triple matches the direct trilinear sum
    p = draw_probes(bad.dimension, 1, 0, k=3)[0]
    direct = abs(bad.trilinear(p[0], p[1], p[2]) + bad.trilinear(p[0], p[2], p[1]))
    assert direct > 1e-3


def test_zero_bilinear_gives_zero_constants(ou):
    rep = verify_bilinear_bound(ou, (0.25, 1.0), 500, seed=0)
    for name, c in rep.conditions.items():
        assert c.empirical_constant == 0.0, name


def test_geometric_norm_saturates_interpolation(shell):
    c = verify_interpolation(shell, 1000, seed=0).conditions["interpolation"]
    assert c.empirical_constant == pytest.approx(1.0, abs=1e-12)


def test_interpolation_ratio_scale_invariant(ns_small, rng):
    v = rng.standard_normal(ns_small.dimension)
    def ratio(x):
        return ns_small.interp_norm(x) ** 2 / (np.linalg.norm(x) * np.sqrt(np.sum(ns_small.a_spectrum * x**2)))
    assert ratio(2 * v) == pytest.approx(ratio(v), rel=1e-12)


def test_empirical_constants_monotone_in_samples(shell, shell_cov):
    small = verify_all(shell, shell_cov, 500, seed=4)
    large = verify_all(shell, shell_cov, 2000, seed=4)
    for name, c in small.conditions.items():
        if name == "derivative_consistency":  # a slope, not a maximum
            continue
        assert large.conditions[name].empirical_constant >= c.empirical_constant, name


def test_refined_eta_constant_stable_across_seeds(shell):
    vals = []
    for seed in (0, 1):
        c = verify_bilinear_bound(shell, (0.25,), 10_000, seed).conditions["bilinear_eta[0.25]"]
        assert np.isfinite(c.empirical_constant)
        vals.append(c.detail["refined"])
    assert abs(vals[0] - vals[1]) <= 0.2 * min(vals)


def test_refined_constant_below_declared_and_sample_max(shell):
    c = verify_bilinear_bound(shell, (0.25,), 2000, 0).conditions["bilinear_eta[0.25]"]
    assert c.empirical_constant <= c.detail["refined"] <= c.declared_constant


def test_difference_bound_zero_on_diagonal(shell):
    # with u1 = u2 the difference probe is 0 and B(0, .) = 0
    u = np.ones(shell.dimension)
    assert shell.trilinear(u - u, u - u, u) == 0.0


def test_constant_noise_and_linear_reaction_exact():
    model = build_model("ou", dimension=3, drift_rates=[1.0, 2.0, 3.0], reaction_matrix=np.eye(3).tolist())
    rep = verify_noise_and_reaction(model, CovarianceSpec.uniform(3), 500, seed=0)
    for name in ("noise_lipschitz", "noise_holder", "derivative_lipschitz"):
        assert rep.conditions[name].empirical_constant == 0.0
    assert rep.conditions["derivative_consistency"].passed


def test_understated_noise_constant_fails(shell, shell_cov):
    def tiny(q):
        d = shell.noise_constants(q)
        return dict(d, K0=1e-6, K1=1e-6)

    liar = dataclasses.replace(shell, noise_constants=tiny)
    rep = verify_noise_and_reaction(liar, shell_cov, 500, seed=0)
    assert not rep.conditions["noise_growth"].passed


def test_understated_bilinear_constant_fails(shell):
    rep = verify_bilinear_bound(shell, (0.25,), 500, 0, declared={
        "eta_bound": {0.25: 1e-6}, "split_bound": 1e-6, "mixed_bound": 1e-6, "self_bound": {0.25: 1e-6}})
    assert not rep.passed


def test_report_json(shell, shell_cov):
    rep = verify_all(shell, shell_cov, 300, seed=0)
    doc = json.loads(rep.to_json())
    assert doc["model"] == "shell"
    entry = doc["conditions"]["antisymmetry"]
    assert set(entry) >= {"max_residual", "empirical_constant", "declared_constant", "pass", "samples"}


def test_argument_checks(shell, shell_cov):
    with pytest.raises(InvalidInput):
        verify_bilinear_bound(shell, (), 10)
    with pytest.raises(InvalidInput):
        verify_bilinear_bound(shell, (-1.0,), 10)
    with pytest.raises(InvalidInput):
        draw_probes(3, 0, 0)
    with pytest.raises(InvalidInput):
        verify_noise_and_reaction(shell, CovarianceSpec.uniform(shell.noise_dim + 1), 10)
