import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydroscale.asymptotics import (
    ExperimentFailure,
    SkeletonControlProblem,
    TailEstimate,
    clt_experiment,
    controlled_convergence,
    fit_loglog,
    mdp_tail_experiment,
    mean_se,
    moment_audit,
    rate_function,
    rate_sweep,
    richardson_zero,
    secant_decay,
)
from hydroscale.asymptotics.common import check_exclusions
from hydroscale.asymptotics.controlled import modulus_of, shift_steps
from hydroscale.asymptotics.rate import conjugate_gradient
from hydroscale.core import InvalidInput
from hydroscale.integrators import StatePath, solve_deterministic, solve_sde, ScalingSpec
from hydroscale.stochastics import ControlPath, CovarianceSpec, TimeGrid, sample_block

OU_RATE = 1.0 / (1.0 - np.exp(-2.0))


# ------------------------------------------------------------------ statistics helpers


def test_fit_loglog_exact_power_law():
    x = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    f = fit_loglog(x, 3.0 * x**0.7)
    assert f.slope == pytest.approx(0.7, abs=1e-12)
    assert f.ci_low == pytest.approx(0.7, abs=1e-6) and f.ci_high == pytest.approx(0.7, abs=1e-6)
    assert np.isnan(fit_loglog(x, np.array([1.0, 0.0, 1.0, 1.0])).slope)


def test_mean_se_and_exclusions():
    m, s = mean_se([1.0, 3.0])
    assert (m, s) == (2.0, pytest.approx(1.0))
    with pytest.raises(InvalidInput):
        mean_se([1.0])
    check_exclusions(1, 100)
    with pytest.raises(ExperimentFailure):
        check_exclusions(2, 100)


def test_richardson_exact_on_polynomials():
    betas = [1e1, 1e2, 1e3]
    assert richardson_zero(betas, [2.0 + 3.0 / b - 5.0 / b**2 for b in betas]) == pytest.approx(2.0, abs=1e-9)


def test_conjugate_gradient_matches_direct_solve(rng):
    a = rng.standard_normal((8, 8))
    h = a @ a.T + 8 * np.eye(8)
    b = rng.standard_normal(8)
    x, it, res = conjugate_gradient(lambda v: h @ v, b, np.zeros(8), 1e-12, 100)
    np.testing.assert_allclose(x, np.linalg.solve(h, b), rtol=1e-9)
    assert it <= 8 + 2


def test_secant_decay_exact_for_pure_exponential():
    ests = [
        TailEstimate(0.0, np.sqrt(l2), 10, 1.0, 2.0 * np.exp(-1.3 * l2), 0.0, None, False, False, 5)
        for l2 in (4.0, 8.0, 16.0)
    ]
    assert secant_decay(ests) == pytest.approx(1.3)
    assert secant_decay(ests[:1]) is None


# ------------------------------------------------------------------ rate function


@pytest.fixture(scope="module", params=["ou", "shell"])
def control_problem(request):
    from hydroscale.models import build_model

    model = build_model(request.param)
    cov = CovarianceSpec.power_law(model.noise_dim)
    grid = TimeGrid(1.0, 60)
    xi = np.zeros(model.dimension)
    xi[0] = 1.0
    if model.dimension > 1:
        xi[1] = 0.5
    u0 = solve_deterministic(model, xi, grid)
    probe = np.zeros(model.dimension)
    probe[0] = 1.0
    return SkeletonControlProblem(model, cov, u0, grid, probe, 1.0, 1e3)


def test_adjoint_gradient_matches_finite_differences(control_problem):
    prob = control_problem
    rng = np.random.default_rng(1)
    shape = (prob.grid.steps, prob.m)
    worst = 0.0
    for _ in range(20):
        c = rng.standard_normal(shape)
        d = rng.standard_normal(shape)
        h = 1e-4
        fd = (prob.objective(c + h * d) - prob.objective(c - h * d)) / (2 * h)
        ad = float(np.sum(prob.gradient(c) * d))
        worst = max(worst, abs(fd - ad) / abs(ad))
    assert worst <= 1e-6


def test_matrix_forward_matches_skeleton_solver(control_problem, rng):
    from hydroscale.integrators import solve_skeleton

    prob = control_problem
    c = rng.standard_normal((prob.grid.steps, prob.m))
    x = solve_skeleton(prob.model, prob.cov, prob.u0, prob.grid, ControlPath(prob.grid, c)).states
    np.testing.assert_allclose(prob.forward(c), x, atol=1e-13 * max(1.0, np.max(np.abs(x))))


def test_objective_convexity_witness(control_problem, rng):
    prob = control_problem
    for _ in range(10):
        a, b = rng.standard_normal((2, prob.grid.steps, prob.m))
        t = rng.uniform()
        assert prob.objective(t * a + (1 - t) * b) <= t * prob.objective(a) + (1 - t) * prob.objective(b) + 1e-9


def test_rate_scales_quadratically_in_target(control_problem):
    prob = control_problem
    args = (prob.model, prob.cov, prob.u0, prob.grid, prob.probe)
    i1 = rate_function(*args, 0.5, 1e8).I_hat
    i2 = rate_function(*args, 1.0, 1e8).I_hat
    assert i2 / i1 == pytest.approx(4.0, rel=1e-6)


def test_rate_zero_target_is_free(control_problem):
    prob = control_problem
    sol = rate_function(prob.model, prob.cov, prob.u0, prob.grid, prob.probe, 0.0, 1e3)
    assert sol.I_hat == 0.0 and sol.converged


def test_ou_rate_matches_gaussian_value(ou, ou_cov):
    grid = TimeGrid(1.0, 1000)
    u0 = solve_deterministic(ou, np.ones(1), grid)
    sweep = rate_sweep(ou, ou_cov, u0, grid, np.ones(1), 1.0)
    assert all(s.converged for s in sweep.solutions)
    assert np.all(np.diff(sweep.I_values) > 0)
    assert sweep.I_extrapolated == pytest.approx(OU_RATE, rel=0.01)


# ------------------------------------------------------------------ fluctuations and tails


def test_clt_pathwise_identity_on_ou(ou, ou_cov):
    r = clt_experiment(ou, ou_cov, np.ones(1), TimeGrid(1.0, 200), [1e-2, 1e-3], 64, 0)
    assert max(s.D for s in r.stats) <= 1e-20


def test_clt_first_order_rate_on_shell(shell, shell_cov):
    xi = np.zeros(shell.dimension)
    xi[0] = 1.0
    r = clt_experiment(shell, shell_cov, xi, TimeGrid(1.0, 200), [1e-2, 1e-3, 1e-4], 64, 0)
    assert r.slope_first_order.slope == pytest.approx(1.0, abs=0.2)
    assert r.strictly_decreasing


def test_tail_plain_mc_nested_in_threshold(ou, ou_cov):
    grid = TimeGrid(1.0, 50)
    args = (ou, ou_cov, np.ones(1), grid, np.ones(1))
    lo = mdp_tail_experiment(*args, 0.5, 0.25, [1e-1], 4000, 2)[0]
    hi = mdp_tail_experiment(*args, 1.0, 0.25, [1e-1], 4000, 2)[0]
    assert hi.hits <= lo.hits and hi.p_hat <= lo.p_hat


def test_zero_tilt_reproduces_plain_mc(ou, ou_cov):
    grid = TimeGrid(1.0, 50)
    args = (ou, ou_cov, np.ones(1), grid, np.ones(1), 0.5, 0.25, [1e-1], 3000, 4)
    plain = mdp_tail_experiment(*args)[0]
    tilted = mdp_tail_experiment(*args, importance=True, tilt=np.zeros((grid.steps, 1)))[0]
    assert tilted.p_hat == pytest.approx(plain.p_hat, rel=1e-12)
    assert tilted.hits == plain.hits


def test_importance_sampling_agrees_with_plain_mc(ou, ou_cov):
    grid = TimeGrid(1.0, 100)
    args = (ou, ou_cov, np.ones(1), grid, np.ones(1), 1.0, 0.25, [1 / 16])
    is_ = mdp_tail_experiment(*args, 10_000, 1, importance=True)[0]
    mc = mdp_tail_experiment(*args, 100_000, 2)[0]
    assert is_.ess >= 100 and mc.hits >= 50
    assert abs(is_.p_hat - mc.p_hat) <= 3 * np.hypot(is_.se, mc.se)
    assert is_.tilt_action == pytest.approx(OU_RATE, rel=0.02)


def test_tail_censoring(ou, ou_cov):
    est = mdp_tail_experiment(ou, ou_cov, np.ones(1), TimeGrid(1.0, 20), np.ones(1), 50.0, 0.25, [1e-2], 100, 0)[0]
    assert est.censored and est.decay is None and est.censored_bound > 0


# ------------------------------------------------------------------ controlled processes


def test_controlled_distance_decreases(shell, shell_cov):
    xi = np.zeros(shell.dimension)
    xi[:2] = [1.0, 0.5]
    grid = TimeGrid(1.0, 200)
    phi = ControlPath.constant(grid, [1.0, 0.5])
    r = controlled_convergence(shell, shell_cov, xi, grid, phi, [1e-2, 1e-3, 1e-4], 32, 0, N=1.0)
    assert r.monotone and r.ratio < 0.5


def test_shift_steps_and_modulus_of_linear_path():
    grid = TimeGrid(1.0, 64)
    j = shift_steps(grid, 3)
    assert j == 8
    with pytest.raises(InvalidInput):
        shift_steps(grid, 7)
    x = grid.nodes()[:, None]  # x(t) = t
    t = grid.nodes()[:-1]
    expected = grid.dt * np.sum((np.minimum(t + j * grid.dt, 1.0) - t) ** 2)
    assert modulus_of(x, grid, j) == pytest.approx(expected)


def test_moment_audit_on_constant_paths(shell):
    grid = TimeGrid(1.0, 10)
    x = np.zeros((11, 3, shell.dimension))
    x[..., 0] = 1.0
    path = StatePath(grid, x)
    audit = moment_audit(shell, [(1e-2, path), (1e-3, path)], p=2)
    assert audit.uniform
    assert audit.rows[0]["sup_pow"] == pytest.approx(1.0)
    assert audit.rows[0]["energy"] == pytest.approx(shell.a_spectrum[0])


# ------------------------------------------------------------------ properties


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.2, 2.0))
def test_ou_rate_closed_form_property(drift, target):
    """Discrete minimal energy equals target^2 / (2 dt sum g_k^2)."""
    from hydroscale.models import build_model

    model = build_model("ou", drift_rates=drift)
    cov = CovarianceSpec.uniform(1)
    grid = TimeGrid(1.0, 40)
    u0 = solve_deterministic(model, np.ones(1), grid)
    d = 1.0 / (1.0 + grid.dt * drift)
    g = grid.dt * d ** np.arange(grid.steps, 0, -1)
    exact = target**2 / (2 * np.sum(g**2) / grid.dt)
    sol = rate_function(model, cov, u0, grid, np.ones(1), target, 1e12)
    assert sol.I_hat == pytest.approx(exact, rel=1e-6)
