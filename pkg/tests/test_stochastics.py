import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydroscale.core import InvalidInput
from hydroscale.stochastics import (
    ControlPath,
    CovarianceSpec,
    TimeGrid,
    WienerIncrements,
    apply_noise_operator,
    clip_to_ball,
    replica_key,
    sample_block,
    sample_increments,
    standard_draws,
)

# Philox(key=[42, 3]) standard normals, row-major over (step, mode)
REFERENCE_42_3 = [
    0.7383886622983749, -1.014893459564203, -0.20050082531502142,
    -0.02598973313615016, -1.727099515297502, 0.03331772152635866,
]


def test_reference_stream():
    draws = standard_draws(TimeGrid(1.0, 3), 2, 42, 3)
    np.testing.assert_array_equal(draws.ravel(), REFERENCE_42_3)


def test_replica_key_layout_and_range():
    np.testing.assert_array_equal(replica_key(7, 9), np.array([7, 9], dtype=np.uint64))
    with pytest.raises(InvalidInput):
        replica_key(-1, 0)
    with pytest.raises(InvalidInput):
        replica_key(0, -1)
    replica_key(2**64 - 1, 2**64 - 1)


def test_streams_are_distinct_and_deterministic():
    g = TimeGrid(1.0, 50)
    a = standard_draws(g, 3, 1, 0)
    np.testing.assert_array_equal(a, standard_draws(g, 3, 1, 0))
    assert not np.allclose(a, standard_draws(g, 3, 1, 1))
    assert not np.allclose(a, standard_draws(g, 3, 2, 0))


def test_block_matches_single_replicas():
    cov = CovarianceSpec.power_law(4)
    g = TimeGrid(1.0, 20)
    blk = sample_block(cov, g, 5, range(3, 7))
    for i, r in enumerate(range(3, 7)):
        np.testing.assert_array_equal(blk[:, i], sample_increments(cov, g, 5, r).increments)


def test_increment_variance():
    cov = CovarianceSpec(np.array([1.0, 0.25]))
    g = TimeGrid(2.0, 4)
    blk = sample_block(cov, g, 0, range(20000))
    np.testing.assert_allclose(blk.var(axis=1).mean(axis=0), cov.q * g.dt, rtol=0.03)


def test_covariance_validation():
    with pytest.raises(InvalidInput):
        CovarianceSpec([1.0, -0.1])
    with pytest.raises(InvalidInput):
        CovarianceSpec([])
    cov = CovarianceSpec.power_law(3, 2.0, 2.0)
    np.testing.assert_allclose(cov.q, [2.0, 0.5, 2.0 / 9])
    assert cov.trace == pytest.approx(2.0 + 0.5 + 2.0 / 9)


def test_increment_binary_and_csv_roundtrip(tmp_path):
    inc = sample_increments(CovarianceSpec.uniform(3), TimeGrid(0.5, 7), 11, 2)
    p = tmp_path / "w.bin"
    inc.write_binary(p)
    back = WienerIncrements.read_binary(p)
    np.testing.assert_array_equal(back.increments, inc.increments)
    assert back.grid == inc.grid and back.seed == 11
    inc.write_csv(tmp_path / "w.csv")
    with open(tmp_path / "w.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["t", "dW_0", "dW_1", "dW_2"]
    np.testing.assert_array_equal(np.array(rows[1:], dtype=float)[:, 1:], inc.increments)


def test_truncated_binary_rejected(tmp_path):
    inc = sample_increments(CovarianceSpec.uniform(2), TimeGrid(1.0, 4), 0)
    with pytest.raises(InvalidInput):
        WienerIncrements.from_bytes(inc.to_bytes()[:-8])


def test_coarsen_sums_blocks():
    inc = sample_increments(CovarianceSpec.uniform(2), TimeGrid(1.0, 8), 0)
    c = inc.coarsen(4)
    assert c.grid.steps == 2
    np.testing.assert_allclose(c.increments[1], inc.increments[4:].sum(axis=0))
    np.testing.assert_allclose(c.terminal(), inc.terminal())
    with pytest.raises(InvalidInput):
        inc.coarsen(3)


def test_control_action_and_roundtrip(tmp_path):
    g = TimeGrid(2.0, 4)
    h = ControlPath.constant(g, [1.0, 2.0])
    assert h.energy() == pytest.approx(2.0 * 5.0)
    assert h.action() == pytest.approx(5.0)
    h.write_binary(tmp_path / "h.bin")
    np.testing.assert_array_equal(ControlPath.read_binary(tmp_path / "h.bin").coeffs, h.coeffs)


def test_control_support_check():
    g = TimeGrid(1.0, 2)
    cov = CovarianceSpec([1.0, 0.0])
    with pytest.raises(InvalidInput):
        ControlPath.constant(g, [1.0, 1.0]).check_support(cov)
    with pytest.raises(InvalidInput):
        ControlPath.constant(g, [1.0, 0.0, 0.0]).check_support(cov)
    np.testing.assert_allclose(ControlPath.constant(g, [3.0, 0.0]).physical(CovarianceSpec([4.0, 0.0])), [[6.0, 0.0]] * 2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=4), st.floats(0.01, 10))
def test_clip_to_ball(vals, N):
    h = ControlPath.constant(TimeGrid(1.0, 3), vals)
    c = clip_to_ball(h, N)
    assert c.energy() <= N * (1 + 1e-12)
    if h.energy() <= N:
        assert c is h
    else:
        assert c.energy() == pytest.approx(N)


def test_noise_operator_rejects_dead_modes(shell):
    cov = CovarianceSpec(np.r_[1.0, np.zeros(shell.noise_dim - 1)])
    w = np.zeros(shell.noise_dim)
    w[1] = 1.0
    with pytest.raises(InvalidInput):
        apply_noise_operator(shell, cov, 0.0, np.zeros(shell.dimension), w)


def test_grid_validation():
    with pytest.raises(InvalidInput):
        TimeGrid(0.0, 10)
    with pytest.raises(InvalidInput):
        TimeGrid(1.0, 0)
    assert TimeGrid(1.0, 4).refine(2) == TimeGrid(1.0, 8)
