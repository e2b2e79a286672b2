import math

import numpy as np
import pytest

from mvjump.errors import ConfigError
from mvjump.noise import (
    CHANNEL_BROWNIAN,
    CHANNEL_JUMPS,
    JumpMeasureSpec,
    StreamKey,
    compensator_integral,
    generate_noise_path,
    sample_brownian_increments,
    sample_jump_train,
)


def test_empty_grid_gives_no_increments():
    inc = sample_brownian_increments(StreamKey(1, 0), [0.0], 2)
    assert inc.shape == (0, 2)


@pytest.mark.parametrize("grid", [[], [0.0, 0.0], [0.0, -1.0], [0.0, np.nan]])
def test_bad_grids_rejected(grid):
    with pytest.raises(ConfigError):
        sample_brownian_increments(StreamKey(1, 0), grid, 1)


def test_fixed_key_is_deterministic():
    grid = np.linspace(0, 1, 11)
    a = sample_brownian_increments(StreamKey(7, 3, CHANNEL_BROWNIAN), grid, 2)
    b = sample_brownian_increments(StreamKey(7, 3, CHANNEL_BROWNIAN), grid, 2)
    np.testing.assert_array_equal(a, b)


def test_increment_moments():
    grid = np.arange(100_001) * 0.01
    inc = sample_brownian_increments(StreamKey(11, 0), grid, 1)[:, 0]
    assert abs(inc.mean()) < 3 * 0.1 / math.sqrt(inc.size)
    assert abs(inc.var() / 0.01 - 1) < 0.05


def test_non_uniform_grid_variance():
    grid = np.concatenate([[0.0], np.cumsum(np.tile([0.01, 0.04], 20_000))])
    inc = sample_brownian_increments(StreamKey(5, 0), grid, 1)[:, 0]
    assert abs(inc[0::2].var() / 0.01 - 1) < 0.05
    assert abs(inc[1::2].var() / 0.04 - 1) < 0.05


def test_zero_intensity_train_is_empty():
    assert sample_jump_train(StreamKey(1, 0, CHANNEL_JUMPS), 10.0, JumpMeasureSpec.none(1)) == []


def test_non_positive_horizon_rejected():
    with pytest.raises(ConfigError):
        sample_jump_train(StreamKey(1, 0), -1.0, JumpMeasureSpec.dirac())


def test_poisson_count_and_train_invariants():
    spec = JumpMeasureSpec.dirac(1.0, mass=1.0)
    counts = []
    for i in range(10_000):
        train = sample_jump_train(StreamKey(3, i, CHANNEL_JUMPS), 10.0, spec)
        times = [t for t, _ in train]
        assert all(0 < t <= 10.0 for t in times)
        assert all(a < b for a, b in zip(times, times[1:]))
        assert all(z.tolist() == [1.0] for _, z in train)
        counts.append(len(train))
    assert abs(np.mean(counts) - 10) < 0.3


def test_gaussian_marks_moments():
    spec = JumpMeasureSpec.gaussian(0.5, 2.0, mass=50.0)
    marks = np.concatenate([z for _, z in sample_jump_train(StreamKey(9, 0), 400.0, spec)])
    assert abs(marks.mean() - 0.5) < 4 * 2.0 / math.sqrt(marks.size)
    assert abs(marks.std() / 2.0 - 1) < 0.05


def test_compensator_examples():
    assert compensator_integral(lambda z: np.array([3.0]), JumpMeasureSpec.dirac()) == pytest.approx([3.0])
    sym = JumpMeasureSpec.discrete([[2.0], [-2.0]], [0.5, 0.5])
    assert compensator_integral(lambda z: z, sym) == pytest.approx([0.0])
    assert compensator_integral(lambda z: z ** 2, sym) == pytest.approx([4.0])


@pytest.mark.parametrize("spec", [
    JumpMeasureSpec.dirac(1.0, mass=2.5),
    JumpMeasureSpec.discrete([[1.0], [2.0], [-1.0]], [0.2, 0.3, 0.7]),
    JumpMeasureSpec.gaussian(0.0, 1.0, mass=0.7, nodes=12),
    JumpMeasureSpec.none(1),
])
def test_quadrature_of_one_is_total_mass(spec):
    assert abs(compensator_integral(lambda z: 1.0, spec) - spec.total_mass) < 1e-12


def test_gaussian_quadrature_moments():
    spec = JumpMeasureSpec.gaussian(1.0, 2.0, mass=3.0, nodes=16)
    assert compensator_integral(lambda z: z[0] ** 2, spec) == pytest.approx(3.0 * (1 + 4), rel=1e-12)


@pytest.mark.parametrize("bad", [
    lambda: JumpMeasureSpec.dirac(1.0, mass=-1.0),
    lambda: JumpMeasureSpec.dirac(1.0, mass=math.inf),
    lambda: JumpMeasureSpec.discrete([[1.0]], [0.0]),
    lambda: JumpMeasureSpec.gaussian(0.0, -1.0),
])
def test_invalid_specs(bad):
    with pytest.raises(ConfigError):
        bad()


def test_stream_key_rejects_negative_components():
    with pytest.raises(ConfigError):
        StreamKey(1, -1)


def test_path_reproducible_and_worker_independent():
    grid = np.linspace(0, 2, 201)
    spec = JumpMeasureSpec.gaussian(0.0, 1.0, mass=2.0)
    a = generate_noise_path(42, grid, 300, 2, spec, workers=1)
    b = generate_noise_path(42, grid, 300, 2, spec, workers=4)
    np.testing.assert_array_equal(a.increments, b.increments)
    np.testing.assert_array_equal(a.jump_time, b.jump_time)
    np.testing.assert_array_equal(a.jump_mark, b.jump_mark)
    np.testing.assert_array_equal(a.jump_particle, b.jump_particle)


def test_particle_streams_do_not_depend_on_particle_count():
    grid = np.linspace(0, 1, 51)
    spec = JumpMeasureSpec.dirac()
    small = generate_noise_path(8, grid, 10, 1, spec)
    big = generate_noise_path(8, grid, 100, 1, spec)
    np.testing.assert_array_equal(small.increments, big.increments[:, :10])
    assert small.jump_train(3) == pytest.approx(big.jump_train(3))
    sub = big.subset(10)
    np.testing.assert_array_equal(sub.jump_time, small.jump_time)


def test_step_binning_matches_trains():
    grid = np.linspace(0, 5, 51)
    path = generate_noise_path(4, grid, 20, 1, JumpMeasureSpec.dirac(1.0, mass=3.0))
    seen = 0
    for k in range(path.steps):
        pid, marks = path.step_jumps(k)
        lo, hi = path.step_offsets[k], path.step_offsets[k + 1]
        times = path.jump_time[lo:hi]
        assert np.all((times > grid[k]) & (times <= grid[k + 1]))
        seen += pid.size
    assert seen == path.jump_time.size


def test_coarsen_sums_increments():
    path = generate_noise_path(2, np.linspace(0, 1, 9), 5, 1, JumpMeasureSpec.dirac())
    coarse = path.coarsen(4)
    np.testing.assert_allclose(coarse.increments, path.increments.reshape(2, 4, 5, 1).sum(axis=1))
    np.testing.assert_array_equal(np.sort(coarse.jump_time), np.sort(path.jump_time))
    with pytest.raises(ConfigError):
        path.coarsen(3)


def test_compensated_jumps_are_martingale():
    c, T = 0.7, 2.0
    spec = JumpMeasureSpec.dirac(1.0, mass=1.0)
    totals = np.array([
        c * len(sample_jump_train(StreamKey(21, i, CHANNEL_JUMPS), T, spec))
        - T * compensator_integral(lambda z: c, spec)
        for i in range(10_000)
    ])
    assert abs(totals.mean()) < 4 * totals.std(ddof=1) / math.sqrt(totals.size)


def test_cross_particle_independence():
    grid = np.arange(10_001) * 0.01
    path = generate_noise_path(13, grid, 2, 1, JumpMeasureSpec.none(1))
    r = np.corrcoef(path.increments[:, 0, 0], path.increments[:, 1, 0])[0, 1]
    assert abs(r) < 0.05
