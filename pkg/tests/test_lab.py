import csv
import io
import math

import numpy as np
import pytest

from mvjump.errors import ConfigError
from mvjump.lab import (
    ExperimentPlan,
    fit_slope,
    refinement_distance,
    replication_seed,
    run_averaging,
    run_chaos,
    run_experiment,
    run_moment_and_holder,
    run_refinement,
    with_horizon,
)
from mvjump.model import AveragedPair, builtin_scenario, expression_scenario
from mvjump.noise import JumpMeasureSpec

PAIR = builtin_scenario("example_4_1")
AVG1 = with_horizon(PAIR, 1.0).averaged


def test_replication_seeds():
    assert [replication_seed(10, j) for j in range(4)] == [10, 11, 8, 9]


@pytest.mark.parametrize("kw", [
    {"grid": ()},
    {"grid": (0.1, 0.1)},
    {"grid": (0.1, 0.01, 0.05)},
    {"grid": (0.1,), "replications": 0},
    {"grid": (-0.1,)},
])
def test_plan_invariants(kw):
    with pytest.raises(ConfigError):
        ExperimentPlan("averaging", scenario=PAIR, **kw)


def test_plan_kind_checks():
    with pytest.raises(ConfigError):
        ExperimentPlan("bogus", (1,), PAIR)
    with pytest.raises(ConfigError):
        ExperimentPlan("averaging", (0.1,), AVG1)
    with pytest.raises(ConfigError):
        ExperimentPlan("chaos", (10.5,), AVG1)


def test_fit_slope_exact_power_law():
    x = np.array([50, 100, 200, 400, 800.0])
    fit = fit_slope(x, 3.0 * x ** -0.5)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.ci_low == pytest.approx(-0.5, abs=1e-9) and fit.ci_high == pytest.approx(-0.5, abs=1e-9)
    two = fit_slope(x[:2], x[:2] ** 2.0)
    assert two.slope == pytest.approx(2.0) and two.ci_low is None
    assert fit_slope(x[:1], x[:1]) is None


def test_fit_slope_matches_unweighted_regression():
    rng = np.random.default_rng(0)
    x = np.geomspace(1, 100, 7)
    y = x ** -1.0 * np.exp(rng.normal(0, 0.1, x.size))
    fit = fit_slope(x, y)
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    assert fit.slope == pytest.approx(slope, rel=1e-10)
    assert fit.ci_low < fit.slope < fit.ci_high


def test_identical_pair_averaging_statistic_is_zero():
    sc = PAIR.averaged
    rep = run_averaging(ExperimentPlan("averaging", (0.1, 0.01), AveragedPair(sc, sc), replications=2,
                                       particles=20, steps=200))
    assert all(r.statistic == 0.0 for r in rep.rows)


def test_averaging_statistic_non_increasing_in_eps():
    rep = run_averaging(ExperimentPlan("averaging", (0.1, 0.01, 0.001), PAIR, replications=10,
                                       particles=100, steps=1000))
    assert rep.verdicts["monotone"]
    assert rep.rows[0].statistic > rep.rows[-1].statistic


def test_common_noise_reduces_variance():
    kw = dict(grid=(0.01,), scenario=PAIR, replications=10, particles=50, steps=1000)
    common = run_averaging(ExperimentPlan("averaging", coupling="common", **kw))
    indep = run_averaging(ExperimentPlan("averaging", coupling="independent", **kw))
    v_common = np.var(np.array(common.extra["per_replication"])[:, 0], ddof=1)
    v_indep = np.var(np.array(indep.extra["per_replication"])[:, 0], ddof=1)
    assert v_common < v_indep
    assert common.rows[0].statistic < indep.rows[0].statistic


def test_chaos_single_point_has_no_fit():
    rep = run_chaos(ExperimentPlan("chaos", (20,), AVG1, replications=2, steps=50, reference_size=100))
    assert rep.fit is None and len(rep.rows) == 1


def test_chaos_gap_vanishes_without_interaction():
    sc = builtin_scenario("linear_ou_jump")
    rep = run_chaos(ExperimentPlan("chaos", (10, 40), sc, replications=2, steps=50, reference_size=200,
                                   statistic="gap"))
    assert all(r.statistic == 0.0 for r in rep.rows)


def test_chaos_reference_must_cover_grid():
    with pytest.raises(ConfigError):
        run_chaos(ExperimentPlan("chaos", (10, 400), AVG1, reference_size=100))


def test_chaos_reports_both_statistics():
    rep = run_chaos(ExperimentPlan("chaos", (20, 40, 80), AVG1, replications=3, steps=50, reference_size=400))
    assert rep.fit is not None
    assert rep.extra["other_statistic"]["name"] == "gap"
    assert all(r.statistic > 0 for r in rep.rows)


def test_refinement_linear_ode_ratio():
    sc = expression_scenario("-x", "0", "0", horizon=1.0, x0=1.0)
    rep = run_refinement(ExperimentPlan("refinement", (50, 100, 200, 400), sc, particles=1))
    np.testing.assert_allclose(rep.extra["ratios"], 0.5, atol=0.02)
    assert rep.verdicts["strictly_decreasing"]


def test_refinement_same_grid_is_zero():
    assert refinement_distance(AVG1, 100, 100, particles=20, seed=1) == 0.0
    with pytest.raises(ConfigError):
        refinement_distance(AVG1, 30, 100, particles=2, seed=1)
    with pytest.raises(ConfigError):
        run_refinement(ExperimentPlan("refinement", (30, 100), AVG1))


def test_refinement_matches_direct_distance():
    plan = ExperimentPlan("refinement", (50, 100), AVG1, particles=30, base_seed=3)
    rep = run_refinement(plan)
    direct = refinement_distance(AVG1, 50, 100, particles=30, seed=3)
    assert rep.rows[0].statistic == pytest.approx(math.sqrt(direct), rel=1e-12)


def test_holder_brownian():
    bm = expression_scenario("0", "1", "0", horizon=1.0)
    rep = run_moment_and_holder(ExperimentPlan("holder", (0.01, 0.1, 0.5), bm, particles=10_000, steps=100))
    for r in rep.rows:
        assert r.statistic == pytest.approx(r.grid_value, rel=0.05)
    assert abs(rep.fit.slope - 1) <= 0.05 and rep.verdicts["holder"]


def test_holder_compensated_poisson():
    c = 0.8
    sc = expression_scenario("0", "0", str(c), horizon=1.0, jump_spec=JumpMeasureSpec.dirac(1.0, mass=1.0))
    rep = run_moment_and_holder(ExperimentPlan("holder", (0.01, 0.1, 0.5), sc, particles=10_000, steps=100))
    for r in rep.rows:
        assert r.statistic == pytest.approx(c * c * r.grid_value, rel=0.05)


def test_holder_lag_must_be_grid_multiple():
    bm = expression_scenario("0", "1", "0", horizon=1.0)
    with pytest.raises(ConfigError):
        run_moment_and_holder(ExperimentPlan("holder", (0.015,), bm, steps=100))


def test_moments_bounded_across_refinement():
    rep = run_moment_and_holder(ExperimentPlan("moments", (100, 200), AVG1, replications=2, particles=300))
    assert rep.verdicts["bounded"]
    assert rep.extra["max_min_ratio"] < 2


def test_standard_error_scaling():
    sc = builtin_scenario("linear_ou_jump")
    kw = dict(grid=(20,), scenario=sc, particles=10)
    small = run_moment_and_holder(ExperimentPlan("moments", replications=100, **kw))
    big = run_moment_and_holder(ExperimentPlan("moments", replications=400, **kw))
    assert abs(big.rows[0].stderr / small.rows[0].stderr - 0.5) <= 0.15


def test_single_replication_has_no_stderr():
    rep = run_moment_and_holder(ExperimentPlan("moments", (20,), AVG1, particles=5))
    assert rep.rows[0].stderr is None
    assert rep.to_csv().splitlines()[1].split(",")[2] == ""


def test_csv_and_json_layout():
    rep = run_moment_and_holder(ExperimentPlan("moments", (20, 40), AVG1, replications=3, particles=5))
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["grid_value", "statistic", "stderr", "replications"]
    assert float(rows[1][1]) == rep.rows[0].statistic
    assert '"kind": "moments"' in rep.to_json()


def test_thread_count_does_not_change_reports():
    kw = dict(grid=(20, 40), scenario=AVG1, replications=5, particles=30, base_seed=7)
    one = run_experiment(ExperimentPlan("moments", workers=1, **kw))
    many = run_experiment(ExperimentPlan("moments", workers=3, **kw))
    assert one.to_csv() == many.to_csv()
