import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mvjump.errors import ConfigError, EvaluationError
from mvjump.model import (
    AveragedPair,
    FunctionCoefficients,
    InitialLaw,
    MeasureView,
    Scenario,
    builtin_scenario,
    eval_coefficient,
    expression_scenario,
    linear_ou_jump_moments,
)
from mvjump.noise import JumpMeasureSpec

ZERO = MeasureView([0.0])


def test_example_pair_defaults():
    pair = builtin_scenario("example_4_1", {"x0": 1, "T": 10, "eps": 0.01})
    assert isinstance(pair, AveragedPair)
    assert pair.fast.eps == 0.01 and pair.fast.horizon == 10
    assert pair.fast.kappa == 6 and pair.fast.r == 18
    for t in (0.5, 3.0, 10.0):
        assert pair.rate_functions["drift"](t) == pytest.approx(1 / (1 + t))


@pytest.mark.parametrize("params", [{"eps": -1}, {"eps": 0}, {"T": -2}, {"bogus": 1}, {"x0": "a"}])
def test_invalid_builtin_params(params):
    with pytest.raises(ConfigError):
        builtin_scenario("example_4_1", params)


def test_unknown_builtin():
    with pytest.raises(ConfigError):
        builtin_scenario("nope")


def test_eval_examples():
    pair = builtin_scenario("example_4_1", {"eps": 1.0})
    assert eval_coefficient("b", pair.fast, 0.0, 2.0, ZERO) == pytest.approx([0.0])
    assert eval_coefficient("b", pair.averaged, 0.0, 2.0, ZERO) == pytest.approx([-6.0])
    np.testing.assert_array_equal(eval_coefficient("sigma", pair.averaged, 0.0, 0.0, ZERO), [[0.0]])
    assert eval_coefficient("h", pair.averaged, 0.0, 0.0, ZERO, z=1.0) == pytest.approx([0.0])


def test_mark_required_exactly_for_jump():
    sc = builtin_scenario("linear_ou_jump")
    with pytest.raises(ConfigError):
        eval_coefficient("h", sc, 0.0, 1.0, ZERO)
    with pytest.raises(ConfigError):
        eval_coefficient("b", sc, 0.0, 1.0, ZERO, z=1.0)


def test_non_finite_coefficient_names_inputs():
    sc = expression_scenario("log(x)", "0", "0", horizon=1.0)
    with pytest.raises(EvaluationError) as info:
        eval_coefficient("b", sc, 0.0, -1.0, ZERO)
    assert "coefficient b" in str(info.value) and "x=[-1.0]" in str(info.value)
    coef = FunctionCoefficients(drift=lambda t, x, mv, eps: x / 0.0)
    sc = Scenario(coef, JumpMeasureSpec.none(1), InitialLaw.constant(1.0), 1.0)
    with pytest.raises(EvaluationError) as info:
        eval_coefficient("b", sc, 0.5, 1.0, ZERO)
    assert "coefficient b" in str(info.value)


def test_growth_sanity_of_oscillating_factors():
    rng = np.random.default_rng(0)
    x = rng.uniform(-100, 100, size=(10_000, 1))
    pair = builtin_scenario("example_4_1")
    coef = pair.averaged.coefficients
    psi = coef.diffusion(0.0, x, ZERO, None)[:, :, 0]
    phi = coef.jump(0.0, x, ZERO, None, None)
    assert np.all(np.abs(psi) <= np.abs(x))
    assert np.all(np.abs(phi) <= np.abs(x))


def test_expression_form_matches_native_example():
    pair = builtin_scenario("example_4_1", {"eps": 0.1})
    dsl = expression_scenario(
        "(x - x^3) * ((t/eps)/(1 + t/eps)) + mean()",
        "x*sin(log(1+x^2)^2) * ((t/eps)/(2 + t/eps)) + mean()",
        "x*sin(log(1+x^2)^(3/2)) * (1 - exp(-t/eps)) + mean()",
        horizon=10.0, x0=1.0, jump_spec=JumpMeasureSpec.dirac(), eps=0.1, kappa=6, r=18)
    rng = np.random.default_rng(1)
    x = rng.uniform(-3, 3, size=(200, 1))
    mv = MeasureView(rng.normal(size=50))
    for t in (0.0, 0.05, 1.3):
        for name in ("drift", "diffusion"):
            a = getattr(dsl.coefficients, name)(t, x, mv, 0.1)
            b = getattr(pair.fast.coefficients, name)(t, x, mv, 0.1)
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(dsl.coefficients.jump(t, x, mv, None, 0.1),
                                   pair.fast.coefficients.jump(t, x, mv, None, 0.1), rtol=1e-12, atol=1e-12)


def test_remark_drift_uses_odd_cube_root():
    sc = builtin_scenario("remark_2_1_drift")
    assert eval_coefficient("b", sc, 0.0, -8.0, ZERO) == pytest.approx([-512.0 + 2.0])


def test_metadata_constraint_enforced():
    with pytest.raises(ConfigError):
        expression_scenario("x", "0", "0", horizon=1.0, kappa=4, r=6)
    with pytest.raises(ConfigError):
        expression_scenario("x", "0", "0", horizon=1.0, kappa=1.5)
    with pytest.raises(ConfigError):
        expression_scenario("x", "0", "0", horizon=0.0)
    assert expression_scenario("x", "0", "0", horizon=1.0, kappa=4, r=8).r == 8


def test_expression_variable_checks():
    with pytest.raises(ConfigError):
        expression_scenario("z", "0", "0", horizon=1.0)
    with pytest.raises(ConfigError):
        expression_scenario(["x", "x3"], [["0"], ["0"]], ["0", "0"], horizon=1.0, dim_d=2)
    with pytest.raises(ConfigError):
        expression_scenario("x*eps", "0", "0", horizon=1.0)


def test_pair_must_share_structure():
    a = builtin_scenario("example_4_1")
    with pytest.raises(ConfigError):
        AveragedPair(a.fast, builtin_scenario("example_4_1", {"T": 5}).averaged)


def test_initial_law_prefix_property():
    law = InitialLaw.gaussian([0.0, 1.0], [1.0, 2.0])
    big = law.sample(5, 100)
    np.testing.assert_array_equal(law.sample(5, 10), big[:10])
    with pytest.raises(ConfigError):
        InitialLaw.uniform(1.0, 0.0)


def test_linear_moments_against_ode_oracle():
    a, s, c, lam, x0, T = -1.0, 0.5, 0.2, 1.0, 1.0, 1.0
    # first and second moment equations of the linear SDE, integrated numerically
    rhs = lambda t, y: [a * y[0], 2 * a * y[1] + s * s + c * c * lam]  # noqa: E731
    sol = solve_ivp(rhs, (0, T), [x0, 0.0], rtol=1e-12, atol=1e-14)
    mean, var = linear_ou_jump_moments(a, s, c, lam, x0, T)
    assert mean == pytest.approx(sol.y[0, -1], rel=1e-9)
    assert var == pytest.approx(sol.y[1, -1], rel=1e-9)
    assert mean == pytest.approx(math.exp(-1))


def test_digest_is_stable_and_sensitive():
    a = builtin_scenario("linear_ou_jump")
    assert a.digest() == builtin_scenario("linear_ou_jump").digest()
    assert a.digest() != builtin_scenario("linear_ou_jump", {"a": -2}).digest()
