import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robinconv.errors import EvaluationError, HypothesisViolatedError, InvalidArgumentError
from robinconv.mesh import build_interval_mesh
from robinconv.reaction import (
    ExampleReactionParams,
    ReactionSpec,
    check_growth,
    check_liminf_at_zero,
    check_limsup_at_infinity,
    default_grid,
    evaluate,
    evaluate_dx_many,
    evaluate_hat,
    evaluate_many,
    example_reaction,
    linear_reaction,
    power_reaction,
    zero_reaction,
)

LAMBDA1 = 1.7070529755509  # p = 2, (0,1), beta = 1


@pytest.fixture(scope="module")
def grid():
    return default_grid(build_interval_mesh(0, 1, 4))


def ex3():
    return example_reaction(ExampleReactionParams(eta=3, theta=1, q=2, tau=2, r=4, p=3))


def ex2(theta=0.5, tau=1.001):
    return example_reaction(ExampleReactionParams(eta=3, theta=theta, q=1.2, tau=tau, r=3, p=2))


def test_params_validation():
    with pytest.raises(InvalidArgumentError):
        ExampleReactionParams(3, 0.5, q=2.5, tau=1.5, r=3, p=2)
    with pytest.raises(InvalidArgumentError):
        ExampleReactionParams(3, 0.5, q=1.5, tau=1.5, r=2, p=2)
    params = ExampleReactionParams(3, 0.5, 1.5, 1.5, 3, 2)
    params.check_against(1.7)
    with pytest.raises(HypothesisViolatedError):
        params.check_against(3.5)


def test_evaluate_truncates_nonpositive_x():
    weird = ReactionSpec(eval=lambda z, x, y: 5.0 + x ** 2, p=2)
    assert evaluate(weird, [0.3], -2.0, [1.0]) == 0
    assert evaluate(weird, [0.3], 0.0, [1.0]) == 0
    assert evaluate(ex3(), [0.3], -2.0, [4.0]) == 0


def test_example_branches_meet_at_one():
    spec = ex3()
    y = np.array([2.0])
    left = evaluate(spec, [0.5], 1.0, y)
    right = evaluate(spec, [0.5], 1.0 + 1e-12, y)
    assert left == pytest.approx(7.0, rel=1e-12)
    assert right == pytest.approx(7.0, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(eta=st.floats(0.1, 10), theta=st.floats(0.1, 10), q=st.floats(1.05, 2.95),
       tau=st.floats(1.05, 2.95), r=st.floats(3.05, 6), ymag=st.floats(0, 100))
def test_example_is_continuous_at_one(eta, theta, q, tau, r, ymag):
    spec = example_reaction(ExampleReactionParams(eta, theta, q, tau, r, 3.0))
    z = np.zeros((2, 1))
    y = np.full((2, 1), ymag)
    v = evaluate_many(spec, z, np.array([1.0, np.nextafter(1.0, 2.0)]), y)
    assert v[1] == pytest.approx(v[0], rel=1e-12, abs=1e-12)


def test_evaluate_hat_examples():
    assert evaluate_hat(ex3(), [0.2], -1.0, [0.0]) == 0
    assert evaluate_hat(zero_reaction(3), [0.2], 2.0, [0.0]) == pytest.approx(4.0)
    assert evaluate_hat(ex3(), [0.2], 1.0, [0.0]) == pytest.approx(3.0 + 1.0)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-50, 50), ymag=st.floats(0, 50))
def test_shift_identity(x, ymag):
    spec = ex3()
    shift = max(x, 0.0) ** 2
    assert evaluate_hat(spec, [0.1], x, [ymag]) - evaluate(spec, [0.1], x, [ymag]) == \
        pytest.approx(shift, rel=1e-12, abs=1e-300)


@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_non_finite_value_raises_with_point():
    spec = ReactionSpec(eval=lambda z, x, y: np.log(x - 1.0), p=2)
    with pytest.raises(EvaluationError) as info:
        evaluate(spec, [0.0], 0.5, [0.0])
    assert info.value.point is not None


def test_scalar_callables_are_looped():
    spec = ReactionSpec(eval=lambda z, x, y: float(x * z[0] + y[0]), p=2, vectorized=False)
    z = np.array([[1.0], [2.0]])
    out = evaluate_many(spec, z, np.array([3.0, -1.0]), np.array([[1.0], [1.0]]))
    np.testing.assert_allclose(out, [4.0, 0.0])


def test_dx_fallback_matches_analytic():
    analytic = ex3()
    plain = ReactionSpec(eval=analytic.eval, p=3)
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.uniform(0.05, 0.95, 20), rng.uniform(1.05, 5, 20)])
    z = np.zeros((40, 1))
    y = rng.normal(size=(40, 1))
    np.testing.assert_allclose(evaluate_dx_many(plain, z, x, y),
                               evaluate_dx_many(analytic, z, x, y), rtol=1e-6)


def test_ratio_limits_of_example():
    spec = ex2()
    z = np.zeros((1, 1))
    y = np.array([[0.7]])
    lo = evaluate_many(spec, z, np.array([1e-6]), y)[0] / 1e-6
    hi = evaluate_many(spec, z, np.array([1e6]), y)[0] / 1e6
    assert lo == pytest.approx(3.0, rel=0.02)
    assert hi == pytest.approx(0.5, rel=0.02)


# ------------------------------------------------------------------ audits

def ex3_near_one():
    return example_reaction(ExampleReactionParams(eta=3, theta=0.5, q=2, tau=1.001, r=4, p=3))


def test_growth_passes_for_example(grid):
    for spec in (ex2(), ex3_near_one()):
        rep = check_growth(spec, grid)
        assert rep.passed, rep.summary()
        assert np.ptp(rep.sampled_bound) == 0  # no z-dependence


def test_growth_fails_for_superlinear_power(grid):
    rep = check_growth(power_reaction(2.0, 2), grid)
    assert not rep.passed
    assert rep.witness is not None
    assert rep.details["tail_ratio"].max() > 10


def test_growth_passes_for_zero(grid):
    rep = check_growth(zero_reaction(2), grid)
    assert rep.passed
    assert np.all(rep.sampled_bound == 0)


@pytest.mark.parametrize("spec", [ex2(tau=1.5), ex3()], ids=["p2-tau1.5", "p3-tau2"])
def test_growth_fails_for_generic_tau(spec, grid):
    # x^(tau-1) |y|^(p-1) is not bounded by a(1 + x^(p-1) + |y|^(p-1)) jointly
    rep = check_growth(spec, grid)
    assert not rep.passed
    assert rep.witness[1] > 1 and np.linalg.norm(rep.witness[2]) > 1


def test_limsup_example(grid):
    lam = 1.0
    rep = check_limsup_at_infinity(ex2(theta=lam / 2), lam, grid)
    assert rep.passed
    assert rep.sampled_bound == pytest.approx(np.full(len(grid.z), 0.5), rel=0.02)


def test_limsup_fails_above_lambda(grid):
    rep = check_limsup_at_infinity(linear_reaction(2 * LAMBDA1, 2), LAMBDA1, grid)
    assert not rep.passed
    assert rep.witness[1] == grid.x[-1]


def test_limsup_zero_reaction(grid):
    assert check_limsup_at_infinity(zero_reaction(2), LAMBDA1, grid).passed


def test_liminf_example(grid):
    rep = check_liminf_at_zero(ex2(), LAMBDA1, 10.0, grid)
    assert rep.passed
    assert rep.sampled_bound == pytest.approx(np.full(len(grid.z), 3.0), rel=0.02)


def test_liminf_fails_below_lambda(grid):
    rep = check_liminf_at_zero(linear_reaction(0.5 * LAMBDA1, 2), LAMBDA1, 10.0, grid)
    assert not rep.passed
    assert rep.witness is not None


def test_liminf_passes_above_lambda(grid):
    assert check_liminf_at_zero(linear_reaction(LAMBDA1 + 1, 2), LAMBDA1, 10.0, grid).passed


def test_liminf_zero_reaction_fails_with_witness(grid):
    rep = check_liminf_at_zero(zero_reaction(2), LAMBDA1, 10.0, grid)
    assert not rep.passed
    assert rep.witness[1] == grid.x[0]
    assert "fail" in rep.summary()


def test_default_grid_shape():
    g = default_grid(build_interval_mesh(0, 1, 2))
    assert g.x[0] == pytest.approx(1e-6) and g.x[-1] == pytest.approx(1e6)
    assert len(g.x) == 12 * 8 + 1
    assert g.y_mag[0] == 0 and g.y_mag[-1] == pytest.approx(1e3)
