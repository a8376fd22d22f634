import dataclasses

import numpy as np
import pytest
import scipy.linalg

from robinconv.assembly import ProblemSpec, lp_norm, sobolev_norm
from robinconv.eigen import (
    EigenOptions,
    coercivity_form,
    coercivity_margin,
    eigen_residual,
    principal_eigenpair,
    rayleigh_quotient,
)
from robinconv.errors import (
    DegenerateEigenfunctionError,
    HypothesisViolatedError,
    InvalidArgumentError,
    MarginNonpositiveError,
)
from robinconv.mesh import build_interval_mesh, build_rectangle_mesh

from oracles import coercivity_c0_p2, dense_p1_matrices, robin_lambda1_bisection


@pytest.fixture(scope="module")
def line():
    return build_interval_mesh(0, 1, 128)


@pytest.fixture(scope="module")
def square():
    return build_rectangle_mesh(1, 1, 12, 12)


@pytest.fixture(scope="module")
def robin_pair(line):
    return principal_eigenpair(ProblemSpec(2, line, 1.0))


def test_rayleigh_examples(line):
    one = np.ones(line.n_nodes)
    assert rayleigh_quotient(ProblemSpec(2, line, 0.0), one) == 0
    assert rayleigh_quotient(ProblemSpec(2, line, 1.0), one) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(InvalidArgumentError):
        rayleigh_quotient(ProblemSpec(2, line, 1.0), 0 * one)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_rayleigh_scale_invariance(p, line):
    rng = np.random.default_rng(0)
    spec = ProblemSpec(p, line, 1.0, delta=0.0)
    u = rng.standard_normal(line.n_nodes)
    for c in (-3.0, 0.01, 250.0):
        assert rayleigh_quotient(spec, c * u) == pytest.approx(rayleigh_quotient(spec, u), rel=1e-12)


@pytest.mark.parametrize("p", [2.0, 3.0])
@pytest.mark.parametrize("which", ["line", "square"])
def test_neumann_eigenpair(p, which, request):
    mesh = request.getfixturevalue(which)
    pair = principal_eigenpair(ProblemSpec(p, mesh, 0.0))
    assert abs(pair.lambda1) <= 1e-12
    np.testing.assert_allclose(pair.u1, mesh.volume ** (-1 / p), rtol=1e-12)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_neumann_from_random_start(p, line):
    rng = np.random.default_rng(1)
    opts = EigenOptions(initial=1.0 + 0.3 * rng.random(line.n_nodes))
    pair = principal_eigenpair(ProblemSpec(p, line, 0.0), opts)
    assert pair.converged
    assert abs(pair.lambda1) <= 1e-8
    # for p > 2 the quotient is flat near constants, so the field lags the residual
    assert np.ptp(pair.u1) / pair.u1.mean() <= (1e-5 if p == 2 else 1e-3)


def test_robin_eigenvalue_matches_oracle(robin_pair):
    assert robin_pair.lambda1 == pytest.approx(robin_lambda1_bisection(), rel=1e-4)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
@pytest.mark.parametrize("which", ["line", "square"])
def test_eigenpair_invariants(p, which, request):
    mesh = request.getfixturevalue(which)
    spec = ProblemSpec(p, mesh, 1.0)
    pair = principal_eigenpair(spec)
    tol = EigenOptions().resolved_tol(p)
    assert pair.converged
    assert abs(lp_norm(mesh, pair.u1, p) - 1) <= 1e-10
    assert np.all(pair.u1 > 0)
    assert pair.lambda1 > 0
    assert np.abs(eigen_residual(spec, pair.u1, pair.lambda1)).max() <= tol
    assert pair.lambda1 == pytest.approx(rayleigh_quotient(spec, pair.u1), rel=1e-14)


def test_minimality_against_random_fields(line, robin_pair):
    rng = np.random.default_rng(2)
    spec = ProblemSpec(2, line, 1.0)
    x = line.nodes[:, 0]
    for k in range(1000):
        if k % 2:
            v = rng.standard_normal(line.n_nodes)
        else:
            c = rng.standard_normal(4)
            v = sum(c[j] * np.cos(j * np.pi * x) for j in range(4))
            if not np.any(v):
                continue
        assert robin_pair.lambda1 <= rayleigh_quotient(spec, v) + 1e-8


def test_start_scaling_does_not_matter(line, robin_pair):
    spec = ProblemSpec(2, line, 1.0)
    for c in (1e-3, 7.0, 1e4):
        pair = principal_eigenpair(spec, EigenOptions(initial=np.full(line.n_nodes, c)))
        np.testing.assert_allclose(pair.u1, robin_pair.u1, atol=1e-7)


def test_eigenvalue_monotone_in_beta(line):
    values = [principal_eigenpair(ProblemSpec(2, line, b)).lambda1 for b in (0, 0.1, 0.5, 1, 4, 20)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    beta = np.zeros(line.n_nodes)
    beta[0] = 1.0
    one_sided = principal_eigenpair(ProblemSpec(2, line, beta)).lambda1
    assert values[0] <= one_sided <= values[3]


def test_sign_changing_limit_is_rejected(line):
    # starting on the second eigenvector is already a critical point
    K, M, R = dense_p1_matrices(128)
    _, vecs = scipy.linalg.eigh(K + R, M)
    with pytest.raises(DegenerateEigenfunctionError) as info:
        principal_eigenpair(ProblemSpec(2, line, 1.0), EigenOptions(initial=vecs[:, 1]))
    assert info.value.eigenpair.iterations == 0


def test_iteration_cap_warns_and_flags(line):
    with pytest.warns(RuntimeWarning, match="stopped"):
        pair = principal_eigenpair(ProblemSpec(3, line, 1.0), EigenOptions(max_iter=1))
    assert not pair.converged


# ------------------------------------------------------------- coercivity

def test_margin_positive_and_matches_dense_oracle(line, robin_pair):
    spec = ProblemSpec(2, line, 1.0)
    theta = robin_pair.lambda1 - 0.1
    est = coercivity_margin(spec, theta, eigen=robin_pair)
    assert est.c0 > 0
    assert est.c0 == pytest.approx(coercivity_c0_p2(128, theta), rel=1e-6)
    u = est.minimizer
    assert coercivity_form(spec, est.theta, u) / sobolev_norm(line, u, 2) ** 2 == \
        pytest.approx(est.c0, rel=1e-12)


def test_margin_with_zero_theta(line, robin_pair):
    spec = ProblemSpec(2, line, 1.0)
    est = coercivity_margin(spec, 0.0, eigen=robin_pair)
    assert est.c0 > 0
    u1 = robin_pair.u1
    value = coercivity_form(spec, np.zeros(line.n_nodes), u1) / sobolev_norm(line, u1, 2) ** 2
    expected = robin_pair.lambda1 * lp_norm(line, u1, 2) ** 2 / sobolev_norm(line, u1, 2) ** 2
    assert value == pytest.approx(expected, rel=1e-8)
    assert value >= est.c0


def test_margin_p3(line):
    spec = ProblemSpec(3, line, 1.0)
    pair = principal_eigenpair(spec)
    est = coercivity_margin(spec, pair.lambda1 - 0.2, eigen=pair, starts=4)
    assert est.c0 > 0


def test_margin_rejects_theta_above_lambda(line, robin_pair):
    theta = np.full(line.n_nodes, robin_pair.lambda1 - 0.5)
    theta[17] = robin_pair.lambda1 + 0.01
    with pytest.raises(HypothesisViolatedError) as info:
        coercivity_margin(ProblemSpec(2, line, 1.0), theta, eigen=robin_pair)
    assert list(info.value.nodes) == [17]


def test_margin_rejects_theta_equal_lambda(line, robin_pair):
    with pytest.raises(HypothesisViolatedError):
        coercivity_margin(ProblemSpec(2, line, 1.0), robin_pair.lambda1, eigen=robin_pair)


def test_margin_nonpositive_reported(line, robin_pair):
    # an overestimated eigenvalue lets theta pass the gate but exceed the true one
    loose = dataclasses.replace(robin_pair, lambda1=robin_pair.lambda1 + 0.01)
    with pytest.raises(MarginNonpositiveError) as info:
        coercivity_margin(ProblemSpec(2, line, 1.0), loose.lambda1 - 0.005, eigen=loose, starts=1)
    assert info.value.estimate.c0 < 0


def test_margin_is_deterministic(line, robin_pair):
    spec = ProblemSpec(2, line, 1.0)
    a = coercivity_margin(spec, 1.0, eigen=robin_pair, starts=3, seed=5)
    b = coercivity_margin(spec, 1.0, eigen=robin_pair, starts=3, seed=5)
    assert a.c0 == b.c0
    np.testing.assert_array_equal(a.minimizer, b.minimizer)
