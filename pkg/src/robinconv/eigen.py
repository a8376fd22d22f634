"""Principal Robin eigenpair by Rayleigh-quotient minimization, plus the
coercivity margin of the eigenvalue-shifted energy.

Both minimizations are normalized gradient descent with Armijo backtracking.
The search direction is the gradient in the Sobolev metric of the current
iterate (the second variation of ``||Du||_p^p + ||u||_p^p``), which keeps
the iteration count independent of the mesh size.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    ProblemSpec,
    _power_map_dx,
    a_form,
    a_jacobian,
    a_vector,
    check_field,
    element_gradient,
    lp_norm,
    power_map,
    robin_vector,
    sobolev_norm,
)
from .errors import (
    DegenerateEigenfunctionError,
    HypothesisViolatedError,
    InvalidArgumentError,
    MarginNonpositiveError,
)

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass
class EigenOptions:
    tol: Optional[float] = None  # 1e-8 for p = 2, 1e-6 otherwise
    max_iter: int = 100_000
    armijo_factor: float = 0.5
    armijo_slope: float = 1e-4
    armijo_max_halvings: int = 60
    initial: Optional[np.ndarray] = None

    def resolved_tol(self, p: float) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-8 if p == 2 else 1e-6


@dataclass
class EigenPair:
    lambda1: float
    u1: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool = True


@dataclass
class CoercivityEstimate:
    theta: np.ndarray
    c0: float
    minimizer: np.ndarray
    lambda1: float
    starts: int = 1


def rayleigh_quotient(spec: ProblemSpec, u) -> float:
    u = check_field(spec.mesh, u)
    denom = lp_norm(spec.mesh, u, spec.p) ** spec.p
    if denom == 0.0:
        raise InvalidArgumentError("Rayleigh quotient of the zero field")
    return (a_form(spec, u, u) + float(robin_vector(spec, u) @ u)) / denom


def eigen_residual(spec: ProblemSpec, u, lam: float) -> np.ndarray:
    """Strong-form discrete residual ``M^-1 (A u + Robin - lam psi_p(u))``."""
    mesh = spec.mesh
    r = a_vector(spec, u) + robin_vector(spec, u) - lam * mesh.lumped_mass * power_map(u, spec.p)
    return r / mesh.lumped_mass


def sobolev_metric(spec: ProblemSpec, u) -> sp.csr_matrix:
    """SPD matrix used to precondition the descent directions."""
    mesh = spec.mesh
    p = spec.p
    floor = 1e-12 * max(1.0, float(np.max(np.abs(u))))
    scale = _power_map_dx(np.maximum(np.abs(u), floor), p)
    diag = (mesh.lumped_mass + mesh.boundary_weights * spec.beta) * scale
    if p > 2:
        # lift the flux Hessian where the gradient vanishes
        g = element_gradient(mesh, u)
        gscale = float(np.sqrt(np.max(np.sum(g * g, axis=1)))) if g.size else 0.0
        K = a_jacobian(ProblemSpec(p, mesh, spec.beta, max(spec.delta, 1e-3 * max(gscale, 1.0))), u)
    else:
        K = a_jacobian(spec, u)
    return (K + sp.diags(diag)).tocsc()


def _normalize(mesh, u, p):
    return u / lp_norm(mesh, u, p)


def _descend(objective, gradient_residual, metric, u0, normalize, tol, opts):
    """Shared normalized descent loop.

    ``gradient_residual(u, q)`` returns ``(grad, weak, resid)``: the
    objective gradient, the weak residual that the metric is applied to, and
    the scaled residual whose max-norm is compared to ``tol``.
    """
    u = normalize(u0)
    q = objective(u)
    it = 0
    grad, weak, resid = gradient_residual(u, q)
    res = float(np.max(np.abs(resid)))
    best = (res, u, q)
    while res > tol and it < opts.max_iter:
        d = -spla.spsolve(metric(u), weak)
        slope = float(grad @ d)
        if slope >= 0:
            d, slope = -grad, -float(grad @ grad)
        t = 1.0
        for _ in range(opts.armijo_max_halvings):
            cand = normalize(u + t * d)
            qc = objective(cand)
            if qc <= q + opts.armijo_slope * t * slope + 8 * _EPS * abs(q):
                break
            t *= opts.armijo_factor
        else:
            log.debug("line search stalled at iteration %d (residual %.3e)", it, res)
            break
        u, q = cand, qc
        it += 1
        grad, weak, resid = gradient_residual(u, q)
        res = float(np.max(np.abs(resid)))
        if res < best[0]:
            best = (res, u, q)
    return best[1], best[2], best[0], it


def principal_eigenpair(spec: ProblemSpec, opts: Optional[EigenOptions] = None) -> EigenPair:
    """Minimize the Rayleigh quotient over ``||u||_p = 1``; start from ``u = 1``."""
    opts = EigenOptions() if opts is None else opts
    mesh, p = spec.mesh, spec.p
    tol = opts.resolved_tol(p)
    u0 = np.ones(mesh.n_nodes) if opts.initial is None else check_field(mesh, opts.initial)

    def gradient_residual(u, lam):
        r = a_vector(spec, u) + robin_vector(spec, u) - lam * mesh.lumped_mass * power_map(u, p)
        return p * r, r, r / mesh.lumped_mass

    u, lam, res, it = _descend(
        lambda v: rayleigh_quotient(spec, v),
        gradient_residual,
        lambda v: sobolev_metric(spec, v),
        u0,
        lambda v: _normalize(mesh, v, p),
        tol,
        opts,
    )
    if u.sum() < 0:
        u = -u
    pair = EigenPair(float(lam), u, res, it, converged=res <= tol)
    if not pair.converged:
        warnings.warn(f"eigen-solve stopped at residual {res:.3e} > tol {tol:.1e} "
                      f"after {it} iterations", RuntimeWarning, stacklevel=2)
    if np.any(u < 0):
        bad = np.flatnonzero(u < 0).tolist()
        raise DegenerateEigenfunctionError(
            f"eigenfunction changes sign at nodes {bad[:10]}", eigenpair=pair)
    return pair


# ------------------------------------------------------------- coercivity

def coercivity_form(spec: ProblemSpec, theta, u) -> float:
    """``||Du||_p^p + int beta |u|^p dsigma - int theta |u|^p dz``."""
    mesh = spec.mesh
    u = check_field(mesh, u)
    return (a_form(spec, u, u) + float(robin_vector(spec, u) @ u)
            - float(np.sum(mesh.lumped_mass * theta * np.abs(u) ** spec.p)))


def coercivity_margin(spec: ProblemSpec, theta, opts: Optional[EigenOptions] = None,
                      starts: int = 8, seed: int = 0,
                      eigen: Optional[EigenPair] = None) -> CoercivityEstimate:
    """Smallest value of :func:`coercivity_form` on the Sobolev unit sphere.

    ``theta`` must satisfy ``theta <= lambda1`` at every node and differ from
    it somewhere. The minimum is taken over ``starts`` descents: ``u = 1``
    plus seeded random fields; ties go to the lower start index.
    """
    opts = EigenOptions() if opts is None else opts
    mesh, p = spec.mesh, spec.p
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0:
        theta = np.full(mesh.n_nodes, float(theta))
    theta = check_field(mesh, theta)
    if eigen is None:
        eigen = principal_eigenpair(spec, opts)
    lam = eigen.lambda1
    above = np.flatnonzero(theta > lam)
    if above.size:
        raise HypothesisViolatedError(
            f"theta exceeds lambda1={lam:.12g} at nodes {above.tolist()[:20]}", nodes=above)
    if not np.any(theta < lam * (1 - 1e-12) - 1e-14):
        raise HypothesisViolatedError("theta coincides with lambda1 everywhere",
                                      nodes=range(mesh.n_nodes))
    tol = opts.resolved_tol(p)

    def sob_p(u):
        return sobolev_norm(mesh, u, p) ** p

    def objective(u):
        return coercivity_form(spec, theta, u) / sob_p(u)

    def gradient_residual(u, q):
        dF = a_vector(spec, u) + robin_vector(spec, u) - mesh.lumped_mass * theta * power_map(u, p)
        dS = a_vector(ProblemSpec(p, mesh, spec.beta, 0.0), u) + mesh.lumped_mass * power_map(u, p)
        r = dF - q * dS
        return p * r / sob_p(u), r, r / mesh.lumped_mass

    rng = np.random.default_rng(seed)
    best = None
    for k in range(starts):
        u0 = np.ones(mesh.n_nodes) if k == 0 else rng.standard_normal(mesh.n_nodes)
        u, q, res, it = _descend(
            objective, gradient_residual,
            lambda v: sobolev_metric(spec, v), u0,
            lambda v: v / sob_p(v) ** (1.0 / p), tol, opts,
        )
        log.debug("coercivity start %d: c0=%.12g residual=%.3e iterations=%d", k, q, res, it)
        if best is None or q < best[0]:
            best = (q, u)
    c0, u = best
    est = CoercivityEstimate(theta, float(c0), u, lam, starts)
    if not c0 > 0:
        raise MarginNonpositiveError(
            f"coercivity margin {c0:.3e} is not positive; theta too close to lambda1", estimate=est)
    return est
