"""P1 weak forms for the Robin p-Laplacian and the perturbed operator.

Zero-order terms (power map, reaction, source, boundary) use the vertex rule,
so ``|u|^(p-2) u`` and the shift ``(u+)^(p-1)`` cancel node by node for
nonnegative fields. The flux uses the exact elementwise P1 gradient.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError
from .mesh import Mesh
from .reaction import ReactionSpec, evaluate_dx_many, evaluate_many

DEFAULT_DELTA_SUBQUADRATIC = 1e-8


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Left-hand side data: exponent, mesh, Robin coefficient, flux regularization.

    ``beta`` is a nodal array (only boundary entries matter) or a scalar.
    ``delta=None`` picks 1e-8 for p < 2 and 0 otherwise.
    """

    p: float
    mesh: Mesh
    beta: np.ndarray
    delta: Optional[float] = None

    def __post_init__(self):
        if not self.p > 1:
            raise InvalidArgumentError(f"p must exceed 1, got {self.p}")
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim == 0:
            beta = np.full(self.mesh.n_nodes, float(beta))
        if beta.shape != (self.mesh.n_nodes,):
            raise InvalidArgumentError("beta must hold one value per mesh node")
        bad = np.flatnonzero(self.mesh.is_boundary & ~(beta >= 0))
        if bad.size:
            raise InvalidArgumentError(f"beta must be nonnegative on the boundary; nodes {bad.tolist()}")
        beta = np.where(self.mesh.is_boundary, beta, 0.0)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        delta = self.delta
        if delta is None:
            delta = DEFAULT_DELTA_SUBQUADRATIC if self.p < 2 else 0.0
        if not delta >= 0:
            raise InvalidArgumentError(f"delta must be >= 0, got {delta}")
        object.__setattr__(self, "delta", float(delta))

    @property
    def neumann(self) -> bool:
        return not np.any(self.beta[self.mesh.is_boundary] > 0)


@dataclass(frozen=True, eq=False)
class AuxiliaryProblem:
    problem: ProblemSpec
    reaction: ReactionSpec
    epsilon: float
    e: np.ndarray

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise InvalidArgumentError(f"epsilon must be >= 0, got {self.epsilon}")
        e = np.asarray(self.e, dtype=float)
        if e.ndim == 0:
            e = np.full(self.problem.mesh.n_nodes, float(e))
        e = check_field(self.problem.mesh, e)
        if not np.all(e > 0):
            raise InvalidArgumentError("e must be strictly positive at every node")
        object.__setattr__(self, "e", e)
        if abs(self.reaction.p - self.problem.p) > 0:
            raise InvalidArgumentError(
                f"reaction built for p={self.reaction.p}, problem has p={self.problem.p}")

    def with_epsilon(self, epsilon: float) -> "AuxiliaryProblem":
        return AuxiliaryProblem(self.problem, self.reaction, epsilon, self.e)


def check_field(mesh: Mesh, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise InvalidArgumentError(f"field has shape {u.shape}, mesh has {mesh.n_nodes} nodes")
    if not np.all(np.isfinite(u)):
        raise InvalidArgumentError("field values must be finite")
    return u


def power_map(u, p):
    """``|u|^(p-2) u``."""
    return np.sign(u) * np.abs(u) ** (p - 1)


def _power_map_dx(u, p):
    a = np.abs(u)
    if p < 2:
        safe = np.where(a > 0, a, 1.0)
        return np.where(a > 0, (p - 1) * safe ** (p - 2), 0.0)
    return (p - 1) * a ** (p - 2)


# ------------------------------------------------------------------ gradients

def element_gradient(mesh: Mesh, u) -> np.ndarray:
    """Exact gradient of the P1 interpolant, ``(n_elements, dim)``."""
    u = check_field(mesh, u)
    return np.einsum("ead,ea->ed", mesh.basis_gradients, u[mesh.elements])


def _flux_coefficient(g, p, delta):
    """``kappa = (|g|^2 + delta^2)^((p-2)/2)`` with 0 where that is singular."""
    r2 = np.sum(g * g, axis=1) + delta * delta
    if p >= 2:
        return r2 ** ((p - 2) / 2), r2
    safe = np.where(r2 > 0, r2, 1.0)
    return np.where(r2 > 0, safe ** ((p - 2) / 2), 0.0), r2


def _scatter(mesh, local):
    """Sum ``(n_elements, k)`` local contributions into a nodal vector."""
    return np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


# ---------------------------------------------------------------- vectors

def a_vector(spec: ProblemSpec, u) -> np.ndarray:
    """Nodal vector ``<A(u), phi_i>``."""
    mesh = spec.mesh
    g = element_gradient(mesh, u)
    kappa, _ = _flux_coefficient(g, spec.p, spec.delta)
    flux = (mesh.element_measures * kappa)[:, None] * g
    local = np.einsum("ead,ed->ea", mesh.basis_gradients, flux)
    return _scatter(mesh, local)


def robin_vector(spec: ProblemSpec, u) -> np.ndarray:
    u = check_field(spec.mesh, u)
    return spec.mesh.boundary_weights * spec.beta * power_map(u, spec.p)


def psi_vector(spec: ProblemSpec, u) -> np.ndarray:
    u = check_field(spec.mesh, u)
    return spec.mesh.lumped_mass * power_map(u, spec.p)


def a_form(spec: ProblemSpec, u, h) -> float:
    """``int |Du|^(p-2) (Du, Dh) dz`` elementwise."""
    mesh = spec.mesh
    gu = element_gradient(mesh, u)
    gh = element_gradient(mesh, h)
    kappa, _ = _flux_coefficient(gu, spec.p, spec.delta)
    return float(np.sum(mesh.element_measures * kappa * np.sum(gu * gh, axis=1)))


def robin_form(spec: ProblemSpec, u, h) -> float:
    return float(robin_vector(spec, u) @ check_field(spec.mesh, h))


def psi_p_form(spec: ProblemSpec, u, h) -> float:
    return float(psi_vector(spec, u) @ check_field(spec.mesh, h))


def lp_norm(mesh: Mesh, u, p: float) -> float:
    if p < 1:
        raise InvalidArgumentError(f"need p >= 1, got {p}")
    u = check_field(mesh, u)
    return float(np.sum(mesh.lumped_mass * np.abs(u) ** p) ** (1.0 / p))


def gradient_lp_norm(mesh: Mesh, u, p: float) -> float:
    g = element_gradient(mesh, u)
    return float(np.sum(mesh.element_measures * np.sum(g * g, axis=1) ** (p / 2)) ** (1.0 / p))


def sobolev_norm(mesh: Mesh, u, p: float) -> float:
    """``(||u||_p^p + ||Du||_p^p)^(1/p)``."""
    return (lp_norm(mesh, u, p) ** p + gradient_lp_norm(mesh, u, p) ** p) ** (1.0 / p)


# ------------------------------------------------------- perturbed operator

def _quadrature_points(mesh, u, frozen_y):
    k = mesh.dim + 1
    z = mesh.nodes[mesh.elements].reshape(-1, mesh.dim)
    x = u[mesh.elements].ravel()
    y = np.repeat(np.asarray(frozen_y, dtype=float), k, axis=0)
    w = np.repeat(mesh.element_measures / k, k)
    return z, x, y, w


def _check_frozen(mesh, frozen_y):
    frozen_y = np.asarray(frozen_y, dtype=float)
    if frozen_y.shape != (mesh.n_elements, mesh.dim):
        raise InvalidArgumentError("frozen_y needs one gradient vector per element")
    return frozen_y


def v_residual(aux: AuxiliaryProblem, u, frozen_y, shifted: bool = True) -> np.ndarray:
    """Nodal residual ``<V(u), phi_i>`` with the convection argument frozen.

    With ``shifted=False`` the plain residual of ``-Delta_p u - f - eps e``
    (Robin terms included) is returned instead.
    """
    spec = aux.problem
    mesh = spec.mesh
    u = check_field(mesh, u)
    frozen_y = _check_frozen(mesh, frozen_y)
    z, x, y, w = _quadrature_points(mesh, u, frozen_y)
    f = evaluate_many(aux.reaction, z, x, y)
    if shifted:
        # (psi - shift) is exactly 0 for x >= 0, so this equals -f there.
        zero_order = (power_map(x, spec.p) - np.maximum(x, 0.0) ** (spec.p - 1)) - f
    else:
        zero_order = -f
    r = a_vector(spec, u) + robin_vector(spec, u)
    r = r + np.bincount(mesh.elements.ravel(), weights=w * zero_order, minlength=mesh.n_nodes)
    return r - aux.epsilon * mesh.lumped_mass * aux.e


def true_residual(aux: AuxiliaryProblem, u, shifted: bool = True) -> np.ndarray:
    return v_residual(aux, u, element_gradient(aux.problem.mesh, u), shifted=shifted)


def _a_jacobian_triplets(spec, u):
    mesh = spec.mesh
    g = element_gradient(mesh, u)
    p = spec.p
    kappa, r2 = _flux_coefficient(g, p, spec.delta)
    safe = np.where(r2 > 0, r2, 1.0)
    outer = np.where(r2 > 0, (p - 2) / safe, 0.0)[:, None, None] * g[:, :, None] * g[:, None, :]
    D = kappa[:, None, None] * (np.eye(mesh.dim)[None] + outer)
    G = mesh.basis_gradients
    local = mesh.element_measures[:, None, None] * np.einsum("ead,edc,ebc->eab", G, D, G)
    k = mesh.dim + 1
    rows = np.repeat(mesh.elements, k, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, k)).ravel()
    return local.ravel(), rows, cols


def _assemble(n, data, rows, cols):
    # Explicit zeros are kept, so the pattern is the full node adjacency.
    return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def a_jacobian(spec: ProblemSpec, u) -> sp.csr_matrix:
    """Derivative of :func:`a_vector` using the regularized flux magnitude."""
    return _assemble(spec.mesh.n_nodes, *_a_jacobian_triplets(spec, u))


def v_jacobian(aux: AuxiliaryProblem, u, frozen_y) -> sp.csr_matrix:
    """Derivative of :func:`v_residual` in u at fixed ``frozen_y``."""
    spec = aux.problem
    mesh = spec.mesh
    p = spec.p
    if p < 2 and spec.delta == 0:
        warnings.warn("p < 2 with delta = 0: Jacobian is singular at zero gradient",
                      RuntimeWarning, stacklevel=2)
    u = check_field(mesh, u)
    frozen_y = _check_frozen(mesh, frozen_y)
    z, x, y, w = _quadrature_points(mesh, u, frozen_y)
    fdx = evaluate_dx_many(aux.reaction, z, x, y)
    pos = x > 0
    safe = np.where(pos, x, 1.0)
    shift_dx = np.where(pos, (p - 1) * safe ** (p - 2), 0.0)
    local = w * ((_power_map_dx(x, p) - shift_dx) - fdx)
    diag = np.bincount(mesh.elements.ravel(), weights=local, minlength=mesh.n_nodes)
    diag = diag + mesh.boundary_weights * spec.beta * _power_map_dx(u, p)
    data, rows, cols = _a_jacobian_triplets(spec, u)
    idx = np.arange(mesh.n_nodes)
    return _assemble(mesh.n_nodes, np.concatenate([data, diag]),
                     np.concatenate([rows, idx]), np.concatenate([cols, idx]))
