"""Picone density, its integral, and the non-collapse test.

The density is evaluated at one point per element (midpoint / barycenter)
from interpolated values and the elementwise gradients. Its nonnegativity is
a pointwise algebraic fact (Young's inequality), so it holds exactly at any
choice of points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import ProblemSpec, check_field, element_gradient
from .errors import HypothesisViolatedError, PositivityRequiredError

HEALTHY = "HEALTHY"
COLLAPSE_SUSPECTED = "COLLAPSE-SUSPECTED"


@dataclass
class PiconeReport:
    integral: float
    min_pointwise: float
    n_points: int
    xi_star: float
    collapse_flag: str
    max_u: float = float("nan")
    collapse_floor: float = float("nan")
    wedge: float = float("nan")

    def summary(self) -> str:
        return (f"verdict={self.collapse_flag} xi_star={self.xi_star:.12g} "
                f"picone_integral={self.integral:.12g} min_density={self.min_pointwise:.6g} "
                f"points={self.n_points} max_u={self.max_u:.6g}")


def picone_density_at(p, u1, u, g1, g):
    """Density from point values ``u1, u`` (shape ``(m,)``) and gradients
    ``g1, g`` (shape ``(m, dim)``)."""
    t = u1 / u
    n1 = np.sum(g1 * g1, axis=1)
    n = np.sum(g * g, axis=1)
    gn = np.sqrt(n)
    # |g|^(p-2) g with 0 at g = 0
    scale = np.where(gn > 0, np.where(gn > 0, gn, 1.0) ** (p - 2), 0.0)
    flux = scale[:, None] * g
    dq = p * t[:, None] ** (p - 1) * g1 - (p - 1) * t[:, None] ** p * g
    return n1 ** (p / 2) - np.sum(flux * dq, axis=1)


def _positive(mesh, u, floor, name):
    u = check_field(mesh, u)
    bad = np.flatnonzero(u <= floor)
    if bad.size:
        raise PositivityRequiredError(
            f"{name} must exceed {floor:g} at every node; fails at {bad.tolist()[:10]}", nodes=bad)
    return u


def picone_density(spec: ProblemSpec, u1, u, floor: float = 1e-12) -> np.ndarray:
    """Density ``|Du1|^p - |Du|^(p-2) (Du, D(u1^p / u^(p-1)))`` per element."""
    mesh = spec.mesh
    u1 = check_field(mesh, u1)
    u = _positive(mesh, u, floor, "u")
    v1 = u1[mesh.elements].mean(axis=1)
    v = u[mesh.elements].mean(axis=1)
    return picone_density_at(spec.p, v1, v, element_gradient(mesh, u1), element_gradient(mesh, u))


def picone_integral(spec: ProblemSpec, u1, u, floor: float = 1e-12) -> float:
    return float(np.sum(spec.mesh.element_measures * picone_density(spec, u1, u, floor)))


def xi_star(spec: ProblemSpec, eigen, eta_M) -> float:
    mesh = spec.mesh
    eta_M = np.broadcast_to(np.asarray(eta_M, dtype=float), (mesh.n_nodes,))
    return float(np.sum(mesh.lumped_mass * (eta_M - eigen.lambda1) * np.abs(eigen.u1) ** spec.p))


def collapse_test(spec: ProblemSpec, eigen, u, eta_M, epsilon_margin: float = 0.0,
                  collapse_floor: float | None = None) -> PiconeReport:
    """Flag a vanishing iterate.

    ``xi_star = int (eta_M - lambda1) u1^p`` must be positive, otherwise the
    near-zero hypothesis fails and :class:`HypothesisViolatedError` is raised.
    The verdict is COLLAPSE-SUSPECTED when ``max |u|`` drops below
    ``collapse_floor`` (default ``1e-6 * max u1``). ``wedge`` is
    ``xi_star - epsilon_margin``.
    """
    mesh = spec.mesh
    u = check_field(mesh, u)
    xs = xi_star(spec, eigen, eta_M)
    if not xs > 0:
        raise HypothesisViolatedError(
            f"xi* = {xs:.6g} is not positive; near-zero hypothesis fails")
    floor = 1e-6 * float(np.max(np.abs(eigen.u1))) if collapse_floor is None else collapse_floor
    umax = float(np.max(np.abs(u)))
    flag = COLLAPSE_SUSPECTED if umax < floor else HEALTHY
    if np.all(u > 1e-12):
        dens = picone_density(spec, eigen.u1, u)
        integral = float(np.sum(mesh.element_measures * dens))
        dmin = float(dens.min())
        npts = int(dens.size)
    else:
        integral = dmin = float("nan")
        npts = 0
    return PiconeReport(integral, dmin, npts, xs, flag, umax, floor, xs - epsilon_margin)
