"""Perturbed-problem solver and the epsilon -> 0 continuation.

For fixed epsilon the convection argument is frozen at the gradient of the
current iterate (outer Picard loop) and the remaining problem is solved by
damped Newton. The continuation warm-starts each epsilon from the previous
solution, then polishes at epsilon = 0.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    AuxiliaryProblem,
    ProblemSpec,
    check_field,
    element_gradient,
    true_residual,
    v_jacobian,
    v_residual,
)
from .eigen import EigenPair, principal_eigenpair
from .errors import (
    CollapseDetectedError,
    InvalidArgumentError,
    LinearSolveFailedError,
    NewtonDivergedError,
    PicardNotConvergedError,
    PositivityViolatedError,
    SolverError,
)
from .picone import COLLAPSE_SUSPECTED, HEALTHY, PiconeReport, collapse_test, picone_integral
from .reaction import ReactionSpec, check_liminf_at_zero, default_grid

log = logging.getLogger(__name__)

LINEAR_SOLVE_TOL = 1e-12
_DT_RETRIES = 8
_DT_MAX = 1e12


@dataclass
class SolverOptions:
    newton_tol: float = 1e-10
    newton_max_iter: int = 200
    picard_tol: float = 1e-10
    picard_max_iter: int = 500
    relaxation: float = 0.7
    armijo_factor: float = 0.5
    armijo_slope: float = 1e-4
    armijo_max_halvings: int = 30
    negative_part_tol: float = 1e-10  # relative to max |u|
    pseudo_time_step: float = 0.1

    def __post_init__(self):
        for name in ("newton_tol", "picard_tol", "negative_part_tol", "pseudo_time_step"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if not 0 < self.relaxation <= 1:
            raise InvalidArgumentError(f"relaxation must lie in (0, 1], got {self.relaxation}")
        if not 0 < self.armijo_factor < 1:
            raise InvalidArgumentError("armijo_factor must lie in (0, 1)")


@dataclass
class Solution:
    u: np.ndarray
    epsilon: float
    residual_norm: float
    picard_iters: int
    newton_iters_total: int
    min_value: float
    max_value: float
    max_gradient_norm: float
    negative_part_norm: float

    @property
    def interior_positive(self) -> bool:
        return self.min_value > 0

    @property
    def c1_proxy(self) -> float:
        return max(abs(self.min_value), abs(self.max_value)) + self.max_gradient_norm


@dataclass
class SolutionDiagnostics:
    residual_norm: float
    interior_residual: float
    boundary_residual: float
    min_value: float
    max_value: float
    negative_part_norm: float
    max_gradient_norm: float


# ---------------------------------------------------------------- kernels

def linear_solve(J, b) -> np.ndarray:
    """Sparse direct solve with one refinement step.

    Raises :class:`LinearSolveFailedError` unless the normwise backward
    error ``|Jx - b| / (|J| |x| + |b|)`` is at most 1e-12.
    """
    try:
        lu = spla.splu(J.tocsc())
    except RuntimeError as exc:
        raise LinearSolveFailedError(f"factorization failed: {exc}") from exc
    x = lu.solve(b)
    x = x + lu.solve(b - J @ x)
    normJ = spla.norm(J, np.inf)
    err = np.max(np.abs(J @ x - b)) / (normJ * np.max(np.abs(x)) + np.max(np.abs(b)) + 1e-300)
    if not (np.all(np.isfinite(x)) and err <= LINEAR_SOLVE_TOL):
        raise LinearSolveFailedError(f"linear solve backward error {err:.3e}")
    return x


def newton_frozen(aux: AuxiliaryProblem, u, frozen_y, opts: SolverOptions, dt=None):
    """Damped Newton on the frozen residual.

    The Newton matrix is shifted by ``M / dt`` (pseudo-transient damping);
    ``dt`` grows as the residual falls, so late steps are plain Newton. Each
    step is capped so positive nodes stay positive, then backtracked with
    Armijo on ``|r|^2``. If backtracking fails, ``dt`` shrinks tenfold and the
    step is retried. Returns ``(u, iterations, dt)``.
    """
    mesh = aux.problem.mesh
    mass = sp.diags(mesh.lumped_mass)
    dt = opts.pseudo_time_step if dt is None else dt
    u = np.array(u, dtype=float)
    r = v_residual(aux, u, frozen_y)
    res = float(np.max(np.abs(r)))
    it = 0
    while res > opts.newton_tol:
        if it >= opts.newton_max_iter:
            raise NewtonDivergedError(
                f"Newton hit {opts.newton_max_iter} iterations at residual {res:.3e}", last_iterate=u)
        J = v_jacobian(aux, u, frozen_y)
        phi = float(r @ r)
        for _ in range(_DT_RETRIES):
            d = linear_solve((J + mass / dt).tocsr(), -r)
            t = 1.0
            shrink = (d < 0) & (u > 0)
            if np.any(shrink):
                t = min(1.0, 0.9 * float(np.min(u[shrink] / -d[shrink])))
            for _ in range(opts.armijo_max_halvings):
                cand = u + t * d
                rc = v_residual(aux, cand, frozen_y)
                if float(rc @ rc) <= (1 - 2 * opts.armijo_slope * t) * phi:
                    break
                t *= opts.armijo_factor
            else:
                dt *= 0.1
                continue
            break
        else:
            raise NewtonDivergedError(f"line search stalled at residual {res:.3e}", last_iterate=u)
        u, r = cand, rc
        res = float(np.max(np.abs(r)))
        dt = min(dt * math.sqrt(phi / max(float(r @ r), 1e-300)), _DT_MAX)
        it += 1
    return u, it, dt


def _summarize(aux, u, res, picard, newton):
    g = element_gradient(aux.problem.mesh, u)
    return Solution(
        u=u,
        epsilon=aux.epsilon,
        residual_norm=res,
        picard_iters=picard,
        newton_iters_total=newton,
        min_value=float(u.min()),
        max_value=float(u.max()),
        max_gradient_norm=float(np.sqrt(np.max(np.sum(g * g, axis=1)))),
        negative_part_norm=float(np.max(np.maximum(-u, 0.0))),
    )


def _solve(aux: AuxiliaryProblem, init, opts: SolverOptions) -> Solution:
    mesh = aux.problem.mesh
    u = check_field(mesh, init).copy()
    omega = opts.relaxation if aux.reaction.uses_gradient else 1.0
    newton_total = 0
    dt = None
    for k in range(1, opts.picard_max_iter + 1):
        frozen = element_gradient(mesh, u)
        v, nit, dt = newton_frozen(aux, u, frozen, opts, dt)
        newton_total += nit
        new = v if omega == 1.0 else (1 - omega) * u + omega * v
        step = float(np.max(np.abs(new - u)))
        u = new
        if not aux.reaction.uses_gradient or step <= opts.picard_tol:
            res = float(np.max(np.abs(true_residual(aux, u))))
            if res <= 10 * opts.newton_tol:
                break
        log.debug("eps=%g picard %d: step %.3e", aux.epsilon, k, step)
    else:
        raise PicardNotConvergedError(
            f"Picard loop hit {opts.picard_max_iter} iterations (last step {step:.3e})",
            last_iterate=u)
    sol = _summarize(aux, u, res, k, newton_total)
    scale = max(float(np.max(np.abs(u))), np.finfo(float).tiny)
    if sol.negative_part_norm > opts.negative_part_tol * scale:
        raise PositivityViolatedError(
            f"negative part {sol.negative_part_norm:.3e} exceeds tolerance", last_iterate=u)
    return sol


def solve_auxiliary(aux: AuxiliaryProblem, init=None, opts: Optional[SolverOptions] = None) -> Solution:
    """Solve the perturbed problem at ``aux.epsilon > 0`` (default start u = 1)."""
    if not aux.epsilon > 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {aux.epsilon}")
    opts = SolverOptions() if opts is None else opts
    if init is None:
        init = np.ones(aux.problem.mesh.n_nodes)
    return _solve(aux, init, opts)


def check_solution(problem: ProblemSpec, reaction: ReactionSpec, u, epsilon: float,
                   e=None) -> SolutionDiagnostics:
    """Residual of ``-Delta_p u = f(z, u, Du) + eps e`` with Robin terms,
    split into interior and boundary rows."""
    mesh = problem.mesh
    if e is None:
        e = np.ones(mesh.n_nodes)
    aux = AuxiliaryProblem(problem, reaction, epsilon, e)
    u = check_field(mesh, u)
    r = np.abs(true_residual(aux, u, shifted=False))
    bd = mesh.is_boundary
    g = element_gradient(mesh, u)
    return SolutionDiagnostics(
        residual_norm=float(r.max()),
        interior_residual=float(r[~bd].max()) if np.any(~bd) else 0.0,
        boundary_residual=float(r[bd].max()),
        min_value=float(u.min()),
        max_value=float(u.max()),
        negative_part_norm=float(np.max(np.maximum(-u, 0.0))),
        max_gradient_norm=float(np.sqrt(np.max(np.sum(g * g, axis=1)))),
    )


# ------------------------------------------------------------ continuation

@dataclass
class EpsilonSchedule:
    """Geometric ``start * ratio**k`` for ``k < steps``, or an explicit list."""

    start: float = 1.0
    ratio: float = 0.5
    steps: int = 21
    polish: bool = True
    explicit: Optional[Sequence[float]] = None

    def values(self) -> List[float]:
        if self.explicit is not None:
            vals = [float(v) for v in self.explicit]
        else:
            vals = [self.start * self.ratio ** k for k in range(self.steps)]
        if not vals:
            raise InvalidArgumentError("empty epsilon schedule")
        if any(not (0 < v <= 1) for v in vals):
            raise InvalidArgumentError("schedule values must lie in (0, 1]")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise InvalidArgumentError("schedule must be strictly decreasing")
        return vals


@dataclass
class TraceRecord:
    step: int
    epsilon: float
    residual: float
    min_u: float
    max_u: float
    max_grad: float
    picone_integral: float
    collapse_flag: str
    picard_iters: int = 0
    newton_iters: int = 0
    negative_part: float = 0.0

    @property
    def c1_proxy(self) -> float:
        return max(abs(self.min_u), abs(self.max_u)) + self.max_grad


@dataclass
class ContinuationTrace:
    records: List[TraceRecord] = field(default_factory=list)
    solutions: List[Solution] = field(default_factory=list)
    uniform_bound_proxy: List[float] = field(default_factory=list)
    final: Optional[Solution] = None
    final_residual: float = float("nan")
    eigen: Optional[EigenPair] = None
    eta_M: Optional[np.ndarray] = None
    report: Optional[PiconeReport] = None
    verdict: str = "RUNNING"

    def append(self, rec: TraceRecord, sol: Solution) -> None:
        if self.records and rec.epsilon >= self.records[-1].epsilon:
            raise InvalidArgumentError("epsilon must decrease along the trace")
        self.records.append(rec)
        self.solutions.append(sol)
        prev = self.uniform_bound_proxy[-1] if self.uniform_bound_proxy else 0.0
        self.uniform_bound_proxy.append(max(prev, rec.c1_proxy))

    @property
    def min_over_trace(self) -> float:
        return min(r.min_u for r in self.records)


@dataclass
class CollapseOptions:
    """Vanishing-iterate detection.

    Fires when ``max u`` falls below ``floor`` (default ``1e-6 * max u1``) or
    when the last ``window`` steps all show ``max u`` shrinking at least like
    ``epsilon**min_slope``.
    """

    floor: Optional[float] = None
    window: int = 5
    min_slope: float = 0.75
    epsilon_margin: float = 0.0
    M: Optional[float] = None


def _trend_to_zero(records, window, min_slope):
    if len(records) < window + 1:
        return False
    tail = records[-(window + 1):]
    for a, b in zip(tail, tail[1:]):
        if not (b.max_u > 0 and a.max_u > 0):
            return True
        slope = math.log(b.max_u / a.max_u) / math.log(b.epsilon / a.epsilon)
        if slope < min_slope:
            return False
    return True


def estimate_eta_M(problem: ProblemSpec, reaction: ReactionSpec, lambda1: float, M: float) -> np.ndarray:
    grid = default_grid(problem.mesh)
    return check_liminf_at_zero(reaction, lambda1, M, grid).sampled_bound


def continuation_run(problem: ProblemSpec, reaction: ReactionSpec, e=None,
                     schedule: Optional[EpsilonSchedule] = None,
                     opts: Optional[SolverOptions] = None,
                     eigen: Optional[EigenPair] = None,
                     eta_M=None,
                     collapse: Optional[CollapseOptions] = None) -> ContinuationTrace:
    """Solve along a decreasing epsilon schedule, warm-starting each step.

    Records per step the residual, extrema, gradient bound and the Picone
    integral against the principal eigenfunction. Raises
    :class:`CollapseDetectedError` (with the partial trace) when iterates
    vanish. With ``schedule.polish`` the last iterate is re-solved at
    epsilon = 0 and ``final_residual`` is the residual of the unperturbed
    problem. When ``eta_M`` is not given it is sampled from the reaction with
    ``M`` equal to the largest C1 proxy seen.
    """
    mesh = problem.mesh
    schedule = EpsilonSchedule() if schedule is None else schedule
    opts = SolverOptions() if opts is None else opts
    collapse = CollapseOptions() if collapse is None else collapse
    e = np.ones(mesh.n_nodes) if e is None else e
    eps_values = schedule.values()
    if eigen is None:
        eigen = principal_eigenpair(problem)
    floor = collapse.floor if collapse.floor is not None else 1e-6 * float(np.max(eigen.u1))

    trace = ContinuationTrace(eigen=eigen)
    u = np.ones(mesh.n_nodes)
    base = AuxiliaryProblem(problem, reaction, eps_values[0], e)
    for k, eps in enumerate(eps_values):
        aux = base.with_epsilon(eps)
        try:
            sol = _solve(aux, u, opts)
        except SolverError as exc:
            trace.verdict = f"FAILED:{type(exc).__name__}"
            raise
        u = sol.u
        try:
            pic = picone_integral(problem, eigen.u1, u)
        except Exception:
            pic = float("nan")
        rec = TraceRecord(k, eps, sol.residual_norm, sol.min_value, sol.max_value,
                          sol.max_gradient_norm, pic, HEALTHY, sol.picard_iters,
                          sol.newton_iters_total, sol.negative_part_norm)
        collapsing = sol.max_value < floor
        trace.append(rec, sol)
        collapsing = collapsing or _trend_to_zero(trace.records, collapse.window, collapse.min_slope)
        if collapsing:
            rec.collapse_flag = COLLAPSE_SUSPECTED
            trace.verdict = "COLLAPSE-DETECTED"
            raise CollapseDetectedError(
                f"iterates vanish at eps={eps:g} (max u = {sol.max_value:.3e})", trace=trace)
        log.info("eps=%-12.6g residual=%.3e min=%.6g max=%.6g picard=%d newton=%d",
                 eps, sol.residual_norm, sol.min_value, sol.max_value,
                 sol.picard_iters, sol.newton_iters_total)

    final = trace.solutions[-1]
    if schedule.polish:
        final = _solve(base.with_epsilon(0.0), u, opts)
        diag = check_solution(problem, reaction, final.u, 0.0, e)
        trace.final_residual = diag.residual_norm
        try:
            pic = picone_integral(problem, eigen.u1, final.u)
        except Exception:
            pic = float("nan")
        rec = TraceRecord(len(eps_values), 0.0, diag.residual_norm, final.min_value,
                          final.max_value, final.max_gradient_norm, pic, HEALTHY,
                          final.picard_iters, final.newton_iters_total, final.negative_part_norm)
        trace.append(rec, final)
    else:
        trace.final_residual = final.residual_norm
    trace.final = final

    if eta_M is None:
        M = collapse.M if collapse.M is not None else max(trace.uniform_bound_proxy)
        eta_M = estimate_eta_M(problem, reaction, eigen.lambda1, M)
    trace.eta_M = np.broadcast_to(np.asarray(eta_M, dtype=float), (mesh.n_nodes,)).copy()
    trace.report = collapse_test(problem, eigen, final.u, trace.eta_M,
                                 collapse.epsilon_margin, floor)
    trace.records[-1].collapse_flag = trace.report.collapse_flag
    trace.verdict = trace.report.collapse_flag
    if trace.report.collapse_flag != HEALTHY:
        raise CollapseDetectedError("final iterate vanished", trace=trace)
    return trace
