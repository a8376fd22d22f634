"""Convection reactions f(z, x, y) and numerical audits of their hypotheses.

A reaction callable is vectorized: it receives ``z`` of shape ``(m, dim)``,
``x`` of shape ``(m,)`` and ``y`` of shape ``(m, dim)`` and returns ``(m,)``.
Set ``vectorized=False`` for plain scalar callables; they are then looped.

The wrapper always zeroes the reaction for ``x <= 0``, whatever the user
function does there, so only the positive semiaxis matters.

The asymptotic audits sample finite grids. They catch gross violations and
cannot prove anything about limits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError, HypothesisViolatedError, InvalidArgumentError


@dataclass(frozen=True)
class ReactionSpec:
    eval: Callable
    p: float
    eval_dx: Optional[Callable] = None
    growth_a: Optional[np.ndarray] = None
    description: str = ""
    uses_gradient: bool = True
    vectorized: bool = True
    params: Optional["ExampleReactionParams"] = None


@dataclass(frozen=True)
class ExampleReactionParams:
    """Parameters of the two-branch example nonlinearity.

    ``1 < tau, q < p < r`` is enforced here; ``theta < lambda1 < eta`` needs
    the eigenvalue and is checked by :meth:`check_against`.
    """

    eta: float
    theta: float
    q: float
    tau: float
    r: float
    p: float

    def __post_init__(self):
        if not (1 < self.tau < self.p and 1 < self.q < self.p and self.p < self.r):
            raise InvalidArgumentError(
                f"need 1 < tau, q < p < r; got tau={self.tau}, q={self.q}, "
                f"p={self.p}, r={self.r}"
            )

    def check_against(self, lambda1: float) -> None:
        if not (self.theta < lambda1 < self.eta):
            raise HypothesisViolatedError(
                f"need theta < lambda1 < eta; got theta={self.theta}, "
                f"lambda1={lambda1}, eta={self.eta}"
            )


def _ymag(y):
    return np.sqrt(np.sum(np.square(y), axis=-1))


def example_reaction(params: ExampleReactionParams) -> ReactionSpec:
    eta, th, q, tau, r, p = (params.eta, params.theta, params.q, params.tau,
                             params.r, params.p)

    def f(z, x, y):
        g = _ymag(y) ** (p - 1)
        xs = np.maximum(x, 0.0)
        low = eta * xs ** (p - 1) + xs ** (r - 1) * g
        with np.errstate(divide="ignore", invalid="ignore"):
            high = th * xs ** (p - 1) + (eta - th) * xs ** (q - 1) + xs ** (tau - 1) * g
        return np.where(xs <= 1.0, low, high)

    def fdx(z, x, y):
        g = _ymag(y) ** (p - 1)
        xs = np.where(x > 0, x, 1.0)
        low = eta * (p - 1) * xs ** (p - 2) + (r - 1) * xs ** (r - 2) * g
        high = (th * (p - 1) * xs ** (p - 2) + (eta - th) * (q - 1) * xs ** (q - 2)
                + (tau - 1) * xs ** (tau - 2) * g)
        return np.where(x <= 0, 0.0, np.where(x <= 1.0, low, high))

    return ReactionSpec(
        eval=f, eval_dx=fdx, p=p, params=params,
        description=(f"example(eta={eta}, theta={th}, q={q}, tau={tau}, r={r}, p={p})"),
    )


def zero_reaction(p: float) -> ReactionSpec:
    def f(z, x, y):
        return np.zeros(np.shape(x))

    return ReactionSpec(eval=f, eval_dx=f, p=p, growth_a=None,
                        description="zero", uses_gradient=False)


def linear_reaction(coefficient: float, p: float) -> ReactionSpec:
    """``f = c * (x+)^(p-1)``; linear in x when p = 2."""
    c = float(coefficient)

    def f(z, x, y):
        return c * np.maximum(x, 0.0) ** (p - 1)

    def fdx(z, x, y):
        xs = np.where(x > 0, x, 1.0)
        return np.where(x > 0, c * (p - 1) * xs ** (p - 2), 0.0)

    return ReactionSpec(eval=f, eval_dx=fdx, p=p, description=f"linear(c={c})",
                        uses_gradient=False)


def power_reaction(exponent: float, p: float) -> ReactionSpec:
    """``f = x^exponent``; violates the growth bound once exponent > p - 1."""

    def f(z, x, y):
        return np.maximum(x, 0.0) ** exponent

    return ReactionSpec(eval=f, p=p, description=f"power({exponent})",
                        uses_gradient=False)


# ---------------------------------------------------------------- evaluation

def _raw(spec, fn, z, x, y):
    if spec.vectorized:
        return np.asarray(fn(z, x, y), dtype=float).reshape(x.shape)
    return np.array([float(fn(zi, xi, yi)) for zi, xi, yi in zip(z, x, y)])


def _broadcast(z, x, y):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = x.shape[0]
    z = np.atleast_2d(np.asarray(z, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    return np.broadcast_to(z, (m, z.shape[1])), x, np.broadcast_to(y, (m, y.shape[1]))


def evaluate_many(spec: ReactionSpec, z, x, y) -> np.ndarray:
    """Truncated reaction at many points; non-finite output raises."""
    z, x, y = _broadcast(z, x, y)
    out = np.zeros(x.shape)
    pos = x > 0
    if np.any(pos):
        out[pos] = _raw(spec, spec.eval, z[pos], x[pos], y[pos])
    bad = ~np.isfinite(out)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        pt = (z[k].tolist(), float(x[k]), y[k].tolist())
        raise EvaluationError(f"reaction is not finite at (z, x, y) = {pt}", point=pt)
    return out


def evaluate_dx_many(spec: ReactionSpec, z, x, y) -> np.ndarray:
    """Partial derivative in x; central differences when no ``eval_dx``."""
    z, x, y = _broadcast(z, x, y)
    if spec.eval_dx is not None:
        out = np.zeros(x.shape)
        pos = x > 0
        if np.any(pos):
            out[pos] = _raw(spec, spec.eval_dx, z[pos], x[pos], y[pos])
    else:
        step = 1e-6 * (1.0 + np.abs(x))
        out = (evaluate_many(spec, z, x + step, y) - evaluate_many(spec, z, x - step, y)) / (2 * step)
    if not np.all(np.isfinite(out)):
        k = int(np.flatnonzero(~np.isfinite(out))[0])
        pt = (z[k].tolist(), float(x[k]), y[k].tolist())
        raise EvaluationError(f"reaction derivative is not finite at {pt}", point=pt)
    return out


def evaluate(spec: ReactionSpec, z, x: float, y) -> float:
    return float(evaluate_many(spec, np.atleast_1d(z)[None, :], np.array([x]),
                               np.atleast_1d(y)[None, :])[0])


def shift_term(x, p):
    """``(x+)^(p-1)``."""
    return np.maximum(x, 0.0) ** (p - 1)


def evaluate_hat(spec: ReactionSpec, z, x: float, y, p: Optional[float] = None) -> float:
    p = spec.p if p is None else p
    return evaluate(spec, z, x, y) + float(shift_term(x, p))


# ------------------------------------------------------------------- audits

@dataclass(frozen=True)
class SampleGrid:
    """Sampling grid for the hypothesis audits.

    ``z`` are the sample locations (mesh nodes), ``x`` the sampled values of
    the unknown and ``y_mag`` the gradient magnitudes, each taken along every
    unit vector in ``directions``.
    """

    z: np.ndarray
    x: np.ndarray
    y_mag: np.ndarray
    directions: np.ndarray


def default_grid(mesh, x_min=1e-6, x_max=1e6, per_decade=8, y_min=1e-3, y_max=1e3) -> SampleGrid:
    nx = int(round(math.log10(x_max / x_min) * per_decade)) + 1
    ny = int(round(math.log10(y_max / y_min) * per_decade)) + 1
    dim = mesh.dim
    dirs = np.vstack([np.eye(dim), -np.eye(dim)])
    return SampleGrid(
        z=np.array(mesh.nodes),
        x=np.logspace(math.log10(x_min), math.log10(x_max), nx),
        y_mag=np.concatenate([[0.0], np.logspace(math.log10(y_min), math.log10(y_max), ny)]),
        directions=dirs,
    )


@dataclass
class HypothesisReport:
    hypothesis: str
    passed: bool
    witness: Optional[tuple]
    margin: float
    sampled_bound: np.ndarray
    details: dict = field(default_factory=dict)

    def summary(self) -> str:
        verdict = "pass" if self.passed else "fail"
        b = self.sampled_bound
        return (f"hypothesis ({self.hypothesis}) {verdict} bound_min={b.min():.6g} "
                f"bound_max={b.max():.6g} margin={self.margin:.6g} witness={self.witness}")


def _table(spec, zi, xs, ys):
    """Reaction on the tensor grid ``xs x ys`` at one location -> (nx, ny)."""
    nx, ny = len(xs), len(ys)
    X = np.repeat(xs, ny)
    Y = np.tile(ys, (nx, 1))
    Z = np.broadcast_to(zi, (nx * ny, zi.shape[0]))
    return evaluate_many(spec, Z, X, Y).reshape(nx, ny)


def _y_vectors(grid, y_mags):
    return (y_mags[:, None, None] * grid.directions[None, :, :]).reshape(-1, grid.directions.shape[1])


def _strict_gap(lambda1, strict_gap):
    if strict_gap is not None:
        return strict_gap
    return 1e-3 * lambda1 if lambda1 > 0 else 1e-6


def check_growth(spec: ReactionSpec, grid: SampleGrid, p=None, tail_tol=1e-2) -> HypothesisReport:
    """Sampled sup of ``|f| / (1 + x^(p-1) + |y|^(p-1))`` per location.

    Passes when every sup is finite and does not grow between the grid cut
    two decades short (in both x and |y|) and the full grid.
    """
    p = spec.p if p is None else p
    yv = _y_vectors(grid, grid.y_mag)
    ymag = np.repeat(grid.y_mag, grid.directions.shape[0])
    denom = 1.0 + grid.x[:, None] ** (p - 1) + ymag[None, :] ** (p - 1)
    sub = (grid.x[:, None] <= grid.x.max() / 100 * (1 + 1e-12)) & (ymag[None, :] <= grid.y_mag.max() / 100 * (1 + 1e-12))
    a_hat = np.empty(len(grid.z))
    tails = np.empty(len(grid.z))
    argmax = []
    for k, zi in enumerate(grid.z):
        ratio = np.abs(_table(spec, zi, grid.x, yv)) / denom
        full = ratio.max()
        part = ratio[sub].max()
        a_hat[k] = full
        if full == 0.0:
            tails[k] = 1.0
        elif part == 0.0:
            tails[k] = math.inf
        else:
            tails[k] = full / part
        argmax.append(np.unravel_index(np.argmax(ratio), ratio.shape))
    worst = int(np.argmax(tails))
    i, j = argmax[worst]
    witness = (grid.z[worst].tolist(), float(grid.x[i]), yv[j].tolist())
    passed = bool(np.all(np.isfinite(a_hat)) and tails.max() <= 1.0 + tail_tol)
    return HypothesisReport("i", passed, witness, float(1.0 + tail_tol - tails.max()), a_hat,
                            {"tail_ratio": tails})


def check_limsup_at_infinity(spec: ReactionSpec, lambda1: float, grid: SampleGrid,
                             p=None, strict_gap=None, tol=None) -> HypothesisReport:
    """Tail bound ``max_y f(z, x_max, y) / x_max^(p-1)`` against ``lambda1``."""
    p = spec.p if p is None else p
    gap = _strict_gap(lambda1, strict_gap)
    tol = 1e-8 * max(1.0, abs(lambda1)) if tol is None else tol
    xt = grid.x[-1:]
    yv = _y_vectors(grid, grid.y_mag)
    theta_hat = np.empty(len(grid.z))
    where = []
    for k, zi in enumerate(grid.z):
        row = _table(spec, zi, xt, yv)[0] / xt[0] ** (p - 1)
        j = int(np.argmax(row))
        theta_hat[k] = row[j]
        where.append(j)
    bounded = np.all(theta_hat <= lambda1 + tol)
    strict = np.any(theta_hat <= lambda1 - gap)
    if not bounded:
        k = int(np.argmax(theta_hat))
    else:
        k = int(np.argmin(theta_hat))
    witness = (grid.z[k].tolist(), float(xt[0]), yv[where[k]].tolist())
    return HypothesisReport("ii", bool(bounded and strict), witness,
                            float(lambda1 - theta_hat.max()), theta_hat,
                            {"bounded": bool(bounded), "strict_gap_met": bool(strict)})


def check_liminf_at_zero(spec: ReactionSpec, lambda1: float, M: float, grid: SampleGrid,
                         p=None, strict_gap=None, tol=None) -> HypothesisReport:
    """Near-zero bound ``min_{|y|<=M} f(z, x_min, y) / x_min^(p-1)``."""
    p = spec.p if p is None else p
    gap = _strict_gap(lambda1, strict_gap)
    tol = 1e-8 * max(1.0, abs(lambda1)) if tol is None else tol
    x0 = grid.x[:1]
    mags = grid.y_mag[grid.y_mag <= M]
    if mags.size == 0 or mags.max() < M:
        mags = np.append(mags, M)
    yv = _y_vectors(grid, mags)
    eta_hat = np.empty(len(grid.z))
    where = []
    for k, zi in enumerate(grid.z):
        row = _table(spec, zi, x0, yv)[0] / x0[0] ** (p - 1)
        j = int(np.argmin(row))
        eta_hat[k] = row[j]
        where.append(j)
    bounded = np.all(eta_hat >= lambda1 - tol)
    strict = np.any(eta_hat >= lambda1 + gap)
    if not bounded:
        k = int(np.argmin(eta_hat))
    else:
        k = int(np.argmax(eta_hat))
    witness = (grid.z[k].tolist(), float(x0[0]), yv[where[k]].tolist())
    return HypothesisReport("iii", bool(bounded and strict), witness,
                            float(eta_hat.min() - lambda1), eta_hat,
                            {"bounded": bool(bounded), "strict_gap_met": bool(strict), "M": M})


def check_all(spec: ReactionSpec, lambda1: float, grid: SampleGrid, M: float = 10.0):
    return [
        check_growth(spec, grid),
        check_limsup_at_infinity(spec, lambda1, grid),
        check_liminf_at_zero(spec, lambda1, M, grid),
    ]
