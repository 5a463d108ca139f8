"""Lower and upper Moreau envelopes of scalar functions by global search.

The lower envelope at parameter gamma is

    M_gamma f(x)  = inf_y  f(y) + (y - x)^2 / (2 gamma)

and the upper envelope is the sup with the quadratic subtracted.  Both are
computed the same way: evaluate the objective on a uniform grid around x,
golden-section every grid-local optimum basin down to rounding, and keep
the best refined candidate.  Near-ties (within ``tie_tol`` in value) are
reported in ``candidates`` so callers can detect a multi-valued proximal
map; the reported optimizer is always the smallest tied one.

The ``*_many`` variants vectorize one envelope evaluation per entry of
``xs`` and refine only the single best basin per entry.  They are intended
for objectives known to be unimodal (every use in this package is backed
by a uniqueness argument: the stationarity condition is an injective
denoiser evaluation, or the perturbed objective is convex).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ScalarFunction",
    "EnvelopeResult",
    "EnvelopeUnboundedError",
    "MultivaluedProxError",
    "lower_envelope",
    "upper_envelope",
    "prox",
    "envelope_gradient",
    "lower_envelope_many",
    "upper_envelope_many",
]

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class EnvelopeUnboundedError(ValueError):
    """The envelope objective keeps improving toward the search boundary."""


class MultivaluedProxError(RuntimeError):
    """The proximal map is multi-valued at the requested point."""


@dataclass(frozen=True)
class ScalarFunction:
    """A scalar function of one real variable.

    ``eval`` must accept ndarray input elementwise and may return +inf
    outside the function's effective domain.  ``grad``, when provided, is
    used for stationarity checks.  ``domain`` clips the search interval.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    domain: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError(f"domain must be a nonempty interval, got {self.domain!r}")


@dataclass(frozen=True)
class EnvelopeResult:
    """Envelope value with diagnostics.

    ``candidates`` lists every refined optimizer whose value ties the best
    one within the tie tolerance; ``argopt`` is the smallest of them.
    ``converged`` means the objective is stationary at ``argopt`` (or the
    optimum sits on the domain boundary, flagged by ``on_boundary``).
    """

    value: float
    argopt: float
    converged: bool
    on_boundary: bool = False
    candidates: tuple[float, ...] = field(default_factory=tuple)


def _golden_min(obj: Callable[[float], float], a: float, b: float, tol: float = 1e-13):
    """Golden-section minimum of ``obj`` on [a, b]."""
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = obj(c), obj(d)
    for _ in range(200):
        if (b - a) <= tol * max(1.0, abs(a), abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = obj(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = obj(d)
    y = c if fc <= fd else d
    return y, min(fc, fd)


def _search(
    f: ScalarFunction,
    gamma: float,
    x: float,
    sign: float,
    grid_points: int,
    radius: float | None,
    seeds: Sequence[float],
    stationarity_tol: float,
    tie_tol: float,
) -> EnvelopeResult:
    """Minimize sign*f(y) + (y-x)^2/(2 gamma) over the domain of f."""
    if not (np.isfinite(gamma) and gamma > 0.0):
        raise ValueError(f"gamma must be finite and > 0, got {gamma!r}")
    if not np.isfinite(x):
        raise ValueError("envelope point must be finite")
    if grid_points < 3:
        raise ValueError("grid_points must be >= 3")
    radius = radius if radius is not None else 20.0 * max(1.0, math.sqrt(gamma))
    dom_lo, dom_hi = f.domain

    def objective(ys):
        ys = np.asarray(ys, dtype=float)
        vals = sign * np.asarray(f.eval(ys), dtype=float) + (ys - x) ** 2 / (2.0 * gamma)
        return np.where(np.isnan(vals), np.inf, vals)

    # Grid pass, expanding the radius while the best point sits on a search
    # edge that is not a domain edge (the optimum may lie outside the
    # window; if expansion never settles, the objective is unbounded).
    for _ in range(4):
        lo = max(x - radius, dom_lo)
        hi = min(x + radius, dom_hi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("search window is unbounded; provide a finite domain or radius")
        ys = np.linspace(lo, hi, grid_points)
        vals = objective(ys)
        if not np.isfinite(vals).any():
            raise ValueError("objective is non-finite on the entire search grid")
        best = int(np.argmin(vals))
        at_lo_edge = best == 0 and lo > dom_lo
        at_hi_edge = best == grid_points - 1 and hi < dom_hi
        if not (at_lo_edge or at_hi_edge):
            break
        radius *= 4.0
    else:
        raise EnvelopeUnboundedError(
            f"envelope objective at x={x!r} keeps improving toward the search "
            f"boundary (last window radius {radius / 4.0!r}); it is unbounded "
            "or needs an explicit domain"
        )

    # Candidate basins: every grid-local minimum, plus clipped-domain ends.
    interior = np.zeros(grid_points, dtype=bool)
    interior[1:-1] = (vals[1:-1] <= vals[:-2]) & (vals[1:-1] <= vals[2:])
    idxs = list(np.flatnonzero(interior))
    if vals[0] <= vals[1]:
        idxs.append(0)
    if vals[-1] <= vals[-2]:
        idxs.append(grid_points - 1)

    spacing = ys[1] - ys[0]

    def scalar_obj(y: float) -> float:
        return float(objective(np.array([y]))[0])

    refined: list[tuple[float, float]] = []
    for i in idxs:
        if not np.isfinite(vals[i]):
            continue
        a = ys[max(i - 1, 0)]
        b = ys[min(i + 1, grid_points - 1)]
        refined.append(_golden_min(scalar_obj, a, b))
    for seed in seeds:
        if not (dom_lo < seed < dom_hi):
            continue
        a = max(seed - spacing, dom_lo)
        b = min(seed + spacing, dom_hi)
        refined.append(_golden_min(scalar_obj, a, b))

    refined = [(y, v) for y, v in refined if np.isfinite(v)]
    if not refined:
        raise ValueError("no finite envelope candidate found")
    best_val = min(v for _, v in refined)
    tied = sorted(y for y, v in refined if v <= best_val + tie_tol)
    distinct: list[float] = []
    for y in tied:
        if not distinct or abs(y - distinct[-1]) > 1e-6 * max(1.0, abs(y)):
            distinct.append(y)
    argopt = distinct[0]

    # The golden refinement localizes an optimizer only to ~sqrt(eps) in
    # position (values tie in floating point below that), so boundary
    # proximity must be judged at that resolution.
    def near(edge: float) -> bool:
        return np.isfinite(edge) and abs(argopt - edge) <= 1e-7 * max(1.0, abs(edge))

    on_boundary = near(dom_lo) or near(dom_hi)
    if on_boundary:
        converged = True
    else:
        if f.grad is not None:
            slope = sign * float(f.grad(np.array([argopt]))) + (argopt - x) / gamma
        else:
            h = 1e-6 * max(1.0, abs(argopt))
            slope = (scalar_obj(argopt + h) - scalar_obj(argopt - h)) / (2.0 * h)
        converged = bool(abs(slope) <= stationarity_tol)

    value = best_val if sign > 0 else -best_val
    return EnvelopeResult(
        value=value,
        argopt=argopt,
        converged=converged,
        on_boundary=on_boundary,
        candidates=tuple(distinct),
    )


def lower_envelope(
    f: ScalarFunction,
    gamma: float,
    x: float,
    *,
    grid_points: int = 2001,
    radius: float | None = None,
    seeds: Sequence[float] = (),
    stationarity_tol: float = 1e-5,
    tie_tol: float = 1e-9,
) -> EnvelopeResult:
    """inf_y f(y) + (y - x)^2 / (2 gamma), with the minimizing y."""
    return _search(f, gamma, x, 1.0, grid_points, radius, seeds, stationarity_tol, tie_tol)


def upper_envelope(
    f: ScalarFunction,
    gamma: float,
    x: float,
    *,
    grid_points: int = 2001,
    radius: float | None = None,
    seeds: Sequence[float] = (),
    stationarity_tol: float = 1e-5,
    tie_tol: float = 1e-9,
) -> EnvelopeResult:
    """sup_y f(y) - (y - x)^2 / (2 gamma), with the maximizing y."""
    return _search(f, gamma, x, -1.0, grid_points, radius, seeds, stationarity_tol, tie_tol)


def prox(f: ScalarFunction, gamma: float, x: float, **kwargs) -> float:
    """The (assumed single-valued) proximal point argmin f(y) + (y-x)^2/(2 gamma)."""
    return lower_envelope(f, gamma, x, **kwargs).argopt


def envelope_gradient(f: ScalarFunction, gamma: float, x: float, **kwargs) -> float:
    """Gradient (x - prox(x)) / gamma of the lower envelope at x.

    The identity requires a single-valued, continuous proximal map; a
    multi-valued prox (tied minimizers) raises :class:`MultivaluedProxError`.
    """
    res = lower_envelope(f, gamma, x, **kwargs)
    if len(res.candidates) > 1:
        raise MultivaluedProxError(
            f"prox is multi-valued at x={x!r}: tied minimizers {res.candidates!r}; "
            "the envelope gradient identity does not apply"
        )
    return (x - res.argopt) / gamma


# -- vectorized single-basin variants -----------------------------------------


def _envelope_many(eval_fn, gamma, xs, sign, grid_points, radius, seeds, golden_iters):
    if not (np.isfinite(gamma) and gamma > 0.0):
        raise ValueError(f"gamma must be finite and > 0, got {gamma!r}")
    xs = np.asarray(xs, dtype=float)
    flat = xs.reshape(-1)
    radius = radius if radius is not None else 20.0 * max(1.0, math.sqrt(gamma))

    def objective(ys):
        vals = sign * np.asarray(eval_fn(ys), dtype=float) + (ys - flat) ** 2 / (2.0 * gamma)
        return np.where(np.isnan(vals), np.inf, vals)

    # Expand the window while any row's best grid point sits on an edge
    # (the optimum lies outside it); persistent edge optima mean the
    # objective is unbounded.
    for _ in range(4):
        offsets = np.linspace(-radius, radius, grid_points)
        grid = flat[:, None] + offsets[None, :]
        vals = sign * np.asarray(eval_fn(grid.reshape(-1)), dtype=float).reshape(grid.shape)
        vals += (grid - flat[:, None]) ** 2 / (2.0 * gamma)
        vals = np.where(np.isnan(vals), np.inf, vals)
        best = np.argmin(vals, axis=1)
        if not ((best == 0).any() or (best == grid_points - 1).any()):
            break
        radius *= 4.0
    else:
        raise EnvelopeUnboundedError(
            "vectorized envelope kept finding its optimum on the search "
            f"boundary (last window radius {radius / 4.0!r}); the objective "
            "is unbounded or needs the scalar envelope with a domain"
        )
    rows = np.arange(flat.size)
    a = grid[rows, best - 1]
    b = grid[rows, best + 1]
    y, v = _golden_bracket_min(objective, a, b, golden_iters)

    if seeds is not None:
        seeds = np.asarray(seeds, dtype=float).reshape(-1)
        spacing = offsets[1] - offsets[0]
        ok = np.isfinite(seeds)
        sa = np.where(ok, seeds - spacing, a)
        sb = np.where(ok, seeds + spacing, b)
        y2, v2 = _golden_bracket_min(objective, sa, sb, golden_iters)
        better = ok & (v2 < v)
        y = np.where(better, y2, y)
        v = np.where(better, v2, v)

    values = v if sign > 0 else -v
    return values.reshape(xs.shape), y.reshape(xs.shape)


def _golden_bracket_min(obj, a: np.ndarray, b: np.ndarray, iters: int):
    """Plain vectorized golden section: two objective calls per iteration."""
    for _ in range(iters):
        c = b - _INV_GOLDEN * (b - a)
        d = a + _INV_GOLDEN * (b - a)
        take = obj(c) <= obj(d)
        b = np.where(take, d, b)
        a = np.where(take, a, c)
    y = 0.5 * (a + b)
    return y, obj(y)


def lower_envelope_many(
    eval_fn,
    gamma: float,
    xs,
    *,
    grid_points: int = 501,
    radius: float | None = None,
    seeds=None,
    golden_iters: int = 80,
):
    """Vectorized lower envelope for a unimodal objective; returns (values, argopts)."""
    return _envelope_many(eval_fn, gamma, xs, 1.0, grid_points, radius, seeds, golden_iters)


def upper_envelope_many(
    eval_fn,
    gamma: float,
    xs,
    *,
    grid_points: int = 501,
    radius: float | None = None,
    seeds=None,
    golden_iters: int = 80,
):
    """Vectorized upper envelope for a unimodal objective; returns (values, argopts)."""
    return _envelope_many(eval_fn, gamma, xs, -1.0, grid_points, radius, seeds, golden_iters)
