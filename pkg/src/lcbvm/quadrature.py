"""Tensor quadrature for log-concave densities with convex support (dimension <= 3).

A :class:`QuadratureGrid` is a box in grid coordinates ``x`` mapped affinely to
density coordinates ``c = center + axes @ x``. All axes but the last are
*outer* axes integrated by the trapezoid rule on uniform nodes. The last axis is
*inner*: on every line the support interval of each density is located by
bisection and inserted into the panel edges, and each panel is integrated with
4-point Gauss-Legendre. Because supports are convex, each line meets them in an
interval, so no panel straddles a support boundary.

The ``points`` of a grid describe its fine level; the coarse level used for the
two-level error estimate has half the outer steps and half the inner panels,
so the fine level halves the step exactly.
"""
from dataclasses import dataclass

import numpy as np

from .errors import GridError

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_BISECT_ITERS = 60
COVERAGE_DROP = 20.0
MAX_DIM = 3


@dataclass(frozen=True)
class CoordDensity:
    """An unnormalized log-density on grid coordinates plus its support predicate.

    Both callables take an ``(N, D)`` array of density coordinates.
    """
    logpdf: object
    support: object
    name: str = ""


@dataclass(frozen=True)
class QuadratureGrid:
    center: np.ndarray
    axes: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    points: tuple

    def __post_init__(self):
        D = len(self.points)
        if D < 1 or D > MAX_DIM:
            raise GridError(f"quadrature supports 1 to {MAX_DIM} dimensions, got {D}")
        if np.any(np.asarray(self.hi) <= np.asarray(self.lo)):
            raise GridError("grid box has an empty side")
        if any(p < 3 for p in self.points[:-1]) or self.points[-1] < 2:
            raise GridError("grid needs at least 3 outer points and 2 inner panels per axis")

    @property
    def dim(self):
        return len(self.points)

    @property
    def log_jacobian(self):
        return float(np.linalg.slogdet(np.asarray(self.axes, dtype=float))[1])

    def coarse(self):
        pts = tuple((p + 1) // 2 if p % 2 else p // 2 + 1 for p in self.points[:-1])
        pts = pts + (max(2, self.points[-1] // 2),)
        return QuadratureGrid(self.center, self.axes, self.lo, self.hi, pts)

    def refine(self):
        pts = tuple(2 * p - 1 for p in self.points[:-1]) + (2 * self.points[-1],)
        return QuadratureGrid(self.center, self.axes, self.lo, self.hi, pts)

    def with_box(self, lo, hi):
        return QuadratureGrid(self.center, self.axes, np.asarray(lo, dtype=float),
                              np.asarray(hi, dtype=float), self.points)

    def to_coords(self, x):
        return np.asarray(self.center) + np.asarray(x) @ np.asarray(self.axes).T

    def outer_nodes(self):
        """Outer node coordinates ``(M, D-1)`` and trapezoid weights ``(M,)``."""
        D = self.dim
        if D == 1:
            return np.zeros((1, 0)), np.ones(1)
        grids, weights = [], []
        for k in range(D - 1):
            nodes = np.linspace(self.lo[k], self.hi[k], self.points[k])
            h = nodes[1] - nodes[0]
            w = np.full(nodes.size, h)
            w[0] = w[-1] = 0.5 * h
            grids.append(nodes)
            weights.append(w)
        mesh = np.meshgrid(*grids, indexing="ij")
        wmesh = np.meshgrid(*weights, indexing="ij")
        X = np.column_stack([m.ravel() for m in mesh])
        W = np.prod(np.column_stack([w.ravel() for w in wmesh]), axis=1)
        return X, W

    def to_dict(self):
        return {
            "center": np.asarray(self.center).tolist(),
            "axes": np.asarray(self.axes).T.tolist(),
            "lo": np.asarray(self.lo).tolist(),
            "hi": np.asarray(self.hi).tolist(),
            "points": list(self.points),
        }


@dataclass
class GridEval:
    """Node values of several densities on a common set of line nodes."""
    grid: QuadratureGrid
    outer_x: np.ndarray
    outer_w: np.ndarray
    inner_x: np.ndarray
    inner_w: np.ndarray
    values: list
    shifts: list

    def line_integrals(self, k):
        return np.sum(self.values[k] * self.inner_w, axis=1)

    def log_integral(self, k):
        """Log of the integral in grid coordinates (add ``log_jacobian`` for density coordinates)."""
        total = float(np.dot(self.outer_w, self.line_integrals(k)))
        if total <= 0:
            return -np.inf
        return self.shifts[k] + np.log(total)

    def normalized(self, k):
        total = float(np.dot(self.outer_w, self.line_integrals(k)))
        if total <= 0:
            raise GridError(f"density {k} has no mass on the grid")
        return self.values[k] / total


def _line_points(grid, outer_x, inner):
    """Grid coordinates for every (line, inner value) pair; ``inner`` is ``(M, K)``."""
    M, K = inner.shape
    X = np.empty((M, K, grid.dim))
    X[:, :, :-1] = outer_x[:, None, :]
    X[:, :, -1] = inner
    return X


def _support_interval(grid, density, outer_x, nodes):
    """Per-line ``[a, b]`` of the support along the inner axis (``a > b`` if empty)."""
    M = outer_x.shape[0]
    inner = np.broadcast_to(nodes, (M, nodes.size))
    X = _line_points(grid, outer_x, inner).reshape(-1, grid.dim)
    inside = np.asarray(density.support(grid.to_coords(X)), dtype=bool).reshape(M, nodes.size)
    has = inside.any(axis=1)
    first = np.argmax(inside, axis=1)
    last = nodes.size - 1 - np.argmax(inside[:, ::-1], axis=1)
    a = np.where(has, nodes[first], np.inf)
    b = np.where(has, nodes[last], -np.inf)

    def refine(idx_in, idx_out, rows):
        if rows.size == 0:
            return None
        x_in = nodes[idx_in[rows]].astype(float)
        x_out = nodes[idx_out[rows]].astype(float)
        ox = outer_x[rows]
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (x_in + x_out)
            P = _line_points(grid, ox, mid[:, None]).reshape(-1, grid.dim)
            ok = np.asarray(density.support(grid.to_coords(P)), dtype=bool)
            x_in = np.where(ok, mid, x_in)
            x_out = np.where(ok, x_out, mid)
        return x_in

    rows = np.nonzero(has & (first > 0))[0]
    res = refine(first, first - 1, rows)
    if res is not None:
        a[rows] = res
    rows = np.nonzero(has & (last < nodes.size - 1))[0]
    res = refine(last, last + 1, rows)
    if res is not None:
        b[rows] = res
    return a, b


def evaluate(grid, densities):
    """Evaluate densities on a common set of Gauss-Legendre line nodes."""
    outer_x, outer_w = grid.outer_nodes()
    M = outer_x.shape[0]
    lo, hi = float(grid.lo[-1]), float(grid.hi[-1])
    P = grid.points[-1]
    edges_u = np.linspace(lo, hi, P + 1)
    breaks = []
    for dens in densities:
        a, b = _support_interval(grid, dens, outer_x, edges_u)
        empty = a > b
        breaks.append(np.where(empty, lo, np.clip(a, lo, hi)))
        breaks.append(np.where(empty, lo, np.clip(b, lo, hi)))
    edges = np.sort(np.column_stack([np.broadcast_to(edges_u, (M, P + 1))] + breaks), axis=1)
    left, right = edges[:, :-1], edges[:, 1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    inner_x = (mid[:, :, None] + half[:, :, None] * _GL_X).reshape(M, -1)
    inner_w = (half[:, :, None] * _GL_W).reshape(M, -1)
    X = grid.to_coords(_line_points(grid, outer_x, inner_x).reshape(-1, grid.dim))
    values, shifts = [], []
    for dens in densities:
        lp = np.asarray(dens.logpdf(X), dtype=float).reshape(M, -1)
        lp = np.where(inner_w > 0, lp, -np.inf)
        finite = np.isfinite(lp)
        if not finite.any():
            raise GridError(f"density {dens.name or ''} is -inf on every grid node")
        shift = float(lp[finite].max())
        values.append(np.where(finite, np.exp(lp - shift), 0.0))
        shifts.append(shift)
    return GridEval(grid, outer_x, outer_w, inner_x, inner_w, values, shifts)


def coverage_violations(ev, densities, drop=COVERAGE_DROP):
    """Faces of the box beyond which some density still carries mass.

    For each face the densities are evaluated one outer step (or one inner
    panel) outside the box; a face is flagged when some value there exceeds
    ``max - drop`` on the log scale. Log-concavity then bounds the mass beyond
    the face by a geometric tail. Returns a list of ``(axis, side)`` pairs with
    ``side`` in ``{-1, +1}``.
    """
    grid = ev.grid
    D = grid.dim
    flagged = []
    for axis in range(D):
        npts = grid.points[axis] if axis < D - 1 else grid.points[-1] + 1
        h = (grid.hi[axis] - grid.lo[axis]) / (npts - 1)
        for side in (-1, 1):
            if axis == D - 1:
                # inner axis: shift the endpoints of every line
                X = np.column_stack([ev.outer_x, np.full(ev.outer_x.shape[0],
                                     grid.hi[axis] + h if side > 0 else grid.lo[axis] - h)])
            else:
                others = [np.linspace(grid.lo[k], grid.hi[k], min(grid.points[k], 65))
                          if k != axis else np.array([grid.hi[k] + h if side > 0 else grid.lo[k] - h])
                          for k in range(D - 1)]
                others.append(np.linspace(grid.lo[-1], grid.hi[-1], 129))
                mesh = np.meshgrid(*others, indexing="ij")
                X = np.column_stack([m.ravel() for m in mesh])
            C = grid.to_coords(X)
            for k, dens in enumerate(densities):
                lp = np.asarray(dens.logpdf(C), dtype=float)
                if np.any(lp > ev.shifts[k] - drop):
                    flagged.append((axis, side))
                    break
    return flagged


def evaluate_covering(grid, densities, expansions=3, factor=1.5, clip_lo=None, clip_hi=None):
    """:func:`evaluate` with automatic box expansion when mass leaks out.

    ``clip_lo`` / ``clip_hi`` are hard limits (e.g. support bounding boxes)
    that expansion never crosses.
    """
    for attempt in range(expansions + 1):
        ev = evaluate(grid, densities)
        bad = coverage_violations(ev, densities)
        if not bad:
            return ev
        if attempt == expansions:
            break
        lo, hi = np.array(grid.lo, dtype=float), np.array(grid.hi, dtype=float)
        for axis, side in bad:
            width = hi[axis] - lo[axis]
            if side > 0:
                hi[axis] += (factor - 1.0) * width
            else:
                lo[axis] -= (factor - 1.0) * width
        if clip_lo is not None:
            lo = np.maximum(lo, clip_lo)
        if clip_hi is not None:
            hi = np.minimum(hi, clip_hi)
        grid = grid.with_box(lo, hi)
    raise GridError(f"grid misses probability mass beyond faces {bad} after {expansions} expansions")


def log_integral(density, grid, expansions=3):
    """``log of the integral of exp(logpdf)`` over density coordinates.

    Returns ``(value, error_estimate, grid_used)`` where the error estimate is the
    absolute difference between the coarse and fine levels (log scale, which is
    the relative error of the integral).
    """
    ev = evaluate_covering(grid, [density], expansions)
    fine = ev.log_integral(0) + ev.grid.log_jacobian
    coarse_ev = evaluate(ev.grid.coarse(), [density])
    coarse = coarse_ev.log_integral(0) + ev.grid.log_jacobian
    return fine, abs(fine - coarse), ev.grid
