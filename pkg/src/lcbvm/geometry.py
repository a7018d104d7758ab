"""Constraint sets and the cone geometry at the constrained optimum.

Indices of constraints are 0-based positions in ``ConstraintSet.g``.

Notation follows the usual conventions: ``u`` is the population gradient at
``theta_star``, ``S`` the population Hessian, ``u_j`` the gradients of the
active constraints. ``C`` is the support cone ``{t : u_j . t <= 0, j in J}``,
``L`` the linear hull of the face ``C cap u^perp`` and ``V`` its complement
orthogonal for ``<x, y>_S = x' S y``.
"""
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import brentq, linprog, nnls

from .errors import CatalogError, ConfigError, DegenerateGeometryError, GeometryError, RegimeError
from .optim import minimize_convex

FEAS_TOL = 1e-10
LP_TOL = 1e-9
ZERO_TOL = 1e-10


# ---------------------------------------------------------------------------
# scalar constraint functions
# ---------------------------------------------------------------------------

class AffineConstraint:
    """``a . x - b <= 0``."""

    def __init__(self, a, b):
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)

    def value(self, x):
        return np.asarray(x, dtype=float) @ self.a - self.b

    def grad(self, x):
        return self.a.copy()

    def hess(self, x):
        return np.zeros((self.a.size, self.a.size))


class QuadraticConstraint:
    """``(x - c)' A (x - c) - r2 <= 0`` with ``A`` symmetric positive semidefinite."""

    def __init__(self, center, matrix, r2):
        self.center = np.asarray(center, dtype=float)
        self.matrix = np.asarray(matrix, dtype=float)
        self.r2 = float(r2)

    def value(self, x):
        y = np.asarray(x, dtype=float) - self.center
        return np.einsum("...i,ij,...j->...", y, self.matrix, y) - self.r2

    def grad(self, x):
        return 2.0 * self.matrix @ (np.asarray(x, dtype=float) - self.center)

    def hess(self, x):
        return 2.0 * self.matrix


# ---------------------------------------------------------------------------
# shapes: groups of constraints with an exact projection
# ---------------------------------------------------------------------------

class HalfSpace:
    kind = "halfspace"

    def __init__(self, normal, offset=0.0):
        self.normal = np.asarray(normal, dtype=float)
        if not np.any(self.normal):
            raise ConfigError("halfspace normal must be nonzero")
        self.offset = float(offset)
        self.constraints = [AffineConstraint(self.normal, self.offset)]

    def project(self, x):
        viol = x @ self.normal - self.offset
        if viol <= 0:
            return x
        return x - viol / (self.normal @ self.normal) * self.normal

    def to_dict(self):
        return {"shape": self.kind, "normal": self.normal.tolist(), "offset": self.offset}


class Box:
    kind = "box"

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if np.any(self.lower >= self.upper):
            raise ConfigError("box needs lower < upper in every coordinate")
        d = self.lower.size
        self.constraints = []
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            if np.isfinite(self.upper[k]):
                self.constraints.append(AffineConstraint(e, self.upper[k]))
            if np.isfinite(self.lower[k]):
                self.constraints.append(AffineConstraint(-e, -self.lower[k]))

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def to_dict(self):
        return {"shape": self.kind, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class OrthantShift(Box):
    """``{x : x_k <= shift_k}``: the nonpositive orthant translated by ``shift``."""

    kind = "orthant-shift"

    def __init__(self, shift):
        shift = np.asarray(shift, dtype=float)
        super().__init__(np.full(shift.size, -np.inf), shift)
        self.shift = shift

    def to_dict(self):
        return {"shape": self.kind, "shift": self.shift.tolist()}


class Ball:
    kind = "ball"

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ConfigError("ball radius must be positive")
        d = self.center.size
        self.constraints = [QuadraticConstraint(self.center, np.eye(d), self.radius**2)]

    def project(self, x):
        y = x - self.center
        r = np.linalg.norm(y)
        if r <= self.radius:
            return x
        return self.center + y * (self.radius / r)

    def to_dict(self):
        return {"shape": self.kind, "center": self.center.tolist(), "radius": self.radius}


class Ellipsoid:
    """``{x : (x - c)' A (x - c) <= 1}`` with ``A`` positive definite."""

    kind = "ellipsoid"

    def __init__(self, center, matrix):
        self.center = np.asarray(center, dtype=float)
        self.matrix = np.asarray(matrix, dtype=float)
        if not np.allclose(self.matrix, self.matrix.T) or np.linalg.eigvalsh(self.matrix)[0] <= 0:
            raise ConfigError("ellipsoid matrix must be symmetric positive definite")
        self.constraints = [QuadraticConstraint(self.center, self.matrix, 1.0)]
        self._eig = np.linalg.eigh(self.matrix)

    def project(self, x):
        y = x - self.center
        if y @ self.matrix @ y <= 1.0:
            return x
        lam, Q = self._eig
        z = Q.T @ y

        def excess(mu):
            w = z / (1.0 + mu * lam)
            return np.sum(lam * w * w) - 1.0

        hi = 1.0
        while excess(hi) > 0:
            hi *= 2.0
        mu = brentq(excess, 0.0, hi, xtol=1e-15, rtol=1e-15)
        return self.center + Q @ (z / (1.0 + mu * lam))

    def to_dict(self):
        return {"shape": self.kind, "center": self.center.tolist(), "matrix": self.matrix.tolist()}


class ConstraintSet:
    """``Theta = {theta : g_j(theta) <= 0}`` built from shapes.

    With no shapes the set is all of ``R^d``.
    """

    def __init__(self, dim, shapes=()):
        self.dim = int(dim)
        self.shapes = list(shapes)
        self.g = [c for sh in self.shapes for c in sh.constraints]
        for c in self.g:
            if np.asarray(c.grad(np.zeros(self.dim))).shape != (self.dim,):
                raise ConfigError("constraint dimension does not match the parameter dimension")

    @property
    def p(self):
        return len(self.g)

    def values(self, theta):
        theta = np.asarray(theta, dtype=float)
        if not self.g:
            return np.zeros(theta.shape[:-1] + (0,))
        return np.stack([c.value(theta) for c in self.g], axis=-1)

    def contains(self, theta, tol=FEAS_TOL):
        vals = self.values(theta)
        if vals.shape[-1] == 0:
            return np.ones(vals.shape[:-1], dtype=bool)
        return np.all(vals <= tol, axis=-1)

    def cut_oracles(self, tol=0.0):
        return [(lambda x, c=c: (float(c.value(x)) - tol, c.grad(x))) for c in self.g]

    def project(self, x, tol=1e-14, max_iter=20_000):
        """Euclidean projection (Dykstra's algorithm for intersections)."""
        x = np.asarray(x, dtype=float)
        if not self.shapes:
            return x.copy()
        if len(self.shapes) == 1:
            return self.shapes[0].project(x)
        y = x.copy()
        incr = [np.zeros_like(x) for _ in self.shapes]
        for _ in range(max_iter):
            y_prev = y.copy()
            for k, sh in enumerate(self.shapes):
                z = sh.project(y + incr[k])
                incr[k] = y + incr[k] - z
                y = z
            if np.linalg.norm(y - y_prev) <= tol * (1.0 + np.linalg.norm(y)):
                break
        return y

    def slater_point(self):
        """A point with ``max_j g_j < 0``; raises if the interior looks empty."""
        if not self.g:
            return np.zeros(self.dim)

        def f(x):
            return max(-1.0, max(float(c.value(x)) for c in self.g))

        def sg(x):
            vals = [float(c.value(x)) for c in self.g]
            j = int(np.argmax(vals))
            if vals[j] <= -1.0:
                return np.zeros(self.dim)
            return self.g[j].grad(x)

        x0 = self.project(np.zeros(self.dim))
        res = minimize_convex(f, sg, x0, 10.0 * (1.0 + np.linalg.norm(x0)), xtol=1e-9)
        if res.fun >= 0:
            raise GeometryError("constraint set has empty interior (no Slater point)")
        return res.x

    def to_dict(self):
        if not self.shapes:
            return {"shape": "none"}
        if len(self.shapes) == 1:
            return self.shapes[0].to_dict()
        return {"shape": "intersection", "parts": [sh.to_dict() for sh in self.shapes]}


def constraint_set_from_config(spec, dim):
    """Build a :class:`ConstraintSet` from its JSON description."""
    spec = dict(spec or {"shape": "none"})
    shape = spec.get("shape", "none")

    def vec(key, default=None):
        val = spec.get(key, default)
        if val is None:
            raise ConfigError(f"constraint shape {shape!r} needs {key!r}")
        arr = np.asarray(val, dtype=float).reshape(-1)
        if arr.size == 1 and dim > 1 and key in ("lower", "upper", "shift"):
            arr = np.full(dim, arr[0])
        if arr.size != dim:
            raise ConfigError(f"{shape}.{key} must have length {dim}")
        return arr

    if shape in ("none", "full", "rd"):
        return ConstraintSet(dim)
    if shape == "halfspace":
        return ConstraintSet(dim, [HalfSpace(vec("normal"), spec.get("offset", 0.0))])
    if shape == "box":
        return ConstraintSet(dim, [Box(vec("lower"), vec("upper"))])
    if shape == "orthant-shift":
        return ConstraintSet(dim, [OrthantShift(vec("shift", [0.0] * dim))])
    if shape == "ball":
        return ConstraintSet(dim, [Ball(vec("center", [0.0] * dim), spec.get("radius", 1.0))])
    if shape == "ellipsoid":
        m = np.asarray(spec.get("matrix"), dtype=float)
        if m.shape != (dim, dim):
            raise ConfigError(f"ellipsoid.matrix must be {dim} x {dim}")
        return ConstraintSet(dim, [Ellipsoid(vec("center", [0.0] * dim), m)])
    if shape == "intersection":
        parts = spec.get("parts") or []
        if not parts:
            raise ConfigError("intersection needs a non-empty 'parts' list")
        shapes = []
        for part in parts:
            shapes.extend(constraint_set_from_config(part, dim).shapes)
        return ConstraintSet(dim, shapes)
    raise CatalogError(f"unknown constraint shape {shape!r}")


# ---------------------------------------------------------------------------
# cone geometry
# ---------------------------------------------------------------------------

def _lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None, what="LP"):
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        raise GeometryError(f"{what} failed: status {res.status}, {res.message}")
    return res


def active_set(cs, theta_star, tol=None):
    """Indices ``j`` with ``g_j(theta_star) = 0`` up to ``1e-8 (1 + |grad g_j|)``."""
    theta_star = np.asarray(theta_star, dtype=float)
    J = []
    for j, c in enumerate(cs.g):
        val = float(c.value(theta_star))
        tj = tol if tol is not None else 1e-8 * (1.0 + np.linalg.norm(c.grad(theta_star)))
        if val > tj:
            raise GeometryError(f"theta_star is infeasible: g_{j} = {val:.3e}")
        if abs(val) <= tj:
            J.append(j)
    return tuple(J)


def _canonical(indices, rows):
    """Drop zero rows and parallel duplicates (angle < 1e-8), keeping the lowest index."""
    kept = []
    for j in indices:
        r = rows[j]
        nr = np.linalg.norm(r)
        if nr <= ZERO_TOL:
            continue
        dup = False
        for k in kept:
            cosang = rows[k] @ r / (np.linalg.norm(rows[k]) * nr)
            if cosang > 1.0 - 0.5e-16 or np.arccos(min(1.0, cosang)) < 1e-8:
                dup = True
                break
        if not dup:
            kept.append(j)
    return kept


def facet_set(J, rows, tol=LP_TOL):
    """Active indices whose hyperplane cuts a facet of ``C = {t : rows_j . t <= 0}``.

    ``rows`` maps each index in ``J`` to its gradient ``u_j``.
    """
    cand = _canonical(J, rows)
    facets = []
    for j in cand:
        others = [k for k in cand if k != j]
        uj = rows[j] / np.linalg.norm(rows[j])
        A = [rows[k] / np.linalg.norm(rows[k]) for k in others] + [uj]
        b = [0.0] * len(others) + [1.0]
        res = _lp(-uj, A_ub=np.array(A), b_ub=np.array(b),
                  bounds=[(None, None)] * uj.size, what=f"facet LP for constraint {j}")
        if -res.fun > tol:
            facets.append(j)
    return tuple(facets)


def face_set(u, J_tilde, rows, tol=LP_TOL):
    """Facets containing the face ``C cap u^perp`` and the multipliers of ``-u``.

    Returns ``(J_star, lam)`` with ``-u = sum_j lam_j u_j`` and ``lam_j > 0``.
    """
    u = np.asarray(u, dtype=float)
    d = u.size
    if not J_tilde:
        raise RegimeError("no active facets: -u cannot lie in the normal cone")
    U = np.array([rows[j] for j in J_tilde])
    # first-order optimality: -u must be a nonnegative combination of facet normals
    coef, resid = nnls(U.T, -u)
    if resid > 1e-8 * (1.0 + np.linalg.norm(u)):
        raise RegimeError(f"-grad Phi(theta_star) is not in the normal cone (residual {resid:.2e})")
    scale = np.linalg.norm(U, axis=1)
    Un = U / scale[:, None]
    unorm = u / np.linalg.norm(u)
    J_star = []
    for idx, j in enumerate(J_tilde):
        res = _lp(Un[idx], A_ub=Un, b_ub=np.zeros(len(J_tilde)), A_eq=unorm[None, :],
                  b_eq=[0.0], bounds=[(-1.0, 1.0)] * d, what=f"face LP for constraint {j}")
        if res.fun >= -tol:
            J_star.append(j)
    J_star = tuple(J_star)
    if not J_star:
        raise DegenerateGeometryError("face C cap u^perp is contained in no facet")
    Us = np.array([rows[j] for j in J_star])
    lam, resid = nnls(Us.T, -u)
    if resid > 1e-8 * (1.0 + np.linalg.norm(u)):
        raise RegimeError(f"-u is not spanned by the face normals (residual {resid:.2e})")
    if lam.min() <= tol and np.linalg.matrix_rank(Us) < len(J_star):
        # non-unique representation: look for one with every coefficient positive
        k = len(J_star)
        c = np.zeros(k + 1)
        c[-1] = -1.0
        A_eq = np.hstack([Us.T, np.zeros((d, 1))])
        A_ub = np.hstack([-np.eye(k), np.ones((k, 1))])
        res = _lp(c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=-u,
                  bounds=[(0, None)] * k + [(None, 1.0)], what="positive multiplier LP")
        lam = res.x[:k]
    if lam.min() <= tol:
        raise DegenerateGeometryError(
            f"multiplier {lam.min():.2e} is not positive: -u lies on the relative boundary "
            "of the cone spanned by the face normals")
    return J_star, lam


def _orthonormal(mat, tol=1e-10):
    """Orthonormal basis of the column space of ``mat``."""
    if mat.size == 0:
        return np.zeros((mat.shape[0], 0))
    U, s, _ = np.linalg.svd(mat, full_matrices=False)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return U[:, :rank]


def split_spaces(normals, S):
    """Bases of ``L = {t : n . t = 0 for n in normals}`` and of its ``S``-orthogonal complement."""
    S = np.asarray(S, dtype=float)
    d = S.shape[0]
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    if normals.size == 0:
        raise GeometryError("split_spaces needs at least one face normal")
    row_space = _orthonormal(normals.T)
    if row_space.shape[1] == d:
        L = np.zeros((d, 0))
    else:
        _, _, Vt = np.linalg.svd(row_space.T)
        L = Vt[row_space.shape[1]:].T
        L = _orthonormal(L)
    V = _orthonormal(np.linalg.solve(S, normals.T))
    return L, V


def _extreme_rays(A):
    """Unit extreme rays of the pointed cone ``{c : A c <= 0}`` in ``R^m``."""
    k, m = A.shape
    if m == 1:
        col = A[:, 0]
        rays = []
        for sgn in (1.0, -1.0):
            if np.all(sgn * col <= ZERO_TOL * np.abs(col).max()):
                rays.append(np.array([sgn]))
        return rays
    rays = []
    scale = np.abs(A).max()
    for sub in combinations(range(k), m - 1):
        M = A[list(sub)]
        if np.linalg.matrix_rank(M, tol=1e-10 * scale) < m - 1:
            continue
        r = np.linalg.svd(M)[2][-1]
        for cand in (r, -r):
            if np.all(A @ cand <= 1e-10 * scale):
                if not any(np.allclose(cand, q, atol=1e-9) for q in rays):
                    rays.append(cand / np.linalg.norm(cand))
    return rays


def cone_alpha(u, normals, V):
    """``min { u . s : s in span(V), normals . s <= 0, |s| = 1 }``.

    The ratio ``u . s / |s|`` is quasi-concave on the cone, so the minimum over
    the unit sphere is attained on an extreme ray; the rays are enumerated.
    """
    A = np.atleast_2d(normals) @ V
    w = V.T @ np.asarray(u, dtype=float)
    rays = _extreme_rays(A)
    if not rays:
        raise GeometryError("cone of admissible s directions has no extreme ray")
    return float(min(w @ r for r in rays)), [V @ r for r in rays]


@dataclass(frozen=True)
class ConeFrame:
    theta_star: np.ndarray
    u: np.ndarray
    S: np.ndarray
    J: tuple
    u_j: dict
    hess_j: dict
    J_tilde: tuple
    J_star: tuple = ()
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))
    L_basis: np.ndarray = None
    Lperp_basis: np.ndarray = None
    alpha_finite: float = float("nan")
    alpha_feasible: float = float("nan")
    extreme_rays: tuple = ()

    @property
    def dim(self):
        return self.theta_star.size

    @property
    def facet_normals(self):
        if not self.J_tilde:
            return np.zeros((0, self.dim))
        return np.array([self.u_j[j] for j in self.J_tilde])

    @property
    def active_normals(self):
        if not self.J:
            return np.zeros((0, self.dim))
        return np.array([self.u_j[j] for j in self.J])

    def to_dict(self):
        out = {
            "theta_star": self.theta_star.tolist(),
            "u": self.u.tolist(),
            "S": self.S.tolist(),
            "J": list(self.J),
            "J_tilde": list(self.J_tilde),
            "J_star": list(self.J_star),
            "lambda": self.lam.tolist(),
            "u_j": {str(j): self.u_j[j].tolist() for j in self.J},
            "alpha_finite": _jsonable(self.alpha_finite),
            "alpha_feasible": _jsonable(self.alpha_feasible),
        }
        if self.L_basis is not None:
            out["dim_L"] = int(self.L_basis.shape[1])
            out["L_basis"] = self.L_basis.T.tolist()
        if self.Lperp_basis is not None:
            out["dim_Lperp"] = int(self.Lperp_basis.shape[1])
            out["Lperp_basis"] = self.Lperp_basis.T.tolist()
        return out


def _jsonable(x):
    return None if x is None or not np.isfinite(x) else float(x)


def alpha_constants(frame):
    """``(alpha_finite, alpha_feasible)``; both equal the cone bound on ``V``.

    Points of ``Theta - theta_star`` have ``V``-components inside the same cone
    ``{s in V : u_j . s <= 0, j in J*}`` because ``Theta`` lies in the
    intersection of the face half-spaces, so one constant serves both.
    """
    if not frame.J_star:
        raise GeometryError("alpha constants need a nonempty face set")
    normals = np.array([frame.u_j[j] for j in frame.J_star])
    alpha, _ = cone_alpha(frame.u, normals, frame.Lperp_basis)
    if alpha <= LP_TOL:
        raise GeometryError(f"alpha = {alpha:.3e} is not positive; geometry is degenerate")
    return alpha, alpha


def build_frame(cs, theta_star, u, S, grad_tol=1e-6):
    """Compute all cone geometry at ``theta_star``.

    For ``|u| <= grad_tol`` only the active and facet sets are filled in.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    u = np.asarray(u, dtype=float)
    S = np.asarray(S, dtype=float)
    J = active_set(cs, theta_star)
    rows = {j: np.asarray(cs.g[j].grad(theta_star), dtype=float) for j in J}
    hess = {j: np.asarray(cs.g[j].hess(theta_star), dtype=float) for j in J}
    J_tilde = facet_set(J, rows) if J else ()
    if not J or np.linalg.norm(u) <= grad_tol:
        return ConeFrame(theta_star, u, S, J, rows, hess, J_tilde)
    J_star, lam = face_set(u, J_tilde, rows)
    normals = np.array([rows[j] for j in J_star])
    L, V = split_spaces(normals, S)
    alpha, _ = cone_alpha(u, normals, V)
    if alpha <= LP_TOL:
        raise GeometryError(f"alpha = {alpha:.3e} is not positive; geometry is degenerate")
    _, rays = cone_alpha(u, normals, V)
    return ConeFrame(theta_star, u, S, J, rows, hess, J_tilde, J_star, lam, L, V,
                     alpha, alpha, tuple(rays))


def J_of_t(frame, t, tol=ZERO_TOL):
    """Facet indices with ``u_j . t = 0``; boolean mask over ``J_tilde`` for arrays."""
    t = np.asarray(t, dtype=float)
    U = frame.facet_normals
    if U.shape[0] == 0:
        return () if t.ndim == 1 else np.zeros(t.shape[:-1] + (0,), dtype=bool)
    dots = t @ U.T
    thr = tol * (1.0 + np.linalg.norm(t, axis=-1))[..., None] * np.linalg.norm(U, axis=1)
    mask = np.abs(dots) <= thr
    if t.ndim == 1:
        return tuple(j for j, m in zip(frame.J_tilde, mask) if m)
    return mask


def in_face_cone(frame, t, tol=ZERO_TOL):
    """``t in C cap u^perp`` (vectorized over leading axes)."""
    t = np.asarray(t, dtype=float)
    tn = 1.0 + np.linalg.norm(t, axis=-1)
    ok = np.abs(t @ frame.u) <= tol * tn * (1.0 + np.linalg.norm(frame.u))
    A = frame.active_normals
    if A.shape[0]:
        ok &= np.all(t @ A.T <= tol * tn[..., None] * np.linalg.norm(A, axis=1), axis=-1)
    return ok


@dataclass(frozen=True)
class SecondOrderSets:
    frame: ConeFrame
    cs: ConstraintSet

    def J_of_t(self, t):
        return J_of_t(self.frame, t)

    def c2_contains(self, t, s, tol=ZERO_TOL):
        return c2_membership(self, t, s, tol)

    def c2n_contains(self, t, s, n):
        return c2n_membership(self, t, s, n)


def c2_membership(sets, t, s, tol=ZERO_TOL):
    """Membership in the second-order tangent set ``C_2`` (vectorized)."""
    frame = sets.frame
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if t.ndim == 1:
        return bool(c2_membership(sets, t[None], s[None], tol)[0])
    ok = in_face_cone(frame, t, tol)
    if frame.J_tilde:
        mask = J_of_t(frame, t, tol)
        for k, j in enumerate(frame.J_tilde):
            q = 0.5 * np.einsum("...i,ij,...j->...", t, frame.hess_j[j], t) + s @ frame.u_j[j]
            scale = 1.0 + np.linalg.norm(t, axis=-1) ** 2 + np.linalg.norm(s, axis=-1)
            ok &= ~mask[..., k] | (q <= tol * scale)
    return ok


def c2n_membership(sets, t, s, n):
    """``theta_star + t / sqrt(n) + s / n in Theta``."""
    theta = sets.frame.theta_star + np.asarray(t, dtype=float) / np.sqrt(n) \
        + np.asarray(s, dtype=float) / n
    return sets.cs.contains(theta)


def tangent_membership(frame, cs, t, n=None, tol=ZERO_TOL):
    """``t in T_n = sqrt(n) (Theta - theta_star)``, or ``t in C`` when ``n`` is None."""
    t = np.asarray(t, dtype=float)
    if n is not None:
        return cs.contains(frame.theta_star + t / np.sqrt(n))
    U = frame.facet_normals
    if U.shape[0] == 0:
        return np.ones(t.shape[:-1], dtype=bool) if t.ndim > 1 else True
    tn = 1.0 + np.linalg.norm(t, axis=-1)
    return np.all(t @ U.T <= tol * tn[..., None] * np.linalg.norm(U, axis=1), axis=-1)

