"""Limit laws of the rescaled posterior.

All laws live on the same coordinates as :class:`~lcbvm.posterior.RescaledPosterior`:
canonical ``t`` coordinates for the Gaussian and the cone-truncated Gaussian,
and ``(c_t, c_s)`` with ``t = L_basis @ c_t`` and ``s = Lperp_basis @ c_s`` for the
second-order law. ``log_A_n`` is the log normalizing constant, so the normalized
log-density is the unnormalized one plus ``log_A_n``.
"""
from dataclasses import dataclass, replace
from enum import Enum
from math import log, pi

import numpy as np
from scipy.special import log_ndtr

from .errors import EnvelopeError, GridError, RegimeError
from .geometry import ZERO_TOL, LP_TOL, _lp
from .models import make_rng
from .posterior import Regime
from .quadrature import CoordDensity, QuadratureGrid, log_integral

MIN_ACCEPTANCE = 1e-4


class LawKind(str, Enum):
    GAUSSIAN = "Gaussian"
    TRUNCATED = "ConeTruncatedGaussian"
    SECOND_ORDER = "SecondOrderLaw"


@dataclass(frozen=True)
class LimitLaw:
    kind: LawKind
    frame: object
    y_n: np.ndarray
    mean: np.ndarray
    precision: np.ndarray
    log_A_n: float = None
    log_A_n_error: float = 0.0
    # second-order law only
    w: np.ndarray = None
    facet_t: np.ndarray = None
    facet_s: np.ndarray = None
    facet_hess: np.ndarray = None
    face_mask: np.ndarray = None

    @property
    def dims(self):
        """``(dim t, dim s)``."""
        if self.kind is LawKind.SECOND_ORDER:
            return self.mean.size, self.w.size
        return self.mean.size, 0

    @property
    def dim(self):
        return sum(self.dims)

    @property
    def covariance(self):
        return np.linalg.inv(self.precision)

    def split(self, C):
        C = np.atleast_2d(np.asarray(C, dtype=float))
        k = self.mean.size
        return C[:, :k], C[:, k:]

    # -- support -----------------------------------------------------------
    def support(self, C):
        """Membership of coordinate rows in the support (vectorized)."""
        C = np.atleast_2d(np.asarray(C, dtype=float))
        if self.kind is LawKind.GAUSSIAN:
            return np.ones(C.shape[0], dtype=bool)
        if self.kind is LawKind.TRUNCATED:
            A = self.frame.facet_normals
            if A.shape[0] == 0:
                return np.ones(C.shape[0], dtype=bool)
            tn = 1.0 + np.linalg.norm(C, axis=1)
            return np.all(C @ A.T <= ZERO_TOL * tn[:, None] * np.linalg.norm(A, axis=1), axis=1)
        ct, cs = self.split(C)
        ok = np.ones(C.shape[0], dtype=bool)
        if self.facet_t.shape[0] == 0:
            return ok
        tn = 1.0 + np.linalg.norm(ct, axis=1)
        scale_t = ZERO_TOL * tn[:, None] * (1.0 + np.linalg.norm(self.facet_t, axis=1))
        dots_t = ct @ self.facet_t.T
        ok &= np.all(dots_t <= scale_t, axis=1)
        active = np.abs(dots_t) <= scale_t
        quad = 0.5 * np.einsum("ni,kij,nj->nk", ct, self.facet_hess, ct) + cs @ self.facet_s.T
        scale_q = ZERO_TOL * (1.0 + np.linalg.norm(ct, axis=1) ** 2 + np.linalg.norm(cs, axis=1))
        ok &= np.all(~active | (quad <= scale_q[:, None]), axis=1)
        return ok

    # -- densities ------------------------------------------------------------
    def log_unnormalized(self, C):
        C = np.atleast_2d(np.asarray(C, dtype=float))
        ct, cs = self.split(C)
        r = ct - self.mean
        val = -0.5 * np.einsum("ni,ij,nj->n", r, self.precision, r)
        if self.kind is LawKind.SECOND_ORDER:
            val = val - cs @ self.w
        if self.kind is not LawKind.GAUSSIAN:
            val = np.where(self.support(C), val, -np.inf)
        return val

    def as_density(self):
        return CoordDensity(self.log_unnormalized, self.support, self.kind.value)

    def to_dict(self):
        out = {"kind": self.kind.value, "mean": self.mean.tolist(),
               "precision": self.precision.tolist(), "log_A_n": self.log_A_n,
               "log_A_n_error": self.log_A_n_error}
        if self.w is not None:
            out["u_s"] = self.w.tolist()
        return out


def build_limit(regime, frame, y_n):
    """Construct the limit law matching ``regime`` (a :class:`~lcbvm.posterior.RegimeLabel` or kind)."""
    kind = getattr(regime, "kind", regime)
    kind = Regime(kind)
    y_n = np.asarray(y_n, dtype=float)
    S = np.asarray(frame.S, dtype=float)
    if kind is Regime.WELL:
        if frame.J:
            raise RegimeError("well-specified law needs an interior optimum")
        mean = -np.linalg.solve(S, y_n)
        d = mean.size
        log_A = -0.5 * d * log(2 * pi) + 0.5 * np.linalg.slogdet(S)[1]
        return LimitLaw(LawKind.GAUSSIAN, frame, y_n, mean, S, float(log_A))
    if kind is Regime.NEAR:
        if not frame.J:
            raise RegimeError("truncated law needs a boundary optimum")
        mean = -np.linalg.solve(S, y_n)
        law = LimitLaw(LawKind.TRUNCATED, frame, y_n, mean, S)
        A = frame.facet_normals
        if A.shape[0] == 1:
            # one facet: Gaussian mass of a half-space in closed form
            a = A[0]
            sd = np.sqrt(a @ np.linalg.solve(S, a))
            log_mass = float(log_ndtr(-(a @ mean) / sd))
            log_A = -0.5 * mean.size * log(2 * pi) + 0.5 * np.linalg.slogdet(S)[1] - log_mass
            return replace(law, log_A_n=float(log_A))
        return law
    if not frame.J_star:
        raise RegimeError("second-order law needs a nonempty face set")
    BL, BV = frame.L_basis, frame.Lperp_basis
    S_L = BL.T @ S @ BL
    mean = -np.linalg.solve(S_L, BL.T @ y_n) if BL.shape[1] else np.zeros(0)
    w = BV.T @ frame.u
    U = frame.facet_normals
    facet_t = U @ BL
    facet_s = U @ BV
    facet_hess = np.array([BL.T @ frame.hess_j[j] @ BL for j in frame.J_tilde])
    face_mask = np.array([j in frame.J_star for j in frame.J_tilde])
    return LimitLaw(LawKind.SECOND_ORDER, frame, y_n, mean, S_L, None, 0.0,
                    w, facet_t, facet_s, facet_hess, face_mask)


def log_density(law, point):
    """Normalized log-density at coordinate rows (``-inf`` off the support)."""
    if law.log_A_n is None:
        raise GridError("law is not normalized; call normalize first")
    val = law.log_unnormalized(point) + law.log_A_n
    return float(val[0]) if np.ndim(point) == 1 else val


# ---------------------------------------------------------------------------
# grids adapted to a law
# ---------------------------------------------------------------------------

DEFAULT_POINTS = {1: (801,), 2: (201, 401), 3: (65, 65, 129)}
HALF_WIDTH = 8.0


def default_points(D):
    pts = DEFAULT_POINTS[D]
    return tuple(pts[:-1]) + (pts[-1] - 1,)


def _complete_basis(first):
    """Orthonormal basis whose last column is ``first``."""
    d = first.size
    first = first / np.linalg.norm(first)
    Q, _ = np.linalg.qr(np.column_stack([first, np.eye(d)]))
    Q = Q[:, :d]
    Q[:, 0] *= np.sign(Q[:, 0] @ first)
    return np.column_stack([Q[:, 1:], Q[:, 0]])


def _bbox(center, axes, lo, hi, A_ub, b_ub):
    """Bounding box (grid coordinates) of ``{x in [lo, hi] : A_ub @ (center + axes x) <= b_ub}``."""
    D = lo.size
    if A_ub is None or A_ub.shape[0] == 0:
        return lo.copy(), hi.copy()
    A = A_ub @ axes
    b = b_ub - A_ub @ center
    new_lo, new_hi = lo.copy(), hi.copy()
    bounds = list(zip(lo, hi))
    for k in range(D):
        e = np.zeros(D)
        e[k] = 1.0
        new_lo[k] = _lp(e, A_ub=A, b_ub=b, bounds=bounds, what="bounding box LP").fun
        new_hi[k] = -_lp(-e, A_ub=A, b_ub=b, bounds=bounds, what="bounding box LP").fun
    return new_lo, new_hi


def _open_bbox(center, axes, A_ub, b_ub, big=1e6):
    """Bounding box of a polyhedron in grid coordinates, ``+-inf`` where unbounded."""
    D = axes.shape[1]
    lo, hi = _bbox(center, axes, np.full(D, -big), np.full(D, big), A_ub, b_ub)
    lo = np.where(lo <= -0.5 * big, -np.inf, lo)
    hi = np.where(hi >= 0.5 * big, np.inf, hi)
    return lo, hi


def law_grid(law, points=None, half_width=HALF_WIDTH, s_budget=45.0):
    """Quadrature grid covering the law's mass, plus hard clip limits.

    Returns ``(grid, clip_lo, clip_hi)``.
    """
    D = law.dim
    if D > 3:
        raise GridError("quadrature is limited to dimension 3")
    points = tuple(points) if points is not None else default_points(D)
    cov = np.linalg.inv(law.precision) if law.mean.size else np.zeros((0, 0))
    if law.kind is LawKind.GAUSSIAN:
        evals, evecs = np.linalg.eigh(cov)
        sd = np.sqrt(evals)
        grid = QuadratureGrid(law.mean, evecs, -half_width * sd, half_width * sd, points)
        return grid, None, None
    if law.kind is LawKind.TRUNCATED:
        A = law.frame.facet_normals
        axes = _complete_basis(A[0])
        sd = np.sqrt(np.einsum("ik,ij,jk->k", axes, cov, axes))
        lo, hi = -half_width * sd, half_width * sd
        # keep the box around the part of the cone near the mean
        center = law.mean.copy()
        clip_lo, clip_hi = _open_bbox(center, axes, A, np.zeros(A.shape[0]))
        lo, hi = np.maximum(lo, clip_lo), np.minimum(hi, clip_hi)
        if np.any(hi <= lo):
            raise GridError("support cone misses the box around the Gaussian mean")
        return QuadratureGrid(center, axes, lo, hi, points), clip_lo, clip_hi
    k, m = law.dims
    if k:
        evals, evecs = np.linalg.eigh(cov)
        sd_t = np.sqrt(evals)
    else:
        evecs, sd_t = np.zeros((0, 0)), np.zeros(0)
    axes = np.zeros((D, D))
    axes[:k, :k] = evecs
    axes[k:, k:] = np.eye(m)
    center = np.concatenate([law.mean, np.zeros(m)])
    r_t = half_width * float(sd_t.max()) if k else 0.0
    r_t += np.linalg.norm(law.mean)
    hmax = max([float(np.linalg.eigvalsh(H).max()) for H in law.facet_hess] + [0.0]) if k else 0.0
    lam = law.frame.lam
    q_max = 0.5 * float(np.sum(lam)) * hmax * r_t**2
    budget = s_budget + q_max
    alpha = law.frame.alpha_finite
    R_s = budget / alpha
    lo = np.concatenate([-half_width * sd_t, np.full(m, -R_s)])
    hi = np.concatenate([half_width * sd_t, np.full(m, R_s)])
    # constraints: facet half-spaces in t, face half-spaces in s, budget on u . s
    rows, rhs = [], []
    for i in range(law.facet_t.shape[0]):
        if np.linalg.norm(law.facet_t[i]) > ZERO_TOL:
            rows.append(np.concatenate([law.facet_t[i], np.zeros(m)]))
            rhs.append(0.0)
        if law.face_mask[i]:
            rows.append(np.concatenate([np.zeros(k), law.facet_s[i]]))
            rhs.append(0.0)
    clip_lo, clip_hi = _open_bbox(center, axes, np.array(rows).reshape(-1, D), np.array(rhs))
    rows.append(np.concatenate([np.zeros(k), law.w]))
    rhs.append(budget)
    lo, hi = _bbox(center, axes, lo, hi, np.array(rows), np.array(rhs))
    grid = QuadratureGrid(center, axes, lo, hi, points)
    return grid, clip_lo, clip_hi


def normalize(law, points=None, rel_tol=1e-4, max_refine=3):
    """Compute ``log_A_n`` by quadrature, refining until the level change is below ``rel_tol``."""
    if law.kind is LawKind.SECOND_ORDER and not law.frame.alpha_finite > 0:
        raise EnvelopeError("exponential envelope needs a positive alpha")
    grid, _, _ = law_grid(law, points)
    dens = law.as_density()
    for _ in range(max_refine + 1):
        val, err, grid = log_integral(dens, grid)
        if err < rel_tol:
            break
        grid = grid.refine()
    else:
        raise GridError(f"normalizer did not converge (relative change {err:.2e})")
    return replace(law, log_A_n=float(-val), log_A_n_error=float(err))


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleResult:
    points: np.ndarray
    acceptance: float
    proposals: int


def _gaussian(law, rng, count):
    L = np.linalg.cholesky(np.linalg.inv(law.precision))
    return law.mean + rng.standard_normal((count, law.mean.size)) @ L.T


def _cone_simplices(A, w):
    """Simplicial decomposition of ``{c : A c <= 0}`` with exponential-mass weights.

    Returns a list of ``(R, rates, log_weight)`` with ``R`` the ray matrix
    (columns), ``rates = w . r_k`` and weight ``|det R| / prod(rates)``.
    """
    from .geometry import _extreme_rays
    m = w.size
    rays = _extreme_rays(A) if A.shape[0] else []
    if len(rays) < m:
        raise EnvelopeError("exponential envelope needs a pointed cone with m extreme rays")
    rays = [r / np.linalg.norm(r) for r in rays]
    if len(rays) == m:
        groups = [rays]
    elif m == 3:
        axis = np.mean(rays, axis=0)
        axis /= np.linalg.norm(axis)
        b1 = rays[0] - (rays[0] @ axis) * axis
        b1 /= np.linalg.norm(b1)
        b2 = np.cross(axis, b1)
        order = sorted(rays, key=lambda r: np.arctan2(r @ b2, r @ b1))
        groups = [[order[0], order[i], order[i + 1]] for i in range(1, len(order) - 1)]
    else:
        raise EnvelopeError("cone decomposition not available for this dimension")
    out = []
    for g in groups:
        R = np.column_stack(g)
        rates = w @ R
        if np.any(rates <= LP_TOL):
            raise EnvelopeError("exponential envelope has a non-positive rate along a ray")
        out.append((R, rates, float(np.log(abs(np.linalg.det(R))) - np.sum(np.log(rates)))))
    return out


def sample(law, count, seed, batch=None, min_acceptance=MIN_ACCEPTANCE):
    """Draw ``count`` coordinate rows from the law.

    Gaussian: direct. Truncated Gaussian: rejection from the untruncated
    Gaussian. Second-order law: rejection from the product of the Gaussian
    ``t``-factor and the exponential ``e^{-u . s}`` on the face cone of ``s``
    (whose support contains every section ``C_2(t)``), accepting iff
    ``(t, s)`` lies in ``C_2``.
    """
    rng = make_rng(seed)
    count = int(count)
    if law.kind is LawKind.GAUSSIAN:
        return SampleResult(_gaussian(law, rng, count), 1.0, count)
    batch = batch or max(4096, 2 * count)
    k, m = law.dims
    simplices = None
    if law.kind is LawKind.SECOND_ORDER:
        A = law.facet_s[law.face_mask]
        simplices = _cone_simplices(A, law.w)
        logw = np.array([s[2] for s in simplices])
        probs = np.exp(logw - logw.max())
        probs /= probs.sum()
    kept, proposals, accepted = [], 0, 0
    while accepted < count:
        if law.kind is LawKind.TRUNCATED:
            prop = _gaussian(law, rng, batch)
        else:
            ct = _gaussian(law, rng, batch) if k else np.zeros((batch, 0))
            which = rng.choice(len(simplices), size=batch, p=probs)
            cs = np.empty((batch, m))
            for idx, (R, rates, _) in enumerate(simplices):
                sel = which == idx
                e = rng.exponential(1.0, size=(int(sel.sum()), m)) / rates
                cs[sel] = e @ R.T
            prop = np.hstack([ct, cs])
        ok = law.support(prop)
        proposals += batch
        accepted += int(ok.sum())
        kept.append(prop[ok])
        rate = accepted / proposals
        if rate < min_acceptance:
            raise EnvelopeError(
                f"rejection acceptance {rate:.2e} below {min_acceptance:.0e} "
                f"after {proposals} proposals ({law.kind.value})")
    pts = np.vstack(kept)[:count]
    return SampleResult(pts, accepted / proposals, proposals)
