"""Exact rescaled posteriors, regime classification and point estimates.

The posterior with flat prior on ``Theta`` has density proportional to
``exp(-n Phi_n(theta))`` on ``Theta``. After recentring at ``theta_star`` the
log-density is evaluated relative to ``Phi_n(theta_star)``:

* interior or zero-gradient boundary optimum: ``t = sqrt(n) (theta - theta_star)``
  and ``log q(t) = -n (Phi_n(theta_star + t / sqrt(n)) - Phi_n(theta_star))``;
* boundary optimum with nonzero gradient: ``theta = theta_star + t / sqrt(n) + s / n``
  with ``t`` in ``L`` and ``s`` in its ``S``-orthogonal complement ``V``.

Points outside the support get log-density ``-inf``.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from math import lgamma, log, pi

import numpy as np
from scipy.optimize import nnls
from scipy.special import gammaln, logsumexp

from .errors import CertificateUnavailable, RegimeError, SolverError
from .geometry import ConeFrame, active_set, build_frame
from .models import Dataset, subgradient_summary
from .optim import minimize_in_ball, minimize_smooth

GRAD_TOL = 1e-6


class Regime(str, Enum):
    WELL = "WellSpecified"
    NEAR = "NearlyMisspecified"
    MIS = "Misspecified"


@dataclass(frozen=True)
class RegimeLabel:
    kind: Regime
    interior: bool
    grad_norm: float
    tol: float = GRAD_TOL

    def __str__(self):
        return self.kind.value

    def to_dict(self):
        return {"regime": self.kind.value, "interior": self.interior,
                "grad_norm": self.grad_norm, "tol": self.tol}


# ---------------------------------------------------------------------------
# population optimum
# ---------------------------------------------------------------------------

def _kkt_multipliers(cs, theta, grad, J):
    if not J:
        return np.zeros(0), float(np.linalg.norm(grad))
    G = np.array([cs.g[j].grad(theta) for j in J])
    lam, resid = nnls(G.T, -grad)
    return lam, float(resid)


def _constraint_triples(cs, shift=None, scale=1.0):
    """``(value, grad, hess)`` callables for ``g_j(shift + x * scale)`` (identity by default)."""
    out = []
    for c in cs.g:
        if shift is None:
            out.append((c.value, c.grad, c.hess))
        else:
            out.append((lambda x, c=c: float(c.value(shift + scale * x)),
                        lambda x, c=c: scale * c.grad(shift + scale * x),
                        lambda x, c=c: scale * scale * c.hess(shift + scale * x)))
    return out


def solve_theta_star(model, cs, kkt_tol=1e-8):
    """``argmin_{theta in Theta} Phi(theta)`` with a KKT residual check."""
    x0 = cs.project(model.truth)
    radius = 1.0 + 2.0 * np.linalg.norm(x0 - model.truth)
    res = minimize_smooth(model.pop_risk, model.pop_grad, model.pop_hess, x0, radius,
                          _constraint_triples(cs))
    theta = res.x
    grad = np.asarray(model.pop_grad(theta), dtype=float)
    lam, resid = _kkt_multipliers(cs, theta, grad, active_set(cs, theta))
    if resid > kkt_tol * (1.0 + np.linalg.norm(grad)):
        raise SolverError(f"KKT residual {resid:.2e} at the computed optimum", res.trace)
    return theta


def classify_regime(model, cs, theta_star, grad_tol=GRAD_TOL):
    """Label the regime and check ``-grad Phi(theta_star)`` lies in the normal cone."""
    theta_star = np.asarray(theta_star, dtype=float)
    J = active_set(cs, theta_star)
    u = np.asarray(model.pop_grad(theta_star), dtype=float)
    gnorm = float(np.linalg.norm(u))
    if not J:
        if gnorm > grad_tol:
            raise RegimeError(f"interior optimum with gradient norm {gnorm:.2e}")
        return RegimeLabel(Regime.WELL, True, gnorm, grad_tol)
    _, resid = _kkt_multipliers(cs, theta_star, u, J)
    if resid > 1e-8 * (1.0 + gnorm):
        raise RegimeError(f"-grad Phi(theta_star) is not in the normal cone (residual {resid:.2e})")
    kind = Regime.NEAR if gnorm <= grad_tol else Regime.MIS
    return RegimeLabel(kind, False, gnorm, grad_tol)


# ---------------------------------------------------------------------------
# empirical optimum
# ---------------------------------------------------------------------------

def map_estimate(model, cs, data, x0=None):
    """Constrained maximum likelihood estimate (posterior mode under a flat prior)."""
    x = data.observations if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.shape[0] == 0:
        raise SolverError("empty dataset")
    n = x.shape[0]

    def f(th):
        return float(model.risk_sum(x, th)[0]) / n

    def sg(th):
        return np.asarray(model.loss_subgradient(x, th), dtype=float).mean(axis=0)

    start = cs.project(model.truth if x0 is None else np.asarray(x0, dtype=float))
    radius = 2.0 + np.linalg.norm(start)
    if model.smooth_loss:
        res = minimize_smooth(f, sg, lambda th: model.risk_hessian(x, th), start, radius,
                              _constraint_triples(cs))
    else:
        res = minimize_in_ball(f, sg, start, radius, constraints=cs.cut_oracles(), xtol=1e-13)
    return res.x


# ---------------------------------------------------------------------------
# rescaled posterior
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RescaledPosterior:
    model: object
    cs: object
    data: Dataset
    regime: RegimeLabel
    frame: ConeFrame
    y_n: np.ndarray
    theta_hat: np.ndarray = None
    log_Z_n: float = None
    extra: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.data.n

    @property
    def theta_star(self):
        return self.frame.theta_star

    @property
    def misspecified(self):
        return self.regime.kind is Regime.MIS

    @property
    def coord_dims(self):
        """``(dim t, dim s)`` of the rescaled coordinates."""
        if self.misspecified:
            return self.frame.L_basis.shape[1], self.frame.Lperp_basis.shape[1]
        return self.frame.dim, 0

    def with_normalizer(self, log_Z_n):
        return replace(self, log_Z_n=float(log_Z_n))

    # -- coordinates -----------------------------------------------------
    def theta_from_coords(self, ct, cs_=None):
        """Map rescaled coordinates to ``theta``.

        ``ct`` are coordinates of ``t`` (in the ``L`` basis in the misspecified
        case, canonical otherwise) and ``cs_`` coordinates of ``s`` in the
        ``V`` basis.
        """
        n = self.n
        ct = np.asarray(ct, dtype=float)
        if not self.misspecified:
            return self.theta_star + ct / np.sqrt(n)
        th = self.theta_star + ct @ self.frame.L_basis.T / np.sqrt(n)
        if cs_ is not None:
            th = th + np.asarray(cs_, dtype=float) @ self.frame.Lperp_basis.T / n
        return th

    def step_from_coords(self, ct, cs_=None):
        n = self.n
        ct = np.asarray(ct, dtype=float)
        if not self.misspecified:
            return ct / np.sqrt(n)
        h = ct @ self.frame.L_basis.T / np.sqrt(n)
        if cs_ is not None:
            h = h + np.asarray(cs_, dtype=float) @ self.frame.Lperp_basis.T / n
        return h

    def risk_increment_coords(self, ct, cs_=None):
        """``n (Phi_n(theta) - Phi_n(theta_star))`` at rescaled coordinates."""
        h = np.atleast_2d(self.step_from_coords(ct, cs_))
        return self.model.risk_increment(self.data.observations, self.theta_star, h)

    def log_density_coords(self, ct, cs_=None):
        """Unnormalized log-density at rescaled coordinates (vectorized over rows)."""
        ct = np.atleast_2d(np.asarray(ct, dtype=float))
        cs2 = None if cs_ is None else np.atleast_2d(np.asarray(cs_, dtype=float))
        theta = np.atleast_2d(self.theta_from_coords(ct, cs2))
        inside = self.cs.contains(theta) & self.model.in_domain(theta)
        out = np.full(theta.shape[0], -np.inf)
        if np.any(inside):
            sub_s = None if cs2 is None else cs2[inside]
            out[inside] = -self.risk_increment_coords(ct[inside], sub_s)
        return out

    def to_dict(self):
        return {
            "regime": self.regime.to_dict(),
            "n": self.n,
            "seed": self.data.seed,
            "y_n": self.y_n.tolist(),
            "theta_hat": None if self.theta_hat is None else self.theta_hat.tolist(),
            "log_Z_n": self.log_Z_n,
        }


def build_posterior(model, cs, data, theta_star=None, regime=None, frame=None,
                    with_map=True):
    """Assemble the rescaled posterior for one dataset."""
    if theta_star is None:
        theta_star = solve_theta_star(model, cs)
    theta_star = np.asarray(theta_star, dtype=float)
    if regime is None:
        regime = classify_regime(model, cs, theta_star)
    if frame is None:
        frame = build_frame(cs, theta_star, model.pop_grad(theta_star),
                            model.pop_hess(theta_star), grad_tol=regime.tol)
    summary = subgradient_summary(model, data, theta_star)
    theta_hat = map_estimate(model, cs, data, x0=theta_star) if with_map else None
    return RescaledPosterior(model, cs, data, regime, frame, summary.y_n, theta_hat)


def _vector_t_s(post, point):
    if post.misspecified:
        t, s = point
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        return t @ post.frame.L_basis, s @ post.frame.Lperp_basis
    return np.asarray(point, dtype=float), None


def rescaled_log_density(post, point):
    """Unnormalized log-density; ``point`` is ``t`` or ``(t, s)`` as vectors in ``R^d``.

    In the misspecified case ``t`` is projected onto ``L`` and ``s`` onto ``V``
    (both given in ambient coordinates). Returns ``-inf`` outside the support.
    """
    ct, cs_ = _vector_t_s(post, point)
    val = post.log_density_coords(ct, cs_)
    if post.log_Z_n is not None:
        val = val - post.log_Z_n
    return float(val[0]) if np.ndim(ct) == 1 else val


def g_n_wellspec(post, t):
    """``n (Phi_n(theta_star + t / sqrt(n)) - Phi_n(theta_star)) - t . Y_n``."""
    t = np.asarray(t, dtype=float)
    tt = np.atleast_2d(t)
    h = tt / np.sqrt(post.n)
    post.model.check_domain(post.theta_star + h)
    val = post.model.risk_increment(post.data.observations, post.theta_star, h) - tt @ post.y_n
    return float(val[0]) if t.ndim == 1 else val


def g_n_misspec(post, t, s):
    """``n (Phi_n(theta_star + t / sqrt(n) + s / n) - Phi_n(theta_star))``."""
    t = np.asarray(t, dtype=float)
    tt = np.atleast_2d(t)
    ss = np.atleast_2d(np.asarray(s, dtype=float))
    h = tt / np.sqrt(post.n) + ss / post.n
    post.model.check_domain(post.theta_star + h)
    val = post.model.risk_increment(post.data.observations, post.theta_star, h)
    return float(val[0]) if t.ndim == 1 else val


def decompose(frame, theta, n):
    """``theta - theta_star = t / sqrt(n) + s / n`` with ``t`` in ``L`` and ``s`` in ``V``."""
    B = np.hstack([frame.L_basis, frame.Lperp_basis])
    coef = np.linalg.solve(B, np.asarray(theta, dtype=float) - frame.theta_star)
    k = frame.L_basis.shape[1]
    t = np.sqrt(n) * (frame.L_basis @ coef[:k])
    s = n * (frame.Lperp_basis @ coef[k:])
    return t, s


# ---------------------------------------------------------------------------
# S-metric projection onto T_n and MLE diagnostics
# ---------------------------------------------------------------------------

def project_tangent(post, z, S=None):
    """``argmin_{x in T_n} |x - z|_S`` where ``T_n = sqrt(n) (Theta - theta_star)``."""
    z = np.asarray(z, dtype=float)
    S = post.frame.S if S is None else np.asarray(S, dtype=float)
    n = post.n
    rn = np.sqrt(n)
    if post.cs.contains(post.theta_star + z / rn):
        return z.copy()
    cons = _constraint_triples(post.cs, post.theta_star, 1.0 / rn)
    cond = np.sqrt(np.linalg.cond(S))
    radius = 2.0 * cond * (1.0 + np.linalg.norm(z))
    return minimize_smooth(lambda x: 0.5 * (x - z) @ S @ (x - z), lambda x: S @ (x - z),
                           lambda x: S, np.zeros_like(z), radius, cons).x


def mle_residuals(post):
    """Distances between the scaled MLE error and its predicted limit.

    Returns a dict with ``residual`` (the asserted quantity) and ``literal``
    (the variant with ``S`` in place of ``S^{-1}``); ``nan`` when not defined.
    """
    if post.theta_hat is None:
        raise SolverError("posterior was built without the MAP estimate")
    S = post.frame.S
    z = np.sqrt(post.n) * (post.theta_hat - post.theta_star)
    centre = -np.linalg.solve(S, post.y_n)
    kind = post.regime.kind
    if kind is Regime.WELL:
        return {"residual": float(np.linalg.norm(z - centre)),
                "literal": float(np.linalg.norm(z + S @ post.y_n))}
    if kind is Regime.NEAR:
        return {"residual": float(np.linalg.norm(z - project_tangent(post, centre))),
                "literal": float(np.linalg.norm(z - project_tangent(post, -post.y_n)))}
    return {"residual": float("nan"), "literal": float("nan")}


# ---------------------------------------------------------------------------
# properness certificate
# ---------------------------------------------------------------------------

def _sphere_mesh(d, resolution):
    """Unit vectors and the angular covering radius of the mesh."""
    if d == 1:
        return np.array([[1.0], [-1.0]]), 0.0
    if d == 2:
        ang = 2 * np.pi * np.arange(resolution) / resolution
        return np.column_stack([np.cos(ang), np.sin(ang)]), np.pi / resolution
    if d == 3:
        n_lat = max(4, resolution // 2)
        n_lon = resolution
        th = np.linspace(0.0, np.pi, n_lat + 1)
        ph = 2 * np.pi * np.arange(n_lon) / n_lon
        T, P = np.meshgrid(th, ph, indexing="ij")
        pts = np.column_stack([(np.sin(T) * np.cos(P)).ravel(),
                               (np.sin(T) * np.sin(P)).ravel(), np.cos(T).ravel()])
        cover = np.hypot(0.5 * np.pi / n_lat, 0.5 * 2 * np.pi / n_lon)
        return pts, cover
    raise ValueError("sphere mesh implemented for d <= 3")


def _log_upper_gamma_int(d, x):
    """``log Gamma(d, x)`` for integer ``d >= 1`` (closed form, overflow-safe)."""
    k = np.arange(d)
    return -x + logsumexp(k * np.log(max(x, 1e-300)) - gammaln(k + 1)) + lgamma(d)


@dataclass(frozen=True)
class CertificateReport:
    emitted: bool
    radius: float = float("nan")
    margin: float = float("nan")
    log_bound_theta: float = float("inf")
    log_bound_rescaled: float = float("inf")
    log_tail_bound: float = float("inf")
    reason: str = ""

    def to_dict(self):
        return {k: (v if not isinstance(v, float) or np.isfinite(v) else None)
                for k, v in self.__dict__.items()}


def properness_certificate(post, radii=(1.0, 2.0, 0.5, 0.25, 0.125, 0.0625),
                           resolution=256, raise_on_failure=False):
    """Certify that ``exp(-n (Phi_n - Phi_n(theta_star)))`` is integrable on ``Theta``.

    On a sphere of radius ``r`` around ``theta_star`` the margin
    ``min (Phi_n(theta) - Phi_n(theta_star))`` over ``Theta`` is bounded below
    from a mesh using the subgradient inequality
    ``Phi_n(y) >= Phi_n(x) - |g_x| |y - x|``. A positive margin ``m`` gives,
    by convexity along rays, ``Phi_n(theta) >= Phi_n(theta_star) + m |theta - theta_star| / r``
    outside the ball, and so an explicit bound on the normalizer.
    """
    model, cs = post.model, post.cs
    x = post.data.observations
    n = post.n
    d = post.frame.dim
    ts = post.theta_star
    dirs, cover = _sphere_mesh(d, resolution)
    phi_star = float(model.risk_sum(x, ts)[0]) / n
    theta_hat = post.theta_hat if post.theta_hat is not None else map_estimate(model, cs, post.data, ts)
    phi_hat = float(model.risk_sum(x, theta_hat)[0]) / n
    best = None
    for r in radii:
        pts = ts + r * dirs
        delta = 2.0 * r * np.sin(cover / 2.0) if cover > 0 else 0.0
        proj = np.array([cs.project(p) for p in pts])
        near = np.linalg.norm(proj - pts, axis=1) <= delta + 1e-12
        if not np.any(near):
            continue
        vals = model.risk_sum(x, pts[near]) / n - phi_star
        grads = np.array([np.asarray(model.loss_subgradient(x, p), dtype=float).mean(axis=0)
                          for p in pts[near]])
        margin = float(np.min(vals - np.linalg.norm(grads, axis=1) * delta))
        if margin > 0:
            best = (r, margin)
            break
    if best is None:
        if raise_on_failure:
            raise CertificateUnavailable("nonpositive margin at every probed radius")
        return CertificateReport(False, reason="nonpositive margin at every probed radius")
    r, m = best
    log_vol_ball = d / 2 * log(pi) - lgamma(d / 2 + 1) + d * log(r)
    log_inner = log_vol_ball + n * (phi_star - phi_hat)
    kappa = n * m / r
    log_area = log(2.0) + d / 2 * log(pi) - lgamma(d / 2)
    log_tail = log_area + _log_upper_gamma_int(d, kappa * r) - d * log(kappa)
    log_bound = float(np.logaddexp(log_inner, log_tail))
    if post.misspecified:
        k, mm = post.coord_dims
        B = np.hstack([post.frame.L_basis, post.frame.Lperp_basis])
        log_jac = (k / 2 + mm) * log(n) - float(np.linalg.slogdet(B)[1])
    else:
        log_jac = d / 2 * log(n)
    return CertificateReport(True, r, m, log_bound, log_bound + log_jac, log_tail)
