"""Total variation between the rescaled posterior and its limit, and sup-norm gaps."""
from dataclasses import dataclass, field

import numpy as np

from .errors import GridError
from .limits import law_grid
from .quadrature import CoordDensity, evaluate, evaluate_covering


@dataclass(frozen=True)
class TvResult:
    tv: float
    error_estimate: float
    tv_coarse: float
    log_norm_p: float
    log_norm_q: float
    grid: dict = field(default_factory=dict)

    def to_dict(self):
        return {"tv": self.tv, "error_estimate": self.error_estimate,
                "tv_coarse": self.tv_coarse, "log_norm_p": self.log_norm_p,
                "log_norm_q": self.log_norm_q, "grid": self.grid}


def _as_density(obj, name=""):
    if isinstance(obj, CoordDensity):
        return obj
    if hasattr(obj, "as_density"):
        return obj.as_density()
    if callable(obj):
        def support(C, f=obj):
            return np.isfinite(np.asarray(f(C), dtype=float))
        return CoordDensity(obj, support, name)
    raise TypeError(f"cannot interpret {obj!r} as a density")


def _tv_on(ev):
    p = ev.normalized(0)
    q = ev.normalized(1)
    return 0.5 * float(np.dot(ev.outer_w, np.sum(np.abs(p - q) * ev.inner_w, axis=1)))


def tv_distance(p_logdens, q_logdens, grid, clip_lo=None, clip_hi=None, expansions=3):
    """``1/2 int |p - q|`` after normalizing both densities on the grid.

    ``p_logdens`` and ``q_logdens`` are :class:`CoordDensity` objects, objects
    with ``as_density()``, or plain vectorized log-density callables (support
    taken as the set where they are finite). The grid's level is the fine one;
    the error estimate is the difference to the next coarser level.
    """
    dens = [_as_density(p_logdens, "p"), _as_density(q_logdens, "q")]
    ev = evaluate_covering(grid, dens, expansions, clip_lo=clip_lo, clip_hi=clip_hi)
    tv_f = _tv_on(ev)
    ev_c = evaluate(ev.grid.coarse(), dens)
    tv_c = _tv_on(ev_c)
    lj = ev.grid.log_jacobian
    tv_f = min(max(tv_f, 0.0), 1.0)
    return TvResult(tv_f, abs(tv_f - tv_c), tv_c, ev.log_integral(0) + lj,
                    ev.log_integral(1) + lj, ev.grid.to_dict())


def posterior_density(post):
    """The rescaled posterior as a :class:`CoordDensity` on the limit-law coordinates."""
    k, m = post.coord_dims

    def split(C):
        C = np.atleast_2d(C)
        if not post.misspecified:
            return C, None
        return C[:, :k], C[:, k:]

    def logpdf(C):
        ct, cs = split(C)
        return post.log_density_coords(ct, cs)

    def support(C):
        ct, cs = split(C)
        th = np.atleast_2d(post.theta_from_coords(ct, cs))
        return post.cs.contains(th) & post.model.in_domain(th)

    return CoordDensity(logpdf, support, "posterior")


def compare(post, law, points=None):
    """TV between the rescaled posterior and its limit law on an adapted grid."""
    grid, clip_lo, clip_hi = law_grid(law, points)
    return tv_distance(posterior_density(post), law, grid, clip_lo, clip_hi)


def marginal_t(post_or_law, grid):
    """Normalized marginal density along the first grid axis (for 2-d grids).

    Returns ``(nodes, density)`` in grid coordinates of that axis.
    """
    dens = _as_density(post_or_law if not hasattr(post_or_law, "log_density_coords")
                       else posterior_density(post_or_law))
    ev = evaluate(grid, [dens])
    if grid.dim != 2:
        raise GridError("marginal extraction implemented for 2-d grids")
    lines = ev.line_integrals(0)
    total = float(np.dot(ev.outer_w, lines))
    scale = abs(float(np.asarray(grid.axes)[0, 0])) if np.asarray(grid.axes).shape[0] else 1.0
    return ev.outer_x[:, 0], lines / total, scale


def _whitening(S):
    evals, evecs = np.linalg.eigh(S)
    return evecs @ np.diag(evals ** -0.5) @ evecs.T


def sup_gn_gap(post, half_width=3.0, step=0.1):
    """``max |G_n(S^{-1/2} v) - |v|^2 / 2|`` over the grid ``[-h, h]^d`` in ``v``."""
    from .posterior import g_n_wellspec
    d = post.frame.dim
    m = int(round(2 * half_width / step)) + 1
    axis = np.linspace(-half_width, half_width, m)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    V = np.column_stack([g.ravel() for g in mesh])
    T = V @ _whitening(post.frame.S).T
    G = g_n_wellspec(post, T)
    return float(np.max(np.abs(G - 0.5 * np.sum(V * V, axis=1))))


def misspec_gap(post, radius=3.0, step=0.1):
    """``max |G_n(t, s) - t . Y_n - |t|_S^2 / 2 - s . u|`` over ``|t| + |s| <= radius``."""
    from .posterior import g_n_misspec
    fr = post.frame
    k, m = fr.L_basis.shape[1], fr.Lperp_basis.shape[1]
    npts = int(round(2 * radius / step)) + 1
    axis = np.linspace(-radius, radius, npts)
    mesh = np.meshgrid(*([axis] * (k + m)), indexing="ij")
    Cc = np.column_stack([g.ravel() for g in mesh])
    ct, cs = Cc[:, :k], Cc[:, k:]
    keep = np.linalg.norm(ct, axis=1) + np.linalg.norm(cs, axis=1) <= radius + 1e-12
    T = ct[keep] @ fr.L_basis.T
    Sv = cs[keep] @ fr.Lperp_basis.T
    G = g_n_misspec(post, T, Sv)
    ref = T @ post.y_n + 0.5 * np.einsum("ni,ij,nj->n", T, fr.S, T) + Sv @ fr.u
    return float(np.max(np.abs(G - ref)))
