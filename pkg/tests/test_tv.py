import numpy as np
import pytest
from scipy import stats

from lcbvm.errors import GridError
from lcbvm.geometry import constraint_set_from_config
from lcbvm.limits import build_limit
from lcbvm.models import get_model
from lcbvm.posterior import build_posterior
from lcbvm.quadrature import CoordDensity, QuadratureGrid, evaluate_covering, log_integral
from lcbvm.tv import compare, misspec_gap, sup_gn_gap, tv_distance


def grid1(lo, hi, panels=400):
    return QuadratureGrid(np.zeros(1), np.eye(1), np.array([lo]), np.array([hi]), (panels,))


def normal_logpdf(mu):
    return lambda C: stats.norm.logpdf(C[:, 0], mu)


def bump(a, b):
    def logpdf(C):
        x = C[:, 0]
        return np.where((x >= a) & (x <= b), 0.0, -np.inf)

    def support(C):
        return (C[:, 0] >= a) & (C[:, 0] <= b)
    return CoordDensity(logpdf, support, "bump")


def test_tv_identical_is_zero():
    res = tv_distance(normal_logpdf(0.3), normal_logpdf(0.3), grid1(-9, 9))
    assert res.tv == pytest.approx(0.0, abs=1e-10)


def test_tv_disjoint_bumps_is_one():
    res = tv_distance(bump(0.0, 1.0), bump(2.0, 3.0), grid1(-0.5, 3.5))
    assert res.tv == pytest.approx(1.0, abs=1e-6)


def test_tv_shifted_normals_closed_form():
    res = tv_distance(normal_logpdf(0.0), normal_logpdf(1.0), grid1(-9, 10))
    assert res.tv == pytest.approx(2 * stats.norm.cdf(0.5) - 1, abs=1e-4)
    assert res.error_estimate < 1e-4


def test_tv_ignores_normalizing_constants():
    p = lambda C: stats.norm.logpdf(C[:, 0]) + 17.0
    res = tv_distance(p, normal_logpdf(1.0), grid1(-9, 10))
    assert res.tv == pytest.approx(2 * stats.norm.cdf(0.5) - 1, abs=1e-4)
    assert res.log_norm_p == pytest.approx(17.0, abs=1e-8)


def test_tv_two_dimensional_rotated_gaussians():
    S = np.array([[1.0, 0.6], [0.6, 2.0]])
    a, b = np.array([0.0, 0.0]), np.array([0.5, -0.25])
    P = stats.multivariate_normal(a, np.linalg.inv(S))
    Q = stats.multivariate_normal(b, np.linalg.inv(S))
    grid = QuadratureGrid(np.zeros(2), np.eye(2), np.array([-8.0, -8.0]), np.array([8.0, 8.0]),
                          (201, 200))
    res = tv_distance(P.logpdf, Q.logpdf, grid)
    delta = np.sqrt((a - b) @ S @ (a - b))
    assert res.tv == pytest.approx(2 * stats.norm.cdf(delta / 2) - 1, abs=1e-4)


def test_grid_expands_when_mass_leaks():
    ev = evaluate_covering(grid1(-1.0, 1.0, 100), [CoordDensity(normal_logpdf(0.0),
                                                              lambda C: np.ones(len(C), bool))],
                           expansions=6)
    assert ev.grid.hi[0] - ev.grid.lo[0] > 8


def test_grid_error_when_expansion_blocked():
    dens = CoordDensity(normal_logpdf(0.0), lambda C: np.ones(len(C), bool))
    with pytest.raises(GridError):
        evaluate_covering(grid1(-1.0, 1.0, 100), [dens], expansions=2, clip_hi=np.array([1.0]))


def test_log_integral_truncated_normal():
    dens = CoordDensity(lambda C: np.where(C[:, 0] <= 0, -0.5 * C[:, 0] ** 2, -np.inf),
                        lambda C: C[:, 0] <= 0)
    val, err, _ = log_integral(dens, grid1(-9, 9, 200))
    assert val == pytest.approx(0.5 * np.log(2 * np.pi) - np.log(2), abs=1e-9)
    assert err < 1e-6


def test_grid_bad_shapes():
    with pytest.raises(GridError):
        QuadratureGrid(np.zeros(4), np.eye(4), -np.ones(4), np.ones(4), (5, 5, 5, 4))
    with pytest.raises(GridError):
        QuadratureGrid(np.zeros(1), np.eye(1), np.array([1.0]), np.array([0.0]), (10,))


def post_for(model_id, dim, truth, cons, n, seed):
    m = get_model(model_id, {"dim": dim}, truth)
    cs = constraint_set_from_config(cons, dim)
    return build_posterior(m, cs, m.dataset(n, seed))


def test_compare_gaussian_exact():
    post = post_for("gaussian-location", 1, [0.0], {"shape": "none"}, 64, 0)
    law = build_limit(post.regime, post.frame, post.y_n)
    assert compare(post, law).tv < 1e-10


def test_sup_gap_gaussian_zero_and_laplace_positive():
    post = post_for("gaussian-location", 1, [0.0], {"shape": "none"}, 256, 0)
    assert sup_gn_gap(post) < 1e-10
    post = post_for("laplace-location", 1, [0.0], {"shape": "none"}, 256, 0)
    assert sup_gn_gap(post) > 0
    assert sup_gn_gap(post, half_width=0.0) == pytest.approx(0.0, abs=1e-12)


def test_misspec_gap_gaussian_matches_cross_terms():
    post = post_for("gaussian-location", 2, [2.0, 0.0],
                    {"shape": "ball", "center": [0, 0], "radius": 1}, 10_000, 0)
    gap = misspec_gap(post, radius=1.0, step=0.25)
    # residual terms s.Y_n / sqrt(n) + t.s / sqrt(n) + |s|^2 / (2n) are O(n^{-1/2})
    bound = (np.linalg.norm(post.y_n) + 1.0) / np.sqrt(post.n) + 1.0 / (2 * post.n)
    assert 0 <= gap <= bound + 1e-12
    assert misspec_gap(post, radius=0.0) == pytest.approx(0.0, abs=1e-12)
