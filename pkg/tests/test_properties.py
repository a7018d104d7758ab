import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from lcbvm.geometry import (Ball, ConstraintSet, Ellipsoid, HalfSpace, SecondOrderSets,
                            build_frame, c2_membership, cone_alpha, constraint_set_from_config,
                            face_set)
from lcbvm.models import Dataset, get_model
from lcbvm.posterior import build_posterior, decompose, g_n_wellspec
from lcbvm.quadrature import QuadratureGrid
from lcbvm.tv import tv_distance

finite = st.floats(-3, 3, allow_nan=False)
positive = st.floats(0.1, 5.0, allow_nan=False)


def grid1(lo, hi):
    return QuadratureGrid(np.zeros(1), np.eye(1), np.array([lo]), np.array([hi]), (400,))


@settings(max_examples=25, deadline=None)
@given(mu=st.floats(-2, 2), sd=st.floats(0.5, 2.0))
def test_tv_symmetric_bounded_and_closed_form(mu, sd):
    p = lambda C: stats.norm.logpdf(C[:, 0], 0.0, sd)
    q = lambda C: stats.norm.logpdf(C[:, 0], mu, sd)
    g = grid1(-10 * sd - 2, 10 * sd + 2)
    a, b = tv_distance(p, q, g).tv, tv_distance(q, p, g).tv
    assert 0.0 <= a <= 1.0
    assert abs(a - b) < 1e-12
    assert abs(a - (2 * stats.norm.cdf(abs(mu) / (2 * sd)) - 1)) < 1e-4


@settings(max_examples=40, deadline=None)
@given(u=arrays(float, 3, elements=st.floats(-5, -0.05)))
def test_orthant_multipliers_and_alpha(u):
    rows = {j: np.eye(3)[j] for j in range(3)}
    J_star, lam = face_set(u, (0, 1, 2), rows)
    assert J_star == (0, 1, 2)
    np.testing.assert_allclose(lam, -u, rtol=1e-10)
    alpha, _ = cone_alpha(u, np.eye(3), np.eye(3))
    assert abs(alpha - np.min(-u)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.1, 3.0), b=st.floats(-3.0, 3.0), lam=positive)
def test_alpha_single_facet(a, b, lam):
    # V is the span of the facet normal, the admissible s is -(a, b): alpha = lam |(a, b)|
    nrm = np.array([a, b])
    cs = constraint_set_from_config({"shape": "halfspace", "normal": nrm.tolist()}, 2)
    fr = build_frame(cs, [0.0, 0.0], -lam * nrm, np.eye(2))
    assert abs(fr.alpha_finite - lam * np.linalg.norm(nrm)) < 1e-9


@settings(max_examples=40, deadline=None)
@given(u=arrays(float, 3, elements=st.floats(-5, -0.05)), seed=st.integers(0, 2**16))
def test_alpha_lower_bounds_cone_ratio(u, seed):
    # orthant face set is all of R^3, so every s <= 0 is admissible
    alpha, _ = cone_alpha(u, np.eye(3), np.eye(3))
    s = -np.abs(np.random.default_rng(seed).standard_normal((500, 3)))
    ratios = (s @ u) / np.linalg.norm(s, axis=1)
    assert np.all(ratios >= alpha - 1e-9)


@settings(max_examples=30, deadline=None)
@given(t1=arrays(float, 2, elements=finite), s1=arrays(float, 2, elements=st.floats(-8, 1)),
       t2=arrays(float, 2, elements=finite), s2=arrays(float, 2, elements=st.floats(-8, 1)),
       w=st.floats(0, 1))
def test_ball_c2_convex(t1, s1, t2, s2, w):
    cs = constraint_set_from_config({"shape": "ball", "center": [0, 0], "radius": 1}, 2)
    sets = SecondOrderSets(build_frame(cs, [1.0, 0.0], [-1.0, 0.0], np.eye(2)), cs)
    # project onto L x V coordinates of the ball frame
    t1, t2 = t1 * [0, 1], t2 * [0, 1]
    s1, s2 = s1 * [1, 0], s2 * [1, 0]
    if c2_membership(sets, t1, s1) and c2_membership(sets, t2, s2):
        assert c2_membership(sets, w * t1 + (1 - w) * t2, w * s1 + (1 - w) * s2)


@settings(max_examples=30, deadline=None)
@given(x=arrays(float, 2, elements=st.floats(-10, 10)), c=st.floats(0.2, 3.0),
       off=st.floats(-1, 1))
def test_projection_feasible_and_idempotent(x, c, off):
    for shape in (Ball([0.0, 0.0], c), HalfSpace([1.0, c], off),
                  Ellipsoid([0.0, 0.0], np.diag([1.0, c]))):
        cs = ConstraintSet(2, [shape])
        p = cs.project(x)
        assert cs.contains(p, tol=1e-9)
        np.testing.assert_allclose(cs.project(p), p, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(theta=arrays(float, 2, elements=st.floats(-1, 1)), n=st.integers(1, 10_000),
       off=st.floats(-0.9, 0.9))
def test_decompose_recomposes(theta, n, off):
    S = np.array([[1.0, off], [off, 1.5]])
    cs = constraint_set_from_config({"shape": "halfspace", "normal": [1, 2]}, 2)
    fr = build_frame(cs, [0.0, 0.0], [-1.0, -2.0], S)
    t, s = decompose(fr, theta, n)
    np.testing.assert_allclose(t / np.sqrt(n) + s / n, theta, atol=1e-11)
    assert abs(t @ np.array([1.0, 2.0])) < 1e-9 * (1 + np.linalg.norm(t))


@settings(max_examples=25, deadline=None)
@given(x=arrays(float, st.integers(1, 40), elements=st.floats(-5, 5)),
       t=st.floats(-3, 3))
def test_gaussian_centered_process_is_exact(x, t):
    m = get_model("gaussian-location", {"dim": 1})
    post = build_posterior(m, ConstraintSet(1), Dataset(x[:, None], 0), theta_star=[0.0],
                           with_map=False)
    assert abs(g_n_wellspec(post, np.array([t])) - 0.5 * t * t) < 1e-9 * (1 + np.abs(x).sum())


@settings(max_examples=25, deadline=None)
@given(x=arrays(float, st.integers(1, 40), elements=st.floats(-5, 5)),
       th=arrays(float, 5, elements=st.floats(-6, 6)))
def test_laplace_risk_sum_matches_direct(x, th):
    m = get_model("laplace-location", {"dim": 1})
    got = m.risk_sum(x[:, None], th[:, None])
    direct = np.abs(x[None, :] - th[:, None]).sum(axis=1)
    np.testing.assert_allclose(got, direct, rtol=1e-12, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(m=arrays(float, 3, elements=st.floats(-2, 2)), sd=arrays(float, 3, elements=st.floats(0.5, 2)))
def test_tv_triangle_inequality(m, sd):
    g = grid1(-14, 14)
    dens = [lambda C, a=a, b=b: stats.norm.logpdf(C[:, 0], a, b) for a, b in zip(m, sd)]
    pq, qr, pr = (tv_distance(dens[i], dens[j], g) for i, j in ((0, 1), (1, 2), (0, 2)))
    slack = 2 * (pq.error_estimate + qr.error_estimate + pr.error_estimate)
    assert pr.tv <= pq.tv + qr.tv + slack + 1e-12
