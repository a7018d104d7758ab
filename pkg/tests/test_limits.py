import numpy as np
import pytest
from scipy import integrate, stats

from lcbvm.errors import EnvelopeError, GridError, RegimeError
from lcbvm.geometry import build_frame, constraint_set_from_config
from lcbvm.limits import LawKind, build_limit, log_density, normalize, sample
from lcbvm.posterior import Regime

I2 = np.eye(2)


def free_frame(S=I2):
    return build_frame(constraint_set_from_config({"shape": "none"}, 2), [0.0, 0.0],
                       [0.0, 0.0], S)


def half_frame(S=I2):
    cs = constraint_set_from_config({"shape": "halfspace", "normal": [1, 0]}, 2)
    return build_frame(cs, [0.0, 0.0], [0.0, 0.0], S)


def ball_frame():
    cs = constraint_set_from_config({"shape": "ball", "center": [0, 0], "radius": 1}, 2)
    return build_frame(cs, [1.0, 0.0], [-1.0, 0.0], I2)


def test_gaussian_law_at_mean():
    S = np.array([[2.0, 0.3], [0.3, 1.0]])
    y = np.array([0.4, -0.2])
    law = build_limit(Regime.WELL, free_frame(S), y)
    assert law.kind is LawKind.GAUSSIAN
    np.testing.assert_allclose(law.mean, -np.linalg.solve(S, y))
    expected = -np.log(2 * np.pi) + 0.5 * np.log(np.linalg.det(S))
    assert log_density(law, law.mean) == pytest.approx(expected, abs=1e-12)
    ref = stats.multivariate_normal(law.mean, np.linalg.inv(S))
    pts = np.random.default_rng(0).standard_normal((10, 2))
    np.testing.assert_allclose(log_density(law, pts), ref.logpdf(pts), atol=1e-12)


def test_truncated_halfspace_normalizer_is_two():
    law = build_limit(Regime.NEAR, half_frame(), np.zeros(2))
    assert law.log_A_n == pytest.approx(-np.log(2 * np.pi) + np.log(2.0), abs=1e-12)
    assert log_density(law, np.array([0.5, 0.0])) == -np.inf
    quad = normalize(law, points=(101, 200))
    assert quad.log_A_n == pytest.approx(law.log_A_n, abs=1e-6)


def test_truncated_shifted_mean_closed_form():
    S = np.array([[1.0, 0.4], [0.4, 2.0]])
    y = np.array([-0.7, 0.1])
    law = build_limit(Regime.NEAR, half_frame(S), y)
    cov = np.linalg.inv(S)
    mass = stats.norm.cdf(-law.mean[0] / np.sqrt(cov[0, 0]))
    expected = -np.log(2 * np.pi) + 0.5 * np.log(np.linalg.det(S)) - np.log(mass)
    assert law.log_A_n == pytest.approx(expected, abs=1e-10)


def test_regime_mismatch():
    with pytest.raises(RegimeError):
        build_limit(Regime.WELL, half_frame(), np.zeros(2))
    with pytest.raises(RegimeError):
        build_limit(Regime.NEAR, free_frame(), np.zeros(2))


def test_unnormalized_law_refuses_density():
    law = build_limit(Regime.MIS, ball_frame(), np.zeros(2))
    with pytest.raises(GridError):
        log_density(law, np.zeros(2))


def test_ball_normalizer_is_sqrt_pi():
    law = normalize(build_limit(Regime.MIS, ball_frame(), np.zeros(2)))
    assert law.log_A_n == pytest.approx(-0.5 * np.log(np.pi), abs=1e-6)
    assert log_density(law, np.zeros(2)) == pytest.approx(law.log_A_n, abs=1e-12)


@pytest.mark.parametrize("y", [0.0, 0.8, -1.3])
def test_ball_normalizer_shifted(y):
    # integrating s out leaves exp(-(t - mu)^2 / 2 - t^2 / 2)
    fr = ball_frame()
    Y = np.array([0.0, y])
    law = normalize(build_limit(Regime.MIS, fr, Y))
    mu = law.mean[0]
    val, _ = integrate.quad(lambda t: np.exp(-0.5 * (t - mu) ** 2 - 0.5 * t ** 2), -np.inf, np.inf)
    assert law.log_A_n == pytest.approx(-np.log(val), abs=1e-6)


def test_normalizer_refinement_converges():
    law = build_limit(Regime.MIS, ball_frame(), np.zeros(2))
    errs = [abs(normalize(law, points=p, max_refine=0, rel_tol=1.0).log_A_n + 0.5 * np.log(np.pi))
            for p in ((21, 40), (41, 80), (81, 160))]
    assert errs[2] <= errs[1] <= errs[0]


def test_sample_gaussian_mean():
    S = np.array([[2.0, 0.3], [0.3, 1.0]])
    y = np.array([0.4, -0.2])
    law = build_limit(Regime.WELL, free_frame(S), y)
    res = sample(law, 20_000, 1)
    sd = np.sqrt(np.diag(np.linalg.inv(S)))
    assert np.all(np.abs(res.points.mean(axis=0) - law.mean) < 4 * sd / np.sqrt(20_000))


def test_sample_halfspace_acceptance_half():
    law = build_limit(Regime.NEAR, half_frame(), np.zeros(2))
    res = sample(law, 20_000, 2)
    assert res.acceptance == pytest.approx(0.5, abs=0.02)
    assert np.all(res.points[:, 0] <= 0)


def test_sample_ball_t_variance():
    law = build_limit(Regime.MIS, ball_frame(), np.zeros(2))
    res = sample(law, 20_000, 3)
    t = res.points[:, 0]
    # chi-square interval for the variance of N(0, 1/2)
    n = t.size
    lo = 0.5 * stats.chi2.ppf(0.0005, n - 1) / (n - 1)
    hi = 0.5 * stats.chi2.ppf(0.9995, n - 1) / (n - 1)
    assert lo <= t.var(ddof=1) <= hi
    assert np.all(law.support(res.points))


def test_sample_envelope_failure():
    cs = constraint_set_from_config({"shape": "intersection", "parts": [
        {"shape": "halfspace", "normal": [-5e-6, 1]},
        {"shape": "halfspace", "normal": [-5e-6, -1]}]}, 2)
    fr = build_frame(cs, [0.0, 0.0], [0.0, 0.0], I2)
    law = build_limit(Regime.NEAR, fr, np.zeros(2))
    with pytest.raises(EnvelopeError):
        sample(law, 100, 0)


def test_sampler_matches_closed_form_marginal_ks():
    law = build_limit(Regime.MIS, ball_frame(), np.array([0.0, 0.6]))
    res = sample(law, 4000, 7)
    mu = law.mean[0] / 2
    ks = stats.kstest(res.points[:, 0], stats.norm(mu, np.sqrt(0.5)).cdf).statistic
    assert ks < 1.63 / np.sqrt(4000)


def test_sampler_covariance_identity():
    S = np.array([[2.0, 0.3], [0.3, 1.0]])
    law = build_limit(Regime.WELL, free_frame(S), np.zeros(2))
    pts = sample(law, 50_000, 4).points
    np.testing.assert_allclose(np.cov(pts.T), np.linalg.inv(S), atol=0.02)


def test_normalized_law_integrates_to_one_on_refined_grid():
    from lcbvm.limits import law_grid
    from lcbvm.quadrature import CoordDensity, log_integral
    law = normalize(build_limit(Regime.MIS, ball_frame(), np.array([0.0, -0.4])))
    grid, _, _ = law_grid(law)
    dens = CoordDensity(lambda C: log_density(law, C), law.support)
    val, _, _ = log_integral(dens, grid.refine())
    assert abs(np.expm1(val)) < 2e-4
