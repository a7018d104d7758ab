import numpy as np
import pytest

from lcbvm.errors import CatalogError, DomainError
from lcbvm.models import (Dataset, assumption_check, builtin_models, derive_seed, empirical_risk,
                          get_model, make_rng, subgradient_summary)


def test_gaussian_risk_single_centered_point():
    m = get_model("gaussian-location", {"dim": 1})
    assert empirical_risk(m, np.array([[0.0]]), [0.0]) == pytest.approx(0.0, abs=1e-15)


def test_gaussian_risk_symmetric_pair():
    m = get_model("gaussian-location", {"dim": 1})
    assert empirical_risk(m, np.array([[1.0], [-1.0]]), [0.0]) == pytest.approx(0.5)


def test_laplace_risk_direct_sum():
    m = get_model("laplace-location", {"dim": 1})
    x = np.array([[2.0], [-1.0], [0.0]])
    expected = sum(abs(v - 0.5) for v in (2.0, -1.0, 0.0)) / 3
    assert empirical_risk(m, x, [0.5]) == pytest.approx(expected, abs=1e-14)
    assert expected == pytest.approx(3.5 / 3)


def test_laplace_risk_sum_matches_loop():
    m = get_model("laplace-location", {"dim": 1})
    x = make_rng(3).standard_normal((57, 1))
    thetas = np.linspace(-2, 2, 41)[:, None]
    brute = np.array([np.abs(x[:, 0] - t).sum() for t in thetas[:, 0]])
    np.testing.assert_allclose(m.risk_sum(x, thetas), brute, rtol=1e-12)


def test_logistic_risk_sum_matches_loss():
    m = get_model("logistic-regression", {"dim": 2}, [1.0, 0.0])
    x = m.sample(m.truth, 300, 5)
    thetas = make_rng(1).standard_normal((17, 2))
    brute = np.array([m.loss(x, th).sum() for th in thetas])
    np.testing.assert_allclose(m.risk_sum(x, thetas), brute, rtol=1e-11)


@pytest.mark.parametrize("data,expected", [
    ([[1.0], [-1.0]], 0.0),
])
def test_gaussian_y_n_symmetric(data, expected):
    m = get_model("gaussian-location", {"dim": 1})
    assert subgradient_summary(m, np.array(data), [0.0]).y_n[0] == pytest.approx(expected)


def test_laplace_y_n_sign_count():
    m = get_model("laplace-location", {"dim": 1})
    assert subgradient_summary(m, np.array([[2.0], [-1.0]]), [0.0]).y_n[0] == pytest.approx(0.0)
    y = subgradient_summary(m, np.array([[2.0], [1.0], [-1.0]]), [0.0]).y_n[0]
    assert y == pytest.approx(-1 / np.sqrt(3), abs=1e-12)


def test_assumption_check_identity_fisher():
    rep = assumption_check(get_model("gaussian-location", {"dim": 1}), [0.0], n_probe=20_000)
    assert rep.ok
    assert rep.to_dict()["second_moment"] == pytest.approx(1.0, rel=0.05)


def test_assumption_check_laplace_sign():
    rep = assumption_check(get_model("laplace-location", {"dim": 1}), [0.0], n_probe=5_000)
    assert rep.to_dict()["second_moment"] == pytest.approx(1.0, abs=1e-12)


def test_logistic_population_against_monte_carlo():
    m = get_model("logistic-regression", {"dim": 2}, [1.0, 0.0])
    H = m.pop_hess(m.truth)
    assert np.all(np.linalg.eigvalsh(H) > 0)
    x = m.sample(m.truth, 400_000, 11)
    mc = m.risk_hessian(x, m.truth)
    np.testing.assert_allclose(H, mc, atol=5e-3)
    np.testing.assert_allclose(m.pop_grad(m.truth), 0.0, atol=1e-10)


def test_catalog():
    cat = builtin_models()
    assert {"gaussian-location", "laplace-location", "logistic-regression",
            "exponential-rate"} <= set(cat)
    m = get_model("gaussian-location", {"dim": 2}, [0.5, -1.0])
    th = np.array([0.1, 0.2])
    assert m.pop_risk(th) - m.pop_risk(m.truth) == pytest.approx(0.5 * np.sum((th - m.truth) ** 2))
    lap = get_model("laplace-location", {"dim": 1})
    assert lap.pop_hess(lap.truth)[0, 0] == pytest.approx(1.0)
    with pytest.raises(CatalogError):
        get_model("no-such-model")


def test_domain_error():
    m = get_model("exponential-rate", {}, [0.0])
    with pytest.raises(DomainError):
        m.check_domain(np.array([np.nan]))


def test_seeds_are_deterministic_and_distinct():
    assert derive_seed(3, 100) == derive_seed(3, 100)
    assert derive_seed(3, 100) != derive_seed(3, 101)
    a = make_rng(derive_seed(0, 10)).standard_normal(4)
    b = make_rng(derive_seed(0, 10)).standard_normal(4)
    np.testing.assert_array_equal(a, b)


def test_dataset_reproducible():
    m = get_model("laplace-location", {"dim": 1})
    d1, d2 = m.dataset(50, 7), m.dataset(50, 7)
    assert isinstance(d1, Dataset) and d1.n == 50
    np.testing.assert_array_equal(d1.observations, d2.observations)
