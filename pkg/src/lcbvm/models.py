"""Statistical models with convex negative log-likelihood.

Each model bundles a per-observation loss ``phi(x, theta)``, a subgradient
selection, a data sampler and the population risk ``Phi`` with its gradient and
Hessian. Observations are always stored as a 2-d float array of shape
``(n, obs_dim)``.

Random numbers come from numpy's counter-based ``Philox`` bit generator
(Philox4x64-10). A dataset for experiment seed ``s`` and sample size ``n`` is
drawn from the stream keyed by ``SeedSequence([s, n])`` so that replicates are
independent and reproducible across platforms.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import expit, log_expit

from .errors import CatalogError, ConfigError, DomainError

RNG_NAME = "Philox4x64-10"
_GH_NODES = 200


def make_rng(seed):
    """Return a ``numpy.random.Generator`` backed by Philox."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_seed(seed, n):
    """64-bit dataset seed for replicate ``seed`` at sample size ``n``."""
    state = np.random.SeedSequence([int(seed), int(n)]).generate_state(1, np.uint64)
    return int(state[0])


@dataclass(frozen=True)
class Dataset:
    observations: np.ndarray
    seed: int

    @property
    def n(self):
        return self.observations.shape[0]

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class SubgradientSummary:
    u_list: np.ndarray
    y_n: np.ndarray
    second_moment_estimate: float

    @property
    def mean(self):
        return self.u_list.mean(axis=0)


@dataclass
class AssumptionReport:
    second_moment: float
    second_moment_ci: tuple
    mean_subgradient: np.ndarray
    pop_gradient: np.ndarray
    mean_deviation_ok: bool
    hessian_min_eig: float
    grad_fd_error: float
    hess_fd_error: float
    flags: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.flags

    def to_dict(self):
        return {
            "second_moment": self.second_moment,
            "second_moment_ci": list(self.second_moment_ci),
            "mean_subgradient": self.mean_subgradient.tolist(),
            "pop_gradient": self.pop_gradient.tolist(),
            "mean_deviation_ok": self.mean_deviation_ok,
            "hessian_min_eig": self.hessian_min_eig,
            "grad_fd_error": self.grad_fd_error,
            "hess_fd_error": self.hess_fd_error,
            "flags": list(self.flags),
        }


class Model:
    """Base class for a parametric family with convex loss.

    Subclasses implement ``loss``, ``loss_subgradient``, ``sample`` and the
    population oracles. ``risk_sum`` and ``risk_increment`` have generic
    implementations that subclasses may override with sufficient-statistic
    shortcuts.
    """

    name = "model"
    exact_population = True
    smooth_loss = False

    def __init__(self, dim, truth):
        self.dim = int(dim)
        truth = np.asarray(truth, dtype=float).reshape(-1)
        if truth.shape != (self.dim,):
            raise ConfigError(
                f"{self.name}: truth has shape {truth.shape}, expected ({self.dim},)"
            )
        self.truth = truth
        self.domain_lower = np.full(self.dim, -np.inf)
        self.domain_upper = np.full(self.dim, np.inf)
        self.check_domain(truth)

    # -- domain -----------------------------------------------------------
    def in_domain(self, theta):
        theta = np.asarray(theta, dtype=float)
        ok = np.all(np.isfinite(theta), axis=-1)
        ok &= np.all(theta > self.domain_lower, axis=-1)
        ok &= np.all(theta < self.domain_upper, axis=-1)
        return ok

    def check_domain(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.dim:
            raise DomainError(f"parameter has dimension {theta.shape[-1]}, expected {self.dim}")
        if not np.all(self.in_domain(theta)):
            raise DomainError(f"{self.name}: parameter outside the open domain")
        return theta

    # -- per-observation oracles -----------------------------------------
    def loss(self, x, theta):
        raise NotImplementedError

    def loss_subgradient(self, x, theta):
        raise NotImplementedError

    def sample(self, theta_bar, count, seed):
        raise NotImplementedError

    # -- population oracles ------------------------------------------------
    def pop_risk(self, theta):
        raise NotImplementedError

    def pop_grad(self, theta):
        raise NotImplementedError

    def pop_hess(self, theta):
        raise NotImplementedError

    # -- batched empirical risk ------------------------------------------
    def risk_sum(self, x, thetas):
        """``sum_i phi(x_i, theta)`` for each row of ``thetas``."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        out = np.empty(thetas.shape[0])
        chunk = max(1, 2_000_000 // max(1, x.shape[0]))
        for start in range(0, thetas.shape[0], chunk):
            block = thetas[start:start + chunk]
            out[start:start + chunk] = [self.loss(x, th).sum() for th in block]
        return out

    def risk_increment(self, x, theta0, steps):
        """``n * (Phi_n(theta0 + h) - Phi_n(theta0))`` for each row ``h``."""
        steps = np.atleast_2d(np.asarray(steps, dtype=float))
        base = self.loss(x, theta0).sum()
        return self.risk_sum(x, theta0 + steps) - base

    def params(self):
        return {"dim": self.dim}

    def describe(self):
        return {"id": self.name, "params": self.params(), "truth": self.truth.tolist()}

    def dataset(self, n, seed):
        """Draw ``n`` observations under the model's truth."""
        return Dataset(self.sample(self.truth, n, seed), int(seed))


class GaussianLocation(Model):
    """``X ~ N(theta, cov)`` with known covariance; ``phi = (x-theta)' P (x-theta) / 2``."""

    name = "gaussian-location"
    smooth_loss = True

    def __init__(self, dim, truth, cov=None):
        super().__init__(dim, truth)
        cov = np.eye(self.dim) if cov is None else np.asarray(cov, dtype=float)
        if cov.shape != (self.dim, self.dim) or not np.allclose(cov, cov.T):
            raise ConfigError("gaussian-location: cov must be a symmetric dim x dim matrix")
        if np.linalg.eigvalsh(cov).min() <= 0:
            raise ConfigError("gaussian-location: cov must be positive definite")
        self.cov = cov
        self.precision = np.linalg.inv(cov)
        self._chol = np.linalg.cholesky(cov)

    def loss(self, x, theta):
        r = np.asarray(x, dtype=float) - theta
        return 0.5 * np.einsum("ij,jk,ik->i", r, self.precision, r)

    def loss_subgradient(self, x, theta):
        return (theta - np.asarray(x, dtype=float)) @ self.precision

    def sample(self, theta_bar, count, seed):
        z = make_rng(seed).standard_normal((int(count), self.dim))
        return np.asarray(theta_bar, dtype=float) + z @ self._chol.T

    def pop_risk(self, theta):
        a = np.asarray(theta, dtype=float) - self.truth
        return 0.5 * a @ self.precision @ a + 0.5 * self.dim

    def pop_grad(self, theta):
        return self.precision @ (np.asarray(theta, dtype=float) - self.truth)

    def pop_hess(self, theta):
        return self.precision.copy()

    def risk_sum(self, x, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        n = x.shape[0]
        xbar = x.mean(axis=0)
        quad = 0.5 * np.einsum("ij,jk,ik->", x, self.precision, x)
        tp = thetas @ self.precision
        return 0.5 * n * np.einsum("ij,ij->i", tp, thetas) - n * tp @ xbar + quad

    def risk_increment(self, x, theta0, steps):
        steps = np.atleast_2d(np.asarray(steps, dtype=float))
        n = x.shape[0]
        g = self.precision @ (theta0 - x.mean(axis=0))
        hp = steps @ self.precision
        return n * (steps @ g) + 0.5 * n * np.einsum("ij,ij->i", hp, steps)

    def risk_hessian(self, x, theta):
        return self.precision.copy()

    def params(self):
        return {"dim": self.dim, "cov": self.cov.tolist()}


class LaplaceLocation(Model):
    """Independent Laplace coordinates with location ``theta`` and scale ``b``.

    The loss ``sum_k |x_k - theta_k| / b`` is convex but not differentiable; the
    subgradient uses ``sign(0) = 0``.
    """

    name = "laplace-location"

    def __init__(self, dim, truth, scale=1.0):
        super().__init__(dim, truth)
        if scale <= 0:
            raise ConfigError("laplace-location: scale must be positive")
        self.scale = float(scale)
        self._sorted_cache = {}

    def loss(self, x, theta):
        return np.abs(np.asarray(x, dtype=float) - theta).sum(axis=1) / self.scale

    def loss_subgradient(self, x, theta):
        return -np.sign(np.asarray(x, dtype=float) - theta) / self.scale

    def sample(self, theta_bar, count, seed):
        z = make_rng(seed).laplace(0.0, self.scale, size=(int(count), self.dim))
        return np.asarray(theta_bar, dtype=float) + z

    def pop_risk(self, theta):
        a = np.abs(np.asarray(theta, dtype=float) - self.truth)
        b = self.scale
        return float(np.sum(a + b * np.exp(-a / b)) / b)

    def pop_grad(self, theta):
        a = np.asarray(theta, dtype=float) - self.truth
        return np.sign(a) * (1.0 - np.exp(-np.abs(a) / self.scale)) / self.scale

    def pop_hess(self, theta):
        a = np.abs(np.asarray(theta, dtype=float) - self.truth)
        return np.diag(np.exp(-a / self.scale) / self.scale**2)

    def _sorted(self, x):
        key = id(x)
        hit = self._sorted_cache.get(key)
        if hit is not None and hit[0] is x:
            return hit[1], hit[2]
        xs = np.sort(x, axis=0)
        cs = np.vstack([np.zeros(self.dim), np.cumsum(xs, axis=0)])
        self._sorted_cache = {key: (x, xs, cs)}
        return xs, cs

    def risk_sum(self, x, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        xs, cs = self._sorted(x)
        n = xs.shape[0]
        total = np.zeros(thetas.shape[0])
        for k in range(self.dim):
            th = thetas[:, k]
            below = np.searchsorted(xs[:, k], th, side="right")
            s_below = cs[below, k]
            s_above = cs[n, k] - s_below
            total += (below * th - s_below) + (s_above - (n - below) * th)
        return total / self.scale

    def params(self):
        return {"dim": self.dim, "scale": self.scale}


def _gh_expect(fn, beta, nodes=_GH_NODES):
    """``E[fn(beta * a)]`` for ``a ~ N(0, 1)`` by Gauss-Hermite quadrature."""
    x, w = _hermgauss(nodes)
    return float(np.dot(w, fn(beta * np.sqrt(2.0) * x)) / np.sqrt(np.pi))


@lru_cache(maxsize=8)
def _hermgauss(nodes):
    return np.polynomial.hermite.hermgauss(nodes)


def _softplus(w):
    return -log_expit(-w)


def _dsig(w):
    s = expit(w)
    return s * (1.0 - s)


class LogisticRegression(Model):
    """Logistic regression with standard normal covariates.

    Observations are rows ``[z_1, ..., z_d, y]``. Population quantities reduce to
    one-dimensional Gaussian expectations (Stein's identity) evaluated by
    Gauss-Hermite quadrature.
    """

    name = "logistic-regression"
    exact_population = False
    smooth_loss = True

    def __init__(self, dim, truth, quadrature_nodes=_GH_NODES):
        super().__init__(dim, truth)
        self.quadrature_nodes = int(quadrature_nodes)
        self._cache = {}

    def loss(self, x, theta):
        x = np.asarray(x, dtype=float)
        w = x[:, :self.dim] @ theta
        return _softplus(w) - x[:, self.dim] * w

    def loss_subgradient(self, x, theta):
        x = np.asarray(x, dtype=float)
        z = x[:, :self.dim]
        return (expit(z @ theta) - x[:, self.dim])[:, None] * z

    def sample(self, theta_bar, count, seed):
        rng = make_rng(seed)
        z = rng.standard_normal((int(count), self.dim))
        p = expit(z @ np.asarray(theta_bar, dtype=float))
        y = (rng.random(int(count)) < p).astype(float)
        return np.column_stack([z, y])

    def _moments(self, beta):
        key = float(beta)
        hit = self._cache.get(key)
        if hit is None:
            m = self.quadrature_nodes
            e_sp = _gh_expect(_softplus, beta, m)
            e_ds = _gh_expect(_dsig, beta, m)
            x, w = _hermgauss(m)
            a = np.sqrt(2.0) * x
            e_ds_a2 = float(np.dot(w, _dsig(beta * a) * a * a) / np.sqrt(np.pi))
            hit = (e_sp, e_ds, e_ds_a2)
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def pop_risk(self, theta):
        theta = np.asarray(theta, dtype=float)
        e_sp = self._moments(np.linalg.norm(theta))[0]
        e_ds_bar = self._moments(np.linalg.norm(self.truth))[1]
        return e_sp - e_ds_bar * float(self.truth @ theta)

    def pop_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        e_ds = self._moments(np.linalg.norm(theta))[1]
        e_ds_bar = self._moments(np.linalg.norm(self.truth))[1]
        return e_ds * theta - e_ds_bar * self.truth

    def pop_hess(self, theta):
        theta = np.asarray(theta, dtype=float)
        beta = np.linalg.norm(theta)
        _, e_ds, e_ds_a2 = self._moments(beta)
        hess = e_ds * np.eye(self.dim)
        if beta > 0:
            d = theta / beta
            hess += (e_ds_a2 - e_ds) * np.outer(d, d)
        return hess

    def risk_sum(self, x, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        z, y = x[:, :self.dim], x[:, self.dim]
        lin = thetas @ (z.T @ y)
        out = np.empty(thetas.shape[0])
        chunk = max(1, 4_000_000 // max(1, x.shape[0]))
        for start in range(0, thetas.shape[0], chunk):
            w = z @ thetas[start:start + chunk].T
            out[start:start + chunk] = _softplus(w).sum(axis=0)
        return out - lin

    def risk_hessian(self, x, theta):
        x = np.asarray(x, dtype=float)
        z = x[:, :self.dim]
        wts = _dsig(z @ theta)
        return (z * wts[:, None]).T @ z / x.shape[0]

    def params(self):
        return {"dim": self.dim}


class ExponentialRate(Model):
    """Exponential data with log-rate parameter ``eta``; ``phi = -eta + exp(eta) x``."""

    name = "exponential-rate"
    smooth_loss = True

    def __init__(self, dim, truth):
        if int(dim) != 1:
            raise ConfigError("exponential-rate: dim must be 1")
        super().__init__(1, truth)

    def loss(self, x, theta):
        x = np.asarray(x, dtype=float)[:, 0]
        return -theta[0] + np.exp(theta[0]) * x

    def loss_subgradient(self, x, theta):
        x = np.asarray(x, dtype=float)[:, 0]
        return (-1.0 + np.exp(theta[0]) * x)[:, None]

    def sample(self, theta_bar, count, seed):
        rate = np.exp(np.asarray(theta_bar, dtype=float)[0])
        return make_rng(seed).exponential(1.0 / rate, size=(int(count), 1))

    def pop_risk(self, theta):
        a = float(np.asarray(theta)[0] - self.truth[0])
        return -float(theta[0]) + np.exp(a)

    def pop_grad(self, theta):
        a = float(np.asarray(theta)[0] - self.truth[0])
        return np.array([np.expm1(a)])

    def pop_hess(self, theta):
        a = float(np.asarray(theta)[0] - self.truth[0])
        return np.array([[np.exp(a)]])

    def risk_sum(self, x, thetas):
        eta = np.atleast_2d(np.asarray(thetas, dtype=float))[:, 0]
        n = x.shape[0]
        return -n * eta + np.exp(eta) * x[:, 0].sum()

    def risk_hessian(self, x, theta):
        return np.array([[np.exp(theta[0]) * float(np.mean(np.asarray(x, dtype=float)[:, 0]))]])

    def risk_increment(self, x, theta0, steps):
        h = np.atleast_2d(np.asarray(steps, dtype=float))[:, 0]
        n = x.shape[0]
        return -n * h + np.exp(theta0[0]) * x[:, 0].sum() * np.expm1(h)

    def params(self):
        return {"dim": 1}


_CATALOG = {
    GaussianLocation.name: (
        GaussianLocation,
        "X ~ N(theta, cov); params: dim (int), cov (dim x dim, default identity)",
    ),
    LaplaceLocation.name: (
        LaplaceLocation,
        "independent Laplace(theta_k, scale); params: dim (int), scale (float, default 1)",
    ),
    LogisticRegression.name: (
        LogisticRegression,
        "y ~ Bernoulli(sigmoid(z' theta)), z ~ N(0, I); params: dim (int)",
    ),
    ExponentialRate.name: (
        ExponentialRate,
        "X ~ Exp(rate = exp(eta)); params: none (dim fixed to 1)",
    ),
}


def builtin_models():
    """Catalog of model ids with a one-line parameter schema each."""
    return {name: doc for name, (_, doc) in _CATALOG.items()}


def get_model(model_id, params=None, truth=None):
    """Instantiate a catalog model from its id and JSON parameter object."""
    if model_id not in _CATALOG:
        raise CatalogError(f"unknown model id {model_id!r}; known: {sorted(_CATALOG)}")
    cls = _CATALOG[model_id][0]
    params = dict(params or {})
    dim = params.pop("dim", None)
    if dim is None:
        dim = 1 if truth is None else len(np.atleast_1d(truth))
    if truth is None:
        truth = np.zeros(int(dim))
    try:
        return cls(int(dim), truth, **params)
    except TypeError as exc:
        raise ConfigError(f"{model_id}: bad parameters {params}: {exc}") from None


def empirical_risk(model, data, theta):
    """``Phi_n(theta) = mean_i phi(X_i, theta)``."""
    theta = model.check_domain(np.asarray(theta, dtype=float))
    x = data.observations if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    return float(model.loss(x, theta).mean())


def subgradient_summary(model, data, theta_star):
    theta_star = model.check_domain(np.asarray(theta_star, dtype=float))
    x = data.observations if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    u = np.asarray(model.loss_subgradient(x, theta_star), dtype=float)
    n = u.shape[0]
    y_n = u.sum(axis=0) / np.sqrt(n)
    return SubgradientSummary(u, y_n, float(np.mean(np.sum(u * u, axis=1))))


def _fd_grad(f, theta, h):
    g = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h * (1.0 + abs(theta[k]))
        g[k] = (f(theta + e) - f(theta - e)) / (2 * e[k])
    return np.asarray(g)


def _fd_jac(f, theta, h):
    cols = []
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h * (1.0 + abs(theta[k]))
        cols.append((np.asarray(f(theta + e)) - np.asarray(f(theta - e))) / (2 * e[k]))
    return np.column_stack(cols)


def assumption_check(model, theta_star, n_probe=100_000, seed=0, fd_tol=1e-5):
    """Probe second moments, curvature and derivative consistency at ``theta_star``."""
    theta_star = model.check_domain(np.asarray(theta_star, dtype=float))
    data = model.sample(model.truth, n_probe, seed)
    u = np.asarray(model.loss_subgradient(data, theta_star), dtype=float)
    sq = np.sum(u * u, axis=1)
    m2 = float(sq.mean())
    half = 1.96 * float(sq.std(ddof=1)) / np.sqrt(n_probe)
    mean_u = u.mean(axis=0)
    grad = np.asarray(model.pop_grad(theta_star), dtype=float)
    sd = u.std(axis=0, ddof=1)
    dev_ok = bool(np.all(np.abs(mean_u - grad) <= 4 * sd / np.sqrt(n_probe) + 1e-12))

    hess = np.asarray(model.pop_hess(theta_star), dtype=float)
    min_eig = float(np.linalg.eigvalsh(0.5 * (hess + hess.T)).min())
    fd_g = _fd_grad(model.pop_risk, theta_star, 1e-5)
    g_err = float(np.linalg.norm(fd_g - grad) / max(1.0, np.linalg.norm(grad)))
    fd_h = _fd_jac(model.pop_grad, theta_star, 1e-5)
    h_err = float(np.linalg.norm(fd_h - hess) / max(1.0, np.linalg.norm(hess)))

    flags = []
    if not np.isfinite(m2):
        flags.append("second moment of subgradients is not finite")
    if min_eig <= 0:
        flags.append("population Hessian is not positive definite")
    if g_err > fd_tol:
        flags.append(f"gradient disagrees with finite differences ({g_err:.2e})")
    if h_err > fd_tol:
        flags.append(f"Hessian disagrees with finite differences ({h_err:.2e})")
    if not dev_ok:
        flags.append("mean subgradient differs from population gradient")
    return AssumptionReport(m2, (m2 - half, m2 + half), mean_u, grad, dev_ok,
                            min_eig, g_err, h_err, flags)
