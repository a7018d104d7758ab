"""Acceptance suite: one check per criterion, each returning a pass/fail record.

Used by ``tests/test_acceptance.py`` and by ``lcbvm selftest``.
"""
import json
import time
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.stats import qmc

from .geometry import SecondOrderSets, c2_membership, c2n_membership, constraint_set_from_config
from .harness import load_config, prepare
from .limits import build_limit, law_grid
from .models import derive_seed, get_model
from .posterior import build_posterior, mle_residuals, properness_certificate
from .quadrature import evaluate
from .tv import compare, sup_gn_gap

N_SEEDS = 20


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    limit: float

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] criterion {self.number}: {self.title} "
                f"({self.detail}; {self.seconds:.1f}s / limit {self.limit:.0f}s)")


def _timed(number, title, limit, fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    sec = time.perf_counter() - t0
    return CriterionResult(number, title, bool(ok) and sec < limit, detail, sec, limit)


def _posterior(model_id, params, truth, cons, n, seed, theta_star=None):
    m = get_model(model_id, params, truth)
    cs = constraint_set_from_config(cons, m.dim)
    data = m.dataset(n, derive_seed(seed, n))
    return build_posterior(m, cs, data, theta_star)


def _tv(post):
    law = build_limit(post.regime, post.frame, post.y_n)
    return compare(post, law).tv


def _median_tvs(model_id, params, truth, cons, n_list, seeds):
    return [float(np.median([_tv(_posterior(model_id, params, truth, cons, n, s))
                             for s in seeds])) for n in n_list]


# ---------------------------------------------------------------------------

def gaussian_wellspec():
    worst = 0.0
    for d in (1, 2):
        for n in (16, 256, 4096):
            for seed in range(5):
                post = _posterior("gaussian-location", {"dim": d}, np.zeros(d),
                                  {"shape": "none"}, n, seed)
                worst = max(worst, _tv(post))
    return worst <= 2e-3, f"max TV {worst:.2e} <= 2e-3"


def gaussian_nearly():
    worst = 0.0
    for d in (1, 2):
        normal = np.eye(d)[0].tolist()
        for n in (16, 256, 4096):
            for seed in range(5):
                post = _posterior("gaussian-location", {"dim": d}, np.zeros(d),
                                  {"shape": "halfspace", "normal": normal}, n, seed)
                worst = max(worst, _tv(post))
    return worst <= 2e-3, f"max TV {worst:.2e} <= 2e-3"


def laplace_tv():
    n_list = (64, 256, 1024, 4096)
    med = _median_tvs("laplace-location", {"dim": 1}, [0.0], {"shape": "none"}, n_list,
                      range(N_SEEDS))
    ok = all(b < a for a, b in zip(med, med[1:])) and med[-1] <= 0.1
    return ok, "median TV " + ", ".join(f"{n}:{m:.4f}" for n, m in zip(n_list, med))


def ball_misspecified():
    st = prepare({"model": {"id": "gaussian-location", "params": {"dim": 2}},
                  "constraints": {"shape": "ball", "center": [0, 0], "radius": 1},
                  "theta_bar": [2, 0], "n_list": [1], "seeds": [0]})
    fr = st.frame
    geo_ok = (fr.J_star == (0,) and np.allclose(fr.lam, [0.5], atol=1e-10)
              and abs(fr.alpha_finite - 1.0) < 1e-10 and fr.L_basis.shape[1] == 1)
    # t-marginal of the limit law against N(-Y/2, 1/2)
    post = _posterior("gaussian-location", {"dim": 2}, [2, 0],
                      {"shape": "ball", "center": [0, 0], "radius": 1}, 1024, 0)
    law = build_limit(post.regime, post.frame, post.y_n)
    grid, _, _ = law_grid(law)
    ev = evaluate(grid, [law.as_density()])
    lines = ev.line_integrals(0)
    dens = lines / np.dot(ev.outer_w, lines) / abs(grid.axes[0, 0])
    ct = grid.center[0] + grid.axes[0, 0] * ev.outer_x[:, 0]
    yl = float(post.frame.L_basis[:, 0] @ post.y_n)
    ref = np.exp(-(ct + yl / 2) ** 2) / np.sqrt(np.pi)
    sup_err = float(np.max(np.abs(dens - ref)))
    n_list = (256, 1024, 4096)
    med = _median_tvs("gaussian-location", {"dim": 2}, [2, 0],
                      {"shape": "ball", "center": [0, 0], "radius": 1}, n_list, range(N_SEEDS))
    trend = all(b <= a for a, b in zip(med, med[1:])) and med[-1] <= 0.15
    ok = geo_ok and sup_err <= 1e-3 and trend
    return ok, (f"geometry {'ok' if geo_ok else 'wrong'}, marginal sup err {sup_err:.1e}, "
                "median TV " + ", ".join(f"{n}:{m:.4f}" for n, m in zip(n_list, med)))


def sup_gap_diagnostic():
    gaps = {}
    for n in (64, 4096):
        gaps[n] = float(np.median([sup_gn_gap(_posterior("laplace-location", {"dim": 1}, [0.0],
                                                         {"shape": "none"}, n, s))
                                   for s in range(N_SEEDS)]))
    gauss = 0.0
    for d in (1, 2):
        for n in (16, 256, 4096):
            for s in range(3):
                post = _posterior("gaussian-location", {"dim": d}, np.zeros(d),
                                  {"shape": "none"}, n, s)
                gauss = max(gauss, sup_gn_gap(post))
    ok = gaps[4096] < gaps[64] and gauss < 1e-10
    return ok, f"Laplace median gap 64:{gaps[64]:.3f} 4096:{gaps[4096]:.3f}, Gaussian max {gauss:.1e}"


def ball_points(count=10_000):
    """Fixed quasi-random ``(tau, sigma)`` points in ``[-3, 3] x [-6, 1]``."""
    pts = qmc.Halton(d=2, scramble=False).random(count + 1)[1:]
    return qmc.scale(pts, [-3.0, -6.0], [3.0, 1.0])


def indicator_convergence():
    st = prepare({"model": {"id": "gaussian-location", "params": {"dim": 2}},
                  "constraints": {"shape": "ball", "center": [0, 0], "radius": 1},
                  "theta_bar": [2, 0], "n_list": [1], "seeds": [0]})
    sets = SecondOrderSets(st.frame, st.cs)
    P = ball_points()
    T = np.column_stack([np.zeros(len(P)), P[:, 0]])
    S = np.column_stack([P[:, 1], np.zeros(len(P))])
    limit = c2_membership(sets, T, S)
    rates = [float(np.mean(c2n_membership(sets, T, S, n) != limit)) for n in (100, 1000, 10_000)]
    ok = all(b <= a for a, b in zip(rates, rates[1:])) and rates[-1] < 0.02
    return ok, "disagreement " + ", ".join(f"{r:.4f}" for r in rates)


def _frame(truth, cons):
    st = prepare({"model": {"id": "gaussian-location", "params": {"dim": len(truth)}},
                  "constraints": cons, "theta_bar": truth, "n_list": [1], "seeds": [0]})
    return st


def _random_c2_points(sets, rng, count):
    """Members of ``C_2`` drawn from a box in ``(c_t, c_s)`` coordinates."""
    fr = sets.frame
    k, m = fr.L_basis.shape[1], fr.Lperp_basis.shape[1]
    out_t, out_s = [], []
    while sum(len(x) for x in out_t) < count:
        ct = rng.uniform(-2, 2, size=(4 * count, k))
        cs = rng.uniform(-6, 2, size=(4 * count, m))
        T, S = ct @ fr.L_basis.T, cs @ fr.Lperp_basis.T
        ok = c2_membership(sets, T, S)
        out_t.append(T[ok])
        out_s.append(S[ok])
    return np.vstack(out_t)[:count], np.vstack(out_s)[:count]


def _strict_margin(sets, T, S):
    """Smallest slack of the strict description of ``C_2`` at each point."""
    fr = sets.frame
    slack = np.full(len(T), np.inf)
    for j in fr.J_tilde:
        uj = fr.u_j[j]
        dots = T @ uj
        on_face = np.abs(dots) <= 1e-10 * (1 + np.linalg.norm(T, axis=1))
        q = 0.5 * np.einsum("ni,ij,nj->n", T, fr.hess_j[j], T) + S @ uj
        slack = np.minimum(slack, np.where(on_face, -q, -dots))
    return slack


def cone_properties():
    rng = np.random.default_rng(7)
    cases = {
        "halfspace": ([0.7, 0.0], {"shape": "halfspace", "normal": [1, 0]}, 0.7),
        "ball": ([2.0, 0.0], {"shape": "ball", "center": [0, 0], "radius": 1}, 1.0),
        "orthant": ([1.0, 2.0], {"shape": "orthant-shift", "shift": [0, 0]}, 1.0),
    }
    msgs, ok = [], True
    for name, (truth, cons, alpha_ref) in cases.items():
        st = _frame(truth, cons)
        fr = st.frame
        a_err = abs(fr.alpha_finite - alpha_ref)
        sets = SecondOrderSets(fr, st.cs)
        T, S = _random_c2_points(sets, rng, 2000)
        i, j = rng.integers(0, len(T), size=(2, 1000))
        lam = rng.uniform(0, 1, size=(1000, 1))
        conv = c2_membership(sets, lam * T[i] + (1 - lam) * T[j], lam * S[i] + (1 - lam) * S[j])
        slack = _strict_margin(sets, T, S)
        strict = slack > 1e-3
        Ti, Si = T[strict][:1000], S[strict][:1000]
        k, m = fr.L_basis.shape[1], fr.Lperp_basis.shape[1]
        dt = rng.normal(size=(len(Ti), k))
        ds = rng.normal(size=(len(Ti), m))
        nrm = np.sqrt(np.sum(dt**2, axis=1) + np.sum(ds**2, axis=1))[:, None]
        r = 1e-6 * rng.uniform(0, 1, size=(len(Ti), 1)) / nrm
        inner = c2_membership(sets, Ti + (r * dt) @ fr.L_basis.T, Si + (r * ds) @ fr.Lperp_basis.T)
        case_ok = a_err < 1e-8 and conv.all() and inner.all() and len(Ti) >= 500
        ok &= case_ok
        msgs.append(f"{name}: alpha err {a_err:.1e}, convex {conv.mean():.3f}, "
                    f"interior {inner.mean():.3f} (n={len(Ti)})")
    return ok, "; ".join(msgs)


def builtin_configs():
    """Names and parsed configs of the bundled example configurations."""
    out = []
    for entry in sorted(resources.files("lcbvm").joinpath("configs").iterdir(),
                        key=lambda p: p.name):
        if entry.name.endswith(".json"):
            out.append((entry.name, load_config(json.loads(entry.read_text()))))
    return out


def properness():
    worst, worst_name, finite = N_SEEDS, "", True
    for name, cfg in builtin_configs():
        st = prepare(cfg)
        emitted = 0
        for seed in range(N_SEEDS):
            data = st.model.dataset(100, derive_seed(seed, 100))
            post = build_posterior(st.model, st.cs, data, st.theta_star, st.regime, st.frame)
            rep = properness_certificate(post)
            if rep.emitted:
                emitted += 1
                finite &= bool(np.isfinite(rep.log_bound_theta))
        if emitted < worst:
            worst, worst_name = emitted, name
    return worst >= 19 and finite, f"min emitted {worst}/{N_SEEDS} ({worst_name or 'all'}), bounds finite={finite}"


def mle_residual_trend():
    msgs, ok = [], True
    # the boundary case uses d=2: in d=1 the residual is exactly 0 whenever the
    # sample median is feasible, so its median over seeds sits on that atom
    for label, d, cons in (("well-specified", 1, {"shape": "none"}),
                           ("nearly misspecified", 2, {"shape": "halfspace", "normal": [1.0, 0.0]})):
        med = []
        for n in (64, 4096):
            med.append(float(np.median([mle_residuals(_posterior(
                "laplace-location", {"dim": d}, [0.0] * d, cons, n, s))["residual"]
                for s in range(N_SEEDS)])))
        ok &= med[1] < med[0]
        msgs.append(f"{label} 64:{med[0]:.3f} 4096:{med[1]:.3f}")
    return ok, "; ".join(msgs)


CRITERIA = (
    (1, "Gaussian exactness, well-specified", 10, gaussian_wellspec),
    (2, "Gaussian exactness, nearly misspecified", 10, gaussian_nearly),
    (3, "Laplace nonsmooth convergence", 120, laplace_tv),
    (4, "misspecified ball", 300, ball_misspecified),
    (5, "centered process sup-gap", 60, sup_gap_diagnostic),
    (6, "second-order indicator convergence", 10, indicator_convergence),
    (7, "alpha constants and C2 cone properties", 30, cone_properties),
    (8, "properness certificate", 30, properness),
    (9, "MLE residual diagnostics", 120, mle_residual_trend),
)


def run_criterion(number):
    for num, title, limit, fn in CRITERIA:
        if num == number:
            return _timed(num, title, limit, fn)
    raise KeyError(number)


def run_all(numbers=None, echo=print):
    results = []
    for num, title, limit, fn in CRITERIA:
        if numbers and num not in numbers:
            continue
        res = _timed(num, title, limit, fn)
        if echo:
            echo(res.line())
        results.append(res)
    return results
