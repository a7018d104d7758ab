"""Experiment sweeps over sample sizes and seeds, with CSV/JSON reports.

A config is a JSON object::

    {
      "name": "ball-misspecified",
      "model": {"id": "gaussian-location", "params": {"dim": 2}},
      "constraints": {"shape": "ball", "center": [0, 0], "radius": 1},
      "theta_bar": [2, 0],
      "n_list": [256, 1024, 4096],
      "seeds": [0, 1, 2],
      "grid": {"points": [201, 400]},
      "regime_override": {"theta_star": [1, 0]},
      "tv_threshold": 0.15,
      "strict_trend": false,
      "trend_tolerance": 0.0,
      "sup_gap_box": 3.0,
      "sample_check": 0,
      "certificate": true,
      "record_runtime": false,
      "output": {"dir": "out/ball"}
    }

Only ``model``, ``theta_bar``, ``n_list`` and ``seeds`` are required.
``runtime_ms`` is written as 0 unless ``record_runtime`` is true, so that
repeated runs produce identical bytes.
"""
import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, LcbvmError, NumericalError
from .geometry import build_frame, constraint_set_from_config
from .limits import build_limit, sample
from .models import derive_seed, get_model
from .posterior import (build_posterior, classify_regime, mle_residuals,
                        properness_certificate, solve_theta_star)
from .tv import compare, misspec_gap, sup_gn_gap

ROW_FIELDS = ("n", "seed", "regime", "tv", "tv_error", "sup_gap", "mle_residual", "alpha",
              "runtime_ms")
THREADS_ENV = "LCBVM_THREADS"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model_id: str
    model_params: dict
    constraints: dict
    theta_bar: np.ndarray
    n_list: tuple
    seeds: tuple
    grid_points: tuple = None
    theta_star: np.ndarray = None
    tv_threshold: float = None
    strict_trend: bool = False
    trend_tolerance: float = 0.0
    sup_gap_box: float = 3.0
    sample_check: int = 0
    certificate: bool = True
    record_runtime: bool = False
    output_dir: str = None
    raw: dict = field(default_factory=dict)


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def parse_config(raw):
    """Validate a config mapping and return an :class:`ExperimentConfig`."""
    _require(isinstance(raw, dict), "config must be a JSON object")
    model = raw.get("model")
    _require(isinstance(model, dict) and "id" in model, "config needs model.id")
    _require("theta_bar" in raw, "config needs theta_bar")
    theta_bar = np.asarray(raw["theta_bar"], dtype=float).reshape(-1)
    n_list = raw.get("n_list")
    _require(isinstance(n_list, list) and n_list, "n_list must be a non-empty list")
    _require(all(isinstance(n, int) and n >= 1 for n in n_list), "n_list entries must be positive integers")
    _require(all(a < b for a, b in zip(n_list, n_list[1:])), "n_list must be strictly increasing")
    seeds = raw.get("seeds")
    _require(isinstance(seeds, list) and seeds, "seeds must be a non-empty list")
    _require(all(isinstance(s, int) and s >= 0 for s in seeds), "seeds must be nonnegative integers")
    _require(len(set(seeds)) == len(seeds), "seeds must be distinct")
    grid = raw.get("grid") or {}
    points = grid.get("points")
    if points is not None:
        _require(isinstance(points, list) and all(isinstance(p, int) for p in points),
                 "grid.points must be a list of integers")
        points = tuple(points)
    override = raw.get("regime_override") or {}
    ts = override.get("theta_star")
    thr = raw.get("tv_threshold")
    return ExperimentConfig(
        name=str(raw.get("name", "experiment")),
        model_id=str(model["id"]),
        model_params=dict(model.get("params") or {}),
        constraints=dict(raw.get("constraints") or {"shape": "none"}),
        theta_bar=theta_bar,
        n_list=tuple(n_list),
        seeds=tuple(seeds),
        grid_points=points,
        theta_star=None if ts is None else np.asarray(ts, dtype=float),
        tv_threshold=None if thr is None else float(thr),
        strict_trend=bool(raw.get("strict_trend", False)),
        trend_tolerance=float(raw.get("trend_tolerance", 0.0)),
        sup_gap_box=float(raw.get("sup_gap_box", 3.0)),
        sample_check=int(raw.get("sample_check", 0)),
        certificate=bool(raw.get("certificate", True)),
        record_runtime=bool(raw.get("record_runtime", False)),
        output_dir=(raw.get("output") or {}).get("dir"),
        raw=raw,
    )


def load_config(source):
    """Load a config from a path, JSON string or mapping."""
    if isinstance(source, ExperimentConfig):
        return source
    if isinstance(source, dict):
        return parse_config(source)
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw)


@dataclass
class Setup:
    config: ExperimentConfig
    model: object
    cs: object
    theta_star: np.ndarray
    regime: object
    frame: object


def prepare(config):
    """Model, constraint set, optimum, regime and cone geometry for a config."""
    config = load_config(config)
    model = get_model(config.model_id, config.model_params, config.theta_bar)
    cs = constraint_set_from_config(config.constraints, model.dim)
    if config.theta_star is not None:
        theta_star = config.theta_star
        if theta_star.shape != (model.dim,):
            raise ConfigError("regime_override.theta_star has the wrong dimension")
    else:
        theta_star = solve_theta_star(model, cs)
    regime = classify_regime(model, cs, theta_star)
    frame = build_frame(cs, theta_star, model.pop_grad(theta_star), model.pop_hess(theta_star),
                        grad_tol=regime.tol)
    return Setup(config, model, cs, theta_star, regime, frame)


def regime_report(config):
    """Geometry and regime dossier as a JSON-ready dict."""
    st = prepare(config)
    return _dossier(st)


def _dossier(st):
    return {
        "name": st.config.name,
        "model": st.model.describe(),
        "constraints": st.cs.to_dict(),
        "regime": st.regime.to_dict(),
        "geometry": st.frame.to_dict(),
    }


def _nan():
    return float("nan")


def run_replicate(st, n, seed):
    """One (n, seed) row; errors are caught and tagged with the failing stage."""
    cfg = st.config
    t0 = time.perf_counter()
    row = {"n": n, "seed": seed, "regime": st.regime.kind.value, "tv": _nan(),
           "tv_error": _nan(), "sup_gap": _nan(), "mle_residual": _nan(),
           "alpha": float(st.frame.alpha_finite), "runtime_ms": 0}
    info = {}
    stage = "data"
    try:
        data = st.model.dataset(n, derive_seed(seed, n))
        stage = "posterior"
        post = build_posterior(st.model, st.cs, data, st.theta_star, st.regime, st.frame)
        stage = "limit"
        law = build_limit(st.regime, st.frame, post.y_n)
        if cfg.sample_check:
            stage = "sample"
            res = sample(law, cfg.sample_check, derive_seed(seed, n) ^ 0x5A5A)
            info["acceptance"] = res.acceptance
        stage = "tv"
        tv = compare(post, law, cfg.grid_points)
        row["tv"], row["tv_error"] = tv.tv, tv.error_estimate
        stage = "sup_gap"
        if post.misspecified:
            row["sup_gap"] = misspec_gap(post, cfg.sup_gap_box)
        else:
            row["sup_gap"] = sup_gn_gap(post, cfg.sup_gap_box)
        stage = "mle"
        row["mle_residual"] = mle_residuals(post)["residual"]
        if cfg.certificate:
            stage = "certificate"
            cert = properness_certificate(post)
            info["certificate"] = cert.emitted
    except LcbvmError as exc:
        info["error"] = {"n": n, "seed": seed, "stage": stage, "type": type(exc).__name__,
                         "message": str(exc), "numeric": isinstance(exc, NumericalError)}
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        info["error"] = {"n": n, "seed": seed, "stage": stage, "type": type(exc).__name__,
                         "message": str(exc), "numeric": True}
    if cfg.record_runtime:
        row["runtime_ms"] = int(round(1000 * (time.perf_counter() - t0)))
    return row, info


def thread_count():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def _trend(per_n, strict, tol=0.0):
    med = [p["median_tv"] for p in per_n]
    if any(not np.isfinite(m) for m in med):
        return False
    pairs = list(zip(med, med[1:]))
    if strict:
        return all(b < a for a, b in pairs)
    return all(b <= a + tol for a, b in pairs)


def summarize(rows, config, errors=(), dossier=None):
    """Per-n median/IQR of TV, trend verdict and failure bookkeeping."""
    per_n = []
    for n in config.n_list:
        tvs = np.array([r["tv"] for r in rows if r["n"] == n and np.isfinite(r["tv"])])
        if tvs.size:
            q25, med, q75 = (float(v) for v in np.percentile(tvs, [25, 50, 75]))
        else:
            q25 = med = q75 = float("nan")
        per_n.append({"n": n, "count": int(tvs.size), "median_tv": med, "q25": q25, "q75": q75})
    trend_ok = _trend(per_n, config.strict_trend, config.trend_tolerance)
    final = per_n[-1]["median_tv"]
    below = None if config.tv_threshold is None else bool(np.isfinite(final) and final <= config.tv_threshold)
    verdict = trend_ok and (below is not False)
    return {
        "name": config.name,
        "per_n": per_n,
        "trend": {"monotone": trend_ok, "strict": config.strict_trend,
                  "tolerance": config.trend_tolerance, "threshold": config.tv_threshold, "final_below_threshold": below,
                  "verdict": "pass" if verdict else "fail"},
        "partial": bool(errors),
        "errors": list(errors),
        "geometry": dossier,
    }


def run_experiment(config, threads=None):
    """Run every (n, seed) replicate; returns ``(rows, summary)``."""
    st = prepare(config)
    cfg = st.config
    tasks = [(n, s) for n in cfg.n_list for s in cfg.seeds]
    threads = threads or thread_count()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda a: run_replicate(st, *a), tasks))
    else:
        results = [run_replicate(st, n, s) for n, s in tasks]
    rows = [r for r, _ in results]
    errors = [i["error"] for _, i in results if "error" in i]
    summary = summarize(rows, cfg, errors, _dossier(st))
    extras = [{k: v for k, v in i.items() if k != "error"} for _, i in results]
    summary["certificates_emitted"] = sum(1 for e in extras if e.get("certificate"))
    return rows, summary


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if not np.isfinite(v) else format(float(v), ".17g")
    return str(v)


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in ROW_FIELDS])
    return buf.getvalue()


def plot_csv(summary):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("n", "median_tv", "q25", "q75"))
    for p in summary["per_n"]:
        w.writerow([_fmt(p["n"]), _fmt(p["median_tv"]), _fmt(p["q25"]), _fmt(p["q75"])])
    return buf.getvalue()


def _json_clean(obj):
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def emit_outputs(rows, summary, out_dir):
    """Write ``rows.csv``, ``summary.json`` and ``plot.csv``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"rows": out / "rows.csv", "summary": out / "summary.json", "plot": out / "plot.csv"}
    paths["rows"].write_text(rows_to_csv(rows))
    paths["summary"].write_text(json.dumps(_json_clean(summary), indent=2, sort_keys=True) + "\n")
    paths["plot"].write_text(plot_csv(summary) if summary else "n,median_tv,q25,q75\n")
    return paths


def read_rows(path):
    """Rows from a ``rows.csv`` file with numeric fields parsed."""
    with open(path, newline="") as fh:
        out = []
        for r in csv.DictReader(fh):
            out.append({"n": int(r["n"]), "seed": int(r["seed"]), "regime": r["regime"],
                        "tv": float(r["tv"]), "tv_error": float(r["tv_error"]),
                        "sup_gap": float(r["sup_gap"]), "mle_residual": float(r["mle_residual"]),
                        "alpha": float(r["alpha"]), "runtime_ms": int(r["runtime_ms"])})
        return out
