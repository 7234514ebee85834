"""Command-line entry point.

Exit status: 0 success, 1 failed oracle check, 2 configuration error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
from pathlib import Path

import jsonschema
import numpy as np
import scipy
from scipy import stats

from . import __version__
from .config import SUMMARY_SCHEMA, ExperimentConfig, bundled_configs, load_config, parse_config
from .driver import IterationRecord, evaluate_objective, run_gpo, stream_rng
from .errors import ConfigError, DriverAbort, InputDesignError
from .inputs import MarkovDomain, block_tuples
from .model import DEFAULT_THETA, LgssModel
from .oracle import dense_conditional, dense_loglik, exact_smoother_moments, kalman_loglik, kalman_score
from .smc import SmootherConfig, estimate_information

log = logging.getLogger("inputdesign")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
HP_COLUMNS = ("hp_mean_const", "hp_signal_var", "hp_noise_var", "hp_const_var")


def versions() -> dict[str, str]:
    return {
        "inputdesign": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def trace_header(dim: int) -> list[str]:
    return (
        ["k", "phase"] + [f"x_{i}" for i in range(dim)]
        + ["h_hat", "mu_max", "pred_mean", "pred_std", "best_so_far"]
        + list(HP_COLUMNS) + [f"hp_length_scale_{i}" for i in range(dim)] + ["flags"]
    )


def trace_row(rec: IterationRecord, dim: int) -> list[str]:
    hp = rec.hyperparameters
    if hp is None:
        hp_cells = [""] * (len(HP_COLUMNS) + dim)
    else:
        hp_cells = [_fmt(hp["mean_const"]), _fmt(hp["signal_var"]), _fmt(hp["noise_var"]), _fmt(hp["const_var"])]
        hp_cells += [_fmt(v) for v in hp["length_scales"]]
    return (
        [str(rec.k), rec.phase] + [_fmt(v) for v in rec.design]
        + [_fmt(rec.h_hat), _fmt(rec.mu_max), _fmt(rec.pred_mean), _fmt(rec.pred_std), _fmt(rec.best_so_far)]
        + hp_cells + ["|".join(rec.flags)]
    )


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_design(cfg: ExperimentConfig, out: Path) -> int:
    """Run the optimizer; stream trace.csv (deterministic) and timing.csv, then write summary.json."""
    out.mkdir(parents=True, exist_ok=True)
    dim = cfg.domain.dim
    with open(out / "trace.csv", "w", newline="") as ft, open(out / "timing.csv", "w", newline="") as fw:
        trace, timing = csv.writer(ft, lineterminator="\n"), csv.writer(fw, lineterminator="\n")
        trace.writerow(trace_header(dim))
        timing.writerow(["k", "wall_ms"])

        def on_record(rec: IterationRecord):
            trace.writerow(trace_row(rec, dim))
            timing.writerow([rec.k, f"{rec.wall_ms:.3f}"])
            ft.flush()
            fw.flush()
            log.info("k=%d %s h=%.4f best=%.4f", rec.k, rec.phase, rec.h_hat, rec.best_so_far)

        try:
            result = run_gpo(cfg.model, cfg.theta0, cfg.domain, cfg.gpo, cfg.seed, on_record=on_record)
        except DriverAbort as exc:
            log.error("run aborted: %s", exc)
            return EXIT_ABORT

    summary = {
        "name": cfg.name,
        "seed": cfg.seed,
        "model": cfg.raw["model"],
        "theta0": [float(v) for v in cfg.theta0],
        "domain": cfg.domain.describe(),
        "best_design": [float(v) for v in result.best_design],
        "best_posterior_mean": result.best_posterior_mean,
        "final_objective": _json_float(result.final_objective),
        "final_objective_replicates": [float(v) for v in result.final_objective_replicates],
        "hyperparameters": result.hyperparameters.to_dict() if result.hyperparameters else None,
        "n_evaluations": len(result.trace),
        "failures": [{"k": k, "error": msg} for k, msg in result.failures],
        "versions": versions(),
        "config": cfg.raw,
    }
    if isinstance(cfg.domain, MarkovDomain):
        summary["best_pmf"] = [float(v) for v in cfg.domain.compose_pmf(result.best_design)]
    jsonschema.validate(summary, SUMMARY_SCHEMA)
    _write_json(out / "summary.json", summary)
    print(f"best design {np.round(result.best_design, 4).tolist()}  final objective {result.final_objective:.4f}")
    return EXIT_OK


def _design_or_center(cfg: ExperimentConfig) -> np.ndarray:
    return cfg.design if cfg.design is not None else cfg.domain.center()


def run_evaluate(cfg: ExperimentConfig, out: Path) -> int:
    design = _design_or_center(cfg)
    res = evaluate_objective(cfg.model, cfg.theta0, design, cfg.domain, cfg.gpo, stream_rng(cfg.seed, "evaluate", 0))
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "evaluate.json", {
        "design": design.tolist(),
        "value": res.value,
        "replicate_values": res.replicate_values,
        "regularized": res.regularized,
        "seed": cfg.seed,
        "versions": versions(),
        "config": cfg.raw,
    })
    print(f"h = {res.value:.6f}")
    return EXIT_OK


def normality_samples(cfg: ExperimentConfig, replicates: int | None = None) -> np.ndarray:
    """Replicate objective estimates at a fixed input law, each with fresh input and data."""
    R = replicates or cfg.normality_replicates
    design = _design_or_center(cfg)
    h = np.empty(R)
    for r in range(R):
        h[r] = evaluate_objective(
            cfg.model, cfg.theta0, design, cfg.domain, cfg.gpo, stream_rng(cfg.seed, "evaluate", r)
        ).value
    return h


def standardize(h: np.ndarray, M: int) -> np.ndarray:
    """``nu = sqrt(M) (h - mean h) / std(sqrt(M) h)``, which reduces to a z-score."""
    s = np.sqrt(M) * np.asarray(h, dtype=float)
    return (s - s.mean()) / s.std(ddof=1)


def normality_statistics(nu: np.ndarray) -> dict:
    ks = stats.kstest(nu, "norm")
    return {
        "n": int(len(nu)),
        "skewness": float(stats.skew(nu)),
        "excess_kurtosis": float(stats.kurtosis(nu, fisher=True)),
        "ks_statistic": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue),
    }


def run_normality(cfg: ExperimentConfig, out: Path) -> int:
    h = normality_samples(cfg)
    nu = standardize(h, cfg.gpo.M)
    st = normality_statistics(nu)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "nu-samples.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["r", "h_hat", "nu"])
        for r, (hv, nv) in enumerate(zip(h, nu)):
            w.writerow([r, repr(float(hv)), repr(float(nv))])
    _write_json(out / "normality.json", {
        **st,
        "h_mean": float(h.mean()),
        "h_std": float(h.std(ddof=1)),
        "seed": cfg.seed,
        "versions": versions(),
        "config": cfg.raw,
    })
    print(f"skew {st['skewness']:.3f}  excess kurtosis {st['excess_kurtosis']:.3f}  KS p = {st['ks_pvalue']:.3f}")
    return EXIT_OK


def run_extreme_points(cfg: ExperimentConfig, out: Path) -> int:
    if not isinstance(cfg.domain, MarkovDomain):
        raise ConfigError("extreme-points requires a markov domain")
    dom = cfg.domain
    q = len(dom.alphabet)
    vals = dom.alphabet.values
    blocks = [[vals[i] for i in b] for b in block_tuples(q, dom.n)]
    points = [{"index": i, "support": [[*blocks[j], float(p[j])] for j in np.flatnonzero(p)]}
              for i, p in enumerate(dom.extreme_points)]
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "extreme-points.json", {
        "alphabet": list(vals),
        "n": dom.n,
        "blocks": blocks,
        "extreme_points": [p.tolist() for p in dom.extreme_points],
        "constant_vertices": dom.constant_vertices(),
    })
    print(f"{dom.n_vertices} extreme points")
    for p in points:
        print(f"  [{p['index']}] " + ", ".join(f"{tuple(s[:-1])}: {s[-1]:.4g}" for s in p["support"]))
    return EXIT_OK


def oracle_checks(theta=None, seed: int = 0, T: int = 100, N: int = 1000, M: int = 100, seeds: int = 10) -> list[dict]:
    """Agreement of the Kalman oracle with dense Gaussian algebra, and of the particle score with the oracle."""
    model = LgssModel()
    theta = np.asarray(theta if theta is not None else DEFAULT_THETA["lgss"], dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(99,)))
    results = []

    def record(name, ok, detail):
        results.append({"check": name, "passed": bool(ok), "detail": detail})

    worst = 0.0
    for Ts in range(1, 7):
        u = rng.choice([-1.0, 1.0], size=Ts)
        y = model.simulate(theta, u, rng).outputs
        worst = max(worst, abs(kalman_loglik(theta, y, u, model) - dense_loglik(theta, y, u, model)))
    record("loglik-vs-dense", worst < 1e-10, f"max abs error {worst:.2e}")

    u = rng.choice([-1.0, 1.0], size=50)
    y = model.simulate(theta, u, rng).outputs
    s = kalman_score(theta, y, u, model)
    h = 1e-6
    fd = np.array([
        (kalman_loglik(theta + h * e, y, u, model) - kalman_loglik(theta - h * e, y, u, model)) / (2 * h)
        for e in np.eye(2)
    ])
    rel = float(np.max(np.abs(s - fd) / np.maximum(np.abs(fd), 1.0)))
    record("score-vs-finite-difference", rel < 1e-6, f"max relative error {rel:.2e}")

    u = rng.choice([-1.0, 1.0], size=4)
    y = model.simulate(theta, u, rng).outputs
    sm = exact_smoother_moments(theta, y, u, model)
    mean, cov = dense_conditional(theta, y, u, model)
    err = max(np.max(np.abs(sm.means - mean)), np.max(np.abs(sm.variances - np.diag(cov))),
              np.max(np.abs(sm.lag_cov - np.diag(cov, 1))))
    record("smoother-vs-dense", err < 1e-10, f"max abs error {err:.2e}")

    u = rng.choice([-1.0, 1.0], size=T)
    y = model.simulate(theta, u, rng).outputs
    exact = kalman_score(theta, y, u, model)
    cfg = SmootherConfig(M=M)
    totals = np.array([
        estimate_information(model, theta, y, u, N, cfg, np.random.default_rng([seed, 7, i]))[1].total
        for i in range(seeds)
    ])
    bound = 3.0 * totals.std(ddof=1, axis=0) / math.sqrt(seeds)
    dev = np.abs(totals.mean(axis=0) - exact)
    record("particle-score-vs-kalman", bool(np.all(dev <= bound)),
           f"|mean - exact| = {dev.round(4).tolist()}, 3 std err = {bound.round(4).tolist()}")
    return results


def run_oracle_check(cfg: ExperimentConfig | None, out: Path) -> int:
    theta = cfg.theta0 if cfg is not None and cfg.raw["model"] == "lgss" else None
    seed = cfg.seed if cfg is not None else 0
    results = oracle_checks(theta, seed)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "oracle-check.json", {"seed": seed, "checks": results, "versions": versions()})
    for r in results:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['check']}: {r['detail']}")
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_CHECK_FAILED


COMMANDS = {
    "design": run_design,
    "evaluate": run_evaluate,
    "normality-report": run_normality,
    "extreme-points": run_extreme_points,
    "oracle-check": run_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inputdesign", description="Input design by Gaussian-process optimization.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "design": "run the optimizer and write trace.csv, timing.csv, summary.json",
        "evaluate": "estimate the objective at one design point",
        "normality-report": "replicate the objective estimate and test the standardized samples for normality",
        "extreme-points": "list the extreme points of the stationary Markov domain",
        "oracle-check": "validate the particle pipeline against the exact Kalman oracle",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=name != "oracle-check",
                        help=f"config path or bundled name ({', '.join(bundled_configs())})")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--dry-run", action="store_true", help="validate and print the resolved config, then exit")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = None
        if args.config is not None:
            cfg = load_config(args.config)
            overrides = {}
            if args.seed is not None:
                overrides["seed"] = args.seed
            if args.out is not None:
                overrides["out"] = args.out
            if overrides:
                data = {k: v for k, v in cfg.raw.items()}
                data.update(overrides)
                cfg = parse_config(data, args.config)
        if args.dry_run:
            print(json.dumps(cfg.raw if cfg else {}, indent=2, sort_keys=True))
            return EXIT_OK
        out = Path(args.out or (cfg.out if cfg else "results"))
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DriverAbort, InputDesignError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
