"""Experiment orchestration: dispatch, verdicts, persistence, worker pools.

A run produces a deterministic record (hashed, byte-comparable across reruns
and worker counts) plus plot-ready CSV curves; wall-clock timing lives in a
separate section excluded from the determinism contract.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import __version__
from .base_env import sample_base_path
from .config import (
    ExperimentConfig,
    build_doeblin_system,
    build_symbolic_system,
    canonical_record_bytes,
    config_hash,
)
from .doeblin import (
    doeblin_char_identity,
    doeblin_clt_test,
    doeblin_llt_scan,
    doeblin_renewal_curve,
)
from .errors import (
    ClassifierFailed,
    ConfigError,
    DegenerateVariance,
)
from .fiber import CylinderFunction
from .limits import (
    annealed_variance,
    berry_esseen_scan,
    char_identity,
    clt_test,
    decay_survey,
    llt_scan,
    renewal_curve,
)
from .rpf import exp_convergence_probe, solve_rpf
from .seeding import generator


@dataclass
class RunResult:
    record: dict
    curves: dict
    timing: dict
    exit_code: int
    warnings: list = field(default_factory=list)


def _pool_pmap(executor):
    def pmap(fn, items):
        return executor.map(fn, list(items), chunksize=1)

    return pmap


def run_experiment(cfg: ExperimentConfig, workers: int = 1,
                   seed_override: int | None = None, strict: bool = False) -> RunResult:
    """Execute the configured experiment and assemble the result record."""
    seed = int(seed_override) if seed_override is not None else cfg.seed
    t0 = time.perf_counter()
    executor = None
    try:
        if workers > 1:
            executor = ProcessPoolExecutor(max_workers=workers)
            pmap = _pool_pmap(executor)
        else:
            pmap = None
        stats, curves, verdict, warnings, tasks = _dispatch(cfg, seed, pmap)
    finally:
        if executor is not None:
            executor.shutdown()
    elapsed = time.perf_counter() - t0
    expect_ok = _expectation_met(cfg.expect, verdict)
    record = {
        "name": cfg.name,
        "experiment": cfg.experiment,
        "expect": cfg.expect,
        "seed": seed,
        "config_hash": config_hash(cfg.raw),
        "tool_version": __version__,
        "verdicts": {
            "outcome": verdict,
            "expectation_met": expect_ok,
            "passed": expect_ok and (not strict or not warnings),
        },
        "warnings": warnings,
        "stats": stats,
        "task_counts": tasks,
    }
    exit_code = 0 if record["verdicts"]["passed"] else 1
    return RunResult(record, curves, {"wall_clock_seconds": elapsed,
                                      "workers": workers}, exit_code, warnings)


def _expectation_met(expect: str, verdict: str) -> bool:
    if expect == "pass":
        return verdict == "pass"
    if expect == "degenerate":
        return verdict == "degenerate"
    if expect == "classifier-failure":
        return verdict == "classifier-failure"
    return False


def _dispatch(cfg: ExperimentConfig, seed: int, pmap):
    """Returns (stats, curves, verdict, warnings, task_counts).

    verdict is one of "pass", "fail", "degenerate", "classifier-failure".
    """
    warnings: list = []
    if cfg.kind == "symbolic":
        system = build_symbolic_system(cfg)
    else:
        system = build_doeblin_system(cfg)
    ex = cfg.experiment
    omega = cfg.sample("omega_samples")
    reps = cfg.sample("fiber_replicates")
    strata = cfg.sample("strata_depth")

    if ex == "rpf-audit":
        n_windows = min(omega, 24)
        rows = []
        worst = 0.0
        fits = []
        for i in range(n_windows):
            win = sample_base_path(system.chain, -300, 360, generator(seed, 400, i))
            trip = solve_rpf(win, 0.0, 64, 64, system.pot, system.model)
            worst = max(worst, trip.eigen_residual, trip.dual_residual,
                        trip.normalization_residual)
            q = CylinderFunction(system.model.r - 1,
                                 generator(seed, 401, i).standard_normal(
                                     system.model.space_dim), system.model.d)
            fit = exp_convergence_probe(win, 0.0, q, list(range(2, 31)),
                                        system.pot, system.model)
            fits.append(0.0 if fit.degenerate else fit.c)
            rows.append({"window": i, "eigen": trip.eigen_residual,
                         "dual": trip.dual_residual,
                         "normalization": trip.normalization_residual,
                         "conv_rate": fits[-1]})
        ok = worst < cfg.tol("rpf_residual") and all(c < 0.9 for c in fits)
        stats = {"max_residual": worst, "max_conv_rate": max(fits),
                 "windows": n_windows}
        return stats, {"rpf_audit": rows}, "pass" if ok else "fail", warnings, \
            {"windows": n_windows}

    if ex == "variance":
        n_list = cfg.grids.get("n_list", [50, 100, 200, 400])
        sigma_sq, Vbar, tail, ci = annealed_variance(system, n_list, omega, seed,
                                                     strata, pmap=pmap)
        degen = sigma_sq < 1e-10
        rows = [{"n": n, "V_n": v} for n, v in zip(sorted(int(x) for x in n_list), Vbar)]
        stats = {"sigma_sq": sigma_sq, "sigma_sq_ci": list(ci),
                 "tail_fractions": tail, "degenerate": degen}
        return stats, {"variance": rows}, "degenerate" if degen else "pass", \
            warnings, {"omega_samples": omega}

    if ex == "clt":
        n_list = cfg.grids.get("n_list", [1000, 4000])
        try:
            rep = clt_test(system, n_list, omega, reps, seed,
                           ks_threshold=cfg.tol("ks"), strata_depth=strata,
                           expect_degenerate=(cfg.expect == "degenerate"), pmap=pmap)
        except DegenerateVariance:
            return {"error": "degenerate variance"}, {}, "degenerate", warnings, {}
        curves = {"clt": [{"n": n, "ks": k, "threshold": rep.threshold}
                          for n, k in zip(rep.n_list, rep.ks)]}
        stats = {"sigma_sq": rep.sigma_sq, "ks": rep.ks,
                 "pooled_samples": rep.pooled_samples,
                 "degenerate_max_abs": rep.degenerate_max_abs}
        if rep.degenerate:
            verdict = "degenerate" if rep.passed else "fail"
        else:
            verdict = "pass" if rep.passed else "fail"
        return stats, curves, verdict, warnings, {"omega_samples": omega}

    if ex == "berry-esseen":
        n_list = cfg.grids.get("n_list", [64, 256, 1024])
        rep = berry_esseen_scan(system, n_list, omega, seed, strata, pmap=pmap)
        curves = {"berry_esseen": [{"n": n, "sup_dev": s, "scaled": sc}
                                   for n, s, sc in zip(rep.n_list, rep.sup_dev,
                                                       rep.scaled)]}
        stats = {"sigma_sq": rep.sigma_sq, "scaled": rep.scaled, "mode": rep.mode,
                 "note": "annealed self-normalized scan; diagnostic only"}
        return stats, curves, "pass" if rep.bounded else "fail", warnings, \
            {"omega_samples": omega}

    if ex == "llt":
        n_list = cfg.grids.get("n_list", [500, 1000, 2000])
        try:
            rep = llt_scan(system, n_list, omega, seed, threshold=cfg.tol("llt_sup"),
                           strata_depth=strata, pmap=pmap)
        except ClassifierFailed as exc:
            stats = {"classifier_error": str(exc)}
            return stats, {}, "classifier-failure", warnings, {}
        except DegenerateVariance:
            return {"error": "degenerate variance"}, {}, "degenerate", warnings, {}
        curves = {"llt": [{"n": n, "sup_dev": s, "threshold": rep.threshold}
                          for n, s in zip(rep.n_list, rep.sup_dev)]}
        stats = {"sigma_sq": rep.sigma_sq, "sup_dev": rep.sup_dev,
                 "classifier_min_gap": rep.classifier.min_gap}
        return stats, curves, "pass" if rep.passed else "fail", warnings, \
            {"omega_samples": omega}

    if ex == "renewal":
        a_list = cfg.grids.get("a_list", [-20, -15, -10] + list(range(40, 61)))
        trunc = int(cfg.renewal.get("truncation", 200))
        lw = cfg.renewal.get("limit_window")
        fweights = cfg.renewal.get("f")
        try:
            rep = renewal_curve(system, a_list, trunc, omega, seed,
                                f_weights=fweights, strata_depth=strata,
                                rel_tol=cfg.tol("renewal_rel"),
                                limit_window=tuple(lw) if lw else None,
                                negative_tol=cfg.tol("renewal_negative"), pmap=pmap)
        except ClassifierFailed as exc:
            return {"classifier_error": str(exc)}, {}, "classifier-failure", \
                warnings, {}
        except DegenerateVariance:
            return {"error": "degenerate variance"}, {}, "degenerate", warnings, {}
        curves = {"renewal": [{"a": a, "U": u, "target": rep.target}
                              for a, u in zip(rep.a_list, rep.U)]}
        if rep.tail_bound > 1e-3:
            warnings.append(f"renewal tail bound {rep.tail_bound:.2e} is not small; "
                            "increase the truncation")
        stats = {"gamma": rep.gamma, "mu_f": rep.mu_f, "target": rep.target,
                 "rel_err_window": rep.rel_err_window,
                 "negative_side_max": rep.negative_side_max,
                 "tail_bound": rep.tail_bound, "abel_gap": rep.abel_gap}
        return stats, curves, "pass" if rep.passed else "fail", warnings, \
            {"omega_samples": omega}

    if ex == "decay-survey":
        t_small = cfg.grids.get("t_small", [0.05, 0.1, 0.2])
        t_large = cfg.grids.get("t_large", [0.8, 1.6, 2.4])
        n_grid = cfg.grids.get("n_grid", [50, 100, 200])
        rep = decay_survey(system, t_small, t_large, n_grid, omega, seed,
                           strata_depth=strata, pmap=pmap)
        rows = []
        for n in rep.n_grid:
            rows.append({"branch": "small_t", "n": n,
                         "violation_frac": rep.small_violation_frac[n]})
        for n in rep.n_grid:
            rows.append({"branch": "large_t", "n": n,
                         "violation_frac": rep.large_violation_frac[n]})
        stats = {"d2_fit": rep.d2_fit, "A_fit": rep.A_fit, "u_fit": rep.u_fit,
                 "B0_fit": rep.B0_fit,
                 "small_violation_frac": rep.small_violation_frac,
                 "large_violation_frac": rep.large_violation_frac}
        ok = rep.small_ok and rep.large_ok
        return stats, {"decay": rows}, "pass" if ok else "fail", warnings, \
            {"omega_samples": omega}

    if ex == "char-fn":
        t_grid = cfg.grids.get("t_grid", [0.1, 0.3, 0.7])
        n_list = cfg.grids.get("n_list", [4, 8, 16, 32])
        rep = char_identity(system, t_grid, n_list, omega,
                            cfg.sample("mc_replicates"), seed, strata,
                            exact_tol=cfg.tol("char_exact"), pmap=pmap)
        stats = {"max_exact_spectral_gap": rep.max_exact_spectral_gap,
                 "mc_within_band": rep.mc_within_band}
        rows = [{"t": t, "n": n} for t, n in rep.grid]
        return stats, {"char_grid": rows}, "pass" if rep.passed else "fail", \
            warnings, {"grid_points": len(rep.grid)}

    if ex == "doeblin-clt":
        n_list = cfg.grids.get("n_list", [1000, 4000])
        try:
            rep = doeblin_clt_test(system, n_list, omega, reps, seed,
                                   ks_threshold=cfg.tol("ks"), strata_depth=strata,
                                   pmap=pmap)
        except DegenerateVariance:
            return {"error": "degenerate variance"}, {}, "degenerate", warnings, {}
        curves = {"clt": [{"n": n, "ks": k, "threshold": rep.threshold}
                          for n, k in zip(rep.n_list, rep.ks)]}
        stats = {"sigma_sq": rep.sigma_sq, "ks": rep.ks}
        return stats, curves, "pass" if rep.passed else "fail", warnings, \
            {"omega_samples": omega}

    if ex == "doeblin-llt":
        n_list = cfg.grids.get("n_list", [500, 1000, 2000])
        try:
            rep = doeblin_llt_scan(system, n_list, omega, seed,
                                   threshold=cfg.tol("llt_sup"),
                                   strata_depth=strata, pmap=pmap)
        except ClassifierFailed as exc:
            return {"classifier_error": str(exc)}, {}, "classifier-failure", \
                warnings, {}
        curves = {"llt": [{"n": n, "sup_dev": s, "threshold": rep.threshold}
                          for n, s in zip(rep.n_list, rep.sup_dev)]}
        stats = {"sigma_sq": rep.sigma_sq, "sup_dev": rep.sup_dev}
        return stats, curves, "pass" if rep.passed else "fail", warnings, \
            {"omega_samples": omega}

    if ex == "doeblin-renewal":
        a_list = cfg.grids.get("a_list", [-20, -15, -10] + list(range(40, 61)))
        trunc = int(cfg.renewal.get("truncation", 200))
        lw = cfg.renewal.get("limit_window")
        try:
            rep = doeblin_renewal_curve(system, a_list, trunc, omega, seed,
                                        f_values=cfg.renewal.get("f"),
                                        strata_depth=strata,
                                        rel_tol=cfg.tol("renewal_rel"),
                                        limit_window=tuple(lw) if lw else None,
                                        negative_tol=cfg.tol("renewal_negative"),
                                        pmap=pmap)
        except ClassifierFailed as exc:
            return {"classifier_error": str(exc)}, {}, "classifier-failure", \
                warnings, {}
        curves = {"renewal": [{"a": a, "U": u, "target": rep.target}
                              for a, u in zip(rep.a_list, rep.U)]}
        stats = {"gamma": rep.gamma, "target": rep.target,
                 "rel_err_window": rep.rel_err_window,
                 "negative_side_max": rep.negative_side_max}
        return stats, curves, "pass" if rep.passed else "fail", warnings, \
            {"omega_samples": omega}

    if ex == "doeblin-char":
        t_grid = cfg.grids.get("t_grid", [0.1, 0.3, 0.7])
        n_list = cfg.grids.get("n_list", [4, 8, 16, 32])
        rep = doeblin_char_identity(system, t_grid, n_list, omega,
                                    cfg.sample("mc_replicates"), seed, strata,
                                    exact_tol=cfg.tol("char_exact"), pmap=pmap)
        stats = {"max_exact_spectral_gap": rep.max_exact_spectral_gap,
                 "mc_within_band": rep.mc_within_band}
        return stats, {}, "pass" if rep.passed else "fail", warnings, \
            {"grid_points": len(rep.grid)}

    raise ConfigError(f"experiment: unhandled experiment {ex!r}")


def write_results(out_dir: str, result: RunResult) -> str:
    os.makedirs(out_dir, exist_ok=True)
    curves_dir = os.path.join(out_dir, "curves")
    files = {}
    if result.curves:
        os.makedirs(curves_dir, exist_ok=True)
        for name, rows in result.curves.items():
            if not rows:
                continue
            path = os.path.join(curves_dir, f"{name}.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
                writer.writeheader()
                writer.writerows(rows)
            files[name] = os.path.relpath(path, out_dir)
    record = dict(result.record)
    record["curve_files"] = files
    payload = {
        "record": json.loads(canonical_record_bytes(record)),
        "timing": result.timing,
    }
    path = os.path.join(out_dir, "results.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def record_bytes_from_file(path: str) -> bytes:
    """Canonical record bytes of a results.json (timing excluded)."""
    with open(path) as fh:
        payload = json.load(fh)
    return canonical_record_bytes(payload["record"])
