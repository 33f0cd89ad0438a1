"""Experiment orchestration: simulation sweeps, estimation runs, diagnostics.

Every ``(t index, replicate)`` cell draws from its own seed, derived from the
master seed, so results do not depend on scheduling; rows are always written in
``(t index, replicate)`` order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, cache_directory
from .errors import ConfigError, InfeasibleTarget, SolverError
from .estimator import ExpFamilyModel, cutoff_level, estimate, information_projection, linear_level, moments
from .metrics import RateTable, kl_divergence, l2_error, lemma_suite, rate_regression, theoretical_exponent, theory_diagnostics
from .operators import StiffnessCache, StiffnessMatrix, build_stiffness_matrix, ellipticity_diagnostic, wavelet_galerkin_matrix
from .simulate import CountData, fold_intensity, simulate_counts
from .svg import Series, line_plot
from .wavelets import get_filter

logger = logging.getLogger(__name__)

__all__ = [
    "replicate_seed",
    "load_operator",
    "RunManifest",
    "run_simulate",
    "run_estimate",
    "run_experiment",
    "run_diagnose",
    "CellResult",
]


def artifact_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def replicate_seed(master: int, t_index: int, replicate: int) -> int:
    """64-bit seed of one ``(t, replicate)`` cell."""
    ss = np.random.SeedSequence(master, spawn_key=(t_index, replicate))
    return int(ss.generate_state(1, np.uint64)[0])


def load_operator(cfg: ExperimentConfig) -> StiffnessMatrix:
    """Stiffness matrix from the on-disk cache, built and stored on a miss."""
    cache = StiffnessCache(cache_directory(cfg))
    try:
        return cache.get(cfg.kernel, cfg.J, cfg.quad_resolution, cfg.quad_rule)
    except OSError as exc:
        logger.warning("stiffness cache unavailable (%s); building in memory", exc)
        return build_stiffness_matrix(cfg.kernel, cfg.J, cfg.quad_resolution, cfg.quad_rule)


@dataclass
class RunManifest:
    command: str
    config: dict
    stiffness_key: str
    seeds: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def to_dict(self, timestamp: bool = True) -> dict:
        d = {
            "command": self.command,
            "artifact_version": artifact_version(),
            "config": self.config,
            "stiffness_key": self.stiffness_key,
            "seeds": self.seeds,
            "outputs": sorted(self.outputs),
            "failures": self.failures,
        }
        if timestamp:
            d["created"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
            d["timings_s"] = {k: round(v, 6) for k, v in self.timings.items()}
            d["python"] = platform.python_version()
            d["numpy"] = np.__version__
        return d

    def write(self, out_dir: Path, timestamp: bool = True) -> Path:
        return _write_json(out_dir / "manifest.json", self.to_dict(timestamp))


def _finite(obj):
    """Replace non-finite floats by None so the output stays strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def _stamp(timestamp: bool) -> str | None:
    return datetime.now(timezone.utc).isoformat(timespec="seconds") if timestamp else None


def _provenance(cfg: ExperimentConfig, K: StiffnessMatrix) -> dict:
    return {"kernel_key": K.key, "intensity": cfg.intensity.to_dict(), "filter": cfg.filter}


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def run_simulate(cfg: ExperimentConfig, out_dir, timestamp: bool = True) -> RunManifest:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    K = load_operator(cfg)
    h = fold_intensity(cfg.intensity, K)
    manifest = RunManifest("simulate", cfg.to_dict(), K.key)
    for ti, t in enumerate(cfg.t):
        for r in range(cfg.replicates):
            seed = replicate_seed(cfg.seed, ti, r)
            data = simulate_counts(h, t, seed, _provenance(cfg, K))
            csv_path, side = data.write(out_dir / f"counts_t{ti}_r{r}.csv")
            manifest.seeds.append({"t": t, "replicate": r, "seed": seed})
            manifest.outputs += [csv_path.name, side.name]
    manifest.timings["total"] = time.perf_counter() - t0
    manifest.outputs.append("manifest.json")
    manifest.write(out_dir, timestamp)
    return manifest


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def run_estimate(cfg: ExperimentConfig, counts_path, out_dir, timestamp: bool = True):
    """Estimate from one count file; writes ``model.json``, ``f_hat.csv``, ``diagnostics.json``.

    Raises the estimator's errors after writing the diagnostics collected so far.
    """
    out_dir = Path(out_dir)
    counts_path = Path(counts_path)
    try:
        data = CountData.read(counts_path, t=None if counts_path.with_suffix(".json").exists() else cfg.t[0])
    except ValueError as exc:
        raise OSError(f"cannot read counts: {exc}") from exc
    if data.J != cfg.J:
        raise ConfigError("J", f"counts have J={data.J} but the config says J={cfg.J}")
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    K = load_operator(cfg)
    filt = get_filter(cfg.filter)
    manifest = RunManifest("estimate", cfg.to_dict(), K.key)
    manifest.seeds.append({"t": data.t, "seed": data.seed, "counts": str(counts_path)})
    try:
        model, diag = estimate(data, K, filt, cfg.estimator)
    except InfeasibleTarget as exc:
        diag = dict(getattr(exc, "diagnostics", {}) or {})
        diag.update(status="infeasible-target", message=str(exc), residual=exc.residual)
        if exc.target is not None:
            diag["alpha"] = [float(v) for v in exc.target]
        _write_json(out_dir / "diagnostics.json", diag)
        raise
    except SolverError as exc:
        _write_json(out_dir / "diagnostics.json", {"status": "solver-failure", "message": str(exc)})
        raise
    diag["status"] = "ok"
    _write_json(out_dir / "model.json", model.to_dict())
    model.write_grid_csv(out_dir / "f_hat.csv")
    _write_json(out_dir / "diagnostics.json", diag)
    manifest.outputs += ["model.json", "f_hat.csv", "diagnostics.json", "manifest.json"]
    manifest.timings["total"] = time.perf_counter() - t0
    manifest.write(out_dir, timestamp)
    return model, diag


# ---------------------------------------------------------------------------
# experiment sweep
# ---------------------------------------------------------------------------


@dataclass
class CellResult:
    t_index: int
    t: float
    replicate: int
    seed: int
    status: str
    kl: float = float("nan")
    l2: float = float("nan")
    j: int = -1
    iterations: int = 0
    residual: float = float("nan")
    n_surviving: int = 0
    message: str = ""
    f_hat: np.ndarray | None = None


_WORKER = {}


def _worker_setup(cfg_dict: dict, first_row: np.ndarray, key: str, circulant: bool):
    cfg = ExperimentConfig.from_dict(cfg_dict)
    K = StiffnessMatrix(cfg.J, first_row, cfg.quad_resolution, circulant, key)
    _WORKER.update(cfg=cfg, K=K, h=fold_intensity(cfg.intensity, K), f=cfg.intensity.sample(cfg.J), galerkin={})


def _run_cell(t_index: int, replicate: int) -> CellResult:
    cfg, K, h, f = _WORKER["cfg"], _WORKER["K"], _WORKER["h"], _WORKER["f"]
    filt = get_filter(cfg.filter)
    t = cfg.t[t_index]
    seed = replicate_seed(cfg.seed, t_index, replicate)
    data = simulate_counts(h, t, seed)
    cell = CellResult(t_index, t, replicate, seed, "ok")
    try:
        model, diag = estimate(data, K, filt, cfg.estimator, galerkin=_galerkin_for(cfg, K, filt, t))
    except InfeasibleTarget as exc:
        cell.status, cell.message = "infeasible-target", str(exc)
        return cell
    except SolverError as exc:
        cell.status, cell.message = "solver-failure", str(exc)
        return cell
    values = model.values()
    cell.kl = kl_divergence(f.values, values)
    cell.l2 = l2_error(f.values, values)
    cell.j, cell.iterations, cell.residual = diag["j"], diag["iterations"], diag["residual"]
    cell.n_surviving = diag["n_surviving_coeffs"]
    cell.f_hat = values
    return cell


def _galerkin_for(cfg, K, filt, t):
    cap = min(cfg.estimator.j_max, cfg.J - 1)
    est = cfg.estimator
    j = linear_level(t, est.s, est.nu, cap) if est.mode == "linear" else cutoff_level(t, est.nu, cap)
    cache = _WORKER["galerkin"]
    if j not in cache:
        cache[j] = wavelet_galerkin_matrix(K, filt, j)
    return cache[j]


def sweep(cfg: ExperimentConfig, K: StiffnessMatrix, workers: int = 1) -> list:
    """Run every ``(t, replicate)`` cell; results come back in cell order."""
    cells = [(ti, r) for ti in range(len(cfg.t)) for r in range(cfg.replicates)]
    init = (cfg.to_dict(), np.asarray(K.first_row), K.key, K.circulant)
    if workers <= 1:
        _worker_setup(*init)
        return [_run_cell(ti, r) for ti, r in cells]
    with ProcessPoolExecutor(max_workers=workers, initializer=_worker_setup, initargs=init) as pool:
        futures = [pool.submit(_run_cell, ti, r) for ti, r in cells]
        return [fut.result() for fut in futures]


_RUN_COLUMNS = ("t", "replicate", "seed", "status", "j", "iterations", "residual", "n_surviving_coeffs", "kl", "l2")


def _write_runs_csv(path: Path, results) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_RUN_COLUMNS)
        for c in results:
            w.writerow((repr(c.t), c.replicate, c.seed, c.status, c.j, c.iterations, repr(c.residual), c.n_surviving, repr(c.kl), repr(c.l2)))
    return path


def run_experiment(cfg: ExperimentConfig, out_dir, timestamp: bool = True, workers: int = 1) -> dict:
    """Monte Carlo sweep: losses per cell, rate fit, overlay and rate figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    K = load_operator(cfg)
    f = cfg.intensity.sample(cfg.J)
    results = sweep(cfg, K, workers)
    manifest = RunManifest("experiment", cfg.to_dict(), K.key)
    table = RateTable()
    for c in results:
        manifest.seeds.append({"t": c.t, "replicate": c.replicate, "seed": c.seed})
        if c.status == "ok":
            table.add(c.t, c.replicate, "kl", c.kl)
            table.add(c.t, c.replicate, "l2", c.l2)
        else:
            manifest.failures.append({"t": c.t, "replicate": c.replicate, "status": c.status, "message": c.message})
    outputs = [table.write_csv(out_dir / "rate_table.csv"), _write_runs_csv(out_dir / "runs.csv", results)]

    stamp = _stamp(timestamp)
    x = np.arange(1 << cfg.J) / (1 << cfg.J)
    for ti, t in enumerate(cfg.t):
        ok = [c for c in results if c.t_index == ti and c.status == "ok"]
        series = [Series(x, f.values, "true intensity")]
        if ok:
            series.append(Series(x, ok[0].f_hat, f"estimate (replicate {ok[0].replicate})", dashed=True))
        outputs.append(line_plot(out_dir / f"overlay_t{ti}.svg", series, f"{cfg.intensity.kind}, t = {t:g}", "x", "intensity", timestamp=stamp))

    s_ref = cfg.estimator.s if cfg.estimator.s is not None else 1.0
    report = {
        "name": cfg.name,
        "n_cells": len(results),
        "n_failures": len(manifest.failures),
        "failures": manifest.failures,
        "theoretical_exponent": theoretical_exponent(s_ref, cfg.estimator.nu),
        "reference_smoothness": s_ref,
        "fit": None,
        "mean_kl_strictly_decreasing": None,
    }
    means = table.values("kl")
    if len(means) >= 2:
        fit = rate_regression(table, "kl")
        report["fit"] = fit.to_dict()
        report["mean_kl_strictly_decreasing"] = bool(all(b < a for a, b in zip(fit.mean_loss, fit.mean_loss[1:])))
        tt = np.array(fit.t)
        ref = np.exp(fit.intercept + fit.slope * np.log(tt[0])) * (tt / tt[0]) ** report["theoretical_exponent"]
        outputs.append(
            line_plot(
                out_dir / "rate.svg",
                [
                    Series(tt, np.array(fit.mean_loss), "mean KL", markers=True),
                    Series(tt, np.exp(fit.intercept) * tt**fit.slope, f"fit, slope {fit.slope:.3f}", dashed=True),
                    Series(tt, ref, f"reference slope {report['theoretical_exponent']:.2f}", dashed=True),
                ],
                "mean relative entropy vs observation time",
                "t",
                "mean KL",
                logx=True,
                logy=True,
                timestamp=stamp,
            )
        )
    outputs.append(_write_json(out_dir / "report.json", report))
    manifest.outputs += [p.name for p in outputs] + ["manifest.json"]
    manifest.timings["total"] = time.perf_counter() - t0
    manifest.write(out_dir, timestamp)
    return report


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------


def run_diagnose(cfg: ExperimentConfig, out_dir, timestamp: bool = True, lemma_levels=(1, 2, 3, 4), perturbations: int = 3) -> dict:
    """Theory constants per level, Galerkin ellipticity ranges and the lemma suite."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    K = load_operator(cfg)
    filt = get_filter(cfg.filter)
    f = cfg.intensity.sample(cfg.J)
    nu = cfg.estimator.nu
    s = cfg.estimator.s if cfg.estimator.s is not None else 1.0
    top = min(cfg.estimator.j_max, cfg.J - 1)
    theory = [theory_diagnostics(f, j, filt, nu, s, t).to_dict() for t in cfg.t for j in range(top + 1)]

    elliptic = []
    for j in range(1, min(top, 7) + 1):
        Kj = wavelet_galerkin_matrix(K, filt, j)
        cmin, cmax = ellipticity_diagnostic(Kj, filt, nu, seed=cfg.seed)
        elliptic.append({"j": j, "c_min": cmin, "c_max": cmax, "min_eigenvalue": Kj.min_eigenvalue(), "positive_definite": Kj.positive_definite})

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0xD1A6,)))
    models, notes = [], []
    for j in lemma_levels:
        if j > cfg.J - 1:
            continue
        try:
            base = information_projection(moments(f.values, filt, j), filt, cfg.J)
        except (InfeasibleTarget, SolverError) as exc:
            notes.append(f"level {j}: projection of the truth failed ({exc})")
            continue
        models.append(base)
        for _ in range(perturbations):
            theta = base.theta + 0.1 * rng.standard_normal(base.theta.size)
            models.append(ExpFamilyModel(j, theta, filt, cfg.J))
    report = lemma_suite(f, models, filt).to_dict()
    report["skipped"] += notes

    out = {
        "name": cfg.name,
        "theory": theory,
        "ellipticity": elliptic,
        "lemmas": report,
    }
    _write_json(out_dir / "diagnostics.json", out)
    manifest = RunManifest("diagnose", cfg.to_dict(), K.key, outputs=["diagnostics.json", "manifest.json"])
    manifest.timings["total"] = time.perf_counter() - t0
    manifest.write(out_dir, timestamp)
    return out
