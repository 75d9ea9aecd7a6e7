"""
The four batch commands behind `python -m src.main`.

Each command takes a validated RunConfig and the output directory, writes
its files plus `manifest.json`, and returns the process exit code. Errors are
raised, not caught: src.main turns them into exit codes.
"""

import logging
from collections.abc import Callable
from pathlib import Path as FilePath

import numpy as np

from src.core.config import get_settings
from src.core.errors import ConvergenceError
from src.models.diagnostics import CheckReport
from src.models.estimation import LoglikReport
from src.models.functional import ModelSpec
from src.models.history import HistorySegment
from src.models.run import RunConfig, RunManifest
from src.models.simulation import SimConfig
from src.services.estimate import LikelihoodSurface, fit_mle
from src.services.functionals import diffusion, drift
from src.services.history import constant_history
from src.services.inference import ck_consistency_check, estimate_jump_moment
from src.services.simulate import simulate_ensemble
from src.services.storage import read_dataset_csv, write_json, write_path_csv

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _sigma2_history(config: RunConfig, model: ModelSpec, dt: float) -> HistorySegment | None:
    if not model.uses_sigma2:
        return None
    return constant_history(config.initial_sigma2, model.tau, dt)


def _write_manifest(config: RunConfig, out_dir: FilePath, outputs: list[str]) -> None:
    manifest = RunManifest(
        command=config.command,
        version=get_settings().VERSION,
        seed=config.seed,
        config=config.model_dump(mode="json", by_alias=True, exclude={"out_dir"}),
        outputs=outputs,
    )
    write_json(manifest, out_dir / MANIFEST_NAME)


def run_simulate(config: RunConfig, out_dir: FilePath) -> int:
    """Simulate n_paths paths and write path_<i>.csv for each."""
    model = config.model.build()
    opts = config.simulation
    cfg = SimConfig(dt=opts.dt, horizon=opts.horizon, n_paths=opts.n_paths, seed=config.seed)
    init = config.initial_history.build(model.tau, cfg.dt)
    paths = simulate_ensemble(model, init, cfg, _sigma2_history(config, model, cfg.dt))

    outputs = []
    for i, path in enumerate(paths):
        name = f"path_{i}.csv"
        write_path_csv(path, out_dir / name)
        outputs.append(name)
    _write_manifest(config, out_dir, outputs)
    logger.info(f"Wrote {len(outputs)} path files to {out_dir}")
    return 0


def run_fit(config: RunConfig, out_dir: FilePath) -> int:
    """Fit the model's parameters to the data file; exit 4 when not converged."""
    model = config.model.build()
    data = read_dataset_csv(FilePath(config.data))
    opts = config.fit.model_copy(update={"seed": config.seed})
    result = fit_mle(model, data, opts)

    write_json(result, out_dir / "fit_result.json")
    _write_manifest(config, out_dir, ["fit_result.json"])
    if not result.converged:
        logger.warning(f"Optimiser stopped after {result.n_evals} evaluations without converging")
        return ConvergenceError.exit_code
    return 0


def run_loglik(config: RunConfig, out_dir: FilePath) -> int:
    """Evaluate the log-likelihood of the data at the model's parameter values."""
    model = config.model.build()
    data = read_dataset_csv(FilePath(config.data))
    surface = LikelihoodSurface(data, model.tau, config.fit.dt, config.fit.initial_sigma2)
    pairs = surface.pair_terms(model)
    report = LoglikReport(
        loglik=float(np.sum(pairs)),
        params=model.param_values,
        n_steps=surface.n_steps,
        pair_logliks=pairs.tolist(),
    )
    write_json(report, out_dir / "loglik.json")
    _write_manifest(config, out_dir, ["loglik.json"])
    logger.info(f"Log-likelihood {report.loglik:.6f} over {report.n_steps} steps")
    return 0


def _within(value: float, expected: float, std_error: float, n_se: float) -> bool:
    tolerance = max(n_se * std_error, 1e-12 * max(1.0, abs(expected)))
    return abs(value - expected) <= tolerance


def run_check(config: RunConfig, out_dir: FilePath) -> int:
    """
    Jump moments D1, D2 at the initial history and a Chapman-Kolmogorov check.

    Exit 0 when every check is within tolerance, 4 otherwise.
    """
    model = config.model.build()
    opts = config.check
    H = config.initial_history.build(model.tau, opts.dt)
    sigma2 = _sigma2_history(config, model, opts.dt)
    step = opts.step

    d1 = estimate_jump_moment(model, H, 1, step, opts.n_samples, config.seed, sigma2)
    d2 = estimate_jump_moment(model, H, 2, step, opts.n_samples, config.seed, sigma2)
    nu = drift(model, H, sigma2)
    s = diffusion(model, H, sigma2)
    d1_expected = nu
    d2_expected = 0.5 * s * s + 0.5 * nu * nu * step
    ck = ck_consistency_check(model, H, opts.t, opts.T, opts.ck_samples, config.seed, sigma2)

    checks = {
        "D1": _within(d1.value, d1_expected, d1.std_error, opts.n_se),
        "D2": _within(d2.value, d2_expected, d2.std_error, opts.n_se),
        "ck": ck.passed,
    }
    report = CheckReport(
        D1=d1,
        D2=d2,
        D1_expected=d1_expected,
        D2_expected=d2_expected,
        ks_statistic=ck.ks_statistic,
        ck=ck,
        n_se=opts.n_se,
        checks=checks,
        passed=all(checks.values()),
    )
    write_json(report, out_dir / "diagnostics.json")
    _write_manifest(config, out_dir, ["diagnostics.json"])
    if not report.passed:
        failed = [name for name, ok in checks.items() if not ok]
        logger.warning(f"Diagnostics outside tolerance: {failed}")
        return ConvergenceError.exit_code
    return 0


COMMANDS: dict[str, Callable[[RunConfig, FilePath], int]] = {
    "simulate": run_simulate,
    "fit": run_fit,
    "loglik": run_loglik,
    "check": run_check,
}
