"""Seeded Monte-Carlo sweeps over SNR for the SBL, OMP and SAGE estimators."""
from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, TextIO

import numpy as np

from . import __version__
from .baselines import OmpConfig, SageConfig, omp_estimate, sage_estimate
from .channel import ChannelProfile, measure, sample_channel
from .metrics import AggregateReport, TrialRecord, aggregate
from .pulse import (DelayGrid, PulseConfig, SensingModel, SubcarrierMask, build_sensing_model,
                    eval_pulse)
from .sbl import NumericalFailure, SblHyperparams
from .sbl import run as sbl_run

ALGORITHMS = ("sbl", "omp", "sage")
OUTPUT_FILES = ("table1.csv", "fig2_nrmse.csv", "fig3_delaydiff.csv", "manifest.json")


class ConfigError(ValueError):
    pass


class SweepFailure(RuntimeError):
    """An estimator failed numerically; carries the records finished so far."""

    def __init__(self, snr_db: float, trial_index: int, algorithm: str, message: str,
                 records: list[TrialRecord] | None = None):
        super().__init__(f"{algorithm} failed at SNR {snr_db} dB, trial {trial_index}: {message}")
        self.snr_db = snr_db
        self.trial_index = trial_index
        self.algorithm = algorithm
        self.records = records or []


@dataclass(frozen=True)
class ProfileConfig:
    delays_ns: tuple[float, ...] = (24.0, 65.0, 103.0)
    per_path_decay_db: float = 5.0


@dataclass(frozen=True)
class SageSettings:
    convergence_tol: float = 1e-4
    max_iterations: int = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    pulse: PulseConfig = field(default_factory=PulseConfig)
    grid: DelayGrid = field(default_factory=DelayGrid)
    mask: SubcarrierMask = field(default_factory=SubcarrierMask)
    cir_length: int = 32
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    noise_variance: float = 1.0
    snr_points_db: tuple[float, ...] = (20.0, 25.0, 30.0, 35.0, 40.0)
    num_trials: int = 2000
    master_seed: int = 20240501
    algorithms: tuple[str, ...] = ALGORITHMS
    sbl: SblHyperparams = field(default_factory=SblHyperparams)
    sage: SageSettings = field(default_factory=SageSettings)
    out_dir: str = "results"
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.cir_length < 1 or self.cir_length > self.mask.fft_size:
            raise ConfigError(f"cir_length must lie in [1, {self.mask.fft_size}], got {self.cir_length}")
        delays = self.profile.delays_ns
        if not delays:
            raise ConfigError("profile needs at least one path")
        if any(b <= a for a, b in zip(delays, delays[1:])) or delays[0] < 0:
            raise ConfigError("profile delays must be non-negative and strictly increasing")
        if delays[-1] > self.grid.max_delay_ns:
            raise ConfigError(f"profile delay {delays[-1]} ns exceeds the grid span "
                              f"(M-1)*T_g = {self.grid.max_delay_ns} ns")
        if not self.noise_variance > 0:
            raise ConfigError("noise_variance must be positive")
        if not self.snr_points_db:
            raise ConfigError("snr_points_db is empty")
        if len(set(self.snr_points_db)) != len(self.snr_points_db):
            raise ConfigError("snr_points_db contains duplicates")
        if self.num_trials < 1:
            raise ConfigError("num_trials must be at least 1")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown or not self.algorithms:
            raise ConfigError(f"algorithms must be a non-empty subset of {ALGORITHMS}, got {self.algorithms}")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if "config" in data and isinstance(data["config"], dict):
            # a manifest from an earlier run
            data = data["config"]
        try:
            return _build(cls, data).validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def model(self) -> SensingModel:
        return build_sensing_model(self.pulse, self.grid, self.mask, self.cir_length)


def _build(cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object for {cls.__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value)
        elif isinstance(default, tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def trial_rng(master_seed: int, snr_index: int, trial_index: int) -> np.random.Generator:
    """Independent stream for one (SNR, trial) cell.

    The master seed is the entropy of a ``SeedSequence`` whose spawn key is
    ``(snr_index, trial_index)``; numpy guarantees this derivation is stable.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=(snr_index, trial_index))
    return np.random.Generator(np.random.PCG64(ss))


def run_trial(cfg: ExperimentConfig, model: SensingModel, snr_index: int, trial_index: int,
              trace: Callable[[dict], None] | None = None) -> TrialRecord:
    snr = cfg.snr_points_db[snr_index]
    rng = trial_rng(cfg.master_seed, snr_index, trial_index)
    profile = ChannelProfile(cfg.profile.delays_ns, snr, cfg.profile.per_path_decay_db)
    gt = sample_channel(profile, cfg.noise_variance, rng)
    meas = measure(gt, cfg.pulse, cfg.mask, cfg.cir_length, cfg.noise_variance, rng)
    record = TrialRecord(trial_index, snr, gt, meas.y_clean)
    for algo in cfg.algorithms:
        try:
            if algo == "sbl":
                res = sbl_run(meas.y, model, cfg.sbl, trace=trace)
            elif algo == "omp":
                res = omp_estimate(meas.y, model, OmpConfig(gt.num_paths))
            else:
                sage_cfg = SageConfig(gt.num_paths, cfg.grid, cfg.sage.convergence_tol,
                                      cfg.sage.max_iterations)
                res = sage_estimate(meas.y, cfg.mask, sage_cfg, cfg.pulse.sampling_period_ns)
        except (NumericalFailure, np.linalg.LinAlgError) as exc:
            raise SweepFailure(snr, trial_index, algo, str(exc)) from exc
        record.results[algo] = res
    return record


_WORKER: dict = {}


def _worker_init(cfg: ExperimentConfig):
    _WORKER["cfg"] = cfg
    _WORKER["model"] = cfg.model()


def _worker_run(task: tuple[int, int]) -> TrialRecord:
    return run_trial(_WORKER["cfg"], _WORKER["model"], *task)


@dataclass
class SweepResult:
    report: AggregateReport
    records: list[TrialRecord]
    wall_clock_s: float


def run_sweep(cfg: ExperimentConfig, workers: int | None = None,
              progress: TextIO | None = None) -> SweepResult:
    """Every (SNR, trial) cell, all enabled estimators on the same measurement.

    Records are ordered by (SNR index, trial index) before aggregation, so the
    report does not depend on the number of workers.
    """
    cfg.validate()
    workers = workers or cfg.workers
    tasks = [(s, t) for s in range(len(cfg.snr_points_db)) for t in range(cfg.num_trials)]
    start = time.perf_counter()
    records: list[TrialRecord] = []
    try:
        if workers == 1:
            model = cfg.model()
            for i, task in enumerate(tasks):
                records.append(run_trial(cfg, model, *task))
                _report_progress(progress, i + 1, len(tasks), start)
        else:
            with ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(cfg,)) as pool:
                chunk = max(1, len(tasks) // (8 * workers))
                for i, rec in enumerate(pool.map(_worker_run, tasks, chunksize=chunk)):
                    records.append(rec)
                    _report_progress(progress, i + 1, len(tasks), start)
    except SweepFailure as exc:
        exc.records = records
        raise
    records.sort(key=lambda r: (cfg.snr_points_db.index(r.snr_db), r.trial_index))
    return SweepResult(aggregate(records), records, time.perf_counter() - start)


def _report_progress(stream: TextIO | None, done: int, total: int, start: float):
    if stream is None:
        return
    if done == total or done % max(1, total // 20) == 0:
        elapsed = time.perf_counter() - start
        print(f"  {done}/{total} trials, {elapsed:.0f} s", file=stream, flush=True)


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.10g}"


def _write_csv(path: Path, header: list[str], rows: list[list]):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_outputs(report: AggregateReport, cfg: ExperimentConfig, out_dir, force: bool = False,
                 wall_clock_s: float | None = None, failure: SweepFailure | None = None,
                 records: list[TrialRecord] | None = None) -> list[Path]:
    """Write the path-count, NRMSE and delay-gap CSVs plus ``manifest.json`` into ``out_dir``.

    With ``failure`` set only the manifest is written, flagged as partial.
    Refuses to overwrite existing outputs unless ``force``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    existing = [out / f for f in OUTPUT_FILES + ("trials.jsonl",) if (out / f).exists()]
    if existing and not force:
        raise FileExistsError(f"refusing to overwrite {', '.join(map(str, existing))} (use --force)")
    written = []
    if report is not None:
        rows = report.rows
        _write_csv(out / "table1.csv", ["snr_db", "algorithm", "prob_correct", "count_mae"],
                   [[_fmt(r.snr_db), r.algorithm, _fmt(r.prob_correct_count), _fmt(r.count_mae)]
                    for r in rows])
        _write_csv(out / "fig2_nrmse.csv", ["snr_db", "algorithm", "nrmse_mean"],
                   [[_fmt(r.snr_db), r.algorithm, _fmt(r.csi_nrmse_mean)] for r in rows])
        _write_csv(out / "fig3_delaydiff.csv", ["snr_db", "algorithm", "mae_ns", "excluded_trials"],
                   [[_fmt(r.snr_db), r.algorithm, _fmt(r.delay_diff_mae_ns),
                     r.delay_diff_excluded_trials] for r in rows])
        written += [out / f for f in OUTPUT_FILES[:3]]
    if records:
        with (out / "trials.jsonl").open("w") as fh:
            for rec in records:
                fh.write(json.dumps(rec.to_dict()) + "\n")
        written.append(out / "trials.jsonl")
    manifest = {
        "package": "pulsedelay",
        "version": __version__,
        "status": "partial" if failure else "complete",
        "master_seed": cfg.master_seed,
        "config": cfg.to_dict(),
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "wall_clock_s": wall_clock_s,
        "outputs": [p.name for p in written],
    }
    if failure is not None:
        manifest["failure"] = {"snr_db": failure.snr_db, "trial_index": failure.trial_index,
                               "algorithm": failure.algorithm, "message": str(failure),
                               "completed_trials": len(failure.records)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    written.append(out / "manifest.json")
    return written


def run_single(cfg: ExperimentConfig, snr_db: float, trial_index: int = 0,
               verbose: bool = False, echo: Callable[[str], None] = print) -> dict:
    """One trial with a printed diagnostic dump; returns the dump as a dict."""
    if snr_db in cfg.snr_points_db:
        snr_index = cfg.snr_points_db.index(snr_db)
    else:
        cfg = dataclasses.replace(cfg, snr_points_db=(snr_db,))
        snr_index = 0
    cfg.validate()
    trace_log: list[dict] = []

    def trace(rec: dict):
        trace_log.append(rec)
        if verbose:
            echo("  [{stage}] it={iteration:4d} active={num_active:4d} beta={noise_precision:.4g} "
                 "gamma[min,max]=[{gamma_min:.3g}, {gamma_max:.3g}] |r|={residual_norm:.4g}"
                 .format(**rec))

    record = run_trial(cfg, cfg.model(), snr_index, trial_index, trace=trace)
    gt = record.ground_truth
    gt_line = ", ".join(f"{d:g} ns |a|={abs(a):.4g}" for d, a in zip(gt.delays_ns, gt.amplitudes))
    echo(f"seed={cfg.master_seed} snr={snr_db:g} dB trial={trial_index}")
    echo(f"ground truth: {gt_line}")
    for algo, res in record.results.items():
        est = ", ".join(f"{d:g} ns |a|={abs(a):.4g}" for d, a in zip(res.delays_ns, res.amplitudes))
        echo(f"{algo}: L={res.num_paths} [{est}] iterations={res.iterations_used} "
             f"converged={res.converged}")
    return {"record": record.to_dict(), "trace": trace_log}


def pulse_dump(cfg: ExperimentConfig, out_dir, delay_ns: float = 20.0, step_ns: float = 1.0,
               force: bool = False) -> list[Path]:
    """Write ``pulse.csv`` (fine samples of g) and ``dictionary_column.csv`` (taps of one delay)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "pulse.csv", out / "dictionary_column.csv"]
    if not force and any(p.exists() for p in paths):
        raise FileExistsError(f"refusing to overwrite files in {out} (use --force)")
    span = cfg.pulse.support_ns
    t = np.arange(-span, span + step_ns / 2, step_ns)
    _write_csv(paths[0], ["t_ns", "g"], [[_fmt(a), _fmt(b)] for a, b in zip(t, eval_pulse(t, cfg.pulse))])
    n = np.arange(cfg.cir_length)
    taps = eval_pulse(n * cfg.pulse.sampling_period_ns - delay_ns, cfg.pulse)
    _write_csv(paths[1], ["n", "t_ns", "g"],
               [[k, _fmt(k * cfg.pulse.sampling_period_ns), _fmt(v)] for k, v in zip(n, taps)])
    return paths
