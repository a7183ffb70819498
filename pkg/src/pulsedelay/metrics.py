"""Per-trial records and the three evaluation metrics, pooled per (SNR, algorithm)."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .channel import GroundTruthChannel
from .sbl import EstimationResult


@dataclass(eq=False)
class TrialRecord:
    trial_index: int
    snr_db: float
    ground_truth: GroundTruthChannel
    clean_csi: np.ndarray
    results: dict[str, EstimationResult] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "trial_index": self.trial_index,
            "snr_db": self.snr_db,
            "ground_truth": self.ground_truth.to_dict(),
            "results": {k: v.to_dict() for k, v in self.results.items()},
        }


@dataclass(frozen=True)
class ReportRow:
    snr_db: float
    algorithm: str
    num_trials: int
    prob_correct_count: float
    count_mae: float
    csi_nrmse_mean: float
    delay_diff_mae_ns: float
    delay_diff_excluded_trials: int


@dataclass(frozen=True)
class AggregateReport:
    rows: tuple[ReportRow, ...]

    def row(self, snr_db: float, algorithm: str) -> ReportRow:
        for r in self.rows:
            if r.snr_db == snr_db and r.algorithm == algorithm:
                return r
        raise KeyError((snr_db, algorithm))

    @property
    def snr_points(self) -> list[float]:
        return sorted({r.snr_db for r in self.rows})

    @property
    def algorithms(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.rows:
            seen.setdefault(r.algorithm)
        return list(seen)


def _require(records: Sequence[TrialRecord]):
    if len(records) == 0:
        raise ValueError("no trial records")


def path_count_metrics(records: Sequence[TrialRecord], algorithm: str = "sbl") -> tuple[float, float]:
    """Probability that the estimated path count is right, and the count MAE."""
    _require(records)
    est = np.array([r.results[algorithm].num_paths for r in records])
    true = np.array([r.ground_truth.num_paths for r in records])
    return float(np.mean(est == true)), float(np.mean(np.abs(est - true)))


def nrmse(y_hat: np.ndarray, y_clean: np.ndarray) -> float:
    ref = float(np.linalg.norm(y_clean))
    if ref == 0:
        raise ValueError("noiseless CSI has zero norm")
    return float(np.linalg.norm(np.asarray(y_hat) - y_clean)) / ref


def csi_nrmse(records: Sequence[TrialRecord], algorithm: str) -> float:
    """Mean over trials of ``||y_hat - y_clean|| / ||y_clean||`` on the used subcarriers."""
    _require(records)
    return float(np.mean([nrmse(r.results[algorithm].reconstructed_csi, r.clean_csi)
                          for r in records]))


def delay_difference_error(result: EstimationResult, ground_truth: GroundTruthChannel) -> float | None:
    """``|est. gap - (tau_1 - tau_0)|`` using the two strongest estimated paths.

    Returns ``None`` when fewer than two paths were estimated.
    """
    if ground_truth.num_paths < 2:
        raise ValueError("delay difference needs at least two true paths")
    if result.num_paths < 2:
        return None
    strongest = np.argsort(-np.abs(result.amplitudes), kind="stable")[:2]
    lo, hi = np.sort(result.delays_ns[strongest])
    return abs((hi - lo) - (ground_truth.delays_ns[1] - ground_truth.delays_ns[0]))


def delay_diff_mae(records: Sequence[TrialRecord], algorithm: str) -> tuple[float, int]:
    """MAE (ns) of the first-to-second path delay gap, and the number of excluded trials.

    The MAE is NaN when every trial is excluded.
    """
    _require(records)
    errors = []
    excluded = 0
    for r in records:
        e = delay_difference_error(r.results[algorithm], r.ground_truth)
        if e is None:
            excluded += 1
        else:
            errors.append(e)
    mae = float(np.mean(errors)) if errors else math.nan
    return mae, excluded


def aggregate(records: Iterable[TrialRecord]) -> AggregateReport:
    """One row per (SNR, algorithm), SNRs ascending, algorithms in first-seen order."""
    groups: dict[float, list[TrialRecord]] = defaultdict(list)
    for r in records:
        groups[r.snr_db].append(r)
    if not groups:
        raise ValueError("no trial records")
    rows = []
    for snr in sorted(groups):
        recs = sorted(groups[snr], key=lambda r: r.trial_index)
        indices = [r.trial_index for r in recs]
        if len(set(indices)) != len(indices):
            raise ValueError(f"duplicate trial indices at SNR {snr}")
        ref = recs[0]
        algos = list(ref.results)
        for r in recs[1:]:
            if (list(r.results) != algos
                    or not np.array_equal(r.ground_truth.delays_ns, ref.ground_truth.delays_ns)):
                raise ValueError(f"mixed configurations in the SNR {snr} group")
        for algo in algos:
            prob, mae = path_count_metrics(recs, algo)
            dd, excluded = delay_diff_mae(recs, algo)
            rows.append(ReportRow(snr, algo, len(recs), prob, mae, csi_nrmse(recs, algo), dd, excluded))
    return AggregateReport(tuple(rows))
