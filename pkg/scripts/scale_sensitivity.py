"""SBL path-count accuracy versus the absolute noise level at fixed SNR.

The Gamma hyperpriors have fixed rates ``b = d = 1e-6``, so the estimator is
not invariant to a common rescaling of signal and noise.  This script sweeps
the noise variance (with path powers following the SNR) and reports
P(L_hat = L) and the count MAE for each setting.

    python3 scripts/scale_sensitivity.py --trials 200 --snr 20 40 --variance 0.01 1 100 1e4
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass

from pulsedelay.harness import ExperimentConfig, run_sweep


@dataclass
class ScaleStudy:
    trials: int = 200
    snr: tuple[float, ...] = (20.0, 40.0)
    variance: tuple[float, ...] = (0.01, 1.0, 100.0, 1e4)
    seed: int = ExperimentConfig.master_seed
    workers: int = os.cpu_count() or 1


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--trials", type=int, default=ScaleStudy.trials)
    p.add_argument("--snr", type=float, nargs="+", default=list(ScaleStudy.snr))
    p.add_argument("--variance", type=float, nargs="+", default=list(ScaleStudy.variance))
    p.add_argument("--seed", type=int, default=ScaleStudy.seed)
    p.add_argument("--workers", type=int, default=ScaleStudy.workers)
    a = p.parse_args(argv)
    study = ScaleStudy(a.trials, tuple(a.snr), tuple(a.variance), a.seed, a.workers)

    base = ExperimentConfig(num_trials=study.trials, snr_points_db=study.snr, master_seed=study.seed,
                            algorithms=("sbl",), workers=study.workers)
    print(f"{'sigma^2':>9} " + " ".join(f"{f'{s:g} dB P / MAE':>18}" for s in study.snr))
    for var in study.variance:
        cfg = dataclasses.replace(base, noise_variance=var)
        rep = run_sweep(cfg, progress=sys.stderr).report
        cells = [f"{rep.row(s, 'sbl').prob_correct_count:8.3f} / {rep.row(s, 'sbl').count_mae:6.3f}"
                 for s in study.snr]
        print(f"{var:9.3g} " + " ".join(f"{c:>18}" for c in cells), flush=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
