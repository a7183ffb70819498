"""Run the default SNR sweep and compare SBL path-count statistics with reference values.

    python3 scripts/reproduce_table1.py --trials 500 --out results/table1
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, field

from pulsedelay.harness import ExperimentConfig, emit_outputs, run_sweep

REFERENCE = {  # snr_db: (P(correct count), count MAE)
    20.0: (0.7475, 0.2535),
    25.0: (0.8630, 0.1370),
    30.0: (0.8990, 0.1010),
    35.0: (0.9000, 0.1020),
    40.0: (0.9145, 0.0875),
}


@dataclass
class Table1Run:
    trials: int = 500
    seed: int = ExperimentConfig.master_seed
    noise_variance: float = 1.0
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    out: str | None = None


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f in dataclasses.fields(Table1Run):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kind = float if f.name == "noise_variance" else (str if f.name == "out" else int)
        p.add_argument(f"--{f.name.replace('_', '-')}", type=kind, default=default)
    run = Table1Run(**vars(p.parse_args(argv)))

    cfg = ExperimentConfig(num_trials=run.trials, master_seed=run.seed,
                           noise_variance=run.noise_variance, workers=run.workers)
    result = run_sweep(cfg, progress=sys.stderr)
    print(f"{'SNR':>5} {'P(L)':>8} {'ref':>7} {'MAE(L)':>8} {'ref':>7}   NRMSE sbl/omp/sage    "
          f"gap MAE sbl/omp/sage (ns)")
    for snr in cfg.snr_points_db:
        r = {a: result.report.row(snr, a) for a in cfg.algorithms}
        p_ref, m_ref = REFERENCE.get(snr, (float("nan"),) * 2)
        print(f"{snr:5g} {r['sbl'].prob_correct_count:8.4f} {p_ref:7.4f} {r['sbl'].count_mae:8.4f} "
              f"{m_ref:7.4f}   "
              + "/".join(f"{r[a].csi_nrmse_mean:.4f}" for a in cfg.algorithms) + "    "
              + "/".join(f"{r[a].delay_diff_mae_ns:.2f}" for a in cfg.algorithms))
    print(f"wall clock {result.wall_clock_s:.0f} s")
    if run.out:
        emit_outputs(result.report, cfg, run.out, force=True, wall_clock_s=round(result.wall_clock_s, 3),
                     records=result.records)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
