"""Print the SBL search trajectory and final estimates for one seeded trial.

    python3 scripts/inspect_trial.py --snr 40 --trial 3 --every 50
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass

from pulsedelay.harness import ExperimentConfig, run_single


@dataclass
class TrialView:
    snr: float = 40.0
    trial: int = 0
    seed: int = ExperimentConfig.master_seed
    every: int = 25


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--snr", type=float, default=TrialView.snr)
    p.add_argument("--trial", type=int, default=TrialView.trial)
    p.add_argument("--seed", type=int, default=TrialView.seed)
    p.add_argument("--every", type=int, default=TrialView.every, help="trace decimation")
    v = TrialView(**vars(p.parse_args(argv)))

    cfg = ExperimentConfig(master_seed=v.seed)
    dump = run_single(cfg, v.snr, v.trial)
    print(f"{'stage':>7} {'iter':>5} {'|T|':>5} {'beta':>10} {'gamma_min':>10} {'|r|':>9}")
    trace = dump["trace"]
    for i, rec in enumerate(trace):
        last_of_stage = i + 1 == len(trace) or trace[i + 1]["stage"] != rec["stage"]
        if rec["iteration"] % v.every == 0 or rec["iteration"] == 1 or last_of_stage:
            print(f"{rec['stage']:>7} {rec['iteration']:5d} {rec['num_active']:5d} "
                  f"{rec['noise_precision']:10.4g} {rec['gamma_min']:10.3g} {rec['residual_norm']:9.4g}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
