#!/usr/bin/env python3
"""CRB/rate tradeoff across cooperation group sizes (mono/bi/multi).

Writes one CSV row per (group size, trial).  Equivalent CLI:

    isac run --config sec6a --experiment tradeoff --trials 200 --out tradeoff.csv
"""

import argparse

from isacsim import harness


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="sec6a")
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--jobs", type=int, default=2)
    ap.add_argument("--out", default="tradeoff.csv")
    args = ap.parse_args()

    cfg, layout, base = harness.load_config(args.config)
    spec = harness.ExperimentSpec(
        name="tradeoff", sweep=harness.default_sweep("tradeoff", cfg),
        trials=args.trials, seed=args.seed if args.seed is not None else cfg.seed)
    rows = harness.run_experiment(spec, cfg, layout, base=base, jobs=args.jobs)
    harness.rows_to_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
