#!/usr/bin/env python3
"""Run every shipped experiment at its default sweep and trial count.

Produces one CSV per experiment in the output directory.  This is the
batch counterpart of the ``isac run`` CLI; figures are downstream of the
CSVs and not produced here.
"""

import argparse
import pathlib
import time

from isacsim import harness


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="sec6a")
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--jobs", type=int, default=2)
    ap.add_argument("--experiments", nargs="*", default=list(harness.EXPERIMENTS))
    args = ap.parse_args()

    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cfg, layout, base = harness.load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    for name in args.experiments:
        spec = harness.ExperimentSpec(
            name=name, sweep=harness.default_sweep(name, cfg),
            trials=harness.default_trials(name), seed=seed)
        start = time.time()
        rows = harness.run_experiment(spec, cfg, layout, base=base, jobs=args.jobs)
        out = outdir / f"{name}.csv"
        harness.rows_to_csv(rows, out)
        n_err = sum(1 for r in rows if r.get("error"))
        print(f"{name}: {len(rows)} rows ({n_err} errors) in "
              f"{time.time() - start:.1f}s -> {out}")


if __name__ == "__main__":
    main()
