"""Simulated-rate slopes: grid search over 100 trials per point, t = 5 kappa, then gamma per method.

Takes a few minutes with all cores; --trials and --kappa-max-exp shrink it for a quick look.
"""
import argparse
import math
import sys
import time

from sfolab import acceptance
from sfolab.cli import RATE_COLUMNS, SLOPE_COLUMNS, Writer
from sfolab.harness import RateExperiment, rate_vs_kappa_experiment


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--kappa-max-exp", type=int, default=12)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--statistic", choices=("mean", "median"), default="mean")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0)
    p.add_argument("--out", default="results/empirical")
    args = p.parse_args(argv)

    kappas = tuple(2.0**k for k in range(4, args.kappa_max_exp + 1))
    t0 = time.perf_counter()
    res = rate_vs_kappa_experiment(RateExperiment(kind="empirical", kappas=kappas, n_trials=args.trials,
                                                  statistic=args.statistic, master_seed=args.seed,
                                                  threads=args.threads))
    out = Writer(args.out)
    for dist in ("discrete", "gaussian"):
        out.table(f"rates_{dist}", RATE_COLUMNS,
                  [(r.method, r.kappa, r.rate, r.one_over_rate) for r in res.rows if r.distribution == dist])
    out.table("slopes", SLOPE_COLUMNS, [(s.method, s.distribution, s.gamma, s.residual) for s in res.slopes])

    print(f"{'distribution':<10} {'method':<5} {'gamma':>7} {'target':>7} {'diff':>7}")
    ok = True
    for s in res.slopes:
        target = acceptance.EMPIRICAL_TARGETS[s.distribution][s.method]
        diff = s.gamma - target
        ok &= math.isfinite(s.gamma) and abs(diff) <= acceptance.EMPIRICAL_TOL
        print(f"{s.distribution:<10} {s.method:<5} {s.gamma:7.4f} {target:7.4f} {diff:+7.4f}")
    print(f"all within +-{acceptance.EMPIRICAL_TOL}: {ok}  ({time.perf_counter() - t0:.0f} s)")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
