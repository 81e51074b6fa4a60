"""Predicted-rate slopes: best (delta, alpha) per kappa from the covariance operator, then gamma per method.

    python scripts/spectral_slopes.py                      # kappa = 2^4 .. 2^14
    python scripts/spectral_slopes.py --kappa-max-exp 28   # wider range, still seconds
"""
import argparse
import math
import sys

from sfolab import acceptance
from sfolab.cli import RATE_COLUMNS, SLOPE_COLUMNS, Writer
from sfolab.harness import RateExperiment, rate_vs_kappa_experiment


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--kappa-max-exp", type=int, default=14)
    p.add_argument("--moments", choices=("exact", "empirical"), default="exact")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0)
    p.add_argument("--out", default="results/spectral")
    args = p.parse_args(argv)

    kappas = tuple(2.0**k for k in range(4, args.kappa_max_exp + 1))
    res = rate_vs_kappa_experiment(RateExperiment(kind="spectral", kappas=kappas, moment_method=args.moments,
                                                  master_seed=args.seed, threads=args.threads))
    out = Writer(args.out)
    for dist in ("discrete", "gaussian"):
        out.table(f"rates_{dist}", RATE_COLUMNS,
                  [(r.method, r.kappa, r.rate, r.one_over_rate) for r in res.rows if r.distribution == dist])
    out.table("slopes", SLOPE_COLUMNS, [(s.method, s.distribution, s.gamma, s.residual) for s in res.slopes])

    print(f"{'distribution':<10} {'method':<5} {'gamma':>7} {'target':>7} {'diff':>7}")
    ok = True
    for s in res.slopes:
        target = acceptance.SPECTRAL_TARGETS[s.distribution][s.method]
        diff = s.gamma - target
        ok &= math.isfinite(s.gamma) and abs(diff) <= acceptance.SPECTRAL_TOL
        print(f"{s.distribution:<10} {s.method:<5} {s.gamma:7.4f} {target:7.4f} {diff:+7.4f}")
    print(f"all within +-{acceptance.SPECTRAL_TOL}: {ok}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
