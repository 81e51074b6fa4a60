"""Heavy-ball stability sweep on the two-direction instance for several kappa.

Prints, per kappa, the smallest over the (delta, alpha) grid of the larger per-direction spectral
radius next to 1 - 500/kappa, and how many grid points fall below it.
"""
import argparse
import sys

from sfolab import acceptance


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--exps", default="4,6,8,10", help="comma-separated log2 kappa values")
    p.add_argument("--n", type=int, default=100, help="grid points per axis")
    args = p.parse_args(argv)

    bad = 0
    print(f"{'kappa':>8} {'min lambda_max':>16} {'1-500/kappa':>14} {'kappa(1-lambda)':>16} {'violations':>10}")
    for e in (int(x) for x in args.exps.split(",")):
        kappa = 2.0**e
        worst, viol, bound = acceptance.hb_sweep(kappa, args.n, args.n)
        bad += viol
        print(f"{kappa:8g} {worst:16.10f} {bound:14.6f} {kappa * (1 - worst):16.4f} {viol:10d}")
    return 0 if bad == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
