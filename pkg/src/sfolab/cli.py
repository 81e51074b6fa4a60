"""Command-line front end: ``sfolab {run,spectral,plot,verify}``.

Exit codes: 0 success, 1 acceptance failure (verify only), 2 usage or config error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, acceptance, config, spectral
from .harness import rate_vs_kappa_experiment, run_trial, stream_seed
from .numerics import ConvergenceError
from .problems import Kind, make_instance
from .svg import loglog_svg

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

RATE_COLUMNS = ("method", "kappa", "rate", "one_over_rate")
SLOPE_COLUMNS = ("method", "distribution", "gamma", "residual")
VERDICT_COLUMNS = ("alpha", "delta", "lambda_max_top", "lambda_max_bottom", "classification")
TRIAL_COLUMNS = ("iteration", "loss")


class UsageError(Exception):
    pass


def _num(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _table_text(columns, rows, fmt: str) -> str:
    if fmt == "json":
        recs = [{c: (r[i] if isinstance(r[i], str) else _json_num(r[i])) for i, c in enumerate(columns)}
                for r in rows]
        return json.dumps({"columns": list(columns), "rows": recs}, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_num(v) for v in r])
    return buf.getvalue()


def _json_num(v):
    v = float(v)
    return v if math.isfinite(v) else _num(v)


class Writer:
    """Single writer confined to one output directory."""

    def __init__(self, out_dir, fmt: str = "csv"):
        self.root = Path(out_dir)
        self.fmt = fmt
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UsageError(f"cannot create output directory: {exc}") from None
        if not os.access(self.root, os.W_OK):
            raise UsageError(f"output directory is not writable: {self.root}")
        self.written: list[str] = []

    def _write(self, name: str, text: str) -> None:
        path = self.root / name
        if path.resolve().parent != self.root.resolve():
            raise UsageError(f"refusing to write outside {self.root}")
        path.write_text(text)
        self.written.append(name)

    def table(self, stem: str, columns, rows) -> None:
        self._write(f"{stem}.{self.fmt}", _table_text(columns, rows, self.fmt))

    def text(self, name: str, text: str) -> None:
        self._write(name, text)


def _provenance(cfg: config.RunConfig, files: list[str]) -> str:
    block = {
        "version": __version__,
        "config_sha256": config.config_hash(cfg),
        "master_seed": cfg.master_seed,
        "config": config.to_dict(cfg),
        "files": sorted(files),
    }
    return json.dumps(block, indent=1, sort_keys=True) + "\n"


# ------------------------------------------------------------------- run

def _run_trial(cfg: config.RunConfig, out: Writer) -> None:
    inst_cfg = cfg.instance
    kind = Kind(inst_cfg.kind)
    if kind in (Kind.SECTION51_DISCRETE, Kind.SECTION51_GAUSSIAN):
        inst = make_instance(kind, kappa=inst_cfg.kappa)
    else:
        inst = make_instance(kind, sigma1=inst_cfg.sigma1, sigma2=inst_cfg.sigma2, c=inst_cfg.c)
    iterations = cfg.trials.iterations or max(2, int(round(cfg.trials.iterations_factor * inst.kappa)))
    record_every = cfg.trials.record_every or None
    method = cfg.methods[0]
    res = run_trial(inst, method, cfg.hyperparams(), iterations, stream_seed(cfg.master_seed, 0, 0),
                    record_every=record_every)
    out.table(f"trial_{method}", TRIAL_COLUMNS, res.loss_trace)
    summary = [("converged", str(res.converged).lower()), ("diverged", str(res.diverged).lower()),
               ("final_loss", res.final_loss), ("rate", res.rate), ("iterations", iterations)]
    out.table(f"trial_{method}_summary", ("key", "value"), summary)


def _run_rates(cfg: config.RunConfig, out: Writer) -> None:
    res = rate_vs_kappa_experiment(cfg.experiment())
    for dist in cfg.instance.distributions:
        rows = [(r.method, r.kappa, r.rate, r.one_over_rate) for r in res.rows if r.distribution == dist]
        out.table(f"rates_{dist}", RATE_COLUMNS, rows)
    out.table("slopes", SLOPE_COLUMNS, [(s.method, s.distribution, s.gamma, s.residual) for s in res.slopes])
    params = []
    for r in res.rows:
        for k in sorted(r.params):
            params.append((r.distribution, r.method, r.kappa, k, r.params[k]))
    out.table("chosen_params", ("distribution", "method", "kappa", "key", "value"), params)


def _verdict_rows(alphas, deltas, verdicts):
    return [(a, d, v.lambda_max_top, v.lambda_max_bottom, v.classification.value)
            for (d, a), v in zip(((d, a) for d in deltas for a in alphas), verdicts)]


def _run_sweep(cfg: config.RunConfig, out: Writer) -> None:
    ic = cfg.instance
    inst = make_instance(Kind.SECTION3_DISCRETE, sigma1=ic.sigma1, sigma2=ic.sigma2, c=ic.c)
    sw = cfg.sweep
    deltas, alphas = acceptance.sweep_grid(inst, sw.n_delta, sw.n_alpha, sw.delta_min)
    verdicts = spectral.hb_stability_sweep(inst, deltas, alphas)
    out.table("verdicts", VERDICT_COLUMNS, _verdict_rows(alphas, deltas, verdicts))


def cmd_run(args) -> int:
    cfg = config.load(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    out = Writer(cfg.output_dir, args.format)
    {"trial": _run_trial, "rates": _run_rates, "sweep": _run_sweep}[cfg.kind](cfg, out)
    out.text("provenance.json", _provenance(cfg, out.written))
    print(f"wrote {len(out.written)} files to {out.root}")
    return EXIT_OK


# -------------------------------------------------------------- spectral

def cmd_spectral(args) -> int:
    for name in ("sigma1", "sigma2", "c"):
        v = getattr(args, name)
        if not (math.isfinite(v) and v > 0):
            raise UsageError(f"--{name} must be positive")
    if args.sigma2 > args.sigma1:
        raise UsageError("--sigma2 must not exceed --sigma1")
    if args.c < 2:
        raise UsageError("--c must be >= 2")
    try:
        inst = make_instance(Kind.SECTION3_DISCRETE, sigma1=args.sigma1, sigma2=args.sigma2, c=args.c)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    bound = 1.0 - spectral.BOTTOM_CONSTANT / inst.kappa
    if args.sweep:
        deltas, alphas = acceptance.sweep_grid(inst, args.n_delta, args.n_alpha, args.delta_min)
        verdicts = spectral.hb_stability_sweep(inst, deltas, alphas)
        worst = min(max(v.lambda_max_top, v.lambda_max_bottom) for v in verdicts)
        viol = sum(max(v.lambda_max_top, v.lambda_max_bottom) < bound for v in verdicts)
        print(f"kappa = {inst.kappa:g}")
        print(f"grid = {args.n_delta} x {args.n_alpha}")
        print(f"min over grid of max-direction lambda_max = {worst:.12g}")
        print(f"bound 1 - 500/kappa = {bound:.12g}")
        print(f"violations = {viol}")
        if args.out:
            Writer(args.out, args.format).table("verdicts", VERDICT_COLUMNS, _verdict_rows(alphas, deltas, verdicts))
        return EXIT_OK
    if args.alpha is None or args.delta is None:
        raise UsageError("--alpha and --delta are required unless --sweep is given")
    if not 0 <= args.alpha <= 1:
        raise UsageError("--alpha must lie in [0, 1]")
    if not args.delta > 0:
        raise UsageError("--delta must be positive")
    v = spectral.hb_stability_verdict(args.alpha, args.delta, inst)
    boundary = spectral.top_step_boundary(args.alpha, args.c)
    print(f"kappa = {inst.kappa:g}")
    print(f"classification = {v.classification.value}")
    print(f"lambda_max_top = {v.lambda_max_top:.12g}")
    print(f"lambda_max_bottom = {v.lambda_max_bottom:.12g}")
    print(f"lambda_max = {max(v.lambda_max_top, v.lambda_max_bottom):.12g}")
    print(f"bound 1 - 500/kappa = {v.bound_reference:.12g}")
    print(f"top step boundary = {boundary:.12g} (delta sigma1^2 = {args.delta * args.sigma1**2:.12g})")
    sign = "zero" if v.d_at_one_top == 0 else ("negative" if v.d_at_one_top < 0 else "positive")
    print(f"D(1) top = {v.d_at_one_top:.12g} ({sign})")
    if args.out:
        Writer(args.out, args.format).table("verdicts", VERDICT_COLUMNS,
                                            _verdict_rows([args.alpha], [args.delta], [v]))
    return EXIT_OK


# ------------------------------------------------------------------ plot

def _read_rates(path: Path) -> dict[str, list[tuple[float, float]]]:
    series: dict[str, list] = {}
    if path.suffix == ".json":
        try:
            data = json.loads(path.read_text())
            recs = data["rows"]
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"malformed {path.name}: {exc}") from None
    else:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != RATE_COLUMNS:
                raise UsageError(f"malformed {path.name}: expected header {','.join(RATE_COLUMNS)}")
            recs = list(reader)
    for r in recs:
        try:
            series.setdefault(str(r["method"]), []).append((float(r["kappa"]), float(r["one_over_rate"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"malformed row in {path.name}: {exc}") from None
    return series


def cmd_plot(args) -> int:
    root = Path(args.results_dir)
    if not root.is_dir():
        raise UsageError(f"no such directory: {root}")
    files = sorted(root.glob("rates_*.csv")) + sorted(root.glob("rates_*.json"))
    if not files:
        raise UsageError(f"no rates_*.csv or rates_*.json files in {root}")
    out = Writer(args.out or root, "csv")
    rendered = []
    for f in files:
        series = _read_rates(f)
        dist = f.stem[len("rates_"):]
        try:
            svg = loglog_svg(series, f"1/rate vs condition number ({dist})")
        except ValueError as exc:
            raise UsageError(f"{f.name}: {exc}") from None
        rendered.append((f"rates_{dist}.svg", svg))
    for name, svg in rendered:
        out.text(name, svg)
    print(f"wrote {len(rendered)} plot(s) to {out.root}")
    return EXIT_OK


# ---------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    which = requested = None
    if args.only:
        try:
            which = sorted({int(x) for x in args.only.split(",")})
        except ValueError:
            raise UsageError("--only takes a comma-separated list of criterion numbers") from None
        unknown = [n for n in which if n not in acceptance.CRITERIA and n not in acceptance.OUT_OF_SCOPE]
        if unknown:
            raise UsageError(f"unknown criteria: {unknown}")
        requested = which
        which = [n for n in which if n in acceptance.CRITERIA]
    threads = args.threads if args.threads is not None else 1
    results = acceptance.run(which, threads=threads)
    for r in results:
        print(r.line())
        for label, ok, info in r.checks:
            print(f"    {'ok ' if ok else 'BAD'} {label}: {info}")
    for n, why in acceptance.OUT_OF_SCOPE.items():
        if requested is None or n in requested:
            print(f"[SKIP] criterion {n}: out of scope -- {why}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sfolab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, help="override master_seed")
    r.add_argument("--threads", type=int, help="worker threads (0 = auto)")
    common(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("spectral", help="heavy-ball stability verdict on the two-direction instance")
    s.add_argument("--alpha", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--sigma1", type=float, default=1.0)
    s.add_argument("--sigma2", type=float, default=0.5)
    s.add_argument("--c", type=float, default=2.0)
    s.add_argument("--sweep", action="store_true", help="scan the (delta, alpha) grid instead")
    s.add_argument("--n-delta", type=int, default=100)
    s.add_argument("--n-alpha", type=int, default=100)
    s.add_argument("--delta-min", type=float, default=1e-4)
    common(s)
    s.set_defaults(func=cmd_spectral)

    pl = sub.add_parser("plot", help="log-log 1/rate plots from rates_*.csv")
    pl.add_argument("results_dir")
    pl.add_argument("--out", help="output directory (default: results_dir)")
    pl.set_defaults(func=cmd_plot)

    v = sub.add_parser("verify", help="run the acceptance checks")
    v.add_argument("--only", help="comma-separated criterion numbers")
    v.add_argument("--threads", type=int)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except (config.ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
