"""Trials, the convergence criterion, grid search and rate-vs-kappa experiments.

Random streams are keyed by ``(grid_index, trial_index)`` under a master seed
(see :func:`stream_seed`), and every trial owns its stream, so results do not
depend on how trials are batched, chunked or scheduled across threads.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .numerics import fit_line, fit_rms_residual, spectral_radii
from .optimizers import STEPS, HyperParams, JainParams, Method, init_state
from .problems import (Kind, ProblemInstance, Sample, draw_raw, fourth_moment_operator, make_instance,
                       population_loss, random_unit_vector, samples_from_raw)

LOSS_FLOOR = 1e-300
# Spawn-key namespace for draws that belong to the experiment rather than to a trial.
_EXPERIMENT_KEY = 2**32 - 1

DISTRIBUTIONS = {"discrete": Kind.SECTION51_DISCRETE, "gaussian": Kind.SECTION51_GAUSSIAN}


def stream_seed(master_seed: int, trial_index: int, grid_index: int = 0) -> np.random.SeedSequence:
    """Canonical key ``(grid_index, trial_index)`` under ``master_seed``."""
    if trial_index < 0 or grid_index < 0:
        raise ValueError("indices must be non-negative")
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(grid_index, trial_index))


def seed_stream(master_seed: int, trial_index: int, grid_index: int = 0) -> np.random.Generator:
    return np.random.default_rng(stream_seed(master_seed, trial_index, grid_index))


def experiment_w_star(master_seed: int, d: int = 2) -> np.ndarray:
    """The target fixed once per experiment: a unit vector drawn from the master seed."""
    rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(_EXPERIMENT_KEY, 0)))
    return random_unit_vector(rng, d)


def default_record_every(iterations: int) -> int:
    return max(1, iterations // 1000)


def empirical_rate(f0: float, ft: float, t: int) -> float:
    """``(ln f0 - ln ft) / t``."""
    if not (f0 > 0 and ft > 0):
        raise ValueError("losses must be positive; substitute LOSS_FLOOR for exact zeros")
    if t < 1:
        raise ValueError("t must be >= 1")
    return (math.log(f0) - math.log(ft)) / t


@dataclass
class TrialResult:
    iterations: np.ndarray
    losses: np.ndarray
    converged: bool
    diverged: bool
    final_loss: float
    rate: float

    @property
    def loss_trace(self) -> list[tuple[int, float]]:
        return [(int(i), float(v)) for i, v in zip(self.iterations, self.losses)]


def converged(result: TrialResult, start_loss: float, total_iterations: int | None = None) -> bool:
    """No divergence, and no recorded loss in the second half of the run exceeds ``start_loss``."""
    if len(result.iterations) == 0:
        raise ValueError("empty trace")
    if result.diverged:
        return False
    total = int(result.iterations[-1]) if total_iterations is None else total_iterations
    second = 2 * np.asarray(result.iterations) >= total
    return bool(np.all(np.asarray(result.losses)[second] <= start_loss))


@dataclass
class BatchResult:
    record_iterations: np.ndarray
    losses: np.ndarray | None  # (B, n_records), nan after divergence
    final_loss: np.ndarray
    diverged: np.ndarray
    converged: np.ndarray
    start_loss: float


def _stack_params(hps):
    if isinstance(hps[0], JainParams):
        cls = JainParams
    else:
        cls = HyperParams
    names = cls.__dataclass_fields__.keys()
    return cls(**{n: np.array([getattr(h, n) for h in hps], dtype=float)[:, None] for n in names})


def simulate(instance: ProblemInstance, method: Method | str, hps, seeds, iterations: int,
             record_every: int | None = None, w0=None, keep_trace: bool = False,
             chunk: int | None = None) -> BatchResult:
    """Run one trial per ``(hp, seed)`` row, vectorised across rows."""
    method = Method(method)
    if iterations < 2:
        raise ValueError("iterations must be >= 2")
    record_every = default_record_every(iterations) if record_every is None else record_every
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    n = len(seeds)
    if len(hps) != n:
        raise ValueError("need one hyperparameter set per seed")
    d = instance.dimension
    w0 = np.zeros(d) if w0 is None else np.asarray(w0, dtype=float)
    step = STEPS[method]
    hp = _stack_params(list(hps))
    gens = [np.random.default_rng(s) for s in seeds]
    state = init_state(method, np.tile(w0, (n, 1)))
    fields_ = list(type(state).__dataclass_fields__)

    rec = sorted(set(range(0, iterations + 1, record_every)) | {iterations})
    rec_pos = {t: i for i, t in enumerate(rec)}
    f0 = float(population_loss(instance, w0))
    losses = np.full((n, len(rec)), np.nan) if keep_trace else None
    if keep_trace:
        losses[:, 0] = f0
    diverged = np.zeros(n, dtype=bool)
    exceeded = np.zeros(n, dtype=bool)
    last_loss = np.full(n, f0)
    if chunk is None:
        chunk = max(1, min(512, 2_000_000 // max(1, n * d)))

    w_star = instance.w_star
    t = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while t < iterations:
            m = min(chunk, iterations - t)
            raw = np.stack([draw_raw(instance, g, m) for g in gens])
            a_all, b_all = samples_from_raw(instance, raw)
            for j in range(m):
                state = step(state, instance, Sample(a_all[:, j], b_all[:, j]), hp)
                t += 1
                comps = [getattr(state, f) for f in fields_]
                if not all(np.isfinite(np.sum(c)) for c in comps):
                    bad = ~np.logical_and.reduce([np.isfinite(c).all(axis=1) for c in comps])
                    new = bad & ~diverged
                    if np.any(new):
                        diverged |= new
                        # Park diverged rows at the fixed point so they stay finite.
                        state = type(state)(*[np.where(bad[:, None], w_star, c) for c in comps])
                if t in rec_pos:
                    loss = population_loss(instance, state.w)
                    loss = np.atleast_1d(loss)
                    newly = ~np.isfinite(loss) & ~diverged
                    diverged |= newly
                    loss = np.where(diverged, np.nan, loss)
                    if keep_trace:
                        losses[:, rec_pos[t]] = loss
                    if 2 * t >= iterations:
                        exceeded |= loss > f0
                    last_loss = loss
    final = np.where(diverged, np.inf, last_loss)
    return BatchResult(np.array(rec), losses, final, diverged, ~diverged & ~exceeded, f0)


def run_trial(instance: ProblemInstance, method: Method | str, hp, iterations: int, seed,
              record_every: int | None = None, w0=None) -> TrialResult:
    """One trial; ``seed`` is an int or a :class:`numpy.random.SeedSequence`."""
    res = simulate(instance, method, [hp], [seed], iterations, record_every, w0, keep_trace=True)
    trace = res.losses[0]
    keep = np.isfinite(trace)
    final = float(res.final_loss[0])
    f0 = res.start_loss
    if res.diverged[0]:
        rate = math.nan
    elif f0 > 0 and final > 0:
        rate = empirical_rate(f0, final, iterations)
    else:
        rate = math.nan
    return TrialResult(res.record_iterations[keep], trace[keep], bool(res.converged[0]),
                       bool(res.diverged[0]), final, rate)


@dataclass(frozen=True)
class GridSpec:
    learning_rates: tuple = ()
    momenta: tuple = ()
    long_steps: tuple = ()
    advantage_params: tuple = ()
    c3: float = 0.7

    def points(self, method: Method | str) -> list[HyperParams]:
        """Grid points for ``method`` in canonical (sorted) order."""
        method = Method(method)
        if not self.learning_rates:
            raise ValueError("learning_rates axis is empty")
        if any(lr <= 0 for lr in self.learning_rates):
            raise ValueError("learning rates must be positive")
        if method is Method.SGD:
            pts = [HyperParams(delta=lr) for lr in self.learning_rates]
        elif method in (Method.HB, Method.NAG):
            if not self.momenta:
                raise ValueError("momenta axis is empty")
            pts = [HyperParams(delta=lr, alpha=m) for lr, m in itertools.product(self.learning_rates, self.momenta)]
        elif method is Method.ASGD:
            if not self.long_steps or not self.advantage_params:
                raise ValueError("asgd grids need long_steps and advantage_params")
            pts = [HyperParams(delta=lr, kappa_long=k, xi=x, c3=self.c3)
                   for lr, k, x in itertools.product(self.learning_rates, self.long_steps, self.advantage_params)]
            for p in pts:
                p.check_asgd()
        else:
            raise ValueError(f"no grid form for {method.value}")
        uniq = {(p.delta, p.alpha, p.kappa_long, p.xi, p.c3): p for p in pts}
        return [uniq[k] for k in sorted(uniq)]


@dataclass
class GridPoint:
    index: int
    hp: HyperParams
    n_converged: int
    mean_final_loss: float
    median_final_loss: float
    rate: float


def _aggregate(index, hp, final, conv, f0, iterations) -> GridPoint:
    good = final[conv]
    if good.size == 0:
        return GridPoint(index, hp, 0, math.nan, math.nan, math.nan)
    mean = float(np.mean(good))
    median = float(np.median(good))
    rate = empirical_rate(f0, max(mean, LOSS_FLOOR), iterations) if f0 > 0 else math.nan
    return GridPoint(index, hp, int(good.size), mean, median, rate)


def evaluate_points(instance: ProblemInstance, method: Method | str, hps: list, n_trials: int,
                    iterations: int, master_seed: int, record_every: int | None = None,
                    max_rows: int = 10_000, w0=None) -> list[GridPoint]:
    """Run ``n_trials`` per point; point ``i`` uses streams ``(i, 0..n_trials-1)``."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    per_batch = max(1, max_rows // n_trials)
    out = []
    for start in range(0, len(hps), per_batch):
        block = list(range(start, min(len(hps), start + per_batch)))
        rows_hp = [hps[i] for i in block for _ in range(n_trials)]
        rows_seed = [stream_seed(master_seed, k, i) for i in block for k in range(n_trials)]
        res = simulate(instance, method, rows_hp, rows_seed, iterations, record_every, w0)
        for j, i in enumerate(block):
            sl = slice(j * n_trials, (j + 1) * n_trials)
            out.append(_aggregate(i, hps[i], res.final_loss[sl], res.converged[sl], res.start_loss, iterations))
    return out


def grid_search(instance: ProblemInstance, method: Method | str, grid: GridSpec, n_trials: int,
                iterations: int, master_seed: int, statistic: str = "mean",
                record_every: int | None = None) -> tuple[HyperParams | None, list[GridPoint]]:
    """Best grid point by the mean (or median) final loss over converged trials.

    Returns ``(None, table)`` when no grid point has a converged trial.
    """
    if statistic not in ("mean", "median"):
        raise ValueError("statistic must be 'mean' or 'median'")
    pts = grid.points(method)
    table = evaluate_points(instance, method, pts, n_trials, iterations, master_seed, record_every)
    key = "mean_final_loss" if statistic == "mean" else "median_final_loss"
    ok = [g for g in table if g.n_converged > 0]
    if not ok:
        return None, table
    best = min(ok, key=lambda g: (getattr(g, key), g.index))
    return best.hp, table


# ---------------------------------------------------------------- experiments

EMPIRICAL_GRID = GridSpec(learning_rates=tuple(round(0.1 * k, 10) for k in range(1, 11)),
                          momenta=tuple(round(0.1 * k, 10) for k in range(0, 10)))
SPECTRAL_GRID = GridSpec(learning_rates=tuple(k / 50 for k in range(1, 51)),
                         momenta=tuple(k / 50 for k in range(1, 51)))


def reference_parameters(method: Method | str, distribution: str, kappa: float) -> HyperParams | None:
    """Fixed settings for SGD and ASGD on the two synthetic laws; ``None`` for grid-searched methods."""
    method = Method(method)
    gaussian = distribution == "gaussian"
    lr = 1.0 / 3.0 if gaussian else 0.9
    if method is Method.SGD:
        return HyperParams(delta=lr)
    if method is Method.ASGD:
        if gaussian:
            return HyperParams(delta=lr, kappa_long=3 * kappa, xi=math.sqrt(1.5 * kappa))
        return HyperParams(delta=lr, kappa_long=2 * kappa, xi=math.sqrt(2 * kappa / 3))
    return None


@dataclass(frozen=True)
class RateExperiment:
    kind: str = "empirical"  # or "spectral"
    distributions: tuple = ("discrete", "gaussian")
    methods: tuple = ("sgd", "hb", "nag", "asgd")
    kappas: tuple = tuple(2.0**k for k in range(4, 13))
    n_trials: int = 100
    iterations_factor: float = 5.0
    grid: GridSpec | None = None
    master_seed: int = 0
    moment_method: str = "exact"
    n_moment_samples: int = 1000
    statistic: str = "mean"
    threads: int = 1

    def effective_grid(self) -> GridSpec:
        if self.grid is not None:
            return self.grid
        return EMPIRICAL_GRID if self.kind == "empirical" else SPECTRAL_GRID


@dataclass
class RateRow:
    distribution: str
    method: str
    kappa: float
    rate: float
    params: dict = field(default_factory=dict)

    @property
    def one_over_rate(self) -> float:
        return 1.0 / self.rate if self.rate and np.isfinite(self.rate) and self.rate > 0 else math.nan


@dataclass
class SlopeReport:
    method: str
    distribution: str
    kappa_values: list
    rates: list
    gamma: float
    residual: float


@dataclass
class ExperimentResult:
    kind: str
    rows: list
    slopes: list
    w_star: np.ndarray


def fit_slope(kappas, rates) -> tuple[float, float]:
    """Exponent ``gamma`` of ``1/rate ~ kappa^gamma`` and the RMS residual of the log-log fit."""
    pts = [(math.log(k), math.log(1.0 / r)) for k, r in zip(kappas, rates)
           if r is not None and np.isfinite(r) and r > 0]
    if len(pts) < 2:
        return math.nan, math.nan
    slope, icpt = fit_line(pts)
    return slope, fit_rms_residual(pts, slope, icpt)


def _empirical_cell(exp: RateExperiment, dist: str, kappa: float, w_star) -> list[RateRow]:
    inst = make_instance(DISTRIBUTIONS[dist], kappa=kappa, w_star=w_star)
    iterations = max(2, int(round(exp.iterations_factor * kappa)))
    rows = []
    for m in exp.methods:
        hp = reference_parameters(m, dist, kappa)
        if hp is not None:
            pt = evaluate_points(inst, m, [hp], exp.n_trials, iterations, exp.master_seed)[0]
        else:
            best, table = grid_search(inst, m, exp.effective_grid(), exp.n_trials, iterations,
                                      exp.master_seed, exp.statistic)
            pt = next((g for g in table if g.hp == best), None) if best is not None else None
        if pt is None or pt.n_converged == 0:
            rows.append(RateRow(dist, m, kappa, math.nan, {"n_converged": 0}))
            continue
        loss = pt.mean_final_loss if exp.statistic == "mean" else pt.median_final_loss
        rate = empirical_rate(inst_f0(inst), max(loss, LOSS_FLOOR), iterations)
        rows.append(RateRow(dist, m, kappa, rate, {**pt.hp.as_dict(), "n_converged": pt.n_converged,
                                                   "final_loss": loss, "iterations": iterations}))
    return rows


def inst_f0(inst: ProblemInstance, w0=None) -> float:
    return float(population_loss(inst, np.zeros(inst.dimension) if w0 is None else w0))


def _spectral_cell(exp: RateExperiment, dist: str, kappa: float, w_star) -> list[RateRow]:
    inst = make_instance(DISTRIBUTIONS[dist], kappa=kappa, w_star=w_star)
    rng = np.random.default_rng(np.random.SeedSequence(exp.master_seed, spawn_key=(_EXPERIMENT_KEY, 1, int(kappa))))
    moments = fourth_moment_operator(inst, exp.moment_method, n_samples=exp.n_moment_samples, rng=rng)
    rows = []
    for m in exp.methods:
        hp = reference_parameters(m, dist, kappa)
        if hp is not None:
            op = spectral.covariance_operator(m, hp, inst, moments=moments)
            lam = float(spectral_radii(op.matrix[None])[0])
            chosen = hp
        else:
            pts = exp.effective_grid().points(m)
            ops = np.stack([spectral.covariance_operator(m, p, inst, moments=moments).matrix for p in pts])
            radii = spectral_radii(ops)
            radii = np.where(radii < 1.0 - spectral.DIVERGENCE_TOL, radii, np.inf)
            i = int(np.argmin(radii))
            lam = float(radii[i])
            chosen = pts[i]
        rate = spectral.rate_from_radius(lam)
        rows.append(RateRow(dist, m, kappa, math.nan if rate is None else rate,
                            {**chosen.as_dict(), "lambda_max": lam}))
    return rows


def rate_vs_kappa_experiment(exp: RateExperiment) -> ExperimentResult:
    """Per-kappa rates for each method and distribution, plus fitted slopes."""
    if exp.kind not in ("empirical", "spectral"):
        raise ValueError("kind must be 'empirical' or 'spectral'")
    for dist in exp.distributions:
        if dist not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {dist!r}")
    w_star = experiment_w_star(exp.master_seed)
    cell = _empirical_cell if exp.kind == "empirical" else _spectral_cell
    tasks = [(dist, k) for dist in exp.distributions for k in exp.kappas]
    workers = exp.threads if exp.threads > 0 else None
    if workers == 1:
        results = [cell(exp, dist, k, w_star) for dist, k in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda dk: cell(exp, dk[0], dk[1], w_star), tasks))
    rows = [r for rs in results for r in rs]
    slopes = []
    for dist in exp.distributions:
        for m in exp.methods:
            sel = [r for r in rows if r.distribution == dist and r.method == m]
            ks = [r.kappa for r in sel]
            rates = [r.rate for r in sel]
            gamma, resid = fit_slope(ks, rates)
            slopes.append(SlopeReport(m, dist, ks, rates, gamma, resid))
    return ExperimentResult(exp.kind, rows, slopes, w_star)


__all__ = [
    "BatchResult", "EMPIRICAL_GRID", "ExperimentResult", "GridPoint", "GridSpec", "LOSS_FLOOR",
    "RateExperiment", "RateRow", "SPECTRAL_GRID", "SlopeReport", "TrialResult", "converged",
    "default_record_every", "empirical_rate", "evaluate_points", "experiment_w_star", "fit_slope",
    "grid_search", "reference_parameters", "rate_vs_kappa_experiment", "run_trial",
    "seed_stream", "simulate", "stream_seed",
]
