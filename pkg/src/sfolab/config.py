"""Run configuration: TOML with nested sections, strict validation, lossless round trip.

Layout::

    kind = "rates"            # "trial" | "rates" | "sweep"
    mode = "spectral"         # rates only: "empirical" | "spectral"
    master_seed = 0
    output_dir = "out"
    threads = 1               # 0 = one worker per CPU
    moment_method = "exact"   # or "empirical"
    n_moment_samples = 1000
    statistic = "mean"        # or "median"
    methods = ["sgd", "hb", "nag", "asgd"]
    kappas = [16.0, 32.0]

    [instance]   kind, sigma1, sigma2, c, kappa, distributions
    [grid]       learning_rates, momenta, long_steps, advantage_params, c3
    [trials]     n_trials, iterations_factor, iterations, record_every
    [hyper]      delta, alpha, kappa_long, xi, c3   (trial runs)
    [sweep]      n_delta, n_alpha, delta_min

Omitted keys take the defaults below. Unknown keys are errors.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .harness import DISTRIBUTIONS, GridSpec, RateExperiment
from .optimizers import HyperParams, Method
from .problems import Kind


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InstanceConfig:
    kind: str = "section3_discrete"
    sigma1: float = 1.0
    sigma2: float = 0.5
    c: float = 2.0
    kappa: float = 0.0  # only for the synthetic laws of trial runs; 0 = unused
    distributions: tuple = ("discrete", "gaussian")


@dataclass(frozen=True)
class GridConfig:
    learning_rates: tuple = ()
    momenta: tuple = ()
    long_steps: tuple = ()
    advantage_params: tuple = ()
    c3: float = 0.7


@dataclass(frozen=True)
class TrialsConfig:
    n_trials: int = 100
    iterations_factor: float = 5.0
    iterations: int = 0  # trial runs: 0 means iterations_factor * kappa
    record_every: int = 0  # 0 = max(1, iterations // 1000)


@dataclass(frozen=True)
class HyperConfig:
    delta: float = 0.5
    alpha: float = 0.0
    kappa_long: float = 1.0
    xi: float = 1.0
    c3: float = 0.7


@dataclass(frozen=True)
class SweepConfig:
    n_delta: int = 100
    n_alpha: int = 100
    delta_min: float = 1e-4


@dataclass(frozen=True)
class RunConfig:
    kind: str = "rates"
    mode: str = "spectral"
    master_seed: int = 0
    output_dir: str = "out"
    threads: int = 1
    moment_method: str = "exact"
    n_moment_samples: int = 1000
    statistic: str = "mean"
    methods: tuple = ("sgd", "hb", "nag", "asgd")
    kappas: tuple = tuple(2.0**k for k in range(4, 15))
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    trials: TrialsConfig = field(default_factory=TrialsConfig)
    hyper: HyperConfig = field(default_factory=HyperConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        validate(self)

    # ------------------------------------------------------------ conversions
    def grid_spec(self) -> GridSpec | None:
        g = self.grid
        if not g.learning_rates:
            return None
        return GridSpec(g.learning_rates, g.momenta, g.long_steps, g.advantage_params, g.c3)

    def experiment(self) -> RateExperiment:
        return RateExperiment(
            kind=self.mode, distributions=self.instance.distributions, methods=self.methods,
            kappas=self.kappas, n_trials=self.trials.n_trials,
            iterations_factor=self.trials.iterations_factor, grid=self.grid_spec(),
            master_seed=self.master_seed, moment_method=self.moment_method,
            n_moment_samples=self.n_moment_samples, statistic=self.statistic, threads=self.threads)

    def hyperparams(self) -> HyperParams:
        return HyperParams(**dataclasses.asdict(self.hyper))


_SECTIONS = {"instance": InstanceConfig, "grid": GridConfig, "trials": TrialsConfig,
             "hyper": HyperConfig, "sweep": SweepConfig}


def _coerce(cls, name: str, value, where: str):
    f = cls.__dataclass_fields__[name]
    default = f.default if f.default is not dataclasses.MISSING else None
    try:
        if isinstance(default, bool):
            raise TypeError
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise TypeError
            kind = str if name in ("methods", "distributions") else float
            if any(isinstance(v, bool) for v in value):
                raise TypeError
            if kind is float and not all(isinstance(v, (int, float)) for v in value):
                raise TypeError
            if kind is str and not all(isinstance(v, str) for v in value):
                raise TypeError
            return tuple(kind(v) for v in value)
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError
            return value
    except TypeError:
        raise ConfigError(f"{where}{name}: wrong type {type(value).__name__}") from None
    raise ConfigError(f"{where}{name}: unsupported field")


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where.rstrip('.') or 'config'} must be a table")
    known = set(cls.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where.rstrip('.') or 'top level'}: {', '.join(unknown)}")
    kw = {}
    for k, v in data.items():
        if cls is RunConfig and k in _SECTIONS:
            kw[k] = _build(_SECTIONS[k], v, f"{k}.")
        else:
            kw[k] = _coerce(cls, k, v, where)
    return cls(**kw)


def validate(cfg: RunConfig) -> None:
    def need(ok: bool, msg: str):
        if not ok:
            raise ConfigError(msg)

    need(cfg.kind in ("trial", "rates", "sweep"), f"kind must be trial, rates or sweep, not {cfg.kind!r}")
    need(cfg.mode in ("empirical", "spectral"), f"mode must be empirical or spectral, not {cfg.mode!r}")
    need(cfg.master_seed >= 0, "master_seed must be non-negative")
    need(cfg.threads >= 0, "threads must be >= 0")
    need(cfg.moment_method in ("exact", "empirical"), "moment_method must be exact or empirical")
    need(cfg.n_moment_samples >= 1, "n_moment_samples must be >= 1")
    need(cfg.statistic in ("mean", "median"), "statistic must be mean or median")
    need(bool(cfg.methods), "methods must be nonempty")
    for m in cfg.methods:
        try:
            Method(m)
        except ValueError:
            raise ConfigError(f"unknown method {m!r}") from None
    need(all(math.isfinite(k) and k > 1 for k in cfg.kappas), "kappas must be finite and > 1")
    need(len(set(cfg.kappas)) == len(cfg.kappas), "kappas must be distinct")
    inst = cfg.instance
    try:
        Kind(inst.kind)
    except ValueError:
        raise ConfigError(f"unknown instance kind {inst.kind!r}") from None
    for d in inst.distributions:
        need(d in DISTRIBUTIONS, f"unknown distribution {d!r}")
    need(inst.sigma1 > 0 and inst.sigma2 > 0, "sigmas must be positive")
    need(inst.sigma1 >= inst.sigma2, "sigma1 must be >= sigma2")
    need(inst.c >= 2, "c must be >= 2")
    g = cfg.grid
    for name in ("learning_rates", "momenta", "long_steps", "advantage_params"):
        need(all(math.isfinite(v) for v in getattr(g, name)), f"grid.{name} must be finite")
    need(all(v > 0 for v in g.learning_rates), "grid.learning_rates must be positive")
    need(all(0 <= v < 1 or (cfg.mode == "spectral" and v == 1) for v in g.momenta),
         "grid.momenta must lie in [0, 1)")
    need(all(v >= 1 for v in g.long_steps), "grid.long_steps must be >= 1")
    need(all(v > 0 for v in g.advantage_params), "grid.advantage_params must be positive")
    need(0 < g.c3 < 1, "grid.c3 must lie in (0, 1)")
    if g.learning_rates:
        for m in cfg.methods:
            if Method(m) in (Method.HB, Method.NAG):
                need(bool(g.momenta), "grid.momenta is required for hb/nag")
    t = cfg.trials
    need(t.n_trials >= 1, "trials.n_trials must be >= 1")
    need(t.iterations_factor > 0, "trials.iterations_factor must be positive")
    need(t.iterations >= 0 and t.record_every >= 0, "trials counts must be non-negative")
    h = cfg.hyper
    need(h.delta > 0, "hyper.delta must be positive")
    need(0 <= h.alpha <= 1, "hyper.alpha must lie in [0, 1]")
    s = cfg.sweep
    need(s.n_delta >= 2 and s.n_alpha >= 2, "sweep grid needs at least 2 points per axis")
    need(s.delta_min > 0, "sweep.delta_min must be positive")
    if cfg.kind == "trial":
        need(len(cfg.methods) == 1, "a trial run takes exactly one method")
        need(Method(cfg.methods[0]) is not Method.ASGD_JAIN, "trial runs use the single-iterate methods")
        if Kind(inst.kind) in (Kind.SECTION51_DISCRETE, Kind.SECTION51_GAUSSIAN):
            need(inst.kappa > 1, "instance.kappa is required for the synthetic laws")
        need(t.iterations >= 2 or t.iterations == 0, "trials.iterations must be >= 2")
        try:
            hp = cfg.hyperparams()
            if Method(cfg.methods[0]) is Method.ASGD:
                hp.check_asgd()
        except ValueError as exc:
            raise ConfigError(f"hyper: {exc}") from None
    if cfg.kind == "sweep":
        need(Kind(inst.kind) is Kind.SECTION3_DISCRETE, "sweeps run on the section3_discrete instance")
    if cfg.kind == "rates":
        need(len(cfg.kappas) >= 2, "a rate experiment needs at least two kappas")
        need(bool(inst.distributions), "instance.distributions must be nonempty")
        need(all(Method(m) is not Method.ASGD_JAIN for m in cfg.methods),
             "rate experiments use sgd, hb, nag and asgd")


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def to_dict(cfg: RunConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            out[f.name] = {k: list(x) if isinstance(x, tuple) else x for k, x in dataclasses.asdict(v).items()}
        else:
            out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def loads(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from None
    return from_dict(data)


def dumps(cfg: RunConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return loads(text)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(dumps(cfg).encode()).hexdigest()
