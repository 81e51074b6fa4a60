"""Streaming first-order methods driven by one sample per iteration.

All step functions are pure (state in, state out) and evaluate exactly one
stochastic gradient. They broadcast over leading batch axes, so the harness
can advance many independent trials at once by passing ``(B, d)`` iterates,
a batched :class:`~sfolab.problems.Sample` and ``(B, 1)`` hyperparameter
arrays.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .problems import ProblemInstance, Sample, stochastic_gradient


class Method(str, enum.Enum):
    SGD = "sgd"
    HB = "hb"
    NAG = "nag"
    ASGD = "asgd"
    ASGD_JAIN = "asgd_jain"


@dataclass(frozen=True)
class HyperParams:
    """Short step ``delta``, momentum ``alpha`` and the ASGD knobs.

    For ASGD the momentum is not free: it is ``1 - c3^2 xi / kappa_long``.
    Fields may be arrays (one row per batched trial).
    """

    delta: float
    alpha: float = 0.0
    kappa_long: float = 1.0
    xi: float = 1.0
    c3: float = 0.7

    def __post_init__(self):
        if np.any(np.asarray(self.delta) < 0):
            raise ValueError("delta must be non-negative")
        if np.any(np.asarray(self.alpha) < 0) or np.any(np.asarray(self.alpha) > 1):
            raise ValueError("alpha must lie in [0, 1]")
        c3 = np.asarray(self.c3)
        if np.any(c3 <= 0) or np.any(c3 >= 1):
            raise ValueError("c3 must lie in (0, 1)")

    @property
    def asgd_momentum(self):
        return 1.0 - self.c3**2 * self.xi / self.kappa_long

    def check_asgd(self) -> None:
        kl = np.asarray(self.kappa_long)
        xi = np.asarray(self.xi)
        if np.any(kl < 1):
            raise ValueError("kappa_long must be >= 1")
        if np.any(xi <= 0) or np.any(xi > np.sqrt(kl) * (1 + 1e-12)):
            raise ValueError("xi must lie in (0, sqrt(kappa_long)]")

    def as_dict(self) -> dict:
        return {"delta": float(self.delta), "alpha": float(self.alpha),
                "kappa_long": float(self.kappa_long), "xi": float(self.xi), "c3": float(self.c3)}


@dataclass(frozen=True)
class JainParams:
    """Step sizes of the four-sequence (x, y, z, v) form of ASGD."""

    beta: float
    alpha: float
    gamma: float
    delta: float
    c3: float = 0.7


@dataclass(frozen=True)
class SGDState:
    w: np.ndarray


@dataclass(frozen=True)
class HBState:
    w: np.ndarray
    w_prev: np.ndarray


@dataclass(frozen=True)
class NAGState:
    w: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class ASGDState:
    w: np.ndarray
    w_bar: np.ndarray


@dataclass(frozen=True)
class ASGDJainState:
    x_bar: np.ndarray
    v_bar: np.ndarray

    @property
    def w(self):
        # The four-sequence form has no single iterate; x_bar is its output.
        return self.x_bar


def init_state(method: Method | str, w0):
    w0 = np.array(w0, dtype=float)
    method = Method(method)
    if method is Method.SGD:
        return SGDState(w0)
    if method is Method.HB:
        return HBState(w0, w0.copy())
    if method is Method.NAG:
        return NAGState(w0, w0.copy())
    if method is Method.ASGD:
        return ASGDState(w0, w0.copy())
    return ASGDJainState(w0, w0.copy())


def _expect(state, cls):
    if not isinstance(state, cls):
        raise TypeError(f"expected {cls.__name__}, got {type(state).__name__}")


def step_sgd(state: SGDState, instance: ProblemInstance, s: Sample, hp: HyperParams) -> SGDState:
    _expect(state, SGDState)
    g = stochastic_gradient(instance, state.w, s)
    return SGDState(state.w - hp.delta * g)


def step_hb(state: HBState, instance: ProblemInstance, s: Sample, hp: HyperParams) -> HBState:
    _expect(state, HBState)
    g = stochastic_gradient(instance, state.w, s)
    w_next = state.w - hp.delta * g + hp.alpha * (state.w - state.w_prev)
    return HBState(w_next, state.w)


def step_nag(state: NAGState, instance: ProblemInstance, s: Sample, hp: HyperParams) -> NAGState:
    _expect(state, NAGState)
    g = stochastic_gradient(instance, state.w, s)
    v_next = state.w - hp.delta * g
    # (1 + alpha) v' - alpha v, arranged so a fixed point stays exact
    w_next = v_next + hp.alpha * (v_next - state.v)
    return NAGState(w_next, v_next)


def step_asgd(state: ASGDState, instance: ProblemInstance, s: Sample, hp: HyperParams) -> ASGDState:
    _expect(state, ASGDState)
    hp.check_asgd()
    alpha = hp.asgd_momentum
    c3 = hp.c3
    g = stochastic_gradient(instance, state.w, s)
    long = state.w - (hp.kappa_long * hp.delta / c3) * g
    short = state.w - hp.delta * g
    # convex combinations written as base + weight * difference (exact at a fixed point)
    w_bar = long + alpha * (state.w_bar - long)
    w_next = short + ((1 - alpha) / (c3 + 1 - alpha)) * (w_bar - short)
    return ASGDState(w_next, w_bar)


def step_asgd_jain(state: ASGDJainState, instance: ProblemInstance, s: Sample,
                   hp_jain: JainParams) -> ASGDJainState:
    _expect(state, ASGDJainState)
    p = hp_jain
    y = state.v_bar + p.alpha * (state.x_bar - state.v_bar)
    g = stochastic_gradient(instance, y, s)
    x_next = y - p.delta * g
    z = state.v_bar + p.beta * (y - state.v_bar)
    v_next = z - p.gamma * g
    return ASGDJainState(x_next, v_next)


def query_point(state):
    """Where the next stochastic gradient is evaluated."""
    if isinstance(state, ASGDJainState):
        raise TypeError("query point of the four-sequence form depends on its params")
    return state.w


STEPS = {
    Method.SGD: step_sgd,
    Method.HB: step_hb,
    Method.NAG: step_nag,
    Method.ASGD: step_asgd,
    Method.ASGD_JAIN: step_asgd_jain,
}


def jain_params(kappa: float, kappa_tilde: float, lambda_min: float, r_squared: float,
                c3: float = 0.7) -> JainParams:
    if min(kappa, kappa_tilde, lambda_min, r_squared) <= 0:
        raise ValueError("all parameters must be positive")
    if not math.isclose(kappa, r_squared / lambda_min, rel_tol=1e-9):
        raise ValueError("kappa must equal r_squared / lambda_min")
    beta = c3**2 / math.sqrt(kappa * kappa_tilde)
    return JainParams(beta=beta, alpha=c3 / (c3 + beta), gamma=beta / (c3 * lambda_min),
                      delta=1.0 / r_squared, c3=c3)


def hyperparams_from_jain_params(p: JainParams) -> HyperParams:
    kappa_long = p.gamma * p.c3 / (p.beta * p.delta)
    return HyperParams(delta=p.delta, kappa_long=kappa_long, xi=p.beta * kappa_long / p.c3**2, c3=p.c3)


def jain_params_from_hyperparams(hp: HyperParams) -> JainParams:
    beta = hp.c3**2 * hp.xi / hp.kappa_long
    return JainParams(beta=beta, alpha=hp.c3 / (hp.c3 + beta),
                      gamma=beta * hp.kappa_long * hp.delta / hp.c3, delta=hp.delta, c3=hp.c3)


def asgd_hyperparams_from_jain(kappa: float, kappa_tilde: float, lambda_min: float,
                               r_squared: float, c3: float = 0.7) -> HyperParams:
    """Algorithm-form ``(delta, kappa_long, xi)`` reproducing the four-sequence updates.

    The mapping is ``delta = 1/R^2``, ``kappa_long = kappa`` and
    ``xi = sqrt(kappa / kappa_tilde)``, so that ``1 - alpha = beta``.
    """
    return hyperparams_from_jain_params(jain_params(kappa, kappa_tilde, lambda_min, r_squared, c3))
