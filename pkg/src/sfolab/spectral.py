"""Expected second-moment dynamics of the streaming methods.

On a least-squares stream the error ``e = w - w*`` of every method evolves
linearly, ``z_{t+1} = A(a_t) z_t`` with ``z`` the stacked error state, so
``E[z z^T]`` evolves by the fixed operator ``E[A (x) A]``. Its spectral
radius is the asymptotic per-step decay factor of the expected loss.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .numerics import ConvergenceError, max_abs_eigenvalue, spectral_radii
from .optimizers import HyperParams, Method
from .problems import Kind, MomentSet, ProblemInstance, fourth_moment_operator

DIVERGENCE_TOL = 1e-12
BOTTOM_CONSTANT = 500.0

BASIS_NOTE = ("column-stacked vec of E[z z^T], z = [w_t - w*; aux_t - w*] "
              "(aux = w_{t-1} for hb, v_t for nag, w_bar_t for asgd)")


@dataclass(frozen=True)
class HbCoordParams:
    """One coordinate of heavy ball: momentum, normalised step ``x = delta sigma^2``, kurtosis."""

    alpha: float
    x: float
    c: float

    @property
    def drift(self) -> float:
        return 1.0 + self.alpha - self.x

    def validate(self) -> None:
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")
        if not self.x > 0:
            raise ValueError("x must be positive")
        if not self.c >= 1:
            raise ValueError("c must be >= 1")


@dataclass(frozen=True)
class ExpectedOperator:
    method: Method
    matrix: np.ndarray
    basis_note: str = BASIS_NOTE


class Verdict(str, enum.Enum):
    DIVERGENT_TOP = "DivergentTopDirection"
    SLOW_BOTTOM = "SlowBottomDirection"
    CONVERGENT = "Convergent"


@dataclass(frozen=True)
class StabilityVerdict:
    classification: Verdict
    lambda_max: float
    lambda_max_top: float
    lambda_max_bottom: float
    bound_reference: float
    d_at_one_top: float


def hb_expected_operator(p: HbCoordParams) -> ExpectedOperator:
    """The 4x4 second-moment operator of one heavy-ball coordinate."""
    p.validate()
    a, x, c, t = p.alpha, p.x, p.c, p.drift
    m = np.array([
        [t * t + (c - 1) * x * x, -a * t, -a * t, a * a],
        [t, 0.0, -a, 0.0],
        [t, -a, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
    ])
    return ExpectedOperator(Method.HB, m, "vec of E[theta theta^T], theta = [e_t; e_{t-1}] for one coordinate")


def hb_expected_operator_batch(alpha, x, c) -> np.ndarray:
    """Stack of :func:`hb_expected_operator` matrices over broadcast parameter arrays."""
    alpha, x, c = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (alpha, x, c)))
    t = 1 + alpha - x
    zero = np.zeros_like(t)
    one = np.ones_like(t)
    rows = [
        [t * t + (c - 1) * x * x, -alpha * t, -alpha * t, alpha * alpha],
        [t, zero, -alpha, zero],
        [t, -alpha, zero, zero],
        [one, zero, zero, zero],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def characteristic_poly(p: HbCoordParams) -> np.ndarray:
    a, x, c, t = p.alpha, p.x, p.c, p.drift
    q = (c - 1) * x * x
    return np.array([1.0, -(t * t + q), 2 * a * t * t - 2 * a * a, (q - t * t) * a * a, a**4])


def eval_D_at_one(p: HbCoordParams) -> float:
    """Characteristic polynomial at ``z = 1`` in factored form; ``<= 0`` means an eigenvalue ``>= 1``."""
    a, x, c = p.alpha, p.x, p.c
    return (1 - a) * x * (2 * (1 - a * a) - x * (1 - a) - (c - 1) * x * (1 + a))


def top_step_boundary(alpha: float, c: float) -> float:
    """Largest ``delta sigma_1^2`` for which the top coordinate can still converge."""
    return 2 * (1 - alpha * alpha) / (c + (c - 2) * alpha)


def eval_G(alpha: float, c: float, kappa: float, delta_sigma1_sq: float, ell: float) -> float:
    """Bottom-coordinate characteristic polynomial at ``z = 1 - ell/kappa``, expanded in ``1/kappa``.

    Uses ``x = c delta sigma_1^2 / kappa``; equals ``D(1 - ell/kappa)`` identically.
    """
    a, k, l, y = alpha, kappa, ell, delta_sigma1_sq
    return (
        c**3 * y**2 * l**3 / k**5
        + (l**4 - 2 * c * y * l**3 * (1 + a) + (2 * a - 3 * c) * c**2 * y**2 * l**2) / k**4
        + (-(3 + a) * (1 - a) * l**3 - 2 * (1 + a) * (2 * a - 3) * c * y * l**2
           + (3 * c - 4 * a + (2 - c) * a**2) * c**2 * y**2 * l) / k**3
        + ((3 - 4 * a - a**2 + 2 * a**3) * l**2 - 2 * c * y * l * (3 - a) * (1 - a**2)
           - c**2 * y**2 * (1 - a) * (c + (c - 2) * a)) / k**2
        + (-(1 - a) ** 2 * (1 - a**2) * l + 2 * c * y * (1 - a) * (1 - a**2)) / k
    )


def r_matrix(p: HbCoordParams) -> np.ndarray:
    """Expected second moments of the first three heavy-ball error states from ``theta_0 = (1, 1)``."""
    a, x, c, t = p.alpha, p.x, p.c, p.drift
    q_a = (t - a) ** 2 + (c - 1) * x * x
    q_0 = t * t + (c - 1) * x * x
    return np.array([
        [1.0, q_a, q_0 * q_a - 2 * a * t * (t - a) + a * a],
        [1.0, t - a, t * q_a - a * (t - a)],
        [1.0, 1.0, q_a],
    ])


def r_matrix_determinant(p: HbCoordParams) -> float:
    a, x, c = p.alpha, p.x, p.c
    return a * x**3 * ((c - 2) * (-1 + c * x) + c * a)


def hb_stability_verdict(alpha: float, delta: float, instance: ProblemInstance) -> StabilityVerdict:
    if instance.kind is not Kind.SECTION3_DISCRETE:
        raise ValueError("stability verdicts are defined for section3_discrete instances")
    s1, s2 = instance.sigma
    c = instance.kurtosis_c
    top = max_abs_eigenvalue(hb_expected_operator(HbCoordParams(alpha, delta * s1**2, c)).matrix)
    bottom = max_abs_eigenvalue(hb_expected_operator(HbCoordParams(alpha, delta * s2**2, c)).matrix)
    return _verdict(alpha, delta * s1**2, c, top, bottom, instance.kappa)


def _verdict(alpha, x_top, c, top, bottom, kappa) -> StabilityVerdict:
    bound = 1.0 - BOTTOM_CONSTANT / kappa
    d1 = eval_D_at_one(HbCoordParams(alpha, x_top, c))
    if top >= 1.0 - DIVERGENCE_TOL:
        cls = Verdict.DIVERGENT_TOP
        lam = top
    else:
        lam = bottom
        cls = Verdict.SLOW_BOTTOM if bottom >= bound else Verdict.CONVERGENT
    return StabilityVerdict(cls, float(lam), float(top), float(bottom), float(bound), float(d1))


def hb_stability_sweep(instance: ProblemInstance, deltas, alphas) -> list[StabilityVerdict]:
    """Verdicts over the product grid ``deltas x alphas`` (delta-major order)."""
    if instance.kind is not Kind.SECTION3_DISCRETE:
        raise ValueError("stability verdicts are defined for section3_discrete instances")
    s1, s2 = instance.sigma
    c = instance.kurtosis_c
    dd, aa = np.meshgrid(np.asarray(deltas, float), np.asarray(alphas, float), indexing="ij")
    dd, aa = dd.ravel(), aa.ravel()
    top = spectral_radii(hb_expected_operator_batch(aa, dd * s1**2, c))
    bottom = spectral_radii(hb_expected_operator_batch(aa, dd * s2**2, c))
    return [_verdict(a, d * s1**2, c, t, b, instance.kappa)
            for a, d, t, b in zip(aa, dd, top, bottom)]


def error_update_coefficients(method: Method | str, hp: HyperParams) -> tuple[np.ndarray, np.ndarray]:
    """``(K, L)`` with the per-sample error map ``A(a) = K (x) I + L (x) a a^T``."""
    method = Method(method)
    d, al = hp.delta, hp.alpha
    if method is Method.SGD:
        return np.array([[1.0]]), np.array([[-d]])
    if method is Method.HB:
        return np.array([[1 + al, -al], [1.0, 0.0]]), np.array([[-d, 0.0], [0.0, 0.0]])
    if method is Method.NAG:
        return (np.array([[1 + al, -al], [1.0, 0.0]]),
                np.array([[-(1 + al) * d, 0.0], [-d, 0.0]]))
    if method is Method.ASGD:
        hp.check_asgd()
        m = hp.asgd_momentum
        denom = hp.c3 + 1 - m
        p, q = hp.c3 / denom, (1 - m) / denom
        long_step = hp.kappa_long * d / hp.c3
        k = np.array([[p + q * (1 - m), q * m], [1 - m, m]])
        lin = np.array([[-p * d - q * (1 - m) * long_step, 0.0], [-(1 - m) * long_step, 0.0]])
        return k, lin
    raise ValueError(f"no error-update form for {method.value}")


def _operator_from_coefficients(k: np.ndarray, lin: np.ndarray, moments: MomentSet) -> np.ndarray:
    d = moments.hessian.shape[0]
    s = k.shape[0]
    a0 = np.kron(k, np.eye(d))
    a1 = np.kron(lin, moments.hessian)
    quad = np.einsum("pq,rs,ijkl->pirkqjsl", lin, lin, moments.tensor).reshape((s * d) ** 2, (s * d) ** 2)
    return np.kron(a0, a0) + np.kron(a0, a1) + np.kron(a1, a0) + quad


def covariance_operator(method: Method | str, hp: HyperParams, instance: ProblemInstance,
                        moment_method: str = "exact", moments: MomentSet | None = None,
                        **moment_kwargs) -> ExpectedOperator:
    method = Method(method)
    if moments is None:
        moments = fourth_moment_operator(instance, moment_method, **moment_kwargs)
    if method is Method.SGD:
        h = moments.hessian
        d = h.shape[0]
        eye = np.eye(d)
        # M -> M - delta H M - delta M H + delta^2 E[<a, M a> a a^T]
        m = (np.eye(d * d) - hp.delta * (np.kron(h, eye) + np.kron(eye, h))
             + hp.delta**2 * moments.fourth_moment_action)
        return ExpectedOperator(method, m, "column-stacked vec of E[e e^T]")
    k, lin = error_update_coefficients(method, hp)
    return ExpectedOperator(method, _operator_from_coefficients(k, lin, moments))


def predicted_rate(op: ExpectedOperator | np.ndarray) -> float | None:
    """``-ln(spectral radius)``, or ``None`` when the radius is at least one."""
    m = op.matrix if isinstance(op, ExpectedOperator) else op
    lam = max_abs_eigenvalue(m)
    return rate_from_radius(lam)


def rate_from_radius(lam: float) -> float | None:
    if not np.isfinite(lam) or lam >= 1.0 - DIVERGENCE_TOL:
        return None
    if lam == 0.0:
        return math.inf
    return -math.log(lam)


def state_size(method: Method | str) -> int:
    return 1 if Method(method) is Method.SGD else 2


def predicted_loss_trace(op: ExpectedOperator, instance: ProblemInstance, w0, times) -> np.ndarray:
    """Expected population loss at each of ``times`` by iterating the operator from ``w0``."""
    e0 = np.asarray(w0, dtype=float) - instance.w_star
    s = state_size(op.method)
    z = np.tile(e0, s)
    phi = np.outer(z, z).ravel(order="F")
    d = instance.dimension
    h = instance.hessian
    out = []
    t_now = 0
    for t in sorted(times):
        for _ in range(t - t_now):
            phi = op.matrix @ phi
        t_now = t
        cov = phi.reshape(s * d, s * d, order="F")[:d, :d]
        out.append(0.5 * float(np.sum(h * cov)))
    order = np.argsort(np.argsort(times))
    return np.array(out)[order]


__all__ = [
    "ConvergenceError", "DIVERGENCE_TOL", "ExpectedOperator", "HbCoordParams", "StabilityVerdict",
    "Verdict", "characteristic_poly", "covariance_operator", "error_update_coefficients",
    "eval_D_at_one", "eval_G", "hb_expected_operator", "hb_expected_operator_batch",
    "hb_stability_sweep", "hb_stability_verdict", "predicted_loss_trace", "predicted_rate",
    "r_matrix", "r_matrix_determinant", "rate_from_radius", "top_step_boundary",
]
