"""Streaming realizable least-squares instances.

Every instance draws a covariate ``a`` from a fixed law and sets the target
``b = <w*, a>`` so the population loss is ``0.5 (w - w*)^T H (w - w*)``.

Random draws per sample, by kind:

* ``section3_discrete`` / ``custom_diagonal``: two uniforms (direction, then z).
* ``section51_discrete``: one uniform (branch).
* ``section51_gaussian``: ``d`` standard normals.

Draws are consumed sequentially from the caller's generator, so drawing
``n`` samples in one block or in several smaller blocks yields the same
stream.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class Kind(str, enum.Enum):
    SECTION3_DISCRETE = "section3_discrete"
    SECTION51_DISCRETE = "section51_discrete"
    SECTION51_GAUSSIAN = "section51_gaussian"
    CUSTOM_DIAGONAL = "custom_diagonal"


@dataclass(frozen=True)
class ProblemInstance:
    """An immutable covariate law plus the target ``w_star``.

    ``kappa`` follows the convention of the kind: ``R^2 / lambda_min`` for the
    z-scaled discrete laws (equal to ``c sigma_1^2 / sigma_d^2``) and
    ``lambda_max / lambda_min`` for the two fixed-magnitude laws.
    ``condition_number`` is always ``lambda_max / lambda_min``.
    """

    kind: Kind
    w_star: np.ndarray
    sigma: np.ndarray
    kurtosis_c: float
    kappa: float
    kappa_tilde: float
    hessian_diag: np.ndarray
    kappa_convention: str = field(default="lambda_max/lambda_min")

    @property
    def dimension(self) -> int:
        return int(self.w_star.shape[0])

    @property
    def hessian(self) -> np.ndarray:
        return np.diag(self.hessian_diag)

    @property
    def condition_number(self) -> float:
        return float(self.hessian_diag.max() / self.hessian_diag.min())

    @property
    def lambda_min(self) -> float:
        return float(self.hessian_diag.min())

    @property
    def r_squared(self) -> float:
        """Smallest ``R^2`` with ``E[|a|^2 a a^T] <= R^2 H``."""
        m = fourth_moment_operator(self).tensor
        d = self.dimension
        lhs = np.einsum("ijkk->ij", m)
        h_isqrt = np.diag(1.0 / np.sqrt(self.hessian_diag))
        return float(np.linalg.eigvalsh(h_isqrt @ lhs @ h_isqrt).max()) if d else 0.0

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Finite support ``(probs, points)`` of a discrete law."""
        if self.kind is Kind.SECTION51_GAUSSIAN:
            raise ValueError("the Gaussian law has no finite support")
        d = self.dimension
        if self.kind is Kind.SECTION51_DISCRETE:
            pts = np.diag(self.sigma)
            return np.full(d, 1.0 / d), pts
        c = self.kurtosis_c
        zmag = math.sqrt(c)
        p_pm = d / (2.0 * c)
        probs, pts = [], []
        for i in range(d):
            for sgn in (-1.0, 1.0):
                v = np.zeros(d)
                v[i] = sgn * zmag * self.sigma[i]
                probs.append(p_pm / d)
                pts.append(v)
        p_zero = 1.0 - 2.0 * p_pm
        if p_zero > 0:
            probs.append(p_zero)
            pts.append(np.zeros(d))
        return np.array(probs), np.array(pts)


@dataclass(frozen=True)
class Sample:
    a: np.ndarray
    b: float


@dataclass(frozen=True)
class MomentSet:
    """``H = E[a a^T]`` and the map ``M -> E[<a, M a> a a^T]``.

    ``tensor[i, j, k, l] = E[a_i a_j a_k a_l]``; ``fourth_moment_action`` is
    that tensor reshaped to ``d^2 x d^2`` (same under row- or column-stacking
    because the tensor is fully symmetric).
    """

    hessian: np.ndarray
    tensor: np.ndarray

    @property
    def fourth_moment_action(self) -> np.ndarray:
        d = self.hessian.shape[0]
        return self.tensor.reshape(d * d, d * d)

    def apply(self, m) -> np.ndarray:
        return np.einsum("ijkl,kl->ij", self.tensor, np.asarray(m, dtype=float))


def random_unit_vector(rng: np.random.Generator, d: int = 2) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def make_instance(
    kind: Kind | str,
    *,
    kappa: float | None = None,
    sigma1: float | None = None,
    sigma2: float | None = None,
    sigma=None,
    c: float = 2.0,
    w_star=None,
    rng: np.random.Generator | None = None,
    discrete_e2: str = "condition",
) -> ProblemInstance:
    """Build an instance.

    ``section3_discrete`` takes ``sigma1 > sigma2 > 0`` and ``c >= 2``;
    ``custom_diagonal`` takes a non-increasing ``sigma`` vector and ``c >= d``;
    the two ``section51_*`` kinds take ``kappa >= 1`` (the target
    ``lambda_max / lambda_min``). ``discrete_e2="as_written"`` puts the second
    discrete atom at ``(2/kappa) e2`` literally, whose condition number is
    ``kappa^2/4``; the default keeps it at ``kappa``. Without ``w_star`` a unit vector is drawn from
    ``rng`` (default seed 0).
    """
    kind = Kind(kind)
    if kind is Kind.SECTION3_DISCRETE:
        if sigma1 is None or sigma2 is None:
            raise ValueError("section3_discrete needs sigma1 and sigma2")
        if not (sigma1 > sigma2 > 0):
            raise ValueError("need sigma1 > sigma2 > 0")
        sig = np.array([sigma1, sigma2], dtype=float)
    elif kind is Kind.CUSTOM_DIAGONAL:
        if sigma is None:
            raise ValueError("custom_diagonal needs sigma")
        sig = np.asarray(sigma, dtype=float)
        if sig.ndim != 1 or sig.size < 1 or np.any(sig <= 0) or np.any(np.diff(sig) > 0):
            raise ValueError("sigma must be positive and non-increasing")
    else:
        if kappa is None or not kappa >= 1:
            raise ValueError("section51 kinds need kappa >= 1")
        if discrete_e2 not in ("condition", "as_written"):
            raise ValueError(f"unknown discrete_e2 {discrete_e2!r}")
        sig = np.array([1.0, 1.0 / math.sqrt(kappa)])
        if discrete_e2 == "as_written" and kind is Kind.SECTION51_DISCRETE:
            # second atom (2/kappa) e2: lambda_max/lambda_min becomes kappa^2/4, not kappa
            sig = np.array([1.0, 2.0 / kappa])

    d = sig.size
    if w_star is None:
        w = random_unit_vector(rng if rng is not None else np.random.default_rng(0), d)
    else:
        w = np.array(w_star, dtype=float)
        if w.shape != (d,):
            raise ValueError(f"w_star must have shape ({d},)")
    w.setflags(write=False)
    sig.setflags(write=False)

    if kind in (Kind.SECTION3_DISCRETE, Kind.CUSTOM_DIAGONAL):
        if not c >= max(2.0, d):
            raise ValueError(f"kurtosis c must be >= max(2, d) = {max(2, d)}")
        hdiag = sig**2
        return ProblemInstance(kind, w, sig, float(c), float(c * sig[0] ** 2 / sig[-1] ** 2),
                               float(c), hdiag, "R^2/lambda_min")
    if kind is Kind.SECTION51_DISCRETE:
        hdiag = 0.5 * sig**2
        # E[a_i^4] / E[a_i^2]^2 = 0.5 s^4 / 0.25 s^4
        c_implied = 2.0
    else:
        hdiag = sig**2
        c_implied = 3.0
    return ProblemInstance(kind, w, sig, c_implied, float(hdiag.max() / hdiag.min()),
                           c_implied, hdiag, "lambda_max/lambda_min")


def draw_raw(instance: ProblemInstance, rng: np.random.Generator, size=()) -> np.ndarray:
    """The raw random numbers behind ``size`` samples (uniforms or normals, per kind)."""
    size = (size,) if np.isscalar(size) else tuple(size)
    kind = instance.kind
    if kind is Kind.SECTION51_GAUSSIAN:
        return rng.standard_normal(size + (instance.dimension,))
    if kind is Kind.SECTION51_DISCRETE:
        return rng.random(size + (1,))
    return rng.random(size + (2,))


def samples_from_raw(instance: ProblemInstance, raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map raw draws of shape ``size + (k,)`` to covariates ``size + (d,)`` and targets ``size``."""
    d = instance.dimension
    sig = instance.sigma
    kind = instance.kind
    size = raw.shape[:-1]
    if kind is Kind.SECTION51_GAUSSIAN:
        a = raw * sig
    elif kind is Kind.SECTION51_DISCRETE:
        idx = np.minimum((raw[..., 0] * d).astype(int), d - 1)
        a = np.zeros(size + (d,))
        np.put_along_axis(a, idx[..., None], sig[idx][..., None], axis=-1)
    else:
        idx = np.minimum((raw[..., 0] * d).astype(int), d - 1)
        p_pm = d / instance.kurtosis_c
        u = raw[..., 1]
        z = np.where(u < 0.5 * p_pm, -1.0, np.where(u < p_pm, 1.0, 0.0)) * math.sqrt(instance.kurtosis_c)
        a = np.zeros(size + (d,))
        np.put_along_axis(a, idx[..., None], (z * sig[idx])[..., None], axis=-1)
    b = np.sum(a * instance.w_star, axis=-1)
    return a, b


def sample_batch(instance: ProblemInstance, rng: np.random.Generator, size=()) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` samples; returns ``a`` of shape ``size + (d,)`` and ``b`` of shape ``size``."""
    return samples_from_raw(instance, draw_raw(instance, rng, size))


def sample(instance: ProblemInstance, rng: np.random.Generator) -> Sample:
    a, b = sample_batch(instance, rng, (1,))
    return Sample(a[0], float(b[0]))


def _check_dim(instance: ProblemInstance, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape[-1:] != (instance.dimension,):
        raise ValueError(f"expected trailing dimension {instance.dimension}, got shape {w.shape}")
    return w


def stochastic_gradient(instance: ProblemInstance, w, s: Sample) -> np.ndarray:
    """``-(b - <w, a>) a``; broadcasts over leading batch axes."""
    w = _check_dim(instance, w)
    a = np.asarray(s.a, dtype=float)
    if a.shape[-1] != w.shape[-1]:
        raise ValueError("sample and iterate dimensions differ")
    resid = s.b - np.sum(w * a, axis=-1)
    return -resid[..., None] * a


def population_loss(instance: ProblemInstance, w) -> np.ndarray | float:
    e = _check_dim(instance, w) - instance.w_star
    out = 0.5 * np.sum(instance.hessian_diag * e * e, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def fourth_moment_operator(
    instance: ProblemInstance,
    method: str = "exact",
    n_samples: int = 1000,
    rng: np.random.Generator | None = None,
) -> MomentSet:
    """Second and fourth moments of the covariate law, exact or from ``n_samples`` draws."""
    if method == "exact":
        if instance.kind is Kind.SECTION51_GAUSSIAN:
            h = instance.hessian
            t = (np.einsum("ij,kl->ijkl", h, h) + np.einsum("ik,jl->ijkl", h, h)
                 + np.einsum("il,jk->ijkl", h, h))
            return MomentSet(h, t)
        probs, pts = instance.support()
        h = np.einsum("n,ni,nj->ij", probs, pts, pts)
        t = np.einsum("n,ni,nj,nk,nl->ijkl", probs, pts, pts, pts, pts)
        return MomentSet(h, t)
    if method == "empirical":
        if n_samples < 1:
            raise ValueError("n_samples must be positive")
        a, _ = sample_batch(instance, rng if rng is not None else np.random.default_rng(0), (n_samples,))
        h = a.T @ a / n_samples
        t = np.einsum("ni,nj,nk,nl->ijkl", a, a, a, a) / n_samples
        return MomentSet(h, t)
    raise ValueError(f"unknown moment method {method!r}")
