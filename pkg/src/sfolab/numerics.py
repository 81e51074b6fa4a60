"""Small dense linear algebra and polynomial helpers.

Matrices are plain 2-D float64 ``numpy`` arrays and polynomials are 1-D
coefficient arrays, highest degree first (the ``numpy.polyval`` order).
"""
from __future__ import annotations

import numpy as np

MAX_EIG_DIM = 64
MAX_POLY_DEGREE = 8


class ConvergenceError(ArithmeticError):
    """An iterative routine exhausted its budget without converging."""


def as_matrix(m, square: bool = False) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a nonempty 2-D matrix, got shape {a.shape}")
    if square and a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def kron(a, b) -> np.ndarray:
    """Kronecker product, ``(a.rows*b.rows) x (a.cols*b.cols)``."""
    return np.kron(as_matrix(a), as_matrix(b))


def max_abs_eigenvalue(m) -> float:
    """Spectral radius of a (generally non-symmetric) square matrix."""
    a = as_matrix(m, square=True)
    if a.shape[0] > MAX_EIG_DIM:
        raise ValueError(f"dimension {a.shape[0]} exceeds {MAX_EIG_DIM}")
    try:
        lam = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(str(exc)) from exc
    return float(np.max(np.abs(lam)))


def spectral_radii(stack) -> np.ndarray:
    """Vectorised :func:`max_abs_eigenvalue` over a ``(..., n, n)`` stack."""
    a = np.asarray(stack, dtype=float)
    if a.shape[-1] != a.shape[-2]:
        raise ValueError("trailing dimensions must be square")
    bad = ~np.isfinite(a).all(axis=(-2, -1))
    out = np.full(a.shape[:-2], np.inf)
    if np.any(~bad):
        try:
            out[~bad] = np.abs(np.linalg.eigvals(a[~bad])).max(axis=-1)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(str(exc)) from exc
    return out


def _trim(p) -> np.ndarray:
    c = np.atleast_1d(np.asarray(p, dtype=complex if np.iscomplexobj(p) else float))
    if c.ndim != 1:
        raise ValueError("polynomial coefficients must be 1-D")
    nz = np.flatnonzero(c)
    if nz.size == 0:
        raise ValueError("zero polynomial has no well-defined roots")
    return c[nz[0]:]


def poly_roots(p, tol: float = 1e-10, max_iter: int = 500) -> np.ndarray:
    """All complex roots of ``p`` (with multiplicity) by Durand-Kerner iteration.

    Exact zero roots are deflated first, so ``z**k`` factors come back as
    exact zeros. Each surviving root is polished with a few Newton steps.
    """
    c = _trim(p)
    if c.size - 1 > MAX_POLY_DEGREE:
        raise ValueError(f"degree {c.size - 1} exceeds {MAX_POLY_DEGREE}")
    n_zero = 0
    while c.size > 1 and c[-1] == 0:
        c = c[:-1]
        n_zero += 1
    deg = c.size - 1
    zeros = np.zeros(n_zero, dtype=complex)
    if deg == 0:
        return zeros
    monic = c / c[0]
    # Cauchy bound on root modulus sets the radius of the starting circle.
    radius = 1.0 + np.max(np.abs(monic[1:]))
    z = radius * (0.4 + 0.9j) ** np.arange(deg)
    scale = np.max(np.abs(c))
    for _ in range(max_iter):
        num = np.polyval(monic, z)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        den = np.prod(diff, axis=1)
        step = num / den
        z = z - step
        if np.max(np.abs(step)) <= tol * max(1.0, np.max(np.abs(z))):
            break
    dmonic = np.polyder(monic)
    for _ in range(3):
        d = np.polyval(dmonic, z)
        ok = np.abs(d) > 1e-300
        z = np.where(ok, z - np.polyval(monic, z) / np.where(ok, d, 1.0), z)
    resid = np.abs(np.polyval(c, z))
    if np.max(resid) > 1e-8 * scale * max(1.0, np.max(np.abs(z))) ** deg:
        raise ConvergenceError(f"root finder did not converge (residual {np.max(resid):.3g})")
    return np.concatenate([z, zeros])


def char_poly(m) -> np.ndarray:
    """Characteristic polynomial ``det(zI - m)`` via Faddeev-LeVerrier."""
    a = as_matrix(m, square=True)
    n = a.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    mk = np.zeros_like(a)
    eye = np.eye(n)
    for k in range(1, n + 1):
        mk = a @ (mk + coeffs[k - 1] * eye)
        coeffs[k] = -np.trace(mk) / k
    return coeffs


def det_cofactor(m) -> float:
    """Determinant by Laplace expansion along the first row; for small exact checks only."""
    a = as_matrix(m, square=True)
    n = a.shape[0]
    if n > 6:
        raise ValueError("cofactor expansion is limited to n <= 6")
    if n == 1:
        return float(a[0, 0])
    total = 0.0
    for j in range(n):
        minor = np.delete(a[1:], j, axis=1)
        total += (-1) ** j * a[0, j] * det_cofactor(minor)
    return float(total)


def fit_line(points) -> tuple[float, float]:
    """Ordinary least-squares line through ``(x, y)`` pairs; returns (slope, intercept)."""
    xy = np.asarray(points, dtype=float)
    if xy.ndim != 2 or xy.shape[1] != 2 or xy.shape[0] < 2:
        raise ValueError("need at least two (x, y) points")
    x, y = xy[:, 0], xy[:, 1]
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx <= 1e-300 * max(1.0, float(x @ x)):
        raise ValueError("abscissae are degenerate")
    slope = float(dx @ (y - y.mean())) / sxx
    return slope, float(y.mean() - slope * x.mean())


def fit_rms_residual(points, slope: float, intercept: float) -> float:
    xy = np.asarray(points, dtype=float)
    r = xy[:, 1] - (slope * xy[:, 0] + intercept)
    return float(np.sqrt(np.mean(r * r)))
