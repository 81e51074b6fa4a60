import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from sfolab.acceptance import exact_char_poly_at, section3_instance, small_momentum_samples
from sfolab.harness import experiment_w_star, simulate, stream_seed
from sfolab.numerics import det_cofactor, max_abs_eigenvalue, poly_roots
from sfolab.optimizers import HyperParams, Method, asgd_hyperparams_from_jain
from sfolab.problems import Kind, make_instance
from sfolab.spectral import (BOTTOM_CONSTANT, HbCoordParams, Verdict, characteristic_poly, covariance_operator,
                             error_update_coefficients, eval_D_at_one, eval_G, hb_expected_operator,
                             hb_stability_sweep, hb_stability_verdict, predicted_loss_trace, predicted_rate,
                             r_matrix, r_matrix_determinant, rate_from_radius, top_step_boundary)

alphas = st.floats(0.01, 0.99)
xs = st.floats(0.01, 3.0)
cs = st.floats(2.0, 50.0)


def test_operator_entries_at_reference_point():
    m = hb_expected_operator(HbCoordParams(0.3, 0.5, 2.0)).matrix
    t = 0.8
    np.testing.assert_allclose(m[0], [t * t + 0.25, -0.3 * t, -0.3 * t, 0.09])
    np.testing.assert_allclose(m[3], [1, 0, 0, 0])


def test_det_reference_value():
    assert np.linalg.det(hb_expected_operator(HbCoordParams(0.3, 0.5, 2.0)).matrix) == pytest.approx(0.0081)


def test_char_poly_reference_coefficients():
    # t = 0.8, t^2 = 0.64, (c-1) x^2 = 0.25, expanded by hand
    np.testing.assert_allclose(characteristic_poly(HbCoordParams(0.3, 0.5, 2.0)),
                               [1, -0.89, 0.204, -0.0351, 0.0081], atol=1e-15)


def test_zero_momentum_degenerates_to_sgd_factor():
    p = HbCoordParams(0.0, 0.4, 3.0)
    coeffs = characteristic_poly(p)
    assert coeffs[3] == 0 and coeffs[4] == 0 and coeffs[2] == 0
    eig = np.sort(np.abs(np.linalg.eigvals(hb_expected_operator(p).matrix)))
    assert eig[-1] == pytest.approx((1 - 0.4) ** 2 + 2 * 0.4**2)
    np.testing.assert_allclose(eig[:-1], 0, atol=1e-12)


def test_parameter_validation():
    with pytest.raises(ValueError):
        hb_expected_operator(HbCoordParams(1.2, 0.5, 2.0))
    with pytest.raises(ValueError):
        hb_expected_operator(HbCoordParams(0.5, 0.0, 2.0))


def test_monte_carlo_kronecker_oracle():
    # per-coordinate HB error map [[1 + alpha - delta s, -alpha], [1, 0]] with E s = sigma^2, E s^2 = c sigma^4
    alpha, x, c = 0.4, 0.3, 2.5
    rng = np.random.default_rng(2024)
    n = 1_000_000
    s = np.where(rng.random(n) < 1 / c, c, 0.0)  # sigma = 1, so x = delta
    a11 = 1 + alpha - x * s
    # rows of A (x) A as functions of a11; only a11 is random
    rows = np.stack([a11 * a11, -alpha * a11, -alpha * a11, np.full(n, alpha**2),
                     a11, np.zeros(n), np.full(n, -alpha), np.zeros(n),
                     a11, np.full(n, -alpha), np.zeros(n), np.zeros(n),
                     np.ones(n), np.zeros(n), np.zeros(n), np.zeros(n)], axis=1)
    mean = rows.mean(axis=0).reshape(4, 4)
    se = (rows.std(axis=0) / math.sqrt(n)).reshape(4, 4)
    closed = hb_expected_operator(HbCoordParams(alpha, x, c)).matrix
    assert np.all(np.abs(mean - closed) <= 5 * se + 1e-10)


@settings(max_examples=200)
@given(alphas, xs, cs)
def test_det_is_alpha_to_the_fourth(a, x, c):
    d = np.linalg.det(hb_expected_operator(HbCoordParams(a, x, c)).matrix)
    assert abs(d - a**4) <= 1e-10 * a**4 + 1e-15


@settings(max_examples=200)
@given(alphas, xs, cs)
def test_spectral_radius_at_least_alpha(a, x, c):
    assert max_abs_eigenvalue(hb_expected_operator(HbCoordParams(a, x, c)).matrix) >= a * (1 - 1e-10)


@settings(max_examples=100)
@given(alphas, xs, cs)
def test_antisymmetric_eigenvector(a, x, c):
    v = np.array([0.0, -1.0, 1.0, 0.0]) / math.sqrt(2)
    m = hb_expected_operator(HbCoordParams(a, x, c)).matrix
    np.testing.assert_allclose(m @ v, a * v, atol=1e-12)


@settings(max_examples=100)
@given(alphas, st.floats(0.01, 2.0), st.floats(2.0, 10.0))
def test_char_poly_roots_equal_spectrum(a, x, c):
    p = HbCoordParams(a, x, c)
    roots = poly_roots(characteristic_poly(p))
    eig = np.linalg.eigvals(hb_expected_operator(p).matrix)
    for e in eig:
        assert np.min(np.abs(roots - e)) <= 1e-7


def test_d_at_one_boundary_root():
    assert top_step_boundary(0.5, 2.0) == pytest.approx(0.75)
    assert eval_D_at_one(HbCoordParams(0.5, 0.75, 2.0)) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=100)
@given(alphas, xs, cs)
def test_d_at_one_closed_form_equals_polynomial(a, x, c):
    p = HbCoordParams(a, x, c)
    direct = float(np.polyval(characteristic_poly(p), 1.0))
    assert eval_D_at_one(p) == pytest.approx(direct, abs=1e-12 * max(1.0, np.abs(characteristic_poly(p)).sum()))


@settings(max_examples=500)
@given(st.floats(0.0, 0.999), st.floats(1e-3, 4.0), cs)
def test_d_at_one_sign_matches_boundary(a, x, c):
    b = top_step_boundary(a, c)
    assume(abs(x - b) > 1e-9 * max(1.0, b))
    assert (eval_D_at_one(HbCoordParams(a, x, c)) <= 0) == (x >= b)


@settings(max_examples=100)
@given(alphas, st.floats(2.0, 50.0), st.floats(100.0, 1e6), st.floats(0.01, 1.0), st.floats(0.0, 50.0))
def test_eval_G_equals_exact_substitution(a, c, kappa, y, ell):
    exact = exact_char_poly_at(a, c, kappa, y, ell)
    assert eval_G(a, c, kappa, y, ell) == pytest.approx(exact, rel=1e-9, abs=1e-300)


@settings(max_examples=100)
@given(alphas, st.floats(2.0, 50.0), st.floats(100.0, 1e6), st.floats(0.01, 1.0))
def test_G_at_zero_is_bottom_D_at_one(a, c, kappa, y):
    bottom = eval_D_at_one(HbCoordParams(a, c * y / kappa, c))
    assert eval_G(a, c, kappa, y, 0.0) == pytest.approx(bottom, rel=1e-9)


def test_small_momentum_lemma_holds_on_admissible_samples():
    rng = np.random.default_rng(17)
    for a, c, kappa, y, ell in small_momentum_samples(rng, 1000):
        assert eval_G(a, c, kappa, y, ell) <= 0


def test_r_matrix_determinant_zero_without_momentum():
    assert r_matrix_determinant(HbCoordParams(0.0, 0.5, 3.0)) == 0.0


@settings(max_examples=50)
@given(alphas, xs, st.floats(2.5, 10.0))
def test_r_matrix_closed_form_matches_cofactor(a, x, c):
    p = HbCoordParams(a, x, c)
    direct = det_cofactor(r_matrix(p))
    assert r_matrix_determinant(p) == pytest.approx(direct, rel=1e-9, abs=1e-14)


def test_r_matrix_nonsingular_in_convergent_regime():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        a, c = rng.uniform(0.01, 0.99), rng.uniform(8.0, 3000.0)
        x = rng.uniform(0, top_step_boundary(a, c))
        assert r_matrix_determinant(HbCoordParams(a, x, c)) != 0


def test_verdict_requires_section3():
    inst = make_instance(Kind.SECTION51_GAUSSIAN, kappa=16.0)
    with pytest.raises(ValueError):
        hb_stability_verdict(0.5, 0.1, inst)


def test_verdict_divergent_above_boundary():
    inst = section3_instance(64.0)
    a = 0.5
    delta = 1.01 * top_step_boundary(a, 2.0)  # sigma1 = 1
    v = hb_stability_verdict(a, delta, inst)
    assert v.classification is Verdict.DIVERGENT_TOP
    assert v.lambda_max >= 1
    assert v.d_at_one_top < 0


@pytest.mark.parametrize("kappa", [2.0**10, 2.0**14])
def test_large_momentum_radius_at_least_alpha(kappa):
    inst = section3_instance(kappa)
    a = 1 - 450 / kappa
    for delta in (1e-4, 1e-2, 0.3):
        v = hb_stability_verdict(a, delta, inst)
        assert max(v.lambda_max_top, v.lambda_max_bottom) >= a * (1 - 1e-12)


@pytest.mark.parametrize("kappa", [16.0, 64.0, 256.0])
def test_sweep_never_beats_bottom_bound(kappa):
    inst = section3_instance(kappa)
    deltas = np.geomspace(1e-4, 2 / inst.sigma[1] ** 2, 40)
    verdicts = hb_stability_sweep(inst, deltas, np.linspace(0, 1, 40))
    bound = 1 - BOTTOM_CONSTANT / kappa
    assert min(max(v.lambda_max_top, v.lambda_max_bottom) for v in verdicts) >= bound


def test_sweep_matches_single_verdicts():
    inst = section3_instance(64.0)
    deltas, al = [0.05, 0.8, 3.0], [0.0, 0.6]
    sweep = hb_stability_sweep(inst, deltas, al)
    single = [hb_stability_verdict(a, d, inst) for d in deltas for a in al]
    for s, t in zip(sweep, single):
        assert s.classification == t.classification
        assert s.lambda_max == pytest.approx(t.lambda_max, rel=1e-12)


def test_sgd_operator_identity_at_zero_step():
    inst = section3_instance(16.0)
    op = covariance_operator(Method.SGD, HyperParams(delta=0.0), inst)
    np.testing.assert_allclose(op.matrix, np.eye(4))


def test_hb_operator_decouples_into_coordinate_blocks():
    inst = section3_instance(64.0)
    a, delta = 0.6, 0.2
    big = covariance_operator(Method.HB, HyperParams(delta=delta, alpha=a), inst).matrix
    n = 4  # stacked state (e1, e2, prev1, prev2)
    for j, s in enumerate(inst.sigma):
        pairs = [(j, j), (j, j + 2), (j + 2, j), (j + 2, j + 2)]
        idx = [r + n * c for r, c in pairs]
        block = big[np.ix_(idx, idx)]
        np.testing.assert_allclose(block, hb_expected_operator(HbCoordParams(a, delta * s**2, 2.0)).matrix,
                                   atol=1e-14)
        rest = [k for k in range(n * n) if k not in idx]
        np.testing.assert_allclose(big[np.ix_(idx, rest)], 0, atol=1e-15)


def test_sgd_operator_equals_general_construction():
    # the d^2 SGD form and E[A (x) A] with K = 1, L = -delta agree
    inst = make_instance(Kind.SECTION51_GAUSSIAN, kappa=8.0)
    hp = HyperParams(delta=0.2)
    k, lin = error_update_coefficients(Method.SGD, hp)
    from sfolab.problems import fourth_moment_operator
    from sfolab.spectral import _operator_from_coefficients
    general = _operator_from_coefficients(k, lin, fourth_moment_operator(inst))
    np.testing.assert_allclose(covariance_operator(Method.SGD, hp, inst).matrix, general, atol=1e-14)


def test_predicted_rate_diagonal_and_divergent():
    assert predicted_rate(np.diag([0.99, 0.5])) == pytest.approx(-math.log(0.99))
    assert predicted_rate(np.diag([1.0, 0.5])) is None
    assert rate_from_radius(1 - 1e-13) is None


@pytest.mark.parametrize("k", range(4, 11))
def test_sgd_inverse_rate_tracks_kappa(k):
    kappa = 2.0**k
    inst = section3_instance(kappa)
    rate = predicted_rate(covariance_operator(Method.SGD, HyperParams(delta=0.5), inst))
    assert kappa / 2 <= 1 / rate <= 2 * kappa


@pytest.mark.parametrize("k", range(4, 11))
def test_asgd_contrast_bound(k):
    kappa = 2.0**k
    inst = section3_instance(kappa)
    hp = asgd_hyperparams_from_jain(inst.kappa, inst.kappa_tilde, inst.lambda_min, inst.r_squared)
    lam = max_abs_eigenvalue(covariance_operator(Method.ASGD, hp, inst).matrix)
    assert lam <= 1 - 1 / (10 * math.sqrt(kappa * inst.kappa_tilde))


def test_empirical_moments_operator_close_to_exact():
    inst = make_instance(Kind.SECTION51_GAUSSIAN, kappa=16.0)
    hp = HyperParams(delta=0.2, alpha=0.5)
    exact = max_abs_eigenvalue(covariance_operator(Method.HB, hp, inst).matrix)
    emp = max_abs_eigenvalue(covariance_operator(Method.HB, hp, inst, "empirical", n_samples=100_000,
                                                 rng=np.random.default_rng(1)).matrix)
    assert emp == pytest.approx(exact, rel=0.02)


def test_unsupported_method_raises():
    with pytest.raises(ValueError):
        error_update_coefficients(Method.ASGD_JAIN, HyperParams(delta=0.1))


def test_predicted_trace_matches_monte_carlo_for_sgd():
    inst = section3_instance(64.0, w_star=experiment_w_star(0))
    hp = HyperParams(delta=0.5)
    w0 = np.zeros(2)
    pred = predicted_loss_trace(covariance_operator(Method.SGD, hp, inst), inst, w0, [100, 10])
    n = 10_000
    res = simulate(inst, Method.SGD, [hp] * n, [stream_seed(1, i) for i in range(n)], 100,
                   record_every=1, keep_trace=True)
    for t, p in zip([100, 10], pred):
        col = res.losses[:, t]
        assert abs(col.mean() - p) <= 5 * col.std(ddof=1) / math.sqrt(n)
