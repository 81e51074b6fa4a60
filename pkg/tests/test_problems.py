import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfolab.problems import (Kind, Sample, draw_raw, fourth_moment_operator, make_instance, population_loss,
                             sample, sample_batch, samples_from_raw, stochastic_gradient)


def s3(kappa=64.0, c=2.0, w_star=None):
    return make_instance(Kind.SECTION3_DISCRETE, sigma1=1.0, sigma2=math.sqrt(c / kappa), c=c, w_star=w_star)


def test_section3_kappa_and_kappa_tilde():
    inst = make_instance(Kind.SECTION3_DISCRETE, sigma1=1.0, sigma2=0.5, c=2.0)
    assert inst.kappa == pytest.approx(8.0)
    assert inst.kappa_tilde == pytest.approx(2.0)
    assert inst.condition_number == pytest.approx(4.0)
    np.testing.assert_allclose(inst.hessian, np.diag([1.0, 0.25]))


def test_section3_r_squared_matches_kappa():
    inst = s3(128.0)
    assert inst.r_squared / inst.lambda_min == pytest.approx(inst.kappa)


@pytest.mark.parametrize("kind,c", [(Kind.SECTION51_DISCRETE, 2.0), (Kind.SECTION51_GAUSSIAN, 3.0)])
def test_synthetic_laws_condition_number(kind, c):
    inst = make_instance(kind, kappa=256.0)
    assert inst.kappa == pytest.approx(256.0)
    assert inst.condition_number == pytest.approx(256.0)
    assert inst.kurtosis_c == c


def test_synthetic_long_step_convention():
    # R^2 / lambda_min: 2 kappa (discrete); tr(H)/lambda_min + 2 kappa = 3 kappa + 1 (Gaussian)
    d = make_instance(Kind.SECTION51_DISCRETE, kappa=64.0)
    g = make_instance(Kind.SECTION51_GAUSSIAN, kappa=64.0)
    assert d.r_squared / d.lambda_min == pytest.approx(128.0)
    assert g.r_squared / g.lambda_min == pytest.approx(193.0, rel=1e-12)


def test_invalid_instances():
    with pytest.raises(ValueError):
        make_instance(Kind.SECTION3_DISCRETE, sigma1=0.5, sigma2=1.0)
    with pytest.raises(ValueError):
        make_instance(Kind.SECTION3_DISCRETE, sigma1=1.0, sigma2=0.5, c=1.5)
    with pytest.raises(ValueError):
        make_instance(Kind.SECTION51_GAUSSIAN, kappa=0.5)
    with pytest.raises(ValueError):
        make_instance(Kind.CUSTOM_DIAGONAL, sigma=[1.0, 0.5, 0.2], c=2.0)
    with pytest.raises(ValueError):
        make_instance(Kind.SECTION3_DISCRETE, sigma1=1.0, sigma2=0.5, w_star=[1.0, 2.0, 3.0])


def test_instance_arrays_are_frozen_and_input_untouched():
    w = np.array([1.0, 0.0])
    inst = s3(w_star=w)
    assert w.flags.writeable
    with pytest.raises(ValueError):
        inst.w_star[0] = 2.0


def test_default_w_star_is_unit_and_deterministic():
    a, b = s3(), s3()
    np.testing.assert_array_equal(a.w_star, b.w_star)
    assert np.linalg.norm(a.w_star) == pytest.approx(1.0)


@pytest.mark.parametrize("kind", list(Kind))
def test_targets_are_realizable(kind):
    inst = {
        Kind.SECTION3_DISCRETE: lambda: s3(),
        Kind.SECTION51_DISCRETE: lambda: make_instance(kind, kappa=16.0),
        Kind.SECTION51_GAUSSIAN: lambda: make_instance(kind, kappa=16.0),
        Kind.CUSTOM_DIAGONAL: lambda: make_instance(kind, sigma=[1.0, 0.6, 0.3], c=4.0),
    }[kind]()
    a, b = sample_batch(inst, np.random.default_rng(1), (50,))
    np.testing.assert_allclose(b, a @ inst.w_star, rtol=0, atol=1e-15)
    # the gradient vanishes at w* for every sample
    g = stochastic_gradient(inst, np.tile(inst.w_star, (50, 1)), Sample(a, b))
    assert np.max(np.abs(g)) <= 1e-15


def test_section3_support_law():
    inst = s3(c=4.0, kappa=64.0)
    probs, pts = inst.support()
    assert probs.sum() == pytest.approx(1.0)
    # nonzero magnitude sqrt(c) sigma_i, probability d/(2c) per sign in total
    nz = np.abs(pts).sum(axis=1) > 0
    assert probs[nz].sum() == pytest.approx(2 * 2 / (2 * 4.0))


@pytest.mark.parametrize("kind", [Kind.SECTION3_DISCRETE, Kind.SECTION51_DISCRETE, Kind.SECTION51_GAUSSIAN])
def test_empirical_second_moment_matches_hessian(kind):
    inst = s3() if kind is Kind.SECTION3_DISCRETE else make_instance(kind, kappa=16.0)
    a, _ = sample_batch(inst, np.random.default_rng(7), (200_000,))
    emp = a.T @ a / a.shape[0]
    se = np.sqrt(np.var(a[:, :, None] * a[:, None, :], axis=0) / a.shape[0])
    assert np.all(np.abs(emp - inst.hessian) <= 5 * se + 1e-15)


@pytest.mark.parametrize("kind", [Kind.SECTION3_DISCRETE, Kind.SECTION51_DISCRETE, Kind.SECTION51_GAUSSIAN])
def test_exact_fourth_moments_match_monte_carlo(kind):
    inst = s3(16.0) if kind is Kind.SECTION3_DISCRETE else make_instance(kind, kappa=4.0)
    exact = fourth_moment_operator(inst).tensor
    a, _ = sample_batch(inst, np.random.default_rng(3), (400_000,))
    prod = np.einsum("ni,nj,nk,nl->nijkl", a, a, a, a)
    mean = prod.mean(axis=0)
    se = prod.std(axis=0) / math.sqrt(a.shape[0])
    assert np.all(np.abs(mean - exact) <= 5 * se + 1e-12)


def test_gaussian_isserlis_diagonal():
    inst = make_instance(Kind.SECTION51_GAUSSIAN, kappa=4.0)
    t = fourth_moment_operator(inst).tensor
    h = inst.hessian_diag
    assert t[0, 0, 0, 0] == pytest.approx(3 * h[0] ** 2)
    assert t[0, 0, 1, 1] == pytest.approx(h[0] * h[1])
    assert t[0, 1, 0, 1] == pytest.approx(h[0] * h[1])


def test_empirical_moments_are_seeded():
    inst = make_instance(Kind.SECTION51_GAUSSIAN, kappa=16.0)
    m1 = fourth_moment_operator(inst, "empirical", 1000, np.random.default_rng(5))
    m2 = fourth_moment_operator(inst, "empirical", 1000, np.random.default_rng(5))
    np.testing.assert_array_equal(m1.tensor, m2.tensor)
    with pytest.raises(ValueError):
        fourth_moment_operator(inst, "guess")


def test_moment_apply_matches_expectation():
    inst = s3(16.0)
    m = np.array([[1.0, 0.3], [0.3, -0.5]])
    probs, pts = inst.support()
    direct = sum(p * (a @ m @ a) * np.outer(a, a) for p, a in zip(probs, pts))
    np.testing.assert_allclose(fourth_moment_operator(inst).apply(m), direct, atol=1e-14)


def test_population_loss_values():
    inst = s3(w_star=[1.0, 0.0])
    assert population_loss(inst, [1.0, 0.0]) == 0.0
    h = inst.hessian_diag
    assert population_loss(inst, [0.0, 0.0]) == pytest.approx(0.5 * h[0])
    out = population_loss(inst, np.zeros((3, 2)))
    assert out.shape == (3,)


def test_gradient_shape_check():
    inst = s3()
    with pytest.raises(ValueError):
        stochastic_gradient(inst, np.zeros(3), Sample(np.zeros(2), 0.0))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_chunked_draws_equal_one_block(seed, split):
    inst = make_instance(Kind.SECTION51_GAUSSIAN, kappa=8.0)
    whole = draw_raw(inst, np.random.default_rng(seed), 40)
    rng = np.random.default_rng(seed)
    parts = np.concatenate([draw_raw(inst, rng, split), draw_raw(inst, rng, 40 - split)])
    np.testing.assert_array_equal(whole, parts)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_sample_equals_first_of_batch(seed):
    inst = s3()
    one = sample(inst, np.random.default_rng(seed))
    a, b = samples_from_raw(inst, draw_raw(inst, np.random.default_rng(seed), 3))
    np.testing.assert_array_equal(one.a, a[0])
    assert one.b == b[0]


@settings(max_examples=100)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_gradient_is_unbiased_direction(x, y, seed):
    # E[grad] = H (w - w*): check on the exact finite support
    inst = s3(16.0)
    w = np.array([x, y])
    probs, pts = inst.support()
    b = pts @ inst.w_star
    g = stochastic_gradient(inst, np.tile(w, (len(probs), 1)), Sample(pts, b))
    np.testing.assert_allclose(probs @ g, inst.hessian @ (w - inst.w_star), atol=1e-12)


def test_discrete_law_as_written_option():
    lit = make_instance(Kind.SECTION51_DISCRETE, kappa=64.0, discrete_e2="as_written")
    np.testing.assert_allclose(lit.hessian_diag, [0.5, 0.5 * (2 / 64.0) ** 2])
    assert lit.kappa == pytest.approx(64.0**2 / 4)
    default = make_instance(Kind.SECTION51_DISCRETE, kappa=64.0)
    assert default.kappa == pytest.approx(64.0)
    # the option only touches the discrete law
    g = make_instance(Kind.SECTION51_GAUSSIAN, kappa=64.0, discrete_e2="as_written")
    assert g.kappa == pytest.approx(64.0)
    with pytest.raises(ValueError):
        make_instance(Kind.SECTION51_DISCRETE, kappa=64.0, discrete_e2="other")
