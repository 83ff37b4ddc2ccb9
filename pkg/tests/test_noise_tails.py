import math

import numpy as np
import pytest
from scipy.special import gammaln

from certificates import CertificateConstants
from dictionary import build_dictionary
from kernel_geometry import model_for
from measure_model import DiscreteMeasure
from noise_tails import (
    F_n,
    NoiseModel,
    chi2_bound,
    chi2_process_sup,
    event_constants,
    f_tail,
    failure_prob_p1,
    failure_prob_p2,
    g_tail,
    implied_event_constant,
    kappa_p1,
    kappa_p2,
    reference_rate,
    sample_noise,
    sup_stat,
    suprema,
)
from utils_offgrid import PreconditionError


@pytest.fixture
def unit_constants():
    return CertificateConstants(
        C_N=1.0, C_N_prime=1.0, C_F=1.0, C_B=2.0, c_N=1.0, c_F=1.0, c_B=2.0,
        r=0.5, rho=1.0, u_inf=0.01, u_inf_prime=0.01,
    )


# -------------------- ruis --------------------
def test_noise_is_deterministic_per_replicate():
    model = NoiseModel(sigma=0.5, delta_T=2.0, seed=11)
    a = sample_noise(model, 3, 50, replicate=4)
    assert np.array_equal(a, sample_noise(model, 3, 50, replicate=4))
    assert not np.array_equal(a, sample_noise(model, 3, 50, replicate=5))
    assert np.all(sample_noise(NoiseModel(0.0, 1.0), 2, 10) == 0.0)


def test_noise_variance():
    model = NoiseModel(sigma=0.5, delta_T=2.0, seed=2)
    W = sample_noise(model, 4, 5000)
    assert model.variance == pytest.approx(0.5)
    assert W.var() == pytest.approx(0.5, rel=0.05)
    with pytest.raises(PreconditionError):
        NoiseModel(sigma=-1.0, delta_T=1.0)
    with pytest.raises(PreconditionError):
        NoiseModel(sigma=1.0, delta_T=0.0)
    with pytest.raises(PreconditionError):
        sample_noise(model, 0, 10)


# -------------------- staarten --------------------
def test_tail_functions():
    assert f_tail(1, 2.0) == pytest.approx(math.exp(-2.0 + 2.0 * math.sqrt(2.0)))
    assert g_tail(2, 2.0) == pytest.approx(2.0 * math.exp(-1.0))
    assert g_tail(3, 7.0) == pytest.approx(math.exp(1.5 * math.log(7.0) - 3.5 - gammaln(1.5)))
    with pytest.raises(PreconditionError):
        f_tail(1, 0.0)
    with pytest.raises(PreconditionError):
        g_tail(1, -1.0)


def test_chi2_bound_examples():
    expected = f_tail(1, 2.0) + 4.0 / math.sqrt(2.0) * g_tail(1, 2.0)
    assert chi2_bound(2.0, 1, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx(expected, rel=1e-12)
    assert chi2_bound(9.0, 3, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0) == pytest.approx(f_tail(3, 9.0), rel=1e-12)
    with pytest.raises(PreconditionError):
        chi2_bound(1.9, 1, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(PreconditionError):
        chi2_bound(5.0, 1, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0)


def test_failure_probabilities():
    assert F_n(2) == pytest.approx(math.exp(-2.0))
    values = [F_n(n) for n in (2, 4, 8, 16)]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert failure_prob_p2(100, 4, 4.24) == pytest.approx(0.01 + 4.24 * 4.0 * math.exp(-4.0) / 10.0, rel=1e-9)
    assert failure_prob_p2(100, 4, 4.24) < 0.05
    assert failure_prob_p2(1e12, 4, 4.24) < 1e-5
    assert failure_prob_p1(100, 4, 10.0) == pytest.approx(3.0 * 4 * 10.0 / (100 * math.sqrt(math.log(100))))
    assert failure_prob_p1(100, 4, 0.0) == pytest.approx(3.0 * 4 / 100)
    with pytest.raises(PreconditionError):
        failure_prob_p2(1.0, 4, 1.0)


# -------------------- constanten en κ --------------------
def test_event_constants_arithmetic(unit_constants):
    tc = event_constants(unit_constants, 0.5, 1.0)
    assert tc.C_cal == pytest.approx(0.2)
    assert tc.C_prime == 1.0
    assert tc.C_big == pytest.approx(28.0)
    assert tc.C0 == pytest.approx(6.0 * tc.C_big)
    assert tc.C1 == pytest.approx(math.sqrt(2.0) / 0.2)
    assert tc.C3 == pytest.approx(2.0 / 0.2)
    assert tc.C4 == pytest.approx(3.0)
    with pytest.raises(PreconditionError):
        event_constants(unit_constants, 0.0, 1.0)
    with pytest.raises(PreconditionError):
        event_constants(unit_constants, 0.5, 1.0, C_cal=-1.0)


@pytest.mark.parametrize("p", [1, 2])
def test_implied_constant_reproduces_prefactor(unit_constants, p):
    L22 = 3.0
    C_cal = implied_event_constant(p, 2.5, L22)
    tc = event_constants(unit_constants, L22, 15.0, C_cal=C_cal)
    assert (tc.C1 if p == 2 else tc.C3) == pytest.approx(2.5)
    with pytest.raises(PreconditionError):
        implied_event_constant(p, 0.0, L22)


def test_event_threshold_does_not_depend_on_prefactor():
    L22, args = 3.0, (100.0, 4, 0.3, 1.0, 1.0, 4.0)
    thresholds = []
    for k in (0.5, 1.0, 4.0):
        C_cal = implied_event_constant(2, k, L22)
        thresholds.append(C_cal * kappa_p2(*args, C1=k))
    assert thresholds == pytest.approx([thresholds[0]] * 3)


def test_kappa_p2():
    n = 3
    assert kappa_p2(math.exp(3 * n), n, 1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx(3.0 * math.sqrt(n))
    assert kappa_p2(math.exp(n), n, 1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx((1 + math.sqrt(2)) * math.sqrt(n))
    assert kappa_p2(1.0 + 1e-12, 4, 0.5, 2.0, 1.0, 4.0, 1.0) == pytest.approx(2.0 * 0.5 * math.sqrt(8.0) / 4.0, rel=1e-9)
    with pytest.raises(PreconditionError):
        kappa_p2(1.0, 4, 1.0, 1.0, 1.0, 1.0, 1.0)


def test_kappa_p1():
    assert kappa_p1(math.e, 0.5, 4.0, 2.0, 3.0) == pytest.approx(3.0 * 0.5 * 2.0 / 2.0)
    assert kappa_p1(100.0, 0.0, 1.0, 1.0, 1.0) == 0.0
    assert kappa_p1(100.0, 1.0, 4.0, 1.0, 1.0) == pytest.approx(2.0 * kappa_p1(100.0, 1.0, 1.0, 1.0, 1.0))


def test_reference_rate():
    assert reference_rate(2, 0.5, 1.0, 2, 4, math.e ** 4) == pytest.approx(0.25 * 2 * 2.0)
    assert reference_rate(1, 0.5, 1.0, 2, 4, math.e) == pytest.approx(0.5)


# -------------------- suprema --------------------
def test_sup_stat_and_chi2_process_agree(gauss_dict, rng):
    m = DiscreteMeasure.from_weights([1.0, 0.5, 2.0])
    W = rng.standard_normal((3, gauss_dict.T))
    M0 = sup_stat(W, gauss_dict, m, 0, 2.0)
    assert M0 ** 2 == pytest.approx(chi2_process_sup(W, gauss_dict, m), rel=1e-8)
    M = suprema(W, gauss_dict, m, 2.0, 0.02)
    assert M[0] == pytest.approx(M0)
    assert all(v > 0 for v in M)
    with pytest.raises(PreconditionError):
        sup_stat(W, gauss_dict, m, 3, 2.0)


def test_sup_stat_of_single_feature(gauss_dict):
    W = gauss_dict.normalized(np.array([0.5]))
    assert sup_stat(W, gauss_dict, DiscreteMeasure.uniform(1), 0, 2.0) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.slow
def test_chi2_tail_is_dominated_by_bound():
    d = build_dictionary({"kind": "gaussian_location", "T": 64, "domain": [0.3, 0.7],
                          "params": {"sigma": 0.05, "t_range": [0.0, 1.0]}})
    model = model_for(d)
    m = DiscreteMeasure.uniform(3)
    F = model.features(model.metric_grid(0.005).theta, 0)
    reps = 10_000
    rng = np.random.default_rng(99)
    sups = np.empty(reps)
    for start in range(0, reps, 500):
        W = rng.standard_normal((500, 3, d.T))
        X = W @ F.T
        sups[start:start + 500] = np.max(np.einsum("z,rzg->rg", m.weights, X * X), axis=1)
    for u in np.linspace(6.0, 30.0, 10):
        p_hat = float(np.mean(sups > u))
        se = math.sqrt(p_hat * (1.0 - p_hat) / reps)
        assert p_hat <= chi2_bound(u, 3, 1.0, 1.0, 1.0, 1.0, 1.0, model.diameter) + 3.0 * se
