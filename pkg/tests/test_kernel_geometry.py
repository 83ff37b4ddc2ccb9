import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dictionary import build_dictionary, phi_cov
from kernel_geometry import (
    LimitKernelSpec,
    dist,
    eps_far,
    h_fn,
    kernel,
    kernel_cov,
    metric_g,
    model_for,
    nu_near,
    proximity,
    sup_correlation,
)
from measure_model import DiscreteMeasure, DomainInterval
from utils_offgrid import PreconditionError

SIGMA = 0.03


def test_diagonal_identities(any_dict):
    model = model_for(any_dict)
    th = np.linspace(any_dict.domain.lo, any_dict.domain.hi, 50)
    assert np.max(np.abs(np.diag(kernel(model, th, th)) - 1.0)) <= 1e-10
    assert np.max(np.abs(np.diag(kernel_cov(model, 1, 0, th, th)))) <= 1e-6
    assert np.max(np.abs(np.diag(kernel_cov(model, 2, 0, th, th)) + 1.0)) <= 1e-6
    assert np.max(np.abs(np.diag(kernel_cov(model, 2, 1, th, th)))) <= 1e-5
    assert_allclose(np.diag(kernel_cov(model, 1, 1, th, th)), 1.0, atol=1e-8)


def test_recursion_path_matches_feature_path(gauss_dict, gauss_model, rng):
    worst = 0.0
    for _ in range(200):
        i, j = (int(x) for x in rng.integers(0, 4, size=2))
        a, b = rng.uniform(0.2, 0.8, size=2)
        rec = kernel_cov(gauss_model, i, j, a, b)
        feat = float(phi_cov(gauss_dict, a, i) @ phi_cov(gauss_dict, b, j))
        worst = max(worst, abs(rec - feat))
    assert worst <= 1e-5


def test_kernel_cov_symmetry(expo_dict):
    model = model_for(expo_dict)
    for i in range(4):
        for j in range(4):
            assert kernel_cov(model, i, j, 0.9, 1.7) == pytest.approx(kernel_cov(model, j, i, 1.7, 0.9), abs=1e-10)
    with pytest.raises(PreconditionError):
        kernel_cov(model, 4, 0, 1.0, 1.0)


def test_gaussian_kernel_matches_continuum(gauss_model):
    for a, b in [(0.4, 0.45), (0.5, 0.52), (0.3, 0.6)]:
        assert kernel(gauss_model, a, b) == pytest.approx(math.exp(-((a - b) ** 2) / (4 * SIGMA ** 2)), abs=1e-3)


def test_fourier_kernel_is_dirichlet():
    d = build_dictionary({"kind": "fourier_lowpass", "domain": [0, 1], "params": {"fc": 2}})
    x = 0.2
    expected = math.sin(5 * math.pi * x) / (5 * math.sin(math.pi * x))
    assert kernel(model_for(d), 0.1, 0.1 + x) == pytest.approx(expected, abs=1e-12)


def test_gaussian_distance_and_additivity(gauss_model):
    assert dist(gauss_model, 0.4, 0.4) == 0.0
    assert dist(gauss_model, 0.35, 0.55) == pytest.approx(0.2 / (math.sqrt(2) * SIGMA), rel=1e-6)
    a, b, c = 0.25, 0.41, 0.77
    assert dist(gauss_model, a, c) == pytest.approx(dist(gauss_model, a, b) + dist(gauss_model, b, c), abs=1e-9)
    assert gauss_model.diameter == pytest.approx(0.6 / (math.sqrt(2) * SIGMA), rel=1e-6)
    assert_allclose(metric_g(gauss_model, np.array([0.3, 0.5])), 1.0 / (2 * SIGMA ** 2), rtol=1e-8)


def test_h_fn_matches_kernel_cov_and_gaussian_limit(gauss_model, expo_dict):
    th = np.array([0.3, 0.5, 0.7])
    assert_allclose(h_fn(gauss_model, th), 15.0, rtol=1e-6)
    model = model_for(expo_dict)
    for t in (0.8, 2.2):
        assert h_fn(model, t) == pytest.approx(kernel_cov(model, 3, 3, t, t), rel=1e-10)
        assert h_fn(model, t) >= 0.0


def test_gaussian_limit_constants():
    lim = LimitKernelSpec.gaussian(SIGMA)
    assert lim.L[(0, 0)] == pytest.approx(1.0, abs=1e-9)
    assert lim.L[(1, 0)] == pytest.approx(math.exp(-0.5), abs=1e-9)
    assert lim.L[(2, 0)] == pytest.approx(1.0, abs=1e-9)
    assert lim.L[(2, 2)] == pytest.approx(3.0, abs=1e-9)
    assert lim.eps(1.0) == pytest.approx(1.0 - math.exp(-0.5))
    assert lim.nu(0.5) == pytest.approx(0.75 * math.exp(-0.125))
    with pytest.raises(PreconditionError):
        LimitKernelSpec.gaussian(0.0)


def test_proximity_to_gaussian_limit(gauss_model):
    rep = proximity(gauss_model, LimitKernelSpec.gaussian(SIGMA))
    assert rep.V_T <= 1e-4
    assert rep.rho_T == pytest.approx(1.0, abs=1e-6)
    assert rep.feasible
    assert rep.grid_step <= 0.02

    wrong = proximity(gauss_model, LimitKernelSpec.gaussian(2 * SIGMA))
    assert wrong.V_T > rep.V_T
    assert wrong.rho_T == pytest.approx(2.0, rel=1e-6)

    with pytest.raises(PreconditionError):
        proximity(gauss_model, LimitKernelSpec.gaussian(SIGMA, DomainInterval(0.3, 0.7)))


def test_proximity_to_own_tabulated_kernel(expo_dict):
    model = model_for(expo_dict)
    rep = proximity(model, LimitKernelSpec.from_model(model, grid_step=0.05), grid_step=0.05)
    assert rep.V_T <= 1e-8
    assert rep.rho_T == 1.0


def test_metric_equivalence_with_limit(gauss_model, rng):
    lim = LimitKernelSpec.gaussian(SIGMA)
    rho = proximity(gauss_model, lim).rho_T
    for a, b in rng.uniform(0.2, 0.8, size=(10, 2)):
        d_T, d_inf = dist(gauss_model, a, b), lim.dist(a, b)
        assert d_inf / rho - 1e-7 <= d_T <= rho * d_inf + 1e-7


def test_eps_far_and_nu_near_gaussian(gauss_model):
    far = eps_far(gauss_model, 1.0)
    assert not far.empty
    assert far.value == pytest.approx(1.0 - math.exp(-0.5), abs=1e-5)
    assert nu_near(gauss_model, 0.5).value == pytest.approx(0.75 * math.exp(-0.125), abs=1e-5)
    assert nu_near(gauss_model, 0.0).value == pytest.approx(1.0, abs=1e-8)

    none = eps_far(gauss_model, 10 * gauss_model.diameter)
    assert none.empty
    assert none.value == 1.0
    with pytest.raises(PreconditionError):
        eps_far(gauss_model, 0.0)


def test_metric_grid_is_uniform_in_arclength(gauss_model):
    grid = gauss_model.metric_grid(0.05)
    assert grid.step <= 0.05
    assert grid.theta[0] == 0.2 and grid.theta[-1] == 0.8
    assert_allclose(np.diff(grid.arclength), grid.step, rtol=1e-9)
    assert_allclose(gauss_model.arclength(grid.theta), grid.arclength, atol=1e-7)
    assert gauss_model.metric_grid(0.05) is grid
    with pytest.raises(PreconditionError):
        gauss_model.metric_grid(0.0)


def test_sup_correlation_of_single_feature(gauss_dict, gauss_model):
    theta0 = 0.4321
    R = gauss_dict.normalized(np.array([theta0]))
    value, arg = sup_correlation(gauss_model, R, DiscreteMeasure.uniform(1), 2.0, 0)
    assert value == pytest.approx(1.0, abs=1e-8)
    assert arg == pytest.approx(theta0, abs=1e-4)
    zero, _ = sup_correlation(gauss_model, np.zeros((1, gauss_dict.T)), DiscreteMeasure.uniform(1), 2.0, 0)
    assert zero == 0.0


def test_covariant_derivatives_commute(any_dict, rng):
    # K^[i+1,j+1] via D̃ in θ na D̃ in θ' moet gelijk zijn aan de omgekeerde volgorde
    model = model_for(any_dict)
    lo, hi = any_dict.domain.lo, any_dict.domain.hi
    h = 1e-6 * (hi - lo)

    def s(t):
        return 1.0 / math.sqrt(metric_g(model, t))

    for _ in range(10):
        a = rng.uniform(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo))
        b = float(np.clip(a + rng.uniform(-0.1, 0.1) * (hi - lo), lo + 2 * h, hi - 2 * h))
        for i, j in [(0, 0), (1, 0), (0, 1), (1, 1)]:
            direct = kernel_cov(model, i + 1, j + 1, a, b)
            theta_first = s(a) * (kernel_cov(model, i, j + 1, a + h, b) - kernel_cov(model, i, j + 1, a - h, b)) / (2 * h)
            theta_p_first = s(b) * (kernel_cov(model, i + 1, j, a, b + h) - kernel_cov(model, i + 1, j, a, b - h)) / (2 * h)
            assert theta_first == pytest.approx(theta_p_first, abs=1e-5)
            assert direct == pytest.approx(theta_first, abs=1e-5)


def test_proximity_improves_with_sampling():
    lim = LimitKernelSpec.gaussian(SIGMA)
    V = {}
    for T in (16, 1024):
        d = build_dictionary({"kind": "gaussian_location", "T": T, "domain": [0.2, 0.8],
                              "params": {"sigma": SIGMA, "t_range": [0.0, 1.0]}})
        V[T] = proximity(model_for(d), lim).V_T
    assert V[1024] <= 0.05
    assert V[16] > V[1024]
