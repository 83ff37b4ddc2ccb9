import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dictionary import (
    FourierLowpass,
    GaussianLocation,
    Reparametrized,
    build_dictionary,
    exp_warp,
    normalized_feature,
    phi_cov,
)
from kernel_geometry import model_for
from measure_model import DomainInterval
from utils_offgrid import PreconditionError, ZeroFeatureError


def _interior(d, k=7):
    return np.linspace(d.domain.lo, d.domain.hi, k + 2)[1:-1]


def test_normalized_features_have_unit_norm(any_dict):
    th = _interior(any_dict, 25)
    Phi = any_dict.normalized(th)
    assert_allclose(np.linalg.norm(Phi, axis=1), 1.0, atol=1e-13)
    assert normalized_feature(any_dict, th[3]).shape == (any_dict.T,)


def test_raw_jet_matches_finite_differences(any_dict):
    h = 1e-5
    for th in _interior(any_dict, 5):
        fd1 = (any_dict.eval(th + h) - any_dict.eval(th - h)) / (2 * h)
        fd2 = (any_dict.deriv(th + h, 1) - any_dict.deriv(th - h, 1)) / (2 * h)
        fd3 = (any_dict.deriv(th + h, 2) - any_dict.deriv(th - h, 2)) / (2 * h)
        scale = 1.0 + np.max(np.abs(any_dict.deriv(th, 3)))
        assert np.max(np.abs(fd1 - any_dict.deriv(th, 1))) <= 1e-6 * scale
        assert np.max(np.abs(fd2 - any_dict.deriv(th, 2))) <= 1e-6 * scale
        assert np.max(np.abs(fd3 - any_dict.deriv(th, 3))) <= 1e-5 * scale


def test_normalized_jet_matches_finite_differences(any_dict):
    h = 1e-5
    th = _interior(any_dict, 3)
    nj = any_dict.normalized_jet(th)
    fd1 = (any_dict.normalized(th + h) - any_dict.normalized(th - h)) / (2 * h)
    fd2 = (any_dict.normalized_jet(th + h).d1 - any_dict.normalized_jet(th - h).d1) / (2 * h)
    scale = 1.0 + np.max(np.abs(nj.d3))
    assert np.max(np.abs(fd1 - nj.d1)) <= 1e-6 * scale
    assert np.max(np.abs(fd2 - nj.d2)) <= 1e-6 * scale


def test_covariant_features_orthonormal_at_same_point(any_dict):
    for th in _interior(any_dict, 4):
        f0, f1 = phi_cov(any_dict, th, 0), phi_cov(any_dict, th, 1)
        f2 = phi_cov(any_dict, th, 2)
        assert f1 @ f1 == pytest.approx(1.0, abs=1e-10)
        assert f0 @ f1 == pytest.approx(0.0, abs=1e-10)
        assert f0 @ f2 == pytest.approx(-1.0, abs=1e-8)
    with pytest.raises(PreconditionError):
        phi_cov(any_dict, _interior(any_dict, 1)[0], 4)


def test_gaussian_metric_density_is_constant(gauss_dict):
    g = gauss_dict.covariant(_interior(gauss_dict, 9)).g
    assert_allclose(g, 1.0 / (2 * 0.03 ** 2), rtol=1e-8)


def test_reparametrization_leaves_distance_invariant(gauss_dict):
    warp = exp_warp(0.2, 0.8, 1.5)
    rep = Reparametrized(gauss_dict, warp, DomainInterval(0.0, 1.0))
    base_model, rep_model = model_for(gauss_dict), model_for(rep)
    for u1, u2 in [(0.1, 0.4), (0.25, 0.9), (0.6, 0.61)]:
        t1, t2 = float(warp(np.array([u1]))[0][0]), float(warp(np.array([u2]))[0][0])
        assert rep_model.dist(u1, u2) == pytest.approx(base_model.dist(t1, t2), rel=1e-7)
    assert rep_model.diameter == pytest.approx(base_model.diameter, rel=1e-7)
    # K_rep(u, u') = K(ψ(u), ψ(u'))
    u = np.array([0.3, 0.7])
    t = warp(u)[0]
    assert_allclose(rep_model.kernel(u, u), base_model.kernel(t, t), atol=1e-12)


def test_exp_warp_rejects_zero_gamma():
    with pytest.raises(PreconditionError):
        exp_warp(0.0, 1.0, 0.0)


def test_build_dictionary_validation():
    with pytest.raises(PreconditionError):
        build_dictionary({"kind": "wavelet", "T": 8, "domain": [0, 1]})
    with pytest.raises(PreconditionError):
        build_dictionary({"kind": "fourier_lowpass", "T": 20, "domain": [0, 1], "params": {"fc": 10}})
    with pytest.raises(PreconditionError):
        build_dictionary({"kind": "gaussian_location", "domain": [0, 1]})
    with pytest.raises(PreconditionError):
        build_dictionary({"kind": "gaussian_location", "T": 32})
    d = build_dictionary({"kind": "fourier_lowpass", "domain": [0, 1], "params": {"fc": 3}})
    assert isinstance(d, FourierLowpass)
    assert d.T == 7


def test_zero_feature_is_reported():
    far = GaussianLocation(1e-3, np.linspace(0.0, 0.1, 16), DomainInterval(0.5, 0.9))
    with pytest.raises(ZeroFeatureError):
        far.normalized(0.7)


def test_fourier_embedding_matches_complex_kernel(fourier_dict):
    # ⟨φ(θ), φ(θ')⟩ = D_fc(θ−θ') / (2fc+1) met de Dirichlet-kern
    a, b = 0.31, 0.47
    D = 1.0 + 2.0 * sum(math.cos(2 * math.pi * f * (a - b)) for f in range(1, 11))
    assert fourier_dict.normalized(a) @ fourier_dict.normalized(b) == pytest.approx(D / 21.0, abs=1e-13)
