import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from measure_model import (
    DiscreteMeasure,
    DomainInterval,
    MixtureParams,
    SignalSet,
    conjugate,
    dual_unit,
    mixed_norm,
    prediction_error,
    synthesize,
)
from utils_offgrid import DomainError, PreconditionError, frame_to_csv, read_csv


def test_conjugate():
    assert conjugate(2) == 2
    assert math.isinf(conjugate(1))
    assert conjugate(1.5) == pytest.approx(3.0)
    with pytest.raises(PreconditionError):
        conjugate(3)


def test_domain_check_clips_rounding_and_rejects_outside():
    dom = DomainInterval(0.2, 0.8)
    assert_allclose(dom.check([0.2 - 1e-15, 0.5]), [0.2, 0.5])
    with pytest.raises(DomainError):
        dom.check(0.9)
    with pytest.raises(DomainError):
        dom.check(float("nan"))
    with pytest.raises(PreconditionError):
        DomainInterval(0.5, 0.5)
    with pytest.raises(PreconditionError):
        DomainInterval(0.0, 1.0, lo_inf=0.1)


def test_measure_validation():
    with pytest.raises(PreconditionError):
        DiscreteMeasure.from_weights([1.0, -1.0])
    with pytest.raises(PreconditionError):
        DiscreteMeasure.from_weights([0.0, 0.0])
    with pytest.raises(PreconditionError):
        DiscreteMeasure([0, 0], [1.0, 1.0])
    m = DiscreteMeasure.from_weights([2.0, 0.0, 1.0])
    assert m.n == 3
    assert m.mass == pytest.approx(3.0)
    assert m.a_max == pytest.approx(2.0)


def test_sup_norm_ignores_zero_weight_atoms():
    m = DiscreteMeasure.from_weights([1.0, 0.0])
    f = np.array([[0.5], [10.0]])
    assert m.lp_norm(f, math.inf)[0] == pytest.approx(0.5)


def test_mixed_norm_example():
    m = DiscreteMeasure.uniform(2)
    B = np.array([[3.0], [4.0]])
    assert mixed_norm(B, m, 2) == pytest.approx(5.0)
    assert mixed_norm(B, m, 1) == pytest.approx(7.0)
    assert mixed_norm(np.zeros((2, 0)), m, 2) == 0.0
    with pytest.raises(PreconditionError):
        mixed_norm(np.zeros((3, 1)), m, 2)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
def test_dual_unit_has_unit_dual_norm_and_attains_holder(p, rng):
    m = DiscreteMeasure.from_weights(rng.uniform(0.5, 2.0, size=6))
    f = rng.standard_normal(6)
    v = dual_unit(f, m, p)
    q = conjugate(p)
    assert m.lp_norm(v, q) == pytest.approx(1.0, rel=1e-12)
    assert m.inner(f, v) == pytest.approx(float(m.lp_norm(f, p)), rel=1e-12)


def test_holder_inequality(rng):
    m = DiscreteMeasure.from_weights(rng.uniform(0.1, 1.0, size=9))
    for p in (1.0, 1.25, 2.0):
        q = conjugate(p)
        for _ in range(20):
            f, g = rng.standard_normal(9), rng.standard_normal(9)
            assert abs(m.inner(f, g)) <= m.lp_norm(f, p) * m.lp_norm(g, q) + 1e-12


@pytest.mark.parametrize("q", [3, 4, 8])
def test_log_convexity_of_lq_norms(q, rng):
    m = DiscreteMeasure.from_weights(rng.uniform(0.1, 1.0, size=12))
    for _ in range(20):
        f = rng.standard_normal(12)
        lhs = m.lp_norm(f, q)
        rhs = m.lp_norm(f, 2) ** (2.0 / q) * m.lp_norm(f, math.inf) ** ((q - 2.0) / q)
        assert lhs <= rhs + 1e-12


def test_synthesize_and_prediction_error(gauss_dict, measure4, rng):
    truth = MixtureParams(rng.uniform(0.5, 1.5, size=(4, 2)), [0.35, 0.65])
    Y = synthesize(truth, gauss_dict, measure4)
    assert Y.data.shape == (4, gauss_dict.T)
    assert prediction_error(truth, truth, gauss_dict, measure4) == 0.0

    empty = MixtureParams(np.zeros((4, 0)), [])
    direct = math.sqrt(np.sum(Y.data ** 2) / measure4.mass)
    assert prediction_error(empty, truth, gauss_dict, measure4) == pytest.approx(direct, rel=1e-12)

    with pytest.raises(PreconditionError):
        synthesize(truth, gauss_dict, measure4, noise=np.zeros((4, 3)))
    with pytest.raises(DomainError):
        synthesize(MixtureParams(np.ones((4, 1)), [0.95]), gauss_dict, measure4)


def test_mixture_params_capacity_and_shape():
    with pytest.raises(PreconditionError):
        MixtureParams(np.ones((2, 3)), [0.3, 0.5])
    with pytest.raises(PreconditionError):
        MixtureParams(np.ones((2, 3)), [0.3, 0.4, 0.5], capacity=2)
    mp = MixtureParams(np.array([[1.0, 0.0], [2.0, 0.0]]), [0.3, 0.5], capacity=2)
    assert mp.support.tolist() == [0]


def test_signals_and_params_survive_csv(tmp_path, gauss_dict, measure4, rng):
    truth = MixtureParams(rng.standard_normal((4, 2)), [0.4, 0.6])
    Y = synthesize(truth, gauss_dict, measure4, noise=1e-3 * rng.standard_normal((4, gauss_dict.T)))
    frame_to_csv(Y.to_frame(), tmp_path / "signals.csv")
    frame_to_csv(truth.to_frame(), tmp_path / "params.csv")
    Y2 = SignalSet.from_frame(read_csv(tmp_path / "signals.csv"), measure4)
    truth2 = MixtureParams.from_frame(read_csv(tmp_path / "params.csv"))
    assert_allclose(Y2.data, Y.data, rtol=1e-11, atol=1e-14)
    assert_allclose(truth2.B, truth.B, rtol=1e-11)
    assert_allclose(truth2.theta, truth.theta, rtol=1e-11)


def test_params_frame_uses_measure_labels():
    measure = DiscreteMeasure(np.array([3, 7, 11]), np.array([1.0, 0.5, 2.0]))
    truth = MixtureParams(np.arange(6.0).reshape(3, 2), [0.3, 0.6])
    df = truth.to_frame(measure)
    assert list(df.columns) == ["k", "theta", "b_3", "b_7", "b_11"]
    assert_allclose(MixtureParams.from_frame(df).B, truth.B)
    assert list(truth.to_frame().columns) == ["k", "theta", "b_0", "b_1", "b_2"]
    with pytest.raises(PreconditionError):
        truth.to_frame(DiscreteMeasure.uniform(2))
