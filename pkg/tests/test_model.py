import numpy as np
import pytest

from adaptive_rm.gpc import GpcModel
from adaptive_rm.model import OracleUnavailable, SequentialModel, validate_model
from adaptive_rm.rbm import RbmModel, RbmParams


@pytest.mark.parametrize("n", [1, 3, 6])
def test_validate_rbm(small_rbm, rng, n):
    rep = validate_model(RbmModel(small_rbm), n, rng, samples=20_000)
    assert rep.stationarity_z < 4
    assert rep.smooth_max_abs_error < 1e-10
    assert rep.augment_max_abs_error < 0.02
    assert set(rep.as_dict()) >= {"n", "stationarity_z", "smooth_max_abs_error"}


def test_validate_factorized_smooth_exact(rng):
    params = RbmParams(np.zeros((4, 3)), rng.normal(size=4), rng.normal(size=3))
    rep = validate_model(RbmModel(params), 2, rng, samples=2000)
    assert rep.smooth_max_abs_error < 1e-14


def test_validate_gpc(rng):
    a = rng.normal(size=(4, 4))
    model = GpcModel(a @ a.T + np.eye(4), [1.0, -1.0, 1.0, -1.0])
    rep = validate_model(model, 1, rng, samples=100_000)
    assert rep.augment_pvalue > 0.01
    assert rep.smooth_max_abs_error < 1e-9
    assert rep.stationarity_z < 4


def test_gpc_beyond_rejection_range(rng):
    model = GpcModel(np.eye(10), np.ones(10))
    with pytest.raises(OracleUnavailable):
        validate_model(model, 9, rng, samples=100)


def test_out_of_range(small_rbm, rng):
    with pytest.raises(ValueError):
        validate_model(RbmModel(small_rbm), 7, rng)


def test_unknown_model(rng):
    class Plain(RbmModel):
        pass

    class Other(SequentialModel):
        total_dim = 2
        log_z1 = 0.0
        initial = move = smooth_log_weight = augment = lambda *a: None

    with pytest.raises(OracleUnavailable):
        validate_model(Other(), 1, rng)
    # subclasses of a known model still get its reference
    validate_model(Plain(RbmParams.zeros(2, 1)), 1, rng, samples=100)


def test_default_seed_states_unsupported(rng):
    class NoSeed(SequentialModel):
        total_dim = 2
        log_z1 = 0.0
        initial = move = smooth_log_weight = augment = lambda *a: None

    with pytest.raises(NotImplementedError):
        NoSeed().seed_states(1, 5, rng)
