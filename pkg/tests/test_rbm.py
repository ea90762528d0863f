import itertools
import json

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit, logsumexp

from adaptive_rm.oracle import (
    all_binary,
    rbm_exact_log_z,
    rbm_exact_next_prob,
    rbm_exact_sample,
    rbm_exact_smooth_log_weight,
    rbm_prefix_log_probs,
)
from adaptive_rm.particles import ParticleSet
from adaptive_rm.rbm import (
    RbmModel,
    RbmParams,
    base_rate_params,
    hidden_input,
    load_binary_data,
    load_params,
    next_unit_logit,
    order_by_activity,
    rbm_gibbs_move,
    rbm_log_f,
    rbm_smooth_log_weight,
    save_params,
    softplus,
)


def _joint_log_f_direct(params, x):
    """log sum_h exp(x'Wh + a'x + b'h) by listing every hidden vector."""
    hs = np.array(list(itertools.product([0.0, 1.0], repeat=params.n_hidden)))
    n = len(x)
    x = np.asarray(x, dtype=float)
    e = x @ params.w[:n] @ hs.T + x @ params.a[:n] + hs @ params.b
    return logsumexp(e)


class TestLogF:
    def test_zero_state(self, small_rbm):
        assert rbm_log_f(small_rbm, np.zeros(6)) == pytest.approx(softplus(small_rbm.b).sum(), abs=1e-12)

    def test_factorized(self, rng):
        p = RbmParams(np.zeros((5, 3)), rng.normal(size=5), rng.normal(size=3))
        x = np.array([1.0, 0, 1, 1, 0])
        assert rbm_log_f(p, x) == pytest.approx(p.a @ x + softplus(p.b).sum(), abs=1e-12)

    def test_three_by_two_enumeration(self):
        p = RbmParams.random(3, 2, np.random.default_rng(32))
        x = [1.0, 0.0, 1.0]
        assert rbm_log_f(p, x) == pytest.approx(_joint_log_f_direct(p, x), abs=1e-10)

    def test_prefix_marginal_enumeration(self, small_rbm):
        # f_n sums both the hidden layer and the later visible units out of
        # nothing: it only looks at the first n units
        x = np.array([1.0, 1.0, 0.0])
        assert rbm_log_f(small_rbm, x) == pytest.approx(_joint_log_f_direct(small_rbm, x), abs=1e-10)


class TestSmoothWeight:
    def test_zero_column(self, rng):
        p = RbmParams.random(5, 3, rng)
        w = p.w.copy()
        w[3] = 0.0
        p = RbmParams(w, p.a, p.b)
        x = rng.integers(0, 2, (10, 3)).astype(float)
        got = rbm_smooth_log_weight(p, hidden_input(p, x), 3)
        np.testing.assert_allclose(got, np.log1p(np.exp(p.a[3])), rtol=1e-13)

    def test_forced_off(self, rng):
        p = RbmParams.random(5, 3, rng)
        a = p.a.copy()
        a[2] = -1e3
        p = RbmParams(p.w, a, p.b)
        x = rng.integers(0, 2, (10, 2)).astype(float)
        assert np.abs(rbm_smooth_log_weight(p, hidden_input(p, x), 2)).max() < 1e-300

    def test_enumeration_six_by_four(self, small_rbm):
        n = 3
        xs = all_binary(n)
        got = rbm_smooth_log_weight(small_rbm, hidden_input(small_rbm, xs), n)
        ext = [np.hstack([xs, np.full((xs.shape[0], 1), v)]) for v in (0.0, 1.0)]
        want = np.logaddexp(*(np.array([_joint_log_f_direct(small_rbm, r) for r in e]) for e in ext))
        want -= np.array([_joint_log_f_direct(small_rbm, r) for r in xs])
        np.testing.assert_allclose(got, want, atol=1e-10)
        np.testing.assert_allclose(got, rbm_exact_smooth_log_weight(small_rbm, xs), atol=1e-10)

    def test_telescoping(self, small_rbm):
        # log Z_N = log Z_1 + sum_n log E_{p_n}[W_n] with exact expectations
        model = RbmModel(small_rbm)
        total = model.log_z1
        for n in range(1, 6):
            xs, lp = rbm_prefix_log_probs(small_rbm, n)
            lw = rbm_smooth_log_weight(small_rbm, hidden_input(small_rbm, xs), n)
            total += logsumexp(lp + lw)
        assert total == pytest.approx(rbm_exact_log_z(small_rbm).log_z_exact, abs=1e-10)


class TestGibbs:
    def test_factorized_one_sweep(self, rng):
        a = np.array([-1.0, 0.0, 2.0])
        p = RbmParams(np.zeros((3, 2)), a, np.zeros(2))
        x = np.zeros((100_000, 3))
        out = rbm_gibbs_move(p, x, 1, rng)
        p1 = expit(a)
        sd = np.sqrt(p1 * (1 - p1) / x.shape[0])
        assert np.all(np.abs(out.mean(axis=0) - p1) < 3 * sd)

    def test_chain_frequencies_chi_square(self):
        # 4x3 model: state frequencies of 1000 chains sampled every 5 sweeps
        # after burn-in, compared with exact p(x) by enumeration
        rng = np.random.default_rng(43)
        p = RbmParams.random(4, 3, rng)
        xs, lp = rbm_prefix_log_probs(p, 4)
        keys = 2 ** np.arange(3, -1, -1)
        counts = np.zeros(16)
        chains = rbm_gibbs_move(p, np.zeros((1000, 4)), 50, rng)
        for _ in range(40):
            chains = rbm_gibbs_move(p, chains, 5, rng)
            counts += np.bincount((chains @ keys).astype(int), minlength=16)
        expected = np.zeros(16)
        expected[(xs @ keys).astype(int)] = np.exp(lp) * counts.sum()
        assert stats.chisquare(counts, expected).pvalue > 0.01

    def test_stationarity_from_exact_samples(self, small_rbm, rng):
        n = 5
        x0 = rbm_exact_sample(small_rbm, n, 10_000, rng)
        x1 = rbm_gibbs_move(small_rbm, x0, 1, rng)
        xs, lp = rbm_prefix_log_probs(small_rbm, n)
        phi = xs.sum(axis=1)
        mean = np.exp(lp) @ phi
        sd = np.sqrt(np.exp(lp) @ phi**2 - mean**2)
        assert abs(x1.sum(axis=1).mean() - mean) < 3 * sd / np.sqrt(x0.shape[0])

    def test_only_prefix_touched(self, small_rbm, rng):
        model = RbmModel(small_rbm)
        pset = model.initial(50, rng)
        pset.states[:, 1:] = 7.0
        model.move(pset, 3, rng)
        assert (pset.states[:, 1:] == 7.0).all()


class TestAugment:
    def test_fair_coin(self, rng):
        p = RbmParams(np.zeros((2, 2)), np.zeros(2), np.zeros(2))
        assert expit(next_unit_logit(p, hidden_input(p, np.zeros((1, 1))), 1))[0] == pytest.approx(0.5)

    def test_logistic_five(self):
        p = RbmParams(np.zeros((2, 2)), np.array([0.0, 5.0]), np.zeros(2))
        prob = expit(next_unit_logit(p, hidden_input(p, np.zeros((1, 1))), 1))[0]
        assert prob == pytest.approx(0.99331, abs=5e-6)

    def test_frequency_matches_exact(self, small_rbm, rng):
        model = RbmModel(small_rbm)
        reps = 100_000
        prefix = np.array([1.0, 0.0, 1.0])
        states = np.zeros((reps, 6))
        states[:, :3] = prefix
        pset = ParticleSet(states, np.full(reps, -np.log(reps)), 3, np.tile(hidden_input(small_rbm, prefix), (reps, 1)))
        model.augment(pset, rng)
        p1 = rbm_exact_next_prob(small_rbm, prefix[None])[0]
        assert abs(pset.states[:, 3].mean() - p1) < 3 * np.sqrt(p1 * (1 - p1) / reps)
        assert pset.dim == 4
        np.testing.assert_allclose(pset.cache, hidden_input(small_rbm, pset.states[:, :4]), atol=1e-12)


class TestOrdering:
    def test_constant_column_last(self):
        data = np.array([[1, 0, 1], [1, 1, 0], [1, 0, 0], [1, 1, 1]])
        assert order_by_activity(data)[-1] == 0

    def test_bernoulli_variance_ties(self):
        # column means .5, .9, .1 -> variances .25, .09, .09
        col0 = np.tile([0, 1], 5)
        col1 = np.array([1] * 9 + [0])
        col2 = np.array([0] * 9 + [1])
        np.testing.assert_array_equal(order_by_activity(np.column_stack([col0, col1, col2])), [0, 1, 2])

    def test_identical_columns(self):
        data = np.tile(np.array([[0], [1], [1]]), (1, 4))
        np.testing.assert_array_equal(order_by_activity(data), np.arange(4))

    def test_empty_dataset_warns(self, caplog):
        np.testing.assert_array_equal(order_by_activity(np.zeros((0, 3))), [0, 1, 2])
        assert "identity" in caplog.text

    def test_log_z_invariant_under_order(self, small_rbm, rng):
        perm = rng.permutation(6)
        a = rbm_exact_log_z(small_rbm).log_z_exact
        b = rbm_exact_log_z(small_rbm.permuted(perm)).log_z_exact
        assert a == pytest.approx(b, abs=1e-12)


class TestParamsIO:
    def test_roundtrip(self, small_rbm, tmp_path):
        path = tmp_path / "p.json"
        save_params(small_rbm, path)
        back = load_params(path)
        np.testing.assert_array_equal(back.w, small_rbm.w)
        d = json.loads(path.read_text())
        assert d["n"] == 6 and d["h"] == 4

    def test_shape_mismatch(self, tmp_path):
        path = tmp_path / "p.json"
        path.write_text(json.dumps({"n": 2, "h": 1, "a": [0, 0], "b": [0], "w": [[0]]}))
        with pytest.raises(ValueError):
            load_params(path)

    def test_non_binary_data(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("0,1\n2,0\n")
        with pytest.raises(ValueError, match="0 or 1"):
            load_binary_data(path)

    def test_base_rate(self):
        data = np.array([[1, 0], [1, 1], [0, 1], [1, 1]], dtype=float)
        p = base_rate_params(data, 3)
        np.testing.assert_allclose(expit(p.a), [0.75, 0.75])
        assert not p.w.any()


def test_model_ops_and_z1(small_rbm):
    model = RbmModel(small_rbm, order=[5, 4, 3, 2, 1, 0])
    assert model.unit_ops(3, 10, 2) == 2 * 4 * 3 * 10
    lf = np.array([rbm_log_f(model.params, [v]) for v in (0.0, 1.0)])
    assert model.log_z1 == pytest.approx(np.logaddexp(*lf))
