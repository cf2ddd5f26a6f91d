import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import grid
from skewpsk.channel import ChannelParams, insert_pilots, simulate_frame
from skewpsk.demod_dp import dp_forward_backward
from skewpsk.demod_mixture import (
    MixtureTrace,
    TikhonovMixture,
    mixture_demodulate,
    mixture_reduce,
    mixture_step,
    run_recursion,
)
from skewpsk.tikhonov import TikhonovParam, shrink_concentration


def tv(p, q):
    return 0.5 * np.abs(p - q).sum() * 2 * np.pi / p.size


def random_mixture(rng, n):
    return TikhonovMixture(np.log(rng.dirichlet(np.ones(n))),
                           rng.uniform(1, 30, n) * np.exp(1j * rng.uniform(0, 2 * np.pi, n)))


class TestStep:
    def test_children_weights_match_quadrature(self, sqpsk):
        z0 = 8 * np.exp(0.3j)
        r = 0.9 * np.exp(1.5j)
        nv = 0.2
        params = ChannelParams(0.1, 0.0)
        out = mixture_step(TikhonovMixture(np.zeros(1), np.array([z0])), r, np.full(4, 0.25),
                           sqpsk, params, noise_var=nv)
        th = grid()
        parent = TikhonovParam(z0).pdf(th)
        mass = np.array([np.sum(parent * np.exp(-np.abs(r - s * np.exp(1j * th)) ** 2 / (2 * nv)))
                         for s in sqpsk.points])
        np.testing.assert_allclose(out.weights, mass / mass.sum(), atol=1e-6)

    def test_matched_filter_bank(self, sqpsk):
        r = 0.4 - 1.1j
        nv = 0.3
        out = mixture_step(TikhonovMixture.uniform(), r, np.full(4, 0.25), sqpsk,
                           ChannelParams(0.0, 0.0), noise_var=nv)
        np.testing.assert_array_equal(out.z, r * np.conj(sqpsk.points) / nv)

    def test_pilot_is_tracking_loop(self, sqpsk):
        z0, r = 5 + 2j, 0.3 + 0.9j
        params = ChannelParams(0.1, 5.0)
        out = mixture_step(TikhonovMixture(np.zeros(1), np.array([z0])), r, np.eye(4)[2], sqpsk, params)
        assert out.order == 1
        expected = shrink_concentration(z0 + r * np.conj(sqpsk.points[2]) / params.noise_var, 0.1)
        assert out.z[0] == pytest.approx(expected, rel=1e-14)

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_normalised(self, seed):
        rng = np.random.default_rng(seed)
        from skewpsk.constellation import make_skewed_mpsk
        c = make_skewed_mpsk(4, 0.7)
        out = mixture_step(random_mixture(rng, 4), complex(*rng.normal(size=2)),
                           rng.dirichlet(np.ones(4)), c, ChannelParams(0.1, 3.0))
        from scipy.special import logsumexp
        assert logsumexp(out.log_weights) == pytest.approx(0.0, abs=1e-9)
        assert 1 <= out.order <= 16


class TestReduce:
    def test_identical_pair(self):
        out = mixture_reduce(TikhonovMixture(np.log([0.5, 0.5]), np.array([3 + 1j, 3 + 1j])), 1)
        assert out.order == 1
        assert out.z[0] == pytest.approx(3 + 1j, rel=1e-9)
        assert out.weights[0] == pytest.approx(1.0)

    def test_opposite_directions_kept(self):
        mix = TikhonovMixture(np.log([0.5, 0.5]), np.array([10.0, -10.0]))
        out = mixture_reduce(mix, 2, np.pi / 8)
        assert out.order == 2

    def test_threshold_merges_close_pair(self):
        mix = TikhonovMixture(np.log([0.6, 0.4]), np.array([10.0, 10 * np.exp(0.01j)]))
        assert mixture_reduce(mix, 2, 0.05).order == 1

    @pytest.mark.parametrize("seed", range(5))
    def test_better_than_single_component(self, seed):
        rng = np.random.default_rng(seed)
        mix = random_mixture(rng, 8)
        th = grid()
        ref = mix.pdf(th)
        two = mixture_reduce(mix, 2)
        # pruning down to any one of the original components
        best_kept = min(tv(ref, TikhonovParam(z).pdf(th)) for z in mix.z)
        assert tv(ref, two.pdf(th)) < best_kept

    @given(st.integers(0, 10_000), st.integers(1, 6), st.sampled_from([0.0, 0.05, 0.3]))
    @settings(max_examples=40, deadline=None)
    def test_idempotent(self, seed, target, thr):
        mix = random_mixture(np.random.default_rng(seed), 12)
        once = mixture_reduce(mix, target, thr)
        twice = mixture_reduce(once, target, thr)
        np.testing.assert_allclose(twice.z, once.z, rtol=1e-12)
        np.testing.assert_allclose(twice.log_weights, once.log_weights, atol=1e-12)
        assert 1 <= once.order <= target

    def test_rejects_zero_order(self):
        with pytest.raises(ValueError):
            mixture_reduce(TikhonovMixture.uniform(), 0)

    def test_small_mixture_untouched(self):
        mix = TikhonovMixture(np.log([0.7, 0.3]), np.array([5.0, -5.0]))
        out = mixture_reduce(mix, 4)
        np.testing.assert_allclose(np.sort(out.weights), [0.3, 0.7])


def _frame(c, k, params, seed):
    idx = np.random.default_rng(seed).integers(0, c.m_order, k)
    return simulate_frame(c.points[idx], params, seed=seed), idx


def test_agrees_with_dp(sqpsk):
    params = ChannelParams(0.1, 4.0)
    agree = total = 0
    for seed in range(3):
        f, _ = _frame(sqpsk, 200, params, seed)
        priors = np.full((200, 4), 0.25)
        pm = mixture_demodulate(f, priors, sqpsk, params, 4, 4)
        pd, _ = dp_forward_backward(f, priors, sqpsk, params, 1024)
        agree += np.sum(pm.argmax(1) == pd.argmax(1))
        total += 200
    assert agree / total > 0.98


def test_single_loop_with_dense_pilots(qpsk):
    params = ChannelParams(0.1, 6.0)
    err_mix = err_dp = 0
    for seed in range(4):
        idx = np.random.default_rng(seed).integers(0, 4, 180)
        sym, mask = insert_pilots(qpsk.points[idx], qpsk.points[0], 10)
        f = simulate_frame(sym, params, seed=seed)
        priors = np.full((sym.size, 4), 0.25)
        priors[mask] = np.eye(4)[0]
        pm = mixture_demodulate(f, priors, qpsk, params, 1, 1)
        pd, _ = dp_forward_backward(f, priors, qpsk, params, 512)
        err_mix += np.sum(pm[~mask].argmax(1) != idx)
        err_dp += np.sum(pd[~mask].argmax(1) != idx)
    assert err_mix <= 2 * max(err_dp, 1)


def test_plain_qpsk_at_chance(qpsk):
    # every rotation of the data fits equally well, so over frames with a
    # random initial phase the decisions are right a quarter of the time
    params = ChannelParams(0.1, 8.0)
    acc = []
    for seed in range(16):
        f, idx = _frame(qpsk, 200, params, seed)
        pm = mixture_demodulate(f, np.full((200, 4), 0.25), qpsk, params, 4, 4)
        acc.append(np.mean(pm.argmax(1) == idx))
    assert np.mean(acc) < 0.45


def test_rows_sum_to_one(sqpsk):
    params = ChannelParams(0.1, 2.0)
    f, _ = _frame(sqpsk, 40, params, 3)
    pm = mixture_demodulate(f, np.full((40, 4), 0.25), sqpsk, params, 2, 3)
    np.testing.assert_allclose(pm.sum(axis=1), 1.0, atol=1e-12)


def test_rejects_bad_orders(sqpsk):
    f, _ = _frame(sqpsk, 5, ChannelParams(0.1, 2.0), 0)
    with pytest.raises(ValueError):
        mixture_demodulate(f, np.full((5, 4), 0.25), sqpsk, ChannelParams(0.1, 2.0), 0, 4)


def test_trace_csv(tmp_path, sqpsk):
    params = ChannelParams(0.1, 4.0)
    f, _ = _frame(sqpsk, 20, params, 0)
    trace = run_recursion(f.received, np.full((20, 4), 0.25), sqpsk, params, 3, 0.05)
    assert isinstance(trace, MixtureTrace)
    trace.to_csv(tmp_path / "t.csv", f.theta)
    header = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert header == "k,i,weight,abs_z,arg_z,theta_true"
