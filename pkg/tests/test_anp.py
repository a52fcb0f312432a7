import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nplab.anp import (LOG_KERNEL, UNIFORM, ScoreFunction, anp_equivalence_probe,
                       anp_predict, attention_readout, attention_weights,
                       factorization_counterexample, nadaraya_watson)
from nplab.cnp import context_from_pairs, find_collision, Encoder
from nplab.errors import InputError
from nplab.kernels import KernelSpec, eval_kernel

RBF = KernelSpec(family="rbf")

# exact two-point posterior weights for the equal-radius configurations
W1_FAR = np.exp(-0.5) / (1.0 + np.exp(-2.0))    # opposite points, distance 2
W1_NEAR = np.exp(-0.5) / (1.0 + np.exp(-0.5))   # 60 degrees, distance 1
CLOSED_FORM_GAP = W1_FAR - W1_NEAR


class TestAttentionWeights:
    def test_uniform_weights(self):
        C = context_from_pairs([(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)])
        w = attention_weights(ScoreFunction(kind=UNIFORM), C, 0.5)
        assert w == pytest.approx([1 / 3] * 3, abs=1e-15)

    def test_simplex_property(self):
        C = context_from_pairs([(0.0, 1.0), (3.0, -1.0)])
        score = ScoreFunction(kind=LOG_KERNEL, spec=RBF)
        w = attention_weights(score, C, 0.2)
        assert w.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(w > 0)

    def test_log_kernel_closed_form(self):
        # softmax(log k / tau) with tau=1 is kernel-proportional weighting
        C = context_from_pairs([(0.0, 1.0), (2.0, 5.0)])
        score = ScoreFunction(kind=LOG_KERNEL, spec=RBF)
        w = attention_weights(score, C, 0.5)
        k0 = eval_kernel(RBF, 0.5, 0.0)
        k1 = eval_kernel(RBF, 0.5, 2.0)
        assert w[0] == pytest.approx(k0 / (k0 + k1), abs=1e-14)

    def test_extreme_scores_stay_finite(self):
        C = context_from_pairs([(0.0, 1.0), (20.0, 2.0)])
        score = ScoreFunction(kind=LOG_KERNEL, spec=RBF)
        w = attention_weights(score, C, 0.0)  # log k gap of ~200
        assert np.all(np.isfinite(w)) and w.sum() == pytest.approx(1.0,
                                                                   abs=1e-14)
        assert w[0] == pytest.approx(1.0, abs=1e-80)

    def test_underflowed_kernel_rejected(self):
        C = context_from_pairs([(0.0, 1.0), (60.0, 2.0)])
        score = ScoreFunction(kind=LOG_KERNEL, spec=RBF)
        with pytest.raises(InputError):
            attention_weights(score, C, 0.0)

    def test_bad_score_configs(self):
        with pytest.raises(InputError):
            ScoreFunction(kind=LOG_KERNEL)
        with pytest.raises(InputError):
            ScoreFunction(kind=UNIFORM, temperature=0.0)
        with pytest.raises(InputError):
            ScoreFunction(kind="other")


class TestKernelSmootherEquivalence:
    def test_matches_nadaraya_watson_over_configs(self):
        # log-kernel scores, value map y, identity decoder: the attention
        # readout is exactly the kernel-weighted mean
        rng = np.random.default_rng(42)
        score = ScoreFunction(kind=LOG_KERNEL, spec=RBF)
        value_map = lambda x, y: y
        decoder = lambda x_t, r: float(r[0])
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(2, 8))
            C = context_from_pairs(list(zip(rng.uniform(-2, 2, n),
                                            rng.normal(size=n))))
            x_t = float(rng.uniform(-2, 2))
            a = anp_predict(score, value_map, decoder, C, x_t)
            b = nadaraya_watson(RBF, C, x_t)
            worst = max(worst, abs(a - b))
        assert worst <= 1e-10

    def test_temperature_scales_kernel_power(self):
        # tau=2 corresponds to weighting by k^(1/2)
        C = context_from_pairs([(0.0, 1.0), (1.5, 0.0)])
        score = ScoreFunction(kind=LOG_KERNEL, spec=RBF, temperature=2.0)
        w = attention_weights(score, C, 0.3)
        k = np.array([eval_kernel(RBF, 0.3, 0.0), eval_kernel(RBF, 0.3, 1.5)])
        ref = np.sqrt(k) / np.sqrt(k).sum()
        assert np.max(np.abs(w - ref)) < 1e-14


class TestFactorizationCounterexample:
    def test_closed_form_weights(self):
        out = factorization_counterexample(RBF)
        assert out["gp_w1_A"] == pytest.approx(W1_FAR, abs=1e-12)
        assert out["gp_w1_B"] == pytest.approx(W1_NEAR, abs=1e-12)

    def test_gap_value(self):
        out = factorization_counterexample(RBF)
        assert out["gp_weight_gap"] == pytest.approx(CLOSED_FORM_GAP,
                                                     abs=1e-12)
        assert out["gp_weight_gap"] >= 0.15

    def test_score_inputs_identical(self):
        out = factorization_counterexample(RBF)
        assert out["score_inputs_identical"]
        assert out["anp_weight_gap"] == 0.0

    def test_every_factorized_rule_is_blind(self):
        # any custom score sees identical (distance, value) inputs, so the
        # attention weights agree across the two configurations
        out = factorization_counterexample(RBF)
        CA = context_from_pairs([(out["config_A"]["x1"], 1.0),
                                 (out["config_A"]["x2"], 1.0)])
        CB = context_from_pairs([(out["config_B"]["x1"], 1.0),
                                 (out["config_B"]["x2"], 1.0)])
        score = ScoreFunction(
            kind="custom",
            custom=lambda x_t, x, y: float(np.cos(np.linalg.norm(x_t - x))
                                           + y[0]))
        wa = attention_weights(score, CA, np.zeros(2))
        wb = attention_weights(score, CB, np.zeros(2))
        assert np.max(np.abs(wa - wb)) < 1e-15

    def test_nonstationary_rejected(self):
        poly = KernelSpec(family="polynomial", degree=2)
        with pytest.raises(InputError):
            factorization_counterexample(poly)


class TestEquivalenceProbe:
    def test_uniform_attention_inherits_cnp_collision(self):
        res = find_collision(Encoder(kind="identity"), n=2, seed=0)
        score = ScoreFunction(kind=UNIFORM)
        value_map = lambda x, y: np.concatenate([np.atleast_1d(x),
                                                 np.atleast_1d(y)])
        gaps = anp_equivalence_probe(score, value_map, res.C, res.C2,
                                     np.linspace(-2, 2, 9))
        assert np.max(gaps) <= 1e-7

    def test_log_kernel_attention_separates_the_pair(self):
        res = find_collision(Encoder(kind="identity"), n=2, seed=0)
        score = ScoreFunction(kind=LOG_KERNEL, spec=RBF)
        value_map = lambda x, y: np.atleast_1d(y)
        gaps = anp_equivalence_probe(score, value_map, res.C, res.C2,
                                     np.linspace(-2, 2, 50))
        assert np.max(gaps) > 1e-3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 5.0))
def test_nadaraya_watson_stays_in_value_hull(seed, tau):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    ys = rng.normal(size=n)
    C = context_from_pairs(list(zip(rng.uniform(-2, 2, n), ys)))
    val = nadaraya_watson(RBF, C, float(rng.uniform(-3, 3)))
    assert ys.min() - 1e-12 <= val <= ys.max() + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_attention_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    n = 5
    C = context_from_pairs(list(zip(rng.uniform(-2, 2, n), rng.normal(size=n))))
    perm = rng.permutation(n)
    score = ScoreFunction(kind=LOG_KERNEL, spec=RBF)
    w = attention_weights(score, C, 0.1)
    wp = attention_weights(score, C.permuted(perm), 0.1)
    assert np.max(np.abs(w[perm] - wp)) < 1e-14
