"""Transition-model and Viterbi tests.

Oracles: hand-counted transition tables for tiny hypnograms, and exhaustive
path enumeration (score every possible state sequence, keep the best) for the
decoder across randomized problems. Numerical robustness is exercised with
sequences long enough to underflow any linear-space implementation.
"""

import itertools

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hypnolearn.data import N_STAGES
from hypnolearn.hmm import SleepHmm, viterbi


def brute_force_best_path(pi, trans, emissions):
    """Enumerate every path; return the highest-probability one.

    Paths are generated in lexicographic order and replaced only on a strict
    improvement, so ties resolve to the lowest-index path, matching the
    decoder's documented tie-break.
    """
    T, S = emissions.shape
    best, best_p = None, -np.inf
    for path in itertools.product(range(S), repeat=T):
        p = pi[path[0]] * emissions[0][path[0]]
        for t in range(1, T):
            p *= trans[path[t - 1]][path[t]] * emissions[t][path[t]]
        if p > best_p:
            best, best_p = path, p
    return np.asarray(best, dtype=np.int64)


def random_problem(rng, n_states, max_T):
    T = int(rng.integers(1, max_T + 1))
    pi = rng.uniform(0.05, 1.0, size=n_states)
    pi /= pi.sum()
    trans = rng.uniform(0.05, 1.0, size=(n_states, n_states))
    trans /= trans.sum(axis=1, keepdims=True)
    emissions = rng.uniform(0.05, 1.0, size=(T, n_states))
    return pi, trans, emissions


class TestViterbi:
    @pytest.mark.parametrize("seed", range(100))
    def test_matches_exhaustive_enumeration_two_states(self, seed):
        pi, trans, emissions = random_problem(np.random.default_rng(seed), 2, 6)
        np.testing.assert_array_equal(
            viterbi(pi, trans, emissions), brute_force_best_path(pi, trans, emissions)
        )

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_exhaustive_enumeration_five_states(self, seed):
        pi, trans, emissions = random_problem(np.random.default_rng(1000 + seed), 5, 5)
        np.testing.assert_array_equal(
            viterbi(pi, trans, emissions), brute_force_best_path(pi, trans, emissions)
        )

    def test_uniform_everything_ties_break_to_state_zero(self):
        S = N_STAGES
        path = viterbi(np.full(S, 1 / S), np.full((S, S), 1 / S), np.full((7, S), 1 / S))
        np.testing.assert_array_equal(path, np.zeros(7, dtype=np.int64))

    def test_long_sequence_does_not_underflow(self):
        # 10000 factors of ~1e-3 underflow linear-space scores by t ~ 100.
        rng = np.random.default_rng(0)
        pi = np.full(5, 0.2)
        trans = np.full((5, 5), 0.04) + np.eye(5) * 0.8
        emissions = rng.uniform(1e-4, 2e-3, size=(10000, 5))
        path = viterbi(pi, trans, emissions)
        assert path.shape == (10000,)
        assert path.min() >= 0 and path.max() < 5

    @pytest.mark.parametrize("seed", range(10))
    def test_per_row_emission_scaling_leaves_path_unchanged(self, seed):
        rng = np.random.default_rng(seed)
        pi, trans, emissions = random_problem(rng, 5, 5)
        scales = rng.uniform(1e-6, 1e6, size=(len(emissions), 1))
        np.testing.assert_array_equal(
            viterbi(pi, trans, emissions), viterbi(pi, trans, emissions * scales)
        )

    def test_zero_emission_entries_are_legal_but_zero_rows_are_not(self):
        pi = np.array([0.5, 0.5])
        trans = np.array([[0.5, 0.5], [0.5, 0.5]])
        emissions = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(viterbi(pi, trans, emissions), [0, 1, 0])
        emissions[1] = 0.0
        with pytest.raises(ValueError, match="zero emission row at t=1"):
            viterbi(pi, trans, emissions)

    def test_wrong_emission_shape_rejected(self):
        with pytest.raises(ValueError, match="emissions must be"):
            viterbi(np.full(5, 0.2), np.full((5, 5), 0.2), np.ones((4, 3)))


class TestSleepHmmFit:
    def test_hand_counted_transitions_without_smoothing(self):
        model = SleepHmm(alpha=0.0).fit([[0, 0, 1]])
        np.testing.assert_allclose(model.trans_[0], [0.5, 0.5, 0, 0, 0], atol=1e-15)
        # Stages with no observed outgoing transition fall back to uniform.
        for row in model.trans_[1:]:
            np.testing.assert_allclose(row, np.full(5, 0.2), atol=1e-15)
        np.testing.assert_allclose(model.pi_, [1, 0, 0, 0, 0], atol=1e-15)
        np.testing.assert_allclose(model.class_priors_, [2 / 3, 1 / 3, 0, 0, 0], atol=1e-15)

    def test_hand_counted_transitions_with_unit_smoothing(self):
        model = SleepHmm(alpha=1.0).fit([[0, 0, 1]])
        np.testing.assert_allclose(model.trans_[0], np.array([2, 2, 1, 1, 1]) / 7, atol=1e-15)
        for row in model.trans_[1:]:
            np.testing.assert_allclose(row, np.full(5, 0.2), atol=1e-15)
        np.testing.assert_allclose(model.pi_, np.array([2, 1, 1, 1, 1]) / 6, atol=1e-15)

    def test_enormous_smoothing_washes_out_to_uniform(self):
        rng = np.random.default_rng(0)
        seqs = [rng.integers(0, 5, size=200) for _ in range(3)]
        model = SleepHmm(alpha=1e9).fit(seqs)
        np.testing.assert_allclose(model.trans_, np.full((5, 5), 0.2), atol=1e-6)
        np.testing.assert_allclose(model.pi_, np.full(5, 0.2), atol=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_rows_are_distributions(self, seed):
        rng = np.random.default_rng(seed)
        seqs = [rng.integers(0, 5, size=int(rng.integers(2, 60))) for _ in range(4)]
        model = SleepHmm(alpha=1.0).fit(seqs)
        np.testing.assert_allclose(model.trans_.sum(axis=1), np.ones(5), atol=1e-12)
        assert np.all(model.trans_ >= 0)
        assert model.pi_.sum() == pytest.approx(1.0, abs=1e-12)
        assert model.class_priors_.sum() == pytest.approx(1.0, abs=1e-12)

    def test_multiple_sequences_pool_counts(self):
        model = SleepHmm(alpha=0.0).fit([[0, 1], [0, 2]])
        np.testing.assert_allclose(model.trans_[0], [0, 0.5, 0.5, 0, 0], atol=1e-15)
        np.testing.assert_allclose(model.pi_, [1, 0, 0, 0, 0], atol=1e-15)

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError, match="alpha"):
            SleepHmm(alpha=-0.5).fit([[0, 1]])

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            SleepHmm().fit([])
        with pytest.raises(ValueError, match="nonempty"):
            SleepHmm().fit([[0, 1], []])


class TestSleepHmmDecode:
    def test_prior_scaling_recovers_rare_stage(self):
        # Training hypnograms dominated by WAKE; the posterior leans WAKE at
        # every epoch, yet dividing by the class prior exposes that S1 is
        # heavily over-represented relative to its base rate.
        seqs = [np.array([0] * 80 + [1] * 20)]
        posteriors = np.tile([0.55, 0.45, 0.0, 0.0, 0.0], (30, 1))
        raw = SleepHmm(alpha=1.0, emissions="raw").fit(seqs).decode(posteriors)
        scaled = SleepHmm(alpha=1.0, emissions="scaled").fit(seqs).decode(posteriors)
        np.testing.assert_array_equal(raw, np.zeros(30, dtype=np.int64))
        assert np.all(scaled == 1)

    def test_uniform_model_and_posteriors_decode_to_all_wake(self):
        # Singleton sequences leave no transition counts, so smoothing yields
        # exactly uniform tables and every path ties; lowest index wins.
        model = SleepHmm(alpha=1.0).fit([[0], [1], [2], [3], [4]])
        np.testing.assert_allclose(model.trans_, np.full((5, 5), 0.2), atol=1e-15)
        path = model.decode(np.full((12, 5), 0.2))
        np.testing.assert_array_equal(path, np.zeros(12, dtype=np.int64))

    def test_posterior_rows_must_sum_to_one(self):
        model = SleepHmm().fit([[0, 1, 0]])
        bad = np.full((4, 5), 0.2)
        bad[2, 0] = 0.3
        with pytest.raises(ValueError, match="row 2 sums to"):
            model.decode(bad)

    def test_posterior_shape_checked(self):
        model = SleepHmm().fit([[0, 1, 0]])
        with pytest.raises(ValueError, match="posteriors must be"):
            model.decode(np.full((4, 3), 1 / 3))

    def test_unknown_emission_mode_rejected(self):
        model = SleepHmm(emissions="banana").fit([[0, 1, 0]])
        with pytest.raises(ValueError, match="banana"):
            model.decode(np.full((4, 5), 0.2))

    def test_decode_before_fit_raises(self):
        with pytest.raises(NotFittedError):
            SleepHmm().decode(np.full((4, 5), 0.2))

    def test_predict_is_decode(self):
        model = SleepHmm().fit([[0, 0, 1, 1, 0]])
        posteriors = np.random.default_rng(0).dirichlet(np.ones(5), size=20)
        np.testing.assert_array_equal(model.predict(posteriors), model.decode(posteriors))

    def test_smoothing_strength_trades_evidence_against_inertia(self):
        # One isolated low-confidence flip: a sticky transition model irons it
        # out, a near-uniform one follows the evidence.
        seqs = [np.array([0] * 50 + [1] * 50)]
        posteriors = np.tile([0.9, 0.1, 0, 0, 0], (9, 1)).astype(float)
        posteriors[4] = [0.45, 0.55, 0.0, 0.0, 0.0]
        sticky = SleepHmm(alpha=0.1, emissions="raw").fit(seqs).decode(posteriors)
        loose = SleepHmm(alpha=1e9, emissions="raw").fit(seqs).decode(posteriors)
        assert sticky[4] == 0  # glitch smoothed away
        assert loose[4] == 1  # glitch kept

    def test_clone_round_trip(self):
        model = SleepHmm(alpha=2.5, emissions="raw")
        assert clone(model).get_params() == model.get_params()
