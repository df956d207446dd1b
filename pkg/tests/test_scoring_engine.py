import math
import unittest
from dataclasses import replace

import numpy as np
from hypothesis import given, settings, strategies as st

import context  # noqa: F401
from protocol_types import ProtocolError, ProtocolParams, ScoreEntry, ScoreLedger
from scoring_engine import (
    HOURS_PER_DAY, adjusted_score, chain_weights, final_score, normalise_quality, score_miners,
    sigmoid_score, task_score, task_weight, temporal_aggregate
)

P = ProtocolParams()


def brute_force_task_score(rank, n_valid):
    if rank == 1:
        return 3.0
    if rank > 0.75 * n_valid:
        return -1.0
    return 0.0


def closed_form_final(x):
    return 0.7 * (1.0 / (1.0 + math.exp(-9.0 * (x - 0.5)))) ** 0.75 + 0.05 * x


def ledger_of(rows):
    ledger = ScoreLedger()
    for miner_id, task_id, score, timestamp in sorted(rows, key=lambda r: r[3]):
        ledger.append(ScoreEntry(miner_id, task_id, score, timestamp))
    return ledger


class TestTaskScore(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(task_score(1, 10, P), 3.0)
        self.assertEqual(task_score(8, 10, P), -1.0)
        self.assertEqual(task_score(5, 10, P), 0.0)
        # 7.5 is the boundary; rank 8 is the first strictly below it
        self.assertEqual(task_score(7, 10, P), 0.0)

    def test_single_valid_miner_wins(self):
        self.assertEqual(task_score(1, 1, P), 3.0)

    def test_rank_out_of_range(self):
        with self.assertRaises(ProtocolError):
            task_score(0, 5, P)
        with self.assertRaises(ProtocolError):
            task_score(6, 5, P)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(17)
        mismatches = 0
        for _ in range(10_000):
            n_valid = int(rng.integers(3, 31))
            rank = int(rng.integers(1, n_valid + 1))
            if task_score(rank, n_valid, P) != brute_force_task_score(rank, n_valid):
                mismatches += 1
        self.assertEqual(mismatches, 0)

    @settings(max_examples=1000, deadline=None)
    @given(st.integers(min_value=1, max_value=500))
    def test_one_winner_and_bounded_penalties(self, n_valid):
        scores = [task_score(rank, n_valid, P) for rank in range(1, n_valid + 1)]
        self.assertEqual(scores.count(3.0), 1)
        self.assertLessEqual(scores.count(-1.0), math.floor(n_valid * 0.25) + 1)
        self.assertTrue(all(s in (3.0, 0.0, -1.0) for s in scores))


class TestTaskWeight(unittest.TestCase):
    def test_examples(self):
        self.assertAlmostEqual(task_weight(8.0, 4.0), 2 * math.sqrt(32), delta=1e-9)
        self.assertEqual(task_weight(0.07, 3.0), 1.0)
        self.assertAlmostEqual(task_weight(70.0, 10.0), 52.915, places=3)

    def test_rejects_non_positive(self):
        with self.assertRaises(ProtocolError):
            task_weight(0.0, 4.0)

    def test_adjusted_score(self):
        weight = task_weight(8.0, 4.0)
        self.assertAlmostEqual(adjusted_score(3.0, weight), 33.9411, places=4)
        self.assertEqual(adjusted_score(0.0, weight), 0.0)
        self.assertAlmostEqual(adjusted_score(-1.0, weight), -11.3137, places=4)


class TestTemporalAggregate(unittest.TestCase):
    def test_single_miner_normalises_to_one(self):
        ledger = ledger_of([('a', 't1', 10.0, 100.0)])
        result = temporal_aggregate(ledger, 100.0, ['a'], P)
        self.assertAlmostEqual(result['a'], 1.0, places=12)

    def test_relative_sums(self):
        ledger = ledger_of([('a', 't1', 10.0, 100.0), ('b', 't1', 5.0, 100.0)])
        result = temporal_aggregate(ledger, 100.0, ['a', 'b'], P)
        self.assertAlmostEqual(result['a'], 1.0, places=12)
        self.assertAlmostEqual(result['b'], 0.5, places=12)

    def test_old_entries_fall_out_of_every_window(self):
        now = 10 * HOURS_PER_DAY
        base = ledger_of([('a', 't1', 10.0, now), ('b', 't1', 5.0, now)])
        with_old = ledger_of([('b', 't0', 50.0, now - 8 * HOURS_PER_DAY),
                              ('a', 't1', 10.0, now), ('b', 't1', 5.0, now)])
        self.assertEqual(temporal_aggregate(base, now, ['a', 'b'], P),
                         temporal_aggregate(with_old, now, ['a', 'b'], P))

    def test_windows_weighted_separately(self):
        now = 10 * HOURS_PER_DAY
        # b's score is two days old: inside the 3- and 7-day windows only
        ledger = ledger_of([('b', 't0', 10.0, now - 2 * HOURS_PER_DAY), ('a', 't1', 10.0, now)])
        result = temporal_aggregate(ledger, now, ['a', 'b'], P)
        self.assertAlmostEqual(result['a'], 1.0, places=12)
        self.assertAlmostEqual(result['b'], 0.7, places=12)

    def test_penalties_keep_sign(self):
        ledger = ledger_of([('a', 't1', 3.0, 1.0), ('b', 't1', -1.0, 1.0)])
        result = temporal_aggregate(ledger, 1.0, ['a', 'b', 'c'], P)
        self.assertLess(result['b'], 0.0)
        self.assertEqual(result['c'], 0.0)

    def test_empty_ledger(self):
        result = temporal_aggregate(ScoreLedger(), 5.0, ['a', 'b'], P)
        self.assertEqual(result, {'a': 0.0, 'b': 0.0})

    @settings(max_examples=1000, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(-50, 50), st.floats(0.0, 200.0)),
                    min_size=1, max_size=30),
           st.floats(min_value=0.01, max_value=100.0))
    def test_bounded_and_scale_invariant(self, rows, factor):
        now = 200.0
        entries = [(f"m{m}", f"t{i}", float(score), t) for i, (m, score, t) in enumerate(rows)]
        miners = [f"m{i}" for i in range(6)]
        base = temporal_aggregate(ledger_of(entries), now, miners, P)
        scaled = temporal_aggregate(ledger_of([(m, t, s * factor, ts) for m, t, s, ts in entries]),
                                    now, miners, P)
        for miner_id in miners:
            self.assertLessEqual(abs(base[miner_id]), 1.0 + 1e-12)
            self.assertAlmostEqual(base[miner_id], scaled[miner_id], delta=1e-9)
        top = max(base.values())
        if top > 1e-6:
            leader = max(base, key=lambda m: (base[m], m))
            self.assertAlmostEqual(scaled[leader], max(scaled.values()), delta=1e-9)


class TestFinalScore(unittest.TestCase):
    def test_closed_form_values(self):
        # the published value at x = 0 is rounded; the exact value is 0.0237550...
        for x, listed, tolerance in ((0.5, 0.441223, 1e-6), (1.0, 0.744224, 1e-6), (0.0, 0.023762, 1e-5)):
            with self.subTest(x=x):
                self.assertAlmostEqual(final_score(x, P), closed_form_final(x), delta=1e-9)
                self.assertAlmostEqual(final_score(x, P), listed, delta=tolerance)
        self.assertAlmostEqual(final_score(0.0, P), 0.0237550354, delta=1e-9)

    def test_out_of_range(self):
        for x in (-0.01, 1.01, math.nan):
            with self.assertRaises(ProtocolError):
                final_score(x, P)

    def test_monotone_on_grid(self):
        grid = np.linspace(0.0, 1.0, 10_001)
        values = [final_score(float(x), P) for x in grid]
        self.assertTrue(all(b > a for a, b in zip(values, values[1:])))
        self.assertGreater(values[0], 0.0)
        self.assertLessEqual(values[-1], P.beta_sigmoid + P.omega_linear)

    @settings(max_examples=1000, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_monotone_pairs(self, a, b):
        low, high = sorted((a, b))
        self.assertLessEqual(final_score(low, P), final_score(high, P) + 1e-12)
        self.assertTrue(0.0 < sigmoid_score(high, P) <= 1.0)


class TestNormaliseAndChain(unittest.TestCase):
    def test_normalise_quality(self):
        self.assertEqual(normalise_quality({'a': 0.5, 'b': 0.25, 'c': -0.2}), {'a': 1.0, 'b': 0.5, 'c': 0.0})
        self.assertEqual(normalise_quality({'a': -0.5, 'b': 0.0}), {'a': 0.0, 'b': 0.0})

    def test_chain_weights(self):
        finals = {'a': 0.744224, 'b': 0.1}
        self.assertEqual(chain_weights(finals, P), finals)
        self.assertEqual(chain_weights(finals, replace(P, vtrust=0.0)), {'a': 0.0, 'b': 0.0})
        self.assertAlmostEqual(chain_weights(finals, replace(P, vtrust=0.5))['a'], 0.372112, places=9)

    def test_score_miners_pipeline(self):
        ledger = ledger_of([('a', 't1', 30.0, 10.0), ('b', 't1', 0.0, 10.0), ('c', 't1', -10.0, 10.0)])
        report = score_miners(ledger, 10.0, ['a', 'b', 'c'], P).by_miner()
        self.assertEqual(report['a'].x_normalised, 1.0)
        self.assertAlmostEqual(report['a'].s_final, closed_form_final(1.0), delta=1e-9)
        self.assertEqual(report['c'].x_normalised, 0.0)
        self.assertGreater(report['a'].w_chain, report['b'].w_chain)
        self.assertEqual(report['b'].w_chain, report['c'].w_chain)


if __name__ == '__main__':
    unittest.main()
