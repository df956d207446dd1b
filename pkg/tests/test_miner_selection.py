import unittest
from collections import Counter
from fractions import Fraction

import numpy as np
from hypothesis import given, settings, strategies as st

import context  # noqa: F401
from miner_selection import draw_without_replacement, rank_probabilities, select_pool, selection_weight
from protocol_types import MinerProfile, ProtocolError, ProtocolParams, StrategyKind, TaskType


def miners(n, scores=None, participated=True):
    scores = scores if scores is not None else [1.0 + 0.1 * i for i in range(n)]
    return [MinerProfile(id=f"miner-{i:03d}", strategy=StrategyKind.LOCAL_SEARCH,
                         quality_score_s_i=scores[i], participated_today=participated)
            for i in range(n)]


class TestSelectionWeight(unittest.TestCase):
    def test_weight_examples(self):
        p = ProtocolParams()
        fresh = MinerProfile(id='a', strategy=StrategyKind.LOCAL_SEARCH, quality_score_s_i=0.5)
        self.assertEqual(selection_weight(fresh, p), 2.0)
        idle = MinerProfile(id='b', strategy=StrategyKind.LOCAL_SEARCH, participated_today=True)
        self.assertEqual(selection_weight(idle, p), 0.01)
        strong = MinerProfile(id='c', strategy=StrategyKind.LOCAL_SEARCH, quality_score_s_i=1.7,
                              participated_today=True)
        self.assertEqual(selection_weight(strong, p), 1.7)


class TestRankProbabilities(unittest.TestCase):
    def test_ten_miners(self):
        entries = rank_probabilities(miners(10), ProtocolParams())
        expected = [3.0, 2.8, 2.6, 2.4, 2.2, 2.0, 1.8, 1.6, 1.4, 1.2]
        for entry, value in zip(entries, expected):
            self.assertAlmostEqual(entry.prob, value, places=12)
        # highest quality score ranks first
        self.assertEqual(entries[0].miner_id, 'miner-009')
        self.assertEqual([e.rank for e in entries], list(range(1, 11)))

    def test_endpoints(self):
        p = ProtocolParams()
        entries = rank_probabilities(miners(10), p)
        self.assertEqual(entries[0].prob, p.lambda_top_multiplier)
        self.assertAlmostEqual(entries[-1].prob, 1.0 + (p.lambda_top_multiplier - 1.0) / 10, delta=1e-12)

    def test_top_to_bottom_ratio_closed_form(self):
        lam, size = Fraction(3), 10
        p_last = lam - (size - 1) * (lam - 1) / size
        self.assertEqual(lam / p_last, Fraction(5, 2))

    def test_small_pools(self):
        p = ProtocolParams()
        self.assertEqual([e.prob for e in rank_probabilities(miners(1), p)], [3.0])
        self.assertEqual([e.prob for e in rank_probabilities(miners(2), p)], [3.0, 2.0])

    def test_ties_broken_by_id(self):
        entries = rank_probabilities(miners(5, participated=False), ProtocolParams())
        self.assertEqual([e.miner_id for e in entries], [f"miner-{i:03d}" for i in range(5)])

    def test_empty_pool(self):
        with self.assertRaises(ProtocolError):
            rank_probabilities([], ProtocolParams())

    @settings(max_examples=1000, deadline=None)
    @given(st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=1, max_size=40))
    def test_probabilities_positive_and_non_increasing(self, scores):
        entries = rank_probabilities(miners(len(scores), scores), ProtocolParams())
        probs = [e.prob for e in entries]
        self.assertTrue(all(value > 0 for value in probs))
        self.assertTrue(all(a >= b for a, b in zip(probs, probs[1:])))
        weights = [e.weight for e in entries]
        self.assertTrue(all(a >= b for a, b in zip(weights, weights[1:])))


class TestDrawing(unittest.TestCase):
    def test_first_pick_frequencies(self):
        entries = rank_probabilities(miners(10), ProtocolParams())
        total = sum(e.prob for e in entries)
        rng = np.random.default_rng(11)
        trials = 200_000
        counts = Counter(draw_without_replacement(entries, 1, rng)[0] for _ in range(trials))
        for entry in entries:
            with self.subTest(miner=entry.miner_id):
                expected = entry.prob / total
                observed = counts[entry.miner_id] / trials
                self.assertLess(abs(observed - expected) / expected, 0.05)

    def test_draw_has_no_repeats(self):
        entries = rank_probabilities(miners(10), ProtocolParams())
        drawn = draw_without_replacement(entries, 10, np.random.default_rng(1))
        self.assertEqual(sorted(drawn), sorted(e.miner_id for e in entries))

    def test_second_pick_renormalises_remaining_mass(self):
        entries = rank_probabilities(miners(3), ProtocolParams())
        total = sum(e.prob for e in entries)
        share = {e.miner_id: e.prob / total for e in entries}
        expected = {
            c: sum(share[a] * share[c] / (1.0 - share[a]) for a in share if a != c)
            for c in share
        }
        rng = np.random.default_rng(17)
        trials = 100_000
        counts = Counter(draw_without_replacement(entries, 2, rng)[1] for _ in range(trials))
        for miner_id, probability in expected.items():
            with self.subTest(miner=miner_id):
                self.assertLess(abs(counts[miner_id] / trials - probability) / probability, 0.05)

    def test_draw_nothing(self):
        entries = rank_probabilities(miners(3), ProtocolParams())
        self.assertEqual(draw_without_replacement(entries, 0, np.random.default_rng(0)), [])

    def test_top_rank_included_more_often(self):
        pool = miners(30)
        rng = np.random.default_rng(4)
        counts = Counter()
        for _ in range(5_000):
            counts.update(select_pool(pool, TaskType.INSTRUCT, rng, ProtocolParams()))
        self.assertGreater(counts['miner-029'], counts['miner-000'])


class TestSelectPool(unittest.TestCase):
    def test_text_pool_size(self):
        rng = np.random.default_rng(8)
        pool = miners(100)
        for _ in range(50):
            selected = select_pool(pool, TaskType.INSTRUCT, rng, ProtocolParams())
            self.assertTrue(8 <= len(selected) <= 15)
            self.assertEqual(len(set(selected)), len(selected))

    def test_small_image_pool_takes_everyone(self):
        selected = select_pool(miners(5), TaskType.IMAGE, np.random.default_rng(0), ProtocolParams())
        self.assertEqual(sorted(selected), [f"miner-{i:03d}" for i in range(5)])

    def test_reproducible(self):
        pool = miners(40)
        a = select_pool(pool, TaskType.IMAGE, np.random.default_rng(99), ProtocolParams())
        b = select_pool(pool, TaskType.IMAGE, np.random.default_rng(99), ProtocolParams())
        self.assertEqual(a, b)

    def test_empty_pool(self):
        with self.assertRaises(ProtocolError):
            select_pool([], TaskType.DPO, np.random.default_rng(0), ProtocolParams())


if __name__ == '__main__':
    unittest.main()
