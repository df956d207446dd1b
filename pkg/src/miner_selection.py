# miner_selection.py

from dataclasses import dataclass

import numpy as np

from logger import logger
from protocol_types import ProtocolError


@dataclass(frozen=True)
class SelectionEntry:
    miner_id: str
    weight: float
    rank: int
    prob: float


def selection_weight(m, p):
    """alpha for a miner's first task of the day, otherwise max(s_i, gamma)."""
    if not m.participated_today:
        return p.alpha_default_score
    return max(m.quality_score_s_i, p.gamma_min_score)


def rank_probabilities(pool, p):
    """Sort miners by weight (ties by id) and assign position-based relative probabilities.

    The i-th ranked miner gets ``lambda - (i - 1) * (lambda - 1) / |M|``; the values
    are left un-normalised.
    """
    if not pool:
        raise ProtocolError("pool: cannot rank an empty miner pool")

    weighted = [(selection_weight(m, p), m.id) for m in pool]
    weighted.sort(key=lambda item: (-item[0], item[1]))

    lam = p.lambda_top_multiplier
    size = len(weighted)
    step = (lam - 1.0) / size
    return [
        SelectionEntry(miner_id=miner_id, weight=weight, rank=i, prob=lam - (i - 1) * step)
        for i, (weight, miner_id) in enumerate(weighted, start=1)
    ]


def draw_without_replacement(entries, k, rng):
    """Draw ``k`` entries proportionally to ``prob`` without replacement.

    Returns the drawn miner ids in draw order.
    """
    if not entries or k <= 0:
        return []
    ids = np.array([e.miner_id for e in entries])
    probs = np.array([e.prob for e in entries], dtype=float)
    picks = rng.choice(len(ids), size=min(k, len(ids)), replace=False, p=probs / probs.sum())
    return [str(miner_id) for miner_id in ids[picks]]


def select_pool(pool, task_type, rng, p):
    """Pick the miners assigned to one task.

    The target size is drawn uniformly from the task type's pool range and capped
    at the number of available miners. Returns the selected ids in draw order.
    """
    if not pool:
        raise ProtocolError("pool: at least one miner is required")

    lo, hi = p.pool_range(task_type)
    target = min(int(rng.integers(lo, hi + 1)), len(pool))
    entries = rank_probabilities(pool, p)
    selected = draw_without_replacement(entries, target, rng)
    logger.debug(f"Selected {len(selected)}/{len(pool)} miners for a {task_type.value} task "
                 f"(target {target})")
    return selected
