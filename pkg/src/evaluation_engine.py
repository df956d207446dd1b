# evaluation_engine.py

import math
from dataclasses import dataclass

import numpy as np

from logger import logger
from protocol_types import EvaluationRecord, MinerOutcome, ProtocolError, TextLosses


@dataclass(frozen=True)
class DuplicateCluster:
    credited: str
    members: tuple

    @property
    def flagged(self):
        return tuple(m for m in self.members if m != self.credited)


def mean_loss(per_example):
    """Average per-example losses into a single test or synthetic loss."""
    values = np.asarray(list(per_example), dtype=float)
    if values.size == 0:
        raise ProtocolError("per_example: cannot average an empty loss list")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ProtocolError("per_example: losses must be finite and >= 0")
    return float(values.mean())


def _check_losses(*losses):
    for value in losses:
        if not (math.isfinite(value) and value >= 0):
            raise ProtocolError(f"losses: must be finite and >= 0, got {value}")


def _convex(weight, first, second):
    # weight * first + (1 - weight) * second, kept inside [min, max] of the inputs
    value = second + weight * (first - second)
    return min(max(value, min(first, second)), max(first, second))


def weighted_loss_text(l_test, l_synth, p):
    _check_losses(l_test, l_synth)
    return _convex(p.omega_test_weight, l_test, l_synth)


def weighted_loss_image(l_text_guided, l_no_text, p):
    _check_losses(l_text_guided, l_no_text)
    return _convex(p.delta_image_weight, l_text_guided, l_no_text)


def weighted_loss(losses, p):
    if isinstance(losses, TextLosses):
        return weighted_loss_text(losses.l_test, losses.l_synth, p)
    return weighted_loss_image(losses.l_text_guided, losses.l_no_text, p)


def _arrival_key(sub):
    return (sub.submitted_at, sub.miner_id)


def detect_duplicates(subs, p):
    """Group submissions whose loss pairs are within epsilon of each other.

    Closeness is taken to its transitive closure; in every cluster of two or more
    only the earliest arrival is credited.

    Returns:
        list[DuplicateCluster]: one entry per cluster with at least two members,
        ordered by the credited member's arrival.
    """
    completed = sorted((s for s in subs if s.completed), key=_arrival_key)
    eps = p.epsilon_duplicate
    parent = list(range(len(completed)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(completed)):
        a = completed[i].losses.components()
        for j in range(i + 1, len(completed)):
            b = completed[j].losses.components()
            if abs(a[0] - b[0]) < eps and abs(a[1] - b[1]) < eps:
                root_i, root_j = find(i), find(j)
                if root_i != root_j:
                    parent[max(root_i, root_j)] = min(root_i, root_j)

    groups = {}
    for index in range(len(completed)):
        groups.setdefault(find(index), []).append(completed[index].miner_id)

    # roots are the smallest index in each group, i.e. the earliest arrival
    clusters = [
        DuplicateCluster(credited=completed[root].miner_id, members=tuple(members))
        for root, members in sorted(groups.items())
        if len(members) > 1
    ]
    if clusters:
        logger.debug(f"Duplicate clusters: {[(c.credited, c.members) for c in clusters]}")
    return clusters


def detect_suspicious(subs, p):
    """Flag text submissions whose synthetic loss exceeds test loss by alpha population-sigmas.

    Returns the set of flagged miner ids; fewer than two completed text
    submissions flag nobody.
    """
    completed = [s for s in subs if s.completed and isinstance(s.losses, TextLosses)]
    if len(completed) < 2:
        return frozenset()
    test_losses = np.array([s.losses.l_test for s in completed], dtype=float)
    sigma = float(np.std(test_losses))
    margin = p.alpha_suspicion * sigma
    return frozenset(
        s.miner_id for s in completed if s.losses.l_synth > s.losses.l_test + margin
    )


def evaluate_task(task, subs, p, min_submissions=1):
    """Turn a task's submissions into ranked, flagged outcomes.

    Duplicates are removed first; suspicion is judged among the remaining
    submissions (text tasks only). Valid submissions rank by weighted loss, then
    arrival time, then miner id. A task with fewer than ``min_submissions``
    completed submissions comes back with ``task_failed`` set.
    """
    for sub in subs:
        if sub.task_id != task.id:
            raise ProtocolError(f"task_id: submission from {sub.miner_id} references {sub.task_id}, not {task.id}")

    by_miner = {}
    for sub in subs:
        if sub.miner_id in by_miner:
            raise ProtocolError(f"submissions: miner {sub.miner_id} submitted twice to {task.id}")
        by_miner[sub.miner_id] = sub

    completed = [s for s in subs if s.completed]
    if len(completed) < max(min_submissions, 1):
        logger.warning(f"Task {task.id} received {len(completed)} completed submissions; marking failed")
        outcomes = tuple(
            MinerOutcome(miner_id=s.miner_id, weighted_loss=None, rank=None, failed=not s.completed)
            for s in sorted(subs, key=lambda s: s.miner_id)
        )
        return EvaluationRecord(task_id=task.id, outcomes=outcomes, valid_set=(), task_failed=True)

    duplicates = set()
    for cluster in detect_duplicates(completed, p):
        duplicates.update(cluster.flagged)

    originals = [s for s in completed if s.miner_id not in duplicates]
    suspicious = set() if task.task_type.is_image else set(detect_suspicious(originals, p))

    losses = {s.miner_id: weighted_loss(s.losses, p) for s in completed}
    valid = [s for s in originals if s.miner_id not in suspicious]
    valid.sort(key=lambda s: (losses[s.miner_id], s.submitted_at, s.miner_id))
    ranks = {s.miner_id: rank for rank, s in enumerate(valid, start=1)}

    outcomes = tuple(
        MinerOutcome(
            miner_id=s.miner_id,
            weighted_loss=losses.get(s.miner_id),
            rank=ranks.get(s.miner_id),
            duplicate=s.miner_id in duplicates,
            suspicious=s.miner_id in suspicious,
            failed=not s.completed,
        )
        for s in sorted(subs, key=lambda s: s.miner_id)
    )
    logger.debug(f"Evaluated task {task.id}: {len(valid)} valid, {len(duplicates)} duplicate, "
                 f"{len(suspicious)} suspicious, {len(subs) - len(completed)} failed")
    return EvaluationRecord(
        task_id=task.id,
        outcomes=outcomes,
        valid_set=tuple(s.miner_id for s in valid),
        task_failed=False,
    )
