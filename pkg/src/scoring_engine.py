# scoring_engine.py

import math
from dataclasses import dataclass

from logger import logger
from protocol_types import ProtocolError

HOURS_PER_DAY = 24.0


@dataclass(frozen=True)
class MinerFinalScore:
    miner_id: str
    s_temporal: float
    x_normalised: float
    s_final: float
    w_chain: float


@dataclass(frozen=True)
class FinalScoreReport:
    scores: tuple

    def by_miner(self):
        return {s.miner_id: s for s in self.scores}


def task_score(rank, n_valid, p):
    if not 1 <= rank <= n_valid:
        raise ProtocolError(f"rank: {rank} outside 1..{n_valid}")
    if rank == 1:
        return p.s_first
    if rank > n_valid * (1.0 - p.rho_penalty):
        return p.s_penalty
    return 0.0


def task_weight(model_size_b, hours):
    """Complexity multiplier max(1, 2 * sqrt(model size in B * hours))."""
    if model_size_b <= 0 or hours <= 0:
        raise ProtocolError(f"task_weight: inputs must be > 0, got ({model_size_b}, {hours})")
    return max(1.0, 2.0 * math.sqrt(model_size_b * hours))


def adjusted_score(score, weight):
    return score * weight


def window_sums(ledger, now, miners, days):
    """Sum each miner's adjusted scores with timestamp in (now - days, now]."""
    start = now - days * HOURS_PER_DAY
    sums = {miner_id: 0.0 for miner_id in miners}
    for entry in ledger.entries:
        if entry.miner_id in sums and start < entry.timestamp <= now:
            sums[entry.miner_id] += entry.adjusted_score
    return sums


def temporal_aggregate(ledger, now, miners, p):
    """Window-weighted, max-abs normalised score per miner.

    Each window's sums are divided by the largest absolute sum across miners, so
    every normalised value lies in [-1, 1] and penalties keep their sign.
    """
    window_total = sum(weight for _, weight in p.window_weights)
    if abs(window_total - 1.0) > 1e-9:
        raise ProtocolError(f"window_weights: must sum to 1.0, got {window_total!r}")

    miners = list(miners)
    temporal = {miner_id: 0.0 for miner_id in miners}
    for days, weight in p.window_weights:
        sums = window_sums(ledger, now, miners, days)
        scale = max((abs(v) for v in sums.values()), default=0.0)
        if scale == 0.0:
            continue
        for miner_id, value in sums.items():
            temporal[miner_id] += weight * (value / scale)
    return temporal


def sigmoid_score(x, p):
    return (1.0 / (1.0 + math.exp(-p.gamma_steepness * (x - p.mu_shift)))) ** p.nu_power


def final_score(x, p):
    if not (0.0 <= x <= 1.0):
        raise ProtocolError(f"x: normalised score must lie in [0, 1], got {x}")
    return p.beta_sigmoid * sigmoid_score(x, p) + p.omega_linear * x


def normalise_quality(temporal):
    """x_i = s_temporal_i / cohort max, clamped to [0, 1]; all zero when the max is <= 0."""
    top = max(temporal.values(), default=0.0)
    if top <= 0:
        return {miner_id: 0.0 for miner_id in temporal}
    return {miner_id: min(1.0, max(0.0, value / top)) for miner_id, value in temporal.items()}


def chain_weights(finals, p):
    if not 0.0 <= p.vtrust <= 1.0:
        raise ProtocolError(f"vtrust: must lie in [0, 1], got {p.vtrust}")
    return {miner_id: s_final * p.vtrust for miner_id, s_final in finals.items()}


def score_miners(ledger, now, miners, p):
    """Run the full temporal -> normalised -> sigmoid -> chain-weight pipeline."""
    temporal = temporal_aggregate(ledger, now, miners, p)
    xs = normalise_quality(temporal)
    finals = {miner_id: final_score(x, p) for miner_id, x in xs.items()}
    chain = chain_weights(finals, p)
    report = FinalScoreReport(scores=tuple(
        MinerFinalScore(
            miner_id=miner_id,
            s_temporal=temporal[miner_id],
            x_normalised=xs[miner_id],
            s_final=finals[miner_id],
            w_chain=chain[miner_id],
        )
        for miner_id in sorted(temporal)
    ))
    if report.scores:
        leader = max(report.scores, key=lambda s: (s.w_chain, s.miner_id))
        logger.debug(f"Scored {len(report.scores)} miners at t={now:.2f}h; "
                     f"leader {leader.miner_id} w_chain={leader.w_chain:.6f}")
    return report
