# market_sim.py

import statistics
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from evaluation_engine import evaluate_task, weighted_loss
from event_log import EventKind, EventLog
from landscape import build_landscape
from logger import logger
from miner_selection import select_pool
from protocol_types import (
    TASK_TYPES, MinerProfile, ProtocolError, ProtocolParams, ScoreEntry, ScoreLedger,
    StrategyKind, SubmissionResult, TaskOrigin, TaskState, validate_params
)
from scoring_engine import adjusted_score, score_miners, task_score, task_weight
from strategies import PublicBoard, make_agent
from task_factory import create_task, sample_dataset_size, sample_model_size, sample_task_type

# Submissions arrive uniformly in this fraction of the allocated window
SUBMISSION_WINDOW = (0.5, 1.0)


@dataclass(frozen=True)
class SimConfig:
    n_miners: int = 20
    n_rounds: int = 50
    tasks_per_round: int = 4
    seed: int = 0
    rounds_per_day: int = 4
    max_retries: int = 3
    min_submissions: int = 1
    organic_rate: float = 0.2
    # landscape
    dimension: int = 4
    curvature_min: float = 0.5
    curvature_max: float = 2.0
    noise_sigma: float = 0.02
    test_synth_correlation: float = 0.8
    loss_floor: float = 0.5
    optimum_jitter: float = 0.05
    # population; miners not covered by the counts below use default_strategy
    default_strategy: str = 'LocalSearch'
    n_random_search: int = 0
    n_exploiter: int = 0
    n_overfitter: int = 0
    n_unreliable: int = 0
    local_step_size: float = 0.08
    overfit_margin: float = 0.5
    exploiter_copy_losses: bool = False
    # faults
    unreliable_failure_rate: float = 0.5
    crash_rate: float = 0.0
    params: ProtocolParams = field(default_factory=ProtocolParams)

    def strategy_counts(self):
        counts = {
            StrategyKind.RANDOM_SEARCH: self.n_random_search,
            StrategyKind.EXPLOITER: self.n_exploiter,
            StrategyKind.OVERFITTER: self.n_overfitter,
            StrategyKind.UNRELIABLE: self.n_unreliable,
        }
        default = StrategyKind(self.default_strategy)
        counts[default] = counts.get(default, 0) + self.n_miners - sum(counts.values())
        return counts


def validate_sim_config(cfg):
    def check(condition, name, detail):
        if not condition:
            raise ProtocolError(f"{name}: {detail}")

    for name in ('n_miners', 'n_rounds', 'tasks_per_round', 'rounds_per_day', 'dimension'):
        check(getattr(cfg, name) > 0, name, f"must be > 0, got {getattr(cfg, name)}")
    check(cfg.max_retries >= 0, 'max_retries', f"must be >= 0, got {cfg.max_retries}")
    check(cfg.min_submissions >= 1, 'min_submissions', f"must be >= 1, got {cfg.min_submissions}")
    for name in ('organic_rate', 'test_synth_correlation', 'unreliable_failure_rate', 'crash_rate'):
        value = getattr(cfg, name)
        check(0.0 <= value <= 1.0, name, f"must lie in [0, 1], got {value}")
    for name in ('n_random_search', 'n_exploiter', 'n_overfitter', 'n_unreliable'):
        check(getattr(cfg, name) >= 0, name, "must be >= 0")
    special = cfg.n_random_search + cfg.n_exploiter + cfg.n_overfitter + cfg.n_unreliable
    check(special <= cfg.n_miners, 'strategy counts', f"{special} special agents exceed n_miners={cfg.n_miners}")
    try:
        StrategyKind(cfg.default_strategy)
    except ValueError:
        raise ProtocolError(f"default_strategy: unknown strategy {cfg.default_strategy!r}") from None
    check(0.0 < cfg.curvature_min <= cfg.curvature_max, 'curvature', "need 0 < curvature_min <= curvature_max")
    check(cfg.noise_sigma >= 0, 'noise_sigma', "must be >= 0")
    check(cfg.loss_floor >= 0, 'loss_floor', "must be >= 0")
    check(cfg.optimum_jitter >= 0, 'optimum_jitter', "must be >= 0")
    check(cfg.local_step_size > 0, 'local_step_size', "must be > 0")
    check(cfg.overfit_margin > 0, 'overfit_margin', "must be > 0")
    validate_params(cfg.params)
    return cfg


def retry_delay(initial_hours, attempts, p):
    """Extended allocation for a retried task: initial + c * attempts."""
    if attempts < 1:
        raise ProtocolError(f"attempts: a retry needs attempts >= 1, got {attempts}")
    return initial_hours + p.retry_c * attempts


@dataclass
class RoundRecord:
    round: int
    sim_time: float
    tasks_attempted: int = 0
    tasks_evaluated: int = 0
    tasks_delayed: int = 0
    tasks_dropped: int = 0
    best_weighted_loss: Optional[float] = None
    duplicates: int = 0
    suspicious: int = 0
    failed_submissions: int = 0


@dataclass
class SimSummary:
    rounds: list
    final_report: object
    profiles: list
    task_states: dict
    event_log: EventLog = None
    ledger: ScoreLedger = None

    def median_best_loss(self, first_round, last_round):
        values = [r.best_weighted_loss for r in self.rounds
                  if first_round <= r.round <= last_round and r.best_weighted_loss is not None]
        return statistics.median(values) if values else None

    def to_dict(self):
        states = list(self.task_states.values())
        return {
            'rounds': [asdict(r) for r in self.rounds],
            'tasks': {
                'created': len(states),
                'evaluated': states.count(TaskState.EVALUATED.value),
                'dropped': states.count(TaskState.DROPPED.value),
            },
            'miners': [
                {
                    'miner_id': m.id,
                    'strategy': m.strategy.value,
                    'quality_score': m.quality_score_s_i,
                    'tasks_assigned': m.tasks_assigned,
                    'tasks_completed': m.tasks_completed,
                    'reliability': m.reliability,
                }
                for m in self.profiles
            ],
            'final_scores': [asdict(s) for s in self.final_report.scores],
        }


@dataclass
class SimState:
    cfg: SimConfig
    rng: np.random.Generator
    landscape: object
    agents: dict
    profiles: dict
    event_log: EventLog
    ledger: ScoreLedger = field(default_factory=ScoreLedger)
    board: PublicBoard = field(default_factory=PublicBoard)
    queue: list = field(default_factory=list)
    clock: float = 0.0
    round_index: int = 0
    task_counter: int = 0
    task_states: dict = field(default_factory=dict)
    rounds: list = field(default_factory=list)
    last_report: object = None


def init_state(cfg, event_log=None):
    rng = np.random.default_rng(cfg.seed)
    landscape = build_landscape(cfg, TASK_TYPES, rng)

    kinds = []
    for kind, count in cfg.strategy_counts().items():
        kinds.extend([kind] * count)
    kinds = [kinds[i] for i in rng.permutation(len(kinds))]

    agents, profiles = {}, {}
    for index, kind in enumerate(kinds):
        miner_id = f"miner-{index:03d}"
        agents[miner_id] = make_agent(kind, miner_id, cfg)
        profiles[miner_id] = MinerProfile(id=miner_id, strategy=kind)

    return SimState(cfg=cfg, rng=rng, landscape=landscape, agents=agents, profiles=profiles,
                    event_log=event_log if event_log is not None else EventLog())


def _create_round_tasks(state, round_no, rng):
    cfg, p = state.cfg, state.cfg.params
    organic, synthetic = [], []
    for _ in range(cfg.tasks_per_round):
        origin = TaskOrigin.ORGANIC if rng.random() < cfg.organic_rate else TaskOrigin.SYNTHETIC
        task_type = sample_task_type(rng, p)
        task = create_task(
            sample_model_size(task_type, rng), sample_dataset_size(task_type, rng), rng, p,
            task_type=task_type, task_id=f"task-{state.task_counter:05d}",
            created_at=state.clock, origin=origin,
        )
        state.task_counter += 1
        state.landscape.register_task(task, rng)
        state.task_states[task.id] = task.state.value
        state.event_log.emit(
            state.clock, EventKind.TASK_CREATED, round=round_no, task_id=task.id,
            task_type=task.task_type.value, origin=task.origin.value, model_size_b=task.model_size_b,
            dataset_size=task.dataset_size, n_train=task.partition.n_train, n_test=task.partition.n_test,
            n_synth=task.partition.n_synth, hours_allocated=task.hours_allocated,
        )
        (organic if origin is TaskOrigin.ORGANIC else synthetic).append(task)
    return organic + synthetic


def _collect_submissions(state, task, pool, rng):
    """Run every assigned agent on the landscape; loss copiers go last."""
    start, deadline = state.clock, state.clock + task.hours_allocated
    ordered = sorted(pool, key=lambda m: (state.agents[m].copies_losses, m))
    subs, thetas = [], {}
    p = state.cfg.params
    for miner_id in ordered:
        agent = state.agents[miner_id]
        if agent.fails(rng):
            subs.append(SubmissionResult(task.id, miner_id, None, deadline, completed=False))
            continue
        target = None
        if agent.copies_losses:
            earlier = [s for s in subs if s.completed]
            if earlier:
                target = min(earlier, key=lambda s: (weighted_loss(s.losses, p), s.submitted_at, s.miner_id))
        if target is not None:
            thetas[miner_id] = thetas[target.miner_id]
            submitted_at = target.submitted_at + (deadline - target.submitted_at) / 2.0
            subs.append(SubmissionResult(task.id, miner_id, target.losses, submitted_at))
            continue
        theta = agent.propose(task, state.board, rng)
        losses = state.landscape.evaluate(theta, task, rng, margin=agent.margin)
        submitted_at = start + float(rng.uniform(*SUBMISSION_WINDOW)) * task.hours_allocated
        thetas[miner_id] = theta
        subs.append(SubmissionResult(task.id, miner_id, losses, submitted_at))
    return sorted(subs, key=lambda s: s.miner_id), thetas


def _losses_payload(losses):
    if losses is None:
        return None
    if losses.kind == 'text':
        return {'kind': 'text', 'l_test': float(losses.l_test), 'l_synth': float(losses.l_synth)}
    return {'kind': 'image', 'l_text_guided': float(losses.l_text_guided), 'l_no_text': float(losses.l_no_text)}


def _observe_quality(profile, observation):
    count = profile.scored_tasks
    mean = (profile.quality_score_s_i * count + max(observation, 0.0)) / (count + 1)
    return replace(profile, quality_score_s_i=mean, scored_tasks=count + 1)


def _assign_and_submit(state, task, round_no, rng):
    pool = select_pool([state.profiles[m] for m in sorted(state.profiles)], task.task_type, rng,
                       state.cfg.params)
    state.event_log.emit(state.clock, EventKind.POOL_SELECTED, round=round_no, task_id=task.id,
                         attempt=task.attempts + 1, miner_ids=sorted(pool))
    for miner_id in pool:
        profile = state.profiles[miner_id]
        state.profiles[miner_id] = replace(profile, participated_today=True,
                                           tasks_assigned=profile.tasks_assigned + 1)
    state.task_states[task.id] = TaskState.TRAINING.value

    subs, thetas = _collect_submissions(state, task, pool, rng)
    for sub in subs:
        state.event_log.emit(state.clock, EventKind.SUBMISSION_RECEIVED, round=round_no, task_id=task.id,
                             miner_id=sub.miner_id, completed=sub.completed,
                             submitted_at=float(sub.submitted_at), losses=_losses_payload(sub.losses))
    return subs, thetas


def _handle_failure(state, task, record, round_no, end_time, next_queue):
    cfg = state.cfg
    for outcome in record.outcomes:
        state.profiles[outcome.miner_id] = _observe_quality(state.profiles[outcome.miner_id], 0.0)
        if not outcome.failed:
            profile = state.profiles[outcome.miner_id]
            state.profiles[outcome.miner_id] = replace(profile, tasks_completed=profile.tasks_completed + 1)

    attempts = task.attempts + 1
    if attempts > cfg.max_retries:
        state.task_states[task.id] = TaskState.DROPPED.value
        state.event_log.emit(end_time, EventKind.TASK_DROPPED, round=round_no, task_id=task.id,
                             attempts=attempts, reason='max_retries')
        logger.warning(f"Task dropped: {task.id} failed {attempts} attempts")
        return 'dropped'

    delayed = replace(task, attempts=attempts, state=TaskState.DELAYED,
                      hours_allocated=retry_delay(task.initial_hours, attempts, cfg.params))
    state.task_states[task.id] = TaskState.DELAYED.value
    state.event_log.emit(end_time, EventKind.TASK_DELAYED, round=round_no, task_id=task.id,
                         attempts=attempts, hours_allocated=delayed.hours_allocated)
    logger.info(f"Task {task.id} delayed: attempt {attempts}, {delayed.hours_allocated:.2f}h allocated")
    next_queue.append(delayed)
    return 'delayed'


def _score_evaluated(state, task, record, thetas, round_no, end_time):
    p = state.cfg.params
    weight = task_weight(task.model_size_b, task.hours_allocated)
    n_valid = len(record.valid_set)
    outcomes = []
    for outcome in record.outcomes:
        score = adjusted = None
        observation = 0.0
        if outcome.rank is not None:
            score = task_score(outcome.rank, n_valid, p)
            adjusted = adjusted_score(score, weight)
            observation = adjusted / weight
            state.ledger.append(ScoreEntry(outcome.miner_id, task.id, adjusted, end_time))
        profile = _observe_quality(state.profiles[outcome.miner_id], observation)
        if not outcome.failed:
            profile = replace(profile, tasks_completed=profile.tasks_completed + 1)
            state.agents[outcome.miner_id].observe(task.task_type, thetas[outcome.miner_id],
                                                   outcome.weighted_loss)
        state.profiles[outcome.miner_id] = profile
        outcomes.append({
            'miner_id': outcome.miner_id,
            'weighted_loss': None if outcome.weighted_loss is None else float(outcome.weighted_loss),
            'rank': outcome.rank,
            'duplicate': outcome.duplicate,
            'suspicious': outcome.suspicious,
            'failed': outcome.failed,
            'task_score': score,
            'adjusted_score': adjusted,
        })

    if record.valid_set:
        state.board.publish(task.task_type, thetas[record.valid_set[0]])
    state.task_states[task.id] = TaskState.EVALUATED.value
    state.event_log.emit(end_time, EventKind.TASK_EVALUATED, round=round_no, task_id=task.id,
                         task_weight=weight, valid_set=list(record.valid_set), outcomes=outcomes)


def publish_scores(state, round_no, day):
    miners = sorted(state.profiles)
    report = score_miners(state.ledger, state.clock, miners, state.cfg.params)
    state.last_report = report
    state.event_log.emit(state.clock, EventKind.SCORES_PUBLISHED, round=round_no, day=day,
                         scores=[asdict(s) for s in report.scores])
    top = max(report.scores, key=lambda s: (s.w_chain, s.miner_id))
    logger.info(f"Scores published for day {day}: top miner {top.miner_id} w_chain={top.w_chain:.6f}")
    return report


def run_round(state, rng):
    """Create tasks, assign pools, collect and evaluate submissions, and score one round."""
    cfg = state.cfg
    round_no = state.round_index + 1
    retries = sorted(state.queue, key=lambda t: t.id)
    work = retries + _create_round_tasks(state, round_no, rng)
    state.queue = []
    end_time = state.clock + max(t.hours_allocated for t in work)
    record = RoundRecord(round=round_no, sim_time=end_time, tasks_attempted=len(work))

    submitted = [(task, *_assign_and_submit(state, task, round_no, rng)) for task in work]

    next_queue = []
    best_losses = []
    for task, subs, thetas in sorted(submitted, key=lambda item: item[0].id):
        evaluation = evaluate_task(task, subs, cfg.params, cfg.min_submissions)
        record.failed_submissions += sum(1 for o in evaluation.outcomes if o.failed)
        if evaluation.task_failed:
            status = _handle_failure(state, task, evaluation, round_no, end_time, next_queue)
            if status == 'dropped':
                record.tasks_dropped += 1
            else:
                record.tasks_delayed += 1
            continue
        _score_evaluated(state, task, evaluation, thetas, round_no, end_time)
        record.tasks_evaluated += 1
        record.duplicates += sum(1 for o in evaluation.outcomes if o.duplicate)
        record.suspicious += sum(1 for o in evaluation.outcomes if o.suspicious)
        best_losses.extend(o.weighted_loss for o in evaluation.ranked())

    record.best_weighted_loss = float(min(best_losses)) if best_losses else None
    state.queue = next_queue
    state.clock = end_time
    state.round_index = round_no
    state.rounds.append(record)

    logger.info(f"Round {round_no}: {record.tasks_evaluated} evaluated, {record.tasks_delayed} delayed, "
                f"{record.tasks_dropped} dropped, best loss {record.best_weighted_loss}")

    if round_no % cfg.rounds_per_day == 0:
        publish_scores(state, round_no, round_no // cfg.rounds_per_day)
        for miner_id, profile in state.profiles.items():
            state.profiles[miner_id] = replace(profile, participated_today=False)
    return state


def run_simulation(cfg, event_log=None):
    """Run ``cfg.n_rounds`` rounds and summarise them.

    Tasks still waiting for a retry when the horizon ends are dropped with
    reason "horizon", so every created task ends Evaluated or Dropped.
    """
    validate_sim_config(cfg)
    state = init_state(cfg, event_log)
    logger.debug(f"Simulation start: {cfg.n_miners} miners, {cfg.n_rounds} rounds, seed {cfg.seed}")

    for _ in range(cfg.n_rounds):
        run_round(state, state.rng)

    for task in sorted(state.queue, key=lambda t: t.id):
        state.task_states[task.id] = TaskState.DROPPED.value
        state.event_log.emit(state.clock, EventKind.TASK_DROPPED, round=cfg.n_rounds, task_id=task.id,
                             attempts=task.attempts, reason='horizon')
        logger.warning(f"Task dropped: {task.id} still delayed at the horizon")
    state.queue = []

    if cfg.n_rounds % cfg.rounds_per_day != 0 or state.last_report is None:
        publish_scores(state, cfg.n_rounds, cfg.n_rounds // cfg.rounds_per_day + 1)

    summary = SimSummary(
        rounds=state.rounds,
        final_report=state.last_report,
        profiles=[state.profiles[m] for m in sorted(state.profiles)],
        task_states=dict(state.task_states),
        event_log=state.event_log,
        ledger=state.ledger,
    )
    logger.info(f"Simulation complete: {len(state.task_states)} tasks, {len(state.ledger)} ledger entries, "
                f"{len(state.event_log.records)} events")
    return summary
