# protocol_types.py

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Optional, Tuple, Union

from logger import logger


class ProtocolError(ValueError):
    """Raised when a parameter, precondition or invariant is violated.

    The message always starts with the name of the violated rule so callers
    (and the CLI) can report it verbatim.
    """


class TaskType(str, Enum):
    INSTRUCT = 'Instruct'
    DPO = 'DPO'
    GRPO = 'GRPO'
    IMAGE = 'Image'

    @property
    def is_image(self):
        return self is TaskType.IMAGE


TASK_TYPES = (TaskType.INSTRUCT, TaskType.DPO, TaskType.GRPO, TaskType.IMAGE)


class TaskState(str, Enum):
    PENDING = 'Pending'
    DELAYED = 'Delayed'
    TRAINING = 'Training'
    EVALUATED = 'Evaluated'
    DROPPED = 'Dropped'


class TaskOrigin(str, Enum):
    ORGANIC = 'Organic'
    SYNTHETIC = 'Synthetic'


class StrategyKind(str, Enum):
    RANDOM_SEARCH = 'RandomSearch'
    LOCAL_SEARCH = 'LocalSearch'
    EXPLOITER = 'Exploiter'
    OVERFITTER = 'Overfitter'
    UNRELIABLE = 'Unreliable'


@dataclass(frozen=True)
class ProtocolParams:
    # task-type distribution
    rho_instruct: float = 0.25
    rho_dpo: float = 0.1
    rho_grpo: float = 0.3
    rho_image: float = 0.35
    # miner selection
    alpha_default_score: float = 2.0
    gamma_min_score: float = 0.01
    lambda_top_multiplier: float = 3.0
    # dataset partition
    rho_test: float = 0.1
    rho_synth: float = 1.0
    kappa_test: int = 1000
    kappa_synth: int = 300
    # evaluation
    omega_test_weight: float = 0.7
    delta_image_weight: float = 0.25
    epsilon_duplicate: float = 1e-6
    alpha_suspicion: float = 0.5
    # task scores
    s_first: float = 3.0
    s_penalty: float = -1.0
    rho_penalty: float = 0.25
    # (window length in days, weight)
    window_weights: Tuple[Tuple[int, float], ...] = ((1, 0.3), (3, 0.3), (7, 0.4))
    # final score transform
    beta_sigmoid: float = 0.7
    omega_linear: float = 0.05
    gamma_steepness: float = 9.0
    mu_shift: float = 0.5
    nu_power: float = 0.75
    # fault tolerance
    text_pool: Tuple[int, int] = (8, 15)
    image_pool: Tuple[int, int] = (15, 25)
    retry_c: float = 1.0
    vtrust: float = 1.0

    def category_weights(self):
        return {
            TaskType.INSTRUCT: self.rho_instruct,
            TaskType.DPO: self.rho_dpo,
            TaskType.GRPO: self.rho_grpo,
            TaskType.IMAGE: self.rho_image,
        }

    def pool_range(self, task_type):
        return self.image_pool if task_type.is_image else self.text_pool


PARAM_FIELDS = tuple(f.name for f in fields(ProtocolParams))

_UNIT_INTERVAL_FIELDS = (
    'rho_instruct', 'rho_dpo', 'rho_grpo', 'rho_image', 'rho_test', 'rho_synth',
    'omega_test_weight', 'delta_image_weight', 'rho_penalty',
    'beta_sigmoid', 'omega_linear', 'vtrust',
)


def _check(condition, name, detail):
    if not condition:
        raise ProtocolError(f"{name}: {detail}")


def validate_params(p):
    """Return ``p`` unchanged if every ProtocolParams invariant holds.

    Raises:
        ProtocolError: naming the first violated rule.
    """
    for name in _UNIT_INTERVAL_FIELDS:
        value = getattr(p, name)
        _check(math.isfinite(value) and 0.0 <= value <= 1.0, name, f"must lie in [0, 1], got {value}")

    weight_sum = sum(p.category_weights().values())
    _check(abs(weight_sum - 1.0) <= 1e-9, 'category weights', f"rho values must sum to 1.0, got {weight_sum!r}")

    _check(p.kappa_test > 0, 'kappa_test', f"must be > 0, got {p.kappa_test}")
    _check(p.kappa_synth > 0, 'kappa_synth', f"must be > 0, got {p.kappa_synth}")
    _check(p.rho_test > 0, 'rho_test', "must be > 0 so the test split is non-empty")

    for name in ('text_pool', 'image_pool'):
        lo, hi = getattr(p, name)
        _check(1 <= lo <= hi, name, f"range must satisfy 1 <= min <= max, got ({lo}, {hi})")

    _check(len(p.window_weights) > 0, 'window_weights', "at least one window is required")
    for days, weight in p.window_weights:
        _check(days > 0 and weight >= 0, 'window_weights', f"invalid window ({days}, {weight})")
    window_sum = sum(weight for _, weight in p.window_weights)
    _check(abs(window_sum - 1.0) <= 1e-9, 'window_weights', f"weights must sum to 1.0, got {window_sum!r}")

    _check(p.alpha_default_score > 0, 'alpha_default_score', "must be > 0")
    _check(p.gamma_min_score > 0, 'gamma_min_score', "must be > 0")
    _check(p.lambda_top_multiplier >= 1.0, 'lambda_top_multiplier', "must be >= 1")
    _check(p.epsilon_duplicate >= 0, 'epsilon_duplicate', "must be >= 0")
    _check(p.alpha_suspicion >= 0, 'alpha_suspicion', "must be >= 0")
    _check(p.gamma_steepness > 0, 'gamma_steepness', "must be > 0")
    _check(p.nu_power > 0, 'nu_power', "must be > 0")
    _check(p.retry_c >= 0, 'retry_c', "must be >= 0")

    logger.debug(f"Protocol parameters validated: {p}")
    return p


@dataclass(frozen=True)
class PartitionPlan:
    n_train: int
    n_test: int
    n_synth: int

    def __post_init__(self):
        _check(self.n_train > 0 and self.n_test > 0 and self.n_synth > 0,
               'partition', f"all splits must be positive, got {self}")


@dataclass(frozen=True)
class TaskSpec:
    id: str
    task_type: TaskType
    model_size_b: float
    dataset_size: int
    partition: PartitionPlan
    hours_allocated: float
    attempts: int = 0
    created_at: float = 0.0
    state: TaskState = TaskState.PENDING
    origin: TaskOrigin = TaskOrigin.SYNTHETIC
    initial_hours: Optional[float] = None

    def __post_init__(self):
        _check(self.hours_allocated > 0, 'hours_allocated', f"must be > 0, got {self.hours_allocated}")
        _check(self.attempts >= 0, 'attempts', f"must be >= 0, got {self.attempts}")
        _check(self.model_size_b > 0, 'model_size_b', f"must be > 0, got {self.model_size_b}")
        _check(self.dataset_size > 0, 'dataset_size', f"must be > 0, got {self.dataset_size}")
        if self.initial_hours is None:
            object.__setattr__(self, 'initial_hours', self.hours_allocated)


@dataclass(frozen=True)
class MinerProfile:
    id: str
    strategy: StrategyKind
    quality_score_s_i: float = 0.0
    participated_today: bool = False
    tasks_assigned: int = 0
    tasks_completed: int = 0
    scored_tasks: int = 0

    def __post_init__(self):
        _check(self.quality_score_s_i >= 0, 'quality_score_s_i', f"must be >= 0, got {self.quality_score_s_i}")
        _check(0 <= self.tasks_completed <= self.tasks_assigned, 'reliability',
               f"completed {self.tasks_completed} exceeds assigned {self.tasks_assigned}")

    @property
    def reliability(self):
        if self.tasks_assigned == 0:
            return 1.0
        return self.tasks_completed / self.tasks_assigned


@dataclass(frozen=True)
class TextLosses:
    l_test: float
    l_synth: float
    kind = 'text'

    def components(self):
        return (self.l_test, self.l_synth)


@dataclass(frozen=True)
class ImageLosses:
    l_text_guided: float
    l_no_text: float
    kind = 'image'

    def components(self):
        return (self.l_text_guided, self.l_no_text)


Losses = Union[TextLosses, ImageLosses]


@dataclass(frozen=True)
class SubmissionResult:
    task_id: str
    miner_id: str
    losses: Optional[Losses]
    submitted_at: float
    completed: bool = True

    def __post_init__(self):
        if self.completed:
            _check(self.losses is not None, 'losses', f"completed submission from {self.miner_id} has no losses")
            for value in self.losses.components():
                _check(math.isfinite(value) and value >= 0, 'losses',
                       f"loss must be finite and >= 0, got {value} from {self.miner_id}")


@dataclass(frozen=True)
class MinerOutcome:
    miner_id: str
    weighted_loss: Optional[float]
    rank: Optional[int]
    duplicate: bool = False
    suspicious: bool = False
    failed: bool = False


@dataclass(frozen=True)
class EvaluationRecord:
    task_id: str
    outcomes: Tuple[MinerOutcome, ...]
    valid_set: Tuple[str, ...]
    task_failed: bool = False

    def outcome_for(self, miner_id):
        for outcome in self.outcomes:
            if outcome.miner_id == miner_id:
                return outcome
        raise KeyError(miner_id)

    def ranked(self):
        """Valid outcomes in rank order."""
        valid = [o for o in self.outcomes if o.rank is not None]
        return sorted(valid, key=lambda o: o.rank)


@dataclass(frozen=True)
class ScoreEntry:
    miner_id: str
    task_id: str
    adjusted_score: float
    timestamp: float


@dataclass
class ScoreLedger:
    """Append-only record of adjusted scores, owned by the simulation loop."""

    _entries: list = field(default_factory=list)
    _keys: set = field(default_factory=set)

    @property
    def entries(self):
        return tuple(self._entries)

    def append(self, entry):
        if self._entries and entry.timestamp < self._entries[-1].timestamp:
            raise ProtocolError(
                f"ledger order: timestamp {entry.timestamp} precedes {self._entries[-1].timestamp}")
        key = (entry.miner_id, entry.task_id)
        if key in self._keys:
            raise ProtocolError(f"ledger uniqueness: {key} already recorded")
        self._keys.add(key)
        self._entries.append(entry)

    def __len__(self):
        return len(self._entries)
