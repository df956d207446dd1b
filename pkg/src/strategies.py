# strategies.py

import numpy as np

from protocol_types import StrategyKind


class PublicBoard:
    """Configurations of the latest rank-1 submission per task type."""

    def __init__(self):
        self.best = {}

    def publish(self, task_type, theta):
        self.best[task_type] = np.array(theta, dtype=float)

    def best_for(self, task_type):
        return self.best.get(task_type)


class MinerAgent:
    kind = None
    margin = 0.0
    copies_losses = False

    def __init__(self, miner_id, dimension, failure_rate=0.0):
        self.miner_id = miner_id
        self.dimension = dimension
        self.failure_rate = failure_rate

    def fails(self, rng):
        # one draw per call, whatever the rate
        return rng.random() < self.failure_rate

    def random_theta(self, rng):
        return rng.uniform(0.0, 1.0, size=self.dimension)

    def propose(self, task, board, rng):
        raise NotImplementedError

    def observe(self, task_type, theta, loss):
        pass


class RandomSearchAgent(MinerAgent):
    kind = StrategyKind.RANDOM_SEARCH

    def propose(self, task, board, rng):
        return self.random_theta(rng)


class LocalSearchAgent(MinerAgent):
    kind = StrategyKind.LOCAL_SEARCH

    def __init__(self, miner_id, dimension, failure_rate=0.0, step_size=0.08):
        super().__init__(miner_id, dimension, failure_rate)
        self.step_size = step_size
        self.own_best = {}

    def propose(self, task, board, rng):
        best = self.own_best.get(task.task_type)
        if best is None:
            return self.random_theta(rng)
        step = rng.normal(0.0, self.step_size, size=self.dimension)
        return np.clip(best[0] + step, 0.0, 1.0)

    def observe(self, task_type, theta, loss):
        best = self.own_best.get(task_type)
        if best is None or loss < best[1]:
            self.own_best[task_type] = (np.array(theta, dtype=float), loss)


class OverfitterAgent(LocalSearchAgent):
    """Tunes like LocalSearch but trades synthetic loss for test loss."""

    kind = StrategyKind.OVERFITTER

    def __init__(self, miner_id, dimension, failure_rate=0.0, step_size=0.08, margin=0.5):
        super().__init__(miner_id, dimension, failure_rate, step_size)
        self.margin = margin


class UnreliableAgent(LocalSearchAgent):
    kind = StrategyKind.UNRELIABLE


class ExploiterAgent(MinerAgent):
    """Copies the best public configuration, or with ``copies_losses`` the best
    earlier submission's losses in the same task."""

    kind = StrategyKind.EXPLOITER

    def __init__(self, miner_id, dimension, failure_rate=0.0, copies_losses=False):
        super().__init__(miner_id, dimension, failure_rate)
        self.copies_losses = copies_losses

    def propose(self, task, board, rng):
        best = board.best_for(task.task_type)
        if best is None:
            return self.random_theta(rng)
        return best.copy()


def make_agent(kind, miner_id, cfg):
    kind = StrategyKind(kind)
    base_rate = cfg.crash_rate
    if kind is StrategyKind.RANDOM_SEARCH:
        return RandomSearchAgent(miner_id, cfg.dimension, base_rate)
    if kind is StrategyKind.LOCAL_SEARCH:
        return LocalSearchAgent(miner_id, cfg.dimension, base_rate, cfg.local_step_size)
    if kind is StrategyKind.OVERFITTER:
        return OverfitterAgent(miner_id, cfg.dimension, base_rate, cfg.local_step_size, cfg.overfit_margin)
    if kind is StrategyKind.UNRELIABLE:
        rate = 1.0 - (1.0 - base_rate) * (1.0 - cfg.unreliable_failure_rate)
        return UnreliableAgent(miner_id, cfg.dimension, rate, cfg.local_step_size)
    return ExploiterAgent(miner_id, cfg.dimension, base_rate, cfg.exploiter_copy_losses)
