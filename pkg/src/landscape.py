# landscape.py
# Synthetic hyperparameter landscape standing in for real fine-tuning runs.

from dataclasses import dataclass, field

import numpy as np

from logger import logger
from protocol_types import ImageLosses, ProtocolError, TextLosses


@dataclass
class Landscape:
    """Separable quadratic bowl with correlated Gaussian noise.

    Each task type has a base optimum; every task jitters it slightly, so skill
    learned on one task transfers to the next of the same type.
    """

    dimension: int
    curvature: np.ndarray
    type_optima: dict
    noise_sigma: float = 0.02
    test_synth_correlation: float = 0.8
    loss_floor: float = 0.5
    optimum_jitter: float = 0.05
    optima: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 1:
            raise ProtocolError(f"dimension: must be >= 1, got {self.dimension}")
        if self.curvature.shape != (self.dimension,) or np.any(self.curvature <= 0):
            raise ProtocolError("curvature: one positive scale per axis is required")
        if self.noise_sigma < 0:
            raise ProtocolError(f"noise_sigma: must be >= 0, got {self.noise_sigma}")
        if not 0.0 <= self.test_synth_correlation <= 1.0:
            raise ProtocolError(
                f"test_synth_correlation: must lie in [0, 1], got {self.test_synth_correlation}")

    def register_task(self, task, rng):
        base = self.type_optima[task.task_type]
        jitter = rng.normal(0.0, self.optimum_jitter, size=self.dimension) if self.optimum_jitter > 0 else 0.0
        self.optima[task.id] = np.clip(base + jitter, 0.0, 1.0)
        return self.optima[task.id]

    def optimum_for(self, task):
        try:
            return self.optima[task.id]
        except KeyError:
            raise ProtocolError(f"landscape: task {task.id} has no registered optimum") from None

    def base_loss(self, theta, task):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dimension,) or np.any(theta < 0.0) or np.any(theta > 1.0):
            raise ProtocolError(f"theta: must be a point in [0, 1]^{self.dimension}")
        delta = theta - self.optimum_for(task)
        return self.loss_floor + float(np.sum(self.curvature * delta * delta))

    def evaluate(self, theta, task, rng, margin=0.0):
        """Return noisy (test, synthetic) losses, or (text-guided, no-text) for image tasks.

        ``margin`` models an overfitting miner on text tasks: it is taken off the
        test loss and added to the synthetic loss. Image losses ignore it.
        """
        base = self.base_loss(theta, task)
        z_first, z_second = rng.standard_normal(2)
        rho = self.test_synth_correlation
        first_noise = self.noise_sigma * z_first
        second_noise = self.noise_sigma * (rho * z_first + np.sqrt(1.0 - rho * rho) * z_second)
        if task.task_type.is_image:
            return ImageLosses(l_text_guided=max(0.0, float(base + first_noise)),
                               l_no_text=max(0.0, float(base + second_noise)))
        first = max(0.0, float(base + first_noise - margin))
        second = max(0.0, float(base + second_noise + margin))
        return TextLosses(l_test=first, l_synth=second)


def build_landscape(cfg, task_types, rng):
    """Draw curvature and per-type optima for a simulation run."""
    curvature = rng.uniform(cfg.curvature_min, cfg.curvature_max, size=cfg.dimension)
    type_optima = {t: rng.uniform(0.0, 1.0, size=cfg.dimension) for t in task_types}
    landscape = Landscape(
        dimension=cfg.dimension,
        curvature=curvature,
        type_optima=type_optima,
        noise_sigma=cfg.noise_sigma,
        test_synth_correlation=cfg.test_synth_correlation,
        loss_floor=cfg.loss_floor,
        optimum_jitter=cfg.optimum_jitter,
    )
    logger.debug(f"Landscape: d={cfg.dimension}, curvature={np.round(curvature, 3).tolist()}")
    return landscape


def landscape_eval(landscape, theta, task, rng, margin=0.0):
    return landscape.evaluate(theta, task, rng, margin=margin)
