# task_factory.py

import math
import uuid

import numpy as np

from logger import logger
from protocol_types import (
    TASK_TYPES, PartitionPlan, ProtocolError, TaskOrigin, TaskSpec, TaskState, TaskType
)

# Text time bins: [lo, hi) dataset-size bounds -> (min hours, max hours)
TEXT_TIME_BINS = [
    (10_000, 25_000, (3.0, 6.0)),
    (25_000, 50_000, (4.0, 8.0)),
    (50_000, 100_000, (5.0, 9.0)),
    (100_000, 500_000, (7.0, 10.0)),
]
IMAGE_HOURS = (1.0, 2.0)
MIN_DATASET_SIZE = 20

# Base model sizes in billions of parameters
MODEL_CATALOGUE = {
    'text': (0.07, 1.5, 7.0, 8.0, 70.0),
    'image': (3.5, 12.0),
}
TEXT_DATASET_RANGE = (10_000, 500_000)
IMAGE_DATASET_RANGE = (20, 50)


def sample_task_type(rng, p):
    """Draw a task category with probability equal to its rho weight."""
    weights = np.array([p.category_weights()[t] for t in TASK_TYPES], dtype=float)
    total = weights.sum()
    if abs(total - 1.0) > 1e-9:
        raise ProtocolError(f"category weights: rho values must sum to 1.0, got {total!r}")
    index = rng.choice(len(TASK_TYPES), p=weights / total)
    return TASK_TYPES[int(index)]


def plan_partition(dataset_size, p):
    """Split a dataset into train/test sizes and size the generated synthetic set.

    Synthetic examples are generated rather than carved out of the dataset, so
    only the test split is subtracted from the training portion.
    """
    if dataset_size < MIN_DATASET_SIZE:
        raise ProtocolError(
            f"dataset_size: {dataset_size} examples is below the minimum of {MIN_DATASET_SIZE}")
    n_test = min(math.floor(dataset_size * p.rho_test), p.kappa_test)
    n_synth = min(math.floor(dataset_size * p.rho_synth), p.kappa_synth)
    if n_test < 1 or n_synth < 1 or dataset_size - n_test < 1:
        raise ProtocolError(
            f"dataset_size: {dataset_size} examples is too small to yield a non-empty test split")
    return PartitionPlan(n_train=dataset_size - n_test, n_test=n_test, n_synth=n_synth)


def time_bin(task_type, dataset_size):
    if task_type.is_image:
        return IMAGE_HOURS
    if dataset_size < TEXT_TIME_BINS[0][0]:
        return TEXT_TIME_BINS[0][2]
    for lo, hi, hours in TEXT_TIME_BINS:
        if lo <= dataset_size < hi:
            return hours
    return TEXT_TIME_BINS[-1][2]


def allocate_time(task_type, dataset_size, rng):
    if dataset_size <= 0:
        raise ProtocolError(f"dataset_size: must be > 0, got {dataset_size}")
    lo, hi = time_bin(task_type, dataset_size)
    return float(rng.uniform(lo, hi))


def sample_model_size(task_type, rng):
    sizes = MODEL_CATALOGUE['image' if task_type.is_image else 'text']
    return float(sizes[int(rng.integers(len(sizes)))])


def sample_dataset_size(task_type, rng):
    lo, hi = IMAGE_DATASET_RANGE if task_type.is_image else TEXT_DATASET_RANGE
    return int(rng.integers(lo, hi + 1))


def create_task(model_size_b, dataset_size, rng, p, task_type=None, task_id=None,
                created_at=0.0, origin=TaskOrigin.SYNTHETIC):
    """Build a Pending TaskSpec with a sampled type, planned partition and time budget.

    Args:
        model_size_b (float): Base model size in billions of parameters.
        dataset_size (int): Number of examples in the supplied dataset.
        rng (numpy.random.Generator): Source of all randomness.
        p (ProtocolParams): Protocol constants.
        task_type (TaskType, optional): Fixes the category instead of sampling it.
        task_id (str, optional): Identifier; a fresh uuid4 hex when omitted.
        created_at (float): Simulated creation time in hours.
        origin (TaskOrigin): Organic (user) or synthetic (benchmark) provenance.

    Returns:
        TaskSpec: The new task.
    """
    if model_size_b <= 0:
        raise ProtocolError(f"model_size_b: must be > 0, got {model_size_b}")
    if dataset_size <= 0:
        raise ProtocolError(f"dataset_size: must be > 0, got {dataset_size}")

    if task_type is None:
        task_type = sample_task_type(rng, p)
    partition = plan_partition(dataset_size, p)
    hours = allocate_time(task_type, dataset_size, rng)

    task = TaskSpec(
        id=task_id or uuid.uuid4().hex,
        task_type=TaskType(task_type),
        model_size_b=float(model_size_b),
        dataset_size=int(dataset_size),
        partition=partition,
        hours_allocated=hours,
        attempts=0,
        created_at=float(created_at),
        state=TaskState.PENDING,
        origin=TaskOrigin(origin),
    )
    logger.debug(f"Created task {task.id}: {task.task_type.value}, {task.model_size_b}B, "
                 f"|D|={task.dataset_size}, {task.hours_allocated:.2f}h")
    return task
