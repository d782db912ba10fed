"""Gradient-alignment measurements and accuracy metrics."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .numerics import InputError


def flatten_grads(grads: dict) -> np.ndarray:
    """Concatenate a gradient map into one vector, in sorted key order."""
    return np.concatenate([np.ravel(grads[k]) for k in sorted(grads)])


@dataclass
class AlignmentSample:
    """Dot product, norms, and cosine of two flattened gradient vectors."""

    step: int
    dot: float
    norm_a: float
    norm_b: float

    @property
    def cosine(self) -> float:
        denom = self.norm_a * self.norm_b
        return self.dot / denom if denom > 0 else 0.0


def grad_dot(g1: dict, g2: dict, step: int = 0) -> AlignmentSample:
    """Alignment between two gradient maps over identical key sets.

    Positive dot products indicate transfer between the two objectives,
    negative ones interference.
    """
    if set(g1) != set(g2):
        raise InputError("gradient maps must share the same keys")
    a, b = flatten_grads(g1), flatten_grads(g2)
    return AlignmentSample(step, float(a @ b), float(np.linalg.norm(a)), float(np.linalg.norm(b)))


def count_violations(samples_by_task: dict) -> dict:
    """Per task, the number of alignment samples with a negative dot product."""
    return {task: sum(1 for s in samples if s.dot < 0)
            for task, samples in samples_by_task.items()}


def macro_accuracy(per_task: list) -> float:
    """Unweighted mean of per-task accuracies."""
    if not per_task:
        raise InputError("need at least one task accuracy")
    return float(np.mean(per_task))


def gate_stats(gate_records) -> tuple:
    """(mean, fraction > 0.99, fraction < 0.01) over all examples and units."""
    values = np.concatenate([g.values.ravel() for g in gate_records])
    return (
        float(values.mean()),
        float((values > 0.99).mean()),
        float((values < 0.01).mean()),
    )


@dataclass
class MetricsRecord:
    """One evaluation event. Macro accuracy is the unweighted task mean."""

    method: str
    seed: int
    per_task_accuracy: list
    macro_accuracy: float
    memory_size: int = 0
    memory_offers: int = 0
    replay_episodes: int = 0
    replay_skips: int = 0
    violations_per_task: dict = field(default_factory=dict)
    gate_mean: float | None = None
    gate_frac_high: float | None = None
    gate_frac_low: float | None = None
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)
