"""
Adam with constant, exponential-decay and cosine-decay learning rates
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence

import numpy as np

from errors import ConfigError, StructuralError, TrainingDivergence

logger = logging.getLogger(__name__)


class ScheduleKind(Enum):
    CONSTANT = "constant"
    EXPONENTIAL = "exponential"
    COSINE = "cosine"


@dataclass(frozen=True)
class Schedule:
    """Learning-rate schedule; exponential decays by rate every decay_steps (no staircase)"""
    kind: ScheduleKind = ScheduleKind.CONSTANT
    lr0: float = 1e-3
    rate: float = 0.9
    decay_steps: int = 1000
    total_steps: int = 1

    def __post_init__(self):
        errors = []
        if not self.lr0 > 0:
            errors.append(f"lr0 must be positive, got {self.lr0}")
        if self.kind is ScheduleKind.EXPONENTIAL:
            if not 0 < self.rate <= 1:
                errors.append(f"decay rate must be in (0, 1], got {self.rate}")
            if self.decay_steps <= 0:
                errors.append(f"decay_steps must be positive, got {self.decay_steps}")
        if self.kind is ScheduleKind.COSINE and self.total_steps <= 0:
            errors.append(f"total_steps must be positive, got {self.total_steps}")
        if errors:
            raise ConfigError("; ".join(errors))

    @classmethod
    def from_name(cls, name: str, **kwargs) -> 'Schedule':
        try:
            kind = ScheduleKind(name)
        except ValueError:
            raise ConfigError(f"Unknown schedule '{name}'; expected one of {[k.value for k in ScheduleKind]}")
        return cls(kind=kind, **kwargs)


def schedule_lr(schedule: Schedule, step: int) -> float:
    if step < 0:
        raise ConfigError(f"Schedule step must be non-negative, got {step}")
    if schedule.kind is ScheduleKind.EXPONENTIAL:
        return schedule.lr0 * schedule.rate ** (step / schedule.decay_steps)
    if schedule.kind is ScheduleKind.COSINE:
        progress = min(step, schedule.total_steps) / schedule.total_steps
        return schedule.lr0 * 0.5 * (1.0 + math.cos(math.pi * progress))
    return schedule.lr0


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    schedule: Schedule = field(default_factory=Schedule)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_parameters(cls, params: Sequence[np.ndarray], schedule: Schedule) -> 'AdamState':
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], schedule=schedule)

    @property
    def lr(self) -> float:
        """Learning rate the next update will use"""
        return schedule_lr(self.schedule, self.step)

    def copy(self) -> 'AdamState':
        return AdamState(m=[a.copy() for a in self.m], v=[a.copy() for a in self.v],
                         schedule=self.schedule, step=self.step,
                         beta1=self.beta1, beta2=self.beta2, eps=self.eps)


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> List[np.ndarray]:
    """One bias-corrected Adam update; mutates the moments and returns new parameters"""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise StructuralError(
            f"Got {len(params)} parameters, {len(grads)} gradients and {len(state.m)} moment slots"
        )
    for index, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise TrainingDivergence(state.step, f"non-finite gradient in parameter block {index}")

    lr = schedule_lr(state.schedule, state.step)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step

    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        updated.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return updated
