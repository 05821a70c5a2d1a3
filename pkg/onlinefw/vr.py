"""
Momentum averaging of stochastic gradients: d <- (1 - rho_k) d + rho_k * sample.

The averager does not care whether its index is the inner Frank-Wolfe step
(Meta-FW, reset every round) or the round itself (One-Shot FW, never reset).
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .core import GradientSample, InvalidArgumentError, Schedule, ScheduleKind, schedule_value


class Averager:
    """
    Running estimate d of a drifting gradient.

    `d` may be any array shape (a vector, or a trials x dim stack when many
    independent sequences are averaged at once); samples must match it.
    """

    def __init__(self, d0, schedule: Schedule | None = None):
        self.schedule = schedule or Schedule(ScheduleKind.RHO_VR)
        self.d = np.zeros(0)
        self.step_count = 0
        self.reset(d0)

    @classmethod
    def zeros(cls, dim: int, schedule: Schedule | None = None) -> Averager:
        return cls(np.zeros(dim), schedule)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.d.shape

    def reset(self, d0) -> None:
        d0 = np.array(d0, dtype=np.float64)
        if not np.all(np.isfinite(d0)):
            raise InvalidArgumentError("initial estimate has non-finite entries")
        self.d = d0
        self.step_count = 0

    def feed(self, sample: GradientSample | NDArray[np.float64]) -> NDArray[np.float64]:
        vector = sample.vector if isinstance(sample, GradientSample) else np.asarray(sample, dtype=np.float64)
        if vector.shape != self.d.shape:
            raise InvalidArgumentError(f"sample shape {vector.shape} does not match averager shape {self.d.shape}")
        self.step_count += 1
        rho = schedule_value(self.schedule, self.step_count)
        self.d = (1.0 - rho) * self.d + rho * vector
        return self.d


def feed(averager: Averager, sample: GradientSample | NDArray[np.float64]) -> NDArray[np.float64]:
    return averager.feed(sample)


def reset(averager: Averager, d0) -> None:
    averager.reset(d0)
