"""Classical relativistic point-particle baselines."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def _time_per_length(p0: float) -> float:
    # 1/v in units of 1/c for momentum p0 in units of mc
    if not p0 > 0:
        raise DomainError(f"p0 must be positive, got {p0}")
    if np.isinf(p0):
        return 1.0
    return float(np.sqrt(1.0 + 1.0 / p0**2))


def classical_arrival(p0: float, x0: float, x_d: float) -> float:
    """Arrival time at x_d of a particle leaving x0 at t = 0 with momentum p0 (mc)."""
    if not x_d > x0:
        raise DomainError("need x_d > x0")
    return (x_d - x0) * _time_per_length(p0)


def classical_traversal(p0: float, x1: float, x2: float) -> float:
    if not x2 > x1:
        raise DomainError("need x2 > x1")
    return (x2 - x1) * _time_per_length(p0)


def classical_boost(time: float, anchor_length: float, v_over_c: float) -> float:
    """gamma * (time - v * anchor_length), all in c = 1 units."""
    if not abs(v_over_c) < 1:
        raise DomainError(f"|v/c| must be below 1, got {v_over_c}")
    return (time - v_over_c * anchor_length) / np.sqrt(1.0 - v_over_c**2)


@dataclass(frozen=True)
class ClassicalPrediction:
    t_arrival: float | None
    t_traversal: float | None
    v_over_c: float = 0.0

    @classmethod
    def for_arrival(cls, p0, x0, x_d, v_over_c=0.0):
        t = classical_boost(classical_arrival(p0, x0, x_d), x_d, v_over_c)
        return cls(t, None, v_over_c)

    @classmethod
    def for_traversal(cls, p0, x1, x2, v_over_c=0.0):
        t = classical_boost(classical_traversal(p0, x1, x2), x2 - x1, v_over_c)
        return cls(None, t, v_over_c)
