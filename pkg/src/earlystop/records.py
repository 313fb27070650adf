"""Result containers shared by the algorithms and bound calculators."""

import math
from dataclasses import dataclass, field

import numpy as np


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass
class BoundReport:
    """A theoretical bound, whether its hypotheses hold, and its inputs.

    ``value`` is ``None`` when the validity condition fails.
    """

    name: str
    value: float | None
    valid: bool
    condition: str
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "value": self.value,
            "valid": self.valid,
            "condition": self.condition,
            "params": _plain(self.params),
            "extras": _plain(self.extras),
        }


@dataclass
class RunRecord:
    """Outcome of one algorithm execution.

    ``tau`` is the stopping time (iteration index for SGD/DSGD, epoch index for
    SVRG) or ``None`` when the safety cap was reached first (``cap_hit``).
    ``trace`` holds the squared gradient norm seen at every stopping check.
    """

    algorithm: str
    tau: int | None
    cap_hit: bool
    iterations: int
    ifo_count: int
    final_x: np.ndarray
    trace: list
    epsilon: float
    audit: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def stopped(self):
        return not self.cap_hit

    @property
    def final_check(self):
        return self.trace[-1] if self.trace else math.nan

    def to_dict(self, include_audit=False):
        out = {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "tau": "cap-hit" if self.cap_hit else self.tau,
            "iterations": self.iterations,
            "ifo_count": self.ifo_count,
            "epsilon": self.epsilon,
            "final_x": _plain(self.final_x),
            "trace": _plain(self.trace),
        }
        if include_audit:
            out["audit"] = _plain(self.audit)
        return out
