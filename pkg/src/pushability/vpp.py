"""Visual preliminary prediction: likelihood score and three-way gate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .features import SHAPE_FLOOR, ObstacleFeatures

REFERENCE_FORCE = 20.0  # N; beyond this the robot could not move a rock
REFERENCE_VOLUME = 1.0  # m^3


class VppClass(str, Enum):
    STATIC = "Static"
    PUSHABLE = "Pushable"
    OVERRIDE = "Override"


@dataclass(frozen=True)
class RobotCapability:
    """Physical limits of the pushing robot.

    Defaults approximate a small quadruped with a light arm. The scalar
    used in the likelihood is ``max_push_force / 20 N * 1 m^3`` unless
    ``capability_override`` is given.
    """

    body_dims: tuple = (0.70, 0.31, 0.40)
    max_hoof_elevation: float = 0.16
    step_length: float = 0.30
    interfoot_distance: float = 0.20
    max_push_force: float = 20.0
    capability_override: Optional[float] = None

    def __post_init__(self):
        vals = list(self.body_dims) + [
            self.max_hoof_elevation,
            self.step_length,
            self.interfoot_distance,
            self.max_push_force,
        ]
        if any(not v > 0 for v in vals):
            raise ValueError("robot capability values must be positive")
        if self.capability_override is not None and not self.capability_override > 0:
            raise ValueError("capability score must be positive")

    @property
    def capability_score(self) -> float:
        if self.capability_override is not None:
            return float(self.capability_override)
        return self.max_push_force / REFERENCE_FORCE * REFERENCE_VOLUME


@dataclass(frozen=True)
class VppVerdict:
    g: Optional[float]
    cls: VppClass
    reason: str = ""

    def to_dict(self) -> dict:
        d = {"g": self.g, "class": self.cls.value}
        if self.reason:
            d["reason"] = self.reason
        return d


def likelihood_score(capability: float, volume: float, shape: float, theta: float) -> float:
    """``capability / (volume * max(shape, floor)) * (1 - theta / pi)``."""
    if not volume > 0:
        raise ValueError("volume must be positive")
    if not 0 <= theta <= math.pi:
        raise ValueError("theta must lie in [0, pi]")
    return capability / (volume * max(shape, SHAPE_FLOOR)) * (1.0 - theta / math.pi)


def likelihood(features: ObstacleFeatures, cap: RobotCapability) -> float:
    return likelihood_score(cap.capability_score, features.volume, features.shape, features.theta)


def classify(g: float, T_low: float = 0.3, T_high: float = 0.8) -> VppClass:
    if not T_low < T_high:
        raise ValueError("T_low must be below T_high")
    if g <= T_low:
        return VppClass.STATIC
    if g >= T_high:
        return VppClass.OVERRIDE
    return VppClass.PUSHABLE


def assess(features: ObstacleFeatures, cap: RobotCapability, T_low: float = 0.3, T_high: float = 0.8) -> VppVerdict:
    """Score and gate one obstacle. Anything we cannot characterize is Static."""
    if features.flags:
        return VppVerdict(None, VppClass.STATIC, ",".join(features.flags))
    if not features.volume > 0:
        return VppVerdict(None, VppClass.STATIC, "zero_volume")
    g = likelihood(features, cap)
    return VppVerdict(g, classify(g, T_low, T_high))
