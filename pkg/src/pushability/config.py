"""Pipeline configuration.

JSON keys for the perception hyperparameters are descriptive snake-case
names, e.g.
``{"bounding_box_scale_factor": 1.5, "cosine_similarity_threshold": 0.85}``.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .geom import SegmentParams
from .synth import ARM_LIMIT
from .vpp import RobotCapability

ENV_VAR = "PUSHABILITY_CONFIG"


@dataclass(frozen=True)
class OracleParams:
    mu: float = 0.5
    arm_limit: float = ARM_LIMIT
    signal_len: int = 100
    max_force: float = 20.0  # pushability limit on the predicted peak force


@dataclass(frozen=True)
class PipelineConfig:
    bounding_box_scale_factor: float = 1.5
    nearest_neighbors_count: int = 30
    neighbor_search_radius: float = 0.2
    cosine_similarity_threshold: float = 0.85
    dbscan_neighborhood_radius: float = 0.5
    dbscan_minimum_points: int = 5
    visual_likelihood_high_threshold: float = 0.8
    visual_likelihood_low_threshold: float = 0.3
    robot: RobotCapability = field(default_factory=RobotCapability)
    oracle: OracleParams = field(default_factory=OracleParams)
    prior_precision: float = 1e-6
    test_fraction: float = 0.30
    seed: int = 0

    def __post_init__(self):
        if self.bounding_box_scale_factor < 1:
            raise ValueError("bounding_box_scale_factor must be >= 1")
        if self.nearest_neighbors_count < 3:
            raise ValueError("nearest_neighbors_count must be >= 3")
        if not self.neighbor_search_radius > 0 or not self.dbscan_neighborhood_radius > 0:
            raise ValueError("radii must be positive")
        if not 0 < self.cosine_similarity_threshold <= 1:
            raise ValueError("cosine_similarity_threshold must lie in (0, 1]")
        if self.dbscan_minimum_points < 1:
            raise ValueError("dbscan_minimum_points must be >= 1")
        if not self.visual_likelihood_low_threshold < self.visual_likelihood_high_threshold:
            raise ValueError("visual likelihood thresholds must satisfy low < high")

    @property
    def segment_params(self) -> SegmentParams:
        return SegmentParams(
            k=self.nearest_neighbors_count,
            r=self.neighbor_search_radius,
            T_cs=self.cosine_similarity_threshold,
            epsilon=self.dbscan_neighborhood_radius,
            min_pts=self.dbscan_minimum_points,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["robot"]["body_dims"] = list(d["robot"]["body_dims"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "robot" in d:
            r = dict(d["robot"])
            if "body_dims" in r:
                r["body_dims"] = tuple(r["body_dims"])
            d["robot"] = RobotCapability(**r)
        if "oracle" in d:
            d["oracle"] = OracleParams(**d["oracle"])
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path: Optional[str] = None, **overrides) -> PipelineConfig:
    """Read a JSON config from ``path`` or ``$PUSHABILITY_CONFIG``; defaults otherwise."""
    path = path or os.environ.get(ENV_VAR)
    data = {}
    if path:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_dict(data)
