"""Perception pipeline glue: cloud -> segmentation -> features -> VPP verdicts."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .config import PipelineConfig
from .features import ObstacleFeatures, extract_features
from .geom import SceneSegmentation, segment_scene
from .pointcloud import PointCloud
from .vpp import VppVerdict, assess

log = logging.getLogger(__name__)

UP_WARN_COS = 0.5  # median normal this far from +z suggests a cloud that is not z-up


@dataclass
class SceneAnalysis:
    segmentation: SceneSegmentation
    obstacles: list  # ObstacleFeatures
    verdicts: list  # VppVerdict


def analyze(cloud: PointCloud, config: PipelineConfig = PipelineConfig(), with_verdicts: bool = True) -> SceneAnalysis:
    seg = segment_scene(cloud, config.segment_params)
    if abs(float(seg.n_med[2])) < UP_WARN_COS:
        log.warning("median normal %s is far from +z; is the cloud in a z-up frame?", seg.n_med.round(3).tolist())
    obstacles = extract_features(seg, cloud, seg.normals, config.bounding_box_scale_factor)
    verdicts = []
    if with_verdicts:
        verdicts = [
            assess(
                o,
                config.robot,
                config.visual_likelihood_low_threshold,
                config.visual_likelihood_high_threshold,
            )
            for o in obstacles
        ]
    return SceneAnalysis(seg, obstacles, verdicts)


def obstacle_record(features: ObstacleFeatures, verdict: VppVerdict) -> dict:
    d = features.to_dict()
    d["vpp"] = verdict.to_dict()
    return d
