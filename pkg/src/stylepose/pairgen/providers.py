"""Pose providers: the pluggable 6D pose estimation step.

The pipeline only assumes something that maps an image to camera-frame
detections. The mock provider included here answers from a ground-truth
registry keyed by image content, with configurable noise, dropouts, and
false positives, so the whole pipeline can run and be tested without a
trained pose network.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from ..geometry import CameraIntrinsics, Pose
from ..manifest import Detection, detection_from_json
from ..seeding import substream
from .scenes import DISTANCE_RANGE

FALSE_POSITIVE_ID_BASE = 1000


@runtime_checkable
class PoseProvider(Protocol):
    """Estimates object poses from a single RGB image.

    Returns camera-frame detections. Implementations decide their own
    class vocabulary; callers must tolerate unknown classes and empty
    results. Must be deterministic for identical inputs.
    """

    def estimate(self, image: np.ndarray, intrinsics: CameraIntrinsics) -> list:
        """image: uint8 (H,W,3) RGB."""
        ...


def image_key(image: np.ndarray) -> str:
    """Content hash used to look images up in the ground-truth registry."""
    arr = np.ascontiguousarray(image)
    h = hashlib.sha256()
    h.update(str(arr.shape).encode())
    h.update(str(arr.dtype).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


class UnknownImageError(LookupError):
    """The image was not produced by a registered capture run."""


@dataclass(frozen=True)
class MockProviderConfig:
    sigma_t: float = 0.004  # m, translation noise per axis
    sigma_rot_deg: float = 2.0
    p_drop: float = 0.05  # per detection
    p_false: float = 0.03  # per view
    score_range: tuple = (0.55, 0.98)
    false_score: float = 0.35


class MockPoseProvider:
    """Replays registered ground truth with noise.

    Noise is drawn from a stream keyed by (seed, scene, view), so repeated
    calls for the same image return identical detections regardless of
    call order.
    """

    def __init__(self, registry: dict, seed: int,
                 config: MockProviderConfig = MockProviderConfig(),
                 class_names=None):
        self.registry = registry
        self.seed = seed
        self.config = config
        self.class_names = tuple(class_names) if class_names else None

    def estimate(self, image: np.ndarray, intrinsics: CameraIntrinsics) -> list:
        key = image_key(image)
        entry = self.registry.get(key)
        if entry is None:
            raise UnknownImageError(
                "image not in ground-truth registry; was it produced by "
                "'stylepose capture' with the matching seed?"
            )
        gt = [
            detection_from_json(d, f"registry[{key[:8]}]")
            for d in entry["detections"]
        ]
        rng = substream(self.seed, "mock", entry["scene_id"], entry["view_id"])
        cfg = self.config
        out = []
        for det in gt:
            if rng.uniform() < cfg.p_drop:
                continue
            t = det.pose.translation + rng.normal(scale=cfg.sigma_t, size=3)
            axis = rng.normal(size=3)
            axis /= max(np.linalg.norm(axis), 1e-12)
            ang = np.deg2rad(rng.normal(scale=cfg.sigma_rot_deg))
            rot = Pose.from_rotvec(axis * ang).compose(Pose(det.pose.rotation, np.zeros(3)))
            score = float(rng.uniform(*cfg.score_range))
            out.append(Detection(det.class_name, det.instance_id, Pose(rot.rotation, t), score))
        if rng.uniform() < cfg.p_false:
            out.append(self._false_positive(rng, gt, intrinsics))
        return out

    def _false_positive(self, rng, gt, intrinsics) -> Detection:
        classes = self.class_names or tuple(sorted({d.class_name for d in gt})) or ("unknown",)
        cls = str(rng.choice(list(classes)))
        lo, hi = DISTANCE_RANGE
        d = rng.uniform(lo, hi)
        u = rng.uniform(0, intrinsics.width - 1)
        v = rng.uniform(0, intrinsics.height - 1)
        ray = np.linalg.inv(intrinsics.matrix()) @ np.array([u, v, 1.0])
        t = d * ray / np.linalg.norm(ray)
        pose = Pose(Pose.random_rotation(rng).rotation, t)
        iid = FALSE_POSITIVE_ID_BASE + int(rng.integers(0, 1000))
        return Detection(cls, iid, pose, self.config.false_score)
