"""Simulated capture of a real desk sequence.

"Real" images here are desk-scene renders pushed through a fixed color
transform (per-capture gain/bias/gamma) plus per-view exposure jitter and
sensor noise. The transform is the domain gap the style network has to
learn; ground-truth poses for every captured image are recorded in a
registry so a mock pose provider can answer for them later.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import imgio
from ..geometry import CameraIntrinsics
from ..manifest import (
    DatasetIndex,
    Detection,
    dataset_index_load,
    dataset_index_save,
    detection_to_json,
    labels_load,
    manifest_load,
)
from ..seeding import substream
from .providers import image_key
from .scenes import (
    DSConfig,
    default_class_library,
    default_support_plane,
    ds_camera_arc,
    generate_ds_scene,
    render_scene_to_disk,
)

GT_REGISTRY_NAME = "gt_registry.json"


@dataclass(frozen=True)
class RealStyleConfig:
    gain_range: tuple = (0.85, 1.15)
    bias_range: tuple = (-0.06, 0.06)
    gamma_range: tuple = (0.80, 1.25)
    view_gain_sigma: float = 0.03
    noise_sigma: float = 0.015


class RealStyle:
    """Deterministic sim-to-"real" color transform for one capture run."""

    def __init__(self, seed: int, cfg: RealStyleConfig = RealStyleConfig()):
        rng = substream(seed, "realstyle")
        self.gain = rng.uniform(*cfg.gain_range, size=3)
        self.bias = rng.uniform(*cfg.bias_range, size=3)
        self.gamma = rng.uniform(*cfg.gamma_range)
        self.cfg = cfg
        self.seed = seed

    def apply(self, rgb: np.ndarray, scene_id: str, view_id: str) -> np.ndarray:
        rng = substream(self.seed, "realstyle", scene_id, view_id)
        view_gain = 1.0 + rng.normal(scale=self.cfg.view_gain_sigma)
        out = np.power(np.clip(rgb, 0.0, 1.0), self.gamma)
        out = out * self.gain * view_gain + self.bias
        out = out + rng.normal(scale=self.cfg.noise_sigma, size=rgb.shape)
        return np.clip(out, 0.0, 1.0).astype(np.float32)


def capture_scene(
    scene,
    placements,
    trajectory,  # [(view_id, camera-to-world Pose)]
    intrinsics: CameraIntrinsics,
    out_dir,
    scene_id: str,
    style: RealStyle | None = None,
    renderer=None,
    config_hash=None,
):
    """Capture one scene along a trajectory; the result has provenance
    "real". At desk scale the "real camera" is the rasterizer followed by
    the capture run's color transform."""
    if not trajectory:
        raise ValueError("capture needs a nonempty trajectory")
    style_fn = None
    if style is not None:
        style_fn = lambda rgb, view_id, _sid=scene_id: style.apply(rgb, _sid, view_id)
    return render_scene_to_disk(
        scene, placements, trajectory, intrinsics,
        out_dir, scene_id, "real", renderer=renderer,
        config_hash=config_hash, style=style_fn,
    )


def capture_dataset(
    out_dir,
    num_scenes: int,
    seed: int,
    intrinsics: CameraIntrinsics,
    meshes: dict | None = None,
    ds_cfg: DSConfig = DSConfig(),
    style_cfg: RealStyleConfig = RealStyleConfig(),
    config_hash=None,
) -> DatasetIndex:
    """Capture desk sequences with provenance "real" and write the
    ground-truth registry next to the dataset index."""
    meshes = meshes if meshes is not None else default_class_library()
    out_dir = Path(out_dir)
    style = RealStyle(seed, style_cfg)
    plane = default_support_plane(ds_cfg.table_size)
    rel_manifests = []
    registry = {}
    for i in range(num_scenes):
        scene_id = f"real_{i:05d}"
        rng = substream(seed, "capture", i)
        scene, placements = generate_ds_scene(meshes, plane, rng, ds_cfg)
        trajectory = [
            (f"v{j:03d}", pose) for j, pose in enumerate(ds_camera_arc(rng, ds_cfg))
        ]
        m = capture_scene(
            scene, placements, trajectory, intrinsics,
            out_dir / "scenes", scene_id, style=style, config_hash=config_hash,
        )
        rel_manifests.append(f"scenes/{scene_id}/manifest.json")
        _register_views(registry, out_dir / "scenes" / scene_id, m)
    index = DatasetIndex(
        provenance="real",
        scene_manifests=tuple(rel_manifests),
        class_names=tuple(sorted(meshes)),
        config_hash=config_hash,
    )
    dataset_index_save(index, out_dir / "index.json")
    save_gt_registry(registry, out_dir / GT_REGISTRY_NAME)
    return index


def _register_views(registry: dict, scene_root: Path, m) -> None:
    for view in m.views:
        arr = imgio.read_rgb(scene_root / view.image)
        labels = labels_load(scene_root / view.labels)
        dets = [
            Detection(l.class_name, l.instance_id, l.pose_cam, 1.0)
            for l in labels.instances
        ]
        registry[image_key(arr)] = {
            "scene_id": m.scene_id,
            "view_id": view.view_id,
            "detections": [detection_to_json(d) for d in dets],
        }


def save_gt_registry(registry: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {"schema": 1, "entries": registry}
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def load_gt_registry(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))["entries"]


def iter_dataset_views(root):
    """Yield (manifest, ViewRecord, scene_root) for every view of a dataset."""
    root = Path(root)
    idx = dataset_index_load(root / "index.json")
    for rel in idx.scene_manifests:
        m = manifest_load(root / rel)
        scene_root = (root / rel).parent
        for view in m.views:
            yield m, view, scene_root
