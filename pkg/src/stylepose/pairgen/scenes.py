"""Synthetic scene generation.

Two flavors:

* DR ("domain randomized"): objects float freely in front of the camera
  at 0.3 to 1.5 m, random orientation, random background. Each image is
  its own single-view scene. Useful for detector pretraining, deliberately
  unsuitable for style adaptation (no coherent scene).
* DS ("desk scene"): objects rest upright on a plane, viewed from a
  camera arc. Multi-view, physically plausible, the layout style
  adaptation expects.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import imgio
from ..boxes import bbox_from_mask
from ..geometry import CameraIntrinsics, Pose, look_at_pose
from ..manifest import (
    DatasetIndex,
    InstanceLabel,
    SceneManifest,
    ViewLabels,
    ViewRecord,
    dataset_index_save,
    labels_save,
    manifest_save,
)
from ..meshes import MeshModel, make_box, make_cylinder, make_plane
from ..render import SceneGraph, SceneInstance, SoftwareRenderer, mask_for_instance
from ..seeding import substream

log = logging.getLogger(__name__)

# Detection distance band shared by generation and mismatch filtering.
DISTANCE_RANGE = (0.3, 1.5)


def default_class_library() -> dict:
    """Small built-in object set so the pipeline runs out of the box."""
    return {
        "box_red": make_box((0.06, 0.04, 0.03), (0.85, 0.18, 0.15), "box_red"),
        "can_blue": make_cylinder(0.025, 0.09, 24, (0.15, 0.30, 0.85), "can_blue"),
        "cube_green": make_box((0.04, 0.04, 0.04), (0.15, 0.75, 0.20), "cube_green"),
    }


@dataclass(frozen=True)
class DRConfig:
    distance_range: tuple = DISTANCE_RANGE
    max_instances: int = 5  # per class, count uniform on {1..max}
    margin_px: int = 30

    def __post_init__(self):
        if self.max_instances < 1:
            raise ValueError("max_instances must be >= 1")
        lo, hi = self.distance_range
        if not (0 < lo <= hi):
            raise ValueError(f"bad distance range {self.distance_range}")


@dataclass(frozen=True)
class DSConfig:
    table_size: float = 1.2
    placement_radius: float = 0.30
    max_instances: int = 5
    views: int = 12
    cam_radius: float = 0.85
    cam_height: float = 0.55
    arc_deg: float = 120.0

    def __post_init__(self):
        if self.max_instances < 1:
            raise ValueError("max_instances must be >= 1")
        if self.views < 1:
            raise ValueError("views must be >= 1")


@dataclass(frozen=True)
class Placement:
    class_name: str
    instance_id: int
    pose_world: Pose


def generate_dr_scene(meshes: dict, intrinsics: CameraIntrinsics, rng,
                      cfg: DRConfig = DRConfig()):
    """Build one DR scene directly in the camera frame (the camera pose is
    identity, so world poses double as camera-frame ground truth).

    Returns (SceneGraph, [Placement]). Placement distance from the camera
    is exactly the sampled value, uniform over cfg.distance_range.
    """
    inv_k = np.linalg.inv(intrinsics.matrix())
    lo, hi = cfg.distance_range
    placements, instances = [], []
    next_id = 1
    for class_name in sorted(meshes):
        mesh = meshes[class_name]
        count = int(rng.integers(1, cfg.max_instances + 1))
        for _ in range(count):
            u = rng.uniform(cfg.margin_px, intrinsics.width - 1 - cfg.margin_px)
            v = rng.uniform(cfg.margin_px, intrinsics.height - 1 - cfg.margin_px)
            d = rng.uniform(lo, hi)
            ray = inv_k @ np.array([u, v, 1.0])
            t = d * ray / np.linalg.norm(ray)
            pose = Pose(Pose.random_rotation(rng).rotation, t)
            placements.append(Placement(class_name, next_id, pose))
            instances.append(SceneInstance(mesh, pose, next_id))
            next_id += 1
    background = tuple(rng.uniform(0.05, 0.6, size=3))
    light = tuple(rng.normal(size=3))
    scene = SceneGraph(tuple(instances), light_dir=light, background=background)
    return scene, placements


def default_support_plane(size: float = 1.2) -> MeshModel:
    return make_plane((size, size), (0.55, 0.45, 0.35), "desk", z=0.0)


def generate_ds_scene(meshes: dict, support_plane: MeshModel, rng,
                      cfg: DSConfig = DSConfig()):
    """Build one desk scene in world frame: objects rest upright on the
    given support plane, separated in 2D by their horizontal radii.

    Returns (SceneGraph, [Placement]). For every placement the lowest
    world-frame vertex touches the plane exactly.
    """
    plane_z = float(np.max(support_plane.vertices[:, 2]))
    instances = [SceneInstance(support_plane, Pose.identity(), 0)]
    placements = []
    placed = []  # (x, y, radius_xy)
    next_id = 1
    for class_name in sorted(meshes):
        mesh = meshes[class_name]
        count = int(rng.integers(1, cfg.max_instances + 1))
        for _ in range(count):
            spot = _find_spot(rng, cfg.placement_radius, mesh.radius_xy, placed)
            if spot is None:
                log.warning("ds scene: no room for another %s, skipping", class_name)
                continue
            x, y = spot
            upright = (
                Pose(np.asarray(rng.choice(mesh.stable_uprights)), np.zeros(3))
                if mesh.stable_uprights
                else Pose.identity()
            )
            yaw = Pose.from_rotvec(np.array([0.0, 0.0, rng.uniform(0.0, 2 * np.pi)]))
            rot = yaw.compose(upright)
            z = plane_z - float(np.min(rot.apply(mesh.vertices)[:, 2]))
            pose = Pose(rot.rotation, np.array([x, y, z]))
            placements.append(Placement(class_name, next_id, pose))
            instances.append(SceneInstance(mesh, pose, next_id))
            placed.append((x, y, mesh.radius_xy))
            next_id += 1
    scene = SceneGraph(tuple(instances))
    return scene, placements


def _find_spot(rng, area_radius, obj_radius, placed, tries=100):
    for _ in range(tries):
        r = area_radius * np.sqrt(rng.uniform())
        ang = rng.uniform(0.0, 2 * np.pi)
        x, y = r * np.cos(ang), r * np.sin(ang)
        if all(np.hypot(x - px, y - py) >= obj_radius + pr for px, py, pr in placed):
            return x, y
    return None


def ds_camera_arc(rng, cfg: DSConfig, jitter: float = 0.03):
    """Camera-to-world poses along an arc around the desk center."""
    target = np.array([0.0, 0.0, 0.05])
    start = rng.uniform(0.0, 2 * np.pi)
    poses = []
    for i in range(cfg.views):
        frac = i / max(cfg.views - 1, 1)
        ang = start + np.deg2rad(cfg.arc_deg) * frac
        eye = np.array(
            [
                cfg.cam_radius * np.cos(ang),
                cfg.cam_radius * np.sin(ang),
                cfg.cam_height,
            ]
        ) + rng.normal(scale=jitter, size=3)
        poses.append(look_at_pose(eye, target))
    return poses


# -- rendering scenes to disk -------------------------------------------------


def render_scene_to_disk(
    scene: SceneGraph,
    placements,
    cameras,  # [(view_id, Pose)]
    intrinsics: CameraIntrinsics,
    out_dir,
    scene_id: str,
    provenance: str,
    renderer=None,
    config_hash=None,
    style=None,  # optional callable (rgb, view_id) -> rgb, applied post-render
) -> SceneManifest:
    """Render every view, write rgb/labels/masks, return the saved manifest.

    Per-view labels hold camera-frame poses and tight boxes for instances
    with at least one visible pixel; fully hidden instances are omitted.
    """
    renderer = renderer or SoftwareRenderer()
    root = Path(out_dir) / scene_id
    views = []
    for view_id, cam_pose in cameras:
        out = renderer.render_view(scene, cam_pose, intrinsics)
        rgb = out.rgb if style is None else style(out.rgb, view_id)
        imgio.write_rgb(root / "rgb" / f"{view_id}.png", rgb)
        world_to_cam = cam_pose.inverse()
        labels = []
        for p in placements:
            inst_mask = mask_for_instance(out, p.instance_id)
            if inst_mask.is_empty:
                continue
            mask_rel = f"masks/{view_id}_{p.instance_id:02d}.png"
            imgio.write_mask(root / mask_rel, inst_mask.mask)
            labels.append(
                InstanceLabel(
                    class_name=p.class_name,
                    instance_id=p.instance_id,
                    pose_cam=world_to_cam.compose(p.pose_world),
                    bbox=bbox_from_mask(inst_mask.mask),
                    mask=mask_rel,
                )
            )
        labels_rel = f"labels/{view_id}.json"
        labels_save(ViewLabels(view_id, tuple(labels)), root / labels_rel)
        views.append(
            ViewRecord(
                scene_id=scene_id,
                view_id=view_id,
                image=f"rgb/{view_id}.png",
                camera_pose=cam_pose,
                intrinsics=intrinsics,
                labels=labels_rel,
            )
        )
    classes = tuple(sorted({p.class_name for p in placements}))
    m = SceneManifest(
        scene_id=scene_id,
        provenance=provenance,
        views=tuple(views),
        classes=classes,
        config_hash=config_hash,
    )
    manifest_save(m, root / "manifest.json")
    return m


def generate_dataset(
    kind: str,
    out_dir,
    num_scenes: int,
    seed: int,
    intrinsics: CameraIntrinsics,
    meshes: dict | None = None,
    dr_cfg: DRConfig = DRConfig(),
    ds_cfg: DSConfig = DSConfig(),
    config_hash=None,
) -> DatasetIndex:
    """Generate a DR or DS dataset: scenes/<id>/... plus a top-level index."""
    if kind not in ("dr", "ds"):
        raise ValueError(f"kind must be 'dr' or 'ds', got {kind!r}")
    meshes = meshes if meshes is not None else default_class_library()
    out_dir = Path(out_dir)
    provenance = "synthetic-DR" if kind == "dr" else "synthetic-DS"
    plane = default_support_plane(ds_cfg.table_size)
    rel_manifests = []
    for i in range(num_scenes):
        scene_id = f"{kind}_{i:05d}"
        rng = substream(seed, "gen", kind, i)
        if kind == "dr":
            scene, placements = generate_dr_scene(meshes, intrinsics, rng, dr_cfg)
            cameras = [("v000", Pose.identity())]
        else:
            scene, placements = generate_ds_scene(meshes, plane, rng, ds_cfg)
            cameras = [
                (f"v{j:03d}", pose)
                for j, pose in enumerate(ds_camera_arc(rng, ds_cfg))
            ]
        render_scene_to_disk(
            scene, placements, cameras, intrinsics,
            out_dir / "scenes", scene_id, provenance, config_hash=config_hash,
        )
        rel_manifests.append(f"scenes/{scene_id}/manifest.json")
    index = DatasetIndex(
        provenance=provenance,
        scene_manifests=tuple(rel_manifests),
        class_names=tuple(sorted(meshes)),
        config_hash=config_hash,
    )
    dataset_index_save(index, out_dir / "index.json")
    return index
