"""Software rendering of mesh scenes to RGB, depth, and instance id maps.

The rasterizer is intentionally small: per-triangle screen-space
barycentrics, a z-buffer with perspective-correct depth, and flat
Lambertian shading. It exists so the pipeline can render synthetic
views and visibility masks without a GPU; anything fancier can be
plugged in through the Renderer protocol or ingested from disk.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from . import imgio
from .boxes import InstanceMask
from .geometry import CameraIntrinsics, Pose
from .meshes import MeshModel

# Triangles with any vertex closer than this to the camera plane are
# skipped outright; there is no near-plane clipping.
NEAR_EPS = 1e-6

BACKGROUND_ID = 0


@dataclass(frozen=True)
class SceneInstance:
    """One placed mesh. instance_id 0 marks unlabeled fixtures (e.g. the
    ground plane): they render into rgb/depth but not into the id map."""

    mesh: MeshModel
    pose: Pose  # object-to-world
    instance_id: int = BACKGROUND_ID

    def __post_init__(self):
        if self.instance_id < 0 or self.instance_id > np.iinfo(np.uint16).max:
            raise ValueError(f"instance_id {self.instance_id} outside uint16 range")


@dataclass(frozen=True)
class SceneGraph:
    instances: tuple
    light_dir: tuple = (0.3, -0.5, 0.8)  # world frame, toward the light
    ambient: float = 0.4
    background: tuple = (0.12, 0.12, 0.14)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        ids = [i.instance_id for i in self.instances if i.instance_id != BACKGROUND_ID]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate instance ids in scene")

    def labeled(self) -> tuple:
        return tuple(i for i in self.instances if i.instance_id != BACKGROUND_ID)


@dataclass(frozen=True)
class RenderOutput:
    """rgb float32 (H,W,3) in [0,1]; depth float32 (H,W) camera-z in meters,
    +inf where nothing was hit; instance_ids uint16 (H,W), 0 = background.
    id_to_class records which labeled instances the scene contained, so an
    empty mask (fully occluded) can be told apart from an unknown id."""

    rgb: np.ndarray
    depth: np.ndarray
    instance_ids: np.ndarray
    id_to_class: dict

    def resolution(self) -> tuple:
        return self.depth.shape


@runtime_checkable
class Renderer(Protocol):
    """Anything that can turn a scene plus camera into images.

    Implementations must be deterministic for identical inputs and must
    produce masks consistent with their rgb output: a pixel carries an
    instance id exactly when that instance determined its color.
    """

    def render_view(
        self, scene: SceneGraph, camera_pose: Pose, intrinsics: CameraIntrinsics
    ) -> RenderOutput:
        """Render the scene from the given camera-to-world pose."""
        ...


def render_view(scene: SceneGraph, camera_pose: Pose, intrinsics: CameraIntrinsics,
                renderer: Renderer | None = None) -> RenderOutput:
    """Render with the given backend, defaulting to the built-in rasterizer."""
    return (renderer or SoftwareRenderer()).render_view(scene, camera_pose, intrinsics)


def mask_for_instance(output: RenderOutput, instance_id: int) -> InstanceMask:
    """Visibility mask for one instance; may be empty if fully occluded or
    out of frame. Masks for distinct ids are disjoint by construction (each
    pixel stores a single id). Unknown ids are an error."""
    if instance_id not in output.id_to_class:
        raise KeyError(f"instance_id {instance_id} not in this render")
    return InstanceMask(
        mask=output.instance_ids == instance_id,
        instance_id=instance_id,
        class_name=output.id_to_class[instance_id],
    )


class SoftwareRenderer:
    """CPU rasterizer. Deterministic: triangles are drawn in scene order and
    the z-test is strict, so ties resolve to the earlier triangle."""

    def render_view(
        self, scene: SceneGraph, camera_pose: Pose, intrinsics: CameraIntrinsics
    ) -> RenderOutput:
        h, w = intrinsics.height, intrinsics.width
        rgb = np.empty((h, w, 3), dtype=np.float32)
        rgb[:] = np.asarray(scene.background, dtype=np.float32)
        depth = np.full((h, w), np.inf, dtype=np.float32)
        ids = np.full((h, w), BACKGROUND_ID, dtype=np.uint16)

        world_to_cam = camera_pose.inverse()
        light = world_to_cam.rotation_matrix() @ np.asarray(scene.light_dir, dtype=np.float64)
        norm = np.linalg.norm(light)
        light = light / norm if norm > 0 else light

        for inst in scene.instances:
            cam_pts = world_to_cam.apply(inst.pose.apply(inst.mesh.vertices))
            self._draw_mesh(
                cam_pts, inst.mesh.faces, inst.mesh.vertex_colors, inst.instance_id,
                light, scene.ambient, intrinsics, rgb, depth, ids,
            )
        id_to_class = {
            i.instance_id: i.mesh.class_name for i in scene.labeled()
        }
        return RenderOutput(rgb=rgb, depth=depth, instance_ids=ids,
                            id_to_class=id_to_class)

    @staticmethod
    def _draw_mesh(pts, faces, colors, instance_id, light, ambient,
                   intr, rgb, depth, ids):
        h, w = depth.shape
        z = pts[:, 2]
        safe_z = np.where(z > 0, z, 1.0)
        u = intr.fx * pts[:, 0] / safe_z + intr.cx
        v = intr.fy * pts[:, 1] / safe_z + intr.cy

        for f in faces:
            if np.any(z[f] <= NEAR_EPS):
                continue
            ua, ub, uc = u[f]
            va, vb, vc = v[f]
            # Signed double area of the screen triangle; degenerate -> skip.
            area = (ub - ua) * (vc - va) - (vb - va) * (uc - ua)
            if abs(area) < 1e-12:
                continue

            # Pixel centers sit at integer coordinates.
            x0 = max(0, int(np.ceil(min(ua, ub, uc) - 1e-9)))
            x1 = min(w - 1, int(np.floor(max(ua, ub, uc) + 1e-9)))
            y0 = max(0, int(np.ceil(min(va, vb, vc) - 1e-9)))
            y1 = min(h - 1, int(np.floor(max(va, vb, vc) + 1e-9)))
            if x0 > x1 or y0 > y1:
                continue

            px, py = np.meshgrid(
                np.arange(x0, x1 + 1, dtype=np.float64),
                np.arange(y0, y1 + 1, dtype=np.float64),
            )
            w0 = (uc - ub) * (py - vb) - (vc - vb) * (px - ub)
            w1 = (ua - uc) * (py - vc) - (va - vc) * (px - uc)
            w2 = (ub - ua) * (py - va) - (vb - va) * (px - ua)
            lam0, lam1, lam2 = w0 / area, w1 / area, w2 / area
            inside = (lam0 >= -1e-12) & (lam1 >= -1e-12) & (lam2 >= -1e-12)
            if not inside.any():
                continue

            # 1/z is linear in screen space, so interpolate it and invert.
            za, zb, zc = z[f]
            inv_z = lam0 / za + lam1 / zb + lam2 / zc
            tri_z = np.where(inv_z > 0, 1.0 / np.maximum(inv_z, 1e-12), np.inf)

            tile = depth[y0:y1 + 1, x0:x1 + 1]
            write = inside & (tri_z < tile)
            if not write.any():
                continue

            pa, pb, pc = pts[f[0]], pts[f[1]], pts[f[2]]
            n = np.cross(pb - pa, pc - pa)
            nn = np.linalg.norm(n)
            if nn == 0:
                continue
            n = n / nn
            if np.dot(n, (pa + pb + pc) / 3.0) > 0:  # flip toward the camera
                n = -n
            shade = ambient + (1.0 - ambient) * max(0.0, float(np.dot(n, light)))
            face_color = np.clip(colors[f].mean(axis=0) * shade, 0.0, 1.0)

            tile[write] = tri_z[write].astype(np.float32)
            rgb[y0:y1 + 1, x0:x1 + 1][write] = face_color.astype(np.float32)
            # Fixtures write BACKGROUND_ID, clearing any object they occlude.
            ids[y0:y1 + 1, x0:x1 + 1][write] = instance_id


# -- external render ingestion ------------------------------------------------


def write_render_dir(out: RenderOutput, root, view_id: str) -> Path:
    """Persist a render as <root>/<view_id>/{rgb.png, ids.png, depth.pgm}."""
    d = Path(root) / view_id
    d.mkdir(parents=True, exist_ok=True)
    imgio.write_rgb(d / "rgb.png", out.rgb)
    imgio.write_id_map(d / "ids.png", out.instance_ids)
    depth = np.where(np.isfinite(out.depth), out.depth, 0.0)
    imgio.write_depth_pgm(d / "depth.pgm", depth)
    return d


def read_render_dir(root, view_id: str, id_to_class: dict | None = None) -> RenderOutput:
    """Ingest a render produced by an external engine. Layout mirrors
    write_render_dir; depth 0 means "no hit" and maps back to +inf.

    External engines do not ship scene knowledge, so by default the known
    ids are those visible in the id map (fully occluded instances cannot be
    recovered); pass id_to_class to supply the full set."""
    d = Path(root) / view_id
    rgb = imgio.to_float(imgio.read_rgb(d / "rgb.png"))
    ids = imgio.read_id_map(d / "ids.png")
    depth = imgio.read_depth_pgm(d / "depth.pgm")
    depth = np.where(depth > 0, depth, np.inf).astype(np.float32)
    if rgb.shape[:2] != ids.shape or ids.shape != depth.shape:
        raise ValueError(f"{d}: rgb/ids/depth shapes disagree")
    if id_to_class is None:
        present = np.unique(ids)
        id_to_class = {int(i): "" for i in present if i != BACKGROUND_ID}
    return RenderOutput(rgb=rgb, depth=depth, instance_ids=ids,
                        id_to_class=id_to_class)
