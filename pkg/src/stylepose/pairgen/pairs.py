"""Weak pair construction.

For every retained view of a captured sequence, render the scene the pose
provider believes it saw (same camera, estimated object poses) and record
per-instance crop boxes. The real photo and the render then form a weakly
paired training example: same content, no pixel alignment guarantee.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path

from .. import imgio
from ..boxes import bbox_from_mask, expand_bbox
from ..manifest import (
    SceneManifest,
    WeakPair,
    WeakPairInstance,
    dataset_index_load,
    detections_save,
    manifest_load,
    weak_pairs_save,
)
from ..render import SceneGraph, SceneInstance, SoftwareRenderer, mask_for_instance
from .filtering import estimate_scene, filter_detections, filtered_manifest

log = logging.getLogger(__name__)

DEFAULT_EXPAND = 1.2


def build_weak_pairs(
    manifest: SceneManifest,
    per_view: dict,  # {view_id: [Detection]}, views already filtered
    meshes: dict,
    out_dir,
    scene_root,
    expand_factor: float = DEFAULT_EXPAND,
    renderer=None,
) -> list:
    """One WeakPair per view of the (filtered) manifest.

    A detection of a class with no mesh is an error: the render would
    silently misrepresent what the provider saw. Instances whose render
    mask comes out empty (behind the camera, out of frame, fully
    occluded) are dropped with a warning; a view with no instances left
    is skipped entirely.
    """
    renderer = renderer or SoftwareRenderer()
    out_dir = Path(out_dir)
    scene_root = Path(scene_root)
    pairs = []
    for view in manifest.views:
        detections = per_view[view.view_id]
        missing = sorted({d.class_name for d in detections} - set(meshes))
        if missing:
            raise KeyError(
                f"{manifest.scene_id}/{view.view_id}: no mesh model for "
                f"detected class(es) {missing}"
            )
        pair = _build_pair(
            manifest, scene_root, view, detections, meshes,
            expand_factor, renderer, out_dir,
        )
        if pair is not None:
            pairs.append(pair)
    return pairs


def _build_pair(manifest, scene_root, view, detections, meshes,
                expand_factor, renderer, out_dir):
    if not detections:
        log.warning("%s/%s: no detections, view skipped",
                    manifest.scene_id, view.view_id)
        return None
    scene = SceneGraph(
        tuple(
            SceneInstance(meshes[d.class_name],
                          view.camera_pose.compose(d.pose),
                          d.instance_id)
            for d in detections
        )
    )
    out = renderer.render_view(scene, view.camera_pose, view.intrinsics)

    synth_rel = Path("synth") / manifest.scene_id / f"{view.view_id}.png"
    imgio.write_rgb(out_dir / synth_rel, out.rgb)
    bounds = (view.intrinsics.width, view.intrinsics.height)

    instances = []
    for d in detections:
        inst_mask = mask_for_instance(out, d.instance_id)
        if inst_mask.is_empty:
            log.warning("%s/%s: instance %s/%d renders to an empty mask, dropped",
                        manifest.scene_id, view.view_id, d.class_name, d.instance_id)
            continue
        mask_rel = (
            Path("synth") / manifest.scene_id / "masks"
            / f"{view.view_id}_{d.instance_id:04d}.png"
        )
        imgio.write_mask(out_dir / mask_rel, inst_mask.mask)
        box = expand_bbox(bbox_from_mask(inst_mask.mask), expand_factor, bounds)
        instances.append(
            WeakPairInstance(
                class_name=d.class_name,
                instance_id=d.instance_id,
                bbox=box,
                pose_cam=d.pose,
                mask=str(mask_rel),
            )
        )
    if not instances:
        log.warning("%s/%s: all instances dropped, view skipped",
                    manifest.scene_id, view.view_id)
        return None

    real_rel = os.path.relpath(scene_root / view.image, out_dir)
    return WeakPair(
        scene_id=manifest.scene_id,
        view_id=view.view_id,
        real_image=real_rel,
        synth_image=str(synth_rel),
        instances=tuple(instances),
    )


def build_pairs_dataset(
    capture_root,
    out_dir,
    provider,
    meshes: dict,
    expand_factor: float = DEFAULT_EXPAND,
    renderer=None,
    config_hash=None,
):
    """Full pair stage over a captured dataset: provider inference, raw
    detection dumps, per-scene filter reports, weak pairs, pairs_index.json.

    Only datasets with provenance "real" are accepted; pairing synthetic
    data with itself would teach the style network nothing.
    """
    capture_root = Path(capture_root)
    out_dir = Path(out_dir)
    renderer = renderer or SoftwareRenderer()
    index = dataset_index_load(capture_root / "index.json")
    if index.provenance != "real":
        raise ValueError(
            f"weak pairs need a real capture, got provenance {index.provenance!r}"
        )
    pairs, reports = [], []
    for rel in index.scene_manifests:
        manifest = manifest_load(capture_root / rel)
        scene_root = (capture_root / rel).parent
        per_view = estimate_scene(provider, scene_root, manifest)
        detections_save(per_view, out_dir / "detections" / f"{manifest.scene_id}.json")
        report = filter_detections(per_view, index.class_names, manifest.scene_id)
        report.save(out_dir / "filters" / f"{manifest.scene_id}.json")
        reports.append(report)
        kept = filtered_manifest(manifest, report)
        if kept is None:
            continue
        pairs.extend(
            build_weak_pairs(
                kept, per_view, meshes, out_dir, scene_root,
                expand_factor, renderer,
            )
        )
    weak_pairs_save(
        pairs, out_dir / "pairs_index.json",
        class_names=index.class_names, config_hash=config_hash,
    )
    return pairs, reports
