"""Scene manifests, per-view labels, detections, and weak-pair records.

One JSON manifest per captured or generated scene ("schema": 1). Paths
inside a manifest are relative to the manifest's directory. Serialization
is canonical (sorted keys, 2-space indent) so saving is byte-stable, and
unknown fields survive a load/save round trip to keep files written by
newer pipeline stages usable.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import BBox2D
from .geometry import CameraIntrinsics, Pose

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PROVENANCES = ("real", "synthetic-DR", "synthetic-DS", "adapted")


class ManifestError(ValueError):
    """Malformed or invariant-violating manifest content."""


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def json_hash(obj) -> str:
    """sha256 of the canonical JSON encoding; used as a config fingerprint
    embedded in artifacts so cross-stage mismatches can be detected."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ManifestError(f"{where}: missing required field {key!r}")
    return data[key]


# -- pose / intrinsics / detection codecs --------------------------------


def pose_to_json(pose: Pose) -> dict:
    return {
        "rotation": [float(v) for v in pose.rotation],
        "translation": [float(v) for v in pose.translation],
    }


def pose_from_json(data: dict, where: str = "pose") -> Pose:
    try:
        return Pose(
            np.asarray(_require(data, "rotation", where), dtype=np.float64),
            np.asarray(_require(data, "translation", where), dtype=np.float64),
        )
    except (TypeError, ValueError) as e:
        raise ManifestError(f"{where}: {e}") from e


def intrinsics_to_json(intr: CameraIntrinsics) -> dict:
    return {
        "fx": float(intr.fx),
        "fy": float(intr.fy),
        "cx": float(intr.cx),
        "cy": float(intr.cy),
        "width": int(intr.width),
        "height": int(intr.height),
    }


def intrinsics_from_json(data: dict, where: str = "intrinsics") -> CameraIntrinsics:
    try:
        return CameraIntrinsics(
            fx=float(_require(data, "fx", where)),
            fy=float(_require(data, "fy", where)),
            cx=float(_require(data, "cx", where)),
            cy=float(_require(data, "cy", where)),
            width=int(_require(data, "width", where)),
            height=int(_require(data, "height", where)),
        )
    except (TypeError, ValueError) as e:
        raise ManifestError(f"{where}: {e}") from e


@dataclass(frozen=True)
class Detection:
    """One estimated object instance, pose in the camera frame."""

    class_name: str
    instance_id: int
    pose: Pose
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0,1]")


def detection_to_json(det: Detection) -> dict:
    return {
        "class_name": det.class_name,
        "instance_id": int(det.instance_id),
        "pose": pose_to_json(det.pose),
        "score": float(det.score),
    }


def detection_from_json(data: dict, where: str = "detection") -> Detection:
    return Detection(
        class_name=str(_require(data, "class_name", where)),
        instance_id=int(_require(data, "instance_id", where)),
        pose=pose_from_json(_require(data, "pose", where), f"{where}.pose"),
        score=float(_require(data, "score", where)),
    )


# -- scene manifests ------------------------------------------------------


@dataclass(frozen=True)
class ViewRecord:
    scene_id: str
    view_id: str
    image: str  # relative path
    camera_pose: Pose  # camera-to-world
    intrinsics: CameraIntrinsics
    labels: str | None = None  # relative path to per-view label JSON
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SceneManifest:
    scene_id: str
    provenance: str
    views: tuple
    classes: tuple = ()
    config_hash: str | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ManifestError(f"unknown provenance {self.provenance!r}")
        if len(self.views) < 1:
            raise ManifestError(f"scene {self.scene_id!r} has no views")
        ids = [v.view_id for v in self.views]
        if len(set(ids)) != len(ids):
            raise ManifestError(f"scene {self.scene_id!r} has duplicate view ids")
        for v in self.views:
            if v.scene_id != self.scene_id:
                raise ManifestError(
                    f"view {v.view_id!r} belongs to scene {v.scene_id!r}, "
                    f"not {self.scene_id!r}"
                )
        object.__setattr__(self, "views", tuple(self.views))
        object.__setattr__(self, "classes", tuple(self.classes))

    def view(self, view_id: str) -> ViewRecord:
        for v in self.views:
            if v.view_id == view_id:
                return v
        raise KeyError(view_id)


def _view_to_json(v: ViewRecord) -> dict:
    data = dict(v.extras)
    data.update(
        {
            "scene_id": v.scene_id,
            "view_id": v.view_id,
            "image": v.image,
            "camera_pose": pose_to_json(v.camera_pose),
            "intrinsics": intrinsics_to_json(v.intrinsics),
        }
    )
    if v.labels is not None:
        data["labels"] = v.labels
    return data


def _view_from_json(data: dict, where: str) -> ViewRecord:
    known = {"scene_id", "view_id", "image", "camera_pose", "intrinsics", "labels"}
    return ViewRecord(
        scene_id=str(_require(data, "scene_id", where)),
        view_id=str(_require(data, "view_id", where)),
        image=str(_require(data, "image", where)),
        camera_pose=pose_from_json(_require(data, "camera_pose", where), f"{where}.camera_pose"),
        intrinsics=intrinsics_from_json(_require(data, "intrinsics", where), f"{where}.intrinsics"),
        labels=data.get("labels"),
        extras={k: v for k, v in data.items() if k not in known},
    )


def manifest_to_json(m: SceneManifest) -> dict:
    data = dict(m.extras)
    data.update(
        {
            "schema": SCHEMA_VERSION,
            "scene_id": m.scene_id,
            "provenance": m.provenance,
            "classes": list(m.classes),
            "views": [_view_to_json(v) for v in m.views],
        }
    )
    if m.config_hash is not None:
        data["config_hash"] = m.config_hash
    return data


def manifest_save(m: SceneManifest, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dumps(manifest_to_json(m)), encoding="utf-8")
    return path


def manifest_load(path, check_images: bool = True) -> SceneManifest:
    """Load and validate a manifest; missing image files are warnings, not errors."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: line {e.lineno} col {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ManifestError(f"{path}: top level must be an object")
    schema = data.get("schema")
    if schema != SCHEMA_VERSION:
        raise ManifestError(f"{path}: unsupported schema {schema!r}")
    views_raw = _require(data, "views", str(path))
    views = [_view_from_json(v, f"{path} view[{i}]") for i, v in enumerate(views_raw)]
    known = {"schema", "scene_id", "provenance", "classes", "views", "config_hash"}
    m = SceneManifest(
        scene_id=str(_require(data, "scene_id", str(path))),
        provenance=str(_require(data, "provenance", str(path))),
        views=tuple(views),
        classes=tuple(data.get("classes", ())),
        config_hash=data.get("config_hash"),
        extras={k: v for k, v in data.items() if k not in known},
    )
    if check_images:
        for w in validate_images(m, path.parent):
            log.warning("%s", w)
    return m


def validate_images(m: SceneManifest, root) -> list[str]:
    """Return one warning per view whose referenced image file is missing."""
    root = Path(root)
    missing = []
    for v in m.views:
        if not (root / v.image).is_file():
            missing.append(f"scene {m.scene_id}: view {v.view_id}: missing image {v.image}")
    return missing


# -- per-view instance labels ----------------------------------------------


@dataclass(frozen=True)
class InstanceLabel:
    class_name: str
    instance_id: int
    pose_cam: Pose
    bbox: BBox2D
    mask: str  # relative path to a mask PNG


@dataclass(frozen=True)
class ViewLabels:
    view_id: str
    instances: tuple


def labels_save(labels: ViewLabels, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "schema": SCHEMA_VERSION,
        "view_id": labels.view_id,
        "instances": [
            {
                "class_name": i.class_name,
                "instance_id": int(i.instance_id),
                "pose_cam": pose_to_json(i.pose_cam),
                "bbox": list(i.bbox.as_tuple()),
                "mask": i.mask,
            }
            for i in labels.instances
        ],
    }
    path.write_text(_dumps(data), encoding="utf-8")
    return path


def labels_load(path) -> ViewLabels:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: line {e.lineno} col {e.colno}: {e.msg}") from e
    insts = []
    for i, d in enumerate(data.get("instances", [])):
        where = f"{path} instance[{i}]"
        x0, y0, x1, y1 = _require(d, "bbox", where)
        insts.append(
            InstanceLabel(
                class_name=str(_require(d, "class_name", where)),
                instance_id=int(_require(d, "instance_id", where)),
                pose_cam=pose_from_json(_require(d, "pose_cam", where), f"{where}.pose_cam"),
                bbox=BBox2D(int(x0), int(y0), int(x1), int(y1)),
                mask=str(_require(d, "mask", where)),
            )
        )
    return ViewLabels(view_id=str(_require(data, "view_id", str(path))), instances=tuple(insts))


# -- detections files (pose-provider output per scene) ----------------------


def detections_save(per_view: dict, path) -> Path:
    """per_view: {view_id: [Detection, ...]}"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "schema": SCHEMA_VERSION,
        "views": {
            vid: [detection_to_json(d) for d in dets] for vid, dets in per_view.items()
        },
    }
    path.write_text(_dumps(data), encoding="utf-8")
    return path


def detections_load(path) -> dict:
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    return {
        vid: [detection_from_json(d, f"{path} {vid}[{i}]") for i, d in enumerate(dets)]
        for vid, dets in _require(data, "views", str(path)).items()
    }


# -- weak pairs --------------------------------------------------------------


@dataclass(frozen=True)
class WeakPairInstance:
    class_name: str
    instance_id: int
    bbox: BBox2D  # crop box shared by both images (already expansion-applied)
    pose_cam: Pose
    mask: str  # relative path to the synthetic visibility mask


@dataclass(frozen=True)
class WeakPair:
    """A real image and its rendered counterpart built from estimated poses."""

    scene_id: str
    view_id: str
    real_image: str
    synth_image: str
    instances: tuple

    def classes(self) -> set:
        return {i.class_name for i in self.instances}


def weak_pairs_save(pairs: list, path, class_names=(), config_hash=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "schema": SCHEMA_VERSION,
        "class_names": sorted(class_names),
        "pairs": [
            {
                "scene_id": p.scene_id,
                "view_id": p.view_id,
                "real": p.real_image,
                "synth": p.synth_image,
                "instances": [
                    {
                        "class_name": i.class_name,
                        "instance_id": int(i.instance_id),
                        "bbox": list(i.bbox.as_tuple()),
                        "pose_cam": pose_to_json(i.pose_cam),
                        "mask": i.mask,
                    }
                    for i in p.instances
                ],
            }
            for p in pairs
        ],
    }
    if config_hash is not None:
        data["config_hash"] = config_hash
    path.write_text(_dumps(data), encoding="utf-8")
    return path


def weak_pairs_load(path) -> list:
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    pairs = []
    for j, p in enumerate(_require(data, "pairs", str(path))):
        where = f"{path} pair[{j}]"
        insts = []
        for i, d in enumerate(p.get("instances", [])):
            x0, y0, x1, y1 = d["bbox"]
            insts.append(
                WeakPairInstance(
                    class_name=str(d["class_name"]),
                    instance_id=int(d["instance_id"]),
                    bbox=BBox2D(int(x0), int(y0), int(x1), int(y1)),
                    pose_cam=pose_from_json(d["pose_cam"], f"{where}.instance[{i}]"),
                    mask=str(d["mask"]),
                )
            )
        pairs.append(
            WeakPair(
                scene_id=str(_require(p, "scene_id", where)),
                view_id=str(_require(p, "view_id", where)),
                real_image=str(_require(p, "real", where)),
                synth_image=str(_require(p, "synth", where)),
                instances=tuple(insts),
            )
        )
    return pairs


# -- dataset index (a directory of scenes produced by one stage) -------------


@dataclass(frozen=True)
class DatasetIndex:
    provenance: str
    scene_manifests: tuple  # relative paths
    class_names: tuple = ()
    config_hash: str | None = None


def dataset_index_save(index: DatasetIndex, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "schema": SCHEMA_VERSION,
        "provenance": index.provenance,
        "class_names": list(index.class_names),
        "scenes": list(index.scene_manifests),
    }
    if index.config_hash is not None:
        data["config_hash"] = index.config_hash
    path.write_text(_dumps(data), encoding="utf-8")
    return path


def dataset_index_load(path) -> DatasetIndex:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: line {e.lineno} col {e.colno}: {e.msg}") from e
    return DatasetIndex(
        provenance=str(_require(data, "provenance", str(path))),
        scene_manifests=tuple(_require(data, "scenes", str(path))),
        class_names=tuple(data.get("class_names", ())),
        config_hash=data.get("config_hash"),
    )
