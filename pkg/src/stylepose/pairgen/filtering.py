"""Multi-view mismatch filtering.

Detections for a static scene should agree across the trajectory. For
each class, count detections per view within the working distance band,
take the modal count over the trajectory as consensus, and keep only the
views that match it. A view survives multi-class filtering only if it
matches consensus for every class (per-class retained sets intersected).
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import imgio
from ..manifest import SceneManifest
from .scenes import DISTANCE_RANGE

log = logging.getLogger(__name__)


def count_in_range(detections, d_min: float = DISTANCE_RANGE[0],
                   d_max: float = DISTANCE_RANGE[1],
                   class_name: str | None = None) -> int:
    """Detections whose camera distance lies in the closed band [d_min, d_max],
    restricted to class_name unless it is None."""
    if not d_min < d_max:
        raise ValueError(f"need d_min < d_max, got [{d_min}, {d_max}]")
    n = 0
    for d in detections:
        if class_name is not None and d.class_name != class_name:
            continue
        dist = float(np.linalg.norm(d.pose.translation))
        if d_min <= dist <= d_max:
            n += 1
    return n


def consensus_count(counts) -> int:
    """Modal value of the per-view counts; ties resolve to the smaller count."""
    counts = list(counts)
    if not counts:
        raise ValueError("consensus over zero views")
    tally = Counter(counts)
    best = max(tally.values())
    return min(v for v, c in tally.items() if c == best)


@dataclass(frozen=True)
class FilterReport:
    scene_id: str
    total_views: int
    retained_views: tuple  # sorted view ids
    per_class: dict = field(default_factory=dict)
    # per_class[class] = {"consensus": int, "counts": {view_id: int},
    #                     "retained": [view ids]}

    @property
    def retention(self) -> float:
        return len(self.retained_views) / self.total_views if self.total_views else 0.0

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "scene_id": self.scene_id,
            "total_views": self.total_views,
            "retained_views": list(self.retained_views),
            "retention": self.retention,
            "per_class": self.per_class,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        return path


def filter_detections(per_view: dict, classes, scene_id: str = "",
                      distance_range=DISTANCE_RANGE) -> FilterReport:
    """Pure consensus computation over {view_id: [Detection]}.

    Idempotent: re-running on the retained subset keeps all of it, because
    a constant count is its own mode.
    """
    if not per_view:
        raise ValueError("mismatch filter needs at least one view")
    d_min, d_max = distance_range
    view_ids = sorted(per_view)
    retained = set(view_ids)
    per_class = {}
    for cls in sorted(classes):
        counts = {
            v: count_in_range(per_view[v], d_min, d_max, cls) for v in view_ids
        }
        n_bar = consensus_count(counts.values())
        keep = sorted(v for v in view_ids if counts[v] == n_bar)
        per_class[cls] = {"consensus": n_bar, "counts": counts, "retained": keep}
        retained &= set(keep)
    return FilterReport(
        scene_id=scene_id,
        total_views=len(view_ids),
        retained_views=tuple(sorted(retained)),
        per_class=per_class,
    )


def estimate_scene(provider, scene_root, manifest: SceneManifest) -> dict:
    """Run a pose provider on every view of one scene."""
    per_view = {}
    for view in manifest.views:
        image = imgio.read_rgb(Path(scene_root) / view.image)
        per_view[view.view_id] = provider.estimate(image, view.intrinsics)
    return per_view


def filtered_manifest(manifest: SceneManifest, report: FilterReport):
    """Manifest restricted to retained views; None (with a warning) when
    nothing survived, since a manifest cannot be empty."""
    keep = set(report.retained_views)
    views = tuple(v for v in manifest.views if v.view_id in keep)
    if not views:
        log.warning("scene %s: mismatch filter retained zero views", manifest.scene_id)
        return None
    return SceneManifest(
        scene_id=manifest.scene_id,
        provenance=manifest.provenance,
        views=views,
        classes=manifest.classes,
        config_hash=manifest.config_hash,
        extras=dict(manifest.extras),
    )


def mismatch_filter(manifest: SceneManifest, provider, classes, scene_root,
                    distance_range=DISTANCE_RANGE):
    """Estimate poses for every view, then keep views matching the per-class
    modal count. Returns (FilterReport, filtered manifest or None)."""
    per_view = estimate_scene(provider, scene_root, manifest)
    report = filter_detections(per_view, classes, manifest.scene_id, distance_range)
    return report, filtered_manifest(manifest, report)
