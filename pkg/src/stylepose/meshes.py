"""Triangle meshes with per-vertex colors, plus primitive builders.

Meshes are authored in an object frame with +z up so the gravity-aware
placement in pairgen can drop them straight onto a support plane.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class MeshModel:
    vertices: np.ndarray  # (N,3) meters, object frame
    faces: np.ndarray  # (M,3) vertex indices
    vertex_colors: np.ndarray  # (N,3) RGB in [0,1]
    class_name: str
    stable_uprights: tuple = field(default=())  # candidate resting orientations (Pose rotations)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        f = np.array(self.faces, dtype=np.int64)
        c = np.array(self.vertex_colors, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3 or not np.all(np.isfinite(v)):
            raise ValueError("vertices must be a finite (N,3) array")
        if f.ndim != 2 or f.shape[1] != 3 or f.shape[0] < 1:
            raise ValueError("faces must be an (M,3) array with M >= 1")
        if f.min() < 0 or f.max() >= len(v):
            raise ValueError("face index out of range")
        if c.shape != v.shape or c.min() < 0 or c.max() > 1:
            raise ValueError("vertex_colors must be (N,3) in [0,1]")
        for a in (v, f, c):
            a.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "vertex_colors", c)

    @property
    def radius_xy(self) -> float:
        """Max horizontal distance of any vertex from the object origin."""
        return float(np.linalg.norm(self.vertices[:, :2], axis=1).max())

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.vertices, axis=1).max())


def make_box(size=(0.06, 0.06, 0.06), color=(0.8, 0.2, 0.2), class_name="box") -> MeshModel:
    """Axis-aligned box centered in x/y, resting base at z=0."""
    sx, sy, sz = size
    xs = (-sx / 2, sx / 2)
    ys = (-sy / 2, sy / 2)
    zs = (0.0, sz)
    verts = np.array([(x, y, z) for z in zs for y in ys for x in xs])
    faces = np.array(
        [
            (0, 2, 1), (1, 2, 3),  # bottom
            (4, 5, 6), (5, 7, 6),  # top
            (0, 1, 4), (1, 5, 4),  # front
            (2, 6, 3), (3, 6, 7),  # back
            (0, 4, 2), (2, 4, 6),  # left
            (1, 3, 5), (3, 7, 5),  # right
        ]
    )
    colors = np.tile(np.asarray(color, dtype=np.float64), (len(verts), 1))
    return MeshModel(verts, faces, colors, class_name)


def make_cylinder(
    radius=0.03, height=0.12, segments=24, color=(0.2, 0.4, 0.8), class_name="cylinder"
) -> MeshModel:
    """Closed cylinder, base at z=0, axis along +z."""
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bottom = np.concatenate([ring, np.zeros((segments, 1))], axis=1)
    top = np.concatenate([ring, np.full((segments, 1), height)], axis=1)
    verts = np.concatenate([bottom, top, [[0, 0, 0]], [[0, 0, height]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces.append((i, j, segments + i))
        faces.append((j, segments + j, segments + i))
        faces.append((cb, j, i))
        faces.append((ct, segments + i, segments + j))
    colors = np.tile(np.asarray(color, dtype=np.float64), (len(verts), 1))
    return MeshModel(verts, np.array(faces), colors, class_name)


def save_mesh(mesh: MeshModel, path) -> Path:
    """Write a mesh as canonical JSON (sorted keys, stable float repr)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "schema": 1,
        "class_name": mesh.class_name,
        "vertices": [[float(x) for x in v] for v in mesh.vertices],
        "faces": [[int(i) for i in f] for f in mesh.faces],
        "vertex_colors": [[float(x) for x in c] for c in mesh.vertex_colors],
        "stable_uprights": [[float(x) for x in q] for q in mesh.stable_uprights],
    }
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def load_mesh(path) -> MeshModel:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return MeshModel(
        vertices=np.asarray(data["vertices"], dtype=np.float64),
        faces=np.asarray(data["faces"], dtype=np.int64),
        vertex_colors=np.asarray(data["vertex_colors"], dtype=np.float64),
        class_name=str(data["class_name"]),
        stable_uprights=tuple(
            np.asarray(q, dtype=np.float64) for q in data.get("stable_uprights", [])
        ),
    )


def load_mesh_dir(path) -> dict:
    """Load every *.json mesh in a directory, keyed by class_name."""
    meshes = {}
    for f in sorted(Path(path).glob("*.json")):
        m = load_mesh(f)
        meshes[m.class_name] = m
    if not meshes:
        raise FileNotFoundError(f"no mesh files (*.json) in {path}")
    return meshes


def make_plane(size=(1.2, 0.8), color=(0.55, 0.5, 0.45), class_name="plane", z=0.0) -> MeshModel:
    """Horizontal rectangle centered at the origin at height z."""
    sx, sy = size
    verts = np.array(
        [
            (-sx / 2, -sy / 2, z),
            (sx / 2, -sy / 2, z),
            (sx / 2, sy / 2, z),
            (-sx / 2, sy / 2, z),
        ]
    )
    faces = np.array([(0, 1, 2), (0, 2, 3)])
    colors = np.tile(np.asarray(color, dtype=np.float64), (len(verts), 1))
    return MeshModel(verts, faces, colors, class_name)
