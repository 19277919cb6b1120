"""STL / OBJ export and the JSON B-rep dump."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .solid import Solid, TriangleMesh
from .surfaces import surface_from_dict

_STL_RECORD = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])


def write_stl(mesh: TriangleMesh, path, header: bytes = b"pointercad") -> None:
    """Binary little-endian STL."""
    rec = np.zeros(len(mesh.triangles), dtype=_STL_RECORD)
    cr = mesh.cross()
    norm = np.linalg.norm(cr, axis=1, keepdims=True)
    rec["normal"] = cr / np.where(norm > 0, norm, 1.0)
    rec["v"] = mesh.corners
    with open(path, "wb") as fh:
        fh.write(header[:80].ljust(80, b"\0"))
        fh.write(struct.pack("<I", len(rec)))
        fh.write(rec.tobytes())


def read_stl(path) -> TriangleMesh:
    """Read a binary STL, welding exactly coincident corners."""
    data = Path(path).read_bytes()
    (count,) = struct.unpack_from("<I", data, 80)
    rec = np.frombuffer(data, dtype=_STL_RECORD, count=count, offset=84)
    corners = rec["v"].astype(float).reshape(-1, 3)
    verts, inv = np.unique(corners, axis=0, return_inverse=True)
    return TriangleMesh(verts, inv.reshape(-1, 3))


def write_obj(mesh: TriangleMesh, path) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path) -> TriangleMesh:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(c) for c in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            faces.extend([idx[0], idx[i], idx[i + 1]] for i in range(1, len(idx) - 1))
    return TriangleMesh(np.array(verts, dtype=float), np.array(faces, dtype=np.int64))


def load_mesh(path) -> TriangleMesh:
    path = Path(path)
    if path.suffix.lower() == ".obj":
        return read_obj(path)
    if path.suffix.lower() == ".json":
        return load_solid(path).mesh
    return read_stl(path)


def solid_to_dict(solid: Solid) -> dict:
    topo = solid.topology
    return {
        "volume": solid.volume,
        "faces": [{"id": f.stable_id, "tag": f.tag, "surface": f.surface.to_dict(), "area": f.area} for f in topo.faces],
        "edges": [
            {"id": e.stable_id, "curve": e.curve.to_dict(), "faces": [topo.faces[i].stable_id for i in e.faces]}
            for e in topo.edges
        ],
        "graph": [[topo.faces[a].stable_id, topo.faces[b].stable_id, topo.edges[i].stable_id] for a, b, i in topo.adjacency()],
        "mesh": {
            "vertices": solid.vertices.tolist(),
            "triangles": solid.triangles.tolist(),
            "tags": solid.tags.tolist(),
            "surfaces": {str(t): s.to_dict() for t, s in solid.surfaces.items()},
        },
    }


def dump_solid(solid: Solid, path) -> None:
    Path(path).write_text(json.dumps(solid_to_dict(solid)))


def solid_from_dict(doc: dict) -> Solid:
    mesh = doc["mesh"]
    surfaces = {int(t): surface_from_dict(s) for t, s in mesh["surfaces"].items()}
    return Solid(
        np.asarray(mesh["vertices"], dtype=float).reshape(-1, 3),
        np.asarray(mesh["triangles"], dtype=np.int64).reshape(-1, 3),
        np.asarray(mesh["tags"], dtype=np.int64),
        surfaces,
    )


def load_solid(path) -> Solid:
    return solid_from_dict(json.loads(Path(path).read_text()))
