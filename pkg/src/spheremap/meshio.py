"""ASCII PLY / OBJ mesh ingestion and point-cloud PLY export.

Only the attributes the pipeline needs are read (positions, normals, face
indices); unknown vertex properties and OBJ records are ignored.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import EmptyInput, SphereMapError
from .geometry import PointCloud, estimate_normals_from_mesh


class MeshParseError(SphereMapError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")


def load_mesh(path: str | Path) -> PointCloud:
    """Load a PLY or OBJ file into a PointCloud.

    When per-vertex normals are present they are used directly; otherwise
    they are estimated from the faces.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ply":
        verts, normals, faces = _parse_ply(path)
    elif suffix == ".obj":
        verts, normals, faces = _parse_obj(path)
    else:
        raise MeshParseError(path, 0, f"unsupported mesh format {suffix!r}")

    if len(verts) == 0:
        raise EmptyInput(f"no vertices in {path}")
    if normals is not None:
        return PointCloud(verts, normals)
    if faces is None or len(faces) == 0:
        raise SphereMapError(f"{path}: no normals and no faces to estimate them from")
    return estimate_normals_from_mesh(verts, faces)


def _parse_ply(path: Path):
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshParseError(path, 1, "missing 'ply' magic")

    n_vertex = n_face = 0
    vertex_props: list[str] = []
    current_element = None
    i = 1
    while i < len(lines):
        tokens = lines[i].split()
        i += 1
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if tokens[1] != "ascii":
                raise MeshParseError(path, i, "only ascii PLY is supported")
        elif tokens[0] == "element":
            current_element = tokens[1]
            if tokens[1] == "vertex":
                n_vertex = int(tokens[2])
            elif tokens[1] == "face":
                n_face = int(tokens[2])
        elif tokens[0] == "property" and current_element == "vertex":
            vertex_props.append(tokens[-1])
        elif tokens[0] == "end_header":
            break
    else:
        raise MeshParseError(path, len(lines), "missing end_header")

    try:
        idx = {name: vertex_props.index(name) for name in ("x", "y", "z")}
    except ValueError as exc:
        raise MeshParseError(path, i, f"vertex element lacks coordinate: {exc}")
    has_normals = all(n in vertex_props for n in ("nx", "ny", "nz"))

    verts = np.empty((n_vertex, 3), dtype=np.float64)
    normals = np.empty((n_vertex, 3), dtype=np.float64) if has_normals else None
    for v in range(n_vertex):
        if i + v >= len(lines):
            raise MeshParseError(path, len(lines), "unexpected end of vertex data")
        tokens = lines[i + v].split()
        if len(tokens) < len(vertex_props):
            raise MeshParseError(path, i + v + 1, "short vertex record")
        try:
            verts[v] = [float(tokens[idx["x"]]), float(tokens[idx["y"]]),
                        float(tokens[idx["z"]])]
            if has_normals:
                normals[v] = [
                    float(tokens[vertex_props.index("nx")]),
                    float(tokens[vertex_props.index("ny")]),
                    float(tokens[vertex_props.index("nz")]),
                ]
        except ValueError as exc:
            raise MeshParseError(path, i + v + 1, f"bad vertex value: {exc}")
    i += n_vertex

    faces = []
    for f in range(n_face):
        tokens = lines[i + f].split()
        count = int(tokens[0])
        poly = [int(t) for t in tokens[1 : 1 + count]]
        # fan-triangulate polygons
        for k in range(1, count - 1):
            faces.append((poly[0], poly[k], poly[k + 1]))
    faces_arr = np.array(faces, dtype=np.int64) if faces else None
    return verts, normals, faces_arr


def _parse_obj(path: Path):
    verts, vnormals, faces, face_normal_idx = [], [], [], []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            if tokens[0] == "v":
                verts.append([float(t) for t in tokens[1:4]])
            elif tokens[0] == "vn":
                vnormals.append([float(t) for t in tokens[1:4]])
            elif tokens[0] == "f":
                refs = [t.split("/") for t in tokens[1:]]
                vi = [int(r[0]) - 1 for r in refs]
                for k in range(1, len(vi) - 1):
                    faces.append((vi[0], vi[k], vi[k + 1]))
                if all(len(r) >= 3 and r[2] for r in refs):
                    face_normal_idx.append([int(r[2]) - 1 for r in refs])
        except (ValueError, IndexError) as exc:
            raise MeshParseError(path, line_no, f"bad record: {exc}")

    verts_arr = np.array(verts, dtype=np.float64).reshape(-1, 3)
    faces_arr = np.array(faces, dtype=np.int64) if faces else None

    normals = None
    if vnormals and len(vnormals) == len(verts):
        # vn records aligned 1:1 with v records
        normals = np.array(vnormals, dtype=np.float64)
        norms = np.linalg.norm(normals, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        normals = normals / norms
    return verts_arr, normals, faces_arr


def save_ply(path: str | Path, cloud: PointCloud) -> None:
    """Write a point cloud (positions + normals, no faces) as ASCII PLY."""
    path = Path(path)
    n = len(cloud)
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {n}",
        "property float x",
        "property float y",
        "property float z",
        "property float nx",
        "property float ny",
        "property float nz",
        "end_header",
    ]
    data = np.hstack([cloud.positions, cloud.normals])
    with path.open("w") as fh:
        fh.write("\n".join(header) + "\n")
        np.savetxt(fh, data, fmt="%.9g")
