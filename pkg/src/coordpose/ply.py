"""Minimal PLY mesh I/O: ASCII and binary little-endian, vertices + triangular faces.

Only the properties the pose pipeline needs are read (vertex x/y/z and face
vertex indices); everything else in the file is parsed and skipped.
"""

from __future__ import annotations

import numpy as np

from .exceptions import FormatError
from .geometry import Mesh

_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _parse_header(f):
    if f.readline().strip() != b"ply":
        raise FormatError("not a PLY file")
    fmt = None
    elements = []  # (name, count, [(prop_name, dtype) | (prop_name, count_dtype, item_dtype)])
    while True:
        line = f.readline()
        if not line:
            raise FormatError("unexpected end of PLY header")
        tokens = line.decode("ascii", errors="replace").split()
        if not tokens or tokens[0] == "comment" or tokens[0] == "obj_info":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise FormatError("property before element in PLY header")
            if tokens[1] == "list":
                elements[-1][2].append((tokens[4], _SCALAR_TYPES[tokens[2]], _SCALAR_TYPES[tokens[3]]))
            else:
                elements[-1][2].append((tokens[2], _SCALAR_TYPES[tokens[1]]))
        elif tokens[0] == "end_header":
            break
        else:
            raise FormatError(f"unknown PLY header line: {tokens[0]}")
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"unsupported PLY format {fmt!r}")
    return fmt, elements


def _read_ascii_element(f, count, props):
    rows = []
    for _ in range(count):
        tokens = f.readline().split()
        if not tokens:
            raise FormatError("truncated PLY body")
        rows.append(tokens)
    return rows


def load_ply(path) -> Mesh:
    """Read a mesh; faces with more than 3 vertices are fan-triangulated."""
    with open(path, "rb") as f:
        fmt, elements = _parse_header(f)
        verts = None
        tris = []
        for name, count, props in elements:
            if fmt == "ascii":
                rows = _read_ascii_element(f, count, props)
                if name == "vertex":
                    idx = {p[0]: i for i, p in enumerate(props)}
                    for axis in ("x", "y", "z"):
                        if axis not in idx:
                            raise FormatError(f"vertex element lacks property {axis}")
                    cols = [idx["x"], idx["y"], idx["z"]]
                    verts = np.array([[float(r[c]) for c in cols] for r in rows])
                elif name == "face":
                    for r in rows:
                        n = int(r[0])
                        poly = [int(v) for v in r[1 : 1 + n]]
                        for i in range(1, n - 1):
                            tris.append([poly[0], poly[i], poly[i + 1]])
            else:
                if name == "vertex":
                    if any(len(p) == 3 for p in props):
                        raise FormatError("list property on vertex element is unsupported")
                    dt = np.dtype([(p[0], "<" + p[1]) for p in props])
                    data = np.frombuffer(f.read(dt.itemsize * count), dtype=dt, count=count)
                    for axis in ("x", "y", "z"):
                        if axis not in dt.names:
                            raise FormatError(f"vertex element lacks property {axis}")
                    verts = np.stack(
                        [data["x"], data["y"], data["z"]], axis=1
                    ).astype(np.float64)
                elif name == "face":
                    for _ in range(count):
                        parts = []
                        for p in props:
                            if len(p) == 3:
                                n = int(np.frombuffer(f.read(np.dtype(p[1]).itemsize), dtype="<" + p[1])[0])
                                vals = np.frombuffer(
                                    f.read(np.dtype(p[2]).itemsize * n), dtype="<" + p[2], count=n
                                )
                                parts.append([int(v) for v in vals])
                            else:
                                f.read(np.dtype(p[1]).itemsize)
                        if not parts:
                            raise FormatError("face element has no index list")
                        poly = parts[0]
                        for i in range(1, len(poly) - 1):
                            tris.append([poly[0], poly[i], poly[i + 1]])
                else:
                    # skip an unneeded fixed-layout element
                    if any(len(p) == 3 for p in props):
                        for _ in range(count):
                            for p in props:
                                if len(p) == 3:
                                    n = int(np.frombuffer(f.read(np.dtype(p[1]).itemsize), dtype="<" + p[1])[0])
                                    f.read(np.dtype(p[2]).itemsize * n)
                                else:
                                    f.read(np.dtype(p[1]).itemsize)
                    else:
                        row = sum(np.dtype(p[1]).itemsize for p in props)
                        f.read(row * count)
    if verts is None:
        raise FormatError("PLY file has no vertex element")
    if not tris:
        raise FormatError("PLY file has no triangles")
    return Mesh(verts, np.array(tris, dtype=np.int64))


def save_ply(path, mesh: Mesh, binary: bool = True) -> None:
    """Write a mesh with float32 vertices and uchar-counted int32 face lists."""
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property float x",
        "property float y",
        "property float z",
        f"element face {len(mesh.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            f.write(mesh.vertices.astype("<f4").tobytes())
            tri = mesh.triangles.astype("<i4")
            counts = np.full((len(tri), 1), 3, dtype="u1")
            rec = np.dtype([("n", "u1"), ("v", "<i4", (3,))])
            rows = np.empty(len(tri), dtype=rec)
            rows["n"] = counts[:, 0]
            rows["v"] = tri
            f.write(rows.tobytes())
        else:
            for v in mesh.vertices:
                f.write(f"{v[0]:.6f} {v[1]:.6f} {v[2]:.6f}\n".encode("ascii"))
            for t in mesh.triangles:
                f.write(f"3 {t[0]} {t[1]} {t[2]}\n".encode("ascii"))
