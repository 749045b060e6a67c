"""Binary little-endian PLY for labeled meshes and point clouds.

Vertex layout is x,y,z as 32-bit floats followed by red,green,blue,label
as unsigned bytes; faces are 3-index lists. A cloud is simply a mesh
with zero faces. The reader is strict about this layout and reports the
byte offset of the first offending content.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fusion import SemanticMesh

_VERTEX_DTYPE = np.dtype([("xyz", "<f4", (3,)), ("rgb", "u1", (3,)), ("label", "u1")])
_FACE_DTYPE = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])

_VERTEX_PROPS = (
    ("float", "x"), ("float", "y"), ("float", "z"),
    ("uchar", "red"), ("uchar", "green"), ("uchar", "blue"),
    ("uchar", "label"),
)


class MeshFormatError(ValueError):
    """Raised when a PLY file does not match the expected layout."""


def export_mesh(mesh: SemanticMesh, path) -> None:
    if mesh.num_triangles and mesh.triangles.max() >= 2 ** 31:
        raise ValueError("vertex index exceeds 32-bit face storage")
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.num_vertices}\n"
        + "".join(f"property {t} {n}\n" for t, n in _VERTEX_PROPS)
        + f"element face {mesh.num_triangles}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    vdata = np.empty(mesh.num_vertices, dtype=_VERTEX_DTYPE)
    vdata["xyz"] = mesh.vertices
    vdata["rgb"] = mesh.vertex_colors
    vdata["label"] = mesh.vertex_labels
    fdata = np.empty(mesh.num_triangles, dtype=_FACE_DTYPE)
    fdata["n"] = 3
    fdata["idx"] = mesh.triangles.astype(np.int32)
    Path(path).write_bytes(header.encode("ascii") + vdata.tobytes() + fdata.tobytes())


def _lines(data: bytes):
    """Yield (byte_offset, text) per header line; stop after end_header."""
    pos = 0
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise MeshFormatError(f"header not terminated (byte {len(data)})")
        try:
            text = data[pos:nl].decode("ascii").strip()
        except UnicodeDecodeError:
            raise MeshFormatError(f"non-ascii header line (byte {pos})") from None
        yield pos, text
        pos = nl + 1
        if text == "end_header":
            return


def import_mesh(path) -> SemanticMesh:
    data = Path(path).read_bytes()
    lines = _lines(data)

    off, text = next(lines)
    if text != "ply":
        raise MeshFormatError(f"not a PLY file (byte {off})")
    off, text = next(lines)
    if text != "format binary_little_endian 1.0":
        raise MeshFormatError(f"unsupported format {text!r} (byte {off})")

    n_vert = n_face = None
    vprops = []
    face_list_seen = False
    body = None
    for off, text in lines:
        if text == "end_header":
            body = off + len("end_header") + 1
            break
        if text.startswith("comment"):
            continue
        parts = text.split()
        if parts[0] == "element":
            if len(parts) != 3 or parts[1] not in ("vertex", "face"):
                raise MeshFormatError(f"unexpected element {text!r} (byte {off})")
            try:
                count = int(parts[2])
            except ValueError:
                raise MeshFormatError(f"bad element count (byte {off})") from None
            if parts[1] == "vertex":
                n_vert = count
            else:
                n_face = count
        elif parts[0] == "property":
            if parts[1:] == ["list", "uchar", "int", "vertex_indices"]:
                if n_face is None:
                    raise MeshFormatError(f"face property before face element (byte {off})")
                face_list_seen = True
            elif len(parts) == 3 and n_face is None and n_vert is not None:
                vprops.append((parts[1], parts[2]))
            else:
                raise MeshFormatError(f"unsupported property {text!r} (byte {off})")
        else:
            raise MeshFormatError(f"unexpected header line {text!r} (byte {off})")

    if n_vert is None or n_face is None or not face_list_seen:
        raise MeshFormatError(f"incomplete header (byte {body or len(data)})")
    if tuple(vprops) != _VERTEX_PROPS:
        raise MeshFormatError(f"vertex layout {vprops} not supported (byte {body})")

    v_bytes = n_vert * _VERTEX_DTYPE.itemsize
    f_bytes = n_face * _FACE_DTYPE.itemsize
    if len(data) < body + v_bytes + f_bytes:
        raise MeshFormatError(f"payload truncated (byte {len(data)})")

    vdata = np.frombuffer(data, dtype=_VERTEX_DTYPE, count=n_vert, offset=body)
    fdata = np.frombuffer(data, dtype=_FACE_DTYPE, count=n_face, offset=body + v_bytes)
    bad = np.nonzero(fdata["n"] != 3)[0]
    if bad.size:
        at = body + v_bytes + int(bad[0]) * _FACE_DTYPE.itemsize
        raise MeshFormatError(f"non-triangle face of size {fdata['n'][bad[0]]} (byte {at})")
    idx = fdata["idx"].astype(np.int64)
    if n_face:
        out_of_range = np.nonzero((idx < 0).any(axis=1) | (idx >= n_vert).any(axis=1))[0]
        if out_of_range.size:
            at = body + v_bytes + int(out_of_range[0]) * _FACE_DTYPE.itemsize
            raise MeshFormatError(f"face index out of range (byte {at})")
        srt = np.sort(idx, axis=1)
        dup = np.nonzero((srt[:, :-1] == srt[:, 1:]).any(axis=1))[0]
        if dup.size:
            at = body + v_bytes + int(dup[0]) * _FACE_DTYPE.itemsize
            raise MeshFormatError(f"degenerate face (byte {at})")

    return SemanticMesh(vdata["xyz"].copy(), idx, vdata["label"].copy(),
                        vdata["rgb"].copy())
