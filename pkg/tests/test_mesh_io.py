"""Labeled-mesh PLY round-trips and malformed-file diagnostics."""

import re

import numpy as np
import pytest

from semfuse.fusion import SemanticMesh
from semfuse.mesh_io import MeshFormatError, export_mesh, import_mesh


def single_triangle_mesh():
    v = np.array([[0.0, 0.0, 0.0], [1.5, -0.25, 0.0], [0.0, 1.0, 2.0]], np.float32)
    return SemanticMesh(v, [[0, 1, 2]], [1, 0, 4], [[255, 0, 0], [0, 255, 0], [9, 9, 9]])


def random_mesh(rng, n_vertices=1000, n_faces=1800):
    v = rng.normal(scale=10.0, size=(n_vertices, 3)).astype(np.float32)
    labels = rng.integers(0, 256, n_vertices).astype(np.uint8)
    colors = rng.integers(0, 256, (n_vertices, 3)).astype(np.uint8)
    faces = []
    while len(faces) < n_faces:
        f = rng.choice(n_vertices, size=3, replace=False)
        faces.append(f)
    return SemanticMesh(v, np.asarray(faces), labels, colors)


def roundtrip(mesh, path):
    export_mesh(mesh, path)
    return import_mesh(path)


def assert_identical(a, b):
    assert np.array_equal(a.vertices, b.vertices)
    assert a.vertices.dtype == b.vertices.dtype == np.float32
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.vertex_labels, b.vertex_labels)
    assert np.array_equal(a.vertex_colors, b.vertex_colors)


def test_empty_mesh_roundtrip(tmp_path):
    out = roundtrip(SemanticMesh.empty(), tmp_path / "empty.ply")
    assert out.num_vertices == 0
    assert out.num_triangles == 0


def test_single_triangle_roundtrip(tmp_path):
    mesh = single_triangle_mesh()
    assert_identical(mesh, roundtrip(mesh, tmp_path / "tri.ply"))


def test_random_mesh_roundtrip_bit_exact(tmp_path):
    for seed in range(5):
        mesh = random_mesh(np.random.default_rng(seed))
        path = tmp_path / f"m{seed}.ply"
        assert_identical(mesh, roundtrip(mesh, path))
        # a second export of the re-imported mesh reproduces the bytes
        re_exported = tmp_path / f"m{seed}_again.ply"
        export_mesh(import_mesh(path), re_exported)
        assert path.read_bytes() == re_exported.read_bytes()


def test_special_float_values_survive(tmp_path):
    v = np.array([[np.float32(0.1), -0.0, 3.0e-39],   # includes a subnormal
                  [1e30, -1e-30, 7.0],
                  [0.0, 0.0, 0.0]], np.float32)
    mesh = SemanticMesh(v, [[2, 1, 0]], [0, 1, 2], np.zeros((3, 3), np.uint8))
    out = roundtrip(mesh, tmp_path / "f.ply")
    assert out.vertices.tobytes() == v.tobytes()


def byte_offset(err):
    m = re.search(r"\(byte (\d+)\)", str(err))
    assert m, f"no byte offset in {err}"
    return int(m.group(1))


def test_wrong_magic_reports_byte_zero(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_bytes(b"obj\nsomething\n")
    with pytest.raises(MeshFormatError) as e:
        import_mesh(p)
    assert byte_offset(e.value) == 0


def test_wrong_format_line_reports_its_offset(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_bytes(b"ply\nformat ascii 1.0\nend_header\n")
    with pytest.raises(MeshFormatError, match="format") as e:
        import_mesh(p)
    assert byte_offset(e.value) == 4


def test_unterminated_header_rejected(tmp_path):
    p = tmp_path / "bad.ply"
    blob = b"ply\nformat binary_little_endian 1.0\nelement vertex 1"
    p.write_bytes(blob)
    with pytest.raises(MeshFormatError, match="terminated") as e:
        import_mesh(p)
    assert byte_offset(e.value) == len(blob)


def test_unsupported_vertex_layout_rejected(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_bytes(
        b"ply\nformat binary_little_endian 1.0\n"
        b"element vertex 0\n"
        b"property float x\nproperty float y\nproperty float z\n"
        b"element face 0\nproperty list uchar int vertex_indices\n"
        b"end_header\n"
    )
    with pytest.raises(MeshFormatError, match="layout"):
        import_mesh(p)


def test_truncated_payload_reports_file_end(tmp_path):
    p = tmp_path / "t.ply"
    export_mesh(single_triangle_mesh(), p)
    blob = p.read_bytes()[:-5]
    p.write_bytes(blob)
    with pytest.raises(MeshFormatError, match="truncated") as e:
        import_mesh(p)
    assert byte_offset(e.value) == len(blob)


def corrupt_face_bytes(path, record_edit):
    """Apply record_edit to the (only) face record of a single-triangle file."""
    blob = bytearray(path.read_bytes())
    face_off = len(blob) - 13   # uchar count + 3 int32 indices
    record_edit(blob, face_off)
    path.write_bytes(bytes(blob))
    return face_off


def test_non_triangle_face_reports_record_offset(tmp_path):
    p = tmp_path / "t.ply"
    export_mesh(single_triangle_mesh(), p)
    off = corrupt_face_bytes(p, lambda b, o: b.__setitem__(o, 4))
    with pytest.raises(MeshFormatError, match="size 4") as e:
        import_mesh(p)
    assert byte_offset(e.value) == off


def test_face_index_out_of_range_reports_record_offset(tmp_path):
    p = tmp_path / "t.ply"
    export_mesh(single_triangle_mesh(), p)

    def edit(b, o):
        b[o + 1:o + 5] = (250).to_bytes(4, "little")

    off = corrupt_face_bytes(p, edit)
    with pytest.raises(MeshFormatError, match="range") as e:
        import_mesh(p)
    assert byte_offset(e.value) == off


def test_duplicate_face_indices_rejected(tmp_path):
    p = tmp_path / "t.ply"
    export_mesh(single_triangle_mesh(), p)

    def edit(b, o):
        b[o + 1:o + 5] = (2).to_bytes(4, "little")
        b[o + 5:o + 9] = (2).to_bytes(4, "little")

    corrupt_face_bytes(p, edit)
    with pytest.raises(MeshFormatError, match="degenerate"):
        import_mesh(p)


def test_comments_in_header_are_ignored(tmp_path):
    p = tmp_path / "t.ply"
    export_mesh(single_triangle_mesh(), p)
    blob = p.read_bytes()
    head, _, rest = blob.partition(b"element vertex")
    p.write_bytes(head + b"comment made by hand\nelement vertex" + rest)
    assert_identical(single_triangle_mesh(), import_mesh(p))
