import logging
import math

import numpy as np
import pytest
from conftest import cornell_scene

from shadowset.scene import validate_scene
from shadowset.sceneio import (
    SceneParseError,
    load_mesh,
    load_scene,
    parse_scene,
    save_scene,
    serialize_scene,
)

OBJ_QUAD = """
# two-triangle quad with texcoords
v 0.0 0.0 0.0
v 1.0 0.0 0.0
v 1.0 1.0 0.0
v 0.0 1.0 0.0
vt 0.0 0.0
vt 1.0 0.0
vt 1.0 1.0
vt 0.0 1.0
f 1/1 2/2 3/3 4/4
"""


def test_obj_quad_fan_split_and_uv(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text(OBJ_QUAD)
    mesh = load_mesh(p)
    assert mesh.vertices.shape == (4, 3)
    assert mesh.triangles.shape == (2, 3)
    assert mesh.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]
    assert mesh.uv.shape == (2, 3, 2)
    assert mesh.uv[1].tolist() == [[0, 0], [1, 1], [0, 1]]
    assert mesh.source_path == str(p)


def test_obj_negative_indices_and_double_slash(tmp_path):
    p = tmp_path / "m.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3//1 -2//1 -1//1\n")
    mesh = load_mesh(p)
    assert mesh.triangles.tolist() == [[0, 1, 2]]
    assert mesh.uv is None  # // means no texcoord


def test_obj_degenerate_faces_dropped_with_warning(tmp_path, caplog):
    p = tmp_path / "m.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\n"
                 "f 1 2 3\nf 1 2 4\n")  # second face is collinear
    with caplog.at_level(logging.WARNING):
        mesh = load_mesh(p)
    assert mesh.triangles.shape == (1, 3)
    assert any("degenerate" in r.message for r in caplog.records)


@pytest.mark.parametrize("text,fragment", [
    ("v 0 0\n", "vertex needs 3"),
    ("v 0 0 0\nf 1 2 3\n", "index out of range"),
    ("vt 0 0\n", "no vertices"),
    ("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n", "all faces degenerate"),
])
def test_obj_errors_carry_position(tmp_path, text, fragment):
    p = tmp_path / "bad.obj"
    p.write_text(text)
    with pytest.raises(SceneParseError, match=fragment):
        load_mesh(p)


def test_yaml_syntax_error_reports_line():
    with pytest.raises(SceneParseError, match="line"):
        parse_scene("materials:\n  - albedo: [0.5, 0.5\n")


def test_parse_rejects_unresolved_references():
    with pytest.raises(SceneParseError, match="unresolved mesh index"):
        parse_scene("furniture:\n  - mesh: 0\n")
    with pytest.raises(SceneParseError, match="unresolved material index"):
        parse_scene(
            "meshes:\n"
            "  - material: 2\n"
            "    inline:\n"
            "      vertices: [[0,0,0],[1,0,0],[0,1,0]]\n"
            "      triangles: [[0,1,2]]\n")
    with pytest.raises(SceneParseError, match="unresolved furniture index"):
        parse_scene("rooms:\n  - boundary: [[0,0],[1,0],[1,1],[0,1]]\n"
                    "    furniture: [3]\n")


def test_roundtrip_preserves_scene(tmp_path):
    scene = cornell_scene()
    text = serialize_scene(scene)
    back = parse_scene(text)
    assert len(back.meshes) == len(scene.meshes)
    for a, b in zip(back.meshes, scene.meshes):
        assert np.allclose(a.vertices, b.vertices)
        assert np.array_equal(a.triangles, b.triangles)
        assert a.material == b.material
        assert a.background == b.background
        assert a.watertight == b.watertight
    assert [m.albedo for m in back.materials] == [m.albedo for m in scene.materials]
    assert [l.kind for l in back.lights] == [l.kind for l in scene.lights]
    assert back.lights[0].u == tuple(scene.lights[0].u)
    assert np.allclose(back.rooms[0].boundary, scene.rooms[0].boundary)
    assert back.camera.position == tuple(scene.camera.position)
    assert back.camera.fov_deg == scene.camera.fov_deg
    assert back.render == scene.render
    assert validate_scene(back) == []

    # file-level round trip too
    path = tmp_path / "scene.yaml"
    save_scene(scene, path)
    again = load_scene(path)
    assert serialize_scene(again) == text


def test_roundtrip_keeps_mesh_path_reference(tmp_path):
    (tmp_path / "quad.obj").write_text(OBJ_QUAD)
    doc = (
        "meshes:\n"
        "  - path: quad.obj\n"
        "    material: 0\n"
        "materials:\n"
        "  - albedo: [0.5, 0.5, 0.5]\n"
    )
    scene = parse_scene(doc, base_dir=tmp_path)
    assert scene.meshes[0].source_path == "quad.obj"
    text = serialize_scene(scene)
    assert "quad.obj" in text
    assert "inline" not in text
    back = parse_scene(text, base_dir=tmp_path)
    assert np.allclose(back.meshes[0].vertices, scene.meshes[0].vertices)


def test_roundtrip_inline_uv_and_furniture():
    doc = (
        "meshes:\n"
        "  - inline:\n"
        "      vertices: [[0,0,0],[1,0,0],[0,1,0]]\n"
        "      triangles: [[0,1,2]]\n"
        "      uv: [[[0,0],[1,0],[0,1]]]\n"
        "furniture:\n"
        "  - mesh: 0\n"
        "    rotation_deg: 45.0\n"
        "    translation: [0.5, -0.25]\n"
        "    z: 0.1\n"
        "    label: chair\n"
    )
    scene = parse_scene(doc)
    assert scene.furniture[0].label == "chair"
    assert scene.furniture[0].bbox_2d is not None
    back = parse_scene(serialize_scene(scene))
    assert back.meshes[0].uv.shape == (1, 3, 2)
    assert back.furniture[0].rotation_deg == 45.0
    assert back.furniture[0].bbox_2d == pytest.approx(scene.furniture[0].bbox_2d)


def test_seed_roundtrips_explicitly():
    scene = parse_scene("render:\n  seed: 123\n")
    assert scene.render.seed == 123
    assert parse_scene(serialize_scene(scene)).render.seed == 123
    scene2 = parse_scene("render:\n  spp: 4\n")
    assert scene2.render.seed is None
    assert "seed" not in serialize_scene(scene2)


def test_render_size_falls_back_to_camera():
    scene = parse_scene("camera:\n  width: 123\n  height: 77\n")
    assert scene.render.width == 123
    assert scene.render.height == 77
