import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shapeforge.cli import main
from shapeforge.curves import random_curve
from shapeforge.io import (
    InputError,
    format_csv_matrix,
    format_obj,
    parse_csv_matrix,
    parse_obj,
    read_json_batch,
    read_obj,
    read_point_file,
    write_csv_matrix,
    write_obj,
)
from shapeforge.surfaces import icosphere

SQUARE_OBJ = """v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
f 1 2 3
f 1 3 4
"""

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


# -- file formats


def test_csv_example():
    m = parse_csv_matrix("0,0\n1,0\n0,1")
    assert m.shape == (3, 2)
    assert np.array_equal(m, [[0, 0], [1, 0], [0, 1]])


def test_csv_errors_name_the_line():
    with pytest.raises(InputError, match="line 2"):
        parse_csv_matrix("0,0\nnan,1\n")
    with pytest.raises(InputError, match="line 3"):
        parse_csv_matrix("0,0\n1,0\n1\n")
    with pytest.raises(InputError, match="line 1"):
        parse_csv_matrix("x,0\n")
    with pytest.raises(InputError, match="no data"):
        parse_csv_matrix("\n# only a comment\n")


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=finite))
def test_csv_roundtrip_is_bit_identical(matrix):
    assert np.array_equal(parse_csv_matrix(format_csv_matrix(matrix)), matrix)


def test_obj_square():
    mesh = parse_obj(SQUARE_OBJ)
    assert mesh.n_vertices == 4 and mesh.n_faces == 2
    assert np.array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])


def test_obj_roundtrip_is_bit_identical(tmp_path, rng):
    mesh = icosphere(1)
    vertices = mesh.vertices * (1 + 0.1 * rng.standard_normal((42, 1)))
    write_obj(tmp_path / "m.obj", vertices, mesh.faces)
    back = read_obj(tmp_path / "m.obj")
    assert np.array_equal(back.vertices, vertices)
    assert np.array_equal(back.faces, mesh.faces)
    assert format_obj(back.vertices, back.faces) == (tmp_path / "m.obj").read_text()


def test_obj_accepts_slash_indices_and_comments():
    text = "# square\nv 0 0 0\nv 1 0 0\nv 0 1 0  # third\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1\n"
    assert parse_obj(text).n_faces == 1


def test_obj_errors():
    with pytest.raises(InputError, match="face record 2 has 4 vertices"):
        parse_obj(SQUARE_OBJ.replace("f 1 3 4", "f 1 2 3 4"))
    with pytest.raises(InputError, match="line 2"):
        parse_obj("v 0 0 0\nv 1 nan 0\nv 0 1 0\nf 1 2 3\n")
    with pytest.raises(InputError, match="face record 1 refers to a missing vertex"):
        parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(InputError, match="index below 1"):
        parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n")


def test_json_batch(tmp_path):
    write_csv_matrix(tmp_path / "c.csv", [[1.0, 2.0]])
    doc = {"items": [{"name": "first", "data": [[0, 0], [1, 1]], "x": 0.5},
                     {"data": "c.csv"}]}
    (tmp_path / "batch.json").write_text(json.dumps(doc))
    items = read_json_batch(tmp_path / "batch.json")
    assert [i["name"] for i in items] == ["first", "item2"]
    assert items[0]["x"] == 0.5 and items[1]["x"] is None
    assert np.array_equal(items[1]["data"], [[1.0, 2.0]])


def test_json_batch_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"items": [')
    with pytest.raises(InputError, match="line 1"):
        read_json_batch(path)
    path.write_text('{"items": [{"data": [[0, 1]]}, {"name": "x"}]}')
    with pytest.raises(InputError, match="item 2"):
        read_json_batch(path)
    with pytest.raises(InputError, match="not found"):
        read_point_file(tmp_path / "missing.csv")


# -- command line


def write_curves(tmp_path, k=20, seed=0):
    rng = np.random.default_rng(seed)
    a, b = random_curve(k, 2, rng), random_curve(k, 2, rng)
    write_csv_matrix(tmp_path / "a.csv", a)
    write_csv_matrix(tmp_path / "b.csv", b)
    return a, b


def write_config(tmp_path, doc, name="job.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def manifest(out):
    return json.loads((Path(out) / "manifest.json").read_text())


def test_dist_on_identical_curves(tmp_path):
    write_curves(tmp_path)
    cfg = write_config(tmp_path, {"space_params": {"k": 20, "d": 2}, "inputs": {"a": "a.csv", "b": "a.csv"}})
    out = tmp_path / "out"
    assert main(["dist", "--space", "curves", "--config", cfg, "--out", str(out)]) == 0
    assert manifest(out)["scalars"]["distance"] == 0.0


@pytest.mark.parametrize("space", ["curves", "curve_shapes"])
def test_geodesic_frames_pin_endpoints(tmp_path, space):
    a, b = write_curves(tmp_path)
    cfg = write_config(tmp_path, {"space_params": {"k": 20, "d": 2, "groups": ["rotations"]},
                                  "inputs": {"a": "a.csv", "b": "b.csv"}})
    out = tmp_path / "out"
    assert main(["geodesic", "--space", space, "--config", cfg, "--out", str(out)]) == 0
    frames = sorted(out.glob("frame_*.csv"))
    assert len(frames) == 6
    assert frames[0].read_text() == format_csv_matrix(a - a[0])
    if space == "curves":
        assert frames[-1].read_text() == format_csv_matrix(b - b[0])
    assert manifest(out)["scalars"]["n_frames"] == 6


def test_surface_geodesic_writes_obj_frames(tmp_path):
    mesh = icosphere(0)
    write_obj(tmp_path / "a.obj", mesh.vertices, mesh.faces)
    write_obj(tmp_path / "b.obj", mesh.vertices * [1.2, 1.0, 0.9], mesh.faces)
    cfg = write_config(tmp_path, {"space_params": {"n_times": 4}, "inputs": {"a": "a.obj", "b": "b.obj"}})
    out = tmp_path / "out"
    assert main(["geodesic", "--space", "surfaces", "--config", cfg, "--out", str(out), "--frames", "3"]) == 0
    frames = sorted(out.glob("frame_*.obj"))
    assert len(frames) == 3
    assert np.array_equal(read_obj(frames[0]).vertices, mesh.vertices)
    assert np.array_equal(read_obj(frames[-1]).vertices, read_obj(tmp_path / "b.obj").vertices)
    assert manifest(out)["scalars"]["path_energy"] > 0


def test_regress_on_noiseless_line(tmp_path):
    X = np.linspace(-1, 2, 6)
    items = [{"name": f"p{i}", "data": [[1.0 + 2.0 * x, -0.5 * x]], "x": float(x)} for i, x in enumerate(X)]
    (tmp_path / "batch.json").write_text(json.dumps({"items": items}))
    cfg = write_config(tmp_path, {"space_params": {"dim": 2}, "inputs": {"batch": "batch.json"}})
    out = tmp_path / "out"
    assert main(["regress", "--space", "euclidean", "--config", cfg, "--out", str(out), "--x-new", "3"]) == 0
    m = manifest(out)
    assert m["scalars"]["loss"] < 1e-10
    pred = parse_csv_matrix((out / "prediction_000.csv").read_text())
    assert np.allclose(pred, [[7.0, -1.5]], atol=1e-8)


def test_mean_on_sphere(tmp_path):
    items = [{"data": [[1, 0, 0]]}, {"data": [[0, 1, 0]]}]
    (tmp_path / "batch.json").write_text(json.dumps({"items": items}))
    out = tmp_path / "out"
    assert main(["mean", "--space", "sphere", "--param", "dim=2", "--batch", str(tmp_path / "batch.json"),
                 "--out", str(out)]) == 0
    mean = parse_csv_matrix((out / "mean.csv").read_text())[0]
    assert np.allclose(mean, [2**-0.5, 2**-0.5, 0], atol=1e-8)
    assert manifest(out)["scalars"]["gradient_norm"] < 1e-7


def test_determinism_and_reparse(tmp_path):
    write_curves(tmp_path, k=30, seed=3)
    cfg = write_config(tmp_path, {"space_params": {"k": 30, "d": 2},
                                  "inputs": {"a": "a.csv", "b": "b.csv"}, "seed": 7})
    runs = []
    for name in ("one", "two"):
        out = tmp_path / name
        assert main(["align", "--space", "curve_shapes", "--config", cfg, "--out", str(out)]) == 0
        runs.append(manifest(out))
        for artifact in runs[-1]["artifacts"]:
            read_point_file(out / artifact)
    assert runs[0]["scalars"] == runs[1]["scalars"]
    assert runs[0]["scalars"]["distance_after"] <= runs[0]["scalars"]["distance_before"]
    assert runs[0]["inputs"] == runs[1]["inputs"]


def test_kendall_align_and_landmark_dist(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 2))
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    write_csv_matrix(tmp_path / "a.csv", x)
    write_csv_matrix(tmp_path / "b.csv", 3 * x @ rot.T + 1)
    out = tmp_path / "out"
    args = ["--a", str(tmp_path / "a.csv"), "--b", str(tmp_path / "b.csv"),
            "--param", "k=5", "--param", "d=2", "--out", str(out)]
    assert main(["dist", "--space", "kendall"] + args) == 0
    assert manifest(out)["scalars"]["distance"] < 1e-7
    assert main(["dist", "--space", "landmarks"] + args) == 0
    assert manifest(out)["scalars"]["distance"] > 1


def test_invalid_inputs_exit_2(tmp_path, capsys):
    (tmp_path / "a.csv").write_text("0,0\n1,nan\n2,0\n")
    write_csv_matrix(tmp_path / "b.csv", [[0, 0], [1, 0], [2, 1]])
    base = ["dist", "--space", "curves", "--param", "k=3", "--param", "d=2", "--out", str(tmp_path / "o")]
    assert main(base + ["--a", str(tmp_path / "a.csv"), "--b", str(tmp_path / "b.csv")]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(base + ["--a", str(tmp_path / "missing.csv"), "--b", str(tmp_path / "b.csv")]) == 2
    assert main(["dist", "--space", "curves", "--a", str(tmp_path / "b.csv"), "--b", str(tmp_path / "b.csv")]) == 2
    assert "needs space_params" in capsys.readouterr().err
    cfg = write_config(tmp_path, {"inputs": {"a": "b.csv"}})
    assert main(["dist", "--space", "euclidean", "--param", "dim=2", "--config", cfg]) == 2


def test_flags_override_config(tmp_path):
    write_curves(tmp_path)
    (tmp_path / "c.csv").write_text((tmp_path / "a.csv").read_text())
    cfg = write_config(tmp_path, {"space_params": {"k": 99, "d": 2}, "out": str(tmp_path / "cfg_out"),
                                  "inputs": {"a": "a.csv", "b": "b.csv"}, "frames": 4})
    out = tmp_path / "flag_out"
    code = main(["geodesic", "--space", "curves", "--config", cfg, "--param", "k=20",
                 "--b", str(tmp_path / "c.csv"), "--out", str(out), "--frames", "3"])
    assert code == 0
    assert len(list(out.glob("frame_*.csv"))) == 3
    assert not (tmp_path / "cfg_out").exists()
    assert manifest(out)["job"]["space_params"]["k"] == 20


def test_console_script_runs(tmp_path):
    write_curves(tmp_path)
    out = tmp_path / "out"
    proc = subprocess.run(
        [sys.executable, "-m", "shapeforge.cli", "dist", "--space", "curves", "--param", "k=20",
         "--param", "d=2", "--a", str(tmp_path / "a.csv"), "--b", str(tmp_path / "b.csv"), "--out", str(out)],
        capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert manifest(out)["scalars"]["distance"] > 0
