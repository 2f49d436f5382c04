import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facetfield.errors import DivergenceError, InvalidInput, ParseError
from facetfield.harness import io as hio
from facetfield.harness.cli import main
from facetfield.harness.metrics import cd1, one_sided_l1
from facetfield.harness.pipeline import (RunConfig, ablation_sweep,
                                         noise_sweep, reconstruct)
from facetfield.harness.shapes import KINDS, ShapeSpec, generate_shape

FAST_RUN = dict(steps=20, query_batch=400, k1=8, k2=6, grid_resolution=12,
                n_project=2000, n_gt=2000)


# ---------------------------------------------------------------------------
# shapes
# ---------------------------------------------------------------------------

def test_sphere_points_on_surface():
    shape = generate_shape(ShapeSpec("sphere", n=3000, seed=0))
    r = np.linalg.norm(shape.points, axis=1)
    assert np.abs(r - 0.5).max() <= 1e-9


def test_wedge_points_on_halfplanes():
    shape = generate_shape(ShapeSpec("wedge", n=1000, seed=1))
    assert shape.distance(shape.points).max() <= 1e-9


def test_all_kinds_generate_clean_points_on_surface():
    for kind in KINDS:
        shape = generate_shape(ShapeSpec(kind, n=500, seed=2))
        assert shape.distance(shape.points).max() <= 1e-9
        assert np.abs(shape.points).max() <= 1.0
        gt = shape.sample_surface(300, np.random.default_rng(3))
        assert shape.distance(gt).max() <= 1e-9


def test_box_face_counts_proportional_to_area():
    n = 3000
    shape = generate_shape(ShapeSpec("box", n=n, seed=4))
    counts = np.bincount(shape.face_id, minlength=6)
    p = 1.0 / 6.0
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 5 * sigma)


def test_shape_noise_and_determinism():
    a = generate_shape(ShapeSpec("box", n=500, noise=0.002, seed=5))
    b = generate_shape(ShapeSpec("box", n=500, noise=0.002, seed=5))
    assert np.array_equal(a.points, b.points)
    d = a.distance(a.points)
    assert 0 < d.max() <= 0.015
    assert np.abs(a.points).max() <= 1.0


def test_edge_distance_oracle():
    shape = generate_shape(ShapeSpec("wedge", n=500, seed=6))
    on_ridge = np.array([[0.1, 0.0, 0.0], [0.5, 0.0, 0.0]])
    assert shape.edge_distance(on_ridge).max() <= 1e-12
    off = np.array([[0.0, 0.3, 0.0]])
    assert shape.edge_distance(off)[0] == pytest.approx(0.3, abs=1e-12)
    smooth = generate_shape(ShapeSpec("sphere", n=500, seed=7))
    assert np.isinf(smooth.edge_distance(on_ridge)).all()


def test_shape_spec_validation():
    with pytest.raises(InvalidInput):
        ShapeSpec("torus", n=500)
    with pytest.raises(InvalidInput):
        ShapeSpec("box", n=10)
    with pytest.raises(InvalidInput):
        ShapeSpec("box", n=500, noise=-1.0)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def brute_force_cd1(a, b):
    da = np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2).min(axis=1).mean()
    db = np.abs(b[:, None, :] - a[None, :, :]).sum(axis=2).min(axis=1).mean()
    return 0.5 * (da + db)


def test_cd1_identical_sets_zero():
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, (50, 3))
    assert cd1(a, a.copy()).cd1 == 0.0


def test_cd1_hand_example():
    r = cd1(np.array([[0.0, 0, 0]]), np.array([[1.0, 0, 0]]))
    assert r.cd1 == pytest.approx(1.0, abs=1e-15)


def test_cd1_matches_brute_force_exactly():
    rng = np.random.default_rng(1)
    for _ in range(10):
        a = rng.uniform(-1, 1, (rng.integers(1, 200), 3))
        b = rng.uniform(-1, 1, (rng.integers(1, 200), 3))
        r = cd1(a, b)
        assert r.cd1 == brute_force_cd1(a, b)
        assert r.cd1 == pytest.approx(
            0.5 * (r.one_sided_recon_to_gt + r.one_sided_gt_to_recon),
            abs=1e-9)


def test_cd1_symmetry():
    rng = np.random.default_rng(2)
    a = rng.uniform(-1, 1, (80, 3))
    b = rng.uniform(-1, 1, (60, 3))
    assert cd1(a, b).cd1 == cd1(b, a).cd1


def test_cd1_empty_rejected():
    with pytest.raises(InvalidInput):
        one_sided_l1(np.empty((0, 3)), np.ones((2, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_cd1_properties(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, (int(rng.integers(1, 40)), 3))
    b = rng.uniform(-1, 1, (int(rng.integers(1, 40)), 3))
    r = cd1(a, b)
    assert r.cd1 >= 0
    assert r.cd1 == cd1(b, a).cd1
    assert cd1(a, a).cd1 == 0.0


# ---------------------------------------------------------------------------
# io
# ---------------------------------------------------------------------------

def test_xyz_roundtrip(tmp_path):
    pts = np.array([[0.1, -0.2, 0.3], [0.5, 0.25, -0.75], [-1, 0.5, 1]])
    path = tmp_path / "a.xyz"
    hio.write_xyz(pts, path)
    back = hio.read_points(path)
    np.testing.assert_allclose(back, pts, atol=1e-6)


def test_xyz_comments_and_errors(tmp_path):
    path = tmp_path / "b.xyz"
    path.write_text("# header\n0 0 0\n1 2\n")
    with pytest.raises(ParseError) as err:
        hio.read_points(path)
    assert err.value.line == 3
    path.write_text("# only comments\n")
    with pytest.raises(InvalidInput):
        hio.read_points(path)


def test_ply_with_extra_properties(tmp_path):
    path = tmp_path / "c.ply"
    path.write_text("\n".join([
        "ply", "format ascii 1.0", "element vertex 2",
        "property float x", "property float y", "property float z",
        "property uchar red", "end_header",
        "0.5 0.25 -0.125 200", "-0.5 0 1 10", ""]))
    pts = hio.read_points(path)
    np.testing.assert_allclose(pts, [[0.5, 0.25, -0.125], [-0.5, 0, 1]],
                               atol=1e-12)


def test_ply_binary_rejected(tmp_path):
    path = tmp_path / "d.ply"
    path.write_text("ply\nformat binary_little_endian 1.0\nend_header\n")
    with pytest.raises(ParseError):
        hio.read_points(path)


def test_obj_vertices(tmp_path):
    path = tmp_path / "e.obj"
    path.write_text("v 0 0 0\nvn 1 0 0\nv 1 1 1\nf 1 2 1\n")
    pts = hio.read_points(path)
    assert pts.shape == (2, 3)


def test_normalization_into_unit_cube(tmp_path):
    rng = np.random.default_rng(3)
    raw = rng.uniform(5, 9, (100, 3)) * np.array([1.0, 2.0, 0.5])
    path = tmp_path / "f.xyz"
    hio.write_xyz(raw, path)
    cloud, tf = hio.io_read(path)
    lo = cloud.points.min(axis=0)
    hi = cloud.points.max(axis=0)
    assert hi.max() <= 1.0 + 1e-9
    assert lo.min() >= -1.0 - 1e-9
    assert max(hi - lo) == pytest.approx(2.0, abs=1e-9)
    # the recorded transform maps back to the original bounding box
    back = tf.invert(cloud.points)
    np.testing.assert_allclose(back.min(axis=0), raw.min(axis=0), atol=1e-6)
    np.testing.assert_allclose(back.max(axis=0), raw.max(axis=0), atol=1e-6)


def test_normalized_cloud_rereads_identically(tmp_path):
    rng = np.random.default_rng(4)
    raw = rng.uniform(-3, 4, (60, 3))
    tf = hio.normalization_for(raw)
    normalized = tf.apply(raw)
    path = tmp_path / "g.xyz"
    hio.write_xyz(normalized, path)
    again = hio.read_points(path, normalize=True)
    np.testing.assert_allclose(again, normalized, atol=1e-6)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def test_reconstruct_writes_artifacts(tmp_path):
    cfg = RunConfig(shape=ShapeSpec("plane-patch", n=600, seed=1), seed=1,
                    out_dir=str(tmp_path / "run"), **FAST_RUN)
    res = reconstruct(cfg)
    out = tmp_path / "run"
    for name in ("samples.xyz", "loss_trace.csv", "metrics.json",
                 "report.json", "udf_grid.bin"):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["seed"] == 1
    assert report["selection_counts"]["plane"] >= 0
    assert res.metrics.cd1 >= 0
    assert len(res.loss_reports) == FAST_RUN["steps"]


def test_reconstruct_deterministic_modulo_wallclock(tmp_path):
    outs = []
    for name in ("r1", "r2"):
        cfg = RunConfig(shape=ShapeSpec("plane-patch", n=600, seed=2), seed=9,
                        out_dir=str(tmp_path / name), **FAST_RUN)
        reconstruct(cfg)
        outs.append(tmp_path / name)
    csv1 = (outs[0] / "loss_trace.csv").read_bytes()
    csv2 = (outs[1] / "loss_trace.csv").read_bytes()
    assert csv1 == csv2
    m1 = json.loads((outs[0] / "metrics.json").read_text())
    m2 = json.loads((outs[1] / "metrics.json").read_text())
    for m in (m1, m2):
        m.pop("wall_clock_seconds")
        m["config"].pop("out_dir")   # differs by construction
    assert m1 == m2
    s1 = (outs[0] / "samples.xyz").read_bytes()
    s2 = (outs[1] / "samples.xyz").read_bytes()
    assert s1 == s2


def test_reconstruct_from_file_records_transform(tmp_path):
    rng = np.random.default_rng(5)
    raw = rng.uniform(10, 20, (700, 2))
    pts = np.column_stack([raw, np.full(700, 3.0)])
    path = tmp_path / "cloud.xyz"
    hio.write_xyz(pts, path)
    cfg = RunConfig(input_path=str(path), seed=3,
                    out_dir=str(tmp_path / "run"), **FAST_RUN)
    res = reconstruct(cfg)
    assert res.metrics is None   # no ground truth for file input
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert report["normalization"] is not None
    assert report["metrics"] is None


def test_run_config_validation(tmp_path):
    with pytest.raises(InvalidInput):
        RunConfig(shape=None, input_path=None)
    with pytest.raises(InvalidInput):
        RunConfig(shape=ShapeSpec("box"), input_path="x.xyz")
    with pytest.raises(InvalidInput):
        RunConfig(shape=ShapeSpec("box"), geometries=())
    with pytest.raises(InvalidInput):
        RunConfig(shape=ShapeSpec("box"), geometries=("cube",))


def test_ablation_sweep_requires_two_variants():
    cfg = RunConfig(shape=ShapeSpec("plane-patch", n=600, seed=1), **FAST_RUN)
    with pytest.raises(InvalidInput):
        ablation_sweep(cfg, [("plane",)])


def test_ablation_sweep_rows_and_files(tmp_path):
    cfg = RunConfig(shape=ShapeSpec("plane-patch", n=600, seed=1), seed=4,
                    out_dir=str(tmp_path / "sweep"), **FAST_RUN)
    rows = ablation_sweep(cfg, [("plane",),
                                ("plane", "dihedral", "trihedral")])
    assert len(rows) == 2
    labels = [r[0] for r in rows]
    assert labels == ["plane", "plane+dihedral+trihedral"]
    assert (tmp_path / "sweep" / "sweep.csv").exists()
    assert (tmp_path / "sweep" / "sweep.txt").exists()
    for _, metrics in rows:
        assert metrics.cd1 >= 0


def test_noise_sweep_rows(tmp_path):
    cfg = RunConfig(shape=ShapeSpec("plane-patch", n=600, seed=1), seed=5,
                    **FAST_RUN)
    rows = noise_sweep(cfg, [0.0, 0.002])
    assert [r[0] for r in rows] == ["sigma=0", "sigma=0.002"]


# ---------------------------------------------------------------------------
# cli
# ---------------------------------------------------------------------------

def test_cli_generate_and_eval(tmp_path, capsys):
    out = tmp_path / "c.xyz"
    assert main(["generate", "--shape", "sphere", "--points", "500",
                 "--seed", "3", "--out", str(out)]) == 0
    assert out.exists()
    assert main(["eval", "--recon", str(out), "--gt", str(out)]) == 0
    report = json.loads(capsys.readouterr().out.split("wrote")[-1]
                        .split("\n", 1)[1])
    assert report["cd1"] == 0.0


def test_cli_reconstruct(tmp_path, capsys):
    code = main(["reconstruct", "--shape", "plane-patch", "--points", "600",
                 "--steps", "15", "--query-batch", "300", "--k1", "8",
                 "--k2", "6", "--grid-res", "12", "--project-samples", "1500",
                 "--seed", "2", "--out", str(tmp_path / "r")])
    assert code == 0
    assert (tmp_path / "r" / "report.json").exists()
    report = json.loads(capsys.readouterr().out)
    assert report["config"]["steps"] == 15


def test_cli_error_exit_codes(tmp_path, capsys, monkeypatch):
    assert main(["eval", "--recon", str(tmp_path / "missing.xyz"),
                 "--gt", str(tmp_path / "missing.xyz")]) in (1,)
    bad = tmp_path / "bad.xyz"
    bad.write_text("1 2\n")
    assert main(["eval", "--recon", str(bad), "--gt", str(bad)]) == 1
    assert main(["reconstruct", "--shape", "plane-patch",
                 "--geometries", "cube", "--out", str(tmp_path / "x")]) == 1

    import facetfield.harness.cli as cli_mod

    def boom(cfg):
        raise DivergenceError(3)

    monkeypatch.setattr(cli_mod, "reconstruct", boom)
    assert main(["reconstruct", "--shape", "plane-patch",
                 "--out", str(tmp_path / "y")]) == 2


def test_cli_missing_file_is_not_found(tmp_path):
    code = main(["eval", "--recon", "/nonexistent/path.xyz",
                 "--gt", "/nonexistent/path.xyz"])
    assert code == 1
