import subprocess

import numpy as np
import pytest

from curvcodec import cli, meshcore as mc, shapecodec as sc, shapes
from curvcodec.errors import ConfigError


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    mc.save_obj(shapes.bumpy_sphere(2, 0.08), d / "bumpy.obj")
    mc.save_obj(shapes.hemisphere(8), d / "hemi.obj")
    mc.save_obj(shapes.torus(), d / "torus.obj")
    return d


def run_cli(*args):
    return cli.main([str(a) for a in args])


def test_encode_sphere_dims(workdir, capsys):
    rc = run_cli(
        "encode", "--in", workdir / "bumpy.obj", "--domain", "sphere",
        "--out", workdir / "bumpy.cbr",
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "(320, 32, 32, 2)" in out
    assert "distortion" in out
    tens = sc.read_cbr(workdir / "bumpy.cbr")
    assert tens.dims == (320, 32, 32, 2)


def test_encode_disk_dims(workdir, capsys):
    rc = run_cli(
        "encode", "--in", workdir / "hemi.obj", "--domain", "disk",
        "--out", workdir / "hemi.cbr",
    )
    assert rc == 0
    assert sc.read_cbr(workdir / "hemi.cbr").dims == (256, 256, 2)


def test_encode_torus_exits_2(workdir, capsys):
    rc = run_cli(
        "encode", "--in", workdir / "torus.obj", "--domain", "sphere",
        "--out", workdir / "x.cbr",
    )
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_encode_missing_file_exits_4(workdir, capsys):
    rc = run_cli(
        "encode", "--in", workdir / "nope.obj", "--domain", "sphere",
        "--out", workdir / "x.cbr",
    )
    assert rc == 4


def test_encode_with_landmarks(workdir, capsys):
    mc.write_landmarks([3, 50, 90], workdir / "lmk.txt")
    rc = run_cli(
        "encode", "--in", workdir / "bumpy.obj", "--domain", "sphere",
        "--landmarks", workdir / "lmk.txt", "--out", workdir / "lmk.cbr",
    )
    assert rc == 0


def test_encode_disk_landmarks(workdir):
    hemi = mc.load_obj(workdir / "hemi.obj")
    interior = int(np.argmax(hemi.positions[:, 2]))
    boundary = hemi.boundary_loops[0][0]
    mc.write_landmarks([interior, boundary], workdir / "dlmk.txt")
    rc = run_cli(
        "encode", "--in", workdir / "hemi.obj", "--domain", "disk",
        "--landmarks", workdir / "dlmk.txt", "--out", workdir / "hemi_al.cbr",
    )
    assert rc == 0


def test_encode_affine_config(workdir, tmp_path):
    cfg = cli.PipelineConfig(h_scale=2.0, h_offset=0.1, d_scale=0.5, d_offset=-1.0)
    cfg.to_file(tmp_path / "aff.cfg")
    rc = run_cli(
        "encode", "--in", workdir / "bumpy.obj", "--domain", "sphere",
        "--config", tmp_path / "aff.cfg", "--out", tmp_path / "aff.cbr",
    )
    assert rc == 0
    plain = sc.read_cbr(workdir / "bumpy.cbr")
    scaled = sc.read_cbr(tmp_path / "aff.cbr")
    # the reader maps the payload back to raw channel values
    assert np.allclose(scaled.data, plain.data, atol=1e-5)
    assert np.allclose(scaled.affine, [2.0, 0.1, 0.5, -1.0])


def test_reconstruct_deterministic(workdir, capsys):
    for tag in ("r1", "r2"):
        rc = run_cli(
            "reconstruct", "--in", workdir / "bumpy.cbr", "--steps", 4,
            "--seed", 3, "--out", workdir / f"{tag}.obj",
            "--report", workdir / f"{tag}.txt", "--no-plot",
        )
        assert rc == 0
    assert (workdir / "r1.obj").read_bytes() == (workdir / "r2.obj").read_bytes()
    assert (workdir / "r1.txt").read_text() == (workdir / "r2.txt").read_text()


def test_reconstruct_report_and_figure(workdir):
    rc = run_cli(
        "reconstruct", "--in", workdir / "bumpy.cbr", "--steps", 3,
        "--seed", 1, "--out", workdir / "fig.obj", "--report", workdir / "fig.txt",
    )
    assert rc == 0
    assert (workdir / "fig.txt").exists()
    assert (workdir / "fig.txt.png").exists()
    from curvcodec.spinrec import ReconstructionReport

    report = ReconstructionReport.from_table((workdir / "fig.txt").read_text())
    assert len(report.steps) == 3
    assert report.area_calibrated


def test_reconstruct_no_area_cal_flag(workdir):
    rc = run_cli(
        "reconstruct", "--in", workdir / "bumpy.cbr", "--steps", 3, "--seed", 1,
        "--no-area-cal", "--out", workdir / "nc.obj",
        "--report", workdir / "nc.txt", "--no-plot",
    )
    assert rc == 0
    from curvcodec.spinrec import ReconstructionReport

    report = ReconstructionReport.from_table((workdir / "nc.txt").read_text())
    assert not report.area_calibrated


def test_reconstruct_disk_round_trip(workdir):
    rc = run_cli(
        "reconstruct", "--in", workdir / "hemi.cbr", "--steps", 8, "--seed", 2,
        "--out", workdir / "hemi_rec.obj", "--report", workdir / "hemi_rep.txt",
        "--no-plot",
    )
    assert rc == 0
    from curvcodec.spinrec import ReconstructionReport

    report = ReconstructionReport.from_table((workdir / "hemi_rep.txt").read_text())
    assert report.steps[-1]["rel_willmore"] < 0.05 * report.target_willmore
    rec = mc.load_obj(workdir / "hemi_rec.obj")
    rec.require_disk_topology()


def test_interp_endpoints(workdir):
    rc = run_cli(
        "interp", "--a", workdir / "bumpy.cbr", "--b", workdir / "bumpy.cbr",
        "--t", 0.0, "--out", workdir / "i0.cbr",
    )
    assert rc == 0
    assert (workdir / "i0.cbr").read_bytes() == (workdir / "bumpy.cbr").read_bytes()


def test_interp_dim_mismatch_exits_2(workdir):
    rc = run_cli(
        "interp", "--a", workdir / "bumpy.cbr", "--b", workdir / "hemi.cbr",
        "--t", 0.5, "--out", workdir / "bad.cbr",
    )
    assert rc == 2


def test_metrics_identical(workdir, capsys):
    rc = run_cli("metrics", "--a", workdir / "bumpy.obj", "--b", workdir / "bumpy.obj",
                 "--points", 2000)
    assert rc == 0
    out = capsys.readouterr().out
    lines = dict(l.split(maxsplit=1) for l in out.strip().splitlines())
    assert float(lines["relative_willmore"]) == 0.0
    assert float(lines["chamfer"]) == 0.0


def test_metrics_connectivity_mismatch_notice(workdir, capsys):
    rc = run_cli("metrics", "--a", workdir / "bumpy.obj", "--b", workdir / "hemi.obj",
                 "--points", 500)
    assert rc == 0
    assert "omitted" in capsys.readouterr().out


def test_metrics_spheres_near_4pi(tmp_path, capsys):
    mc.save_obj(shapes.icosphere(4), tmp_path / "s4.obj")
    rc = run_cli("metrics", "--a", tmp_path / "s4.obj", "--b", tmp_path / "s4.obj",
                 "--points", 1000)
    assert rc == 0
    out = capsys.readouterr().out
    w = float(dict(l.split(maxsplit=1) for l in out.strip().splitlines())["willmore_a"])
    assert abs(w - 4 * np.pi) < 0.02 * 4 * np.pi


def test_config_roundtrip(tmp_path):
    cfg = cli.PipelineConfig(steps=7, seed=11, lloyd_tol=1e-3)
    cfg.to_file(tmp_path / "c.cfg")
    back = cli.PipelineConfig.from_file(tmp_path / "c.cfg")
    assert back == cfg


def test_config_unknown_key_rejected(tmp_path):
    (tmp_path / "bad.cfg").write_text("wibble=3\n")
    with pytest.raises(ConfigError):
        cli.PipelineConfig.from_file(tmp_path / "bad.cfg")


def test_config_range_rejected(tmp_path):
    (tmp_path / "bad.cfg").write_text("steps=0\n")
    with pytest.raises(ConfigError):
        cli.PipelineConfig.from_file(tmp_path / "bad.cfg")


def test_config_flags_override(workdir, tmp_path):
    cfg = cli.PipelineConfig(steps=2, seed=5)
    cfg.to_file(tmp_path / "c.cfg")
    rc = run_cli(
        "reconstruct", "--in", workdir / "bumpy.cbr", "--config", tmp_path / "c.cfg",
        "--steps", 3, "--seed", 1, "--out", tmp_path / "o.obj",
        "--report", tmp_path / "o.txt", "--no-plot",
    )
    assert rc == 0
    from curvcodec.spinrec import ReconstructionReport

    report = ReconstructionReport.from_table((tmp_path / "o.txt").read_text())
    assert len(report.steps) == 3  # flag wins over the config file


def test_console_entry_point(workdir):
    r = subprocess.run(
        ["curvcodec", "metrics", "--a", str(workdir / "bumpy.obj"),
         "--b", str(workdir / "bumpy.obj"), "--points", "500"],
        capture_output=True, text=True,
    )
    assert r.returncode == 0
    assert "willmore_a" in r.stdout
