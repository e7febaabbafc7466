import json
import math

import numpy as np
import pytest

from circumtri.cli import main, parse_grid_spec
from circumtri.meshio import read_obj, write_obj, write_xyz
from circumtri.synthetic import grid_plane, icosphere


@pytest.fixture()
def mesh_dir(tmp_path):
    d = tmp_path / "meshes"
    d.mkdir()
    write_obj(d / "plane.obj", grid_plane(8, 8, jitter=0.15, seed=1))
    write_obj(d / "ico.obj", icosphere(1))
    return d


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestGridSpec:
    def test_plain_floats(self):
        assert parse_grid_spec("0.02,0.5,0.5,0.2") == (0.02, 0.5, 0.5, 0.2)

    def test_pi_fractions(self):
        got = parse_grid_spec("0.02,pi/6,pi/6,0.2")
        assert got[1] == pytest.approx(math.pi / 6)
        assert parse_grid_spec("1,2*pi/3,pi,1")[1] == pytest.approx(2 * math.pi / 3)

    def test_bad_spec_is_usage_error(self, capsys):
        code, _, err = run(capsys, "oracle", "--mesh", "x.obj", "--grid", "1,2")
        assert code == 1
        assert "usage error" in err


class TestPrepareTrainTriangulate:
    def test_full_cycle(self, capsys, tmp_path, mesh_dir):
        records = tmp_path / "train.ctrs"
        code, out, _ = run(capsys, "prepare", "--mesh-dir", str(mesh_dir),
                           "--out", str(records), "--voxel", "0.02",
                           "--k", "10", "--grid", "0.02,pi/2,pi/2,0.2",
                           "--seed", "3")
        assert code == 0
        assert records.exists()
        assert "samples=" in out and "rho_labels=" in out

        model = tmp_path / "model.circ"
        code, out, _ = run(capsys, "train", "--data", str(records),
                           "--out", str(model), "--iters", "6",
                           "--batch", "16", "--pe-levels", "2", "--beta", "2",
                           "--log-every", "3", "--seed", "0")
        assert code == 0
        assert model.exists()
        assert "holdout_mAcc" in out

        cloud = tmp_path / "cloud.xyz"
        write_xyz(cloud, grid_plane(6, 6, jitter=0.1, seed=5).vertices)
        out_mesh = tmp_path / "recon.obj"
        code, out, _ = run(capsys, "triangulate", "--cloud", str(cloud),
                           "--model", str(model), "--out", str(out_mesh),
                           "--conf", "0.5")
        assert code == 0
        assert out_mesh.exists()
        assert "nonmanifold_edges_before" in out
        assert "time_detect" in out
        recon = read_obj(out_mesh)
        assert np.array_equal(recon.vertices,
                              grid_plane(6, 6, jitter=0.1, seed=5).vertices)

    def test_conf_one_gives_empty_mesh(self, capsys, tmp_path, mesh_dir):
        records = tmp_path / "train.ctrs"
        run(capsys, "prepare", "--mesh-dir", str(mesh_dir), "--out",
            str(records), "--k", "8", "--grid", "0.02,pi/2,pi/2,0.2")
        model = tmp_path / "model.circ"
        run(capsys, "train", "--data", str(records), "--out", str(model),
            "--iters", "2", "--batch", "8", "--pe-levels", "2", "--beta", "2",
            "--log-every", "0", "--holdout", "0")
        cloud = tmp_path / "cloud.xyz"
        write_xyz(cloud, grid_plane(5, 5, jitter=0.1, seed=2).vertices)
        out_mesh = tmp_path / "empty.obj"
        code, out, _ = run(capsys, "triangulate", "--cloud", str(cloud),
                           "--model", str(model), "--out", str(out_mesh),
                           "--conf", "1.0")
        assert code == 0
        assert "final_faces=0" in out.replace(" ", " ")
        assert read_obj(out_mesh).n_faces == 0


class TestOracleEvalAngles:
    def test_oracle_reports_full_recovery(self, capsys, tmp_path):
        gt = tmp_path / "ico.obj"
        write_obj(gt, icosphere(2))
        out_mesh = tmp_path / "recovered.obj"
        code, out, _ = run(capsys, "oracle", "--mesh", str(gt),
                           "--out", str(out_mesh), "--k", "20")
        assert code == 0
        assert "(100.0%)" in out
        assert "spurious=0" in out
        assert read_obj(out_mesh).face_set() == icosphere(2).face_set()

    def test_eval_identical_meshes(self, capsys, tmp_path):
        gt = tmp_path / "gt.obj"
        write_obj(gt, icosphere(2))
        jsonl = tmp_path / "report.jsonl"
        code, out, _ = run(capsys, "eval", "--gt", str(gt), "--pred", str(gt),
                           "--samples", "5000", "--jsonl", str(jsonl))
        assert code == 0
        assert "cd1_x100=0\n" in out or "cd1_x100=0 " in out or "cd1_x100=0" in out
        record = json.loads(jsonl.read_text().strip())
        assert record["cd1_x100"] == 0.0
        assert record["f1"] == 1.0
        # arccos of a |cos| one ulp under 1.0 leaves sub-microdegree noise
        assert record["nr_deg"] == pytest.approx(0.0, abs=1e-5)

    def test_eval_deterministic(self, capsys, tmp_path):
        gt = tmp_path / "gt.obj"
        pred = tmp_path / "pred.obj"
        write_obj(gt, icosphere(2))
        write_obj(pred, grid_plane(6, 6, jitter=0.1, seed=1))
        _, out1, _ = run(capsys, "eval", "--gt", str(gt), "--pred", str(pred),
                         "--samples", "3000", "--seed", "5")
        _, out2, _ = run(capsys, "eval", "--gt", str(gt), "--pred", str(pred),
                         "--samples", "3000", "--seed", "5")
        assert out1 == out2

    def test_angles_report(self, capsys, tmp_path):
        gt = tmp_path / "gt.obj"
        write_obj(gt, grid_plane(5, 5, jitter=0.1, seed=0))
        code, out, _ = run(capsys, "angles", "--gt", str(gt), "--pred", str(gt))
        assert code == 0
        assert "accuracy=1.000" in out


class TestErrorPaths:
    def test_missing_file_is_data_error(self, capsys, tmp_path):
        code, _, err = run(capsys, "oracle", "--mesh",
                           str(tmp_path / "nope.obj"))
        assert code == 2
        assert "error" in err

    def test_usage_error_exit_code(self, capsys):
        code, _, _ = run(capsys, "triangulate", "--cloud", "x.xyz")
        assert code == 1

    def test_malformed_mesh_is_data_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.obj"
        bad.write_text("v 0 0 0\nf 1 2 9\n")
        code, _, err = run(capsys, "oracle", "--mesh", str(bad))
        assert code == 2

    def test_config_file_provides_defaults(self, capsys, tmp_path, mesh_dir):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("k = 8\nvoxel = 0.02\n")
        records = tmp_path / "train.ctrs"
        code, out, _ = run(capsys, "prepare", "--mesh-dir", str(mesh_dir),
                           "--out", str(records), "--config", str(cfg),
                           "--grid", "0.02,pi/2,pi/2,0.2")
        assert code == 0
        from circumtri.dataset import read_samples
        _, k, _, _ = read_samples(records)
        assert k == 8
