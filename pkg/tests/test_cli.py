import json

import numpy as np
import pytest

from alignkit.cli import main
from alignkit.fileio import load_matrix, read_csv, save_pgm
from alignkit.metrics import pcc
from alignkit.synthetic import textured_image

FAST_TRAIN = [
    "--epochs", "3", "--iterations-per-epoch", "4", "--n-samples", "32",
    "--input-dim", "8", "--bn-dim", "4", "--out-dim", "4",
]

REG_FAST = [
    "--octave-min-size", "48", "--octave-max-size", "256",
    "--max-rotation-deg", "15", "--max-translation-px", "10",
]


def run(*argv):
    return main([str(a) for a in argv])


def tree_bytes(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def texture_pgm(tmp_path_factory):
    path = tmp_path_factory.mktemp("src") / "tex.pgm"
    save_pgm(path, textured_image(192, seed=4), maxval=65535)
    return path


class TestTrainToy:
    def test_outputs_and_determinism(self, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert run("train-toy", "--output-dir", out1, *FAST_TRAIN) == 0
        assert run("train-toy", "--output-dir", out2, *FAST_TRAIN) == 0
        files = tree_bytes(out1)
        assert set(files) == {
            "trace.csv", "config.json",
            "emb_init_A_bn.mtx", "emb_init_A_final.mtx",
            "emb_init_B_bn.mtx", "emb_init_B_final.mtx",
            "emb_trained_A_bn.mtx", "emb_trained_A_final.mtx",
            "emb_trained_B_bn.mtx", "emb_trained_B_final.mtx",
        }
        assert files == tree_bytes(out2)

    def test_trace_has_expected_length(self, tmp_path):
        out = tmp_path / "r"
        assert run("train-toy", "--output-dir", out, *FAST_TRAIN) == 0
        _, rows, _ = read_csv(out / "trace.csv")
        assert len(rows) == 3 * 4

    def test_zero_learning_rate_keeps_embeddings(self, tmp_path):
        out = tmp_path / "r"
        assert run("train-toy", "--output-dir", out, "--learning-rate", "0",
                   *FAST_TRAIN) == 0
        for name in ("A_bn", "A_final", "B_bn", "B_final"):
            init = load_matrix(out / f"emb_init_{name}.mtx")
            trained = load_matrix(out / f"emb_trained_{name}.mtx")
            assert np.array_equal(init, trained)

    def test_schedules_take_different_paths(self, tmp_path):
        base, pre = tmp_path / "base", tmp_path / "pre"
        assert run("train-toy", "--output-dir", base, *FAST_TRAIN) == 0
        assert run("train-toy", "--output-dir", pre, *FAST_TRAIN,
                   "--schedule", "pretraining", "--pretrain-split-epoch", "1") == 0
        a = (base / "emb_trained_A_final.mtx").read_bytes()
        b = (pre / "emb_trained_A_final.mtx").read_bytes()
        assert a != b

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"epochs": 2, "iterations_per_epoch": 2,
                                   "n_samples": 16, "batch_size": 16, "input_dim": 8,
                                   "bn_dim": 4, "out_dim": 4, "seed": 9}))
        out = tmp_path / "r"
        assert run("train-toy", "--config", cfg, "--output-dir", out, "--seed", "11") == 0
        resolved = json.loads((out / "config.json").read_text())
        assert resolved["seed"] == 11 and resolved["epochs"] == 2

    def test_bad_config_key_is_usage_error(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert run("train-toy", "--config", cfg, "--output-dir", tmp_path / "o") == 1


class TestRegister:
    def test_synthesized_pairs_register(self, tmp_path, texture_pgm):
        out = tmp_path / "reg"
        assert run("register", "--source", texture_pgm, "--pairs", "3",
                   "--seed", "7", *REG_FAST, "--output-dir", out) == 0
        header, rows, _ = read_csv(out / "results.csv")
        assert header[:5] == ["pair_id", "error_px", "success", "inliers", "matches"]
        assert len(rows) == 3
        summary = json.loads((out / "summary.json").read_text())
        assert summary["rsr"] == 100.0
        assert summary["median_error_px"] < 5.0
        transforms = json.loads((out / "transforms.json").read_text())
        assert set(transforms) == {"0", "1", "2"}
        assert transforms["0"]["estimated"] is not None
        assert transforms["0"]["ground_truth"] is not None

    def test_determinism(self, tmp_path, texture_pgm):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ("register", "--source", texture_pgm, "--pairs", "2", "--seed", "3",
                *REG_FAST)
        assert run(*args, "--output-dir", a) == 0
        assert run(*args, "--output-dir", b) == 0
        assert tree_bytes(a) == tree_bytes(b)

    def test_directory_mode_with_truth(self, tmp_path, texture_pgm):
        synth = tmp_path / "synth"
        dump = tmp_path / "pairs"
        assert run("register", "--source", texture_pgm, "--pairs", "2", "--seed", "5",
                   *REG_FAST, "--dump-pairs", dump, "--output-dir", synth) == 0
        fixed_dir = tmp_path / "fixed"
        moving_dir = tmp_path / "moving"
        fixed_dir.mkdir()
        moving_dir.mkdir()
        for pid in range(2):
            (fixed_dir / f"p{pid}.pgm").write_bytes((dump / "fixed.pgm").read_bytes())
            (moving_dir / f"p{pid}.pgm").write_bytes(
                (dump / f"moving_{pid:03d}.pgm").read_bytes()
            )
            (moving_dir / f"p{pid}.mask.pgm").write_bytes(
                (dump / f"moving_{pid:03d}.mask.pgm").read_bytes()
            )
        truth_file = tmp_path / "truth.json"
        truth_file.write_text((synth / "transforms.json").read_text())
        out = tmp_path / "dirreg"
        assert run("register", "--fixed-dir", fixed_dir, "--moving-dir", moving_dir,
                   "--truth", truth_file, *REG_FAST, "--output-dir", out) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["rsr"] == 100.0

    def test_threshold_percent_arithmetic(self, tmp_path):
        src = tmp_path / "small.pgm"
        save_pgm(src, textured_image(300, seed=1))
        out = tmp_path / "reg"
        assert run("register", "--source", src, "--pairs", "1", "--seed", "2",
                   "--max-rotation-deg", "5", "--max-translation-px", "5",
                   "--octave-min-size", "64", "--octave-max-size", "512",
                   "--rsr-threshold-percent", "2", "--output-dir", out) == 0
        header, rows, _ = read_csv(out / "summary.csv")
        assert float(rows[0][header.index("threshold_px")]) == 6.0

    def test_empty_directory_is_data_error_without_partial_output(self, tmp_path):
        empty_a, empty_b = tmp_path / "ea", tmp_path / "eb"
        empty_a.mkdir()
        empty_b.mkdir()
        out = tmp_path / "reg"
        assert run("register", "--fixed-dir", empty_a, "--moving-dir", empty_b,
                   "--output-dir", out) == 2
        assert not (out / "results.csv").exists()

    def test_unreadable_image_marks_row_and_continues(self, tmp_path, texture_pgm):
        fixed_dir, moving_dir = tmp_path / "f", tmp_path / "m"
        fixed_dir.mkdir()
        moving_dir.mkdir()
        (fixed_dir / "a.pgm").write_bytes(texture_pgm.read_bytes())
        (moving_dir / "a.pgm").write_bytes(b"P5\nnot really\n")
        (fixed_dir / "b.pgm").write_bytes(texture_pgm.read_bytes())
        (moving_dir / "b.pgm").write_bytes(texture_pgm.read_bytes())
        out = tmp_path / "reg"
        assert run("register", "--fixed-dir", fixed_dir, "--moving-dir", moving_dir,
                   *REG_FAST, "--output-dir", out) == 0
        _, rows, _ = read_csv(out / "results.csv")
        assert len(rows) == 2
        assert rows[0][5] == "unreadable"


class TestEvalMetrics:
    def make_dirs(self, tmp_path, n=3, size=24):
        da, db = tmp_path / "da", tmp_path / "db"
        da.mkdir()
        db.mkdir()
        rng = np.random.default_rng(0)
        for i in range(n):
            from alignkit.image import Image

            img = Image(rng.uniform(0, 1, (size, size)))
            save_pgm(da / f"p{i}.pgm", img, maxval=65535)
            save_pgm(db / f"p{i}.pgm", img, maxval=65535)
        return da, db

    def test_identical_pairs_hit_metric_identities(self, tmp_path):
        da, db = self.make_dirs(tmp_path)
        out = tmp_path / "met"
        assert run("eval-metrics", "--dir-a", da, "--dir-b", db,
                   "--alpha-amd-alpha", "5", "--output-dir", out) == 0
        payload = json.loads((out / "metrics.json").read_text())
        assert payload["medians"]["mse"] == 0.0
        assert payload["medians"]["correlation"] == pytest.approx(1.0, abs=1e-12)
        assert payload["medians"]["ssim"] == pytest.approx(1.0, abs=1e-12)
        assert payload["medians"]["alpha_amd"] == 0.0

    def test_median_is_middle_order_statistic(self, tmp_path):
        da, db = tmp_path / "da", tmp_path / "db"
        da.mkdir()
        db.mkdir()
        from alignkit.image import Image

        offsets = [0.1, 0.3, 0.2]
        for i, off in enumerate(offsets):
            save_pgm(da / f"p{i}.pgm", Image(np.zeros((16, 16))), maxval=65535)
            save_pgm(db / f"p{i}.pgm", Image(np.full((16, 16), off)), maxval=65535)
        out = tmp_path / "met"
        assert run("eval-metrics", "--dir-a", da, "--dir-b", db,
                   "--metrics", "mse", "--output-dir", out) == 0
        payload = json.loads((out / "metrics.json").read_text())
        values = sorted(r["mse"] for r in payload["per_pair"])
        assert payload["medians"]["mse"] == pytest.approx(values[1], rel=1e-12)

    def test_csv_and_json_values_identical(self, tmp_path):
        da, db = self.make_dirs(tmp_path, n=2)
        out = tmp_path / "met"
        assert run("eval-metrics", "--dir-a", da, "--dir-b", db,
                   "--metrics", "mse,correlation", "--alpha-amd-alpha", "5",
                   "--output-dir", out) == 0
        payload = json.loads((out / "metrics.json").read_text())
        header, rows, _ = read_csv(out / "metrics.csv")
        for row, entry in zip(rows, payload["per_pair"]):
            assert float(row[header.index("mse")]) == entry["mse"]
            assert float(row[header.index("correlation")]) == entry["correlation"]
        agg_header, agg_rows, _ = read_csv(out / "aggregates.csv")
        for row in agg_rows:
            name = row[agg_header.index("metric")]
            assert float(row[agg_header.index("median")]) == payload["medians"][name]
            assert float(row[agg_header.index("mean")]) == payload["means"][name]
        # re-aggregating the per-pair CSV rows reproduces the reported aggregates
        from alignkit.report import median_and_mean

        for name in ("mse", "correlation"):
            col = header.index(name)
            median, mean = median_and_mean(float(r[col]) for r in rows)
            assert median == payload["medians"][name]
            assert mean == payload["means"][name]

    def test_frechet_from_feature_files(self, tmp_path):
        da, db = self.make_dirs(tmp_path, n=2)
        from alignkit.fileio import save_matrix

        rng = np.random.default_rng(1)
        fa, fb = tmp_path / "fa.mtx", tmp_path / "fb.mtx"
        save_matrix(fa, rng.normal(size=(10, 3)))
        save_matrix(fb, rng.normal(size=(12, 3)))
        out = tmp_path / "met"
        assert run("eval-metrics", "--dir-a", da, "--dir-b", db, "--metrics", "mse",
                   "--features-a", fa, "--features-b", fb, "--output-dir", out) == 0
        payload = json.loads((out / "metrics.json").read_text())
        assert payload["frechet_distance"] > 0.0

    def test_size_mismatch_marks_row_and_continues(self, tmp_path):
        from alignkit.image import Image

        da, db = tmp_path / "da", tmp_path / "db"
        da.mkdir()
        db.mkdir()
        rng = np.random.default_rng(2)
        save_pgm(da / "p0.pgm", Image(rng.uniform(0, 1, (16, 16))))
        save_pgm(db / "p0.pgm", Image(rng.uniform(0, 1, (12, 12))))
        save_pgm(da / "p1.pgm", Image(rng.uniform(0, 1, (16, 16))))
        save_pgm(db / "p1.pgm", Image(rng.uniform(0, 1, (16, 16))))
        out = tmp_path / "met"
        assert run("eval-metrics", "--dir-a", da, "--dir-b", db,
                   "--metrics", "mse", "--output-dir", out) == 0
        payload = json.loads((out / "metrics.json").read_text())
        assert "note" in payload["per_pair"][0]
        assert payload["per_pair"][1]["mse"] is not None


class TestMdsSpectrumReport:
    def train_once(self, tmp_path, seed=0, schedule=None):
        out = tmp_path / f"run_{seed}_{schedule or 'baseline'}"
        args = ["train-toy", "--output-dir", out, *FAST_TRAIN, "--seed", str(seed)]
        if schedule:
            args += ["--schedule", schedule, "--pretrain-split-epoch", "1"]
        assert run(*args) == 0
        return out

    def test_spectrum_of_rank_deficient_matrix(self, tmp_path):
        from alignkit.fileio import save_matrix

        rng = np.random.default_rng(3)
        basis = np.linalg.qr(rng.normal(size=(8, 2)))[0].T
        emb = tmp_path / "emb.mtx"
        save_matrix(emb, rng.normal(size=(40, 2)) @ basis)
        out = tmp_path / "spec"
        assert run("spectrum", "--input", emb, "--output-dir", out) == 0
        header, rows, meta = read_csv(out / "spectrum.csv")
        values = np.array([float(r[header.index("value")]) for r in rows])
        assert values.size == 8
        assert np.count_nonzero(values < 1e-10 * values[0]) == 6
        assert any(m.startswith("collapsed_dims=6") for m in meta)

    def test_mds_csv_reports_stress_in_metadata(self, tmp_path):
        from alignkit.fileio import save_matrix

        rng = np.random.default_rng(4)
        emb = tmp_path / "planar.mtx"
        save_matrix(emb, rng.normal(size=(20, 2)))
        out = tmp_path / "mds"
        assert run("mds", "--input", emb, "--metric", "euclidean",
                   "--output-dir", out) == 0
        header, rows, meta = read_csv(out / "mds.csv")
        assert header == ["x", "y", "modality", "pair_id"]
        assert len(rows) == 20
        stress = [float(m.split("=")[1]) for m in meta if m.startswith("final_stress=")]
        assert stress and stress[0] < 1e-6

    def test_mds_determinism_and_svg(self, tmp_path):
        run_dir = self.train_once(tmp_path)
        out1, out2 = tmp_path / "m1", tmp_path / "m2"
        args = ("mds", "--input", run_dir / "emb_trained_A_final.mtx",
                "--input-b", run_dir / "emb_trained_B_final.mtx",
                "--init", "random", "--seed", "5", "--svg")
        assert run(*args, "--output-dir", out1) == 0
        assert run(*args, "--output-dir", out2) == 0
        assert tree_bytes(out1) == tree_bytes(out2)
        assert (out1 / "mds.svg").exists()

    def test_report_single_run_summarizes_pipeline(self, tmp_path):
        run_dir = self.train_once(tmp_path, seed=2)
        assert run("spectrum", "--input", run_dir / "emb_trained_A_final.mtx",
                   "--tag", "A_final", "--output-dir", run_dir) == 0
        assert run("mds", "--input", run_dir / "emb_trained_A_final.mtx",
                   "--input-b", run_dir / "emb_trained_B_final.mtx",
                   "--output-dir", run_dir) == 0
        out = tmp_path / "rep"
        assert run("report", "--run-dir", run_dir, "--output-dir", out) == 0
        report = json.loads((out / "report.json").read_text())
        entry = report["runs"][0]
        assert "loss_reduction" in entry
        assert "spectrum_A_final.csv" in entry["spectra"]
        assert "mds.csv" in entry["mds"]

    def test_report_pcc_matches_direct_computation(self, tmp_path):
        # three fabricated run dirs with metric means and rsr
        means = {"mse": [0.1, 0.2, 0.3], "correlation": [0.9, 0.6, 0.4]}
        rsr = [80.0, 60.0, 20.0]
        dirs = []
        for i in range(3):
            d = tmp_path / f"fab{i}"
            d.mkdir()
            (d / "metrics.json").write_text(json.dumps({
                "medians": {}, "means": {k: v[i] for k, v in means.items()},
                "per_pair": [],
            }))
            (d / "summary.json").write_text(json.dumps({"rsr": rsr[i]}))
            dirs.append(d)
        out = tmp_path / "rep"
        assert run("report", "--run-dir", dirs[0], "--run-dir", dirs[1],
                   "--run-dir", dirs[2], "--output-dir", out) == 0
        report = json.loads((out / "report.json").read_text())
        for name, series in means.items():
            assert report["pcc"][name] == pytest.approx(pcc(series, rsr), rel=1e-12)
        header, rows, _ = read_csv(out / "pcc.csv")
        table = {r[0]: float(r[1]) for r in rows}
        assert table["mse"] == pytest.approx(pcc(means["mse"], rsr), rel=1e-12)


class TestCliContract:
    def test_usage_error_exit_code(self):
        assert run("register") == 1  # neither --source nor dirs
        assert run("no-such-command") == 1

    def test_missing_file_is_data_error(self, tmp_path):
        assert run("spectrum", "--input", tmp_path / "absent.mtx",
                   "--output-dir", tmp_path / "o") == 2

    def test_malformed_matrix_names_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.mtx"
        bad.write_text("MTX1\n2 2\n1 2\nnope nope\n")
        assert run("mds", "--input", bad, "--output-dir", tmp_path / "o") == 2
        assert "line 4" in capsys.readouterr().err

    def test_output_dir_env_override(self, tmp_path, monkeypatch):
        target = tmp_path / "env_out"
        monkeypatch.setenv("ALIGNKIT_OUTPUT_DIR", str(target))
        assert run("train-toy", *FAST_TRAIN) == 0
        assert (target / "trace.csv").exists()

    def test_thread_override_preserves_results(self, tmp_path, texture_pgm, monkeypatch):
        out1 = tmp_path / "serial"
        assert run("register", "--source", texture_pgm, "--pairs", "2", "--seed", "1",
                   *REG_FAST, "--output-dir", out1) == 0
        monkeypatch.setenv("ALIGNKIT_THREADS", "4")
        out2 = tmp_path / "threaded"
        assert run("register", "--source", texture_pgm, "--pairs", "2", "--seed", "1",
                   *REG_FAST, "--output-dir", out2) == 0
        assert tree_bytes(out1) == tree_bytes(out2)
