import numpy as np
import pytest

from alignkit.config import ExperimentConfig
from alignkit.errors import DataError
from alignkit.fileio import (
    fmt,
    load_matrix,
    load_pgm,
    read_csv,
    save_matrix,
    save_pgm,
    write_csv,
)
from alignkit.image import Image


class TestMatrixFile:
    def test_roundtrip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        m = rng.normal(size=(7, 3)) * np.exp(rng.uniform(-20, 20, (7, 3)))
        path = tmp_path / "m.mtx"
        save_matrix(path, m, metadata=["origin=test", "note=roundtrip"])
        back, meta = load_matrix(path, with_metadata=True)
        assert np.array_equal(m, back)
        assert meta == ["origin=test", "note=roundtrip"]

    def test_format_layout(self, tmp_path):
        path = tmp_path / "m.mtx"
        save_matrix(path, np.array([[1.0, 2.5], [3.0, -0.125]]))
        lines = path.read_text().splitlines()
        assert lines[0] == "MTX1"
        assert lines[1] == "2 2"
        assert lines[2].split() == ["1.0", "2.5"]

    def test_scientific_notation_parses(self, tmp_path):
        path = tmp_path / "m.mtx"
        path.write_text("MTX1\n1 2\n1e-12 -3.5E+4\n")
        back = load_matrix(path)
        assert back[0, 0] == 1e-12 and back[0, 1] == -3.5e4

    def test_bad_magic_names_line(self, tmp_path):
        path = tmp_path / "m.mtx"
        path.write_text("NOPE\n1 1\n0\n")
        with pytest.raises(DataError, match="line 1"):
            load_matrix(path)

    def test_wrong_value_count_names_line(self, tmp_path):
        path = tmp_path / "m.mtx"
        path.write_text("MTX1\n2 2\n1 2\n3\n")
        with pytest.raises(DataError, match="line 4"):
            load_matrix(path)

    def test_non_numeric_names_line(self, tmp_path):
        path = tmp_path / "m.mtx"
        path.write_text("MTX1\n1 2\n1 bogus\n")
        with pytest.raises(DataError, match="line 3"):
            load_matrix(path)

    def test_missing_rows_detected(self, tmp_path):
        path = tmp_path / "m.mtx"
        path.write_text("MTX1\n3 1\n1\n2\n")
        with pytest.raises(DataError, match="expected 3 data rows"):
            load_matrix(path)


class TestPgm:
    @pytest.mark.parametrize("maxval", [255, 65535])
    @pytest.mark.parametrize("binary", [True, False])
    def test_roundtrip_within_quantization(self, tmp_path, maxval, binary):
        rng = np.random.default_rng(1)
        img = Image(rng.uniform(0, 1, (9, 11)))
        path = tmp_path / "img.pgm"
        save_pgm(path, img, maxval=maxval, binary=binary)
        back = load_pgm(path)
        assert back.shape == img.shape
        assert np.abs(back.intensities - img.intensities).max() <= 0.5 / maxval + 1e-12

    def test_binary_header_is_minimal(self, tmp_path):
        img = Image(np.zeros((2, 3)))
        path = tmp_path / "img.pgm"
        save_pgm(path, img, maxval=255, binary=True)
        data = path.read_bytes()
        assert data.startswith(b"P5\n3 2\n255\n")
        assert len(data) == len(b"P5\n3 2\n255\n") + 6

    def test_sixteen_bit_is_big_endian(self, tmp_path):
        img = Image(np.array([[1.0]]))
        path = tmp_path / "img.pgm"
        save_pgm(path, img, maxval=65535, binary=True)
        assert path.read_bytes().endswith(b"\xff\xff")
        half = Image(np.array([[0.5]]))
        save_pgm(path, half, maxval=65535, binary=True)
        raster = path.read_bytes()[-2:]
        assert int.from_bytes(raster, "big") == round(0.5 * 65535)

    def test_header_comments_are_skipped(self, tmp_path):
        path = tmp_path / "img.pgm"
        path.write_bytes(b"P2\n# a comment\n2 1\n# another\n255\n0 255\n")
        img = load_pgm(path)
        assert img.intensities[0, 0] == 0.0
        assert img.intensities[0, 1] == 1.0

    def test_truncated_raster_rejected(self, tmp_path):
        path = tmp_path / "img.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(DataError, match="raster"):
            load_pgm(path)

    def test_sample_above_maxval_rejected(self, tmp_path):
        path = tmp_path / "img.pgm"
        path.write_bytes(b"P2\n1 1\n100\n200\n")
        with pytest.raises(DataError, match="maxval"):
            load_pgm(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "img.pgm"
        path.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
        with pytest.raises(DataError, match="P2/P5"):
            load_pgm(path)


class TestCsv:
    def test_header_metadata_rows(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, ("a", "b"), [(1, 2.5), ("x", 0.125)], metadata=["k=v"])
        header, rows, meta = read_csv(path)
        assert header == ["a", "b"]
        assert rows == [["1", "2.5"], ["x", "0.125"]]
        assert meta == ["k=v"]
        assert path.read_text().splitlines()[0] == "a,b"

    def test_infinity_roundtrips(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, ("e",), [(float("inf"),)])
        _, rows, _ = read_csv(path)
        assert float(rows[0][0]) == float("inf")

    def test_fmt_is_repr_exact(self):
        values = [0.1, 1 / 3, 1e-300, -2.5e200]
        for v in values:
            assert float(fmt(v)) == v
        assert fmt(7) == "7"
        assert fmt(True) == "True"


class TestExperimentConfig:
    def test_defaults_match_reference_recipe(self):
        cfg = ExperimentConfig()
        assert cfg.tau_final == 0.5 and cfg.tau_bn == 0.5
        assert cfg.learning_rate == 1e-2
        assert cfg.momentum == 0.9
        assert cfg.weight_decay == 1e-5
        assert cfg.grad_clip_norm == 1.0
        assert cfg.batch_size == 32 and cfg.iterations_per_epoch == 32
        assert cfg.sum_alpha == 0.5
        assert cfg.alternating_weight == 1.0
        assert cfg.epochs == 100
        assert cfg.pretrain_split_epoch == 50

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown config keys: typo_key"):
            ExperimentConfig.from_dict({"typo_key": 1})

    def test_values_coerced_and_validated(self):
        cfg = ExperimentConfig.from_dict({"epochs": "12", "tau_final": "0.25"})
        assert cfg.epochs == 12 and cfg.tau_final == 0.25
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"schedule": "bogus"})
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"tau_bn": -1.0})

    def test_pretraining_split_checked_against_epochs(self):
        with pytest.raises(ValueError, match="pretrain_split_epoch"):
            ExperimentConfig.from_dict(
                {"schedule": "pretraining", "epochs": 10, "pretrain_split_epoch": 10}
            )

    def test_file_roundtrip(self, tmp_path):
        import json

        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"schedule": "summed", "sum_alpha": 0.5, "seed": 4}))
        cfg = ExperimentConfig.from_file(path)
        assert cfg.schedule == "summed" and cfg.seed == 4

    def test_invalid_json_reported(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ValueError, match="invalid JSON"):
            ExperimentConfig.from_file(path)
