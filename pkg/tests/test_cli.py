import json

import numpy as np
import pytest
import yaml

from src.cli import EXIT_CAPACITY, EXIT_INPUT, EXIT_OK, build_parser, main
from src.data.idx_format import RawImages, encode_labels, write_idx


@pytest.fixture
def idx_files(tmp_path, rng):
    labels = np.tile(np.arange(4, dtype=np.uint8), 10)
    images = rng.integers(0, 256, size=(40, 4, 4)).astype(np.uint8)
    return write_idx(RawImages(images=images, labels=labels), tmp_path / "images", tmp_path / "labels")


class TestParser:
    def test_defaults(self):
        args = build_parser().parse_args(["shots", "--out", "shots.csv"])
        assert (args.n, args.H, args.eps, args.n_max) == (20, [1, 2, 3], 1.0, 400)
        assert args.seed is None

    def test_comma_separated_lists(self):
        args = build_parser().parse_args(["train", "--gram", "K.csv", "--labels", "y", "--cv", "0.5,1,2"])
        assert args.cv == [0.5, 1.0, 2.0]

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["fit"])


class TestMain:
    """Exit codes and outputs of whole commands."""

    def test_shots(self, tmp_path):
        out = tmp_path / "shots.csv"
        assert main(["shots", "--n", "20", "--H", "2", "--N-max", "150", "--out", str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "N,M_gfqk,M_lpqk_H2"
        assert lines[134].split(",")[0] == "134"

    def test_ingest_then_gram_then_train(self, tmp_path, idx_files):
        prepared = tmp_path / "prepared.npz"
        images, labels = idx_files
        assert main(["ingest", "--images", str(images), "--labels", str(labels), "--train", "12", "--test", "4",
                     "--pca", "2", "--out", str(prepared)]) == EXIT_OK
        config = tmp_path / "gram.yml"
        config.write_text(yaml.safe_dump({"dataset": {"prepared": str(prepared)},
                                          "embedding": {"n": 2, "bandwidth": 0.5},
                                          "kernel": {"preset": "gfqk"}}))
        gram = tmp_path / "K.csv"
        assert main(["gram", "--config", str(config), "--out", str(gram), "--seed", "3"]) == EXIT_OK
        model = tmp_path / "model.json"
        assert main(["train", "--gram", str(gram), "--labels", str(gram) + ".labels", "--C", "1",
                     "--out", str(model)]) == EXIT_OK
        assert len(json.loads(model.read_text())["alpha"]) == 12

    def test_wrong_magic_is_an_input_error(self, tmp_path, idx_files):
        _, labels = idx_files
        bogus = tmp_path / "bogus"
        bogus.write_bytes(encode_labels(np.zeros(3)))
        assert main(["ingest", "--images", str(bogus), "--labels", str(labels),
                     "--out", str(tmp_path / "out.npz")]) == EXIT_INPUT

    def test_missing_config(self, tmp_path):
        assert main(["gram", "--config", str(tmp_path / "absent.yml"), "--out", str(tmp_path / "K.csv")]) == EXIT_INPUT

    def test_missing_idx_file(self, tmp_path, idx_files):
        images, _ = idx_files
        assert main(["ingest", "--images", str(images), "--labels", str(tmp_path / "absent"),
                     "--out", str(tmp_path / "out.npz")]) == EXIT_INPUT

    def test_capacity_error(self, tmp_path):
        config = tmp_path / "large.yml"
        config.write_text(yaml.safe_dump({"embedding": {"n": 30}, "kernel": {"preset": "h-body", "H": 1}}))
        assert main(["gram", "--config", str(config), "--out", str(tmp_path / "K.csv")]) == EXIT_CAPACITY

    def test_classes_need_two_labels(self, tmp_path, idx_files):
        images, labels = idx_files
        assert main(["ingest", "--images", str(images), "--labels", str(labels), "--classes", "1",
                     "--out", str(tmp_path / "out.npz")]) == EXIT_INPUT
