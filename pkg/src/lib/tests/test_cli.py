from unittest.mock import patch

import numpy as np
import pytest

from src.cli import build_parser, checkpoint_name, fusion_parameter_count, main
from src.lib.checkpoint import save_checkpoint
from src.lib.config import get_profile
from src.lib.sequences import GROUNDTRUTH
from src.ndtensor.errors import CheckpointError
from src.ndtensor.tensor import get_default_dtype, set_default_dtype
from src.transt.model import TransT

PAPER_FUSION_LAYER = 3_157_504


@pytest.fixture(autouse=True)
def keep_default_dtype():
    previous = get_default_dtype()
    yield
    set_default_dtype(previous)


class TestParser:
    """Test suite for command-line parsing."""

    def test_unknown_command_exits_2(self):
        """Test argparse rejects unknown subcommands with exit status 2."""
        with pytest.raises(SystemExit) as info:
            main(["fly"])
        assert info.value.code == 2

    def test_bad_choice_exits_2(self):
        """Test an invalid profile is an argument error."""
        with pytest.raises(SystemExit) as info:
            main(["eval", "--profile", "giant"])
        assert info.value.code == 2

    def test_tracking_defaults(self):
        """Test the tracking options default to the published settings."""
        args = build_parser().parse_args(["eval"])
        assert (args.w_penalty, args.threshold, args.mode, args.precision) == (0.49, 0.75, "concat", 32)
        assert args.synthetic == 20 and not args.long_term

    def test_checkpoint_names(self):
        """Test the correlation baseline is stored apart from the transformer."""
        toy = get_profile("toy").model
        assert checkpoint_name(toy, "toy") == "toy"
        assert checkpoint_name(toy.model_copy(update={"fusion": "xcorr"}), "toy") == "toy-xcorr"


class TestCommands:
    """Test suite for the harness commands."""

    def test_params_per_layer(self, capsys):
        """Test one full-scale fusion layer adds 3,157,504 parameters."""
        assert main(["params", "--profile", "paper", "--layers", "1"]) == 0
        one = int(capsys.readouterr().out.strip())
        assert main(["params", "--profile", "paper", "--layers", "2"]) == 0
        two = int(capsys.readouterr().out.strip())
        assert two - one == PAPER_FUSION_LAYER

    def test_params_restores_precision(self):
        """Test counting parameters does not change the process dtype."""
        before = get_default_dtype()
        main(["params", "--layers", "1"])
        assert get_default_dtype() == before

    def test_toy_count_grows_with_layers(self):
        """Test the toy count is positive and increases by a fixed step."""
        toy = get_profile("toy").model
        counts = [fusion_parameter_count(toy, n) for n in (1, 2, 3)]
        assert counts[0] > 0 and counts[2] - counts[1] == counts[1] - counts[0]

    def test_synth_is_deterministic(self, tmp_path):
        """Test the same seed writes byte-identical sequences."""
        for name in ("a", "b"):
            assert main(["synth", "--seed", "4", "--frames", "3", "--out", str(tmp_path / name)]) == 0
        for path in sorted((tmp_path / "a").rglob("*.p?m")):
            assert path.read_bytes() == (tmp_path / "b" / path.relative_to(tmp_path / "a")).read_bytes()
        assert (tmp_path / "a" / GROUNDTRUTH).read_text() == (tmp_path / "b" / GROUNDTRUTH).read_text()

    def test_synth_count_writes_subdirectories(self, tmp_path):
        """Test several sequences go into numbered folders."""
        main(["synth", "--seed", "2", "--count", "2", "--frames", "2", "--out", str(tmp_path)])
        assert (tmp_path / "seq_0002" / GROUNDTRUTH).exists()
        assert (tmp_path / "seq_0003" / GROUNDTRUTH).exists()

    def test_missing_checkpoint_exits_1(self, tmp_path, capsys):
        """Test library errors print a message and return 1."""
        with patch("src.cli.latest_checkpoint", side_effect=CheckpointError("no checkpoint matches x")):
            assert main(["eval", "--synthetic", "1"]) == 1
        assert "no checkpoint" in capsys.readouterr().err

    def test_gradcheck_subset(self, capsys):
        """Test a passing subset exits 0 and prints one line per op."""
        assert main(["gradcheck", "--only", "matmul", "sigmoid"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2 and all(line.endswith("ok") for line in lines)

    def test_track_writes_results(self, tmp_path):
        """Test tracking a saved sequence writes one result line per later frame."""
        main(["synth", "--seed", "1", "--frames", "3", "--out", str(tmp_path / "seq")])
        set_default_dtype(np.float32)
        ckpt = save_checkpoint(TransT(get_profile("toy").model), tmp_path / "toy.ttk")
        code = main(["track", "--seq", str(tmp_path / "seq"), "--ckpt", str(ckpt), "--m", "1"])
        assert code == 0
        lines = (tmp_path / "seq" / "results.txt").read_text().splitlines()
        assert len(lines) == 2 and len(lines[0].split(",")) == 6

    def test_eval_without_groundtruth_exits_1(self, tmp_path, capsys):
        """Test evaluating a sequence directory with no ground truth is a usage error."""
        main(["synth", "--seed", "1", "--frames", "2", "--out", str(tmp_path / "seq")])
        (tmp_path / "seq" / GROUNDTRUTH).unlink()
        set_default_dtype(np.float32)
        ckpt = save_checkpoint(TransT(get_profile("toy").model), tmp_path / "toy.ttk")
        assert main(["eval", "--seq", str(tmp_path / "seq"), "--ckpt", str(ckpt)]) == 1
        assert "no groundtruth.txt" in capsys.readouterr().err
