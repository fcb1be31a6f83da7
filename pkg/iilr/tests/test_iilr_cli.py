"""End-to-end command-line workflows on a tiny toy dataset."""

import json

import numpy as np
import pytest

from iilr.cli import build_parser, main
from iilr.fieldio import read_field
from iilr_toydata import WATER_SOS, make_dataset


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    return make_dataset(tmp_path_factory.mktemp("clitoy"), 4, 2, 2,
                        size=32, seed=41)


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def _train_args(toy, out, extra=()):
    return ["train", "--data", str(toy), "--out", str(out),
            "--epochs", "2", "--batch-size", "4", "--lr-max", "1e-3",
            "--cycle-steps", "8", "--augment-ratio", "0",
            "--quiet", *extra]


def test_train_predict_round_trip(toy, tmp_path, capsys):
    ck = tmp_path / "ck"
    assert main(_train_args(toy, ck)) == 0
    assert (ck / "model.pt").exists()
    assert (ck / "model.json").exists()
    assert (ck / "history.json").exists()

    out = tmp_path / "pred"
    assert main(["predict", "--checkpoint", str(ck), "--data", str(toy),
                 "--split", "test", "--out", str(out)]) == 0
    files = sorted(out.glob("*.uctf"))
    assert len(files) == 2
    img = read_field(files[0])
    assert img.shape == (32, 32)
    # written image equals the model's deviation output plus water
    from iilr.data import load_item
    from iilr.predict import predict_item
    from iilr.train import load_checkpoint
    model, _ = load_checkpoint(ck)
    item = load_item(toy / "test" / files[0].stem)
    np.testing.assert_allclose(img, predict_item(model, item, "rt"),
                               atol=1e-6)
    assert abs(np.median(img) - WATER_SOS) < 0.5
    assert files[0].with_suffix(".json").exists()


def test_train_resume(toy, tmp_path):
    ck = tmp_path / "ck"
    assert main(_train_args(toy, ck)) == 0
    assert main(_train_args(toy, ck, ["--resume"])) == 0
    with open(ck / "history.json") as fh:
        hist = json.load(fh)
    assert [h["epoch"] for h in hist] == [0, 1, 2, 3]


def test_finetune_command(toy, tmp_path):
    base = tmp_path / "base"
    assert main(_train_args(toy, base)) == 0
    tuned = tmp_path / "tuned"
    args = _train_args(toy, tuned)
    args[0] = "finetune"
    assert main(args + ["--init-from", str(base),
                        "--tumor-weight", "20"]) == 0
    with open(tuned / "model.json") as fh:
        desc = json.load(fh)
    assert desc["config"]["tumor_weight"] == 20.0


def test_observer_command(toy, tmp_path, capsys):
    out = tmp_path / "observer.json"
    assert main(["observer", "--data", str(toy), "--split", "train",
                 "--patch-size", "16", "--epochs", "3",
                 "--out", str(out)]) == 0
    with open(out) as fh:
        result = json.load(fh)
    assert 0.0 <= result["target_auc"] <= 1.0


def test_cli_reports_domain_errors(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "missing"),
                 "--out", str(tmp_path / "out"), "--epochs", "1"])
    assert code == 2
    assert "error:" in capsys.readouterr().err
