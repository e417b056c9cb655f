import os

import pytest
from click.testing import CliRunner
from pytest_mock import MockerFixture

from dynarank_cli.main import main
from dynarank_cli.utils import read_csv

SMALL_CONFIG = """
[catalog]
n_items = 30
n_categories = 3
m_feat = 6
signature_size = 2

[train]
hidden = 6, 3
n_pairs = 100
"""


@pytest.fixture()
def config_path(tmp_path) -> str:
    path = tmp_path / "dynarank.ini"
    path.write_text(SMALL_CONFIG)
    return str(path)


def test_train(tmp_path, config_path: str) -> None:
    out = str(tmp_path / "out")
    result = CliRunner().invoke(
        main,
        ["train", "--config", config_path, "--out", out, "--epochs", "2"],
    )
    assert result.exit_code == 0, result.output

    written = result.output.split()
    assert [os.path.basename(path) for path in written] == [
        "params.txt",
        "loss_curve.csv",
        "catalog.tsv",
        "manifest.json",
    ]
    assert len(read_csv(os.path.join(out, "loss_curve.csv"))) == 3


def test_train_then_score(tmp_path, config_path: str) -> None:
    trained = str(tmp_path / "trained")
    scored = str(tmp_path / "scored")
    runner = CliRunner()
    result = runner.invoke(
        main, ["train", "--config", config_path, "--out", trained, "--seed", "4"]
    )
    assert result.exit_code == 0, result.output

    result = runner.invoke(
        main,
        [
            "score",
            "--config",
            config_path,
            "--out",
            scored,
            "--catalog",
            os.path.join(trained, "catalog.tsv"),
            "--params",
            os.path.join(trained, "params.txt"),
        ],
    )
    assert result.exit_code == 0, result.output
    rows = read_csv(os.path.join(scored, "scores.csv"))
    assert len(rows) == 30


def test_score_missing_params(tmp_path, config_path: str) -> None:
    result = CliRunner().invoke(
        main,
        ["score", "--config", config_path, "--params", str(tmp_path / "nope.txt")],
    )
    assert result.exit_code == 2


def test_train_bad_catalog(tmp_path, config_path: str) -> None:
    catalog = tmp_path / "bad.tsv"
    catalog.write_text("categories: c1\nsku\tc1\t-3\t1\t0:1.0\n")
    result = CliRunner().invoke(
        main,
        [
            "train",
            "--config",
            config_path,
            "--out",
            str(tmp_path / "out"),
            "--catalog",
            str(catalog),
        ],
    )
    assert result.exit_code == 1
    assert "line 2" in result.output


def test_train_invalid_config(tmp_path) -> None:
    path = tmp_path / "bad.ini"
    path.write_text("[train]\nmargin = -1\n")
    result = CliRunner().invoke(
        main, ["train", "--config", str(path), "--out", str(tmp_path / "out")]
    )
    assert result.exit_code == 1
    assert "invalid configuration" in result.output


def test_train_passes_overrides(
    tmp_path, mocker: MockerFixture, config_path: str
) -> None:
    run = mocker.patch("dynarank_cli.train.run", return_value=["params.txt"])
    result = CliRunner().invoke(
        main,
        [
            "train",
            "--config",
            config_path,
            "--seed",
            "12",
            "--pairs",
            "50",
            "--learning-rate",
            "0.2",
        ],
    )
    assert result.exit_code == 0, result.output
    assert result.output == "params.txt\n"

    (config,), _ = run.call_args
    assert config.mode == "train"
    assert config.seed == 12
    assert config.train.n_pairs == 50
    assert config.train.learning_rate == 0.2
    assert config.train.hidden == (6, 3)
    assert config.synth.n_items == 30
