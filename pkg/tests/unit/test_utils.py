import json
import os

import pytest
from click import command
from click.testing import CliRunner
from pyfakefs.fake_filesystem import FakeFilesystem

from dynarank_cli.exceptions import ConfigError, DynaRankError
from dynarank_cli.main import main
from dynarank_cli.utils import (
    config_file,
    exit_on_error,
    prepare_execution_result_table,
    read_config,
    read_csv,
    sha256_file,
    sha256_text,
    split_list,
    write_csv,
    write_manifest,
)


def test_prepare_execution_empty() -> None:
    headers = ["name0", "name1", "name2", "name3"]
    assert json.loads(prepare_execution_result_table([], headers, use_json=True)) == []
    assert len(prepare_execution_result_table([], headers, use_json=False)) > 0


def test_prepare_execution_multiple() -> None:
    data = [["revised-ts", 1, 9321.5, 12.1], ["random", 1, 5480.2, 30.7]]
    headers = ["policy", "n", "mean", "stderr"]

    j = json.loads(prepare_execution_result_table(data, headers, use_json=True))
    assert j[1] == {"policy": "random", "n": 1, "mean": 5480.2, "stderr": 30.7}

    table = prepare_execution_result_table(data, headers, use_json=False)
    assert "revised-ts" in table and "stderr" in table


def test_prepare_execution_wrong_header() -> None:
    with pytest.raises(ValueError):
        prepare_execution_result_table([[0, 1, 2]], ["a", "b"], use_json=True)


def test_read_config(fs: FakeFilesystem) -> None:
    fs.create_file(
        config_file,
        contents="[experiment]\nseed = 4\nout =\n\n[session]\npage_size = 12\n",
    )
    assert read_config() == {
        "experiment": {"seed": "4"},
        "session": {"page_size": "12"},
    }

    fs.create_file("/etc/other.ini", contents="[train]\nepochs = 1\n")
    assert read_config("/etc/other.ini") == {"train": {"epochs": "1"}}
    assert read_config("/missing.ini") == {}


def test_read_config_caching(fs: FakeFilesystem) -> None:
    """
    read_config keeps returning the parsed file after it is deleted
    """
    fs.create_file(config_file, contents="[experiment]\nseed = 1\n")
    old_config = read_config()
    fs.remove(config_file)
    assert read_config() == old_config


def test_read_config_malformed(fs: FakeFilesystem) -> None:
    fs.create_file(config_file, contents="seed = 1\n")
    with pytest.raises(ConfigError):
        read_config()


def test_split_list() -> None:
    assert split_list("a, b,c") == ["a", "b", "c"]
    assert split_list(" 32 ,16,, 8 ") == ["32", "16", "8"]
    assert split_list("") == []


def test_exit_on_error() -> None:
    @command()
    @exit_on_error
    def failing() -> None:
        raise DynaRankError("catalog has no ordered items")

    result = CliRunner().invoke(failing)
    assert result.exit_code == 1
    assert "Error: catalog has no ordered items" in result.output


def test_csv_and_manifest(fs: FakeFilesystem) -> None:
    fs.create_dir("/out")
    path = write_csv("/out/a.csv", ["policy", "mean"], [("ucb1", 0.1 + 0.2)])
    assert read_csv(path) == [{"policy": "ucb1", "mean": repr(0.1 + 0.2)}]
    with open(path) as f:
        assert f.read() == "policy,mean\nucb1,0.30000000000000004\n"

    manifest_path = write_manifest("/out", "case-study", 3, sha256_text("cfg"), [path])
    with open(manifest_path) as f:
        manifest = json.load(f)
    assert manifest == {
        "artifacts": {"a.csv": sha256_file(path)},
        "config_hash": sha256_text("cfg"),
        "mode": "case-study",
        "seed": 3,
    }
    assert os.path.basename(manifest_path) == "manifest.json"


def test_main_incorrect_command() -> None:
    """
    calling a non existing command results in a usage error
    """
    result = CliRunner().invoke(main, ["non_existing_command"])
    assert result.exit_code == 2

    assert "Usage:" in result.output
    assert "No such command" in result.output


def test_main_aliases() -> None:
    result = CliRunner().invoke(main, ["cs", "--help"])
    assert result.exit_code == 0
    assert "--rounds" in result.output

    result = CliRunner().invoke(main, ["pl", "--help"])
    assert result.exit_code == 0
    assert "--page-size" in result.output
