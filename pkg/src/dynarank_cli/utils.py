import csv
import hashlib
import json
import os
import sys
from configparser import ConfigParser, Error as ConfigParserError
from functools import lru_cache, wraps
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Type

from appdirs import user_config_dir
from click import ClickException, Command, Context, Group, echo
from click.exceptions import Abort, Exit
from tabulate import tabulate

from dynarank_cli.exceptions import ConfigError
from dynarank_cli.exit_codes import EXIT_FAILURE

config_file = os.path.join(user_config_dir(), "dynarank.ini")

ConfigSections = Dict[str, Dict[str, str]]


def construct_shortcuts(shortages: dict) -> Type[Group]:
    class AliasedGroup(Group):
        def get_command(self, ctx: Context, cmd_name: str) -> Optional[Command]:
            rv = Group.get_command(self, ctx, cmd_name)
            if rv is not None:
                return rv

            matches = [
                x for x in self.list_commands(ctx) if x in shortages.get(cmd_name, [])
            ]

            if not matches:
                return None

            assert len(matches) == 1
            return Group.get_command(self, ctx, matches[0])

    return AliasedGroup


def prepare_execution_result_table(
    data: Sequence[Sequence], header: Sequence, use_json: bool = False
) -> str:
    """
    return the string representation of data in either json or tabular formats
    In case of json, the result is list of dicts
    In case of tabular, the result is table with headers in the first row
    """
    for d in data:
        if len(d) != len(header):
            raise ValueError("Data and header have different length.")

    if use_json:
        return json.dumps([dict(zip(header, d)) for d in data], indent=4)
    else:
        return tabulate(data, headers=header, tablefmt="grid")


@lru_cache()
def read_config(path: Optional[str] = None) -> ConfigSections:
    """
    :return: {section: {key: value}} from the config file, empty values
        dropped; an empty dict if the file does not exist
    """
    path = path or config_file
    config = ConfigParser(interpolation=None)
    if os.path.exists(path):
        try:
            config.read(path, encoding="utf-8")
        except ConfigParserError as err:
            raise ConfigError(f"cannot parse config file {path}: {err}")

    return {
        section: {k: v for k, v in config[section].items() if v and len(v)}
        for section in config.sections()
    }


def split_list(value: str) -> List[str]:
    """
    "a, b,c" -> ["a", "b", "c"]
    """
    return [part.strip() for part in value.split(",") if part.strip()]


def exit_on_error(func: Callable) -> Callable:
    """
    Decorator which reports any non-click Exception on stderr and exits with 1
    """

    @wraps(func)
    def decorator(*args: Any, **kwargs: Any) -> None:
        try:
            func(*args, **kwargs)
        except (ClickException, Abort, Exit):
            raise
        except Exception as err:
            echo(f"Error: {err}", err=True)
            sys.exit(EXIT_FAILURE)

    return decorator


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """
    Write rows with the csv module; floats keep their repr so they read back
    exactly. Returns the path.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, "r", newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: str, mode: str, seed: int, config_hash: str, artifacts: Sequence[str]
) -> str:
    """
    Record what a run produced; no timestamps so reruns are byte-identical.
    """
    manifest = {
        "mode": mode,
        "seed": seed,
        "config_hash": config_hash,
        "artifacts": {
            os.path.basename(path): sha256_file(path) for path in sorted(artifacts)
        },
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
