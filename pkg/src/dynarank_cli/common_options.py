from typing import Any, Callable, List, Optional

from click import Choice, Context, IntRange, Parameter, Path, option

from dynarank_cli.bandits import POLICIES
from dynarank_cli.simulator import ORACLE
from dynarank_cli.utils import ConfigSections, read_config

CONFIG_META_KEY = "dynarank.config"


def load_config_file(ctx: Context, param: Parameter, value: Optional[str]) -> str:
    """
    Eager callback: parse the config file once and keep it on the context,
    so that later option callbacks can fall back to it.
    """
    ctx.meta[CONFIG_META_KEY] = read_config(value)
    return value or ""


def config_sections(ctx: Context) -> ConfigSections:
    return ctx.meta.get(CONFIG_META_KEY) or read_config(None)


def default_from_config_file(
    default: Any = None, section: str = "experiment"
) -> Callable:
    def inner(ctx: Context, param: Parameter, value: Any) -> Any:
        # type check
        assert param.name

        if value is not None and value != ():
            return value
        from_file = config_sections(ctx).get(section, {}).get(param.name)
        if from_file is not None:
            return param.type_cast_value(ctx, from_file)
        return default

    return inner


_config_option = option(
    "--config",
    "config_path",
    type=Path(dir_okay=False),
    is_eager=True,
    expose_value=True,
    callback=load_config_file,
    help="INI config file; defaults to dynarank.ini in the user config dir.",
)
_seed_option = option(
    "--seed",
    type=IntRange(min=0),
    envvar="DYNARANK_SEED",
    callback=default_from_config_file(0),
    help="Base seed of every random stream.",
)
_out_option = option(
    "--out",
    type=Path(file_okay=False),
    envvar="DYNARANK_OUT",
    callback=default_from_config_file("out"),
    help="Directory the artifacts are written to.",
)

_common_options: List[Callable] = [_config_option, _seed_option, _out_option]
_output_options: List[Callable] = [_config_option, _out_option]


def _apply(options: List[Callable], command: Callable) -> Callable:
    for add_option in reversed(options):
        command = add_option(command)
    return command


def common_options(command: Callable) -> Callable:
    return _apply(_common_options, command)


def output_options(command: Callable) -> Callable:
    """
    --config and --out only, for commands that read finished runs.
    """
    return _apply(_output_options, command)


def policy_option(command: Callable) -> Callable:
    return option(
        "--policy",
        "policies",
        multiple=True,
        type=Choice(list(POLICIES) + [ORACLE], case_sensitive=False),
        help="Policy to simulate; repeat for several. Defaults to all of them.",
    )(command)


def catalog_option(command: Callable) -> Callable:
    return option(
        "--catalog",
        "catalog_path",
        type=Path(exists=True, dir_okay=False),
        help="Catalog file; a synthetic catalog is generated when omitted.",
    )(command)


def json_option(command: Callable) -> Callable:
    return option(
        "--json",
        help="Provide output in JSON format.",
        default=False,
        is_flag=True,
        multiple=False,
    )(command)
