from typing import Optional

from click import Context, Path, command, echo, option, pass_context

from dynarank_cli.common_options import (
    catalog_option,
    common_options,
    config_sections,
)
from dynarank_cli.experiment import build_config, run
from dynarank_cli.utils import exit_on_error


@command(short_help="Score a catalog with the pre-ranker")
@common_options
@catalog_option
@option(
    "--params",
    "params_path",
    type=Path(exists=True, dir_okay=False),
    help="Parameters written by `dynarank train`; trained from scratch if omitted.",
)
@exit_on_error
@pass_context
def score(
    ctx: Context,
    config_path: str,
    seed: int,
    out: str,
    catalog_path: Optional[str],
    params_path: Optional[str],
) -> None:
    """
    Write raw and normalized pre-ranker scores for every catalog item.
    """
    config = build_config(
        config_sections(ctx),
        "score",
        {
            "seed": seed,
            "out": out,
            "catalog_path": catalog_path,
            "params_path": params_path,
        },
    )
    for path in run(config):
        echo(path)
