from typing import Optional

from click import Context, IntRange, command, echo, option, pass_context

from dynarank_cli.common_options import (
    catalog_option,
    common_options,
    config_sections,
)
from dynarank_cli.experiment import build_config, run
from dynarank_cli.simulator import MAX_PAGE_SIZE, MIN_PAGE_SIZE
from dynarank_cli.utils import exit_on_error


@command(short_help="Simulate paged sessions for every ranking variant (alias: pl)")
@common_options
@catalog_option
@option("--sessions", type=IntRange(min=1), help="Simulated user sessions.")
@option(
    "--page-size",
    type=IntRange(min=MIN_PAGE_SIZE, max=MAX_PAGE_SIZE),
    help="Items per page.",
)
@option("--max-pages", type=IntRange(min=1), help="Pages shown per session.")
@exit_on_error
@pass_context
def pipeline(
    ctx: Context,
    config_path: str,
    seed: int,
    out: str,
    catalog_path: Optional[str],
    sessions: Optional[int],
    page_size: Optional[int],
    max_pages: Optional[int],
) -> None:
    """
    Pre-rank the catalog, then serve paged sessions with the static order,
    the revised Thompson sampler and the normal Thompson sampler. Writes the
    session logs and page-wise dcg tables.
    """
    config = build_config(
        config_sections(ctx),
        "pipeline",
        {
            "seed": seed,
            "out": out,
            "catalog_path": catalog_path,
            "session.sessions": sessions,
            "session.page_size": page_size,
            "session.max_pages": max_pages,
        },
    )
    for path in run(config):
        echo(path)
