from typing import Optional, Tuple

from click import Context, IntRange, command, echo, option, pass_context

from dynarank_cli.common_options import (
    common_options,
    config_sections,
    policy_option,
)
from dynarank_cli.experiment import build_config, run
from dynarank_cli.utils import exit_on_error


@command(
    name="case-study",
    short_help="Compare bandit policies on a synthetic click model (alias: cs)",
)
@common_options
@policy_option
@option("--runs", type=IntRange(min=1), help="Independent runs per policy.")
@option("--rounds", type=IntRange(min=1), help="Pulls per run.")
@option(
    "--workers",
    type=IntRange(min=1),
    help="Worker processes; results do not depend on it.",
)
@exit_on_error
@pass_context
def case_study(
    ctx: Context,
    config_path: str,
    seed: int,
    out: str,
    policies: Tuple[str, ...],
    runs: Optional[int],
    rounds: Optional[int],
    workers: Optional[int],
) -> None:
    """
    Run every policy against the Beta click model and write the per-round
    log together with cumulative reward and regret aggregates.
    """
    config = build_config(
        config_sections(ctx),
        "case-study",
        {
            "seed": seed,
            "out": out,
            "policies": tuple(name.lower() for name in policies),
            "runs": runs,
            "rounds": rounds,
            "workers": workers,
        },
    )
    for path in run(config):
        echo(path)
