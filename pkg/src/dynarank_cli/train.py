from typing import Optional

from click import Context, IntRange, command, echo, option, pass_context

from dynarank_cli.common_options import (
    catalog_option,
    common_options,
    config_sections,
)
from dynarank_cli.experiment import build_config, run
from dynarank_cli.utils import exit_on_error


@command(short_help="Fit the pre-ranker on ordered/unordered pairs")
@common_options
@catalog_option
@option("--epochs", type=IntRange(min=0), help="Passes over the sampled pairs.")
@option("--pairs", type=IntRange(min=1), help="Number of training pairs to sample.")
@option("--learning-rate", type=float, help="SGD step size.")
@exit_on_error
@pass_context
def train(
    ctx: Context,
    config_path: str,
    seed: int,
    out: str,
    catalog_path: Optional[str],
    epochs: Optional[int],
    pairs: Optional[int],
    learning_rate: Optional[float],
) -> None:
    """
    Train the pre-ranking network and write its parameters, the loss curve
    and, for a synthetic catalog, the catalog itself.
    """
    config = build_config(
        config_sections(ctx),
        "train",
        {
            "seed": seed,
            "out": out,
            "catalog_path": catalog_path,
            "train.epochs": epochs,
            "train.n_pairs": pairs,
            "train.learning_rate": learning_rate,
        },
    )
    for path in run(config):
        echo(path)
