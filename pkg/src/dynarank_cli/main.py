import logging

from click import group, option, version_option

from dynarank_cli import __version__
from dynarank_cli.case_study import case_study
from dynarank_cli.pipeline import pipeline
from dynarank_cli.report import report
from dynarank_cli.score import score
from dynarank_cli.train import train
from dynarank_cli.utils import construct_shortcuts


@group(
    cls=construct_shortcuts(
        shortages={
            "cs": ["case-study"],
            "pl": ["pipeline"],
        }
    )
)
@version_option(__version__, "-V", "--version")
@option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """
    Dynamic ranking with a pre-trained network and multi-armed bandits.
    """
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


main.add_command(train)
main.add_command(score)
main.add_command(case_study)
main.add_command(pipeline)
main.add_command(report)
