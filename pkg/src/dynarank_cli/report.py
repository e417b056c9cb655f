import os
from typing import Dict, List, Sequence

from click import BadParameter, Context, command, echo, pass_context

from dynarank_cli.common_options import json_option, output_options
from dynarank_cli.exceptions import DynaRankError
from dynarank_cli.experiment import AGGREGATE_COLUMNS
from dynarank_cli.utils import exit_on_error, prepare_execution_result_table, read_csv


def final_round_rows(path: str) -> List[Dict[str, str]]:
    """
    Keep the last round of every policy from a cumulative aggregate table.
    """
    last: Dict[str, Dict[str, str]] = {}
    for row in read_csv(path):
        policy = row["policy"]
        if policy not in last or int(row["round"]) > int(last[policy]["round"]):
            last[policy] = row
    return [last[policy] for policy in sorted(last)]


def _table(
    rows: Sequence[Dict[str, str]], header: Sequence[str], use_json: bool
) -> str:
    return prepare_execution_result_table(
        data=[[row[column] for column in header] for row in rows],
        header=header,
        use_json=use_json,
    )


@command(short_help="Summarize the artifacts of a finished run")
@output_options
@json_option
@exit_on_error
@pass_context
def report(ctx: Context, config_path: str, out: str, json: bool) -> None:
    """
    Print the final cumulative reward and regret of a case study, and the
    page-wise gains and session totals of a pipeline run, found in --out.
    """
    if not os.path.isdir(out):
        raise BadParameter(f"directory {out} does not exist", ctx, param_hint="--out")

    printed = False
    for value in ("cum_reward", "cum_regret"):
        path = os.path.join(out, f"aggregate_{value}.csv")
        if os.path.exists(path):
            echo(f"final {value.replace('_', ' ')}")
            header = ["policy", "round", *AGGREGATE_COLUMNS]
            echo(_table(final_round_rows(path), header, json))
            printed = True

    path = os.path.join(out, "page_gain.csv")
    if os.path.exists(path):
        rows = read_csv(path)
        echo("page dcg gain")
        echo(_table(rows, list(rows[0].keys()) if rows else [], json))
        printed = True

    for value in ("dcg", "gmv"):
        path = os.path.join(out, f"session_{value}.csv")
        if os.path.exists(path):
            echo(f"session {value}")
            echo(_table(read_csv(path), ["variant", *AGGREGATE_COLUMNS], json))
            printed = True

    if not printed:
        raise DynaRankError(f"no case-study or pipeline results found in {out}")
