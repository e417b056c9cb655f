import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, NamedTuple, Sequence

import pandas as pd

from dynarank_cli.exceptions import EmptyInputError, PageOutOfRangeError
from dynarank_cli.simulator import MAX_PAGE_SIZE, SessionRow

DEFAULT_P = 8


class RankedEntry(NamedTuple):
    item_id: str
    gmv: float
    ordered: int


@dataclass(frozen=True)
class RankedList:
    """
    Entries in presentation order; entry i sits at 1-based position i + 1.
    """

    entries: Sequence[RankedEntry] = ()

    @property
    def k(self) -> int:
        return len(self.entries)

    def head(self, p: int) -> "RankedList":
        return RankedList(entries=tuple(self.entries[:p]))


@dataclass(frozen=True)
class PagedList:
    """
    Pages indexed from 0. Only the last page of a session may be short, so
    lengths are checked against the upper bound alone.
    """

    pages: Sequence[RankedList] = ()

    def __post_init__(self) -> None:
        for index, page in enumerate(self.pages):
            if not 1 <= page.k <= MAX_PAGE_SIZE:
                raise ValueError(f"page {index} has {page.k} entries")


def dcg(ranked: RankedList) -> float:
    return sum(
        entry.gmv * entry.ordered / math.log2(position + 1)
        for position, entry in enumerate(ranked.entries, start=1)
    )


def page_dcg(paged: PagedList, page_k: int, p: int = DEFAULT_P) -> float:
    """
    dcg of the first p entries of one page, positions restarting at 1.
    """
    if not 0 <= page_k < len(paged.pages):
        raise PageOutOfRangeError(
            f"page {page_k} requested, list has {len(paged.pages)} pages"
        )
    return dcg(paged.pages[page_k].head(p))


def session_gmv(rows: Iterable[SessionRow]) -> float:
    return sum(row.gmv for row in rows if row.ordered)


def ranked_from_rows(rows: Iterable[SessionRow]) -> RankedList:
    return RankedList(
        entries=tuple(RankedEntry(row.item_id, row.gmv, row.ordered) for row in rows)
    )


def paged_from_rows(rows: Sequence[SessionRow]) -> PagedList:
    """
    Rebuild the pages of one session log; rows must come in page/position order.
    """
    pages: Dict[int, List[SessionRow]] = {}
    for row in rows:
        pages.setdefault(row.page, []).append(row)
    return PagedList(
        pages=tuple(ranked_from_rows(pages[index]) for index in sorted(pages))
    )


def _as_dict(record: Any) -> Dict[str, Any]:
    if isinstance(record, dict):
        return record
    return record._asdict()


def aggregate(
    records: Iterable[Any], group_keys: Sequence[str], value: str
) -> pd.DataFrame:
    """
    Mean and standard error of `value` per group.

    Returns: frame with columns group_keys + [n, mean, stderr], sorted by the
        group keys; stderr is sample std / sqrt(n) and 0 for single-row groups
    """
    frame = pd.DataFrame([_as_dict(record) for record in records])
    if frame.empty:
        raise EmptyInputError("nothing to aggregate")

    grouped = frame.groupby(list(group_keys), sort=True)[value]
    table = grouped.agg(n="count", mean="mean", std="std").reset_index()
    table["stderr"] = (table["std"] / table["n"].pow(0.5)).fillna(0.0)
    table.loc[table["n"] < 2, "stderr"] = 0.0
    return table[list(group_keys) + ["n", "mean", "stderr"]]


def percentage_gain(
    table: pd.DataFrame, key: str, variant: str, baseline: str, by: str
) -> pd.DataFrame:
    """
    Relative difference of group means between two values of `key`, per `by`.
    """
    pivot = table.pivot(index=by, columns=key, values="mean")
    base = pivot[baseline]
    gain = (pivot[variant] - base) / base.where(base != 0) * 100.0
    return pd.DataFrame(
        {
            by: pivot.index,
            baseline: base.values,
            variant: pivot[variant].values,
            "gain_pct": gain.fillna(0.0).values,
        }
    ).reset_index(drop=True)
