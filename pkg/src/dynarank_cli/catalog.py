from dataclasses import dataclass
from logging import getLogger
from typing import Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from dynarank_cli.exceptions import (
    CatalogParseError,
    DuplicateItemError,
    EmptyInputError,
    NegativeGmvError,
    UnknownCategoryError,
)

logger = getLogger(__name__)

SCORE_EPSILON = 1e-3

CATEGORIES_HEADER = "categories:"
FEATURES_HEADER = "features:"

SparseFeatures = Tuple[Tuple[int, float], ...]


@dataclass(frozen=True)
class Item:
    """
    One rankable product: sparse features, its arm (category), monetary value
    and the ground truth purchase label.
    """

    id: str
    category: str
    gmv: float
    ordered: int
    features: SparseFeatures = ()

    def __post_init__(self) -> None:
        if self.gmv < 0:
            raise NegativeGmvError(f"item {self.id}: gmv must be >= 0, got {self.gmv}")
        if self.ordered not in (0, 1):
            raise ValueError(f"item {self.id}: ordered must be 0 or 1")
        indices = [index for index, _ in self.features]
        if any(index < 0 for index in indices):
            raise ValueError(f"item {self.id}: negative feature index")
        if any(a >= b for a, b in zip(indices, indices[1:])):
            raise ValueError(
                f"item {self.id}: feature indices must be strictly increasing"
            )

    @property
    def max_feature_index(self) -> int:
        return self.features[-1][0] if self.features else -1

    def dense(self, m_feat: int) -> np.ndarray:
        vector = np.zeros(m_feat, dtype=np.float64)
        for index, value in self.features:
            vector[index] = value
        return vector


@dataclass(frozen=True)
class Catalog:
    items: Tuple[Item, ...]
    m_feat: int
    categories: Tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "categories", tuple(self.categories))
        if len(set(self.categories)) != len(self.categories):
            raise ValueError("catalog categories must be distinct")
        declared = set(self.categories)
        seen: Set[str] = set()
        for item in self.items:
            if item.category not in declared:
                raise UnknownCategoryError(
                    f"item {item.id} has undeclared category {item.category!r}"
                )
            if item.id in seen:
                raise DuplicateItemError(f"duplicate item id {item.id!r}")
            if item.max_feature_index >= self.m_feat:
                raise ValueError(
                    f"item {item.id}: feature index {item.max_feature_index} "
                    f"out of range for m_feat={self.m_feat}"
                )
            seen.add(item.id)

    def __len__(self) -> int:
        return len(self.items)

    def dense_matrix(self) -> np.ndarray:
        """
        Stack item features into an (N, m_feat) array in catalog order.
        """
        matrix = np.zeros((len(self.items), self.m_feat), dtype=np.float64)
        for row, item in enumerate(self.items):
            for index, value in item.features:
                matrix[row, index] = value
        return matrix


@dataclass(frozen=True)
class ScoredItem:
    item: Item
    raw_score: float
    norm_score: float

    def __post_init__(self) -> None:
        if not 0.0 < self.norm_score < 1.0:
            raise ValueError(
                f"item {self.item.id}: norm_score {self.norm_score} outside (0, 1)"
            )

    @property
    def category(self) -> str:
        return self.item.category


def normalize_scores(
    raw: Sequence[float], epsilon: float = SCORE_EPSILON
) -> List[float]:
    """
    Min-max scale raw scores into [epsilon, 1 - epsilon], keeping the order.
    Constant input maps to 0.5 everywhere.
    """
    if len(raw) == 0:
        raise EmptyInputError("cannot normalize an empty score list")

    values = np.asarray(raw, dtype=np.float64)
    low, high = values.min(), values.max()
    if high == low:
        return [0.5] * len(values)

    scaled = epsilon + (values - low) / (high - low) * (1.0 - 2.0 * epsilon)
    return [float(v) for v in scaled]


def _parse_features(field_value: str, line_number: int) -> SparseFeatures:
    if not field_value.strip():
        return ()
    features = []
    for entry in field_value.split(","):
        try:
            index, value = entry.split(":")
            features.append((int(index), float(value)))
        except ValueError:
            raise CatalogParseError(f"malformed feature entry {entry!r}", line_number)
    return tuple(features)


def _parse_item(line: str, line_number: int) -> Item:
    fields = line.split("\t")
    if len(fields) == 4:
        fields.append("")
    if len(fields) != 5:
        raise CatalogParseError(
            f"expected 5 tab-separated fields, got {len(fields)}", line_number
        )
    item_id, category, gmv_field, ordered_field, feature_field = fields

    try:
        gmv = float(gmv_field)
    except ValueError:
        raise CatalogParseError(f"invalid gmv {gmv_field!r}", line_number)
    if gmv < 0:
        raise NegativeGmvError(f"negative gmv {gmv_field}", line_number)
    if ordered_field not in ("0", "1"):
        raise CatalogParseError(
            f"ordered flag must be 0 or 1, got {ordered_field!r}", line_number
        )

    try:
        return Item(
            id=item_id,
            category=category,
            gmv=gmv,
            ordered=int(ordered_field),
            features=_parse_features(feature_field, line_number),
        )
    except ValueError as err:
        raise CatalogParseError(str(err), line_number)


def load_catalog(stream: Union[str, Iterable[str]]) -> Catalog:
    """
    Parse the line-oriented catalog format.

    Args:
        stream: the catalog text, or any iterable of its lines (an open file)

    Returns: a validated Catalog
    """
    if isinstance(stream, str):
        stream = stream.splitlines()

    categories: Optional[Tuple[str, ...]] = None
    m_feat: Optional[int] = None
    items: List[Item] = []
    seen_ids = set()

    for line_number, raw_line in enumerate(stream, start=1):
        line = raw_line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue

        if line.startswith(CATEGORIES_HEADER):
            names = line[len(CATEGORIES_HEADER) :].strip()
            categories = tuple(c.strip() for c in names.split(",") if c.strip())
            if len(set(categories)) != len(categories):
                raise CatalogParseError("duplicate category names", line_number)
            continue

        if line.startswith(FEATURES_HEADER):
            try:
                m_feat = int(line[len(FEATURES_HEADER) :].strip())
            except ValueError:
                raise CatalogParseError("invalid features header", line_number)
            continue

        if categories is None:
            raise CatalogParseError(
                "item line before the categories header", line_number
            )

        item = _parse_item(line, line_number)
        if item.category not in categories:
            raise UnknownCategoryError(
                f"unknown category {item.category!r}", line_number
            )
        if item.id in seen_ids:
            raise DuplicateItemError(f"duplicate item id {item.id!r}", line_number)
        if m_feat is not None and item.max_feature_index >= m_feat:
            raise CatalogParseError(
                f"feature index {item.max_feature_index} >= m_feat {m_feat}",
                line_number,
            )
        seen_ids.add(item.id)
        items.append(item)

    if categories is None:
        raise CatalogParseError("missing categories header")

    if m_feat is None:
        m_feat = max((item.max_feature_index for item in items), default=-1) + 1

    logger.debug(
        "loaded catalog with %d items, %d categories", len(items), len(categories)
    )
    return Catalog(items=tuple(items), m_feat=m_feat, categories=categories)


def dump_catalog(catalog: Catalog) -> str:
    """
    Canonical text form of a catalog; load_catalog(dump_catalog(c)) == c.
    """
    lines = [
        f"{CATEGORIES_HEADER} {','.join(catalog.categories)}",
        f"{FEATURES_HEADER} {catalog.m_feat}",
    ]
    for item in catalog.items:
        features = ",".join(f"{index}:{value!r}" for index, value in item.features)
        lines.append(
            "\t".join(
                [item.id, item.category, repr(item.gmv), str(item.ordered), features]
            )
        )
    return "\n".join(lines) + "\n"


def read_catalog(path: str) -> Catalog:
    with open(path, "r", encoding="utf-8") as f:
        return load_catalog(f)


def write_catalog(catalog: Catalog, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dump_catalog(catalog))
