from collections import Counter
from typing import Dict, List

import numpy as np
import pytest
from pydantic import ValidationError

from dynarank_cli.catalog import Catalog, Item, dump_catalog
from dynarank_cli.exceptions import InfeasibleSpecError
from dynarank_cli.synth import SynthSpec, synthesize_catalog


def by_category(catalog: Catalog) -> Dict[str, List[Item]]:
    grouped: Dict[str, List[Item]] = {c: [] for c in catalog.categories}
    for item in catalog.items:
        grouped[item.category].append(item)
    return grouped


def test_one_item_per_category() -> None:
    catalog = synthesize_catalog(
        SynthSpec(n_items=5, n_categories=5), np.random.default_rng(0)
    )
    assert len(catalog) == 5
    assert Counter(item.category for item in catalog.items) == {
        f"c{k}": 1 for k in range(1, 6)
    }


def test_balanced_categories_with_both_labels() -> None:
    catalog = synthesize_catalog(SynthSpec(), np.random.default_rng(1))
    assert catalog.categories == ("c1", "c2", "c3", "c4", "c5")
    assert catalog.m_feat == 32
    for category, items in by_category(catalog).items():
        assert len(items) == 20
        assert {item.ordered for item in items} == {0, 1}, category
    assert all(item.gmv >= 0 for item in catalog.items)
    assert all(item.max_feature_index < 32 for item in catalog.items)


@pytest.mark.parametrize("n_items", [11, 12, 13, 14])
def test_uneven_split_within_one(n_items: int) -> None:
    catalog = synthesize_catalog(
        SynthSpec(n_items=n_items, n_categories=5, m_feat=8, signature_size=3),
        np.random.default_rng(n_items),
    )
    sizes = [len(items) for items in by_category(catalog).values()]
    assert max(sizes) - min(sizes) <= 1
    assert all(
        any(item.ordered for item in items) for items in by_category(catalog).values()
    )


def test_deterministic_per_seed() -> None:
    spec = SynthSpec(n_items=40, n_categories=4)
    first = synthesize_catalog(spec, np.random.default_rng(7))
    second = synthesize_catalog(spec, np.random.default_rng(7))
    other = synthesize_catalog(spec, np.random.default_rng(8))
    assert dump_catalog(first) == dump_catalog(second)
    assert dump_catalog(first) != dump_catalog(other)


def test_category_signatures_separate_items() -> None:
    catalog = synthesize_catalog(
        SynthSpec(n_items=50, n_categories=5, noise_std=0.05), np.random.default_rng(3)
    )
    matrix = catalog.dense_matrix()
    labels = np.array([item.category for item in catalog.items])
    centroids = {
        category: matrix[labels == category].mean(axis=0)
        for category in catalog.categories
    }
    for row, item in zip(matrix, catalog.items):
        nearest = min(centroids, key=lambda c: np.linalg.norm(row - centroids[c]))
        assert nearest == item.category


def test_infeasible_specs() -> None:
    with pytest.raises(InfeasibleSpecError):
        synthesize_catalog(
            SynthSpec(n_items=3, n_categories=5), np.random.default_rng(0)
        )
    with pytest.raises(InfeasibleSpecError):
        synthesize_catalog(
            SynthSpec(m_feat=4, signature_size=6), np.random.default_rng(0)
        )
    with pytest.raises(ValidationError):
        SynthSpec(positive_rate=1.0)


def test_too_few_distinct_signatures() -> None:
    spec = SynthSpec(n_items=20, n_categories=10, m_feat=7, signature_size=6)
    with pytest.raises(InfeasibleSpecError, match="only 7 distinct signatures"):
        synthesize_catalog(spec, np.random.default_rng(0))


def test_every_distinct_signature_used() -> None:
    spec = SynthSpec(n_items=14, n_categories=7, m_feat=7, signature_size=6)
    catalog = synthesize_catalog(spec, np.random.default_rng(0))
    assert len(catalog.categories) == 7
    assert len(catalog) == 14
