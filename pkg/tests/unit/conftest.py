from typing import Callable, List

import numpy as np
import pytest
from pyfakefs.fake_filesystem import FakeFilesystem

from dynarank_cli.catalog import Catalog, Item, ScoredItem, load_catalog
from dynarank_cli.utils import read_config

# canonical form: dump_catalog(load_catalog(CATALOG_TEXT)) == CATALOG_TEXT
CATALOG_TEXT = (
    "categories: shoes,books\n"
    "features: 4\n"
    "sku-1\tshoes\t10.0\t1\t0:1.0,2:0.5\n"
    "sku-2\tbooks\t20.0\t0\t1:2.0\n"
    "sku-3\tshoes\t5.5\t0\t0:0.25,3:-1.5\n"
)


@pytest.fixture()
def catalog_text() -> str:
    return CATALOG_TEXT


@pytest.fixture()
def small_catalog() -> Catalog:
    return load_catalog(CATALOG_TEXT)


@pytest.fixture()
def catalog_file(fs: FakeFilesystem) -> str:
    path = "/data/catalog.tsv"
    fs.create_file(path, contents=CATALOG_TEXT)
    return path


@pytest.fixture(autouse=True)
def clear_config_cache() -> None:
    # read_config is cached per path, fake filesystems differ between tests
    read_config.cache_clear()
    yield
    read_config.cache_clear()


@pytest.fixture()
def make_scored() -> Callable[..., List[ScoredItem]]:
    def inner(*groups: List[float], prefix: str = "c") -> List[ScoredItem]:
        """
        One category per argument, holding items with the given norm scores.
        """
        scored = []
        for arm, scores in enumerate(groups):
            for index, score in enumerate(scores):
                item = Item(
                    id=f"{prefix}{arm}-{index}",
                    category=f"{prefix}{arm}",
                    gmv=1.0,
                    ordered=0,
                )
                scored.append(ScoredItem(item=item, raw_score=score, norm_score=score))
        return scored

    return inner


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
