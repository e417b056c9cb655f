import math
from logging import getLogger
from typing import Dict, List

import numpy as np
from pydantic import BaseModel, Field

from dynarank_cli.catalog import Catalog, Item
from dynarank_cli.exceptions import InfeasibleSpecError

logger = getLogger(__name__)

FEATURE_DECIMALS = 4
EXTRA_FEATURES = 2


class SynthSpec(BaseModel):
    """
    Parameters of a synthetic catalog. Each category owns a sparse signature
    vector; items are their category's signature plus noise. A hidden taste
    direction decides which items get ordered.
    """

    n_items: int = Field(100, ge=1)
    n_categories: int = Field(5, ge=1)
    m_feat: int = Field(32, ge=1)
    signature_size: int = Field(6, ge=1)
    noise_std: float = Field(0.3, ge=0)
    gmv_mu: float = 3.0
    gmv_sigma: float = Field(1.0, ge=0)
    positive_rate: float = Field(0.3, gt=0, lt=1)


def _signatures(spec: SynthSpec, rng: np.random.Generator) -> List[np.ndarray]:
    signatures: List[np.ndarray] = []
    supports = set()
    while len(signatures) < spec.n_categories:
        support = tuple(
            sorted(rng.choice(spec.m_feat, size=spec.signature_size, replace=False))
        )
        vector = np.zeros(spec.m_feat)
        vector[list(support)] = rng.normal(1.0, 0.5, size=spec.signature_size)
        if support in supports and spec.m_feat > spec.signature_size:
            continue
        supports.add(support)
        signatures.append(vector)
    return signatures


def _label(quality: np.ndarray, members: List[int], rate: float) -> Dict[int, int]:
    if len(members) == 1:
        return {members[0]: int(quality[members[0]] > np.median(quality))}
    n_pos = min(max(1, int(round(rate * len(members)))), len(members) - 1)
    ranked = sorted(members, key=lambda i: (-quality[i], i))
    return {i: int(rank < n_pos) for rank, i in enumerate(ranked)}


def synthesize_catalog(spec: SynthSpec, rng: np.random.Generator) -> Catalog:
    """
    Build a balanced catalog; item i goes to category i mod M.
    With N >= 2M every category holds at least one ordered and one
    unordered item.
    """
    if spec.n_items < spec.n_categories:
        raise InfeasibleSpecError(
            f"{spec.n_items} items cannot cover {spec.n_categories} categories"
        )
    if spec.signature_size > spec.m_feat:
        raise InfeasibleSpecError("signature_size exceeds m_feat")
    distinct = math.comb(spec.m_feat, spec.signature_size)
    if spec.m_feat > spec.signature_size and distinct < spec.n_categories:
        raise InfeasibleSpecError(
            f"only {distinct} distinct signatures of size {spec.signature_size} "
            f"in {spec.m_feat} features for {spec.n_categories} categories"
        )

    categories = [f"c{k + 1}" for k in range(spec.n_categories)]
    signatures = _signatures(spec, rng)
    taste = rng.normal(size=spec.m_feat)

    features = np.zeros((spec.n_items, spec.m_feat))
    for i in range(spec.n_items):
        signature = signatures[i % spec.n_categories]
        support = set(np.flatnonzero(signature).tolist())
        support.update(
            rng.choice(spec.m_feat, size=min(EXTRA_FEATURES, spec.m_feat)).tolist()
        )
        for index in sorted(support):
            features[i, index] = signature[index] + rng.normal(0.0, spec.noise_std)
    features = np.round(features, FEATURE_DECIMALS)
    quality = features @ taste

    labels: Dict[int, int] = {}
    for k in range(spec.n_categories):
        members = list(range(k, spec.n_items, spec.n_categories))
        labels.update(_label(quality, members, spec.positive_rate))

    gmvs = np.round(rng.lognormal(spec.gmv_mu, spec.gmv_sigma, size=spec.n_items), 2)
    width = max(5, int(math.log10(spec.n_items)) + 1)
    items = []
    for i in range(spec.n_items):
        nonzero = np.flatnonzero(features[i])
        items.append(
            Item(
                id=f"item{i:0{width}d}",
                category=categories[i % spec.n_categories],
                gmv=float(gmvs[i]),
                ordered=labels[i],
                features=tuple((int(j), float(features[i, j])) for j in nonzero),
            )
        )

    logger.info(
        "synthesized %d items over %d categories, %d ordered",
        len(items),
        len(categories),
        sum(labels.values()),
    )
    return Catalog(items=tuple(items), m_feat=spec.m_feat, categories=tuple(categories))
