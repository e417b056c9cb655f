import math
from dataclasses import dataclass, field
from logging import getLogger
from typing import List, Literal, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from dynarank_cli.catalog import Catalog, Item, ScoredItem, normalize_scores
from dynarank_cli.exceptions import (
    DimensionMismatchError,
    EmptyInputError,
    MissingClassError,
    TrainingDivergedError,
)

logger = getLogger(__name__)

PARAMS_MAGIC = "dynarank-mlp"
PARAMS_VERSION = 1

WeightMode = Literal["uniform", "log-gmv"]


class TrainConfig(BaseModel):
    margin: float = Field(1.0, gt=0)
    learning_rate: float = Field(0.05, gt=0)
    epochs: int = Field(30, ge=0)
    batch_size: int = Field(64, ge=1)
    seed: int = 0
    weight_mode: WeightMode = "log-gmv"
    hidden: Tuple[int, ...] = (32, 16, 8)
    init_scale: float = Field(0.05, gt=0)
    n_pairs: int = Field(2000, ge=1)

    @field_validator("hidden")
    @classmethod
    def positive_widths(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(width < 1 for width in value):
            raise ValueError("hidden widths must be positive")
        return value


@dataclass
class MlpParams:
    """
    Weights of the scoring network, (in, out) shaped, input to output.
    Every hidden layer uses a rectifier, the last layer is linear with one unit.
    Both branches of a pair are evaluated with this single instance.
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty and aligned")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"inconsistent layer shapes {w.shape} / {b.shape}")
        for upper, lower in zip(self.weights, self.weights[1:]):
            if upper.shape[1] != lower.shape[0]:
                raise ValueError("consecutive layer shapes do not chain")
        if self.weights[-1].shape[1] != 1:
            raise ValueError("output layer must have a single unit")

    @property
    def m_feat(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def shapes(self) -> List[Tuple[int, int]]:
        return [(int(w.shape[0]), int(w.shape[1])) for w in self.weights]

    def copy(self) -> "MlpParams":
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.weights + self.biases)


@dataclass(frozen=True)
class PairSample:
    pos: Item
    neg: Item
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.pos.ordered + self.neg.ordered != 1 or self.pos.ordered != 1:
            raise ValueError("a pair needs exactly one ordered item, in pos")
        if self.weight <= 0:
            raise ValueError("pair weight must be positive")


class Gradients(NamedTuple):
    loss: float
    weights: List[np.ndarray]
    biases: List[np.ndarray]


@dataclass
class _ForwardCache:
    activations: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)


def init_params(
    m_feat: int,
    rng: np.random.Generator,
    hidden: Sequence[int] = (32, 16, 8),
    init_scale: float = 0.05,
) -> MlpParams:
    """
    Uniform initialisation in [-init_scale, init_scale] for weights and biases.
    """
    widths = [m_feat, *hidden, 1]
    weights = [
        rng.uniform(-init_scale, init_scale, size=(fan_in, fan_out))
        for fan_in, fan_out in zip(widths, widths[1:])
    ]
    biases = [
        rng.uniform(-init_scale, init_scale, size=fan_out) for fan_out in widths[1:]
    ]
    return MlpParams(weights=weights, biases=biases)


def _forward_batch(
    params: MlpParams, inputs: np.ndarray
) -> Tuple[np.ndarray, _ForwardCache]:
    cache = _ForwardCache(activations=[inputs])
    activation = inputs
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = activation @ w + b
        cache.pre_activations.append(z)
        activation = z if layer == last else np.maximum(z, 0.0)
        cache.activations.append(activation)
    return activation[:, 0], cache


def forward_batch(params: MlpParams, inputs: np.ndarray) -> np.ndarray:
    """
    Raw scores for an (n, m_feat) input matrix.
    """
    if inputs.ndim != 2 or inputs.shape[1] != params.m_feat:
        raise DimensionMismatchError(
            f"expected inputs with {params.m_feat} columns, got shape {inputs.shape}"
        )
    scores, _ = _forward_batch(params, inputs)
    return scores


def forward(params: MlpParams, item: Item) -> float:
    if item.max_feature_index >= params.m_feat:
        raise DimensionMismatchError(
            f"item {item.id} has feature index {item.max_feature_index}, "
            f"network expects {params.m_feat} features"
        )
    return float(forward_batch(params, item.dense(params.m_feat)[None, :])[0])


def _backward(
    params: MlpParams, cache: _ForwardCache, d_scores: np.ndarray
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    grad_w: List[np.ndarray] = [np.zeros_like(w) for w in params.weights]
    grad_b: List[np.ndarray] = [np.zeros_like(b) for b in params.biases]
    delta = d_scores[:, None]
    for layer in reversed(range(len(params.weights))):
        grad_w[layer] = cache.activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            # rectifier subgradient is 0 at the kink
            delta = (delta @ params.weights[layer].T) * (
                cache.pre_activations[layer - 1] > 0
            )
    return grad_w, grad_b


def pair_weight(pos: Item, neg: Item, mode: WeightMode = "log-gmv") -> float:
    if mode == "uniform":
        return 1.0
    if mode == "log-gmv":
        return 1.0 + math.log1p(max(pos.gmv, neg.gmv))
    raise ValueError(f"unknown pair weight mode {mode!r}")


def pair_loss(
    y1: float, y2: float, t1: int, t2: int, margin: float, weight: float
) -> float:
    """
    Weighted hinge on the score difference of one labelled pair.
    """
    if t1 + t2 != 1:
        raise ValueError("exactly one item of a pair must be positive")
    return weight * max(0.0, margin - (y1 - y2) * (t1 - t2))


def generate_pairs(
    catalog: Catalog,
    count: int,
    rng: np.random.Generator,
    mode: WeightMode = "log-gmv",
) -> List[PairSample]:
    """
    Sample `count` (ordered, unordered) pairs uniformly with replacement.
    """
    positives = [item for item in catalog.items if item.ordered == 1]
    negatives = [item for item in catalog.items if item.ordered == 0]
    if not positives or not negatives:
        raise MissingClassError(
            "catalog needs at least one ordered and one unordered item, "
            f"found {len(positives)} ordered and {len(negatives)} unordered"
        )

    pos_idx = rng.integers(len(positives), size=count)
    neg_idx = rng.integers(len(negatives), size=count)
    pairs = []
    for i, j in zip(pos_idx, neg_idx):
        pos, neg = positives[i], negatives[j]
        pairs.append(PairSample(pos=pos, neg=neg, weight=pair_weight(pos, neg, mode)))
    return pairs


class _PairBatch(NamedTuple):
    pos: np.ndarray
    neg: np.ndarray
    weights: np.ndarray


def _stack_pairs(pairs: Sequence[PairSample], m_feat: int) -> _PairBatch:
    pos = np.zeros((len(pairs), m_feat))
    neg = np.zeros((len(pairs), m_feat))
    for row, pair in enumerate(pairs):
        for index, value in pair.pos.features:
            pos[row, index] = value
        for index, value in pair.neg.features:
            neg[row, index] = value
    weights = np.array([pair.weight for pair in pairs], dtype=np.float64)
    return _PairBatch(pos=pos, neg=neg, weights=weights)


def _batch_gradients(
    params: MlpParams, batch: _PairBatch, margin: float
) -> Gradients:
    y_pos, pos_cache = _forward_batch(params, batch.pos)
    y_neg, neg_cache = _forward_batch(params, batch.neg)
    slack = margin - (y_pos - y_neg)
    active = slack > 0
    n = len(batch.weights)
    loss = float(np.sum(batch.weights * np.where(active, slack, 0.0)) / n)

    d_pos = -batch.weights * active / n
    grad_w, grad_b = _backward(params, pos_cache, d_pos)
    neg_w, neg_b = _backward(params, neg_cache, -d_pos)
    return Gradients(
        loss=loss,
        weights=[a + b for a, b in zip(grad_w, neg_w)],
        biases=[a + b for a, b in zip(grad_b, neg_b)],
    )


def pair_gradients(
    params: MlpParams, pairs: Sequence[PairSample], margin: float
) -> Gradients:
    """
    Mean weighted pair loss and its gradient with respect to every parameter.
    """
    if not pairs:
        raise EmptyInputError("no pairs to evaluate")
    return _batch_gradients(params, _stack_pairs(pairs, params.m_feat), margin)


def mean_pair_loss(
    params: MlpParams, pairs: Sequence[PairSample], margin: float
) -> float:
    return pair_gradients(params, pairs, margin).loss


def _infer_m_feat(pairs: Sequence[PairSample]) -> int:
    return (
        max(
            max(pair.pos.max_feature_index, pair.neg.max_feature_index)
            for pair in pairs
        )
        + 1
    )


def train(
    pairs: Sequence[PairSample],
    config: TrainConfig,
    m_feat: Optional[int] = None,
    initial: Optional[MlpParams] = None,
    history: Optional[List[float]] = None,
) -> MlpParams:
    """
    Mini-batch SGD on the mean weighted hinge pair loss.

    Args:
        pairs: training pairs
        config: optimisation settings
        m_feat: input width, inferred from the pairs if omitted
        initial: starting parameters, drawn from config.seed if omitted
        history: if given, receives the mean training loss before the first
            epoch and after every epoch

    Returns: the parameters with the lowest recorded mean training loss
    """
    if not pairs:
        raise EmptyInputError("cannot train on an empty pair list")

    rng = np.random.default_rng(config.seed)
    if initial is None:
        m_feat = m_feat if m_feat is not None else _infer_m_feat(pairs)
        params = init_params(m_feat, rng, config.hidden, config.init_scale)
    else:
        params = initial.copy()

    data = _stack_pairs(pairs, params.m_feat)
    best_loss = _batch_gradients(params, data, config.margin).loss
    best = params.copy()
    if history is not None:
        history.append(best_loss)
    logger.info("initial mean pair loss %.6f over %d pairs", best_loss, len(pairs))

    for epoch in range(config.epochs):
        order = rng.permutation(len(pairs))
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = _PairBatch(data.pos[idx], data.neg[idx], data.weights[idx])
            grads = _batch_gradients(params, batch, config.margin)
            for layer in range(len(params.weights)):
                params.weights[layer] -= config.learning_rate * grads.weights[layer]
                params.biases[layer] -= config.learning_rate * grads.biases[layer]
            if not math.isfinite(grads.loss) or not params.is_finite():
                raise TrainingDivergedError(
                    f"non-finite loss or parameters in epoch {epoch + 1}"
                )

        epoch_loss = _batch_gradients(params, data, config.margin).loss
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(f"non-finite loss after epoch {epoch + 1}")
        if history is not None:
            history.append(epoch_loss)
        logger.info("epoch %d mean pair loss %.6f", epoch + 1, epoch_loss)
        if epoch_loss <= best_loss:
            best_loss = epoch_loss
            best = params.copy()

    return best


def score_catalog(params: MlpParams, catalog: Catalog) -> List[ScoredItem]:
    if params.m_feat != catalog.m_feat:
        raise DimensionMismatchError(
            f"network expects {params.m_feat} features, "
            f"catalog has {catalog.m_feat}"
        )
    if not catalog.items:
        return []
    raw = forward_batch(params, catalog.dense_matrix())
    normalized = normalize_scores(raw.tolist())
    return [
        ScoredItem(item=item, raw_score=float(r), norm_score=n)
        for item, r, n in zip(catalog.items, raw, normalized)
    ]


def dumps_params(params: MlpParams) -> str:
    """
    Versioned text form; floats use repr so a reload is bit-exact.
    """
    lines = [
        f"{PARAMS_MAGIC} {PARAMS_VERSION}",
        "shapes " + " ".join(f"{rows}x{cols}" for rows, cols in params.shapes),
    ]
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        lines.append(f"W{layer}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
        lines.append(f"b{layer}")
        lines.append(" ".join(repr(float(v)) for v in b))
    return "\n".join(lines) + "\n"


def loads_params(text: str) -> MlpParams:
    lines = text.splitlines()
    if not lines or lines[0].split() != [PARAMS_MAGIC, str(PARAMS_VERSION)]:
        raise ValueError("not a dynarank-mlp v1 parameter file")
    if len(lines) < 2 or not lines[1].startswith("shapes "):
        raise ValueError("missing shapes line")
    shapes = [
        tuple(int(dim) for dim in token.split("x")) for token in lines[1].split()[1:]
    ]
    # header, shapes, then per layer: W tag, rows, b tag, bias row
    expected = 2 + sum(rows + 3 for rows, _ in shapes)
    if len(lines) < expected:
        raise ValueError(
            f"truncated parameter file: {len(lines)} lines, expected {expected}"
        )

    cursor = 2
    weights, biases = [], []
    for layer, (rows, cols) in enumerate(shapes):
        if lines[cursor] != f"W{layer}":
            raise ValueError(f"expected W{layer} at line {cursor + 1}")
        rows_text = lines[cursor + 1 : cursor + 1 + rows]
        w = np.array(
            [[float(v) for v in line.split()] for line in rows_text], dtype=np.float64
        ).reshape(rows, cols)
        cursor += 1 + rows
        if lines[cursor] != f"b{layer}":
            raise ValueError(f"expected b{layer} at line {cursor + 1}")
        b = np.array([float(v) for v in lines[cursor + 1].split()], dtype=np.float64)
        cursor += 2
        weights.append(w)
        biases.append(b)
    return MlpParams(weights=weights, biases=biases)


def save_params(params: MlpParams, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_params(params))


def load_params(path: str) -> MlpParams:
    with open(path, "r", encoding="utf-8") as f:
        return loads_params(f.read())
