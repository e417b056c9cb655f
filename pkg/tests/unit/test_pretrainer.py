import math
from collections import Counter
from typing import List

import numpy as np
import pytest
from pyfakefs.fake_filesystem import FakeFilesystem
from scipy import stats

from dynarank_cli.catalog import Catalog, Item
from dynarank_cli.exceptions import (
    DimensionMismatchError,
    MissingClassError,
    TrainingDivergedError,
)
from dynarank_cli.pretrainer import (
    MlpParams,
    PairSample,
    TrainConfig,
    dumps_params,
    forward,
    forward_batch,
    generate_pairs,
    init_params,
    load_params,
    loads_params,
    mean_pair_loss,
    pair_gradients,
    pair_loss,
    pair_weight,
    save_params,
    score_catalog,
    train,
)


def linear_params(weights: List[float], bias: float) -> MlpParams:
    return MlpParams(
        weights=[np.array(weights, dtype=float)[:, None]],
        biases=[np.array([bias])],
    )


def item(id: str, ordered: int, gmv: float = 1.0, **features: float) -> Item:
    return Item(
        id=id,
        category="c1",
        gmv=gmv,
        ordered=ordered,
        features=tuple(sorted((int(k[1:]), v) for k, v in features.items())),
    )


@pytest.mark.parametrize(
    "y1,y2,t1,t2,margin,weight,expected",
    [
        (1.0, 0.0, 1, 0, 1.0, 1.0, 0.0),
        (0.0, 0.0, 1, 0, 1.0, 2.0, 2.0),
        (0.0, 1.0, 1, 0, 1.0, 1.0, 2.0),
        (3.0, 0.5, 1, 0, 1.0, 1.0, 0.0),
        (0.2, 0.0, 1, 0, 1.0, 1.5, 1.2),
    ],
)
def test_pair_loss(y1, y2, t1, t2, margin, weight, expected) -> None:
    assert pair_loss(y1, y2, t1, t2, margin, weight) == pytest.approx(expected)


def test_pair_loss_symmetry(rng: np.random.Generator) -> None:
    for _ in range(100):
        y1, y2 = rng.normal(size=2)
        margin, weight = rng.uniform(0.1, 2.0, size=2)
        assert pair_loss(y1, y2, 1, 0, margin, weight) == pair_loss(
            y2, y1, 0, 1, margin, weight
        )
        loss = pair_loss(y1, y2, 1, 0, margin, weight)
        assert (loss == 0.0) == ((y1 - y2) >= margin)

    with pytest.raises(ValueError):
        pair_loss(0.0, 0.0, 1, 1, 1.0, 1.0)


def test_pair_weight() -> None:
    zero = item("a", 1, gmv=0.0)
    other = item("b", 0, gmv=0.0)
    assert pair_weight(zero, other, "log-gmv") == 1.0
    assert pair_weight(item("a", 1, gmv=math.e - 1), other) == pytest.approx(2.0)
    assert pair_weight(item("a", 1, gmv=1e4), other, "uniform") == 1.0
    assert pair_weight(item("a", 1, gmv=10), other) < pair_weight(
        item("a", 1, gmv=11), other
    )


def test_forward_examples(small_catalog: Catalog) -> None:
    zero = MlpParams(
        weights=[np.zeros((4, 3)), np.zeros((3, 1))],
        biases=[np.zeros(3), np.zeros(1)],
    )
    assert all(forward(zero, entry) == 0.0 for entry in small_catalog.items)

    # single path of unit weights through three rectified layers
    identity = MlpParams(
        weights=[
            np.array([[1.0], [0.0], [0.0], [0.0]]),
            np.array([[1.0]]),
            np.array([[1.0]]),
            np.array([[1.0]]),
        ],
        biases=[np.zeros(1)] * 4,
    )
    assert forward(identity, item("v", 0, x0=2.5)) == 2.5

    params = linear_params([1.0, 2.0, 3.0, 4.0], 0.5)
    raws = [forward(params, entry) for entry in small_catalog.items]
    assert raws == [3.0, 4.5, -5.25]


def test_forward_matches_matrix_oracle(rng: np.random.Generator) -> None:
    params = init_params(6, rng, hidden=(5, 4, 3), init_scale=1.0)
    inputs = rng.normal(size=(20, 6))

    activation = inputs
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        activation = np.where(activation @ w + b > 0, activation @ w + b, 0.0)
    expected = (activation @ params.weights[-1] + params.biases[-1]).ravel()

    np.testing.assert_allclose(forward_batch(params, inputs), expected, rtol=1e-10)


def test_forward_dimension_mismatch(rng: np.random.Generator) -> None:
    params = init_params(2, rng, hidden=(3,))
    with pytest.raises(DimensionMismatchError):
        forward(params, item("a", 0, x5=1.0))
    with pytest.raises(DimensionMismatchError):
        forward_batch(params, np.zeros((3, 4)))


def test_shared_parameters_score_both_branches(rng: np.random.Generator) -> None:
    params = init_params(3, rng, hidden=(4, 3), init_scale=1.0)
    pos = item("p", 1, gmv=3.0, x0=1.0, x2=0.5)
    neg = item("n", 0, gmv=1.0, x1=2.0)
    pair = PairSample(pos=pos, neg=neg, weight=pair_weight(pos, neg))

    expected = pair_loss(
        forward(params, pos), forward(params, neg), 1, 0, 2.0, pair.weight
    )
    assert mean_pair_loss(params, [pair], margin=2.0) == pytest.approx(expected)


def test_pair_sample_requires_one_positive() -> None:
    with pytest.raises(ValueError):
        PairSample(pos=item("a", 0), neg=item("b", 0))
    with pytest.raises(ValueError):
        PairSample(pos=item("a", 0), neg=item("b", 1))
    with pytest.raises(ValueError):
        PairSample(pos=item("a", 1), neg=item("b", 0), weight=0.0)


@pytest.mark.parametrize("point", range(10))
def test_gradient_check(point: int) -> None:
    rng = np.random.default_rng([7, point])
    params = init_params(4, rng, hidden=(5, 4, 3))
    for array in params.weights + params.biases:
        array[...] = rng.normal(0.0, 0.5, size=array.shape)

    pairs = []
    for k in range(3):
        pos = Item(
            id=f"p{k}",
            category="c1",
            gmv=float(rng.uniform(0, 50)),
            ordered=1,
            features=tuple((j, float(v)) for j, v in enumerate(rng.normal(size=4))),
        )
        neg = Item(
            id=f"n{k}",
            category="c1",
            gmv=float(rng.uniform(0, 50)),
            ordered=0,
            features=tuple((j, float(v)) for j, v in enumerate(rng.normal(size=4))),
        )
        pairs.append(PairSample(pos=pos, neg=neg, weight=pair_weight(pos, neg)))
    margin = 50.0
    analytic = pair_gradients(params, pairs, margin)

    step = 1e-5
    for layer in range(len(params.weights)):
        for array, grad in (
            (params.weights[layer], analytic.weights[layer]),
            (params.biases[layer], analytic.biases[layer]),
        ):
            for index in np.ndindex(array.shape):
                original = array[index]
                array[index] = original + step
                upper = mean_pair_loss(params, pairs, margin)
                array[index] = original - step
                lower = mean_pair_loss(params, pairs, margin)
                array[index] = original
                numeric = (upper - lower) / (2 * step)
                denominator = max(abs(numeric), abs(grad[index]), 1e-3)
                assert abs(numeric - grad[index]) / denominator < 1e-4


def test_generate_pairs_forced() -> None:
    catalog = Catalog(
        items=(item("a", 1, gmv=2.0), item("b", 0, gmv=4.0)),
        m_feat=1,
        categories=("c1",),
    )
    pairs = generate_pairs(catalog, 4, np.random.default_rng(0))
    assert len(pairs) == 4
    assert all(p.pos.id == "a" and p.neg.id == "b" for p in pairs)
    assert all(p.weight == pytest.approx(1 + math.log(5.0)) for p in pairs)


def test_generate_pairs_missing_class() -> None:
    catalog = Catalog(
        items=(item("a", 1), item("b", 1)), m_feat=1, categories=("c1",)
    )
    with pytest.raises(MissingClassError):
        generate_pairs(catalog, 4, np.random.default_rng(0))


def test_generate_pairs_uniform() -> None:
    items = [item(f"p{i}", 1) for i in range(10)] + [
        item(f"n{i}", 0) for i in range(10)
    ]
    catalog = Catalog(items=tuple(items), m_feat=1, categories=("c1",))
    pairs = generate_pairs(catalog, 10_000, np.random.default_rng(3))

    counts = Counter((pair.pos.id, pair.neg.id) for pair in pairs)
    assert len(counts) == 100
    assert stats.chisquare(list(counts.values())).pvalue > 1e-3


def separable_pairs(rng: np.random.Generator, count: int) -> List[PairSample]:
    pairs = []
    for k in range(count):
        pos = item(f"p{k}", 1, x0=float(rng.uniform(2.0, 3.0)), x1=float(rng.normal()))
        neg = item(f"n{k}", 0, x0=float(rng.uniform(0.0, 0.5)), x1=float(rng.normal()))
        pairs.append(PairSample(pos=pos, neg=neg))
    return pairs


def test_train_separable() -> None:
    pairs = separable_pairs(np.random.default_rng(11), 400)
    config = TrainConfig(
        epochs=200,
        learning_rate=0.05,
        batch_size=32,
        hidden=(16,),
        init_scale=0.5,
        weight_mode="uniform",
        seed=5,
    )
    history: List[float] = []
    params = train(pairs, config, m_feat=2, history=history)

    assert len(history) == config.epochs + 1
    final = mean_pair_loss(params, pairs, config.margin)
    assert final < 0.05 * history[0]
    assert params.is_finite()


def test_train_never_worse_than_start(rng: np.random.Generator) -> None:
    pairs = separable_pairs(rng, 50)
    config = TrainConfig(epochs=5, learning_rate=0.5, seed=1, hidden=(4, 4))
    history: List[float] = []
    params = train(pairs, config, m_feat=2, history=history)
    assert mean_pair_loss(params, pairs, config.margin) <= history[0]


def test_train_zero_epochs(rng: np.random.Generator) -> None:
    pairs = separable_pairs(rng, 10)
    config = TrainConfig(epochs=0, seed=9, hidden=(3, 2))
    params = train(pairs, config, m_feat=2)
    expected = init_params(2, np.random.default_rng(9), (3, 2), config.init_scale)
    for a, b in zip(params.weights + params.biases, expected.weights + expected.biases):
        np.testing.assert_array_equal(a, b)


def test_train_diverged(rng: np.random.Generator) -> None:
    pairs = separable_pairs(rng, 10)
    initial = linear_params([np.nan, 1.0], 0.0)
    with pytest.raises(TrainingDivergedError):
        train(pairs, TrainConfig(epochs=1), initial=initial)


def test_train_deterministic(rng: np.random.Generator) -> None:
    pairs = separable_pairs(rng, 30)
    config = TrainConfig(epochs=3, seed=4, hidden=(4,))
    first, second = train(pairs, config), train(pairs, config)
    for a, b in zip(first.weights, second.weights):
        np.testing.assert_array_equal(a, b)


def test_score_catalog(small_catalog: Catalog) -> None:
    zero = linear_params([0.0] * 4, 0.0)
    assert [s.norm_score for s in score_catalog(zero, small_catalog)] == [0.5] * 3

    scored = score_catalog(linear_params([1.0, 2.0, 3.0, 4.0], 0.5), small_catalog)
    assert [s.raw_score for s in scored] == [3.0, 4.5, -5.25]
    assert [s.item.id for s in scored] == ["sku-1", "sku-2", "sku-3"]
    assert np.array_equal(
        np.argsort([s.norm_score for s in scored]),
        np.argsort([s.raw_score for s in scored]),
    )

    with pytest.raises(DimensionMismatchError):
        score_catalog(linear_params([1.0, 2.0], 0.0), small_catalog)


def test_params_file_reproduces_scores(
    fs: FakeFilesystem, small_catalog: Catalog
) -> None:
    params = init_params(4, np.random.default_rng(2), hidden=(6, 3), init_scale=0.7)
    save_params(params, "/params.txt")

    with open("/params.txt") as f:
        header = f.read().splitlines()[:2]
    assert header == ["dynarank-mlp 1", "shapes 4x6 6x3 3x1"]

    loaded = load_params("/params.txt")
    assert [s.raw_score for s in score_catalog(loaded, small_catalog)] == [
        s.raw_score for s in score_catalog(params, small_catalog)
    ]


def test_truncated_params_text_is_rejected() -> None:
    params = init_params(3, np.random.default_rng(4), hidden=(2,), init_scale=0.5)
    lines = dumps_params(params).splitlines()
    assert loads_params("\n".join(lines)).weights[0].shape == (3, 2)

    for keep in range(len(lines)):
        with pytest.raises(ValueError):
            loads_params("\n".join(lines[:keep]))
