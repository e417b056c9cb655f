import math
from dataclasses import dataclass, field
from logging import getLogger
from typing import Dict, List, Literal, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, Field

from dynarank_cli.catalog import ScoredItem
from dynarank_cli.exceptions import (
    DoubleFeedbackError,
    EmptyInputError,
    InvalidArmError,
)

logger = getLogger(__name__)

REVISED_TS = "revised-ts"
NORMAL_TS = "normal-ts"
UCB1 = "ucb1"
EPS_GREEDY = "eps-greedy"
RANDOM = "random"

BASELINE_POLICIES = (NORMAL_TS, UCB1, EPS_GREEDY, RANDOM)
POLICIES = (REVISED_TS,) + BASELINE_POLICIES

SelectionRule = Literal["arm-first", "global-argmax"]
ScoreUpdate = Literal["compounding", "from-base"]

DEFAULT_OFFSETS = (0.4,)
DEFAULT_VIRTUAL_ITEMS = 10

_SMALLEST = float(np.nextafter(0.0, 1.0))
_LARGEST = float(np.nextafter(1.0, 0.0))


class RevisedTsConfig(BaseModel):
    theta1: float = Field(10.0, gt=0)
    theta2: float = Field(1.0, gt=0)
    theta3: float = Field(1.0, gt=0)
    scale: float = Field(10.0, gt=0)
    prior_alpha: float = Field(1.0, gt=0)
    prior_beta: float = Field(1.0, gt=0)
    selection_rule: SelectionRule = "arm-first"
    score_update: ScoreUpdate = "compounding"


class PolicyConfig(RevisedTsConfig):
    """
    Parameters shared by every policy of an experiment.

    `offsets` shift the per-arm initial score of the revised sampler in the
    case study; missing arms get 0. `virtual_items` is how many unit items
    each arm starts with, so it scales how much the initial scores weigh
    against feedback. The defaults stand for a pre-ranker that already
    favours arm 0, the best arm of the default click model.
    """

    epsilon: float = Field(0.1, ge=0, le=1)
    offsets: Tuple[float, ...] = DEFAULT_OFFSETS
    virtual_items: int = Field(DEFAULT_VIRTUAL_ITEMS, ge=1)


def beta_sample(alpha: float, beta: float, rng: np.random.Generator) -> float:
    """
    One draw from Beta(alpha, beta), kept strictly inside (0, 1).
    """
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"beta parameters must be positive, got ({alpha}, {beta})")
    return min(max(float(rng.beta(alpha, beta)), _SMALLEST), _LARGEST)


@dataclass
class ArmState:
    """
    Posterior and item bookkeeping of one category.

    unselected/scores/base are parallel: the remaining items (U), their
    adjusted scores and their pre-ranker scores. exposed is E, clicked is A.
    """

    arm: str
    alpha: float
    beta: float
    avg: float
    unselected: List[ScoredItem] = field(default_factory=list)
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    base: np.ndarray = field(default_factory=lambda: np.zeros(0))
    exposed: List[ScoredItem] = field(default_factory=list)
    clicked: List[ScoredItem] = field(default_factory=list)
    initial_count: int = 0

    def take(self, position: int) -> ScoredItem:
        item = self.unselected.pop(position)
        self.scores = np.delete(self.scores, position)
        self.base = np.delete(self.base, position)
        return item

    def add_unselected(self, item: ScoredItem) -> None:
        self.unselected.append(item)
        self.scores = np.append(self.scores, item.norm_score)
        self.base = np.append(self.base, item.norm_score)


@dataclass
class RevisedTsState:
    arms: List[ArmState]
    pending: Dict[str, int] = field(default_factory=dict)
    done: Set[str] = field(default_factory=set)

    def arm_index(self, arm: str) -> int:
        for index, state in enumerate(self.arms):
            if state.arm == arm:
                return index
        raise InvalidArmError(f"arm {arm!r} is not part of this state")

    @property
    def exhausted(self) -> bool:
        return all(not state.unselected for state in self.arms)


class Selection(NamedTuple):
    item: ScoredItem
    arm: str


def init_revised_ts(
    scored: Sequence[ScoredItem], config: RevisedTsConfig
) -> RevisedTsState:
    """
    Seed one beta posterior per category from the pre-ranker scores.
    Categories without items are left out.
    """
    if not scored:
        raise EmptyInputError("revised Thompson sampling needs at least one item")

    grouped: Dict[str, List[ScoredItem]] = {}
    for entry in scored:
        grouped.setdefault(entry.category, []).append(entry)

    arms = []
    for arm, items in grouped.items():
        y = np.array([entry.norm_score for entry in items], dtype=np.float64)
        total = float(y.sum())
        arms.append(
            ArmState(
                arm=arm,
                alpha=config.prior_alpha + total,
                beta=config.prior_beta + float((1.0 - y).sum()),
                avg=total / len(items),
                unselected=list(items),
                scores=y.copy(),
                base=y.copy(),
                initial_count=len(items),
            )
        )
    logger.debug("initialised %d arms from %d items", len(arms), len(scored))
    return RevisedTsState(arms=arms)


def select_next(
    state: RevisedTsState, config: RevisedTsConfig, rng: np.random.Generator
) -> Optional[Selection]:
    """
    Pull arms once: sample every non-empty arm, boost its remaining scores by
    (1 + r / theta1) and take one item out of U.

    Returns: the chosen item and its arm, or None once every U is empty
    """
    best_r = -1.0
    best_arm: Optional[int] = None
    best_score = -math.inf
    best_global: Optional[Tuple[int, int]] = None

    for index, arm in enumerate(state.arms):
        if not arm.unselected:
            continue
        r = beta_sample(arm.alpha, arm.beta, rng)
        factor = 1.0 + r / config.theta1
        if config.score_update == "compounding":
            arm.scores *= factor
        else:
            arm.scores = arm.base * factor

        if r > best_r:
            best_r, best_arm = r, index
        position = int(np.argmax(arm.scores))
        if arm.scores[position] > best_score:
            best_score = float(arm.scores[position])
            best_global = (index, position)

    if best_arm is None:
        return None

    if config.selection_rule == "arm-first":
        chosen = best_arm
        position = int(np.argmax(state.arms[chosen].scores))
    else:
        assert best_global is not None
        chosen, position = best_global

    arm_state = state.arms[chosen]
    item = arm_state.take(position)
    state.pending[item.item.id] = chosen
    return Selection(item=item, arm=arm_state.arm)


def feedback_revised_ts(
    state: RevisedTsState, item: ScoredItem, clicked: bool, config: RevisedTsConfig
) -> RevisedTsState:
    """
    Register one exposure. The item joins E (or A) before the posterior update.
    """
    item_id = item.item.id
    if item_id in state.done:
        raise DoubleFeedbackError(f"item {item_id!r} already received feedback")
    if item_id not in state.pending:
        raise ValueError(f"item {item_id!r} was not selected by this policy")

    arm = state.arms[state.pending.pop(item_id)]
    state.done.add(item_id)

    if clicked:
        arm.clicked.append(item)
        arm.alpha += (
            arm.avg * (len(arm.clicked) / max(len(arm.exposed), 1)) * config.theta3
        )
    else:
        arm.exposed.append(item)
        arm.beta += (
            (1.0 - arm.avg)
            * (1.0 - math.exp(-len(arm.exposed) / config.scale))
            * config.theta2
        )
    return state


@dataclass
class BernoulliArmStats:
    pulls: int = 0
    successes: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.successes <= self.pulls:
            raise ValueError("need 0 <= successes <= pulls")

    @property
    def failures(self) -> int:
        return self.pulls - self.successes

    @property
    def mean(self) -> float:
        return self.successes / self.pulls if self.pulls else 0.0


def select_baseline(
    policy: str,
    stats: Sequence[BernoulliArmStats],
    config: PolicyConfig,
    rng: np.random.Generator,
) -> int:
    """
    Pick an arm with one of the reference policies. Ties go to the lowest index.
    """
    n_arms = len(stats)
    if n_arms < 1:
        raise EmptyInputError("need at least one arm")

    if policy == NORMAL_TS:
        successes = np.array([s.successes for s in stats], dtype=np.float64)
        failures = np.array([s.failures for s in stats], dtype=np.float64)
        return int(np.argmax(rng.beta(1.0 + successes, 1.0 + failures)))

    if policy == UCB1:
        for arm, s in enumerate(stats):
            if s.pulls == 0:
                return arm
        total = sum(s.pulls for s in stats)
        pulls = np.array([s.pulls for s in stats], dtype=np.float64)
        means = np.array([s.mean for s in stats], dtype=np.float64)
        return int(np.argmax(means + np.sqrt(2.0 * math.log(total) / pulls)))

    if policy == EPS_GREEDY:
        if rng.random() < config.epsilon:
            return int(rng.integers(n_arms))
        return int(np.argmax([s.mean for s in stats]))

    if policy == RANDOM:
        return int(rng.integers(n_arms))

    raise ValueError(f"unknown baseline policy {policy!r}")


def update_baseline(
    policy: str, stats: List[BernoulliArmStats], arm: int, reward: int
) -> List[BernoulliArmStats]:
    if not 0 <= arm < len(stats):
        raise InvalidArmError(f"arm {arm} out of range for {len(stats)} arms")
    if reward not in (0, 1):
        raise ValueError(f"reward must be 0 or 1, got {reward}")
    stats[arm].pulls += 1
    stats[arm].successes += reward
    return stats
