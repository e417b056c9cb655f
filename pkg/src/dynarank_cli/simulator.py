import zlib
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from logging import getLogger
from typing import Dict, List, NamedTuple, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from dynarank_cli.bandits import (
    BASELINE_POLICIES,
    REVISED_TS,
    BernoulliArmStats,
    PolicyConfig,
    RevisedTsConfig,
    feedback_revised_ts,
    init_revised_ts,
    select_baseline,
    select_next,
    update_baseline,
)
from dynarank_cli.catalog import SCORE_EPSILON, Item, ScoredItem
from dynarank_cli.exceptions import EmptyInputError, InvalidArmError

logger = getLogger(__name__)

ORACLE = "oracle"
CLICK_PROB_DRAWS = 1_000_000
CLICK_PROB_SEED = 20_200_731

MIN_PAGE_SIZE = 4
MAX_PAGE_SIZE = 20

DEFAULT_ARM_PARAMS = ((6.0, 2.0), (4.0, 4.0), (2.0, 6.0), (3.0, 3.0), (5.0, 5.0))

ROUND_LOG_COLUMNS = (
    "policy",
    "seed",
    "round",
    "arm",
    "item_id",
    "reward",
    "regret",
    "cum_reward",
    "cum_regret",
)
SESSION_LOG_COLUMNS = (
    "session",
    "page",
    "position",
    "item_id",
    "category",
    "exposed",
    "clicked",
    "ordered",
    "gmv",
)


class ClickModel(BaseModel):
    """
    Latent per-arm beta distributions and the global click threshold.
    """

    model_config = ConfigDict(frozen=True)

    arm_params: Tuple[Tuple[float, float], ...] = DEFAULT_ARM_PARAMS
    f_threshold: float = Field(0.5, ge=0, le=1)

    @field_validator("arm_params")
    @classmethod
    def positive_params(
        cls, value: Tuple[Tuple[float, float], ...]
    ) -> Tuple[Tuple[float, float], ...]:
        if not value:
            raise ValueError("a click model needs at least one arm")
        if any(a <= 0 or b <= 0 for a, b in value):
            raise ValueError("beta parameters must be positive")
        return value

    @property
    def n_arms(self) -> int:
        return len(self.arm_params)

    def check_arm(self, arm: int) -> Tuple[float, float]:
        if not 0 <= arm < self.n_arms:
            raise InvalidArmError(f"arm {arm} out of range for {self.n_arms} arms")
        return self.arm_params[arm]


class UserProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    preferred_arms: Tuple[str, ...] = ()
    click_prob_preferred: float = Field(0.9, ge=0, le=1)
    click_prob_other: float = Field(0.05, ge=0, le=1)
    order_prob_given_click: float = Field(0.5, ge=0, le=1)

    def click_prob(self, category: str) -> float:
        if category in self.preferred_arms:
            return self.click_prob_preferred
        return self.click_prob_other

    def draw_outcome(self, item: Item, rng: np.random.Generator) -> Tuple[bool, bool]:
        click_u, order_u = rng.random(2)
        clicked = bool(click_u < self.click_prob(item.category))
        ordered = clicked and bool(order_u < self.order_prob_given_click)
        return clicked, ordered

    def draw_outcomes(
        self, scored: Sequence[ScoredItem], rng: np.random.Generator
    ) -> Dict[str, Tuple[bool, bool]]:
        """
        Fix this user's reaction to every item up front, so that several
        rankings of the same session can be compared on equal terms.
        """
        return {entry.item.id: self.draw_outcome(entry.item, rng) for entry in scored}


class RoundLog(NamedTuple):
    policy: str
    seed: int
    round: int
    arm: int
    item_id: str
    reward: int
    regret: float
    cum_reward: float
    cum_regret: float


class SessionRow(NamedTuple):
    session: int
    page: int
    position: int
    item_id: str
    category: str
    exposed: int
    clicked: int
    ordered: int
    gmv: float


def simulate_click(model: ClickModel, arm: int, rng: np.random.Generator) -> int:
    """
    One click draw for one arm. The case study uses the batched form instead:
    draw_latent fixes f_item for every (round, arm) up front and a pull of
    arm c in round t is rewarded with int(latent[t, c] >= f_threshold).
    """
    a, b = model.check_arm(arm)
    return int(rng.beta(a, b) >= model.f_threshold)


def draw_latent(
    model: ClickModel, rounds: int, rng: np.random.Generator
) -> np.ndarray:
    """
    f_item for every (round, arm); row t is shared by all policies of a run.
    """
    a = np.array([p[0] for p in model.arm_params])
    b = np.array([p[1] for p in model.arm_params])
    return rng.beta(a, b, size=(rounds, model.n_arms))


@lru_cache(maxsize=None)
def _click_probability(a: float, b: float, threshold: float) -> float:
    draws = np.random.default_rng(CLICK_PROB_SEED).beta(a, b, size=CLICK_PROB_DRAWS)
    return float(np.mean(draws >= threshold))


def arm_click_prob(model: ClickModel, arm: int) -> float:
    """
    Monte Carlo estimate of P(f_item >= f_threshold) for one arm.
    """
    a, b = model.check_arm(arm)
    return _click_probability(a, b, model.f_threshold)


class ArmPolicy(Protocol):
    name: str

    def select(self, rng: np.random.Generator) -> Tuple[int, str]:
        ...

    def update(self, arm: int, reward: int) -> None:
        ...


class BaselineArmPolicy:
    def __init__(self, name: str, n_arms: int, config: PolicyConfig):
        self.name = name
        self.config = config
        self.stats = [BernoulliArmStats() for _ in range(n_arms)]

    def select(self, rng: np.random.Generator) -> Tuple[int, str]:
        return select_baseline(self.name, self.stats, self.config, rng), ""

    def update(self, arm: int, reward: int) -> None:
        update_baseline(self.name, self.stats, arm, reward)


class OracleArmPolicy:
    def __init__(self, best_arm: int):
        self.name = ORACLE
        self.best_arm = best_arm

    def select(self, rng: np.random.Generator) -> Tuple[int, str]:
        return self.best_arm, ""

    def update(self, arm: int, reward: int) -> None:
        pass


class RevisedTsArmPolicy:
    """
    Runs the revised sampler on a pure M-armed problem: every arm holds
    `virtual_items` interchangeable unit items and each pulled item is
    replaced by a fresh copy, so no arm ever runs dry.
    """

    def __init__(self, n_arms: int, config: PolicyConfig):
        self.name = REVISED_TS
        # unit items carry no history, adjusted scores restart from base
        self.config = config.model_copy(update={"score_update": "from-base"})
        offsets = list(config.offsets) + [0.0] * (n_arms - len(config.offsets))
        self.base_scores = [
            min(max(0.5 + offset, SCORE_EPSILON), 1.0 - SCORE_EPSILON)
            for offset in offsets[:n_arms]
        ]
        self.counters = [0] * n_arms
        self.arm_of = {f"arm{arm}": arm for arm in range(n_arms)}
        scored = [
            self._fresh_item(arm)
            for arm in range(n_arms)
            for _ in range(config.virtual_items)
        ]
        self.state = init_revised_ts(scored, self.config)
        self.pending: Dict[int, ScoredItem] = {}

    def _fresh_item(self, arm: int) -> ScoredItem:
        self.counters[arm] += 1
        item = Item(
            id=f"arm{arm}#{self.counters[arm]}",
            category=f"arm{arm}",
            gmv=0.0,
            ordered=0,
        )
        return ScoredItem(item=item, raw_score=0.0, norm_score=self.base_scores[arm])

    def select(self, rng: np.random.Generator) -> Tuple[int, str]:
        selection = select_next(self.state, self.config, rng)
        assert selection is not None, "unit inventories never run dry"
        arm = self.arm_of[selection.arm]
        self.state.arms[self.state.arm_index(selection.arm)].add_unselected(
            self._fresh_item(arm)
        )
        self.pending[arm] = selection.item
        return arm, selection.item.item.id

    def update(self, arm: int, reward: int) -> None:
        feedback_revised_ts(
            self.state, self.pending.pop(arm), clicked=reward == 1, config=self.config
        )


def make_arm_policy(name: str, model: ClickModel, config: PolicyConfig) -> ArmPolicy:
    if name == REVISED_TS:
        return RevisedTsArmPolicy(model.n_arms, config)
    if name in BASELINE_POLICIES:
        return BaselineArmPolicy(name, model.n_arms, config)
    if name == ORACLE:
        probs = [arm_click_prob(model, arm) for arm in range(model.n_arms)]
        return OracleArmPolicy(int(np.argmax(probs)))
    raise ValueError(f"unknown policy {name!r}")


def policy_rng(seed: int, policy: str) -> np.random.Generator:
    return np.random.default_rng([seed, 1, zlib.crc32(policy.encode("utf-8"))])


def environment_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0])


def run_policy(
    model: ClickModel,
    policy: str,
    rounds: int,
    seed: int,
    config: PolicyConfig,
) -> List[RoundLog]:
    """
    One run of one policy against the click model.
    """
    latent = draw_latent(model, rounds, environment_rng(seed))
    probs = [arm_click_prob(model, arm) for arm in range(model.n_arms)]
    best = max(probs)

    agent = make_arm_policy(policy, model, config)
    rng = policy_rng(seed, policy)
    logs = []
    cum_reward = 0.0
    cum_regret = 0.0
    for t in range(rounds):
        arm, item_id = agent.select(rng)
        reward = int(latent[t, arm] >= model.f_threshold)
        agent.update(arm, reward)
        regret = max(best - probs[arm], 0.0)
        cum_reward += reward
        cum_regret += regret
        logs.append(
            RoundLog(
                policy=policy,
                seed=seed,
                round=t + 1,
                arm=arm,
                item_id=item_id,
                reward=reward,
                regret=regret,
                cum_reward=cum_reward,
                cum_regret=cum_regret,
            )
        )
    logger.debug("%s seed %d: cumulative reward %.0f", policy, seed, cum_reward)
    return logs


def _run_policy_job(
    args: Tuple[ClickModel, str, int, int, PolicyConfig]
) -> List[RoundLog]:
    return run_policy(*args)


def run_case_study(
    model: ClickModel,
    policies: Sequence[str],
    rounds: int,
    runs: int,
    base_seed: int,
    config: Optional[PolicyConfig] = None,
    workers: int = 1,
) -> List[RoundLog]:
    """
    Every policy plays `runs` independent runs of `rounds` pulls.
    Run k uses seed base_seed + k and all policies of a run see the same
    latent draws.

    Returns: logs ordered by (policy, seed, round)
    """
    if rounds < 1 or runs < 1:
        raise ValueError("rounds and runs must be positive")
    if not policies:
        raise EmptyInputError("no policies to simulate")
    config = config or PolicyConfig()
    jobs = [
        (model, policy, rounds, base_seed + run, config)
        for policy in policies
        for run in range(runs)
    ]

    logger.info(
        "case study: %d policies x %d runs x %d rounds", len(policies), runs, rounds
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_run_policy_job, jobs))
    else:
        results = [_run_policy_job(job) for job in jobs]

    return [row for result in results for row in result]


class SessionPolicy(Protocol):
    def select_next(self, rng: np.random.Generator) -> Optional[ScoredItem]:
        ...

    def feedback(self, item: ScoredItem, clicked: bool) -> None:
        ...


class StaticRanker:
    """
    Serves items in descending pre-ranker score and ignores feedback.
    """

    def __init__(self, scored: Sequence[ScoredItem]):
        self.queue = sorted(scored, key=lambda entry: -entry.raw_score)
        self.cursor = 0

    def select_next(self, rng: np.random.Generator) -> Optional[ScoredItem]:
        if self.cursor >= len(self.queue):
            return None
        self.cursor += 1
        return self.queue[self.cursor - 1]

    def feedback(self, item: ScoredItem, clicked: bool) -> None:
        pass


class RevisedTsRanker:
    def __init__(self, scored: Sequence[ScoredItem], config: RevisedTsConfig):
        self.config = config
        self.state = init_revised_ts(scored, config)

    def select_next(self, rng: np.random.Generator) -> Optional[ScoredItem]:
        selection = select_next(self.state, self.config, rng)
        return selection.item if selection else None

    def feedback(self, item: ScoredItem, clicked: bool) -> None:
        feedback_revised_ts(self.state, item, clicked, self.config)


class NormalTsRanker:
    """
    Plain Beta(1 + clicks, 1 + skips) sampling over categories; inside the
    chosen category items come in pre-ranker order.
    """

    def __init__(self, scored: Sequence[ScoredItem]):
        queues: Dict[str, List[ScoredItem]] = {}
        for entry in sorted(scored, key=lambda e: -e.raw_score):
            queues.setdefault(entry.category, []).append(entry)
        self.arms = list(queues)
        self.queues = [queues[arm] for arm in self.arms]
        self.stats = [BernoulliArmStats() for _ in self.arms]
        self.arm_of = {
            entry.item.id: index
            for index, queue in enumerate(self.queues)
            for entry in queue
        }

    def select_next(self, rng: np.random.Generator) -> Optional[ScoredItem]:
        best_arm, best_r = None, -1.0
        for index, (queue, stats) in enumerate(zip(self.queues, self.stats)):
            if not queue:
                continue
            r = float(rng.beta(1.0 + stats.successes, 1.0 + stats.failures))
            if r > best_r:
                best_arm, best_r = index, r
        if best_arm is None:
            return None
        return self.queues[best_arm].pop(0)

    def feedback(self, item: ScoredItem, clicked: bool) -> None:
        update_baseline(
            "normal-ts", self.stats, self.arm_of[item.item.id], int(clicked)
        )


def run_session(
    scored: Sequence[ScoredItem],
    policy: SessionPolicy,
    user: UserProfile,
    page_size: int,
    max_pages: int,
    rng: np.random.Generator,
    outcomes: Optional[Dict[str, Tuple[bool, bool]]] = None,
    session: int = 0,
) -> List[SessionRow]:
    """
    Fill pages from the policy, then feed back each page in position order.
    Every rendered item counts as exposed.

    Args:
        outcomes: pre-drawn (clicked, ordered) per item id; drawn from rng
            on first exposure when omitted
    """
    if not MIN_PAGE_SIZE <= page_size <= MAX_PAGE_SIZE:
        raise ValueError(
            f"page_size must be in [{MIN_PAGE_SIZE}, {MAX_PAGE_SIZE}], got {page_size}"
        )
    if not scored:
        raise EmptyInputError("a session needs at least one item")

    rows: List[SessionRow] = []
    for page in range(max_pages):
        shown: List[ScoredItem] = []
        while len(shown) < page_size:
            entry = policy.select_next(rng)
            if entry is None:
                break
            shown.append(entry)
        if not shown:
            break

        for position, entry in enumerate(shown, start=1):
            if outcomes is not None:
                clicked, ordered = outcomes[entry.item.id]
            else:
                clicked, ordered = user.draw_outcome(entry.item, rng)
            policy.feedback(entry, clicked)
            rows.append(
                SessionRow(
                    session=session,
                    page=page,
                    position=position,
                    item_id=entry.item.id,
                    category=entry.category,
                    exposed=1,
                    clicked=int(clicked),
                    ordered=int(ordered),
                    gmv=entry.item.gmv,
                )
            )

        if len(shown) < page_size:
            break
    return rows
