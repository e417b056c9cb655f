import os
from logging import getLogger
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError, field_validator

from dynarank_cli.bandits import POLICIES, PolicyConfig
from dynarank_cli.catalog import Catalog, ScoredItem, read_catalog, write_catalog
from dynarank_cli.exceptions import ConfigError
from dynarank_cli.metrics import (
    DEFAULT_P,
    aggregate,
    dcg,
    page_dcg,
    paged_from_rows,
    percentage_gain,
    ranked_from_rows,
    session_gmv,
)
from dynarank_cli.pretrainer import (
    MlpParams,
    TrainConfig,
    generate_pairs,
    load_params,
    save_params,
    score_catalog,
    train,
)
from dynarank_cli.simulator import (
    MAX_PAGE_SIZE,
    MIN_PAGE_SIZE,
    ORACLE,
    ROUND_LOG_COLUMNS,
    SESSION_LOG_COLUMNS,
    ClickModel,
    NormalTsRanker,
    RevisedTsRanker,
    RoundLog,
    SessionPolicy,
    SessionRow,
    StaticRanker,
    UserProfile,
    run_case_study,
    run_session,
)
from dynarank_cli.synth import SynthSpec, synthesize_catalog
from dynarank_cli.utils import (
    ConfigSections,
    read_csv,
    sha256_text,
    split_list,
    write_csv,
    write_manifest,
)

logger = getLogger(__name__)

Mode = Literal["train", "score", "case-study", "pipeline"]

STATIC = "static"
DNN_MAB = "dnn-mab"
DNN_NORMAL_TS = "dnn-normal-ts"
VARIANTS = (STATIC, DNN_MAB, DNN_NORMAL_TS)

AGGREGATE_COLUMNS = ("n", "mean", "stderr")

# stream tags for np.random.default_rng([seed, tag, ...])
_SYNTH_STREAM = 2
_PAIR_STREAM = 3
_USER_STREAM = 4
_SESSION_STREAM = 5


class SessionConfig(BaseModel):
    sessions: int = Field(200, ge=1)
    page_size: int = Field(8, ge=MIN_PAGE_SIZE, le=MAX_PAGE_SIZE)
    max_pages: int = Field(8, ge=1)
    p: int = Field(DEFAULT_P, ge=1)
    click_prob_preferred: float = Field(0.9, ge=0, le=1)
    click_prob_other: float = Field(0.05, ge=0, le=1)
    order_prob_given_click: float = Field(0.5, ge=0, le=1)
    preferred_arms: Tuple[str, ...] = ()


class ExperimentConfig(BaseModel):
    mode: Mode
    seed: int = Field(0, ge=0)
    out: str = "out"
    runs: int = Field(10, ge=1)
    rounds: int = Field(10_000, ge=1)
    workers: int = Field(1, ge=1)
    catalog_path: Optional[str] = None
    params_path: Optional[str] = None
    synth: SynthSpec = SynthSpec()
    train: TrainConfig = TrainConfig()
    policies: Tuple[str, ...] = POLICIES
    policy: PolicyConfig = PolicyConfig()
    click_model: ClickModel = ClickModel()
    session: SessionConfig = SessionConfig()

    @field_validator("policies")
    @classmethod
    def known_policies(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        unknown = [name for name in value if name not in POLICIES + (ORACLE,)]
        if unknown:
            raise ValueError(f"unknown policies: {', '.join(unknown)}")
        if not value:
            raise ValueError("at least one policy is required")
        return value

    def config_hash(self) -> str:
        return sha256_text(self.model_dump_json(exclude={"out"}))


_LIST_KEYS = {
    ("train", "hidden"),
    ("policy", "offsets"),
    ("session", "preferred_arms"),
}


def _section(sections: ConfigSections, name: str) -> Dict[str, Any]:
    values: Dict[str, Any] = dict(sections.get(name, {}))
    for key, value in list(values.items()):
        if (name, key) in _LIST_KEYS and isinstance(value, str):
            values[key] = tuple(split_list(value))
    return values


def _click_model_section(sections: ConfigSections) -> Dict[str, Any]:
    raw = dict(sections.get("click_model", {}))
    values: Dict[str, Any] = {}
    if "arms" in raw:
        try:
            values["arm_params"] = tuple(
                tuple(float(part) for part in pair.split(":"))
                for pair in split_list(raw["arms"])
            )
        except ValueError:
            raise ConfigError(
                f"click_model.arms must look like a:b,a:b, got {raw['arms']!r}"
            )
    if "threshold" in raw:
        values["f_threshold"] = raw["threshold"]
    return values


def build_config(
    sections: ConfigSections, mode: str, overrides: Optional[Dict[str, Any]] = None
) -> ExperimentConfig:
    """
    Assemble the typed config from INI sections; non-None overrides win.
    """
    experiment = dict(sections.get("experiment", {}))
    catalog = dict(sections.get("catalog", {}))
    policy = _section(sections, "policy")

    values: Dict[str, Any] = {
        "mode": mode,
        **{
            k: v
            for k, v in experiment.items()
            if k in ExperimentConfig.model_fields and k != "mode"
        },
        "synth": {k: v for k, v in catalog.items() if k != "path"},
        "train": _section(sections, "train"),
        "policy": {k: v for k, v in policy.items() if k != "policy"},
        "click_model": _click_model_section(sections),
        "session": _section(sections, "session"),
    }
    if "path" in catalog:
        values["catalog_path"] = catalog["path"]
    if "policy" in policy:
        values["policies"] = tuple(split_list(policy["policy"]))

    for key, value in (overrides or {}).items():
        if value is None or value == ():
            continue
        section, _, field = key.rpartition(".")
        if section:
            values.setdefault(section, {})[field] = value
        else:
            values[field] = value

    try:
        config = ExperimentConfig(**values)
    except ValidationError as err:
        raise ConfigError(f"invalid configuration:\n{err}")

    if config.catalog_path is not None and not os.path.exists(config.catalog_path):
        raise ConfigError(f"catalog file {config.catalog_path} does not exist")
    if config.params_path is not None and not os.path.exists(config.params_path):
        raise ConfigError(f"parameter file {config.params_path} does not exist")
    return config


def _rng(config: ExperimentConfig, *stream: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, *stream])


def prepare_catalog(config: ExperimentConfig) -> Catalog:
    if config.catalog_path is not None:
        return read_catalog(config.catalog_path)
    return synthesize_catalog(config.synth, _rng(config, _SYNTH_STREAM))


def fit_pre_ranker(
    config: ExperimentConfig, catalog: Catalog, history: Optional[List[float]] = None
) -> MlpParams:
    train_config = config.train.model_copy(update={"seed": config.seed})
    pairs = generate_pairs(
        catalog,
        train_config.n_pairs,
        _rng(config, _PAIR_STREAM),
        mode=train_config.weight_mode,
    )
    return train(pairs, train_config, m_feat=catalog.m_feat, history=history)


def _out_path(config: ExperimentConfig, name: str) -> str:
    return os.path.join(config.out, name)


def _finish(config: ExperimentConfig, artifacts: List[str]) -> List[str]:
    manifest = write_manifest(
        config.out, config.mode, config.seed, config.config_hash(), artifacts
    )
    logger.info("wrote %d artifacts to %s", len(artifacts), config.out)
    return artifacts + [manifest]


def _write_aggregate(path: str, table: pd.DataFrame) -> str:
    return write_csv(
        path,
        list(table.columns),
        (
            tuple(v.item() if hasattr(v, "item") else v for v in row)
            for row in table.itertuples(index=False)
        ),
    )


def run_train(config: ExperimentConfig) -> List[str]:
    os.makedirs(config.out, exist_ok=True)
    catalog = prepare_catalog(config)
    history: List[float] = []
    params = fit_pre_ranker(config, catalog, history)

    params_path = _out_path(config, "params.txt")
    save_params(params, params_path)
    curve_path = write_csv(
        _out_path(config, "loss_curve.csv"),
        ["epoch", "mean_loss"],
        enumerate(history),
    )
    artifacts = [params_path, curve_path]
    if config.catalog_path is None:
        catalog_path = _out_path(config, "catalog.tsv")
        write_catalog(catalog, catalog_path)
        artifacts.append(catalog_path)
    return _finish(config, artifacts)


def score_rows(scored: Sequence[ScoredItem]) -> List[Tuple[str, str, float, float]]:
    return [
        (entry.item.id, entry.category, entry.raw_score, entry.norm_score)
        for entry in scored
    ]


def run_score(config: ExperimentConfig) -> List[str]:
    os.makedirs(config.out, exist_ok=True)
    catalog = prepare_catalog(config)
    if config.params_path is not None:
        params = load_params(config.params_path)
    else:
        params = fit_pre_ranker(config, catalog)
    scored = score_catalog(params, catalog)
    path = write_csv(
        _out_path(config, "scores.csv"),
        ["item_id", "category", "raw_score", "norm_score"],
        score_rows(scored),
    )
    return _finish(config, [path])


def write_round_log(path: str, logs: Sequence[RoundLog]) -> str:
    return write_csv(path, ROUND_LOG_COLUMNS, logs)


def read_round_log(path: str) -> List[RoundLog]:
    return [
        RoundLog(
            policy=row["policy"],
            seed=int(row["seed"]),
            round=int(row["round"]),
            arm=int(row["arm"]),
            item_id=row["item_id"],
            reward=int(row["reward"]),
            regret=float(row["regret"]),
            cum_reward=float(row["cum_reward"]),
            cum_regret=float(row["cum_regret"]),
        )
        for row in read_csv(path)
    ]


def run_case_study_mode(config: ExperimentConfig) -> List[str]:
    os.makedirs(config.out, exist_ok=True)
    logs = run_case_study(
        config.click_model,
        config.policies,
        rounds=config.rounds,
        runs=config.runs,
        base_seed=config.seed,
        config=config.policy,
        workers=config.workers,
    )
    artifacts = [write_round_log(_out_path(config, "round_log.csv"), logs)]
    for value in ("cum_reward", "cum_regret"):
        table = aggregate(logs, ["policy", "round"], value)
        artifacts.append(
            _write_aggregate(_out_path(config, f"aggregate_{value}.csv"), table)
        )
    return _finish(config, artifacts)


def write_session_log(path: str, rows: Sequence[SessionRow]) -> str:
    return write_csv(path, SESSION_LOG_COLUMNS, rows)


def read_session_log(path: str) -> List[SessionRow]:
    return [
        SessionRow(
            session=int(row["session"]),
            page=int(row["page"]),
            position=int(row["position"]),
            item_id=row["item_id"],
            category=row["category"],
            exposed=int(row["exposed"]),
            clicked=int(row["clicked"]),
            ordered=int(row["ordered"]),
            gmv=float(row["gmv"]),
        )
        for row in read_csv(path)
    ]


def make_session_policy(
    variant: str, scored: Sequence[ScoredItem], config: ExperimentConfig
) -> SessionPolicy:
    if variant == STATIC:
        return StaticRanker(scored)
    if variant == DNN_MAB:
        return RevisedTsRanker(scored, config.policy)
    if variant == DNN_NORMAL_TS:
        return NormalTsRanker(scored)
    raise ValueError(f"unknown pipeline variant {variant!r}")


def simulate_pipeline(
    config: ExperimentConfig,
    scored: Sequence[ScoredItem],
    categories: Sequence[str],
    variants: Sequence[str] = VARIANTS,
) -> Dict[str, List[SessionRow]]:
    """
    Replay every session once per variant. Within a session all variants
    face the same user and the same per-item click/order outcomes.
    """
    settings = config.session
    logs: Dict[str, List[SessionRow]] = {variant: [] for variant in variants}
    for session in range(settings.sessions):
        user_rng = _rng(config, _USER_STREAM, session)
        preferred = settings.preferred_arms or (
            categories[int(user_rng.integers(len(categories)))],
        )
        user = UserProfile(
            preferred_arms=tuple(preferred),
            click_prob_preferred=settings.click_prob_preferred,
            click_prob_other=settings.click_prob_other,
            order_prob_given_click=settings.order_prob_given_click,
        )
        outcomes = user.draw_outcomes(scored, user_rng)
        for index, variant in enumerate(variants):
            logs[variant].extend(
                run_session(
                    scored,
                    make_session_policy(variant, scored, config),
                    user,
                    settings.page_size,
                    settings.max_pages,
                    _rng(config, _SESSION_STREAM, session, index),
                    outcomes=outcomes,
                    session=session,
                )
            )
    return logs


def _by_session(rows: Sequence[SessionRow]) -> Dict[int, List[SessionRow]]:
    grouped: Dict[int, List[SessionRow]] = {}
    for row in rows:
        grouped.setdefault(row.session, []).append(row)
    return grouped


def page_dcg_records(
    logs: Dict[str, List[SessionRow]], p: int
) -> List[Dict[str, Any]]:
    records = []
    for variant, rows in logs.items():
        for session, session_rows in _by_session(rows).items():
            paged = paged_from_rows(session_rows)
            for page in range(len(paged.pages)):
                records.append(
                    {
                        "variant": variant,
                        "page": page,
                        "session": session,
                        "dcg": page_dcg(paged, page, p),
                    }
                )
    return records


def session_records(logs: Dict[str, List[SessionRow]]) -> List[Dict[str, Any]]:
    records = []
    for variant, rows in logs.items():
        for session, session_rows in _by_session(rows).items():
            records.append(
                {
                    "variant": variant,
                    "session": session,
                    "dcg": dcg(ranked_from_rows(session_rows)),
                    "gmv": session_gmv(session_rows),
                }
            )
    return records


def run_pipeline(config: ExperimentConfig) -> List[str]:
    os.makedirs(config.out, exist_ok=True)
    catalog = prepare_catalog(config)
    if config.params_path is not None:
        params = load_params(config.params_path)
    else:
        params = fit_pre_ranker(config, catalog)
    scored = score_catalog(params, catalog)

    logs = simulate_pipeline(config, scored, catalog.categories)
    artifacts = [
        write_session_log(_out_path(config, f"sessions_{variant}.csv"), rows)
        for variant, rows in logs.items()
    ]

    page_table = aggregate(
        page_dcg_records(logs, config.session.p), ["variant", "page"], "dcg"
    )
    artifacts.append(_write_aggregate(_out_path(config, "page_dcg.csv"), page_table))
    artifacts.append(
        _write_aggregate(
            _out_path(config, "page_gain.csv"),
            percentage_gain(page_table, "variant", DNN_MAB, STATIC, by="page"),
        )
    )

    records = session_records(logs)
    for value in ("dcg", "gmv"):
        artifacts.append(
            _write_aggregate(
                _out_path(config, f"session_{value}.csv"),
                aggregate(records, ["variant"], value),
            )
        )
    return _finish(config, artifacts)


RUNNERS = {
    "train": run_train,
    "score": run_score,
    "case-study": run_case_study_mode,
    "pipeline": run_pipeline,
}


def run(config: ExperimentConfig) -> List[str]:
    """
    Execute one experiment mode and return the written artifact paths.
    """
    logger.info("running %s with seed %d", config.mode, config.seed)
    return RUNNERS[config.mode](config)
