"""
File formats: environments, model classes and policies as JSON, offline
datasets as JSON lines, per-episode records as CSV with round-trip floats.
"""

import functools
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Callable, Iterable, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel

from replearn.exceptions import ExperimentIOError, ReplearnValidationError
from replearn.lowrank.models import (
    Factorization,
    LowRankMDP,
    ModelClass,
    Policy,
    Provenance,
    TransitionDataset,
)
from replearn.online.models import EpisodeRecord

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])

EPISODE_COLUMNS = [
    "episode",
    "n",
    "model_index",
    "sq_tv",
    "optimism_margin_pistar",
    "value_pin",
    "bonus_mean",
    "potential_increment",
    "rollin_capped",
]
FLOAT_FORMAT = "%.17g"
FACTORIZATION_KEYS = ("num_states", "num_actions", "dim", "mu", "phi")


def surface_io_errors(func: F) -> F:
    """
    Decorator re-raising OS, JSON decoding and malformed-layout failures as
    ExperimentIOError carrying the path (the first argument). Validation errors
    raised by the parsed contents propagate unchanged.
    """

    @functools.wraps(func)
    def wrapper(path: Path | str, *args: Any, **kwargs: Any) -> Any:
        try:
            return func(path, *args, **kwargs)
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
            raise ExperimentIOError(
                f"{func.__name__} failed: {e}", path=str(path)
            ) from e

    return wrapper  # type: ignore[return-value]


def _write_json(path: Path | str, payload: Any) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    logger.info("Wrote %s.", target)


def _read_json(path: Path | str) -> Any:
    return json.loads(Path(path).read_text())


def sha256_of(payload: str | bytes) -> str:
    data = payload.encode() if isinstance(payload, str) else payload
    return hashlib.sha256(data).hexdigest()


# ===========================================
# Environments and model classes
# ===========================================
def factorization_to_dict(factorization: Factorization) -> dict[str, Any]:
    return {
        "num_states": factorization.num_states,
        "num_actions": factorization.num_actions,
        "dim": factorization.dim,
        "mu": factorization.mu.tolist(),
        "phi": factorization.phi.tolist(),
    }


def factorization_from_dict(payload: dict[str, Any]) -> Factorization:
    return Factorization(**{key: payload[key] for key in FACTORIZATION_KEYS})


def env_to_dict(env: LowRankMDP) -> dict[str, Any]:
    """
    One flat object: the factorization fields next to reward, gamma and
    init_dist.
    """
    return {
        **factorization_to_dict(env.factorization),
        "reward": env.reward.tolist(),
        "gamma": env.gamma,
        "init_dist": env.init_dist.tolist(),
    }


def env_from_dict(payload: dict[str, Any]) -> LowRankMDP:
    return LowRankMDP(
        factorization=factorization_from_dict(payload),
        reward=np.asarray(payload["reward"]),
        gamma=payload["gamma"],
        init_dist=np.asarray(payload["init_dist"]),
    )


def env_hash(env: LowRankMDP) -> str:
    return sha256_of(json.dumps(env_to_dict(env), sort_keys=True))


@surface_io_errors
def write_env(path: Path | str, env: LowRankMDP) -> None:
    _write_json(path, env_to_dict(env))


@surface_io_errors
def read_env(path: Path | str) -> LowRankMDP:
    return env_from_dict(_read_json(path))


def model_class_to_list(model_class: ModelClass) -> list[dict[str, Any]]:
    """
    A JSON array of factorization objects, each carrying the class's
    ``true_index`` (null when unknown).
    """
    return [
        {**factorization_to_dict(candidate), "true_index": model_class.true_index}
        for candidate in model_class.candidates
    ]


def model_class_from_list(payload: list[dict[str, Any]]) -> ModelClass:
    if not isinstance(payload, list):
        raise ReplearnValidationError("A model class file must hold a JSON array.")
    indices = {entry.get("true_index") for entry in payload}
    if len(indices) > 1:
        raise ReplearnValidationError(
            f"Candidates disagree on true_index: {sorted(map(str, indices))}."
        )
    return ModelClass(
        candidates=[factorization_from_dict(entry) for entry in payload],
        true_index=indices.pop() if indices else None,
    )


@surface_io_errors
def write_model_class(path: Path | str, model_class: ModelClass) -> None:
    _write_json(path, model_class_to_list(model_class))


@surface_io_errors
def read_model_class(path: Path | str) -> ModelClass:
    return model_class_from_list(_read_json(path))


# ===========================================
# Policies, reports and configs
# ===========================================
@surface_io_errors
def write_policy(path: Path | str, policy: Policy) -> None:
    _write_json(path, {"probs": policy.probs.tolist()})


@surface_io_errors
def read_policy(path: Path | str) -> Policy:
    return Policy(probs=np.asarray(_read_json(path)["probs"]))


@surface_io_errors
def write_model(path: Path | str, model: BaseModel) -> None:
    """
    Write a pydantic model (report, spec or config) as JSON.
    """
    _write_json(path, model.model_dump(mode="json"))


@surface_io_errors
def write_payload(path: Path | str, payload: Any) -> None:
    _write_json(path, payload)


@surface_io_errors
def read_payload(path: Path | str) -> Any:
    return _read_json(path)


# ===========================================
# Offline datasets
# ===========================================
@surface_io_errors
def write_dataset_jsonl(path: Path | str, data: TransitionDataset) -> None:
    """
    One {"s", "a", "s_next"} object per line.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = (json.dumps(triple.model_dump()) for triple in data.triples)
    target.write_text("".join(line + "\n" for line in lines))
    logger.info("Wrote %d triples to %s.", len(data), target)


@surface_io_errors
def read_dataset_jsonl(
    path: Path | str,
    num_states: int,
    num_actions: int,
    provenance: Provenance = Provenance.OFFLINE,
) -> TransitionDataset:
    rows = [
        json.loads(line) for line in Path(path).read_text().splitlines() if line
    ]
    return TransitionDataset(
        num_states=num_states,
        num_actions=num_actions,
        provenance=provenance,
        states=[row["s"] for row in rows],
        actions=[row["a"] for row in rows],
        next_states=[row["s_next"] for row in rows],
    )


# ===========================================
# CSV
# ===========================================
def records_frame(records: Iterable[EpisodeRecord]) -> pd.DataFrame:
    frame = pd.DataFrame(
        [record.model_dump() for record in records], columns=EPISODE_COLUMNS
    )
    return frame.astype({"rollin_capped": int})


@surface_io_errors
def write_frame_csv(path: Path | str, frame: pd.DataFrame) -> None:
    """
    Write a frame with full round-trip float formatting; missing values are
    empty fields.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(
        target,
        index=False,
        float_format=FLOAT_FORMAT,
        na_rep="",
        lineterminator="\n",
    )
    logger.info("Wrote %d rows to %s.", len(frame), target)


def write_records_csv(path: Path | str, records: Iterable[EpisodeRecord]) -> None:
    write_frame_csv(path, records_frame(records))


@surface_io_errors
def read_csv(path: Path | str) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
