"""
Array of per-arm online learners: one SGD linear model per arm, a predict-then-fit
streaming step, the expected-reward query and snapshot export/import.

The arm learners only predict rewards for the logged action of each record;
`recommend` is a plain argmax over those predictions and performs no exploration.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from core import (ArityError, ArmId, ArmRegistry, BanditError, CLICK, ConfigError, ContextSchema,
                  DataError, InteractionRecord, ParseError, PredictionLog, RATING, TASKS,
                  UnknownArmError, arm_feature, attach_position, normalize_context, schema_hash)
from learners import (LOGISTIC, SQUARED, LinearModelState, export_state, import_state,
                      sgd_create, sgd_partial_fit, sgd_predict)

logger = logging.getLogger(__name__)

RATING_MIN = 1.0
RATING_MAX = 5.0

SNAPSHOT_SEPARATOR = '---'


def scale_reward(task: str, reward: float) -> float:
    """Rating rewards are fitted on [0, 1]; click rewards pass through."""
    if task == RATING:
        if not RATING_MIN <= reward <= RATING_MAX:
            raise DataError(f"Rating {reward!r} outside [{RATING_MIN:g}, {RATING_MAX:g}]")
        return (reward - RATING_MIN) / (RATING_MAX - RATING_MIN)
    return reward


def descale_prediction(task: str, prediction: float) -> float:
    if task == RATING:
        return prediction * (RATING_MAX - RATING_MIN) + RATING_MIN
    return prediction


@dataclass
class ArmLearnerArray:
    """The dictionary of arm learners plus everything needed to build their inputs."""
    schema: ContextSchema
    capacity: int
    task: str = CLICK
    learning_rate: float = 0.01
    l2_strength: float = 1e-4
    learners: Dict[str, LinearModelState] = field(default_factory=dict)
    registry: Optional[ArmRegistry] = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"Unknown task '{self.task}' (expected one of {', '.join(TASKS)})")
        if self.registry is None:
            self.registry = ArmRegistry(self.capacity)

    @property
    def mode(self) -> str:
        return LOGISTIC if self.task == CLICK else SQUARED

    @property
    def n_features(self) -> int:
        # context features plus the arm feature
        return len(self.schema) + 1

    @property
    def known_arms(self) -> List[ArmId]:
        return self.registry.arms


@dataclass(frozen=True)
class StepOutcome:
    prediction: Optional[float]
    was_cold_start: bool
    arm: ArmId


def _inputs(array: ArmLearnerArray, raw_context: Sequence[Any], arm: ArmId) -> np.ndarray:
    context = normalize_context(array.schema, raw_context)
    return np.array(context.values + (arm_feature(arm, array.capacity),), dtype=float)


def bandit_step(array: ArmLearnerArray, record: InteractionRecord) -> StepOutcome:
    """Predict the record's reward with its arm learner, then fit on it.

    An unseen arm gets a fresh zero learner that is fitted once and emits no prediction.
    """
    context = normalize_context(array.schema, record.raw_context)
    y = scale_reward(array.task, record.reward)
    arm = array.registry.resolve(record.arm.label)
    x = np.array(context.values + (arm_feature(arm, array.capacity),), dtype=float)

    learner = array.learners.get(arm.label)
    if learner is None:
        learner = sgd_create(array.n_features, array.mode, array.learning_rate, array.l2_strength)
        sgd_partial_fit(learner, x, y, position=record.position)
        # an arm is only known once its learner exists
        array.registry.register(arm.label)
        array.learners[arm.label] = learner
        logger.info(f"Created learner for arm '{arm.label}' (index {arm.index}) at position {record.position}")
        return StepOutcome(None, True, arm)

    prediction = sgd_predict(learner, x)
    sgd_partial_fit(learner, x, y, position=record.position)
    return StepOutcome(descale_prediction(array.task, prediction), False, arm)


def _resolve_arm(array: ArmLearnerArray, arm: Union[ArmId, str]) -> ArmId:
    label = arm.label if isinstance(arm, ArmId) else arm
    known = array.registry.get(label)
    if known is None or label not in array.learners:
        raise UnknownArmError(f"No learner for arm '{label}'")
    return known


def expected_reward(array: ArmLearnerArray, raw_context: Sequence[Any], arm: Union[ArmId, str]) -> float:
    """E[R | C, A] from the arm's learner, on the reward's own scale."""
    known = _resolve_arm(array, arm)
    x = _inputs(array, raw_context, known)
    return descale_prediction(array.task, sgd_predict(array.learners[known.label], x))


def recommend(array: ArmLearnerArray, raw_context: Sequence[Any]) -> ArmId:
    """Greedy argmax of expected reward over known arms; ties go to the lowest index."""
    arms = [a for a in array.known_arms if a.label in array.learners]
    if not arms:
        raise UnknownArmError("Cannot recommend: no arm has a learner yet")
    best_arm, best_value = None, None
    for arm in arms:
        value = expected_reward(array, raw_context, arm)
        if best_value is None or value > best_value:
            best_arm, best_value = arm, value
    return best_arm


def run_prequential(array: ArmLearnerArray, stream: Sequence[InteractionRecord], warmup_n: int) -> PredictionLog:
    """Test-then-train over a stream; the first warmup_n records are fit-only."""
    if warmup_n < 0 or warmup_n > len(stream):
        raise ConfigError(f"Warmup of {warmup_n} records does not fit a stream of {len(stream)}")
    log = PredictionLog(array.task)
    for i, record in enumerate(stream):
        try:
            outcome = bandit_step(array, record)
        except BanditError as e:
            raise attach_position(e, record.position)
        if i < warmup_n:
            continue
        if outcome.was_cold_start:
            log.cold_start_count += 1
            continue
        log.append(record.position, outcome.prediction, record.reward)
    logger.info(f"Bandit prequential run: {len(stream)} records, warmup {warmup_n}, "
                f"{len(log)} predictions logged, {log.cold_start_count} post-warmup cold starts, "
                f"{len(array.learners)} arm learners")
    return log


def export_array(array: ArmLearnerArray) -> str:
    """Plain-text snapshot: header, then one learner record per arm in index order."""
    lines = [
        f"task {array.task}",
        f"mode {array.mode}",
        f"capacity {array.capacity}",
        f"learning_rate {array.learning_rate!r}",
        f"l2_strength {array.l2_strength!r}",
        f"schema_hash {schema_hash(array.schema)}",
    ]
    for arm in array.known_arms:
        lines.append(f"arm {arm.index} {arm.label}")
    text = '\n'.join(lines) + '\n'
    for arm in array.known_arms:
        learner = array.learners.get(arm.label)
        if learner is None:
            continue
        text += f"{SNAPSHOT_SEPARATOR}\nlearner {arm.label}\n" + export_state(learner)
    return text


def import_array(text: str, schema: ContextSchema) -> ArmLearnerArray:
    blocks = text.split(f"{SNAPSHOT_SEPARATOR}\n")
    header = {}
    arms = []
    for line in blocks[0].splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(' ')
        if key == 'arm':
            index, _, label = value.partition(' ')
            if not index.isdigit() or not label:
                raise ParseError(f"Malformed snapshot arm line '{line}'")
            arms.append((int(index), label))
        else:
            header[key] = value.strip()
    for key in ('task', 'capacity', 'learning_rate', 'l2_strength', 'schema_hash'):
        if key not in header:
            raise ParseError(f"Snapshot header is missing '{key}'")
    if header['schema_hash'] != schema_hash(schema):
        raise ConfigError(f"Snapshot was taken with schema {header['schema_hash']}, "
                          f"current schema is {schema_hash(schema)}")

    try:
        array = ArmLearnerArray(schema, int(header['capacity']), header['task'],
                                float(header['learning_rate']), float(header['l2_strength']))
    except ValueError as e:
        raise ParseError(f"Malformed snapshot header: {e}")
    for index, label in sorted(arms):
        arm = array.registry.register(label)
        if arm.index != index:
            raise ParseError(f"Snapshot arm '{label}' has index {index}, expected {arm.index}")

    for block in blocks[1:]:
        first, _, body = block.partition('\n')
        if not first.startswith('learner '):
            raise ParseError(f"Snapshot learner block starts with '{first}'")
        label = first[len('learner '):]
        if label not in array.registry:
            raise ParseError(f"Snapshot has a learner for undeclared arm '{label}'")
        learner = import_state(body)
        if learner.n_features != array.n_features:
            raise ArityError(f"Learner for '{label}' has {learner.n_features} weights, expected {array.n_features}")
        array.learners[label] = learner
    return array
