"""
Domain types, feature schemas and the context normalization rule shared by every
learner and pipeline, plus the error hierarchy the CLI maps onto exit codes.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

NUMERIC = 'numeric'
CATEGORICAL = 'categorical'


class BanditError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(BanditError):
    """Invalid flag, configuration file or environment value."""


class DataError(BanditError):
    """Input data that cannot be used."""


class ParseError(DataError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ''
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f", line {line}"
            where += ': '
        elif line is not None:
            where = f"line {line}: "
        super().__init__(f"{where}{message}")


class SchemaViolationError(DataError):
    def __init__(self, feature: str, message: str):
        self.feature = feature
        super().__init__(f"feature '{feature}': {message}")


class ArityError(DataError):
    """Length or index does not fit the expected layout."""


class UnknownArmError(DataError):
    """Arm has no learner yet."""


class UndefinedMetricError(DataError):
    """Metric requested over too few entries."""


class NumericOverflowError(BanditError):
    def __init__(self, message: str, position: Optional[int] = None):
        self.position = position
        suffix = f" (record position {position})" if position is not None else ''
        super().__init__(f"{message}{suffix}")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    lower: float = 0.0
    upper: float = 1.0
    categories: Tuple[str, ...] = ()
    _codes: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if not self.name or any(ch.isspace() for ch in self.name):
            raise ConfigError(f"Invalid feature name '{self.name}'")
        if self.kind == NUMERIC:
            if not (math.isfinite(self.lower) and math.isfinite(self.upper)) or self.lower >= self.upper:
                raise ConfigError(f"Feature '{self.name}': bounds must satisfy lower < upper, got [{self.lower}, {self.upper}]")
        elif self.kind == CATEGORICAL:
            if not self.categories:
                raise ConfigError(f"Feature '{self.name}': category list is empty")
            if len(set(self.categories)) != len(self.categories):
                raise ConfigError(f"Feature '{self.name}': duplicate categories in {list(self.categories)}")
            self._codes.update({c: i for i, c in enumerate(self.categories)})
        else:
            raise ConfigError(f"Feature '{self.name}': unknown kind '{self.kind}'")

    def encode(self, value: Any) -> float:
        """Map one raw value into [0, 1]."""
        if self.kind == NUMERIC:
            try:
                v = float(value)
            except (TypeError, ValueError):
                raise SchemaViolationError(self.name, f"expected a number, got {value!r}")
            if math.isnan(v):
                raise SchemaViolationError(self.name, "value is NaN")
            scaled = (v - self.lower) / (self.upper - self.lower)
            return min(1.0, max(0.0, scaled))

        code = self._codes.get(str(value))
        if code is None:
            raise SchemaViolationError(self.name, f"unknown category {value!r}")
        if len(self.categories) == 1:
            return 0.0
        return code / (len(self.categories) - 1)


def numeric(name: str, lower: float, upper: float) -> FeatureSpec:
    return FeatureSpec(name, NUMERIC, lower=float(lower), upper=float(upper))


def categorical(name: str, categories: Iterable[str]) -> FeatureSpec:
    return FeatureSpec(name, CATEGORICAL, categories=tuple(str(c) for c in categories))


def build_categorical(name: str, values: Iterable[Any]) -> FeatureSpec:
    """Categorical feature over the sorted distinct values seen in data."""
    return categorical(name, sorted({str(v) for v in values}))


@dataclass(frozen=True)
class ContextSchema:
    features: Tuple[FeatureSpec, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigError(f"Duplicate feature names in schema: {names}")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.features]


@dataclass(frozen=True)
class ContextVector:
    values: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ArmId:
    label: str
    index: int

    def __post_init__(self):
        if not self.label:
            raise ConfigError("Arm label must be non-empty")
        if self.index < 0:
            raise ArityError(f"Arm index must be non-negative, got {self.index}")


@dataclass(frozen=True)
class InteractionRecord:
    position: int
    raw_context: Tuple[Any, ...]
    arm: ArmId
    reward: float


def normalize_context(schema: ContextSchema, raw: Sequence[Any]) -> ContextVector:
    """Min-max scale numeric features (clamped) and index-scale categorical ones."""
    if len(raw) != len(schema.features):
        raise ArityError(f"Context has {len(raw)} values, schema expects {len(schema.features)} ({', '.join(schema.names)})")
    return ContextVector(tuple(spec.encode(value) for spec, value in zip(schema.features, raw)))


def arm_feature(arm: ArmId, total_arms: int) -> float:
    if total_arms < 1:
        raise ArityError(f"total_arms must be >= 1, got {total_arms}")
    if arm.index >= total_arms:
        raise ArityError(f"Arm '{arm.label}' index {arm.index} out of range for {total_arms} arms")
    if total_arms == 1:
        return 0.0
    return arm.index / (total_arms - 1)


class ArmRegistry:
    """Assigns arm indices in first-seen order, up to a fixed capacity."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError(f"Arm capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._arms: Dict[str, ArmId] = {}

    def resolve(self, label: str) -> ArmId:
        """The arm for `label`, or the one `register` would create, without storing it."""
        arm = self._arms.get(label)
        if arm is not None:
            return arm
        if len(self._arms) >= self.capacity:
            raise ArityError(f"Cannot register arm '{label}': capacity of {self.capacity} arms reached")
        return ArmId(label, len(self._arms))

    def register(self, label: str) -> ArmId:
        arm = self.resolve(label)
        if label not in self._arms:
            self._arms[label] = arm
            logger.debug(f"Registered arm '{label}' with index {arm.index}")
        return arm

    def get(self, label: str) -> Optional[ArmId]:
        return self._arms.get(label)

    def __contains__(self, label: str) -> bool:
        return label in self._arms

    def __len__(self) -> int:
        return len(self._arms)

    @property
    def arms(self) -> List[ArmId]:
        return sorted(self._arms.values(), key=lambda a: a.index)


def format_schema(schema: ContextSchema) -> str:
    """Serialize a schema as one `name kind params` line per feature."""
    lines = []
    for spec in schema.features:
        if spec.kind == NUMERIC:
            lines.append(f"{spec.name} {NUMERIC} {spec.lower!r} {spec.upper!r}")
        else:
            lines.append(f"{spec.name} {CATEGORICAL} {' '.join(spec.categories)}")
    return '\n'.join(lines) + '\n'


def parse_schema(text: str) -> ContextSchema:
    features = []
    for line_number, line in enumerate(text.splitlines(), 1):
        stripped = line.split('#', 1)[0].strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) < 3:
            raise ConfigError(f"Schema line {line_number}: expected 'name kind params', got '{stripped}'")
        name, kind, params = parts[0], parts[1], parts[2:]
        if kind == NUMERIC:
            if len(params) != 2:
                raise ConfigError(f"Schema line {line_number}: numeric feature needs 'lower upper'")
            try:
                lower, upper = float(params[0]), float(params[1])
            except ValueError:
                raise ConfigError(f"Schema line {line_number}: bounds must be numbers, got {params}")
            features.append(numeric(name, lower, upper))
        elif kind == CATEGORICAL:
            features.append(categorical(name, params))
        else:
            raise ConfigError(f"Schema line {line_number}: unknown kind '{kind}'")
    if not features:
        raise ConfigError("Schema defines no features")
    return ContextSchema(tuple(features))


def load_schema(path: str) -> ContextSchema:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return parse_schema(f.read())
    except FileNotFoundError:
        raise ConfigError(f"Schema file not found: {path}")


def schema_hash(schema: ContextSchema) -> str:
    return hashlib.sha256(format_schema(schema).encode('utf-8')).hexdigest()[:16]


def attach_position(error: BanditError, position: int) -> BanditError:
    """Record the stream position on an error that does not carry one yet."""
    if getattr(error, 'position', None) is None:
        error.position = position
        error.args = (f"{error} (record position {position})",)
    return error


CLICK = 'click'
RATING = 'rating'
TASKS = (CLICK, RATING)


@dataclass
class PredictionLog:
    """Aligned predicted/actual reward pairs, in stream order."""
    task: str
    entries: List[Tuple[int, float, float]] = field(default_factory=list)
    cold_start_count: int = 0

    def append(self, position: int, predicted: float, actual: float):
        if self.entries and position <= self.entries[-1][0]:
            raise ArityError(f"Log positions must increase: {position} after {self.entries[-1][0]}")
        if self.task == CLICK and actual not in (0, 1):
            raise DataError(f"Click log needs 0/1 actuals, got {actual!r} at position {position}")
        self.entries.append((position, float(predicted), float(actual)))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def positions(self) -> List[int]:
        return [e[0] for e in self.entries]

    @property
    def predicted(self) -> List[float]:
        return [e[1] for e in self.entries]

    @property
    def actual(self) -> List[float]:
        return [e[2] for e in self.entries]
