"""
Seeded generator for the synthetic drifting-preference click dataset, plus the
reader/writer for its CSV format (gender,age,recommendation,reward).

Sampling runs on an integer-only xorshift64* stream seeded through SplitMix64, so
the same seed gives the same file on every platform:

    state ^= state >> 12; state ^= state << 25; state ^= state >> 27   (mod 2^64)
    output = state * 0x2545F4914F6CDD1D                                (mod 2^64)
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import pandas as pd

from core import (ArmRegistry, ConfigError, ContextSchema, DataError, InteractionRecord, ParseError,
                  SchemaViolationError, categorical, numeric)

logger = logging.getLogger(__name__)

GENDERS = ('m', 'f')
CATEGORIES = ('news', 'movies', 'sports', 'health')
AGE_BUCKETS = ('<30', '30-60', '>60')
CSV_COLUMNS = ['gender', 'age', 'recommendation', 'reward']

# Normalization layout for the (gender, age) context
SYNTHETIC_SCHEMA = ContextSchema((categorical('gender', sorted(GENDERS)), numeric('age', 0, 100)))

DEFAULT_DRIFT_ROW = 2500

MASK64 = (1 << 64) - 1
UNIT_BITS = 53


def age_bucket(age: int) -> str:
    if age < 30:
        return '<30'
    if age <= 60:
        return '30-60'
    return '>60'


def splitmix64(seed: int) -> int:
    z = (seed + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    """64-bit xorshift* generator; every sampling decision uses integer arithmetic only."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ConfigError(f"Seed must be unsigned, got {seed}")
        self.state = splitmix64(seed & MASK64) or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n < 1:
            raise ConfigError(f"Cannot sample below {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            value = self.next_u64()
            if value < limit:
                return value % n

    def bernoulli(self, p: float) -> bool:
        threshold = int(round(p * (1 << UNIT_BITS)))
        return (self.next_u64() >> (64 - UNIT_BITS)) < threshold


Cell = Tuple[str, str, str]


def all_cells() -> List[Cell]:
    return [(g, b, c) for g in GENDERS for b in AGE_BUCKETS for c in CATEGORIES]


@dataclass(frozen=True)
class RegimeSpec:
    """Click probabilities keyed by (gender, age bucket, category), active from start_row on."""
    start_row: int
    click_prob: Dict[Cell, float]

    def __post_init__(self):
        missing = [cell for cell in all_cells() if cell not in self.click_prob]
        if missing:
            raise ConfigError(f"Regime at row {self.start_row} is missing {len(missing)} cells, e.g. {missing[0]}")
        known = set(all_cells())
        for cell, p in self.click_prob.items():
            if cell not in known:
                raise ConfigError(f"Regime at row {self.start_row} has unknown cell {cell}")
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"Regime at row {self.start_row}: probability {p} for {cell} is outside [0, 1]")


@dataclass
class GeneratorConfig:
    regimes: List[RegimeSpec]
    n_rows: int = 5000
    seed: int = 7
    age_min: int = 13
    age_max: int = 90

    def validate(self):
        if self.n_rows < 1:
            raise ConfigError(f"Number of rows must be >= 1, got {self.n_rows}")
        if self.seed < 0:
            raise ConfigError(f"Seed must be unsigned, got {self.seed}")
        if self.age_min < 0 or self.age_min > self.age_max:
            raise ConfigError(f"Invalid age range [{self.age_min}, {self.age_max}]")
        if not self.regimes:
            raise ConfigError("At least one regime is required")
        if self.regimes[0].start_row != 0:
            raise ConfigError(f"First regime must start at row 0, got {self.regimes[0].start_row}")
        for previous, current in zip(self.regimes, self.regimes[1:]):
            if current.start_row <= previous.start_row:
                raise ConfigError(f"Regime start rows must increase: {current.start_row} after {previous.start_row}")


def _fill(table: Dict[Cell, float], category: str, p: float, gender: str = '*', bucket: str = '*'):
    for g, b, c in all_cells():
        if c == category and gender in ('*', g) and bucket in ('*', b):
            table[(g, b, c)] = p


def default_regimes(drift_row: int = DEFAULT_DRIFT_ROW) -> List[RegimeSpec]:
    """Two regimes: before the drift row health is rarely clicked, afterwards it dominates
    and interest in movies collapses; news and sports keep their gender split."""
    before: Dict[Cell, float] = {}
    _fill(before, 'health', 0.2)
    _fill(before, 'movies', 0.9, bucket='<30')
    _fill(before, 'movies', 0.8, bucket='30-60')
    _fill(before, 'movies', 0.6, bucket='>60')
    _fill(before, 'news', 0.8, gender='f')
    _fill(before, 'news', 0.2, gender='m')
    _fill(before, 'sports', 0.85, gender='m')
    _fill(before, 'sports', 0.2, gender='f')

    after = dict(before)
    _fill(after, 'health', 0.9)
    _fill(after, 'movies', 0.3, bucket='<30')
    _fill(after, 'movies', 0.15, bucket='30-60')
    _fill(after, 'movies', 0.1, bucket='>60')
    return [RegimeSpec(0, before), RegimeSpec(drift_row, after)]


def default_config(n_rows: int = 5000, seed: int = 7) -> GeneratorConfig:
    return GeneratorConfig(default_regimes(), n_rows=n_rows, seed=seed)


def parse_generator_config(text: str) -> GeneratorConfig:
    """Parse the key-value generator config.

    Lines: `rows N`, `seed N`, `ages MIN MAX`, `regime START_ROW`, and
    `click CATEGORY GENDER BUCKET PROB` where any of the three keys may be `*`.
    Each regime starts as a copy of the previous one.
    """
    settings = {'rows': 5000, 'seed': 7, 'ages': (13, 90)}
    tables: List[Tuple[int, Dict[Cell, float]]] = []
    for line_number, line in enumerate(text.splitlines(), 1):
        stripped = line.split('#', 1)[0].strip()
        if not stripped:
            continue
        parts = stripped.split()
        key = parts[0]
        try:
            if key in ('rows', 'seed') and len(parts) == 2:
                settings[key] = int(parts[1])
            elif key == 'ages' and len(parts) == 3:
                settings['ages'] = (int(parts[1]), int(parts[2]))
            elif key == 'regime' and len(parts) == 2:
                base = dict(tables[-1][1]) if tables else {}
                tables.append((int(parts[1]), base))
            elif key == 'click' and len(parts) == 5:
                if not tables:
                    raise ConfigError(f"Generator config line {line_number}: 'click' before any 'regime'")
                category, gender, bucket, p = parts[1], parts[2], parts[3], float(parts[4])
                if category != '*' and category not in CATEGORIES:
                    raise ConfigError(f"Generator config line {line_number}: unknown category '{category}'")
                if gender != '*' and gender not in GENDERS:
                    raise ConfigError(f"Generator config line {line_number}: unknown gender '{gender}'")
                if bucket != '*' and bucket not in AGE_BUCKETS:
                    raise ConfigError(f"Generator config line {line_number}: unknown age bucket '{bucket}'")
                for c in (CATEGORIES if category == '*' else (category,)):
                    _fill(tables[-1][1], c, p, gender=gender, bucket=bucket)
            else:
                raise ConfigError(f"Generator config line {line_number}: cannot parse '{stripped}'")
        except ValueError:
            raise ConfigError(f"Generator config line {line_number}: bad number in '{stripped}'")
    config = GeneratorConfig([RegimeSpec(start, table) for start, table in tables],
                             n_rows=settings['rows'], seed=settings['seed'],
                             age_min=settings['ages'][0], age_max=settings['ages'][1])
    config.validate()
    return config


def load_generator_config(path: str) -> GeneratorConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return parse_generator_config(f.read())
    except FileNotFoundError:
        raise ConfigError(f"Generator config not found: {path}")


def generate(config: GeneratorConfig) -> List[InteractionRecord]:
    """Draw gender, age, category and click for every row, using the regime active at that row."""
    config.validate()
    rng = XorShift64Star(config.seed)
    registry = ArmRegistry(len(CATEGORIES))
    records = []
    regime_index = 0
    age_span = config.age_max - config.age_min + 1

    for row in range(config.n_rows):
        while regime_index + 1 < len(config.regimes) and row >= config.regimes[regime_index + 1].start_row:
            regime_index += 1
            logger.info(f"Regime {regime_index} active from row {row}")
        regime = config.regimes[regime_index]

        gender = GENDERS[rng.below(2)]
        age = config.age_min + rng.below(age_span)
        category = CATEGORIES[rng.below(len(CATEGORIES))]
        p = regime.click_prob[(gender, age_bucket(age), category)]
        reward = 1.0 if rng.bernoulli(p) else 0.0
        records.append(InteractionRecord(row, (gender, age), registry.register(category), reward))

    logger.info(f"Generated {len(records)} rows with seed {config.seed} over {len(config.regimes)} regimes")
    return records


def write_csv(records: Sequence[InteractionRecord], path: str):
    rows = []
    for record in records:
        gender, age = record.raw_context
        if gender not in GENDERS:
            raise SchemaViolationError('gender', f"unknown value {gender!r} at position {record.position}")
        if record.arm.label not in CATEGORIES:
            raise SchemaViolationError('recommendation', f"unknown category {record.arm.label!r} at position {record.position}")
        if record.reward not in (0, 1):
            raise DataError(f"Reward must be 0 or 1, got {record.reward!r} at position {record.position}")
        rows.append({'gender': gender, 'age': int(age), 'recommendation': record.arm.label,
                     'reward': int(record.reward)})
    df = pd.DataFrame(rows, columns=CSV_COLUMNS)
    df.to_csv(path, index=False, lineterminator='\n')
    logger.info(f"Wrote {len(rows)} rows to {path}")


def _load_frame(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise DataError(f"Dataset not found: {path}")
    try:
        if path.lower().endswith(('.xlsx', '.xls')):
            df = pd.read_excel(path, dtype=str)
        else:
            df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty, expected a header row", path)
    except pd.errors.ParserError as e:
        raise ParseError(str(e).strip(), path)
    # Accept headers like "Gender" or " Reward "
    df.columns = [str(col).strip().lower() for col in df.columns]
    missing = [col for col in CSV_COLUMNS if col not in df.columns]
    if missing:
        raise ParseError(f"missing column(s) {', '.join(missing)}; found {', '.join(df.columns)}", path, 1)
    return df


def _parse_age(text: str, path: str, line: int) -> int:
    # Spreadsheets hand integers back as "33.0"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"age '{text}' is not an integer", path, line)
    if not value.is_integer():
        raise ParseError(f"age '{text}' is not an integer", path, line)
    return int(value)


def _records_from_frame(df: pd.DataFrame, path: str) -> List[InteractionRecord]:
    registry = ArmRegistry(len(CATEGORIES))
    records = []
    for idx, row in enumerate(df[CSV_COLUMNS].itertuples(index=False)):
        line = idx + 2  # +2 because of the header and 1-based line numbers
        values = ['' if pd.isna(v) else str(v).strip() for v in row]
        if any(v == '' for v in values):
            raise ParseError(f"expected {len(CSV_COLUMNS)} non-empty fields, got {values}", path, line)
        gender, age_text, category, reward_text = values
        gender, category = gender.lower(), category.lower()
        if gender not in GENDERS:
            raise SchemaViolationError('gender', f"unknown value '{gender}' ({path}, line {line})")
        if category not in CATEGORIES:
            raise SchemaViolationError('recommendation', f"unknown category '{category}' ({path}, line {line})")
        age = _parse_age(age_text, path, line)
        if reward_text not in ('0', '1'):
            raise ParseError(f"reward '{reward_text}' is not 0 or 1", path, line)
        records.append(InteractionRecord(idx, (gender, age), registry.register(category), float(reward_text)))
    return records


def read_csv(path: str) -> List[InteractionRecord]:
    """Read a gender,age,recommendation,reward file (spreadsheets are accepted too)."""
    records = _records_from_frame(_load_frame(path), path)
    logger.info(f"Read {len(records)} rows from {path}")
    return records
