"""
Prequential metrics and experiment protocols: tumbling-window accuracy, average
accuracy, RMSE and RMSE per round, the static / single-SGD / bandit runners, the
side-by-side comparison and the report files.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from bandit import ArmLearnerArray, descale_prediction, run_prequential, scale_reward
from core import (ArmRegistry, BanditError, CLICK, ConfigError, ContextSchema, DataError, InteractionRecord,
                  PredictionLog, RATING, UndefinedMetricError, arm_feature, attach_position, normalize_context)
from learners import (CLASSIFICATION, LOGISTIC, REGRESSION, SQUARED, LinearModelState, TreeParams,
                      ols_fit, ols_predict, sgd_create, sgd_partial_fit, sgd_predict, tree_fit, tree_predict)

logger = logging.getLogger(__name__)

STATIC_TREE = 'static-tree'
STATIC_OLS = 'static-ols'
ONLINE_SGD = 'online-sgd'
BANDIT_ARRAY = 'bandit-array'
ALGORITHMS = (STATIC_TREE, STATIC_OLS, ONLINE_SGD, BANDIT_ARRAY)
STATIC_ALGORITHMS = (STATIC_TREE, STATIC_OLS)

FLOAT_FORMAT = '%.6f'

# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass
class AccuracySeries:
    window_size: int
    values: List[float] = field(default_factory=list)
    correct: List[int] = field(default_factory=list)
    sizes: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class RoundsRMSE:
    values: List[float]
    requested: int
    round_size: int

    @property
    def shortfall(self) -> int:
        return self.requested - len(self.values)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))


def _clamped(log: PredictionLog) -> np.ndarray:
    predicted = np.asarray(log.predicted, dtype=float)
    if log.task == RATING:
        return np.clip(predicted, 1.0, 5.0)
    return predicted


def correct_mask(log: PredictionLog, rating_tolerance: int = 0) -> np.ndarray:
    """Per-entry correctness: thresholded click at 0.5, or rounded rating within tolerance."""
    predicted = _clamped(log)
    actual = np.asarray(log.actual, dtype=float)
    if log.task == CLICK:
        return (predicted >= 0.5) == (actual == 1.0)
    rounded = np.floor(predicted + 0.5)
    return np.abs(rounded - actual) <= rating_tolerance


def windowed_accuracy(log: PredictionLog, window_size: int = 20, rating_tolerance: int = 0) -> AccuracySeries:
    """Accuracy over consecutive non-overlapping windows; a trailing partial window is kept."""
    if window_size < 1:
        raise ConfigError(f"Window size must be >= 1, got {window_size}")
    series = AccuracySeries(window_size)
    mask = correct_mask(log, rating_tolerance)
    for start in range(0, len(mask), window_size):
        window = mask[start:start + window_size]
        hits = int(window.sum())
        series.correct.append(hits)
        series.sizes.append(len(window))
        series.values.append(hits / len(window))
    return series


def average_accuracy(source: Union[AccuracySeries, PredictionLog], rating_tolerance: int = 0) -> float:
    """Total correct over total entries (not the mean of the window means)."""
    if isinstance(source, AccuracySeries):
        total = sum(source.sizes)
        if total == 0:
            raise UndefinedMetricError("Average accuracy of an empty series is undefined")
        return sum(source.correct) / total
    if len(source) == 0:
        raise UndefinedMetricError("Average accuracy of an empty log is undefined")
    return float(correct_mask(source, rating_tolerance).mean())


def _rmse(predicted: np.ndarray, actual: np.ndarray) -> float:
    return math.sqrt(float(np.mean((predicted - actual) ** 2)))


def rmse(log: PredictionLog) -> float:
    if len(log) == 0:
        raise UndefinedMetricError("RMSE of an empty log is undefined")
    return _rmse(_clamped(log), np.asarray(log.actual, dtype=float))


def rounds_rmse(log: PredictionLog, round_size: int = 1000, rounds: int = 10) -> RoundsRMSE:
    """RMSE per consecutive block of round_size entries, at most `rounds` blocks."""
    if round_size < 1 or rounds < 1:
        raise ConfigError(f"Round size and round count must be >= 1, got {round_size} and {rounds}")
    if len(log) < round_size:
        raise UndefinedMetricError(f"Log of {len(log)} entries is shorter than one round of {round_size}")
    predicted = _clamped(log)
    actual = np.asarray(log.actual, dtype=float)
    blocks = min(rounds, len(log) // round_size)
    values = [_rmse(predicted[i * round_size:(i + 1) * round_size], actual[i * round_size:(i + 1) * round_size])
              for i in range(blocks)]
    result = RoundsRMSE(values, rounds, round_size)
    if result.shortfall:
        logger.warning(f"Only {blocks} of {rounds} RMSE rounds of {round_size} entries fit in {len(log)} entries")
    return result


# ---------------------------------------------------------------------------
# Protocol runners
# ---------------------------------------------------------------------------

def _feature_rows(records: Sequence[InteractionRecord], schema: ContextSchema, registry: ArmRegistry) -> List[List[float]]:
    rows = []
    for record in records:
        try:
            context = normalize_context(schema, record.raw_context)
            arm = registry.register(record.arm.label)
        except BanditError as e:
            raise attach_position(e, record.position)
        rows.append(list(context.values) + [arm_feature(arm, registry.capacity)])
    return rows


def run_static(algorithm: str, records: Sequence[InteractionRecord], schema: ContextSchema, capacity: int,
               task: str, train_n: int, tree_params: Optional[TreeParams] = None) -> PredictionLog:
    """Fit a tree or OLS once on the first train_n records and predict every later one."""
    if not 0 < train_n < len(records):
        raise ConfigError(f"Training size {train_n} must be between 1 and {len(records) - 1}")
    rows = _feature_rows(records, schema, ArmRegistry(capacity))
    targets = [record.reward for record in records]
    train_rows, train_targets = rows[:train_n], targets[:train_n]

    if algorithm == STATIC_TREE:
        tree_task = CLASSIFICATION if task == CLICK else REGRESSION
        model = tree_fit(list(zip(train_rows, train_targets)), tree_params, task=tree_task)
        predict = lambda features: tree_predict(model, features)
    elif algorithm == STATIC_OLS:
        model = ols_fit(train_rows, train_targets)
        predict = lambda features: ols_predict(model, features)
    else:
        raise ConfigError(f"'{algorithm}' is not a static algorithm")

    log = PredictionLog(task)
    for record, features in zip(records[train_n:], rows[train_n:]):
        log.append(record.position, predict(features), record.reward)
    logger.info(f"{algorithm}: trained on {train_n} records, predicted {len(log)}")
    return log


def run_single_prequential(state: LinearModelState, records: Sequence[InteractionRecord], schema: ContextSchema,
                           capacity: int, task: str, warmup_n: int, batch_size: int = 1) -> PredictionLog:
    """One online SGD model over (context, arm feature) for every arm.

    After warmup each batch is scored with the current model and then fitted record by record;
    batch_size=1 is plain test-then-train.
    """
    if warmup_n < 0 or warmup_n > len(records):
        raise ConfigError(f"Warmup of {warmup_n} records does not fit a stream of {len(records)}")
    if batch_size < 1:
        raise ConfigError(f"Batch size must be >= 1, got {batch_size}")
    rows = _feature_rows(records, schema, ArmRegistry(capacity))
    log = PredictionLog(task)

    def fit(i: int):
        try:
            sgd_partial_fit(state, rows[i], scale_reward(task, records[i].reward), position=records[i].position)
        except BanditError as e:
            raise attach_position(e, records[i].position)

    for i in range(warmup_n):
        fit(i)
    for start in range(warmup_n, len(records), batch_size):
        batch = range(start, min(start + batch_size, len(records)))
        for i in batch:
            log.append(records[i].position, descale_prediction(task, sgd_predict(state, rows[i])), records[i].reward)
        for i in batch:
            fit(i)
    logger.info(f"{ONLINE_SGD}: warmup {warmup_n}, batch size {batch_size}, predicted {len(log)}")
    return log


def run_algorithm(algorithm: str, records: Sequence[InteractionRecord], schema: ContextSchema, capacity: int,
                  task: str, train_n: int, learning_rate: float = 0.01, l2_strength: float = 1e-4,
                  batch_size: int = 1, tree_params: Optional[TreeParams] = None) -> PredictionLog:
    """Run one algorithm; train_n is the static training size or the online warmup."""
    if algorithm in STATIC_ALGORITHMS:
        return run_static(algorithm, records, schema, capacity, task, train_n, tree_params)
    if algorithm == ONLINE_SGD:
        state = sgd_create(len(schema) + 1, LOGISTIC if task == CLICK else SQUARED, learning_rate, l2_strength)
        return run_single_prequential(state, records, schema, capacity, task, train_n, batch_size)
    if algorithm == BANDIT_ARRAY:
        array = ArmLearnerArray(schema, capacity, task, learning_rate, l2_strength)
        return run_prequential(array, records, train_n)
    raise ConfigError(f"Unknown algorithm '{algorithm}' (expected one of {', '.join(ALGORITHMS)})")


def align_logs(logs: Dict[str, PredictionLog]) -> Dict[str, PredictionLog]:
    """Restrict every log to the positions all of them predicted."""
    if not logs:
        return {}
    shared = set.intersection(*(set(log.positions) for log in logs.values()))
    aligned = {}
    for name, log in logs.items():
        kept = PredictionLog(log.task, [e for e in log.entries if e[0] in shared], log.cold_start_count)
        if len(kept) != len(log):
            logger.info(f"{name}: {len(log) - len(kept)} entries outside the shared evaluation positions")
        aligned[name] = kept
    return aligned


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass
class AlgorithmResult:
    algorithm: str
    log: PredictionLog
    series: AccuracySeries
    average_accuracy: Optional[float]
    rmse_rounds: Optional[RoundsRMSE]
    overall_rmse: Optional[float]


def evaluate_log(algorithm: str, log: PredictionLog, window_size: int = 20, round_size: int = 1000,
                 rounds: int = 10, rating_tolerance: int = 0) -> AlgorithmResult:
    """All metrics for one log; metrics undefined on too few entries are left as None."""
    series = windowed_accuracy(log, window_size, rating_tolerance)
    accuracy = average_accuracy(series) if len(series) else None
    overall = rmse(log) if len(log) else None
    rounds_result = rounds_rmse(log, round_size, rounds) if len(log) >= round_size else None
    return AlgorithmResult(algorithm, log, series, accuracy, rounds_result, overall)


@dataclass
class ComparisonTable:
    results: List[AlgorithmResult]
    positions: List[int]

    def result(self, algorithm: str) -> AlgorithmResult:
        for result in self.results:
            if result.algorithm == algorithm:
                return result
        raise KeyError(algorithm)


def compare_protocol(records: Sequence[InteractionRecord], schema: ContextSchema, capacity: int, task: str,
                     algorithms: Sequence[str] = ALGORITHMS, train_n: int = 1000, window_size: int = 20,
                     round_size: int = 1000, rounds: int = 10, rating_tolerance: int = 0,
                     eval_limit: Optional[int] = None, learning_rate: float = 0.01, l2_strength: float = 1e-4,
                     batch_size: int = 1, parallel: bool = False) -> ComparisonTable:
    """Static models train on the first train_n records, online ones warm up on them;
    every algorithm is then scored on the same evaluation positions."""
    if len(records) <= train_n:
        raise ConfigError(f"Dataset of {len(records)} records is not longer than the training size {train_n}")
    unknown = [a for a in algorithms if a not in ALGORITHMS]
    if unknown:
        raise ConfigError(f"Unknown algorithm(s) {', '.join(unknown)}")
    if eval_limit is not None:
        records = records[:train_n + eval_limit]

    def run(algorithm: str) -> PredictionLog:
        return run_algorithm(algorithm, records, schema, capacity, task, train_n,
                             learning_rate, l2_strength, batch_size)

    if parallel:
        with ThreadPoolExecutor(max_workers=len(algorithms)) as pool:
            logs = dict(zip(algorithms, pool.map(run, algorithms)))
    else:
        logs = {algorithm: run(algorithm) for algorithm in algorithms}

    aligned = align_logs(logs)
    results = [evaluate_log(name, aligned[name], window_size, round_size, rounds, rating_tolerance)
               for name in algorithms]
    positions = aligned[algorithms[0]].positions if algorithms else []
    for result in results:
        accuracy = f"{result.average_accuracy:.4f}" if result.average_accuracy is not None else 'n/a'
        logger.info(f"{result.algorithm}: average accuracy {accuracy} over {len(result.log)} records")
    return ComparisonTable(results, positions)


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def _write_frame(df: pd.DataFrame, path: str):
    try:
        df.to_csv(path, index=False, lineterminator='\n', float_format=FLOAT_FORMAT)
    except OSError as e:
        raise DataError(f"Cannot write {path}: {e}")


def _write_text(text: str, path: str):
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
    except OSError as e:
        raise DataError(f"Cannot write {path}: {e}")


def _make_dir(out_dir: str):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise DataError(f"Cannot create output directory {out_dir}: {e}")


def accuracy_flag(value: float, threshold: float = 0.70) -> str:
    return 'above' if value > threshold else 'below'


def emit_report(result: AlgorithmResult, out_dir: str, flag_threshold: float = 0.70) -> List[str]:
    """Write accuracy_series.csv, accuracy_series.dat, rmse_rounds.csv and summary.txt."""
    _make_dir(out_dir)
    series = result.series
    written = []

    series_df = pd.DataFrame({
        'window_index': range(1, len(series) + 1),
        'accuracy': series.values,
        f'above_{flag_threshold:.2f}': [accuracy_flag(v, flag_threshold) for v in series.values],
    })
    path = os.path.join(out_dir, 'accuracy_series.csv')
    _write_frame(series_df, path)
    written.append(path)

    # gnuplot: plot 'accuracy_series.dat' using 1:2
    dat = '# window_index accuracy\n' + ''.join(f"{i} {v:.6f}\n" for i, v in enumerate(series.values, 1))
    path = os.path.join(out_dir, 'accuracy_series.dat')
    _write_text(dat, path)
    written.append(path)

    rounds = result.rmse_rounds.values if result.rmse_rounds else []
    path = os.path.join(out_dir, 'rmse_rounds.csv')
    _write_frame(pd.DataFrame({'round': range(1, len(rounds) + 1), 'rmse': rounds}), path)
    written.append(path)

    path = os.path.join(out_dir, 'summary.txt')
    _write_text(format_summary(result), path)
    written.append(path)
    logger.info(f"Report for {result.algorithm} written to {out_dir}")
    return written


def format_summary(result: AlgorithmResult) -> str:
    lines = [
        f"algorithm {result.algorithm}",
        f"task {result.log.task}",
        f"evaluated_records {len(result.log)}",
        f"cold_start_count {result.log.cold_start_count}",
        f"window_size {result.series.window_size}",
        f"windows {len(result.series)}",
        "average_accuracy " + (f"{result.average_accuracy:.6f}" if result.average_accuracy is not None else 'n/a'),
        "rmse " + (f"{result.overall_rmse:.6f}" if result.overall_rmse is not None else 'n/a'),
    ]
    if result.rmse_rounds is not None:
        rounds = result.rmse_rounds
        lines.append(f"rmse_rounds {len(rounds.values)} of {rounds.requested} (round size {rounds.round_size})")
        lines.extend(f"rmse_round_{i} {v:.6f}" for i, v in enumerate(rounds.values, 1))
        lines.append(f"mean_rmse_rounds {rounds.mean:.6f}")
    else:
        lines.append("rmse_rounds 0")
    return '\n'.join(lines) + '\n'


def emit_comparison(table: ComparisonTable, out_dir: str, flag_threshold: float = 0.70) -> str:
    """comparison.csv with one row per algorithm, plus a full report per algorithm subdirectory."""
    _make_dir(out_dir)
    max_rounds = max((len(r.rmse_rounds.values) for r in table.results if r.rmse_rounds), default=0)
    rows = []
    for result in table.results:
        row = {
            'algorithm': result.algorithm,
            'evaluated_records': len(result.log),
            'cold_start_count': result.log.cold_start_count,
            'average_accuracy': result.average_accuracy,
            'rmse': result.overall_rmse,
            'mean_rmse_rounds': result.rmse_rounds.mean if result.rmse_rounds else None,
        }
        values = result.rmse_rounds.values if result.rmse_rounds else []
        for i in range(max_rounds):
            row[f'rmse_round_{i + 1}'] = values[i] if i < len(values) else None
        rows.append(row)
        emit_report(result, os.path.join(out_dir, result.algorithm), flag_threshold)

    columns = ['algorithm', 'evaluated_records', 'cold_start_count', 'average_accuracy', 'rmse',
               'mean_rmse_rounds', *[f'rmse_round_{i + 1}' for i in range(max_rounds)]]
    path = os.path.join(out_dir, 'comparison.csv')
    _write_frame(pd.DataFrame(rows, columns=columns), path)
    return path
