#!/usr/bin/env python3
"""
Run the contextual-bandit experiments from the command line.

Commands:
    gen        Generate the seeded synthetic click dataset with preference drift
    run        Run one algorithm over a click dataset and write its report
    movielens  Ingest MovieLens-100K, explode by genre and run the bandit array on ratings
    compare    Static tree, static OLS, single online SGD and the bandit array side by side

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric overflow.

Usage:
    python cli.py gen --rows 5000 --seed 7 --out data.csv
    python cli.py run --algo bandit-array --data data.csv --warmup 500 --out results/bandit
    python cli.py movielens --ml-dir ml-100k --limit 2500 --out results/movielens
    python cli.py compare --data data.csv --train 1000 --out results/compare
"""

import argparse
import logging
import sys
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import settings
from bandit import ArmLearnerArray, export_array, run_prequential
from core import (CLICK, ConfigError, ContextSchema, DataError, InteractionRecord, NumericOverflowError, RATING,
                  load_schema)
from datagen import CATEGORIES, SYNTHETIC_SCHEMA, default_config, generate, load_generator_config, read_csv, write_csv
from evaluation import (ALGORITHMS, STATIC_ALGORITHMS, AlgorithmResult, ComparisonTable, compare_protocol,
                        emit_comparison, emit_report, evaluate_log, run_algorithm)
from movielens import (CONTEXT_FIELDS, DEFAULT_CONTEXT_FIELDS, GENRES, explode_by_genre, load_movielens,
                       movielens_schema, write_exploded_csv)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


@dataclass
class RunConfig:
    """Validated command-line options shared by every command."""
    command: str
    out: str
    data: Optional[str] = None
    schema: Optional[str] = None
    algorithm: str = 'bandit-array'
    rows: Optional[int] = None
    seed: Optional[int] = None
    generator_config: Optional[str] = None
    warmup_n: int = settings.DEFAULT_WARMUP
    train_n: int = settings.DEFAULT_TRAIN
    window_size: int = settings.DEFAULT_WINDOW
    learning_rate: float = settings.DEFAULT_LEARNING_RATE
    l2_strength: float = settings.DEFAULT_L2_STRENGTH
    default_seed: int = settings.DEFAULT_SEED
    batch_size: int = 1
    rating_tolerance: Optional[int] = None
    ml_dir: Optional[str] = None
    users: Optional[str] = None
    items: Optional[str] = None
    ratings: Optional[str] = None
    context_fields: Tuple[str, ...] = DEFAULT_CONTEXT_FIELDS
    limit: Optional[int] = None
    rounds: int = settings.DEFAULT_ROUNDS
    round_size: int = settings.DEFAULT_ROUND_SIZE
    export_csv: Optional[str] = None
    snapshot: Optional[str] = None
    parallel: bool = False

    def validate(self):
        if self.rows is not None and self.rows < 1:
            raise ConfigError(f"--rows must be >= 1, got {self.rows}")
        if self.seed is not None and self.seed < 0:
            raise ConfigError(f"--seed must be unsigned, got {self.seed}")
        for flag, value in (('--warmup', self.warmup_n), ('--rating-tolerance', self.rating_tolerance)):
            if value is not None and value < 0:
                raise ConfigError(f"{flag} must be >= 0, got {value}")
        for flag, value in (('--train', self.train_n), ('--window', self.window_size), ('--batch-size', self.batch_size),
                            ('--rounds', self.rounds), ('--round-size', self.round_size), ('--limit', self.limit)):
            if value is not None and value < 1:
                raise ConfigError(f"{flag} must be >= 1, got {value}")
        if self.learning_rate < 0:
            raise ConfigError(f"--eta must be >= 0, got {self.learning_rate}")
        if self.l2_strength < 0:
            raise ConfigError(f"--alpha must be >= 0, got {self.l2_strength}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"Unknown algorithm '{self.algorithm}' (expected one of {', '.join(ALGORITHMS)})")
        unknown = [f for f in self.context_fields if f not in CONTEXT_FIELDS]
        if unknown:
            raise ConfigError(f"Unknown context field(s) {', '.join(unknown)}")

    def tolerance(self, task: str) -> int:
        """Stars a rounded rating may be off; exact match unless --rating-tolerance is given."""
        if task != RATING or self.rating_tolerance is None:
            return 0
        return self.rating_tolerance


def build_parser(env: Optional[settings.Environment] = None) -> argparse.ArgumentParser:
    env = env or settings.Environment()
    parser = argparse.ArgumentParser(
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen', help='Generate the synthetic click dataset')
    gen.add_argument('--rows', type=int, help=f'Number of rows (default: {settings.DEFAULT_ROWS})')
    gen.add_argument('--seed', type=int, help=f'Generator seed (default: {env.seed})')
    gen.set_defaults(default_seed=env.seed)
    gen.add_argument('--config', dest='generator_config', help='Regime table config file (default: built-in drift table)')
    gen.add_argument('--out', required=True, help='Output CSV path')

    run = commands.add_parser('run', help='Run one algorithm on a click dataset')
    run.add_argument('--algo', dest='algorithm', choices=ALGORITHMS, default='bandit-array')
    run.add_argument('--data', required=True, help='gender,age,recommendation,reward CSV (or .xlsx)')
    run.add_argument('--schema', help='Context schema file (default: gender categorical f m / age numeric 0 100)')
    run.add_argument('--warmup', dest='warmup_n', type=int, default=settings.DEFAULT_WARMUP,
                     help='Fit-only records for the online algorithms (default: %(default)s)')
    run.add_argument('--train', dest='train_n', type=int, default=settings.DEFAULT_WARMUP,
                     help='Training records for the static algorithms (default: %(default)s)')
    run.add_argument('--batch-size', type=int, default=1, help='Online SGD scoring batch (default: %(default)s)')
    _add_common(run, env)

    ml = commands.add_parser('movielens', help='Bandit array on the genre-exploded MovieLens-100K stream')
    _add_movielens_inputs(ml)
    ml.add_argument('--warmup', dest='warmup_n', type=int, default=settings.DEFAULT_WARMUP,
                    help='Fit-only records (default: %(default)s)')
    ml.add_argument('--limit', type=int, default=settings.DEFAULT_MOVIELENS_LIMIT,
                    help='Evaluated records after warmup (default: %(default)s)')
    ml.add_argument('--all', dest='all_records', action='store_true', help='Evaluate every record after warmup')
    ml.add_argument('--export-csv', help='Also write the exploded stream to this CSV')
    ml.add_argument('--snapshot', help='Write the trained bandit array snapshot to this file')
    ml.add_argument('--rounds', type=int, default=settings.DEFAULT_ROUNDS)
    ml.add_argument('--round-size', type=int, default=settings.DEFAULT_ROUND_SIZE)
    _add_common(ml, env)

    cmp = commands.add_parser('compare', help='Compare all four algorithms on the same evaluation records')
    source = cmp.add_mutually_exclusive_group(required=True)
    source.add_argument('--data', help='Synthetic click CSV')
    source.add_argument('--ml-dir', help='Directory with u.user, u.item and u.data')
    cmp.add_argument('--context-fields', default=','.join(DEFAULT_CONTEXT_FIELDS))
    cmp.add_argument('--schema', help='Context schema file for --data')
    cmp.add_argument('--train', dest='train_n', type=int, default=settings.DEFAULT_TRAIN,
                     help='Training / warmup records (default: %(default)s)')
    cmp.add_argument('--limit', type=int, help='Evaluated records after training (default: all)')
    cmp.add_argument('--rounds', type=int, default=settings.DEFAULT_ROUNDS)
    cmp.add_argument('--round-size', type=int, default=settings.DEFAULT_ROUND_SIZE)
    cmp.add_argument('--batch-size', type=int, default=1)
    cmp.add_argument('--parallel', action='store_true', help='Run the algorithms on separate threads')
    _add_common(cmp, env)
    return parser


def _add_common(parser: argparse.ArgumentParser, env: settings.Environment):
    parser.add_argument('--window', dest='window_size', type=int, default=settings.DEFAULT_WINDOW,
                        help='Tumbling accuracy window (default: %(default)s)')
    parser.add_argument('--eta', dest='learning_rate', type=float, default=env.learning_rate,
                        help='SGD learning rate (default: %(default)s)')
    parser.add_argument('--alpha', dest='l2_strength', type=float, default=env.l2_strength,
                        help='L2 regularization strength (default: %(default)s)')
    parser.add_argument('--rating-tolerance', type=int,
                        help='Stars a rounded rating may be off and still count, for sensitivity checks '
                             '(default: exact match; unused for clicks)')
    parser.add_argument('--out', required=True, help='Output directory')


def _add_movielens_inputs(parser: argparse.ArgumentParser):
    parser.add_argument('--ml-dir', default=settings.ML100K_DIR, help='Directory with u.user, u.item and u.data '
                                                                      '(default: $ML100K_DIR)')
    parser.add_argument('--users', help='Path to u.user (overrides --ml-dir)')
    parser.add_argument('--items', help='Path to u.item (overrides --ml-dir)')
    parser.add_argument('--ratings', help='Path to u.data (overrides --ml-dir)')
    parser.add_argument('--context-fields', default=','.join(DEFAULT_CONTEXT_FIELDS),
                        help=f'Comma-separated subset of {",".join(CONTEXT_FIELDS)} (default: %(default)s)')


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = {k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__}
    if 'context_fields' in values:
        values['context_fields'] = tuple(f.strip() for f in values['context_fields'].split(',') if f.strip())
    if getattr(args, 'all_records', False):
        values['limit'] = None
    config = RunConfig(**values)
    config.validate()
    return config


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _synthetic_inputs(config: RunConfig) -> Tuple[List[InteractionRecord], ContextSchema]:
    schema = load_schema(config.schema) if config.schema else SYNTHETIC_SCHEMA
    print(f"Reading dataset from {config.data}...")
    records = read_csv(config.data)
    print(f"✓ Read {len(records)} records")
    return records, schema


def _movielens_inputs(config: RunConfig) -> Tuple[List[InteractionRecord], ContextSchema]:
    if not config.ml_dir and None in (config.users, config.items, config.ratings):
        raise ConfigError("Give --ml-dir (or set ML100K_DIR) or all of --users, --items and --ratings")
    print("Loading MovieLens-100K...")
    table = load_movielens(config.ml_dir, config.users, config.items, config.ratings)
    schema = movielens_schema(table, config.context_fields)
    records = explode_by_genre(table, config.context_fields)
    print(f"✓ Joined {len(table)} ratings ({table.dropped} dropped), exploded into {len(records)} genre records")
    if config.export_csv:
        write_exploded_csv(records, config.export_csv, config.context_fields)
        print(f"✓ Exploded stream written to {config.export_csv}")
    return records, schema


def _print_result(result: AlgorithmResult):
    if result.average_accuracy is not None:
        print(f"  {result.algorithm}: average accuracy {result.average_accuracy:.1%} "
              f"over {len(result.log)} records ({len(result.series)} windows)")
    else:
        print(f"  {result.algorithm}: no evaluated records")
    if result.rmse_rounds is not None:
        rounds = ', '.join(f"{v:.3f}" for v in result.rmse_rounds.values)
        print(f"    RMSE per round of {result.rmse_rounds.round_size}: {rounds}")
        if result.rmse_rounds.shortfall:
            print(f"    ⚠ Only {len(result.rmse_rounds.values)} of {result.rmse_rounds.requested} rounds fit")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen(config: RunConfig) -> int:
    generator = load_generator_config(config.generator_config) if config.generator_config else default_config()
    if config.generator_config is None:
        generator.n_rows = settings.DEFAULT_ROWS
        generator.seed = config.default_seed
    if config.rows is not None:
        generator.n_rows = config.rows
    if config.seed is not None:
        generator.seed = config.seed
    records = generate(generator)
    write_csv(records, config.out)
    clicks = sum(int(r.reward) for r in records)
    print(f"✓ Generated {len(records)} rows (seed {generator.seed}, {clicks} clicks) -> {config.out}")
    return EXIT_OK


def cmd_run(config: RunConfig) -> int:
    records, schema = _synthetic_inputs(config)
    static = config.algorithm in STATIC_ALGORITHMS
    train_n = config.train_n if static else config.warmup_n
    print(f"Running {config.algorithm} ({'train' if static else 'warmup'} {train_n})...")
    log = run_algorithm(config.algorithm, records, schema, len(CATEGORIES), CLICK, train_n,
                        config.learning_rate, config.l2_strength, config.batch_size)
    result = evaluate_log(config.algorithm, log, config.window_size, config.round_size, config.rounds,
                          config.tolerance(CLICK))
    emit_report(result, config.out, settings.ACCURACY_FLAG_THRESHOLD)
    _print_result(result)
    print(f"✓ Report written to {config.out}")
    return EXIT_OK


def cmd_movielens(config: RunConfig) -> int:
    records, schema = _movielens_inputs(config)
    if config.warmup_n > len(records):
        raise ConfigError(f"Warmup of {config.warmup_n} exceeds the {len(records)} exploded records")
    stream = records if config.limit is None else records[:config.warmup_n + config.limit]
    print(f"Running bandit-array on {len(stream)} records (warmup {config.warmup_n})...")

    array = ArmLearnerArray(schema, len(GENRES), RATING, config.learning_rate, config.l2_strength)
    log = run_prequential(array, stream, config.warmup_n)
    result = evaluate_log('bandit-array', log, config.window_size, config.round_size, config.rounds,
                          config.tolerance(RATING))
    emit_report(result, config.out, settings.ACCURACY_FLAG_THRESHOLD)
    _print_result(result)
    if config.snapshot:
        with open(config.snapshot, 'w', encoding='utf-8', newline='\n') as f:
            f.write(export_array(array))
        print(f"✓ Snapshot of {len(array.learners)} arm learners written to {config.snapshot}")
    print(f"✓ Report written to {config.out}")
    return EXIT_OK


def cmd_compare(config: RunConfig) -> int:
    if config.data:
        records, schema = _synthetic_inputs(config)
        task, capacity = CLICK, len(CATEGORIES)
    else:
        records, schema = _movielens_inputs(config)
        task, capacity = RATING, len(GENRES)
    print(f"Comparing {', '.join(ALGORITHMS)} (train {config.train_n})...")
    table: ComparisonTable = compare_protocol(
        records, schema, capacity, task, ALGORITHMS, config.train_n, config.window_size, config.round_size,
        config.rounds, config.tolerance(task), config.limit, config.learning_rate, config.l2_strength,
        config.batch_size, config.parallel)
    path = emit_comparison(table, config.out, settings.ACCURACY_FLAG_THRESHOLD)
    print(f"✓ Evaluated {len(table.positions)} shared records")
    for result in table.results:
        _print_result(result)
    print(f"✓ Comparison written to {path}")
    return EXIT_OK


COMMANDS = {
    'gen': cmd_gen,
    'run': cmd_run,
    'movielens': cmd_movielens,
    'compare': cmd_compare,
}


def exit_code_for(error: Exception) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, NumericOverflowError):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        env = settings.load_environment()
    except ConfigError as e:
        print(f"✗ {e}")
        return EXIT_CONFIG
    args = build_parser(env).parse_args(argv)
    try:
        settings.setup_logging(args.command)
    except OSError as e:
        print(f"✗ Cannot create log directory {settings.LOG_DIR}: {e}")
        return EXIT_CONFIG

    print("=" * 60)
    print(f"Contextual bandit: {args.command}")
    print("=" * 60)

    try:
        config = config_from_args(args)
        code = COMMANDS[args.command](config)
    except (ConfigError, DataError, NumericOverflowError) as e:
        code = exit_code_for(e)
        logger.error(f"{type(e).__name__}: {e}")
        print(f"✗ {e}")
    except OSError as e:
        code = EXIT_DATA
        logger.error(f"I/O error: {e}")
        print(f"✗ {e}")

    logger.info("=" * 60)
    logger.info(f"{args.command.upper()} SESSION {'COMPLETED' if code == EXIT_OK else f'FAILED (exit {code})'}")
    logger.info("=" * 60)
    return code


if __name__ == "__main__":
    sys.exit(main())
