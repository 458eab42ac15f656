"""
Shared configuration for the bandit experiments.
Values come from the environment (or a .env file) with the experiment defaults as fallbacks.
"""

import os
import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Tuple
from dotenv import load_dotenv

from core import ConfigError

# Load environment variables from .env file
load_dotenv()


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got '{raw}'")


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got '{raw}'")


# Fallbacks for the BANDIT_* numeric variables
DEFAULT_LEARNING_RATE = 0.01
DEFAULT_L2_STRENGTH = 1e-4
DEFAULT_SEED = 7

LOG_DIR = os.getenv('BANDIT_LOG_DIR', 'logs')
LOG_LEVEL = os.getenv('BANDIT_LOG_LEVEL', 'INFO').upper()

# Local copy of the MovieLens-100K files (u.user, u.item, u.data)
ML100K_DIR = os.getenv('ML100K_DIR')

# Experiment protocol defaults
DEFAULT_ROWS = 5000
DEFAULT_WARMUP = 500
DEFAULT_WINDOW = 20
DEFAULT_TRAIN = 1000
DEFAULT_ROUNDS = 10
DEFAULT_ROUND_SIZE = 1000
DEFAULT_MOVIELENS_LIMIT = 2500
ACCURACY_FLAG_THRESHOLD = 0.70


@dataclass(frozen=True)
class Environment:
    """Numeric settings taken from the environment, with the defaults above as fallbacks."""
    learning_rate: float = DEFAULT_LEARNING_RATE
    l2_strength: float = DEFAULT_L2_STRENGTH
    seed: int = DEFAULT_SEED


def load_environment() -> Environment:
    """Read BANDIT_LEARNING_RATE, BANDIT_L2_STRENGTH and BANDIT_SEED; a malformed value is a ConfigError."""
    return Environment(
        learning_rate=_env_float('BANDIT_LEARNING_RATE', DEFAULT_LEARNING_RATE),
        l2_strength=_env_float('BANDIT_L2_STRENGTH', DEFAULT_L2_STRENGTH),
        seed=_env_int('BANDIT_SEED', DEFAULT_SEED),
    )


def setup_logging(session: str) -> Tuple[logging.Logger, str]:
    """Set up logging to a timestamped file plus the console."""
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    os.makedirs(LOG_DIR, exist_ok=True)
    log_filename = os.path.join(LOG_DIR, f"{session}_{timestamp}.log")

    # Root logger so module loggers (core, bandit, ...) end up in the same file
    logger = logging.getLogger()
    logger.setLevel(logging.DEBUG)

    # Remove existing handlers
    logger.handlers = []

    # File handler for detailed logging
    file_handler = logging.FileHandler(log_filename, encoding='utf-8')
    file_handler.setLevel(logging.DEBUG)

    # Console handler for important messages
    console_handler = logging.StreamHandler()
    console_handler.setLevel(getattr(logging, LOG_LEVEL, logging.INFO))

    formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s', datefmt='%Y-%m-%d %H:%M:%S')
    file_handler.setFormatter(formatter)
    console_handler.setFormatter(formatter)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)

    logger.info("=" * 60)
    logger.info(f"{session.upper()} SESSION STARTED")
    logger.info("=" * 60)
    logger.info(f"Log file: {log_filename}")

    return logger, log_filename
