"""
MovieLens-100K ingestion: parse u.user / u.item / u.data, join them on user_id and
movie_id, encode the demographic fields as categorical codes and explode every
rating into one bandit record per genre of the rated movie.
"""

import logging
import os
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core import (ArmRegistry, ConfigError, ContextSchema, DataError, InteractionRecord, ParseError,
                  build_categorical, categorical, numeric)

logger = logging.getLogger(__name__)

# Canonical genre order of the u.item flag columns
GENRES = ('unknown', 'Action', 'Adventure', 'Animation', "Children's", 'Comedy', 'Crime',
          'Documentary', 'Drama', 'Fantasy', 'Film-Noir', 'Horror', 'Musical', 'Mystery',
          'Romance', 'Sci-Fi', 'Thriller', 'War', 'Western')

USERS_FILE = 'u.user'
ITEMS_FILE = 'u.item'
RATINGS_FILE = 'u.data'

CONTEXT_FIELDS = ('age', 'sex', 'occupation', 'zip_code')
DEFAULT_CONTEXT_FIELDS = ('age', 'sex', 'zip_code')
CATEGORICAL_FIELDS = ('sex', 'occupation', 'zip_code')
AGE_BOUNDS = (0, 100)

ITEM_FIELD_COUNT = 5 + len(GENRES)


@dataclass(frozen=True)
class UserRecord:
    user_id: int
    age: int
    sex: str
    occupation: str
    zip_code: str


@dataclass(frozen=True)
class MovieRecord:
    movie_id: int
    title: str
    genre_flags: Tuple[int, ...]

    @property
    def genres(self) -> List[str]:
        return [g for g, flag in zip(GENRES, self.genre_flags) if flag]


@dataclass(frozen=True)
class RatingEvent:
    user_id: int
    movie_id: int
    rating: int
    unix_timestamp: int


@dataclass
class JoinedTable:
    """Joined ratings with sex/occupation/zip_code replaced by codes into `categories`."""
    frame: pd.DataFrame
    categories: Dict[str, List[str]]
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.frame)


def _read_lines(path: str) -> Iterator[Tuple[int, str]]:
    """Yield (line number, line) for non-empty lines; undecodable bytes are replaced."""
    if not os.path.exists(path):
        raise DataError(f"MovieLens file not found: {path}")
    with open(path, 'r', encoding='utf-8', errors='replace') as f:
        for line_number, line in enumerate(f, 1):
            line = line.rstrip('\r\n')
            if line.strip():
                yield line_number, line


def _int_field(value: str, name: str, path: str, line: int) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise ParseError(f"{name} '{value}' is not an integer", path, line)


def parse_users(path: str) -> List[UserRecord]:
    """Parse `id|age|gender|occupation|zip` lines, keeping file order."""
    users = []
    seen = set()
    for line, text in _read_lines(path):
        parts = text.split('|')
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", path, line)
        user_id = _int_field(parts[0], 'user_id', path, line)
        age = _int_field(parts[1], 'age', path, line)
        if age <= 0:
            raise ParseError(f"age must be positive, got {age}", path, line)
        sex = parts[2].strip().upper()
        if sex not in ('F', 'M'):
            raise ParseError(f"sex must be F or M, got '{parts[2]}'", path, line)
        if user_id in seen:
            raise ParseError(f"duplicate user_id {user_id}", path, line)
        seen.add(user_id)
        users.append(UserRecord(user_id, age, sex, parts[3].strip(), parts[4].strip()))
    logger.info(f"Parsed {len(users)} users from {path}")
    return users


def parse_items(path: str) -> List[MovieRecord]:
    """Parse the 24-field u.item lines; the last 19 fields are the genre flags."""
    movies = []
    seen = set()
    for line, text in _read_lines(path):
        parts = text.split('|')
        if len(parts) != ITEM_FIELD_COUNT:
            raise ParseError(f"expected {ITEM_FIELD_COUNT} fields, got {len(parts)}", path, line)
        movie_id = _int_field(parts[0], 'movie_id', path, line)
        flags = tuple(p.strip() for p in parts[5:])
        if any(flag not in ('0', '1') for flag in flags):
            raise ParseError(f"genre flags must be 0 or 1, got {'|'.join(flags)}", path, line)
        if movie_id in seen:
            raise ParseError(f"duplicate movie_id {movie_id}", path, line)
        seen.add(movie_id)
        movies.append(MovieRecord(movie_id, parts[1], tuple(int(flag) for flag in flags)))
    logger.info(f"Parsed {len(movies)} movies from {path}")
    return movies


def parse_ratings(path: str) -> List[RatingEvent]:
    """Parse tab-delimited `user item rating timestamp` lines."""
    events = []
    for line, text in _read_lines(path):
        parts = text.split('\t')
        if len(parts) != 4:
            raise ParseError(f"expected 4 tab-separated fields, got {len(parts)}", path, line)
        user_id, movie_id, rating, timestamp = (_int_field(p, name, path, line) for p, name in
                                                zip(parts, ('user_id', 'movie_id', 'rating', 'timestamp')))
        if not 1 <= rating <= 5:
            raise ParseError(f"rating {rating} is outside 1-5", path, line)
        events.append(RatingEvent(user_id, movie_id, rating, timestamp))
    logger.info(f"Parsed {len(events)} ratings from {path}")
    return events


def join_and_engineer(users: Sequence[UserRecord], movies: Sequence[MovieRecord],
                      ratings: Sequence[RatingEvent]) -> JoinedTable:
    """Inner-join ratings x users x movies, encode categorical fields, sort by time."""
    users_df = pd.DataFrame([asdict(u) for u in users], columns=['user_id', 'age', 'sex', 'occupation', 'zip_code'])
    ratings_df = pd.DataFrame([asdict(r) for r in ratings], columns=['user_id', 'movie_id', 'rating', 'unix_timestamp'])
    movies_df = pd.DataFrame([[m.movie_id, m.title, *m.genre_flags] for m in movies],
                             columns=['movie_id', 'title', *GENRES])
    users_df = users_df.astype({'user_id': 'int64', 'age': 'int64'})
    ratings_df = ratings_df.astype('int64')
    movies_df = movies_df.astype({'movie_id': 'int64', **{g: 'int64' for g in GENRES}})

    joined = ratings_df.merge(users_df, on='user_id', how='inner').merge(movies_df, on='movie_id', how='inner')
    joined = joined.dropna(subset=['rating'])
    dropped = len(ratings_df) - len(joined)
    if dropped:
        logger.warning(f"Dropped {dropped} ratings referencing unknown users or movies")

    # Codes follow the sorted distinct values of the users file, so they never depend on row order
    categories = {col: list(build_categorical(col, users_df[col]).categories) if len(users_df) else []
                  for col in CATEGORICAL_FIELDS}
    for col in CATEGORICAL_FIELDS:
        codes = {value: i for i, value in enumerate(categories[col])}
        joined[col] = joined[col].astype(str).map(codes)

    joined = joined.sort_values(['unix_timestamp', 'user_id', 'movie_id'], kind='mergesort').reset_index(drop=True)
    columns = ['movie_id', 'title', 'user_id', 'rating', 'unix_timestamp', 'age', *CATEGORICAL_FIELDS, *GENRES]
    joined = joined[columns].astype({'rating': int, 'age': int})
    logger.info(f"Joined table has {len(joined)} rows ({dropped} dropped)")
    return JoinedTable(joined, categories, dropped)


def _check_context_fields(context_fields: Sequence[str]):
    if not context_fields:
        raise ConfigError("At least one context field is required")
    unknown = [f for f in context_fields if f not in CONTEXT_FIELDS]
    if unknown:
        raise ConfigError(f"Unknown context field(s) {', '.join(unknown)}; choose from {', '.join(CONTEXT_FIELDS)}")
    if len(set(context_fields)) != len(context_fields):
        raise ConfigError(f"Duplicate context fields in {list(context_fields)}")


def movielens_schema(table: JoinedTable, context_fields: Sequence[str] = DEFAULT_CONTEXT_FIELDS) -> ContextSchema:
    _check_context_fields(context_fields)
    features = []
    for name in context_fields:
        if name == 'age':
            features.append(numeric('age', *AGE_BOUNDS))
        else:
            features.append(categorical(name, table.categories[name]))
    return ContextSchema(tuple(features))


def explode_by_genre(table: JoinedTable,
                     context_fields: Sequence[str] = DEFAULT_CONTEXT_FIELDS) -> List[InteractionRecord]:
    """One record per set genre flag (canonical order), arm = genre, reward = rating.

    Rows without any flag fall back to the `unknown` genre.
    """
    _check_context_fields(context_fields)
    frame = table.frame
    flags = frame[list(GENRES)].to_numpy()
    ratings = frame['rating'].to_numpy()
    columns = {}
    for name in context_fields:
        values = frame[name].to_numpy()
        if name in CATEGORICAL_FIELDS:
            labels = table.categories[name]
            columns[name] = [labels[int(code)] for code in values]
        else:
            columns[name] = [int(v) for v in values]

    registry = ArmRegistry(len(GENRES))
    records = []
    fallbacks = 0
    for i in range(len(frame)):
        genre_indices = np.nonzero(flags[i])[0]
        if len(genre_indices) == 0:
            genre_indices = [0]
            fallbacks += 1
        context = tuple(columns[name][i] for name in context_fields)
        for g in genre_indices:
            arm = registry.register(GENRES[int(g)])
            records.append(InteractionRecord(len(records), context, arm, float(ratings[i])))

    if fallbacks:
        logger.warning(f"{fallbacks} rows had no genre flag and were emitted under 'unknown'")
    logger.info(f"Exploded {len(frame)} ratings into {len(records)} genre records over {len(registry)} genres")
    return records


def load_movielens(directory: Optional[str] = None, users_path: Optional[str] = None,
                   items_path: Optional[str] = None, ratings_path: Optional[str] = None) -> JoinedTable:
    """Parse and join the three files; explicit paths override the directory."""
    if directory is None and None in (users_path, items_path, ratings_path):
        raise ConfigError("Give the MovieLens directory or all three file paths")
    users_path = users_path or os.path.join(directory, USERS_FILE)
    items_path = items_path or os.path.join(directory, ITEMS_FILE)
    ratings_path = ratings_path or os.path.join(directory, RATINGS_FILE)
    users = parse_users(users_path)
    movies = parse_items(items_path)
    ratings = parse_ratings(ratings_path)
    return join_and_engineer(users, movies, ratings)


def write_exploded_csv(records: Sequence[InteractionRecord], path: str,
                       context_fields: Sequence[str] = DEFAULT_CONTEXT_FIELDS):
    """Inspection dump of the exploded stream (age,sex,zip,genre,rating by default)."""
    names = ['zip' if name == 'zip_code' else name for name in context_fields]
    rows = [[*record.raw_context, record.arm.label, int(record.reward)] for record in records]
    df = pd.DataFrame(rows, columns=[*names, 'genre', 'rating'])
    df.to_csv(path, index=False, lineterminator='\n')
    logger.info(f"Wrote {len(rows)} exploded records to {path}")
