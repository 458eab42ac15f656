import pytest

import settings
from core import ArmId, InteractionRecord
from datagen import default_config, generate
from movielens import GENRES


def item_line(movie_id, title, genres):
    flags = ['1' if g in genres else '0' for g in GENRES]
    return '|'.join([str(movie_id), title, '01-Jan-1995', '', 'http://us.imdb.com/M/title-exact?x', *flags])


USERS = [
    '1|24|M|technician|85711',
    '2|53|F|other|94043',
    '3|23|M|writer|32067',
]

ITEMS = [
    item_line(1, 'Toy Story (1995)', ('Animation', "Children's", 'Comedy')),
    item_line(2, 'GoldenEye (1995)', ('Action', 'Adventure', 'Thriller')),
    item_line(3, 'Untitled (1996)', ()),
]

# The last rating points at a movie that is not in u.item
RATINGS = [
    '1\t1\t5\t874965758',
    '2\t1\t3\t876893171',
    '1\t2\t4\t874965700',
    '3\t3\t2\t878542960',
    '3\t99\t4\t878542961',
]


def write_lines(path, lines):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write('\n'.join(lines) + '\n')
    return str(path)


@pytest.fixture(autouse=True)
def isolated_logs(tmp_path, monkeypatch):
    """Keep CLI session logs out of the working tree."""
    monkeypatch.setattr(settings, 'LOG_DIR', str(tmp_path / 'logs'))


@pytest.fixture
def ml_dir(tmp_path):
    directory = tmp_path / 'ml-100k'
    directory.mkdir()
    write_lines(directory / 'u.user', USERS)
    write_lines(directory / 'u.item', ITEMS)
    write_lines(directory / 'u.data', RATINGS)
    return str(directory)


@pytest.fixture(scope='session')
def drift_records():
    return generate(default_config(n_rows=5000, seed=7))


@pytest.fixture
def make_stream():
    """Build a stream from (raw_context, arm label, reward) triples with first-seen arm indices."""
    def _make(rows):
        indices = {}
        records = []
        for position, (context, label, reward) in enumerate(rows):
            index = indices.setdefault(label, len(indices))
            records.append(InteractionRecord(position, tuple(context), ArmId(label, index), float(reward)))
        return records
    return _make

