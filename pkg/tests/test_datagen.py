import os
from collections import Counter

import pandas as pd
import pytest

from core import ConfigError, DataError, ParseError, SchemaViolationError
from datagen import (CATEGORIES, GENDERS, XorShift64Star, age_bucket, default_config, default_regimes, generate,
                     load_generator_config, parse_generator_config, read_csv, write_csv)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), '..', 'configs')


def constant_config(p, rows=300):
    return parse_generator_config(f"rows {rows}\nseed 5\nregime 0\nclick * * * {p}\n")


def test_all_click_config_gives_all_ones():
    assert all(r.reward == 1.0 for r in generate(constant_config(1.0)))


def test_no_click_config_gives_all_zeros():
    assert all(r.reward == 0.0 for r in generate(constant_config(0.0)))


def test_health_click_rate_after_the_drift(drift_records):
    after = [r.reward for r in drift_records[2500:] if r.arm.label == 'health']
    assert abs(sum(after) / len(after) - 0.9) <= 0.05
    before = [r.reward for r in drift_records[:2500] if r.arm.label == 'health']
    assert abs(sum(before) / len(before) - 0.2) <= 0.05


def test_categories_are_uniform(drift_records):
    counts = Counter(r.arm.label for r in drift_records)
    for category in CATEGORIES:
        assert abs(counts[category] / len(drift_records) - 0.25) <= 0.02


def test_genders_and_ages(drift_records):
    genders = Counter(r.raw_context[0] for r in drift_records)
    assert set(genders) == set(GENDERS)
    assert abs(genders['f'] / len(drift_records) - 0.5) <= 0.02
    ages = [r.raw_context[1] for r in drift_records]
    assert min(ages) >= 13 and max(ages) <= 90


def test_positions_and_arm_indices(drift_records):
    assert [r.position for r in drift_records] == list(range(5000))
    indices = {r.arm.label: r.arm.index for r in drift_records}
    assert sorted(indices.values()) == [0, 1, 2, 3]


def test_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / 'a.csv', tmp_path / 'b.csv'
    write_csv(generate(default_config(1000, seed=3)), str(a))
    write_csv(generate(default_config(1000, seed=3)), str(b))
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes().startswith(b'gender,age,recommendation,reward\n')
    assert b'\r' not in a.read_bytes()


def test_different_seeds_differ():
    a = generate(default_config(200, seed=1))
    b = generate(default_config(200, seed=2))
    assert [(r.raw_context, r.arm.label, r.reward) for r in a] != [(r.raw_context, r.arm.label, r.reward) for r in b]


def test_written_file_reads_back(tmp_path):
    records = generate(default_config(500, seed=9))
    path = str(tmp_path / 'data.csv')
    write_csv(records, path)
    assert read_csv(path) == records


def test_original_capitalized_headers_are_accepted(tmp_path):
    path = tmp_path / 'original.csv'
    path.write_text('Gender,Age,Recommendation,Reward\nm,25,sports,1\nF,61,Health,0\n')
    records = read_csv(str(path))
    assert [(r.raw_context, r.arm.label, r.reward) for r in records] == [
        (('m', 25), 'sports', 1.0), (('f', 61), 'health', 0.0)]


def test_spreadsheet_input(tmp_path):
    path = str(tmp_path / 'data.xlsx')
    pd.DataFrame({'gender': ['f', 'm'], 'age': [33, 47], 'recommendation': ['news', 'movies'],
                  'reward': [1, 0]}).to_excel(path, index=False)
    records = read_csv(path)
    assert [(r.raw_context, r.arm.label, r.reward) for r in records] == [
        (('f', 33), 'news', 1.0), (('m', 47), 'movies', 0.0)]


def test_missing_dataset_is_a_data_error(tmp_path):
    with pytest.raises(DataError) as excinfo:
        read_csv(str(tmp_path / 'nope.csv'))
    assert 'nope.csv' in str(excinfo.value)


def test_empty_field_reports_the_line(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text('gender,age,recommendation,reward\nm,25,sports,1\nf,,news,0\n')
    with pytest.raises(ParseError) as excinfo:
        read_csv(str(path))
    assert excinfo.value.line == 3


@pytest.mark.parametrize('age', ['29.9', 'thirty', '1e400'])
def test_non_integer_age_reports_the_line(tmp_path, age):
    path = tmp_path / 'bad.csv'
    path.write_text(f'gender,age,recommendation,reward\nf,40,news,1\nm,{age},health,0\n')
    with pytest.raises(ParseError) as excinfo:
        read_csv(str(path))
    assert excinfo.value.line == 3


def test_whole_number_float_age_is_accepted(tmp_path):
    path = tmp_path / 'ages.csv'
    path.write_text('gender,age,recommendation,reward\nm,33.0,health,0\n')
    assert read_csv(str(path))[0].raw_context == ('m', 33)


def test_unknown_values_are_schema_violations(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text('gender,age,recommendation,reward\nx,25,sports,1\n')
    with pytest.raises(SchemaViolationError):
        read_csv(str(path))
    path.write_text('gender,age,recommendation,reward\nm,25,cooking,1\n')
    with pytest.raises(SchemaViolationError):
        read_csv(str(path))


def test_missing_column(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text('gender,age,reward\nm,25,1\n')
    with pytest.raises(ParseError):
        read_csv(str(path))


def test_shipped_config_matches_the_built_in_regimes():
    config = load_generator_config(os.path.join(CONFIG_DIR, 'drift_default.cfg'))
    expected = default_regimes()
    assert (config.n_rows, config.seed, config.age_min, config.age_max) == (5000, 7, 13, 90)
    assert [r.start_row for r in config.regimes] == [r.start_row for r in expected]
    for got, want in zip(config.regimes, expected):
        assert got.click_prob == want.click_prob


def test_regimes_inherit_the_previous_table():
    config = parse_generator_config("regime 0\nclick * * * 0.5\nregime 10\nclick news f * 0.9\n")
    assert config.regimes[1].click_prob[('m', '<30', 'sports')] == 0.5
    assert config.regimes[1].click_prob[('f', '>60', 'news')] == 0.9
    assert config.regimes[1].click_prob[('m', '>60', 'news')] == 0.5


@pytest.mark.parametrize('text', [
    "regime 0\nclick * * * 1.5\n",
    "click * * * 0.5\n",
    "regime 0\nclick cooking * * 0.5\n",
    "regime 0\nclick * x * 0.5\n",
    "regime 0\nclick * * teen 0.5\n",
    "regime 5\nclick * * * 0.5\n",
    "regime 0\nclick * * * 0.5\nregime 0\n",
    "regime 0\nclick news f <30 0.5\n",
    "rows ten\n",
    "colour blue\n",
])
def test_bad_generator_configs(text):
    with pytest.raises(ConfigError):
        parse_generator_config(text)


def test_generator_rejects_zero_rows():
    config = default_config(10)
    config.n_rows = 0
    with pytest.raises(ConfigError):
        generate(config)


def test_missing_generator_config(tmp_path):
    with pytest.raises(ConfigError):
        load_generator_config(str(tmp_path / 'missing.cfg'))


def test_age_buckets():
    assert [age_bucket(a) for a in (13, 29, 30, 60, 61, 90)] == ['<30', '<30', '30-60', '30-60', '>60', '>60']


def test_rng_helpers():
    rng = XorShift64Star(42)
    draws = [rng.below(6) for _ in range(600)]
    assert set(draws) == set(range(6))
    assert not any(rng.bernoulli(0.0) for _ in range(200))
    assert all(rng.bernoulli(1.0) for _ in range(200))
    with pytest.raises(ConfigError):
        XorShift64Star(-1)
    a, b = XorShift64Star(0), XorShift64Star(0)
    assert [a.next_u64() for _ in range(5)] == [b.next_u64() for _ in range(5)]
