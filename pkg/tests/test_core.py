import random

import pytest
from hypothesis import given, strategies as st

from core import (ArityError, ArmId, ArmRegistry, ConfigError, ContextSchema, DataError, PredictionLog,
                  SchemaViolationError, arm_feature, build_categorical, categorical, format_schema,
                  normalize_context, numeric, parse_schema, schema_hash)


AGE_GENDER = ContextSchema((numeric('age', 0, 100), categorical('gender', ['f', 'm'])))


def test_normalize_context_scales_numeric_and_indexes_categorical():
    assert normalize_context(AGE_GENDER, (29, 'm')).values == pytest.approx((0.29, 1.0))


def test_normalize_context_clamps_above_upper_bound():
    assert normalize_context(AGE_GENDER, (150, 'f')).values == (1.0, 0.0)


def test_normalize_context_lower_bound_maps_to_zero():
    schema = ContextSchema((numeric('age', 0, 100),))
    assert normalize_context(schema, (0,)).values == (0.0,)


def test_single_category_encodes_to_zero():
    schema = ContextSchema((categorical('country', ['ch']),))
    assert normalize_context(schema, ('ch',)).values == (0.0,)


def test_unknown_category_names_the_feature():
    with pytest.raises(SchemaViolationError) as excinfo:
        normalize_context(AGE_GENDER, (30, 'x'))
    assert excinfo.value.feature == 'gender'
    assert 'gender' in str(excinfo.value)


def test_length_mismatch_is_an_arity_error():
    with pytest.raises(ArityError):
        normalize_context(AGE_GENDER, (30,))


def test_nan_numeric_value_is_rejected():
    with pytest.raises(SchemaViolationError):
        normalize_context(AGE_GENDER, (float('nan'), 'f'))


@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.sampled_from(['a', 'b', 'c'])), min_size=1, max_size=5))
def test_every_component_lies_in_unit_interval(rows):
    schema = ContextSchema((numeric('x', -10, 10), categorical('c', ['a', 'b', 'c'])))
    for raw in rows:
        values = normalize_context(schema, raw).values
        assert all(0.0 <= v <= 1.0 for v in values)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6))
def test_normalization_is_idempotent_on_unit_bounds(values):
    schema = ContextSchema(tuple(numeric(f'f{i}', 0, 1) for i in range(len(values))))
    once = normalize_context(schema, values).values
    assert normalize_context(schema, once).values == once


def test_categorical_codes_do_not_depend_on_stream_order():
    values = ['teacher', 'artist', 'doctor', 'artist', 'engineer', 'teacher']
    shuffled = list(values)
    random.Random(3).shuffle(shuffled)
    a = ContextSchema((build_categorical('occupation', values),))
    b = ContextSchema((build_categorical('occupation', shuffled),))
    for value in set(values):
        assert normalize_context(a, (value,)) == normalize_context(b, (value,))
    assert a.features[0].categories == ('artist', 'doctor', 'engineer', 'teacher')


def test_arm_feature_examples():
    assert arm_feature(ArmId('news', 0), 4) == 0.0
    assert arm_feature(ArmId('health', 3), 4) == 1.0
    assert arm_feature(ArmId('movies', 1), 4) == pytest.approx(1 / 3)
    assert arm_feature(ArmId('only', 0), 1) == 0.0


def test_arm_feature_out_of_range():
    with pytest.raises(ArityError):
        arm_feature(ArmId('sports', 4), 4)


def test_registry_assigns_first_seen_indices():
    registry = ArmRegistry(4)
    for label in ['sports', 'news', 'sports', 'health']:
        registry.register(label)
    assert [(a.label, a.index) for a in registry.arms] == [('sports', 0), ('news', 1), ('health', 2)]
    assert len(registry) == 3
    assert 'news' in registry
    assert registry.get('movies') is None


def test_registry_rejects_arms_beyond_capacity():
    registry = ArmRegistry(2)
    registry.register('a')
    registry.register('b')
    with pytest.raises(ArityError):
        registry.register('c')
    with pytest.raises(ArityError):
        registry.resolve('c')


def test_resolve_does_not_store_the_arm():
    registry = ArmRegistry(3)
    registry.register('a')
    assert registry.resolve('b') == ArmId('b', 1)
    assert 'b' not in registry
    assert registry.resolve('a') == ArmId('a', 0)
    assert registry.register('b') == ArmId('b', 1)


def test_schema_text_round_trip_and_comments():
    text = """
    # synthetic click context
    gender categorical f m
    age numeric 0 100   # years
    """
    schema = parse_schema(text)
    assert schema.names == ['gender', 'age']
    assert parse_schema(format_schema(schema)) == schema


@pytest.mark.parametrize('text, fragment', [
    ('age numeric 0\n', 'line 1'),
    ('gender categorical f m\nage ordinal 1 2\n', 'line 2'),
    ('age numeric ten 100\n', 'line 1'),
    ('# nothing\n', 'no features'),
    ('age numeric 100 0\n', 'lower < upper'),
    ('g categorical f f\n', 'duplicate'),
])
def test_parse_schema_errors(text, fragment):
    with pytest.raises(ConfigError) as excinfo:
        parse_schema(text)
    assert fragment in str(excinfo.value)


def test_schema_hash_is_short_and_sensitive():
    h = schema_hash(AGE_GENDER)
    assert len(h) == 16
    assert h == schema_hash(parse_schema(format_schema(AGE_GENDER)))
    assert h != schema_hash(ContextSchema((numeric('age', 0, 99), categorical('gender', ['f', 'm']))))


def test_duplicate_feature_names_rejected():
    with pytest.raises(ConfigError):
        ContextSchema((numeric('age', 0, 1), numeric('age', 0, 2)))


def test_prediction_log_positions_must_increase():
    log = PredictionLog('click')
    log.append(3, 0.7, 1)
    with pytest.raises(ArityError):
        log.append(3, 0.2, 0)


def test_click_log_needs_binary_actuals():
    log = PredictionLog('click')
    with pytest.raises(DataError):
        log.append(0, 0.7, 0.5)
    rating_log = PredictionLog('rating')
    rating_log.append(0, 3.2, 4)
    assert rating_log.actual == [4.0]
