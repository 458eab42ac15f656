import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from bandit import (ArmLearnerArray, bandit_step, export_array, expected_reward, import_array, recommend,
                    run_prequential)
from core import (ArmId, ConfigError, ContextSchema, DataError, InteractionRecord, PredictionLog, SchemaViolationError,
                  UnknownArmError, categorical, numeric)
from datagen import CATEGORIES, SYNTHETIC_SCHEMA
from evaluation import average_accuracy, correct_mask


UNIT = ContextSchema((numeric('x', 0, 1),))


def click_array(schema=SYNTHETIC_SCHEMA, capacity=len(CATEGORIES), **kwargs):
    return ArmLearnerArray(schema, capacity, 'click', **kwargs)


def record(position, context, label, reward, index=0):
    return InteractionRecord(position, tuple(context), ArmId(label, index), float(reward))


def test_first_record_of_an_arm_is_a_cold_start():
    array = click_array()
    outcome = bandit_step(array, record(0, ('f', 40), 'health', 0))
    assert outcome.prediction is None
    assert outcome.was_cold_start
    assert len(array.learners) == 1


def test_zero_learner_predicts_one_half_before_fitting():
    array = click_array(learning_rate=0.1)
    bandit_step(array, record(0, ('m', 20), 'news', 1))
    array.learners['news'].weights[:] = 0.0
    array.learners['news'].bias = 0.0
    outcome = bandit_step(array, record(1, ('m', 20), 'news', 1))
    assert outcome.prediction == 0.5
    assert not outcome.was_cold_start


def test_second_identical_record_sees_one_step():
    array = ArmLearnerArray(UNIT, 1, 'click', learning_rate=0.1, l2_strength=0.0)
    bandit_step(array, record(0, (1.0,), 'a', 1))
    outcome = bandit_step(array, record(1, (1.0,), 'a', 1))
    assert outcome.prediction == pytest.approx(1 / (1 + np.exp(-0.1)), abs=1e-12)
    assert outcome.prediction == pytest.approx(0.52497, abs=1e-5)


def test_bad_context_never_creates_an_arm():
    array = click_array()
    with pytest.raises(SchemaViolationError):
        bandit_step(array, record(0, ('x', 40), 'health', 1))
    assert len(array.learners) == 0
    assert len(array.known_arms) == 0


def test_failed_first_fit_never_creates_an_arm():
    array = click_array()
    with pytest.raises(DataError):
        bandit_step(array, record(0, ('f', 40), 'health', 0.5))
    assert len(array.learners) == 0
    assert len(array.known_arms) == 0
    outcome = bandit_step(array, record(1, ('f', 40), 'news', 1))
    assert outcome.was_cold_start
    assert outcome.arm == ArmId('news', 0)
    assert [a.label for a in array.known_arms] == list(array.learners)


@hsettings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from(['f', 'm']), st.integers(13, 90), st.sampled_from(CATEGORIES),
                          st.sampled_from([0, 1])), min_size=2, max_size=30),
       st.sampled_from(['f', 'm']), st.integers(13, 90), st.sampled_from(CATEGORIES))
def test_prediction_does_not_depend_on_the_current_reward(history, gender, age, category):
    predictions = []
    for reward in (0, 1):
        array = click_array(learning_rate=0.05)
        for i, (g, a, c, r) in enumerate(history):
            bandit_step(array, record(i, (g, a), c, r))
        predictions.append(bandit_step(array, record(len(history), (gender, age), category, reward)).prediction)
    assert predictions[0] == predictions[1]


@hsettings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from(['f', 'm']), st.integers(13, 90), st.sampled_from([0, 1])),
                min_size=1, max_size=40))
def test_fitting_one_arm_leaves_other_arms_untouched(records):
    array = click_array(learning_rate=0.1)
    bandit_step(array, record(0, ('f', 30), 'sports', 1))
    bandit_step(array, record(1, ('m', 60), 'news', 0))
    frozen = array.learners['sports'].copy()
    before = [expected_reward(array, ('f', age), 'sports') for age in (13, 50, 90)]
    for i, (g, a, r) in enumerate(records, start=2):
        bandit_step(array, record(i, (g, a), 'news', r))
    np.testing.assert_array_equal(array.learners['sports'].weights, frozen.weights)
    assert array.learners['sports'].bias == frozen.bias
    assert [expected_reward(array, ('f', age), 'sports') for age in (13, 50, 90)] == before


def test_replaying_a_stream_never_duplicates_learners(make_stream):
    stream = make_stream([(('f', 20), c, 1) for c in CATEGORIES] * 3)
    array = click_array()
    run_prequential(array, stream, 0)
    run_prequential(array, stream, 0)
    assert len(array.learners) == len(CATEGORIES)
    assert [a.index for a in array.known_arms] == [0, 1, 2, 3]


def test_expected_reward_queries():
    array = click_array()
    with pytest.raises(UnknownArmError):
        expected_reward(array, ('f', 30), 'news')
    bandit_step(array, record(0, ('f', 30), 'news', 1))
    array.learners['news'].weights[:] = 0.0
    array.learners['news'].bias = 0.0
    assert expected_reward(array, ('m', 70), 'news') == 0.5

    rating = ArmLearnerArray(UNIT, 2, 'rating')
    bandit_step(rating, record(0, (0.5,), 'Drama', 3))
    rating.learners['Drama'].weights[:] = 0.0
    rating.learners['Drama'].bias = 0.0
    assert expected_reward(rating, (0.2,), 'Drama') == 1.0


def test_repeated_positive_fits_push_the_prediction_up():
    array = click_array(learning_rate=0.5, l2_strength=0.0)
    for i in range(500):
        bandit_step(array, record(i, ('f', 25), 'movies', 1))
    assert expected_reward(array, ('f', 25), 'movies') > 0.9


def test_recommend_picks_the_best_arm_and_breaks_ties_low():
    array = click_array()
    with pytest.raises(UnknownArmError):
        recommend(array, ('f', 30))
    bandit_step(array, record(0, ('f', 30), 'news', 0))
    assert recommend(array, ('f', 30)).label == 'news'

    bandit_step(array, record(1, ('f', 30), 'sports', 1))
    for label in ('news', 'sports'):
        array.learners[label].weights[:] = 0.0
        array.learners[label].bias = 0.0
    assert recommend(array, ('f', 30)).index == 0

    trained = click_array(learning_rate=0.5)
    for i in range(200):
        bandit_step(trained, record(2 * i, ('m', 45), 'news', 0))
        bandit_step(trained, record(2 * i + 1, ('m', 45), 'sports', 1))
    assert recommend(trained, ('m', 45)).label == 'sports'


def test_warmup_covering_the_stream_logs_nothing(make_stream):
    stream = make_stream([(('f', 20), 'news', 1)] * 10)
    log = run_prequential(click_array(), stream, len(stream))
    assert len(log) == 0
    with pytest.raises(ConfigError):
        run_prequential(click_array(), stream, len(stream) + 1)


def test_each_arm_cold_starts_exactly_once(drift_records):
    log = run_prequential(click_array(), drift_records, 0)
    assert log.cold_start_count == 4
    assert len(log) == len(drift_records) - 4


def test_warmup_split_on_the_drift_stream(drift_records):
    log = run_prequential(click_array(), drift_records, 500)
    assert len(log) + log.cold_start_count == 4500
    assert log.positions[0] >= 500


def test_identical_runs_are_bitwise_identical(drift_records):
    a = run_prequential(click_array(), drift_records[:1500], 100)
    b = run_prequential(click_array(), drift_records[:1500], 100)
    assert a.entries == b.entries


def test_stationary_sports_stream_is_learned(make_stream):
    rng = np.random.default_rng(11)
    rows = []
    for _ in range(5000):
        gender = ['f', 'm'][int(rng.integers(0, 2))]
        category = CATEGORIES[int(rng.integers(0, 4))]
        rows.append(((gender, int(rng.integers(13, 91))), category, int(category == 'sports')))
    log = run_prequential(click_array(), make_stream(rows), 0)
    trailing = PredictionLog('click', log.entries[-1000:])
    assert average_accuracy(trailing) >= 0.95


def test_rating_predictions_are_descaled():
    array = ArmLearnerArray(UNIT, 1, 'rating', learning_rate=0.5, l2_strength=0.0)
    for i in range(300):
        outcome = bandit_step(array, record(i, (0.3,), 'Comedy', 5))
    assert 4.5 < outcome.prediction <= 5.5
    assert 4.5 < expected_reward(array, (0.3,), 'Comedy')


def test_snapshot_round_trip_keeps_predictions(drift_records):
    array = click_array()
    run_prequential(array, drift_records[:800], 0)
    text = export_array(array)
    assert text.startswith('task click\nmode logistic\ncapacity 4\n')
    restored = import_array(text, SYNTHETIC_SCHEMA)
    assert [(a.label, a.index) for a in restored.known_arms] == [(a.label, a.index) for a in array.known_arms]
    for arm in array.known_arms:
        for context in (('f', 20), ('m', 75)):
            assert expected_reward(restored, context, arm) == expected_reward(array, context, arm)


def test_snapshot_rejects_a_different_schema(drift_records):
    array = click_array()
    run_prequential(array, drift_records[:50], 0)
    other = ContextSchema((categorical('gender', ['f', 'm']), numeric('age', 0, 120)))
    with pytest.raises(ConfigError):
        import_array(export_array(array), other)


def test_click_accuracy_of_the_drift_stream_is_high(drift_records):
    log = run_prequential(click_array(), drift_records, 500)
    assert correct_mask(log).mean() > 0.65
