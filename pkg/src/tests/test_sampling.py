import math

import pytest

from qgraph_msa.sampling import (
    WORKERS_ENV,
    frequency,
    map_samples,
    passes_lower_bound,
    passes_upper_bound,
    sample_stream,
    standard_error,
    worker_count,
)


def _draw(k):
    return float(sample_stream(99, k).random())


def test_results_do_not_depend_on_worker_count():
    serial = map_samples(_draw, 12, workers=1)
    threaded = map_samples(_draw, 12, workers=4)
    assert serial == threaded
    assert len(set(serial)) == 12


def test_sample_count_must_be_positive():
    with pytest.raises(ValueError):
        map_samples(_draw, 0)


def test_worker_count_from_environment(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert worker_count() == 3
    assert worker_count(2) == 2
    monkeypatch.delenv(WORKERS_ENV)
    assert worker_count() == 1
    with pytest.raises(ValueError):
        worker_count(0)


def test_streams_are_separated_by_channel():
    a = sample_stream(5, 0, channel=0).random(4)
    b = sample_stream(5, 0, channel=1).random(4)
    assert not (a == b).all()
    assert (sample_stream(5, 0).random(4) == a).all()


def test_standard_error():
    assert standard_error(0.5, 100) == pytest.approx(0.05)
    assert standard_error(0.0, 100) == 0.0
    assert standard_error(0.3, 0) == 0.0
    assert standard_error(0.2, 400) == pytest.approx(math.sqrt(0.16 / 400))


def test_frequency():
    assert frequency([True, False, True, True]) == 0.75
    assert frequency([]) == 0.0


@pytest.mark.parametrize(
    "p_hat, se, bound, upper, lower",
    [
        (0.10, 0.01, 0.085, True, True),
        (0.10, 0.01, 0.075, False, True),
        (0.10, 0.01, 0.115, True, True),
        (0.10, 0.01, 0.125, True, False),
        (1.00, 0.00, 0.998, False, True),
        (0.00, 0.00, 0.5, True, False),
    ],
)
def test_pass_rules(p_hat, se, bound, upper, lower):
    assert passes_upper_bound(p_hat, se, bound) is upper
    assert passes_lower_bound(p_hat, se, bound) is lower
