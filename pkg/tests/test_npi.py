import datetime as dt

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epiflow.errors import ValidationError
from epiflow.npi import (
    NpiCategory,
    NpiRecord,
    classify_high_npi,
    compute_measures,
    npi_intensity,
    npi_speed,
)

W0, W1 = dt.date(1918, 9, 8), dt.date(1919, 2, 22)
D = dt.timedelta


def rec(**kw):
    return NpiRecord("c", {NpiCategory(k): tuple(v) for k, v in kw.items()})


def test_full_window_is_504():
    full = [(W0, W1)]
    r = rec(school_closure=full, public_gathering_ban=full, other_quarantine_isolation=full)
    assert npi_intensity(r) == 504


def test_no_npis():
    assert npi_intensity(rec()) == 0
    assert npi_speed(rec(), W0) is None


def test_interval_arithmetic():
    s = dt.date(1918, 10, 1)
    r = rec(school_closure=[(s, s + D(9))], public_gathering_ban=[(s, s + D(4))])
    assert npi_intensity(r) == 15
    assert npi_intensity(r, inclusive=False) == 13


def test_overlaps_not_double_counted_and_clipped():
    s = dt.date(1918, 10, 1)
    r = rec(school_closure=[(s, s + D(9)), (s + D(5), s + D(14)), (dt.date(1919, 2, 20), dt.date(1919, 4, 1))])
    assert npi_intensity(r) == 15 + 3


def test_unknown_category():
    with pytest.raises(ValidationError, match="unknown NPI category"):
        NpiRecord("c", {"curfew": ((W0, W0),)})


def test_speed_sign():
    accel = dt.date(1918, 10, 10)
    r = rec(school_closure=[(accel, accel)])
    assert npi_speed(r, accel) == 0
    r = rec(school_closure=[(accel - D(3), accel)])
    assert npi_speed(r, accel) == 3
    r = rec(school_closure=[(accel + D(12), accel + D(20))])
    assert npi_speed(r, accel) == -12


def test_high_npi_two_cities():
    flags, _ = classify_high_npi({"a": 100, "b": 10}, {"a": 5, "b": -5})
    assert flags == {"a": True, "b": False}


def test_high_npi_four_cities():
    pairs = {"p": (10, 10), "q": (20, 1), "r": (1, 20), "s": (20, 20)}
    flags, med = classify_high_npi({k: v[0] for k, v in pairs.items()}, {k: v[1] for k, v in pairs.items()})
    assert med["intensity"] == 15 and med["speed"] == 15
    assert [k for k, v in flags.items() if v] == ["s"]


def test_identical_values_warn():
    with pytest.warns(UserWarning):
        flags, _ = classify_high_npi({"a": 5, "b": 5}, {"a": 1, "b": 2})
    assert not any(flags.values())


def test_compute_measures_excludes_missing_speed():
    a = dt.date(1918, 10, 5)
    records = {
        "x": rec(school_closure=[(a, a + D(30))]),
        "y": rec(school_closure=[(a + D(5), a + D(10))]),
        "z": rec(school_closure=[(a, a + D(3))]),
    }
    out, info = compute_measures(records, {"x": a, "y": a})
    by = {m.city_id: m for m in out}
    assert by["z"].speed is None and by["z"].high_npi is None
    assert info["excluded_no_speed"] == ["z"]
    assert by["x"].high_npi is True and by["y"].high_npi is False


dates = st.integers(0, 200).map(lambda d: dt.date(1918, 8, 20) + D(d))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(dates, st.integers(0, 60)), min_size=1, max_size=4), st.integers(1, 30))
def test_extending_interval_never_decreases(ivs, extra):
    ivs = [(s, s + D(n)) for s, n in ivs]
    r = NpiRecord("c", {NpiCategory.SCHOOL_CLOSURE: tuple(ivs)})
    longer = [(s, e + D(extra)) if i == 0 else (s, e) for i, (s, e) in enumerate(ivs)]
    r2 = NpiRecord("c", {NpiCategory.SCHOOL_CLOSURE: tuple(longer)})
    assert npi_intensity(r2) >= npi_intensity(r)
    assert 0 <= npi_intensity(r2) <= 168


@settings(max_examples=100, deadline=None)
@given(dates, dates, st.integers(-100, 100))
def test_speed_translation_invariant(resp, accel, d):
    r = rec(school_closure=[(resp, resp)])
    shifted = rec(school_closure=[(resp + D(d), resp + D(d))])
    assert npi_speed(r, accel) == npi_speed(shifted, accel + D(d))


@pytest.mark.filterwarnings("ignore::UserWarning")
@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 504), st.integers(-40, 40)), min_size=2, max_size=20))
def test_classification_invariant_to_monotone_transform(vals):
    ints = {str(i): v[0] for i, v in enumerate(vals)}
    spds = {str(i): v[1] for i, v in enumerate(vals)}
    a, _ = classify_high_npi(ints, spds)
    b, _ = classify_high_npi({k: v**3 + 2.0**(v / 50) for k, v in ints.items()}, spds)
    assert a == b
