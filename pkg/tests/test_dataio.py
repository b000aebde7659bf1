import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coldhardy.dataio import (
    COLUMNS,
    LTE_COLUMNS,
    WEATHER_COLUMNS,
    Corpus,
    Cultivar,
    DataError,
    DayRecord,
    Season,
    build_corpus,
    derive_mean_at,
    extract_seasons,
    filter_seasons,
    fit_normalizer,
    interpolate_missing,
    make_trial_splits,
    parse_weather_csv,
    season_bounds,
    season_length,
    serialize_records,
)

HEADER = ",".join(COLUMNS)


def full_record(date, t=0.0, lte=None):
    values = {c: 1.0 for c in WEATHER_COLUMNS}
    values.update(MIN_AT=t - 1, AVG_AT=t, MAX_AT=t + 1, MEAN_AT=t)
    for c in LTE_COLUMNS:
        values[c] = lte
    return DayRecord(date, values, "S1")


def synthetic_season(length, labelled, temp_complete, year=2009):
    dates = tuple(dt.date(year, 9, 7) + dt.timedelta(days=k) for k in range(length))
    raw = np.ones((length, len(WEATHER_COLUMNS)))
    raw[temp_complete:, WEATHER_COLUMNS.index("AVG_AT")] = np.nan
    labels = np.full((length, 3), np.nan)
    labels[:labelled, 1] = -10.0
    return Season(0, year, dates, raw, labels)


# -- parsing ---------------------------------------------------------------------

def test_parse_row_with_empty_mean_at():
    row = "2010-01-05,Merlot,S1,-2.0,1.0,4.0,,50,60,70,-5,-4,-3,0.1,3,5,-23.0,-24.1,-25.0"
    (name, rec), = parse_weather_csv(HEADER + "\n" + row + "\n")
    assert name == "Merlot"
    assert rec.mean_at is None
    assert rec.lte50 == -24.1
    assert rec.label_present == (True, True, True)


def test_parse_row_without_labels():
    row = "2010-01-05,Merlot,S1,-2.0,1.0,4.0,1.0,50,60,70,-5,-4,-3,0.1,3,5,,,"
    (_, rec), = parse_weather_csv(HEADER + "\n" + row + "\n")
    assert rec.label_present == (False, False, False)


def test_parse_bad_date_names_row_and_column():
    row = "2010-13-40,Merlot,S1" + "," * 16
    with pytest.raises(DataError, match=r"row 2, column DATE"):
        parse_weather_csv(HEADER + "\n" + row + "\n")


def test_parse_non_numeric_cell():
    good = "2010-01-05,M,S1" + ",1" * 16
    bad = "2010-01-06,M,S1,x" + ",1" * 15
    with pytest.raises(DataError, match=r"row 3, column MIN_AT"):
        parse_weather_csv("\n".join([HEADER, good, bad]) + "\n")


def test_parse_missing_date_column():
    with pytest.raises(DataError, match="DATE"):
        parse_weather_csv("CULTIVAR,MIN_AT\nM,1\n")


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
cell = st.one_of(st.none(), finite)


@given(st.lists(st.tuples(st.dates(min_value=dt.date(1950, 1, 1), max_value=dt.date(2100, 1, 1)),
                          st.lists(cell, min_size=16, max_size=16)),
                min_size=1, max_size=20))
def test_serialize_parse_round_trip(rows):
    records = [("cv", DayRecord(d, dict(zip(WEATHER_COLUMNS + LTE_COLUMNS, vals)), "S"))
               for d, vals in rows]
    back = parse_weather_csv(serialize_records(records))
    assert len(back) == len(records)
    for (n1, r1), (n2, r2) in zip(records, back):
        assert n1 == n2 and r1.date == r2.date
        for c in WEATHER_COLUMNS + LTE_COLUMNS:
            assert r1.values[c] == r2.values[c]


# -- derived mean and interpolation ---------------------------------------------------

@pytest.mark.parametrize("lo,hi,expected", [(0, 10, 5), (-7, -7, -7), (-12.4, 3.2, -4.6)])
def test_derive_mean_at(lo, hi, expected):
    assert derive_mean_at(lo, hi) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("series,expected", [
    ([1, None, 3], [1, 2, 3]),
    ([None, None, 5, 7], [5, 5, 5, 7]),
    ([4, None, None, 10], [4, 6, 8, 10]),
])
def test_interpolate_examples(series, expected):
    assert interpolate_missing(series) == pytest.approx(expected, abs=1e-12)


def test_interpolate_all_missing_names_feature():
    with pytest.raises(DataError, match="MIN_RH season 2001"):
        interpolate_missing([None, None], "MIN_RH season 2001")


@given(st.lists(st.one_of(st.none(), st.floats(-100, 100)), min_size=1, max_size=60)
       .filter(lambda s: any(v is not None for v in s)))
def test_interpolation_preserves_present_values_and_is_linear(series):
    out = interpolate_missing(series)
    present = [i for i, v in enumerate(series) if v is not None]
    for i in present:
        assert out[i] == series[i]
    for a, b in zip(present, present[1:]):
        seg = np.array(out[a:b + 1])
        if len(seg) > 2:
            scale = max(1.0, np.abs(seg).max())
            assert np.all(np.abs(np.diff(seg, 2)) <= 1e-9 * scale)


# -- seasons -----------------------------------------------------------------------

def test_season_lengths():
    assert season_length(2009) == 251
    assert season_length(2011) == 252  # Feb 2012 is a leap month
    first, last = season_bounds(2009)
    assert (first, last) == (dt.date(2009, 9, 7), dt.date(2010, 5, 15))


def test_extract_full_coverage_and_leap():
    for year, n in ((2009, 251), (2011, 252)):
        first, last = season_bounds(year)
        recs = [full_record(first + dt.timedelta(days=k)) for k in range((last - first).days + 1)]
        (s,) = extract_seasons(recs)
        assert s.length == n
        assert s.dates[0] == first and s.dates[-1] == last
        assert all((b - a).days == 1 for a, b in zip(s.dates, s.dates[1:]))


def test_extract_june_only_gives_nothing():
    recs = [full_record(dt.date(2010, 6, d)) for d in range(1, 20)]
    assert extract_seasons(recs) == []


def test_extract_missing_days_become_absent():
    recs = [full_record(dt.date(2009, 9, 7)), full_record(dt.date(2009, 9, 10))]
    (s,) = extract_seasons(recs)
    assert np.isnan(s.raw[1]).all() and np.isnan(s.raw[2]).all()
    assert not np.isnan(s.raw[0]).any()


@given(st.integers(0, 3 * 365), st.integers(1, 600))
def test_season_windows_partition_dates(offset, span):
    start = dt.date(2005, 1, 1) + dt.timedelta(days=offset)
    recs = [full_record(start + dt.timedelta(days=k)) for k in range(span)]
    seen = set()
    for s in extract_seasons(recs):
        for d in s.dates:
            assert d not in seen
            seen.add(d)


# -- filtering ---------------------------------------------------------------------

@pytest.mark.parametrize("labelled,temp,kept", [
    (25, 251, False),   # 9.96% labels
    (26, 240, True),    # 10.36% labels, 95.6% temperature
    (100, 200, False),  # 79.7% temperature
])
def test_filter_examples(labelled, temp, kept):
    s = synthetic_season(251, labelled, temp)
    retained, log = filter_seasons([s])
    assert (len(retained) == 1) == kept
    if not kept:
        assert log[0].label_ratio == pytest.approx(labelled / 251)
        assert log[0].temperature_ratio == pytest.approx(temp / 251)


def test_filter_thresholds_are_inclusive():
    s = synthetic_season(250, 25, 225)
    assert s.label_ratio() == 0.10 and s.temperature_ratio() == 0.90
    retained, _ = filter_seasons([s])
    assert len(retained) == 1


def test_labels_are_not_interpolated(small_synth):
    s = small_synth.corpus[0].seasons[0]
    assert np.isnan(s.labels).any()
    assert np.array_equal(np.isnan(s.labels), np.isnan(small_synth.source[0][0].labels))


# -- corpus and splits ---------------------------------------------------------------

def test_build_corpus_dense_ids(small_synth):
    corpus = build_corpus(small_synth.rows())
    assert corpus.names == small_synth.corpus.names
    for i, c in enumerate(corpus.cultivars):
        assert c.cultivar_id == i
        assert all(s.cultivar_id == i for s in c.seasons)


def test_corpus_rejects_mismatched_ids(small_synth):
    c = small_synth.corpus[1]
    with pytest.raises(DataError):
        Corpus((Cultivar(0, c.name, c.seasons),))


def make_corpus(counts):
    cultivars = []
    for cid, n in enumerate(counts):
        seasons = tuple(synthetic_season(251, 30, 251, 1990 + k) for k in range(n))
        seasons = tuple(Season(cid, s.start_year, s.dates, s.raw, s.labels) for s in seasons)
        cultivars.append(Cultivar(cid, f"c{cid}", seasons))
    return Corpus(tuple(cultivars))


def test_split_cardinality_small_cultivar():
    splits = make_trial_splits(make_corpus([4]), n_trials=3, seed=7)
    assert len(splits) == 3
    for sp in splits:
        assert len(sp.test[0]) == 2 and len(sp.train[0]) == 2


def test_split_disjoint_trials_large_cultivar():
    splits = make_trial_splits(make_corpus([34]), n_trials=3, seed=7)
    tests = [set(sp.test[0]) for sp in splits]
    assert len(set().union(*tests)) == 6


@given(st.lists(st.integers(3, 12), min_size=1, max_size=5), st.integers(0, 10_000))
def test_split_properties(counts, seed):
    corpus = make_corpus(counts)
    a = make_trial_splits(corpus, seed=seed)
    b = make_trial_splits(corpus, seed=seed)
    assert a == b
    for sp in a:
        for cid, n in enumerate(counts):
            train, test = set(sp.train[cid]), set(sp.test[cid])
            assert len(test) == 2 and not train & test
            assert train | test == set(range(n))
    for cid, n in enumerate(counts):
        if n >= 6:
            assert len({sp.test[cid] for sp in a}) == 3


def test_split_too_few_seasons_names_cultivar():
    with pytest.raises(DataError, match="c1"):
        make_trial_splits(make_corpus([5, 2]))


# -- normalizer --------------------------------------------------------------------

def _season_with_feature(values):
    n = len(values)
    s = synthetic_season(n, 0, n)
    raw = np.tile(np.arange(1.0, len(WEATHER_COLUMNS) + 1), (n, 1)) * np.arange(1, n + 1)[:, None]
    raw[:, WEATHER_COLUMNS.index("MIN_AT")] = values
    return Season(0, s.start_year, s.dates, raw, s.labels)


def test_normalizer_two_values():
    stats = fit_normalizer([_season_with_feature([0.0, 2.0])], ("MIN_AT",))
    assert stats.mean[0] == 1.0 and stats.sd[0] == 1.0
    assert stats.apply(np.array([[0.0], [2.0]])).ravel().tolist() == [-1.0, 1.0]


def test_normalizer_identity_on_standardized():
    stats = fit_normalizer([_season_with_feature([-1.0, 1.0])], ("MIN_AT",))
    assert (stats.mean[0], stats.sd[0]) == (0.0, 1.0)


def test_normalizer_constant_feature_rejected():
    with pytest.raises(DataError, match="MIN_AT"):
        fit_normalizer([_season_with_feature([3.0, 3.0, 3.0])], ("MIN_AT",))


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=30)
       .filter(lambda v: np.std(v) > 1e-3))
def test_normalizer_round_trip(values):
    stats = fit_normalizer([_season_with_feature(values)], ("MIN_AT",))
    x = np.array(values)[:, None]
    assert np.allclose(stats.invert(stats.apply(x)), x, atol=1e-9)


def test_mean_at_derivation_exact_after_interpolation(small_synth):
    s = small_synth.corpus[0].seasons[0]
    lo, hi = s.column("MIN_AT"), s.column("MAX_AT")
    assert np.array_equal(s.column("MEAN_AT"), (lo + hi) / 2)
    assert not np.isnan(s.raw).any()
