from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rhl.dataio import (
    CATEGORICAL_LEVELS,
    DROPOUT_COUNT,
    ObservationWindow,
    PredictionDataset,
    RecurrentEventDataset,
    StudentRecord,
    build_counting_format,
    derive_student_covariates,
    parse_event_table,
    read_students,
    summarize,
    write_event_table,
    write_students,
)
from rhl.errors import (
    DuplicateEventTime,
    EmptyDataset,
    InconsistentEnumeration,
    MissingColumn,
    NonChronologicalRows,
    OutOfWindow,
    UnknownCategoryLevel,
)


def rows(ds):
    return list(zip(ds.start, ds.stop, ds.status, ds.enum))


def test_raw_file_is_completed_to_a_tiling(tmp_path):
    path = tmp_path / "ev.csv"
    path.write_text("cluster_id,unit_id,time\nA,a1,10\nA,a1,25\n")
    ds = parse_event_table(path, window=ObservationWindow(0, 100))
    restored = [(*ds.window.restore([s, e]), st_, en) for s, e, st_, en in rows(ds)]
    assert restored == [(0.0, 10.0, 1, 0), (10.0, 25.0, 1, 1), (25.0, 100.0, 0, 2)]


def test_counting_file_with_reversed_row_is_rejected(tmp_path):
    path = tmp_path / "ev.csv"
    path.write_text("cluster_id,unit_id,start,stop,status,enum\nA,a1,0,0.5,1,0\nA,a1,0.5,0.5,0,1\n")
    with pytest.raises(NonChronologicalRows):
        parse_event_table(path)


@pytest.mark.parametrize(
    "content, error",
    [
        ("", EmptyDataset),
        ("cluster_id,unit_id,time\n", EmptyDataset),
        ("cluster_id,time\nA,0.5\n", MissingColumn),
        ("cluster_id,unit_id,time\nA,a1,1.5\n", OutOfWindow),
        # overlapping intervals
        ("cluster_id,unit_id,start,stop,status,enum\nA,a1,0,0.6,1,0\nA,a1,0.5,1,0,1\n",
         NonChronologicalRows),
        # enum does not count prior events
        ("cluster_id,unit_id,start,stop,status,enum\nA,a1,0,0.5,1,0\nA,a1,0.5,1,0,0\n",
         InconsistentEnumeration),
    ],
)
def test_parse_errors(tmp_path, content, error):
    path = tmp_path / "ev.csv"
    path.write_text(content)
    with pytest.raises(error):
        parse_event_table(path)


def test_schema_renames_columns(tmp_path):
    path = tmp_path / "ev.csv"
    path.write_text("school,course,day\nA,a1,2020-01-11\n")
    ds = parse_event_table(
        path, schema={"cluster_id": "school", "unit_id": "course", "time": "day"},
        window=ObservationWindow("2020-01-01", "2020-01-21"),
    )
    assert ds.stop[0] == pytest.approx(0.5)
    assert ds.window.restore(ds.stop[0]) - ds.window.t0 == pytest.approx(10.0)


def test_unit_without_events_is_one_censored_row():
    ds = build_counting_format({("A", "a1"): []}, ObservationWindow(0, 1))
    assert rows(ds) == [(0.0, 1.0, 0, 0)]


def test_counting_rows_for_two_events():
    ds = build_counting_format({("A", "a1"): [0.2, 0.5]}, ObservationWindow(0, 1))
    assert rows(ds) == [(0.0, 0.2, 1, 0), (0.2, 0.5, 1, 1), (0.5, 1.0, 0, 2)]


def test_mark_is_multiplicity_over_enrollment():
    ds = build_counting_format(
        {("A", "a1"): [0.3]}, ObservationWindow(0, 1), marks={("A", "a1"): [3]},
        enrollment={("A", "a1"): 150},
    )
    np.testing.assert_array_equal(ds.column(DROPOUT_COUNT), [0.0, 0.02])


def test_missing_enrollment_warns_and_keeps_raw_counts():
    with pytest.warns(UserWarning, match="enrollment"):
        ds = build_counting_format({("A", "a1"): [0.3]}, ObservationWindow(0, 1),
                                   marks={("A", "a1"): [3]})
    np.testing.assert_array_equal(ds.column(DROPOUT_COUNT), [0.0, 3.0])


def test_same_day_events_are_collapsed_on_read(tmp_path):
    path = tmp_path / "ev.csv"
    path.write_text(
        "cluster_id,unit_id,time,multiplicity,enrollment\n"
        "A,a1,0.4,1,50\nA,a1,0.4,2,50\nA,a1,0.7,1,50\n"
    )
    ds = parse_event_table(path)
    assert int(ds.status.sum()) == 2
    np.testing.assert_allclose(ds.column(DROPOUT_COUNT), [0.0, 3 / 50, 1 / 50])


@pytest.mark.parametrize(
    "times, error",
    [([0.2, 0.2], DuplicateEventTime), ([0.0], OutOfWindow), ([1.0], OutOfWindow),
     ([0.5, 0.3], NonChronologicalRows)],
)
def test_build_errors(times, error):
    with pytest.raises(error):
        build_counting_format({("A", "a1"): times}, ObservationWindow(0, 1))


def test_empty_input_is_rejected():
    with pytest.raises(EmptyDataset):
        build_counting_format({}, ObservationWindow(0, 1))


def test_unit_in_two_clusters_is_rejected():
    with pytest.raises(NonChronologicalRows):
        RecurrentEventDataset(
            cluster_id=["A", "B"], unit_id=["u", "u"], start=[0, 0], stop=[1, 1],
            status=[0, 0], enum=[0, 0], marks=np.zeros((2, 0)), covariates=np.zeros((2, 0)),
        )


event_maps = st.dictionaries(
    st.tuples(st.sampled_from(["A", "B", "C"]), st.text("abcdef", min_size=1, max_size=3)),
    # a 1e-6 lattice: times closer than window rounding would merge on re-read
    st.lists(st.integers(1000, 999000), max_size=8, unique=True).map(lambda v: sorted(x / 1e6 for x in v)),
    min_size=1, max_size=6,
)


def _unique_units(times):
    # unit ids must not repeat across clusters
    seen, out = set(), {}
    for (c, u), t in times.items():
        if u not in seen:
            seen.add(u)
            out[(c, u)] = t
    return out


@given(times=event_maps)
def test_tiling_and_enumeration_invariants(times):
    times = _unique_units(times)
    ds = build_counting_format(times, ObservationWindow(0, 1))
    for uid, sl in ds.unit_slices().items():
        assert np.sum(ds.stop[sl] - ds.start[sl]) == pytest.approx(1.0, abs=1e-12)
        assert ds.enum[sl][-1] == ds.status[sl].sum()
    assert sum(ds.event_counts().values()) == sum(len(t) for t in times.values())


@given(times=event_maps, kind=st.sampled_from(["raw", "counting"]), marks=st.booleans())
def test_write_read_round_trip(tmp_path_factory, times, kind, marks):
    times = _unique_units(times)
    window = ObservationWindow(-3.0, 7.0)
    times = {k: window.restore(np.asarray(v)) for k, v in times.items()}
    kw = {}
    if marks:
        kw = dict(marks={k: [2.0] * len(v) for k, v in times.items()},
                  enrollment={k: 40.0 for k in times})
    ds = build_counting_format(times, window, **kw)
    if kind == "counting":
        ds = ds.with_covariates(["x"], np.arange(len(ds), dtype=float))
    path = tmp_path_factory.mktemp("rt") / "ev.csv"
    write_event_table(ds, path, kind=kind)
    back = parse_event_table(path, window=window)
    assert list(back.unit_id) == list(ds.unit_id)
    assert list(back.cluster_id) == list(ds.cluster_id)
    np.testing.assert_allclose(back.start, ds.start, atol=1e-12)
    np.testing.assert_allclose(back.stop, ds.stop, atol=1e-12)
    np.testing.assert_array_equal(back.status, ds.status)
    np.testing.assert_array_equal(back.enum, ds.enum)
    np.testing.assert_allclose(back.marks, ds.marks, atol=1e-12)
    if kind == "counting":
        np.testing.assert_array_equal(back.covariates, ds.covariates)


def test_simulation_output_round_trips(tmp_path):
    from rhl.simulate import SimulationConfig, generate_intensities, sample_events, to_dataset

    cfg = SimulationConfig(I=3, J=2, grid_size=201, seed=4)
    ds = to_dataset(sample_events(generate_intensities(cfg), cfg.seed))
    write_event_table(ds, tmp_path / "ev.csv", kind="raw")
    back = parse_event_table(tmp_path / "ev.csv")
    assert back.units == ds.units
    np.testing.assert_allclose(back.stop, ds.stop, atol=1e-12)
    np.testing.assert_array_equal(back.status, ds.status)


# --------------------------------------------------------------------------
# students

def raw_student(**kw):
    base = dict(origins="OnSite", gender="Male", highschool_type="Scientific", income="Medium",
                age=19, admission_score=80, ects1sem=30, course="a1", school="A", dropout3y=0)
    base.update(kw)
    return base


def test_age19_threshold():
    ds = derive_student_covariates([raw_student(age=19), raw_student(age=20)])
    assert [r.age19 for r in ds.records] == [0, 1]


def test_age19_from_dates():
    base = {k: v for k, v in raw_student().items() if k != "age"}
    ds = derive_student_covariates([
        base | {"birth_date": "2000-09-02", "enrollment_date": "2020-09-01"},
        base | {"birth_date": "2000-09-01", "enrollment_date": "2020-09-01"},
    ])
    assert [r.age19 for r in ds.records] == [0, 1]


def test_ects_from_exam_list():
    raw = {k: v for k, v in raw_student().items() if k != "ects1sem"}
    raw["exams"] = [(1, 12), (1, 8), (2, 6)]
    assert derive_student_covariates([raw]).records[0].ects1sem == 20


def test_unknown_level_is_rejected():
    with pytest.raises(UnknownCategoryLevel):
        derive_student_covariates([raw_student(income="Unknown")])


def test_reference_levels_are_the_first_levels():
    ds = derive_student_covariates([raw_student()])
    assert ds.reference_levels == {k: v[0] for k, v in CATEGORICAL_LEVELS.items()}
    with pytest.raises(ValueError):
        PredictionDataset(ds.records, {**ds.reference_levels, "income": "Low"})


def test_admission_score_range():
    with pytest.raises(ValueError):
        derive_student_covariates([raw_student(admission_score=59.9)])


def test_summarize_two_records():
    ds = derive_student_covariates([raw_student(ects1sem=50, dropout3y=0),
                                    raw_student(ects1sem=10, dropout3y=1)])
    tab = summarize(ds)
    assert tab["numeric"]["ects1sem"][0] == {"mean": 50.0, "sd": 0.0}
    assert tab["numeric"]["ects1sem"][1] == {"mean": 10.0, "sd": 0.0}


def test_summarize_single_group():
    ds = derive_student_covariates([raw_student(), raw_student(ects1sem=20)])
    tab = summarize(ds)
    assert tab["n"] == {0: 2, 1: 0}
    assert tab["categorical"]["income"][1] == {}
    assert 1 not in tab["numeric"]["ects1sem"]


def random_students(seed, n=100):
    rng = np.random.default_rng(seed)
    raws = []
    for i in range(n):
        raws.append(raw_student(
            student_id=str(i),
            **{k: str(rng.choice(v)) for k, v in CATEGORICAL_LEVELS.items() if k != "age19"},
            age=int(rng.integers(18, 23)), admission_score=float(rng.uniform(60, 100)),
            ects1sem=int(rng.integers(0, 40)), dropout3y=int(rng.integers(0, 2)),
        ))
    return derive_student_covariates(raws)


@given(seed=st.integers(0, 2**32 - 1))
def test_summarize_matches_tally(seed):
    ds = random_students(seed)
    tab = summarize(ds)
    for g in (0, 1):
        members = [r for r in ds.records if r.dropout3y == g]
        for name in CATEGORICAL_LEVELS:
            tally = Counter(getattr(r, name) for r in members)
            got = tab["categorical"][name][g]
            if members:
                assert {k: v["count"] for k, v in got.items() if v["count"]} == dict(tally)
                assert sum(v["percent"] for v in got.values()) == pytest.approx(100, abs=0.1)
        vals = np.array([r.admission_score for r in members])
        if vals.size > 1:
            assert tab["numeric"]["admission_score"][g]["mean"] == pytest.approx(vals.mean())
            assert tab["numeric"]["admission_score"][g]["sd"] == pytest.approx(vals.std(ddof=1))


def test_students_round_trip(tmp_path):
    ds = random_students(3, n=20)
    write_students(ds, tmp_path / "s.csv")
    assert read_students(tmp_path / "s.csv") == ds


def test_students_missing_column(tmp_path):
    (tmp_path / "s.csv").write_text("student_id,origins\n1,OnSite\n")
    with pytest.raises(MissingColumn):
        read_students(tmp_path / "s.csv")


def test_student_record_validation():
    with pytest.raises(ValueError):
        StudentRecord("1", "OnSite", "Male", "Scientific", "Medium", 0, 80.0, -1, "a", "A", 0)
