"""Event tables, counting-process datasets and student covariates.

Event times are rescaled internally to ``[0, 1]`` by the observation
window; ``RecurrentEventDataset.window`` keeps the original scale so times
can be reported (and written back) in the units they were read in.
"""

import csv
import datetime as _dt
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateEventTime,
    EmptyDataset,
    InconsistentEnumeration,
    MissingColumn,
    NonChronologicalRows,
    OutOfWindow,
    UnknownCategoryLevel,
)

DROPOUT_COUNT = "dropout_count"
_TILE_TOL = 1e-9


def _to_time(value):
    """Plain real, or an ISO date converted to a day ordinal."""
    if isinstance(value, (_dt.date, _dt.datetime)):
        return float(value.toordinal())
    if isinstance(value, str):
        value = value.strip()
        try:
            return float(value)
        except ValueError:
            return float(_dt.date.fromisoformat(value[:10]).toordinal())
    return float(value)


def fmt(x):
    """Shortest float repr that round-trips exactly."""
    return repr(float(x))


@dataclass(frozen=True)
class ObservationWindow:
    """Observation period ``[t0, t1]``; accepts reals or ISO date strings."""

    t0: float
    t1: float

    def __post_init__(self):
        t0, t1 = _to_time(self.t0), _to_time(self.t1)
        if not t0 < t1:
            raise ValueError(f"window requires t0 < t1, got [{t0}, {t1}]")
        object.__setattr__(self, "t0", t0)
        object.__setattr__(self, "t1", t1)

    @property
    def length(self):
        return self.t1 - self.t0

    def rescale(self, t):
        return (np.asarray(t, dtype=float) - self.t0) / self.length

    def restore(self, s):
        return np.asarray(s, dtype=float) * self.length + self.t0


def _ro(a, dtype=None):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RecurrentEventDataset:
    """Counting-process rows ``(start, stop, status)`` with unit labels.

    Columns are stored as read-only arrays in rescaled time; rows are sorted
    by ``(cluster_id, unit_id, start)`` and every unit tiles ``[0, 1]``.
    ``marks`` and ``covariates`` are ``n x len(names)`` matrices.
    """

    cluster_id: np.ndarray
    unit_id: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    status: np.ndarray
    enum: np.ndarray
    marks: np.ndarray
    covariates: np.ndarray
    window: ObservationWindow = field(default_factory=lambda: ObservationWindow(0.0, 1.0))
    mark_names: tuple = ()
    covariate_names: tuple = ()

    def __post_init__(self):
        n = len(self.start)
        object.__setattr__(self, "cluster_id", _ro([str(c) for c in self.cluster_id], object))
        object.__setattr__(self, "unit_id", _ro([str(u) for u in self.unit_id], object))
        for name in ("start", "stop"):
            object.__setattr__(self, name, _ro(getattr(self, name), float))
        object.__setattr__(self, "status", _ro(self.status, np.int64))
        object.__setattr__(self, "enum", _ro(self.enum, np.int64))
        object.__setattr__(self, "mark_names", tuple(self.mark_names))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(
            self, "marks", _ro(np.reshape(self.marks, (n, len(self.mark_names))), float)
        )
        object.__setattr__(
            self,
            "covariates",
            _ro(np.reshape(self.covariates, (n, len(self.covariate_names))), float),
        )
        _validate_rows(self)

    def __len__(self):
        return len(self.start)

    @property
    def units(self):
        """``(cluster_id, unit_id)`` pairs in row order, without repeats."""
        seen = dict.fromkeys(zip(self.cluster_id, self.unit_id))
        return list(seen)

    @property
    def column_names(self):
        return ("enum",) + self.mark_names + self.covariate_names

    def column(self, name):
        if name == "enum":
            return self.enum.astype(float)
        if name in self.mark_names:
            return self.marks[:, self.mark_names.index(name)]
        if name in self.covariate_names:
            return self.covariates[:, self.covariate_names.index(name)]
        raise MissingColumn(f"no column named {name!r}")

    def unit_slices(self):
        """Map ``unit_id -> slice`` of its contiguous rows."""
        out = {}
        uid = self.unit_id
        if len(uid) == 0:
            return out
        breaks = np.flatnonzero(uid[1:] != uid[:-1]) + 1
        bounds = np.concatenate([[0], breaks, [len(uid)]])
        for a, b in zip(bounds[:-1], bounds[1:]):
            out[uid[a]] = slice(int(a), int(b))
        return out

    def subset(self, rows):
        rows = np.asarray(rows)
        return RecurrentEventDataset(
            cluster_id=self.cluster_id[rows],
            unit_id=self.unit_id[rows],
            start=self.start[rows],
            stop=self.stop[rows],
            status=self.status[rows],
            enum=self.enum[rows],
            marks=self.marks[rows],
            covariates=self.covariates[rows],
            window=self.window,
            mark_names=self.mark_names,
            covariate_names=self.covariate_names,
        )

    def unit(self, unit_id):
        sl = self.unit_slices().get(str(unit_id))
        if sl is None:
            raise KeyError(unit_id)
        return self.subset(np.arange(sl.start, sl.stop))

    def event_counts(self):
        """``N_ij(T)`` per unit, in unit order."""
        return {u: int(self.status[sl].sum()) for u, sl in self.unit_slices().items()}

    def relabel(self, cluster_map, unit_map):
        """Copy with labels renamed (rows re-sorted under the new labels)."""
        return _sorted_dataset(
            cluster_id=[cluster_map[c] for c in self.cluster_id],
            unit_id=[unit_map[u] for u in self.unit_id],
            start=self.start,
            stop=self.stop,
            status=self.status,
            enum=self.enum,
            marks=self.marks,
            covariates=self.covariates,
            window=self.window,
            mark_names=self.mark_names,
            covariate_names=self.covariate_names,
        )

    def with_covariates(self, names, values):
        """Copy with extra covariate columns appended."""
        values = np.reshape(np.asarray(values, dtype=float), (len(self), len(names)))
        return RecurrentEventDataset(
            cluster_id=self.cluster_id,
            unit_id=self.unit_id,
            start=self.start,
            stop=self.stop,
            status=self.status,
            enum=self.enum,
            marks=self.marks,
            covariates=np.hstack([self.covariates, values]),
            window=self.window,
            mark_names=self.mark_names,
            covariate_names=self.covariate_names + tuple(names),
        )


def _sorted_dataset(**cols):
    order = np.lexsort(
        (np.asarray(cols["start"], dtype=float), np.asarray(cols["unit_id"], dtype=object).astype(str),
         np.asarray(cols["cluster_id"], dtype=object).astype(str))
    )
    for key in ("cluster_id", "unit_id", "start", "stop", "status", "enum", "marks", "covariates"):
        cols[key] = np.asarray(cols[key])[order]
    return RecurrentEventDataset(**cols)


def _validate_rows(ds):
    if len(ds) == 0:
        raise EmptyDataset("dataset has no rows")
    if np.any(ds.start >= ds.stop):
        bad = int(np.flatnonzero(ds.start >= ds.stop)[0])
        raise NonChronologicalRows(
            f"row {bad} of unit {ds.unit_id[bad]!r}: start {ds.start[bad]} >= stop {ds.stop[bad]}"
        )
    unit_cluster = {}
    for c, u in zip(ds.cluster_id, ds.unit_id):
        if unit_cluster.setdefault(u, c) != c:
            raise NonChronologicalRows(f"unit {u!r} appears in clusters {unit_cluster[u]!r} and {c!r}")
    key = list(zip(ds.cluster_id, ds.unit_id))
    if any(key[i] > key[i + 1] for i in range(len(key) - 1)):
        raise NonChronologicalRows("rows are not sorted by (cluster_id, unit_id, start)")
    for u, sl in ds.unit_slices().items():
        s, e = ds.start[sl], ds.stop[sl]
        if abs(s[0]) > _TILE_TOL or abs(e[-1] - 1.0) > _TILE_TOL:
            raise NonChronologicalRows(f"unit {u!r} does not cover the whole window")
        if np.any(np.abs(s[1:] - e[:-1]) > _TILE_TOL):
            raise NonChronologicalRows(f"unit {u!r} has overlapping, unordered or gapped intervals")
        en, st = ds.enum[sl], ds.status[sl]
        expected = np.concatenate([[0], np.cumsum(st[:-1])])
        if not np.array_equal(en, expected):
            raise InconsistentEnumeration(f"unit {u!r}: enum does not count prior events")


def build_counting_format(event_times, window, marks=None, enrollment=None, covariates=None):
    """Build start/stop rows from per-unit event times.

    Parameters
    ----------
    event_times : mapping
        ``(cluster_id, unit_id) -> increasing event times`` in window units.
        Units without events map to an empty sequence.
    window : ObservationWindow
    marks : mapping, optional
        ``(cluster_id, unit_id) -> multiplicity`` of each event day.  When
        given, a ``dropout_count`` mark is produced: the multiplicity divided
        by the unit's enrollment (or left unstandardised, with a warning, when
        no enrollment is available).  A row starting at an event carries that
        event's mark; the first row carries 0.
    enrollment : mapping, optional
        ``(cluster_id, unit_id) -> number of students enrolled at t0``.
    covariates : mapping, optional
        ``name -> {(cluster_id, unit_id): value}`` of time-constant unit
        covariates.

    Returns
    -------
    RecurrentEventDataset
    """
    covariates = covariates or {}
    use_marks = marks is not None or enrollment is not None
    if marks is not None and enrollment is None:
        warnings.warn("no enrollment counts: dropout_count marks are not standardised", stacklevel=2)
    cols = defaultdict(list)
    cov_names = tuple(covariates)
    for key in sorted(event_times, key=lambda k: (str(k[0]), str(k[1]))):
        cluster, unit = key
        times = np.asarray(event_times[key], dtype=float)
        if times.size and np.any(np.diff(times) == 0):
            raise DuplicateEventTime(f"unit {unit!r} has repeated event times; collapse them first")
        if times.size and np.any(np.diff(times) < 0):
            raise NonChronologicalRows(f"unit {unit!r} event times are not increasing")
        if times.size and (times[0] <= window.t0 or times[-1] >= window.t1):
            raise OutOfWindow(f"unit {unit!r} has events outside ({window.t0}, {window.t1})")
        s = window.rescale(times)
        bounds = np.concatenate([[0.0], s, [1.0]])
        nrow = times.size + 1
        cols["cluster_id"] += [cluster] * nrow
        cols["unit_id"] += [unit] * nrow
        cols["start"] += list(bounds[:-1])
        cols["stop"] += list(bounds[1:])
        cols["status"] += [1] * times.size + [0]
        cols["enum"] += list(range(nrow))
        if use_marks:
            mult = np.ones(times.size) if marks is None else np.asarray(marks[key], dtype=float)
            if mult.shape != times.shape:
                raise ValueError(f"unit {unit!r}: marks and event times differ in length")
            denom = 1.0
            if enrollment is not None:
                denom = float(enrollment[key])
                if not denom > 0:
                    raise ValueError(f"unit {unit!r}: enrollment must be positive")
            cols["marks"] += [[0.0]] + [[m / denom] for m in mult]
        cols["covariates"] += [[float(covariates[c][key]) for c in cov_names]] * nrow
    n = len(cols["start"])
    if n == 0:
        raise EmptyDataset("no units supplied")
    return RecurrentEventDataset(
        cluster_id=cols["cluster_id"],
        unit_id=cols["unit_id"],
        start=cols["start"],
        stop=cols["stop"],
        status=cols["status"],
        enum=cols["enum"],
        marks=cols["marks"] if use_marks else np.zeros((n, 0)),
        covariates=cols["covariates"] if cov_names else np.zeros((n, 0)),
        window=window,
        mark_names=(DROPOUT_COUNT,) if use_marks else (),
        covariate_names=cov_names,
    )


RAW_COLUMNS = ("cluster_id", "unit_id", "time")
COUNTING_COLUMNS = ("cluster_id", "unit_id", "start", "stop", "status", "enum")


def parse_event_table(path, schema=None, window=None):
    """Read an events CSV in raw or counting format.

    Raw files have one row per event day (``cluster_id, unit_id, time,
    multiplicity[, enrollment]``); repeated ``(unit, time)`` rows are
    collapsed with their multiplicities summed, and a blank ``time`` declares
    a unit without events.  Counting-format files carry ``start, stop,
    status, enum`` followed by mark and covariate columns.

    Parameters
    ----------
    path : path-like
    schema : dict, optional
        Maps canonical column names to the file's column names, and may list
        ``"marks"`` (default ``["dropout_count"]``) to tell mark columns from
        covariates in counting-format files.
    window : ObservationWindow, optional
        Defaults to ``[0, 1]``.
    """
    schema = dict(schema or {})
    window = window or ObservationWindow(0.0, 1.0)
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = [r for r in reader if any(cell.strip() for cell in r)]
    if header is None:
        raise EmptyDataset(f"{path} is empty")
    header = [h.strip() for h in header]

    def col(name):
        actual = schema.get(name, name)
        if actual not in header:
            raise MissingColumn(f"{path}: column {actual!r} not found")
        return header.index(actual)

    counting = schema.get("start", "start") in header
    if not rows:
        raise EmptyDataset(f"{path} has a header but no rows")
    if counting:
        return _parse_counting(rows, header, col, schema, window)
    return _parse_raw(rows, header, col, schema, window)


def _optional(header, schema, name):
    actual = schema.get(name, name)
    return header.index(actual) if actual in header else None


def _parse_raw(rows, header, col, schema, window):
    ic, iu, it = (col(c) for c in RAW_COLUMNS)
    im = _optional(header, schema, "multiplicity")
    ie = _optional(header, schema, "enrollment")
    per_unit = {}
    enrollment = {}
    for r in rows:
        key = (r[ic].strip(), r[iu].strip())
        per_unit.setdefault(key, Counter())
        if ie is not None and r[ie].strip():
            enrollment[key] = float(r[ie])
        if not r[it].strip():
            continue
        t = _to_time(r[it])
        if not window.t0 < t < window.t1:
            raise OutOfWindow(f"unit {key[1]!r}: event at {r[it]!r} outside the window")
        per_unit[key][t] += float(r[im]) if im is not None and r[im].strip() else 1.0
    times = {k: sorted(v) for k, v in per_unit.items()}
    mult = {k: [per_unit[k][t] for t in times[k]] for k in per_unit}
    has_marks = im is not None or ie is not None
    if ie is not None and len(enrollment) < len(per_unit):
        warnings.warn("enrollment missing for some units: marks left unstandardised", stacklevel=3)
        enroll = None
    else:
        enroll = enrollment if ie is not None else None
    if not has_marks:
        return build_counting_format(times, window)
    with warnings.catch_warnings():
        if enroll is not None:
            warnings.simplefilter("ignore")
        return build_counting_format(times, window, marks=mult, enrollment=enroll)


def _parse_counting(rows, header, col, schema, window):
    idx = {c: col(c) for c in COUNTING_COLUMNS}
    used = {header[i] for i in idx.values()}
    extra = [h for h in header if h not in used]
    mark_cols = [h for h in extra if h in schema.get("marks", [DROPOUT_COUNT])]
    cov_cols = [h for h in extra if h not in mark_cols]
    c = {k: [r[i].strip() for r in rows] for k, i in idx.items()}
    start = window.rescale([_to_time(v) for v in c["start"]])
    stop = window.rescale([_to_time(v) for v in c["stop"]])
    if np.any(start >= stop):
        raise NonChronologicalRows("a row has start >= stop")
    return _sorted_dataset(
        cluster_id=c["cluster_id"],
        unit_id=c["unit_id"],
        start=start,
        stop=stop,
        status=[int(float(v)) for v in c["status"]],
        enum=[int(float(v)) for v in c["enum"]],
        marks=[[float(r[header.index(h)]) for h in mark_cols] for r in rows],
        covariates=[[float(r[header.index(h)]) for h in cov_cols] for r in rows],
        window=window,
        mark_names=tuple(mark_cols),
        covariate_names=tuple(cov_cols),
    )


def write_event_table(dataset, path, kind="counting"):
    """Write ``dataset`` as CSV in original window units.

    ``kind="raw"`` emits one row per event; a ``dropout_count`` mark is
    written as an already standardised multiplicity with enrollment 1 and
    covariates are dropped.
    ``kind="counting"`` emits every row with marks then covariates.
    """
    path = Path(path)
    w = dataset.window
    with path.open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        if kind == "raw":
            has_mark = DROPOUT_COUNT in dataset.mark_names
            extra = ["multiplicity", "enrollment"] if has_mark else []
            out.writerow(["cluster_id", "unit_id", "time"] + extra)
            mark = dataset.column(DROPOUT_COUNT) if has_mark else None
            for u, sl in dataset.unit_slices().items():
                c = dataset.cluster_id[sl.start]
                hits = np.flatnonzero(dataset.status[sl] == 1)
                if hits.size == 0:
                    out.writerow([c, u, ""] + (["", "1"] if has_mark else []))
                for h in hits:
                    row = [c, u, fmt(w.restore(dataset.stop[sl][h]))]
                    if has_mark:
                        # the mark sits on the row starting at the event
                        row += [fmt(mark[sl][h + 1]), "1"]
                    out.writerow(row)
        elif kind == "counting":
            out.writerow(list(COUNTING_COLUMNS) + list(dataset.mark_names) + list(dataset.covariate_names))
            start, stop = w.restore(dataset.start), w.restore(dataset.stop)
            for i in range(len(dataset)):
                out.writerow(
                    [dataset.cluster_id[i], dataset.unit_id[i], fmt(start[i]), fmt(stop[i]),
                     int(dataset.status[i]), int(dataset.enum[i])]
                    + [fmt(v) for v in dataset.marks[i]]
                    + [fmt(v) for v in dataset.covariates[i]]
                )
        else:
            raise ValueError(f"unknown kind {kind!r}")
    return path


# --------------------------------------------------------------------------
# student-level data

CATEGORICAL_LEVELS = {
    "origins": ("OnSite", "Commuter", "Offsite"),
    "gender": ("Male", "Female"),
    "highschool_type": ("Scientific", "Classical", "Others", "Technical"),
    "income": ("Medium", "Grant", "High", "Low"),
    "age19": (0, 1),
}
REFERENCE_LEVELS = {k: v[0] for k, v in CATEGORICAL_LEVELS.items()}
NUMERIC_FIELDS = ("admission_score", "ects1sem")
STUDENT_COLUMNS = (
    "student_id", "origins", "gender", "highschool_type", "income", "age19",
    "admission_score", "career_start_ay", "ects1sem", "course", "school", "dropout3y",
)


@dataclass(frozen=True)
class StudentRecord:
    student_id: str
    origins: str
    gender: str
    highschool_type: str
    income: str
    age19: int
    admission_score: float
    ects1sem: int
    course_id: str
    school_id: str
    dropout3y: int
    career_start_ay: str = ""

    def __post_init__(self):
        for name, levels in CATEGORICAL_LEVELS.items():
            if getattr(self, name) not in levels:
                raise UnknownCategoryLevel(
                    f"student {self.student_id}: {name}={getattr(self, name)!r} not in {levels}"
                )
        if not 60.0 <= self.admission_score <= 100.0:
            raise ValueError(f"student {self.student_id}: admission_score outside [60, 100]")
        if self.ects1sem < 0:
            raise ValueError(f"student {self.student_id}: negative ects1sem")
        if self.dropout3y not in (0, 1):
            raise ValueError(f"student {self.student_id}: dropout3y must be 0 or 1")


@dataclass(frozen=True)
class PredictionDataset:
    records: tuple
    reference_levels: dict = field(default_factory=lambda: dict(REFERENCE_LEVELS))

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.reference_levels != REFERENCE_LEVELS:
            raise ValueError("reference levels must be the first level of each categorical field")

    def __len__(self):
        return len(self.records)

    @property
    def outcome(self):
        return np.array([r.dropout3y for r in self.records], dtype=float)


def _coerce_category(name, value):
    if name == "age19":
        try:
            value = int(float(value))
        except (TypeError, ValueError):
            raise UnknownCategoryLevel(f"age19={value!r} is not 0/1") from None
    if value not in CATEGORICAL_LEVELS[name]:
        raise UnknownCategoryLevel(f"{name}={value!r} not in {CATEGORICAL_LEVELS[name]}")
    return value


def _age_at(birth, on):
    birth, on = _dt.date.fromisoformat(str(birth)[:10]), _dt.date.fromisoformat(str(on)[:10])
    return on.year - birth.year - ((on.month, on.day) < (birth.month, birth.day))


def derive_student_covariates(raw_records):
    """Turn raw student records into a :class:`PredictionDataset`.

    Each raw record is a mapping with the categorical fields, the
    ``admission_score``, the ``course``/``school`` labels and ``dropout3y``,
    plus either ``age`` (completed years at enrollment) or ``birth_date`` and
    ``enrollment_date``, and either ``exams`` (iterable of ``(semester,
    credits)``) or a ready ``ects1sem``.  ``age19`` is 1 when the age at
    enrollment exceeds 19.
    """
    out = []
    for i, raw in enumerate(raw_records):
        if "age" in raw:
            age = int(raw["age"])
        else:
            age = _age_at(raw["birth_date"], raw["enrollment_date"])
        if "exams" in raw:
            ects = int(sum(credits for semester, credits in raw["exams"] if int(semester) == 1))
        else:
            ects = int(raw["ects1sem"])
        out.append(
            StudentRecord(
                student_id=str(raw.get("student_id", i + 1)),
                origins=_coerce_category("origins", raw["origins"]),
                gender=_coerce_category("gender", raw["gender"]),
                highschool_type=_coerce_category("highschool_type", raw["highschool_type"]),
                income=_coerce_category("income", raw["income"]),
                age19=int(age > 19),
                admission_score=float(raw["admission_score"]),
                ects1sem=ects,
                course_id=str(raw["course"]),
                school_id=str(raw["school"]),
                dropout3y=int(raw["dropout3y"]),
                career_start_ay=str(raw.get("career_start_ay", "")),
            )
        )
    return PredictionDataset(tuple(out))


def read_students(path):
    """Read a students CSV whose header uses the lower-snake-case variable names."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in STUDENT_COLUMNS if c != "career_start_ay" and c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise EmptyDataset(f"{path} has no students")
    records = []
    for r in rows:
        records.append(
            StudentRecord(
                student_id=r["student_id"],
                origins=_coerce_category("origins", r["origins"]),
                gender=_coerce_category("gender", r["gender"]),
                highschool_type=_coerce_category("highschool_type", r["highschool_type"]),
                income=_coerce_category("income", r["income"]),
                age19=_coerce_category("age19", r["age19"]),
                admission_score=float(r["admission_score"]),
                ects1sem=int(float(r["ects1sem"])),
                course_id=r["course"],
                school_id=r["school"],
                dropout3y=int(float(r["dropout3y"])),
                career_start_ay=r.get("career_start_ay", "") or "",
            )
        )
    return PredictionDataset(tuple(records))


def write_students(dataset, path):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(STUDENT_COLUMNS)
        for r in dataset.records:
            out.writerow(
                [r.student_id, r.origins, r.gender, r.highschool_type, r.income, r.age19,
                 fmt(r.admission_score), r.career_start_ay, r.ects1sem, r.course_id,
                 r.school_id, r.dropout3y]
            )
    return path


def summarize(dataset, by="dropout3y"):
    """Descriptive statistics per outcome group.

    Numeric fields get mean and sample standard deviation (0 for groups of
    one); categorical fields get counts and within-group percentages.  Both
    outcome groups are always present, possibly empty.
    """
    groups = {0: [], 1: []}
    for r in dataset.records:
        groups[int(getattr(r, by))].append(r)
    table = {"n": {g: len(rs) for g, rs in groups.items()}, "numeric": {}, "categorical": {}}
    for name in NUMERIC_FIELDS:
        table["numeric"][name] = {}
        for g, rs in groups.items():
            vals = np.array([getattr(r, name) for r in rs], dtype=float)
            if vals.size == 0:
                continue
            sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
            table["numeric"][name][g] = {"mean": float(np.mean(vals)), "sd": sd}
    for name, levels in CATEGORICAL_LEVELS.items():
        table["categorical"][name] = {}
        for g, rs in groups.items():
            if not rs:
                table["categorical"][name][g] = {}
                continue
            counts = Counter(getattr(r, name) for r in rs)
            table["categorical"][name][g] = {
                lvl: {"count": counts.get(lvl, 0), "percent": 100.0 * counts.get(lvl, 0) / len(rs)}
                for lvl in levels
            }
    return table

