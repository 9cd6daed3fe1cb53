"""Synthetic population: persons, weekly visit schedules and locations.

Visits are held column-wise (numpy arrays) so that a city-sized visit file
(millions of rows) fits comfortably in memory; :class:`Visit` records are
materialised only on request.
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, fields
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DuplicatePid,
    DurationMismatch,
    HeaderMismatch,
    NegativeDuration,
    PopulationError,
    RowParseError,
    UnknownPid,
)

log = logging.getLogger(__name__)

DAYS_PER_WEEK = 7
SECONDS_PER_DAY = 86400

PERSON_HEADER = (
    "hid,pid,age,sex,employment_status,race,hispanic,designation,hh_size,hh_income,"
    "workers_in_family,lid,longitude,latitude,admin1,admin2,admin3,admin4"
).split(",")
VISIT_HEADER = "daynum,pid,activity_number,activity_type,start_time,end_time,duration,lid".split(",")
LOCATION_HEADER = ["lid", "weight"]


class ActivityType(enum.IntEnum):
    TRANSIT = 0
    HOME = 1
    WORK = 2
    SHOPPING = 3
    OTHER = 4
    SCHOOL = 5
    COLLEGE = 6
    RELIGION = 7


@dataclass(frozen=True)
class Person:
    hid: int
    pid: int
    age: int
    sex: int
    employment_status: int
    race: int
    hispanic: int
    designation: str
    hh_size: int
    hh_income: int
    workers_in_family: int
    residence_lid: int
    longitude: float
    latitude: float
    admin1: str
    admin2: str
    admin3: str
    admin4: str

    def as_row(self) -> list:
        return [getattr(self, f.name) for f in fields(self)]


@dataclass(frozen=True)
class Visit:
    daynum: int
    pid: int
    activity_number: int
    activity_type: int
    start_time: int
    end_time: int
    duration: int
    lid: int


_VISIT_COLUMNS = ("daynum", "pidx", "activity_number", "activity_type", "start", "end", "lid")


class VisitTable:
    """Column store of visits; ``pidx`` is the dense person index, not the pid."""

    __slots__ = _VISIT_COLUMNS

    def __init__(self, daynum, pidx, activity_number, activity_type, start, end, lid):
        self.daynum = np.asarray(daynum, dtype=np.int8)
        self.pidx = np.asarray(pidx, dtype=np.int64)
        self.activity_number = np.asarray(activity_number, dtype=np.int32)
        self.activity_type = np.asarray(activity_type, dtype=np.int8)
        self.start = np.asarray(start, dtype=np.int64)
        self.end = np.asarray(end, dtype=np.int64)
        self.lid = np.asarray(lid, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.pidx)

    @classmethod
    def empty(cls) -> "VisitTable":
        return cls(*([[]] * len(_VISIT_COLUMNS)))

    def take(self, index) -> "VisitTable":
        return VisitTable(*(getattr(self, c)[index] for c in _VISIT_COLUMNS))

    def sorted(self) -> "VisitTable":
        """Sorted by (day, person, start, activity number)."""
        order = np.lexsort((self.activity_number, self.start, self.pidx, self.daynum))
        return self.take(order)

    def equals(self, other: "VisitTable") -> bool:
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in _VISIT_COLUMNS)


class Population:
    """Persons in file order plus their visit table.

    The dense index of a person is their row number in the person file.
    """

    def __init__(
        self,
        persons: Sequence[Person],
        visits: VisitTable,
        location_weights: dict[int, float] | None = None,
    ):
        self.persons = list(persons)
        self.visits = visits.sorted()
        self.location_weights = dict(location_weights or {})
        self._index = {p.pid: i for i, p in enumerate(self.persons)}
        if len(self._index) != len(self.persons):
            raise DuplicatePid("duplicate pid in person list")
        self._day_bounds = np.searchsorted(self.visits.daynum, np.arange(DAYS_PER_WEEK + 1))

    def __len__(self) -> int:
        return len(self.persons)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Population):
            return NotImplemented
        return (
            self.persons == other.persons
            and self.visits.equals(other.visits)
            and self.location_weights == other.location_weights
        )

    def index_of(self, pid: int) -> int:
        return self._index[pid]

    def person(self, pid: int) -> Person:
        return self.persons[self._index[pid]]

    @cached_property
    def pids(self) -> np.ndarray:
        return np.array([p.pid for p in self.persons], dtype=np.int64)

    @cached_property
    def residence(self) -> np.ndarray:
        return np.array([p.residence_lid for p in self.persons], dtype=np.int64)

    @cached_property
    def locations(self) -> np.ndarray:
        """Sorted array of every location id (visited or residence)."""
        return np.unique(np.concatenate([self.visits.lid, self.residence]))

    def weight(self, lid: int) -> float:
        return self.location_weights.get(int(lid), 1.0)

    def day_table(self, day: int) -> VisitTable:
        lo, hi = self._day_bounds[day], self._day_bounds[day + 1]
        return self.visits.take(slice(lo, hi))

    def visit(self, i: int) -> Visit:
        v = self.visits
        return _make_visit(self.pids, v, i)

    def visits_of(self, pid: int, day: int) -> list[Visit]:
        idx = self._index[pid]
        t = self.day_table(day)
        rows = np.flatnonzero(t.pidx == idx)
        return [_make_visit(self.pids, t, i) for i in rows]

    def location_visits(self, day: int, lid: int) -> list[Visit]:
        """Baseline visits at ``lid`` on ``day`` ordered by start time, ties by pid."""
        t = self.day_table(day)
        rows = np.flatnonzero(t.lid == lid)
        out = [_make_visit(self.pids, t, i) for i in rows]
        out.sort(key=lambda v: (v.start_time, v.pid, v.activity_number))
        return out

    def visit_counts(self) -> dict[int, int]:
        """Total baseline visits per location over the week (residences included)."""
        lids, counts = np.unique(self.visits.lid, return_counts=True)
        out = {int(l): 0 for l in self.locations}
        out.update({int(l): int(c) for l, c in zip(lids, counts)})
        return out


def _make_visit(pids: np.ndarray, t: VisitTable, i: int) -> Visit:
    s, e = int(t.start[i]), int(t.end[i])
    return Visit(
        daynum=int(t.daynum[i]),
        pid=int(pids[t.pidx[i]]),
        activity_number=int(t.activity_number[i]),
        activity_type=int(t.activity_type[i]),
        start_time=s,
        end_time=e,
        duration=e - s,
        lid=int(t.lid[i]),
    )


# -- ingestion ----------------------------------------------------------------


def _check_header(path: Path, expected: list[str]) -> None:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise HeaderMismatch("empty file, expected a header", line=1, path=path)
    header = [h.strip() for h in header]
    if header != expected:
        raise HeaderMismatch(f"header {','.join(header)!r} != {','.join(expected)!r}", line=1, path=path)


def _locate_bad_row(path: Path, converters: Sequence) -> None:
    """Slow path: re-read with the csv module to report the first bad line."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            line = reader.line_num
            if len(row) != len(converters):
                raise RowParseError(f"expected {len(converters)} fields, got {len(row)}", line=line, path=path)
            for value, conv in zip(row, converters):
                try:
                    conv(value)
                except (TypeError, ValueError) as exc:
                    raise RowParseError(f"bad value {value!r}: {exc}", line=line, path=path) from None


def _read_frame(path: Path, header: list[str], dtypes: dict, converters: Sequence) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    _check_header(path, header)
    try:
        df = pd.read_csv(path, dtype=dtypes, keep_default_na=False, na_filter=False, skipinitialspace=True)
    except (ValueError, pd.errors.ParserError):
        _locate_bad_row(path, converters)
        raise
    if list(df.columns) != header:
        raise HeaderMismatch("unexpected columns", line=1, path=path)
    return df


def _int(s: str) -> int:
    return int(s.strip())


def load_persons(path) -> list[Person]:
    """Read a person CSV; row order is preserved and becomes the dense index."""
    path = Path(path)
    str_cols = ("designation", "admin1", "admin2", "admin3", "admin4")
    dtypes = {c: (str if c in str_cols else np.int64) for c in PERSON_HEADER}
    dtypes["longitude"] = dtypes["latitude"] = np.float64
    converters = [str if c in str_cols else (float if c in ("longitude", "latitude") else _int) for c in PERSON_HEADER]
    df = _read_frame(path, PERSON_HEADER, dtypes, converters)

    dup = df["pid"].duplicated()
    if dup.any():
        row = int(np.flatnonzero(dup.to_numpy())[0])
        raise DuplicatePid(f"pid {int(df['pid'].iloc[row])} appears more than once", line=row + 2, path=path)
    bad = (df["age"] < 0) | (df["hh_size"] < 1)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise RowParseError("age must be >= 0 and hh_size >= 1", line=row + 2, path=path)

    cols = [df[c].tolist() for c in PERSON_HEADER]
    return [
        Person(
            hid=int(r[0]), pid=int(r[1]), age=int(r[2]), sex=int(r[3]), employment_status=int(r[4]),
            race=int(r[5]), hispanic=int(r[6]), designation=r[7], hh_size=int(r[8]), hh_income=int(r[9]),
            workers_in_family=int(r[10]), residence_lid=int(r[11]), longitude=float(r[12]),
            latitude=float(r[13]), admin1=r[14], admin2=r[15], admin3=r[16], admin4=r[17],
        )
        for r in zip(*cols)
    ]


def load_visits(path, persons: Sequence[Person]) -> VisitTable:
    """Read a visit CSV against an already loaded person list."""
    path = Path(path)
    dtypes = {c: np.int64 for c in VISIT_HEADER}
    df = _read_frame(path, VISIT_HEADER, dtypes, [_int] * len(VISIT_HEADER))
    lines = np.arange(len(df)) + 2

    index = {p.pid: i for i, p in enumerate(persons)}
    pid_col = df["pid"].to_numpy()
    pidx = np.fromiter((index.get(int(p), -1) for p in pid_col), dtype=np.int64, count=len(pid_col))
    if (pidx < 0).any():
        k = int(np.flatnonzero(pidx < 0)[0])
        raise UnknownPid(f"pid {int(pid_col[k])} not in person file", line=int(lines[k]), path=path)

    day = df["daynum"].to_numpy()
    if ((day < 0) | (day >= DAYS_PER_WEEK)).any():
        k = int(np.flatnonzero((day < 0) | (day >= DAYS_PER_WEEK))[0])
        raise RowParseError(f"daynum {int(day[k])} outside 0..6", line=int(lines[k]), path=path)
    atype = df["activity_type"].to_numpy()
    if ((atype < 0) | (atype > max(ActivityType))).any():
        k = int(np.flatnonzero((atype < 0) | (atype > max(ActivityType)))[0])
        raise RowParseError(f"unknown activity_type {int(atype[k])}", line=int(lines[k]), path=path)

    start = df["start_time"].to_numpy()
    end = df["end_time"].to_numpy()
    if (end < start).any():
        k = int(np.flatnonzero(end < start)[0])
        raise NegativeDuration(f"end_time {int(end[k])} < start_time {int(start[k])}", line=int(lines[k]), path=path)
    delta = np.abs(df["duration"].to_numpy() - (end - start))
    if (delta > 1).any():
        k = int(np.flatnonzero(delta > 1)[0])
        raise DurationMismatch("duration differs from end_time - start_time", line=int(lines[k]), path=path)
    if (delta == 1).any():
        log.warning("%s: %d visits with duration off by 1 s from end-start", path, int((delta == 1).sum()))

    return VisitTable(day, pidx, df["activity_number"].to_numpy(), atype, start, end, df["lid"].to_numpy())


def load_location_weights(path) -> dict[int, float]:
    path = Path(path)
    df = _read_frame(path, LOCATION_HEADER, {"lid": np.int64, "weight": np.float64}, [_int, float])
    if (df["weight"] < 0).any():
        k = int(np.flatnonzero((df["weight"] < 0).to_numpy())[0])
        raise RowParseError("location weight must be >= 0", line=k + 2, path=path)
    return dict(zip(df["lid"].astype(int).tolist(), df["weight"].astype(float).tolist()))


def load_population(person_file, visit_file, location_file=None) -> Population:
    persons = load_persons(person_file)
    visits = load_visits(visit_file, persons)
    weights = load_location_weights(location_file) if location_file else None
    pop = Population(persons, visits, weights)
    for problem in check_invariants(pop):
        log.warning("population: %s", problem)
    return pop


# -- writers ------------------------------------------------------------------


def write_persons(path, persons: Iterable[Person]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PERSON_HEADER)
        for p in persons:
            w.writerow(p.as_row())
    return path


def write_visits(path, population: Population) -> Path:
    path = Path(path)
    v = population.visits
    pids = population.pids[v.pidx]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VISIT_HEADER)
        for row in zip(
            v.daynum.tolist(), pids.tolist(), v.activity_number.tolist(), v.activity_type.tolist(),
            v.start.tolist(), v.end.tolist(), (v.end - v.start).tolist(), v.lid.tolist(),
        ):
            w.writerow(row)
    return path


def write_location_weights(path, weights: dict[int, float]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOCATION_HEADER)
        for lid in sorted(weights):
            w.writerow([lid, float(weights[lid])])
    return path


# -- invariants -----------------------------------------------------------------


def check_invariants(pop: Population) -> list[str]:
    """Return human-readable descriptions of every violated population invariant."""
    problems = []
    households: dict[int, int] = {}
    for p in pop.persons:
        if p.age < 0:
            problems.append(f"pid {p.pid}: negative age")
        if p.hh_size < 1:
            problems.append(f"pid {p.pid}: hh_size < 1")
        if households.setdefault(p.hid, p.residence_lid) != p.residence_lid:
            problems.append(f"household {p.hid}: members live at different residences")
    v = pop.visits
    if len(v):
        if (v.end < v.start).any():
            problems.append("visit with negative duration")
        if (v.pidx < 0).any() or (v.pidx >= len(pop)).any():
            problems.append("visit refers to unknown person")
        # consecutive visits of the same person and day must not overlap
        same = (v.pidx[1:] == v.pidx[:-1]) & (v.daynum[1:] == v.daynum[:-1])
        if (same & (v.start[1:] < v.end[:-1])).any():
            problems.append("overlapping visits within one person-day")
    return problems


# -- generators -------------------------------------------------------------------

# (day -> work lid) for each Smallville citizen; weekends for person 3 continue at lid 2
_SMALLVILLE_WORK = {
    1: [1, 1, 1, 1, 1, 1, 1],
    2: [1, 1, 1, 2, 2, 2, 2],
    3: [1, 3, 3, 2, 2, 2, 2],
}


def generate_smallville() -> Population:
    """Three citizens who work from midnight to 1 am and spend the rest of the day at home."""
    persons = [
        Person(
            hid=pid, pid=pid, age=40, sex=1 + (pid % 2), employment_status=1, race=1, hispanic=0,
            designation="none", hh_size=1, hh_income=50000, workers_in_family=1, residence_lid=pid + 10,
            longitude=0.0, latitude=0.0, admin1="51", admin2="540", admin3="000100", admin4="1",
        )
        for pid in (1, 2, 3)
    ]
    cols: dict[str, list] = {c: [] for c in _VISIT_COLUMNS}
    for idx, person in enumerate(persons):
        for day in range(DAYS_PER_WEEK):
            for number, (atype, start, end, lid) in enumerate(
                [
                    (ActivityType.WORK, 0, 3600, _SMALLVILLE_WORK[person.pid][day]),
                    (ActivityType.HOME, 3600, SECONDS_PER_DAY, person.residence_lid),
                ]
            ):
                for c, val in zip(_VISIT_COLUMNS, (day, idx, number, atype, start, end, lid)):
                    cols[c].append(val)
    return Population(persons, VisitTable(*(cols[c] for c in _VISIT_COLUMNS)))


_ACTIVITY_CHOICES = np.array(
    [ActivityType.WORK, ActivityType.SHOPPING, ActivityType.OTHER, ActivityType.SCHOOL,
     ActivityType.COLLEGE, ActivityType.RELIGION]
)
_ACTIVITY_WEIGHTS = np.array([0.35, 0.2, 0.25, 0.1, 0.05, 0.05])
_DESIGNATIONS = ["none", "retail", "education", "health", "military", "office", "industry"]
RESIDENCE_LID_BASE = 1_000_000


def generate_random_population(n_people: int, n_locations: int, seed: int) -> Population:
    """Households of 1-5 people with 1-3 non-home visits per day at random activity locations.

    Activity locations have lids ``1..n_locations``; household ``h`` lives at
    ``RESIDENCE_LID_BASE + h``. A one-person population stays home.
    """
    if n_people < 1:
        raise PopulationError("n_people must be >= 1")
    if n_locations < 1:
        raise PopulationError("n_locations must be >= 1")
    rng = np.random.default_rng(seed)

    persons: list[Person] = []
    hid = 0
    while len(persons) < n_people:
        hid += 1
        size = min(int(rng.integers(1, 6)), n_people - len(persons))
        income = int(round(float(rng.lognormal(np.log(60000), 0.6)), -3))
        workers = int(rng.integers(0, size + 1))
        for _ in range(size):
            pid = len(persons) + 1
            age = int(rng.integers(0, 90))
            persons.append(
                Person(
                    hid=hid, pid=pid, age=age, sex=int(rng.integers(1, 3)),
                    employment_status=int(rng.integers(1, 7)), race=int(rng.integers(1, 10)),
                    hispanic=int(rng.integers(0, 2)),
                    designation=_DESIGNATIONS[int(rng.integers(len(_DESIGNATIONS)))],
                    hh_size=size, hh_income=income, workers_in_family=workers,
                    residence_lid=RESIDENCE_LID_BASE + hid, longitude=0.0, latitude=0.0,
                    admin1="51", admin2="540", admin3=f"{hid % 1000:06d}", admin4="1",
                )
            )

    cols: dict[str, list] = {c: [] for c in _VISIT_COLUMNS}

    def add(day, idx, number, atype, start, end, lid):
        for c, val in zip(_VISIT_COLUMNS, (day, idx, number, atype, start, end, lid)):
            cols[c].append(val)

    day_start, day_end, step = 6 * 3600, 22 * 3600, 300
    for idx, person in enumerate(persons):
        home = person.residence_lid
        for day in range(DAYS_PER_WEEK):
            k = 0 if n_people == 1 else int(rng.integers(1, 4))
            slot = (day_end - day_start) // max(k, 1)
            cursor, number = 0, 0
            for j in range(k):
                lo = day_start + j * slot
                start = lo + step * int(rng.integers(0, slot // (2 * step)))
                dur = step * int(rng.integers(6, max(7, (lo + slot - start) // step)))
                end = min(start + dur, lo + slot)
                if start > cursor:
                    add(day, idx, number, ActivityType.HOME, cursor, start, home)
                    number += 1
                atype = int(rng.choice(_ACTIVITY_CHOICES, p=_ACTIVITY_WEIGHTS))
                add(day, idx, number, atype, start, end, int(rng.integers(1, n_locations + 1)))
                number += 1
                cursor = end
            add(day, idx, number, ActivityType.HOME, cursor, SECONDS_PER_DAY, home)
    return Population(persons, VisitTable(*(cols[c] for c in _VISIT_COLUMNS)))
