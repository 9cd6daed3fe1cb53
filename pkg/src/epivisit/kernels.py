"""Location-day kernels: contacts, visit-start snapshots and transmission draws.

All kernels work on a batch of visits covering any number of locations for a
single step, sorted by (lid, start, pid, end, activity number). Location
groups are handled together by offsetting every time by ``group * SPAN`` so a
single sorted array serves as the sweep line for all of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disease import (
    N_STATES,
    ContactTriple,
    DiseaseModel,
    HealthState,
    TransmissionCandidate,
    sample_location_transmission,
)
from .streams import CONTACT, TRANSMIT, Stream, derive_keys, uniforms_at

SPAN = np.int64(1 << 40)  # larger than any visit end time


@dataclass
class VisitBatch:
    """Effective visits of one step at a set of locations (sorted, see module doc)."""

    lid: np.ndarray
    pidx: np.ndarray
    start: np.ndarray
    end: np.ndarray
    activity_type: np.ndarray
    activity_number: np.ndarray
    weight: np.ndarray  # location weight of each visit's location

    def __len__(self) -> int:
        return len(self.pidx)

    def take(self, index) -> "VisitBatch":
        return VisitBatch(*(getattr(self, f)[index] for f in self.__dataclass_fields__))


@dataclass
class PersonView:
    """Start-of-step per-person arrays shared read-only by every worker."""

    pids: np.ndarray
    state: np.ndarray
    beta_s: np.ndarray
    beta_i: np.ndarray
    mask: np.ndarray
    distancing: np.ndarray


@dataclass
class BatchResult:
    n_total: np.ndarray
    symp_abs: np.ndarray
    mask_abs: np.ndarray
    distancing_abs: np.ndarray
    candidates: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    n_contacts: int = 0


def sort_order(lid, start, pid, end, activity_number) -> np.ndarray:
    return np.lexsort((activity_number, end, pid, start, lid))


def _groups(lid: np.ndarray) -> np.ndarray:
    """Dense group id per visit (visits must be sorted by lid)."""
    if len(lid) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([[0], np.cumsum(lid[1:] != lid[:-1])]).astype(np.int64)


def overlapping_pairs(lid, start, end) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All visit pairs (i < j) at the same location whose intervals overlap for > 0 s.

    Visits must be sorted by (lid, start). Pairs come out ordered by (i, j) and
    the third array holds the overlap in seconds. Runs in
    O(n log n + number of overlapping pairs).
    """
    n = len(lid)
    if n < 2:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    g = _groups(lid)
    key_start = g * SPAN + start
    hi = np.searchsorted(key_start, g * SPAN + end, side="left")
    counts = np.maximum(hi - np.arange(n) - 1, 0)
    total = int(counts.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    i = np.repeat(np.arange(n, dtype=np.int64), counts)
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    j = i + 1 + (np.arange(total, dtype=np.int64) - offsets)
    overlap = np.minimum(end[i], end[j]) - start[j]
    keep = overlap > 0
    return i[keep], j[keep], overlap[keep]


def compute_contacts(batch: VisitBatch, step: int, seed: int, contact_probability: float):
    """Contacts (i, j, seconds) between distinct persons at each location of the batch.

    Each overlapping pair of visits is retained independently with probability
    ``contact_probability``; the k-th candidate pair of a location uses the
    k-th uniform of the stream keyed by (step, lid).
    """
    i, j, overlap = overlapping_pairs(batch.lid, batch.start, batch.end)
    distinct = batch.pidx[i] != batch.pidx[j]
    i, j, overlap = i[distinct], j[distinct], overlap[distinct]
    if len(i) and contact_probability < 1.0:
        pair_lid = batch.lid[i]
        first = np.searchsorted(pair_lid, pair_lid, side="left")
        rank = np.arange(len(i), dtype=np.int64) - first
        u = uniforms_at(derive_keys(seed, CONTACT, step, pair_lid), rank)
        keep = u < contact_probability
        i, j, overlap = i[keep], j[keep], overlap[keep]
    return i, j, overlap


def snapshot_counts(batch: VisitBatch, flags: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """For every visit v, sum ``flags`` over visits u with u.start <= v.start < u.end at v's location.

    The visit itself always counts: it satisfies the condition unless it has
    zero duration, in which case it is added explicitly.
    """
    n = len(batch)
    if n == 0:
        return {k: np.zeros(0, dtype=np.int64) for k in flags}
    g = _groups(batch.lid)
    key_start = g * SPAN + batch.start  # already sorted
    key_end = g * SPAN + batch.end
    end_order = np.argsort(key_end, kind="stable")
    key_end_sorted = key_end[end_order]
    n_start = np.searchsorted(key_start, key_start, side="right")  # u.start <= v.start
    n_end = np.searchsorted(key_end_sorted, key_start, side="right")  # u.end <= v.start
    zero = batch.end == batch.start
    out = {}
    for name, x in flags.items():
        x = np.asarray(x, dtype=np.int64)
        cs = np.concatenate([[0], np.cumsum(x)])
        ce = np.concatenate([[0], np.cumsum(x[end_order])])
        out[name] = cs[n_start] - ce[n_end] + np.where(zero, x, 0)
    return out


def applicable_matrix(model: DiseaseModel) -> np.ndarray:
    m = np.zeros((N_STATES, N_STATES), dtype=bool)
    for tc in model.transmissions:
        m[tc.entry, tc.contact] = True
    return m


def transmission_candidates(
    batch: VisitBatch,
    i: np.ndarray,
    j: np.ndarray,
    overlap: np.ndarray,
    people: PersonView,
    model: DiseaseModel,
    step: int,
    seed: int,
    trace: list | None = None,
) -> list[TransmissionCandidate]:
    """One Gillespie draw per (susceptible person, location) with at least one applicable contact."""
    if len(i) == 0:
        return []
    a = np.concatenate([i, j])
    b = np.concatenate([j, i])
    dur = np.concatenate([overlap, overlap]).astype(np.float64)
    pa, pb = batch.pidx[a], batch.pidx[b]
    ok = applicable_matrix(model)[people.state[pa], people.state[pb]]
    if not ok.any():
        return []
    a, pa, pb, dur = a[ok], pa[ok], pb[ok], dur[ok]
    lid = batch.lid[a]
    order = np.lexsort((pb, pa, lid))
    lid, pa, pb, dur, a = lid[order], pa[order], pb[order], dur[order], a[order]
    # sum durations over repeated (lid, susceptible, infector) triples
    new = np.ones(len(lid), dtype=bool)
    new[1:] = (lid[1:] != lid[:-1]) | (pa[1:] != pa[:-1]) | (pb[1:] != pb[:-1])
    starts = np.flatnonzero(new)
    dur = np.add.reduceat(dur, starts)
    lid, pa, pb, a = lid[starts], pa[starts], pb[starts], a[starts]

    out = []
    head = np.ones(len(lid), dtype=bool)
    head[1:] = (lid[1:] != lid[:-1]) | (pa[1:] != pa[:-1])
    bounds = np.append(np.flatnonzero(head), len(lid))
    iota = model.infectivity
    sigma = model.susceptibility
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        p = int(pa[lo])
        loc = int(lid[lo])
        entry = HealthState(int(people.state[p]))
        contacts = [
            ContactTriple(
                int(people.pids[q]),
                HealthState(int(people.state[q])),
                float(d),
                float(people.beta_i[q]) * iota[int(people.state[q])],
            )
            for q, d in zip(pb[lo:hi], dur[lo:hi])
        ]
        pid = int(people.pids[p])
        local_trace = [] if trace is not None else None
        cand = sample_location_transmission(
            pid, entry, float(people.beta_s[p]) * sigma[entry], loc, float(batch.weight[a[lo]]), contacts, model,
            Stream.keyed(seed, TRANSMIT, step, pid, loc), trace=local_trace,
        )
        if local_trace is not None:
            trace.extend((step, pid, infector, loc, d, rho) for infector, d, rho in local_trace)
        if cand is not None:
            out.append(cand)
    return out


def process_batch(
    batch: VisitBatch,
    people: PersonView,
    model: DiseaseModel,
    step: int,
    seed: int,
    contact_probability: float,
    want_trace: bool = False,
) -> BatchResult:
    """Everything phase 3 of a step needs for one partition of locations."""
    i, j, overlap = compute_contacts(batch, step, seed, contact_probability)
    p = batch.pidx
    counts = snapshot_counts(
        batch,
        {
            "n_total": np.ones(len(batch), dtype=np.int64),
            "symp_abs": people.state[p] == HealthState.Is,
            "mask_abs": people.mask[p],
            "distancing_abs": people.distancing[p],
        },
    )
    trace = [] if want_trace else None
    cands = transmission_candidates(batch, i, j, overlap, people, model, step, seed, trace)
    return BatchResult(
        counts["n_total"], counts["symp_abs"], counts["mask_abs"], counts["distancing_abs"],
        candidates=cands, trace=trace or [], n_contacts=len(i),
    )
