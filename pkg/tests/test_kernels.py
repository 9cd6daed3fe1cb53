import numpy as np
import pytest

from epivisit.disease import HealthState, default_seir_model
from epivisit.kernels import (
    PersonView,
    VisitBatch,
    compute_contacts,
    overlapping_pairs,
    process_batch,
    snapshot_counts,
    sort_order,
)
from oracles import binomial_sigma, brute_contacts, brute_snapshot

S, E, Is, Ia, R = HealthState


def make_batch(lid, pidx, start, end, atype=None, weight=None):
    lid, pidx, start, end = (np.asarray(x, dtype=np.int64) for x in (lid, pidx, start, end))
    n = len(lid)
    atype = np.full(n, 2, dtype=np.int8) if atype is None else np.asarray(atype, dtype=np.int8)
    number = np.arange(n, dtype=np.int32)
    order = sort_order(lid, start, pidx, end, number)
    w = np.ones(n) if weight is None else np.asarray(weight, dtype=np.float64)
    return VisitBatch(lid[order], pidx[order], start[order], end[order], atype[order], number[order], w[order])


def random_location_days(rng, n_instances=200, max_visits=50):
    for _ in range(n_instances):
        n = int(rng.integers(1, max_visits + 1))
        n_loc = int(rng.integers(1, 4))
        lid = rng.integers(0, n_loc, n) * 1000 + 7
        start = rng.integers(0, 40, n) * 300
        length = rng.choice([0, 300, 600, 1800, 3600, 7200], n)
        pidx = rng.integers(0, 30, n)
        yield make_batch(lid, pidx, start, start + length)


def as_tuples(batch):
    return list(zip(batch.lid.tolist(), batch.pidx.tolist(), batch.start.tolist(), batch.end.tolist()))


def test_boundary_touch_is_not_a_contact():
    b = make_batch([1, 1], [0, 1], [0, 3600], [3600, 7200])
    i, j, ov = compute_contacts(b, 0, 0, 1.0)
    assert len(i) == 0


def test_smallville_monday_work():
    b = make_batch([1, 1, 1], [0, 1, 2], [0, 0, 0], [3600, 3600, 3600])
    i, j, ov = compute_contacts(b, 0, 0, 1.0)
    assert sorted(zip(i.tolist(), j.tolist())) == [(0, 1), (0, 2), (1, 2)]
    assert ov.tolist() == [3600] * 3


def test_contacts_match_bruteforce():
    rng = np.random.default_rng(123)
    for b in random_location_days(rng):
        i, j, ov = compute_contacts(b, 3, 5, 1.0)
        assert sorted(zip(i.tolist(), j.tolist(), ov.tolist())) == brute_contacts(as_tuples(b))


def test_overlapping_pairs_are_output_sensitive_superset():
    rng = np.random.default_rng(9)
    for b in random_location_days(rng, 50):
        i, j, ov = overlapping_pairs(b.lid, b.start, b.end)
        assert np.all(i < j) and np.all(ov > 0) and np.all(b.lid[i] == b.lid[j])


def test_snapshot_matches_bruteforce_with_self_inclusion():
    rng = np.random.default_rng(321)
    for b in random_location_days(rng):
        flags = {
            "n_total": np.ones(len(b), dtype=np.int64),
            "symp": rng.integers(0, 2, len(b)),
            "mask": rng.integers(0, 2, len(b)),
        }
        got = snapshot_counts(b, flags)
        visits = as_tuples(b)
        for name, x in flags.items():
            assert got[name].tolist() == brute_snapshot(visits, x.tolist()), name


def test_snapshot_examples():
    # sole visitor
    b = make_batch([4], [0], [100], [200])
    assert snapshot_counts(b, {"n": [1], "s": [0]}) == {"n": [1], "s": [0]}
    # three simultaneous visitors, one symptomatic
    b = make_batch([4, 4, 4], [0, 1, 2], [0, 0, 0], [10, 10, 10])
    got = snapshot_counts(b, {"n": np.ones(3), "s": np.array([0, 1, 0])})
    assert got["n"].tolist() == [3, 3, 3] and got["s"].tolist() == [1, 1, 1]
    # alone and symptomatic counts himself, also for a zero-length visit
    b = make_batch([4], [0], [50], [50])
    assert snapshot_counts(b, {"s": np.array([1])})["s"].tolist() == [1]
    # someone who left exactly at my start is not counted, someone arriving later is not either
    b = make_batch([4, 4, 4], [0, 1, 2], [0, 100, 150], [100, 200, 300])
    assert snapshot_counts(b, {"n": np.ones(3)})["n"].tolist() == [1, 1, 2]


def test_contact_probability_retention():
    n_pairs = 10_000
    # 10_000 locations with one overlapping pair each
    lid = np.repeat(np.arange(n_pairs), 2)
    pidx = np.tile([0, 1], n_pairs)
    b = make_batch(lid, pidx, np.zeros(2 * n_pairs), np.full(2 * n_pairs, 100))
    i, _, _ = compute_contacts(b, 0, 77, 0.33)
    assert abs(len(i) / n_pairs - 0.33) <= 3 * binomial_sigma(0.33, n_pairs)


def test_contact_draws_independent_of_batch_composition():
    rng = np.random.default_rng(4)
    b = next(random_location_days(rng, 1, 50))
    i, j, _ = compute_contacts(b, 2, 8, 0.5)
    full = {(int(b.lid[a]), int(b.pidx[a]), int(b.start[a]), int(b.pidx[c]), int(b.start[c])) for a, c in zip(i, j)}
    part = set()
    for loc in np.unique(b.lid):
        sub = b.take(b.lid == loc)
        si, sj, _ = compute_contacts(sub, 2, 8, 0.5)
        part |= {(int(sub.lid[a]), int(sub.pidx[a]), int(sub.start[a]), int(sub.pidx[c]), int(sub.start[c])) for a, c in zip(si, sj)}
    assert full == part


def people(states, beta=None):
    n = len(states)
    beta = np.ones(n) if beta is None else np.asarray(beta, dtype=float)
    return PersonView(np.arange(100, 100 + n), np.asarray(states, dtype=np.int8), beta.copy(), beta.copy(),
                      np.zeros(n, np.int64), np.zeros(n, np.int64))


def test_transmission_trace_aggregates_durations_per_infector():
    # susceptible 0 meets infector 1 twice at lid 5 (two visits) and infector 2 once
    b = make_batch([5, 5, 5, 5], [0, 1, 1, 2], [0, 0, 1000, 0], [3000, 500, 1500, 100])
    m = default_seir_model(tau=1e-3)
    res = process_batch(b, people([S, Is, Ia]), m, step=4, seed=1, contact_probability=1.0, want_trace=True)
    trace = sorted(res.trace)
    assert trace == [(4, 100, 101, 5, 1000.0, pytest.approx(1.0)), (4, 100, 102, 5, 100.0, pytest.approx(0.1))]
    assert all(c.susceptible == 100 and c.lid == 5 for c in res.candidates)


def test_no_candidates_without_applicable_contacts():
    b = make_batch([5, 5, 5], [0, 1, 2], [0, 0, 0], [100, 100, 100])
    m = default_seir_model(tau=10.0)
    for states in ([S, S, S], [S, E, R], [Is, Ia, R]):
        res = process_batch(b, people(states), m, 0, 1, 1.0, want_trace=True)
        assert res.candidates == [] and res.trace == []


def test_one_candidate_per_person_location():
    b = make_batch([5, 5, 6, 6], [0, 1, 0, 2], [0, 0, 0, 0], [3600, 3600, 3600, 3600])
    m = default_seir_model(tau=1.0)
    res = process_batch(b, people([S, Is, Is]), m, 0, 1, 1.0)
    assert sorted((c.susceptible, c.lid) for c in res.candidates) == [(100, 5), (100, 6)]
