import csv
import io

import numpy as np
import pytest

from epivisit.behavior import ACTION_FIELDS, builtin
from epivisit.disease import default_seir_model
from epivisit.engine import Engine, RunParameters
from epivisit.errors import OutputError
from epivisit.output import (
    GLOBAL_OBSERVABLES_HEADER,
    OUTPUT_FILES,
    OutputWriter,
    emit_epicurve,
    global_row,
    local_observable_rows,
    read_global_observables,
    stored_fraction,
    write_outputs,
)
from helpers import CALIBRATED_TAU, simulate
from oracles import float32_repr

PAPER_GLOBAL = [
    "iteration,S_abs,S_rel,E_abs,E_rel,Is_abs,Is_rel,Ia_abs,Ia_rel,R_abs,R_rel",
    "0,41109,0.9997568130493164,10,0.0002431965694995597,0,0.0,0,0.0,0,0.0",
    "1,41109,0.9997568130493164,8,0.0001945572585100308,0,0.0,2,4.86393146275077e-05,0,0.0",
    "2,41074,0.998905599117279,36,0.000875507656019181,5,0.00012159828474977985,4,9.72786292550154e-05,0,0.0",
]


def line(row):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(row)
    return buf.getvalue().rstrip("\n")


def test_global_rows_match_reference_bytes():
    assert ",".join(GLOBAL_OBSERVABLES_HEADER) == PAPER_GLOBAL[0]
    rows = [(41109, 10, 0, 0, 0), (41109, 8, 0, 2, 0), (41074, 36, 5, 4, 0)]
    for t, counts in enumerate(rows):
        assert line(global_row(t, counts)) == PAPER_GLOBAL[t + 1]


def test_fraction_format_oracle():
    rng = np.random.default_rng(0)
    for _ in range(500):
        n = int(rng.integers(1, 10**6))
        k = int(rng.integers(0, n + 1))
        assert repr(stored_fraction(k, n)) == float32_repr(k / n)
    assert stored_fraction(3, 0) == 0.0


def test_never_observed_row_matches_reference():
    snap = {f: np.zeros((1, 7), dtype=np.int64) for f in ("lid", "n_total", "symp_abs", "mask_abs", "distancing_abs")}
    snap["obs_step"] = np.full((1, 7), -1)
    rows = list(local_observable_rows(0, np.array([5586585]), snap, np.array([0])))
    assert line(rows[0]) == "0,0,5586585,0,1,0,0,0.0,0,0.0,0,0.0"
    assert [r[4] for r in rows] == [1, 2, 3, 4, 5, 6, 7]
    later = list(local_observable_rows(4, np.array([5586585]), snap, np.array([0])))
    assert line(later[1]) == "4,-1,5586585,0,2,0,0,0.0,0,0.0,0,0.0"


@pytest.fixture(scope="module")
def run_and_files(tmp_path_factory):
    from epivisit.population import generate_random_population

    pop = generate_random_population(150, 10, 3)
    out = simulate(pop, default_seir_model(tau=5 * CALIBRATED_TAU), iterations=12, initial_exposed=8, seed=4,
                   contact_probability=0.5, behavior="mask_distancing_random")
    d = tmp_path_factory.mktemp("out")
    paths = write_outputs(out, d)
    return pop, out, d, paths


def strict_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh, strict=True)
        header = next(reader)
        rows = list(reader)
    assert all(len(r) == len(header) for r in rows)
    return header, rows


def test_five_files_round_trip(run_and_files):
    pop, out, d, paths = run_and_files
    assert sorted(p.name for p in paths) == sorted(OUTPUT_FILES)

    header, rows = strict_rows(d / "model_class.csv")
    assert header == ["index", "pid", "model_class"]
    assert [(int(a), int(b), int(c)) for a, b, c in rows] == list(zip(range(len(pop)), out.pids.tolist(), out.model_classes.tolist()))

    header, rows = strict_rows(d / "transitions.csv")
    assert header == ["iteration", "state", "p1_pid", "p2_pid"]
    assert [tuple(map(int, r)) for r in rows] == out.transitions

    header, rows = strict_rows(d / "global_observables.csv")
    assert [tuple(int(r[1 + 2 * s]) for s in range(5)) for r in rows] == out.global_counts
    for r in rows:
        counts = [int(r[1 + 2 * s]) for s in range(5)]
        assert [float(r[2 + 2 * s]) for s in range(5)] == [float(float32_repr(c / 150)) for c in counts]

    header, rows = strict_rows(d / "actions.csv")
    assert header == ["iteration", "pid", *ACTION_FIELDS]
    order = np.argsort(out.pids)
    expect = [(t, int(out.pids[i]), *map(int, out.actions[t][i])) for t in range(out.iterations) for i in order]
    assert [tuple(map(int, r)) for r in rows] == expect

    header, rows = strict_rows(d / "local_observables.csv")
    assert len(rows) == out.iterations * len(pop) * 7
    keys = [(int(r[0]), int(r[2]), int(r[4])) for r in rows]
    assert keys == sorted(keys)
    for r in rows[:: 97]:
        t, pid, atype = int(r[0]), int(r[2]), int(r[4])
        i, slot = int(np.flatnonzero(out.pids == pid)[0]), atype - 1
        snap = out.local_observables[t]
        assert int(r[5]) == snap["n_total"][i, slot]
        assert int(r[6]) == snap["symp_abs"][i, slot]
        n = int(r[5])
        assert float(r[7]) == (float(float32_repr(int(r[6]) / n)) if n else 0.0)
        if snap["obs_step"][i, slot] >= 0:
            assert (int(r[1]), int(r[3])) == (snap["obs_step"][i, slot], snap["lid"][i, slot])


def test_rows_sorted_by_pid_not_file_order(tmp_path, smallville):
    from epivisit.population import Population

    persons = list(reversed(smallville.persons))
    pop = Population(persons, smallville.visits.take(np.arange(len(smallville.visits))))
    # visits reference dense indices, remap them for the reversed person list
    pop.visits.pidx[:] = 2 - smallville.visits.pidx
    out = simulate(pop, default_seir_model(0.0), iterations=2, initial_exposed=0, seed=0)
    write_outputs(out, tmp_path)
    _, rows = strict_rows(tmp_path / "actions.csv")
    assert [int(r[1]) for r in rows] == [1, 2, 3, 1, 2, 3]
    _, rows = strict_rows(tmp_path / "model_class.csv")
    assert [int(r[1]) for r in rows] == [3, 2, 1]


def test_append_mode_matches_end_mode(tmp_path, run_and_files):
    pop, out, d, _ = run_and_files
    params = RunParameters(iterations=12, initial_exposed=8, seed=4, contact_probability=0.5)
    engine = Engine(pop, default_seir_model(tau=5 * CALIBRATED_TAU), builtin("mask_distancing_random", seed=4), params)
    with OutputWriter(tmp_path) as writer:
        writer.begin(pop.pids, engine.model_classes)
        streamed = engine.run(on_step=writer)
        writer.transitions(streamed.transitions)
    for name in OUTPUT_FILES:
        assert (tmp_path / name).read_bytes() == (d / name).read_bytes(), name


def test_empty_simulation(tmp_path, smallville):
    out = simulate(smallville, iterations=0, initial_exposed=0, seed=0)
    write_outputs(out, tmp_path)
    for name in OUTPUT_FILES:
        lines = (tmp_path / name).read_text().splitlines()
        assert len(lines) == (4 if name == "model_class.csv" else 1), name


def test_no_local_file_rows_when_disabled(tmp_path, smallville):
    out = simulate(smallville, iterations=3, initial_exposed=1, seed=0, write_local_observables=False)
    write_outputs(out, tmp_path)
    assert (tmp_path / "local_observables.csv").read_text().count("\n") == 1


def test_epicurve(tmp_path, run_and_files):
    _, out, d, _ = run_and_files
    path = emit_epicurve(out.global_counts, tmp_path / "epicurve.csv", tmp_path / "epicurve.svg")
    _, rows = strict_rows(path)
    assert [tuple(map(int, r[1:])) for r in rows] == read_global_observables(d / "global_observables.csv")
    assert (tmp_path / "epicurve.svg").read_text().lstrip().startswith("<?xml")
    with pytest.raises(ValueError):
        emit_epicurve([], tmp_path / "x.csv")


def test_epicurve_flat_history(tmp_path):
    path = emit_epicurve([(50, 0, 0, 0, 0)] * 4, tmp_path / "e.csv")
    assert path.read_text().splitlines()[1:] == [f"{t},50,0,0,0,0" for t in range(4)]


def test_epicurve_recovered_matches_transition_log(run_and_files):
    _, out, _, _ = run_and_files
    r_entries = sum(1 for r in out.transitions if r[1] == 4 and r[0] < out.iterations - 1)
    assert out.global_counts[-1][4] == r_entries


def test_io_error_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError) as err:
        OutputWriter(blocker / "sub").begin(np.array([1]), np.array([0]))
    assert "sub" in str(err.value)
