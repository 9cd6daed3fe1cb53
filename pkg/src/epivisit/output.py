"""CSV output files and the epicurve summary.

Fractions (``*_rel`` columns) are stored as 32-bit floats and printed with
the shortest repr of their 64-bit widening, e.g. 41109/41119 is written as
``0.9997568130493164``; this is the format of the reference output files.
Files can be written incrementally after every step (:class:`OutputWriter`
used as an ``on_step`` hook) or in one go with :func:`write_outputs`; both
produce identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .behavior import ACTION_FIELDS, N_SLOTS, OBSERVED_TYPES
from .disease import HealthState
from .errors import OutputError

MODEL_CLASS_FILE = "model_class.csv"
LOCAL_OBSERVABLES_FILE = "local_observables.csv"
GLOBAL_OBSERVABLES_FILE = "global_observables.csv"
ACTIONS_FILE = "actions.csv"
TRANSITIONS_FILE = "transitions.csv"
EPICURVE_FILE = "epicurve.csv"
OUTPUT_FILES = (MODEL_CLASS_FILE, LOCAL_OBSERVABLES_FILE, GLOBAL_OBSERVABLES_FILE, ACTIONS_FILE, TRANSITIONS_FILE)

MODEL_CLASS_HEADER = ["index", "pid", "model_class"]
LOCAL_OBSERVABLES_HEADER = (
    "iteration,obs_iteration,pid,lid,activity_type,n_total,symp_abs,symp_rel,mask_abs,mask_rel,"
    "distancing_abs,distancing_rel"
).split(",")
GLOBAL_OBSERVABLES_HEADER = [f"{s.name}_{k}" for s in HealthState for k in ("abs", "rel")]
GLOBAL_OBSERVABLES_HEADER.insert(0, "iteration")
ACTIONS_HEADER = ["iteration", "pid", *ACTION_FIELDS]
TRANSITIONS_HEADER = ["iteration", "state", "p1_pid", "p2_pid"]
EPICURVE_HEADER = ["iteration", *(s.name for s in HealthState)]


def stored_fraction(num, den) -> np.ndarray | float:
    """num/den rounded to float32 and widened back (0.0 when den == 0)."""
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    r = r.astype(np.float32).astype(np.float64)
    return float(r) if r.ndim == 0 else r


def global_row(iteration: int, counts: Sequence[int]) -> list:
    n = sum(counts)
    row: list = [iteration]
    for c, r in zip(counts, stored_fraction(list(counts), [n] * len(counts)).tolist()):
        row += [int(c), r]
    return row


def _open(path: Path, mode: str):
    try:
        return open(path, mode, newline="")
    except OSError as exc:
        raise OutputError(path, exc) from exc


class OutputWriter:
    """Writes the five run files, one step at a time.

    Use as ``on_step`` hook of :meth:`Engine.run` after calling :meth:`begin`
    with the initialised state, then :meth:`close`.
    """

    def __init__(self, directory, write_local_observables: bool = True):
        self.directory = Path(directory)
        self.write_local = write_local_observables
        self._files: dict[str, object] = {}
        self._writers: dict[str, csv.writer] = {}
        self._n_transitions = 0
        self._order = None
        self._pids = None

    @property
    def paths(self) -> list[Path]:
        return [self.directory / f for f in OUTPUT_FILES]

    def begin(self, pids: np.ndarray, model_classes: np.ndarray) -> None:
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputError(self.directory, exc) from exc
        headers = {
            MODEL_CLASS_FILE: MODEL_CLASS_HEADER,
            LOCAL_OBSERVABLES_FILE: LOCAL_OBSERVABLES_HEADER,
            GLOBAL_OBSERVABLES_FILE: GLOBAL_OBSERVABLES_HEADER,
            ACTIONS_FILE: ACTIONS_HEADER,
            TRANSITIONS_FILE: TRANSITIONS_HEADER,
        }
        for name, header in headers.items():
            fh = _open(self.directory / name, "w")
            self._files[name] = fh
            self._writers[name] = csv.writer(fh, lineterminator="\n")
            self._writers[name].writerow(header)
        self._pids = np.asarray(pids)
        self._order = np.argsort(self._pids, kind="stable")
        self._writers[MODEL_CLASS_FILE].writerows(
            zip(range(len(pids)), self._pids.tolist(), np.asarray(model_classes).tolist())
        )

    def transitions(self, rows: Sequence[tuple]) -> None:
        """Append transition records not written yet (``rows`` is the full, growing log)."""
        new = rows[self._n_transitions:]
        self._writers[TRANSITIONS_FILE].writerows(new)
        self._n_transitions = len(rows)

    def step(self, iteration: int, counts: Sequence[int], actions: np.ndarray, local: dict | None, transitions) -> None:
        self._writers[GLOBAL_OBSERVABLES_FILE].writerow(global_row(iteration, counts))
        pids = self._pids[self._order]
        acts = np.asarray(actions)[self._order]
        self._writers[ACTIONS_FILE].writerows(
            [iteration, pid, *flags] for pid, flags in zip(pids.tolist(), acts.tolist())
        )
        if self.write_local and local is not None:
            self._writers[LOCAL_OBSERVABLES_FILE].writerows(local_observable_rows(iteration, pids, local, self._order))
        self.transitions(transitions)

    def __call__(self, sim) -> None:
        """``on_step`` hook: write the step that just finished."""
        t = sim.t - 1
        local = sim.local_log[t] if (self.write_local and sim.local_log) else None
        self.step(t, sim.global_observables.counts(t), sim.action_log[t], local, sim.transitions)

    def close(self) -> None:
        for fh in self._files.values():
            fh.close()
        self._files.clear()
        self._writers.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def local_observable_rows(iteration: int, pids: np.ndarray, snap: dict, order: np.ndarray) -> Iterable[list]:
    """Rows for one iteration: persons by pid, then slots by activity type code.

    Never-observed slots are written as zeros with lid 0 and obs_iteration 0 at
    iteration 0, obs_iteration -1 afterwards.
    """
    obs_step = snap["obs_step"][order]
    never = obs_step < 0
    obs_step = np.where(never, 0 if iteration == 0 else -1, obs_step)
    lid = np.where(never, 0, snap["lid"][order])
    n = snap["n_total"][order]
    cols = {}
    for f in ("symp_abs", "mask_abs", "distancing_abs"):
        a = snap[f][order]
        cols[f] = (a.tolist(), stored_fraction(a, n).tolist())
    obs_step, lid, n = obs_step.tolist(), lid.tolist(), n.tolist()
    types = [int(t) for t in OBSERVED_TYPES]
    sa, sr = cols["symp_abs"]
    ma, mr = cols["mask_abs"]
    da, dr = cols["distancing_abs"]
    for k, pid in enumerate(pids.tolist()):
        for s in range(N_SLOTS):
            yield [iteration, obs_step[k][s], pid, lid[k][s], types[s], n[k][s],
                   sa[k][s], sr[k][s], ma[k][s], mr[k][s], da[k][s], dr[k][s]]


def write_outputs(outputs, directory) -> list[Path]:
    """Write all five files for a finished run; returns their paths."""
    writer = OutputWriter(directory, write_local_observables=outputs.local_observables is not None)
    with writer:
        writer.begin(outputs.pids, outputs.model_classes)
        init = [r for r in outputs.transitions if r[0] < 0]
        writer.transitions(init)
        by_step: dict[int, int] = {}
        for k, r in enumerate(outputs.transitions):
            by_step[r[0]] = k + 1
        done = len(init)
        for t in range(outputs.iterations):
            done = max(done, by_step.get(t, done))
            local = outputs.local_observables[t] if outputs.local_observables is not None else None
            writer.step(t, outputs.global_counts[t], outputs.actions[t], local, outputs.transitions[:done])
    return writer.paths


def emit_epicurve(global_counts: Sequence[Sequence[int]], path, plot_path=None) -> Path:
    """Per-iteration state counts as CSV, plus an optional SVG/PDF plot of the five curves."""
    if len(global_counts) == 0:
        raise ValueError("epicurve needs at least one recorded iteration")
    path = Path(path)
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPICURVE_HEADER)
        for t, counts in enumerate(global_counts):
            w.writerow([t, *(int(c) for c in counts)])
    if plot_path is not None:
        _plot_epicurve(global_counts, Path(plot_path))
    return path


def _plot_epicurve(global_counts, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.asarray(global_counts)
    fig, ax = plt.subplots(figsize=(7, 4))
    colors = {"S": "tab:blue", "E": "tab:orange", "Is": "tab:red", "Ia": "tab:purple", "R": "black"}
    for s in HealthState:
        ax.plot(np.arange(len(data)), data[:, s], label=s.name, color=colors[s.name])
    ax.set_xlabel("iteration (day)")
    ax.set_ylabel("people")
    ax.legend()
    fig.tight_layout()
    try:
        fig.savefig(path)
    except OSError as exc:
        raise OutputError(path, exc) from exc
    finally:
        plt.close(fig)


def read_global_observables(path) -> list[tuple[int, ...]]:
    """Counts per iteration from a global observables file (strict header check)."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != GLOBAL_OBSERVABLES_HEADER:
            raise ValueError(f"{path}: not a global observables file (header {header})")
        rows = []
        for k, row in enumerate(reader):
            if int(row[0]) != k:
                raise ValueError(f"{path}:{reader.line_num}: expected iteration {k}, got {row[0]}")
            rows.append(tuple(int(row[1 + 2 * s]) for s in range(len(HealthState))))
    return rows
