"""Time-stepped simulation driver.

One step is one day. Each step:

1. every person picks an action (behavior model) which fixes their
   susceptibility/infectivity multipliers for the day;
2. the weekday's baseline visits are remapped (dropped activities move to
   the residence);
3. per location, in parallel over location partitions: contacts, visit-start
   snapshots and one Gillespie draw per susceptible visitor;
4. candidates are merged per person and one infector is drawn;
5. transmissions, then due progressions, are applied at the end of the step;
6. new states get their progression sampled, local observables are updated.

All randomness comes from counter-based streams keyed by the run seed and the
(step, person, location) the draw belongs to, so output does not depend on
the number of workers or on location order.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Mapping, Sequence

import numpy as np

from .behavior import (
    DROP_COLUMN,
    N_ACTIONS,
    N_SLOTS,
    OBSERVED_TYPES,
    SLOT_OF_TYPE,
    ActionScales,
    BehaviorContext,
    BehaviorModel,
    GlobalObservables,
    LocalObservable,
)
from .config import Config
from .disease import N_STATES, DiseaseModel, HealthState, choose_infector, sample_progression
from .errors import SimulationError, TooManyExposed
from .kernels import BatchResult, PersonView, VisitBatch, process_batch, sort_order
from .population import Population
from .streams import BEHAVIOR, INIT, MERGE, PROGRESS, Stream, derive_key

log = logging.getLogger(__name__)

OBS_FIELDS = ("obs_step", "lid", "n_total", "symp_abs", "mask_abs", "distancing_abs")


@dataclass(frozen=True)
class RunParameters:
    """The subset of :class:`Config` the engine needs."""

    iterations: int = 0
    initial_exposed: int = 0
    contact_probability: float = 1.0
    seed: int = 0
    num_workers: int = 1
    scales: ActionScales = ActionScales()
    write_local_observables: bool = True
    trace_propensities: bool = False

    @classmethod
    def from_config(cls, config: Config, **overrides) -> "RunParameters":
        kw = dict(
            iterations=config.iterations,
            initial_exposed=config.initial_exposed,
            contact_probability=config.contact_probability,
            seed=config.seed,
            num_workers=config.num_workers,
            scales=ActionScales.from_config(config),
            write_local_observables=config.write_local_observables,
        )
        kw.update(overrides)
        return cls(**kw)


@dataclass
class SimulationState:
    t: int
    state: np.ndarray  # int8 HealthState per person
    sched_target: np.ndarray  # int8, -1 = nothing scheduled
    sched_step: np.ndarray  # int64
    beta_s: np.ndarray
    beta_i: np.ndarray
    obs: dict[str, np.ndarray]  # each (N, N_SLOTS)
    global_observables: GlobalObservables
    seed: int
    transitions: list = field(default_factory=list)  # (iteration, state, p1_pid, p2_pid)
    action_log: list = field(default_factory=list)  # one (N, 8) uint8 array per step
    local_log: list = field(default_factory=list)  # one obs snapshot dict per step
    trace: list = field(default_factory=list)  # (step, pid, infector, lid, duration, rho)
    timings: dict = field(default_factory=dict)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.state, minlength=N_STATES)


@dataclass
class SimulationOutputs:
    pids: np.ndarray
    model_classes: np.ndarray
    global_counts: list  # row t: counts at the start of step t
    actions: list
    transitions: list
    local_observables: list | None
    final_counts: tuple
    trace: list
    iterations: int

    @property
    def population_size(self) -> int:
        return len(self.pids)

    @property
    def attack_rate(self) -> float:
        n = self.population_size
        return (n - self.final_counts[HealthState.S]) / n if n else 0.0

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "population": self.population_size,
            "final_counts": {s.name: int(self.final_counts[s]) for s in HealthState},
            "attack_rate": self.attack_rate,
        }


# -- partitioning -----------------------------------------------------------------


def partition_locations(loads: Mapping[int, int] | Sequence[int], num_workers: int) -> list[list[int]]:
    """Greedy longest-processing-time assignment of locations to workers.

    ``loads`` maps lid -> visit count (a plain sequence of lids means equal
    loads). Ties are broken by lid and by worker number, so the result is a
    pure function of the input.
    """
    if num_workers < 1:
        raise ValueError("num_workers must be >= 1")
    if not isinstance(loads, Mapping):
        loads = {int(l): 1 for l in loads}
    parts: list[list[int]] = [[] for _ in range(num_workers)]
    totals = [0] * num_workers
    for lid, load in sorted(loads.items(), key=lambda kv: (-kv[1], kv[0])):
        w = min(range(num_workers), key=lambda k: (totals[k], k))
        parts[w].append(int(lid))
        totals[w] += load
    return [sorted(p) for p in parts]


# -- initialisation ----------------------------------------------------------------


def _empty_obs(n: int) -> dict[str, np.ndarray]:
    obs = {name: np.zeros((n, N_SLOTS), dtype=np.int64) for name in OBS_FIELDS}
    obs["obs_step"][:] = -1
    return obs


def _progress(sim: SimulationState, i: int, pid: int, model: DiseaseModel, step: int, log_step: int) -> None:
    """Schedule the progression out of person i's current state, firing at once if due now."""
    stream = Stream.keyed(sim.seed, PROGRESS, step, pid)
    while True:
        nxt = sample_progression(HealthState(int(sim.state[i])), model, stream, step)
        if nxt is None:
            sim.sched_target[i] = -1
            return
        target, due = nxt
        if due > step:
            sim.sched_target[i] = target
            sim.sched_step[i] = due
            return
        sim.state[i] = target
        sim.transitions.append((log_step, int(target), pid, -1))


def initialize(population: Population, initial_exposed: int, seed: int, model: DiseaseModel) -> SimulationState:
    """All susceptible except a seeded uniform random subset of ``initial_exposed`` people in E."""
    n = len(population)
    if initial_exposed > n:
        raise TooManyExposed(f"initial_exposed={initial_exposed} exceeds population size {n}")
    sim = SimulationState(
        t=0,
        state=np.zeros(n, dtype=np.int8),
        sched_target=np.full(n, -1, dtype=np.int8),
        sched_step=np.zeros(n, dtype=np.int64),
        beta_s=np.ones(n),
        beta_i=np.ones(n),
        obs=_empty_obs(n),
        global_observables=GlobalObservables(n),
        seed=seed,
    )
    rng = np.random.default_rng(derive_key(seed, INIT))
    chosen = np.sort(rng.choice(n, size=initial_exposed, replace=False)) if initial_exposed else np.zeros(0, int)
    pids = population.pids
    for i in sorted(chosen, key=lambda k: pids[k]):
        i = int(i)
        pid = int(pids[i])
        sim.state[i] = HealthState.E
        sim.transitions.append((-1, int(HealthState.E), pid, -1))
        _progress(sim, i, pid, model, -1, -1)
    return sim


# -- one step ------------------------------------------------------------------------


class Engine:
    """Binds population, disease, behavior and run parameters; owns the worker pool."""

    def __init__(
        self,
        population: Population,
        disease: DiseaseModel,
        behavior: BehaviorModel,
        params: RunParameters,
        executor: Executor | None = None,
    ):
        self.population = population
        self.disease = disease
        self.behavior = behavior
        self.params = params
        self.partitions = partition_locations(population.visit_counts(), params.num_workers)
        lids = np.array([l for part in self.partitions for l in part], dtype=np.int64)
        owner = np.array([w for w, part in enumerate(self.partitions) for _ in part], dtype=np.int64)
        order = np.argsort(lids)
        self._lid_sorted, self._owner = lids[order], owner[order]
        self.model_classes = np.array([behavior.assign_class(p) for p in population.persons], dtype=np.int64)
        self._executor = executor
        self._own_executor = False

    def __enter__(self):
        if self._executor is None and self.params.num_workers > 1:
            self._executor = ProcessPoolExecutor(max_workers=self.params.num_workers)
            self._own_executor = True
        return self

    def __exit__(self, *exc):
        if self._own_executor:
            self._executor.shutdown()
            self._executor = None
            self._own_executor = False

    def initialize(self) -> SimulationState:
        return initialize(self.population, self.params.initial_exposed, self.params.seed, self.disease)

    # phase 1
    def _select_actions(self, sim: SimulationState) -> np.ndarray:
        pop, t, seed = self.population, sim.t, self.params.seed
        acts = np.zeros((len(pop), N_ACTIONS), dtype=np.uint8)
        obs_of = partial(_observable, sim.obs, pop.pids)
        day = t % 7
        for i, person in enumerate(pop.persons):
            ctx = BehaviorContext(
                t, person, int(sim.state[i]), sim.global_observables, int(self.model_classes[i]),
                observables=partial(obs_of, i), visits=partial(pop.visits_of, person.pid, day),
            )
            a = self.behavior.select_action(ctx, Stream.keyed(seed, BEHAVIOR, t, person.pid))
            acts[i] = a
        s = self.params.scales
        mask, dist = acts[:, 0].astype(bool), acts[:, 1].astype(bool)
        sim.beta_s = np.where(mask, s.mask_susc, 1.0) * np.where(dist, s.distancing_susc, 1.0)
        sim.beta_i = np.where(mask, s.mask_inf, 1.0) * np.where(dist, s.distancing_inf, 1.0)
        return acts

    # phase 2
    def effective_visits(self, t: int, acts: np.ndarray) -> VisitBatch:
        pop = self.population
        day = pop.day_table(t % 7)
        col = DROP_COLUMN[day.activity_type]
        dropped = (col >= 0) & (acts[day.pidx, np.maximum(col, 0)] == 1)
        lid = np.where(dropped, pop.residence[day.pidx], day.lid)
        pid = pop.pids[day.pidx]
        order = sort_order(lid, day.start, pid, day.end, day.activity_number)
        if pop.location_weights:
            weight = np.array([pop.weight(l) for l in lid[order]], dtype=np.float64)
        else:
            weight = np.ones(len(order))
        return VisitBatch(lid[order], day.pidx[order], day.start[order], day.end[order],
                          day.activity_type[order], day.activity_number[order], weight)

    # phase 3
    def _split(self, batch: VisitBatch) -> list[VisitBatch]:
        if len(self.partitions) == 1:
            return [batch]
        owner = self._owner[np.searchsorted(self._lid_sorted, batch.lid)]
        return [batch.take(owner == w) for w in range(len(self.partitions))]

    def _run_batches(self, batches: list[VisitBatch], people: PersonView, t: int) -> list[BatchResult]:
        p = self.params
        fn = partial(process_batch, people=people, model=self.disease, step=t, seed=p.seed,
                     contact_probability=p.contact_probability, want_trace=p.trace_propensities)
        if self._executor is None or len(batches) == 1:
            return [fn(b) for b in batches]
        return list(self._executor.map(fn, batches))

    def step(self, sim: SimulationState) -> SimulationState:
        """Advance ``sim`` by one step in place and return it."""
        t = sim.t
        pop = self.population
        clock = time.perf_counter

        phase = "observables"
        try:
            t0 = clock()
            sim.global_observables.append(sim.counts)
            if self.params.write_local_observables:
                sim.local_log.append({k: v.copy() for k, v in sim.obs.items()})

            phase = "actions"
            acts = self._select_actions(sim)
            sim.action_log.append(acts)
            t1 = clock()

            phase = "remap"
            batch = self.effective_visits(t, acts)

            phase = "locations"
            people = PersonView(pop.pids, sim.state, sim.beta_s, sim.beta_i, acts[:, 0].astype(np.int64),
                                acts[:, 1].astype(np.int64))
            parts = self._split(batch)
            results = self._run_batches(parts, people, t)
            t2 = clock()

            phase = "merge"
            candidates = sorted((c for r in results for c in r.candidates), key=lambda c: (c.susceptible, c.lid))
            if self.params.trace_propensities:
                sim.trace.extend(sorted(tr for r in results for tr in r.trace))
            chosen = []
            k = 0
            while k < len(candidates):
                m = k
                while m < len(candidates) and candidates[m].susceptible == candidates[k].susceptible:
                    m += 1
                pid = candidates[k].susceptible
                chosen.append(choose_infector(candidates[k:m], Stream.keyed(self.params.seed, MERGE, t, pid)))
                k = m

            phase = "apply"
            self._apply(sim, chosen)

            phase = "update observables"
            self._update_observables(sim, parts, results)
            t3 = clock()
        except Exception as exc:
            raise SimulationError(t, phase, exc) from exc

        sim.timings.setdefault("steps", []).append((t1 - t0, t2 - t1, t3 - t2))
        if log.isEnabledFor(logging.DEBUG):
            log.debug("step %d: actions %.3fs, locations %.3fs, merge/apply %.3fs, %d contacts, %d infections",
                      t, t1 - t0, t2 - t1, t3 - t2, sum(r.n_contacts for r in results), len(chosen))
        sim.t += 1
        return sim

    # phases 5 and 6
    def _apply(self, sim: SimulationState, chosen) -> None:
        t = sim.t
        pop, model = self.population, self.disease
        first = len(sim.transitions)
        entering = []
        infected = np.zeros(len(pop), dtype=bool)
        for cand in chosen:
            i = pop.index_of(cand.susceptible)
            infected[i] = True
            sim.state[i] = cand.exit_state
            sim.sched_target[i] = -1
            sim.transitions.append((t, int(cand.exit_state), cand.susceptible, cand.infector))
            entering.append(i)
        due = np.flatnonzero((sim.sched_target >= 0) & (sim.sched_step <= t) & ~infected)
        for i in due:
            i = int(i)
            sim.state[i] = sim.sched_target[i]
            sim.sched_target[i] = -1
            sim.transitions.append((t, int(sim.state[i]), int(pop.pids[i]), -1))
            entering.append(i)
        for i in entering:
            _progress(sim, i, int(pop.pids[i]), model, t, t)
        # (iteration, pid) order; stable so chained transitions keep their order
        sim.transitions[first:] = sorted(sim.transitions[first:], key=lambda r: r[2])

    def _update_observables(self, sim: SimulationState, parts: list[VisitBatch], results: list[BatchResult]) -> None:
        if not parts or sum(len(b) for b in parts) == 0:
            return
        cat = lambda f: np.concatenate([getattr(b, f) for b in parts])  # noqa: E731
        pidx, start, number, atype, lid = cat("pidx"), cat("start"), cat("activity_number"), cat("activity_type"), cat("lid")
        counts = {f: np.concatenate([getattr(r, f) for r in results]) for f in ("n_total", "symp_abs", "mask_abs", "distancing_abs")}
        slot = SLOT_OF_TYPE[atype]
        keep = slot >= 0
        order = np.lexsort((number[keep], start[keep], slot[keep], pidx[keep]))
        idx = np.flatnonzero(keep)[order]
        # last visit of each (person, slot) is the latest one of the day
        p, s = pidx[idx], slot[idx]
        last = np.ones(len(idx), dtype=bool)
        last[:-1] = (p[1:] != p[:-1]) | (s[1:] != s[:-1])
        idx, p, s = idx[last], p[last], s[last]
        sim.obs["obs_step"][p, s] = sim.t
        sim.obs["lid"][p, s] = lid[idx]
        for f, v in counts.items():
            sim.obs[f][p, s] = v[idx]

    def run(self, on_step: Callable[[SimulationState], None] | None = None) -> SimulationOutputs:
        with self:
            sim = self.initialize()
            for _ in range(self.params.iterations):
                self.step(sim)
                if on_step is not None:
                    on_step(sim)
        return self.outputs(sim)

    def outputs(self, sim: SimulationState) -> SimulationOutputs:
        return SimulationOutputs(
            pids=self.population.pids,
            model_classes=self.model_classes,
            global_counts=sim.global_observables.rows(),
            actions=sim.action_log,
            transitions=list(sim.transitions),
            local_observables=sim.local_log if self.params.write_local_observables else None,
            final_counts=tuple(int(c) for c in sim.counts),
            trace=sim.trace,
            iterations=sim.t,
        )


def _observable(obs: dict, pids: np.ndarray, i: int, slot: int) -> LocalObservable:
    return LocalObservable(
        int(obs["obs_step"][i, slot]), int(pids[i]), int(obs["lid"][i, slot]), int(OBSERVED_TYPES[slot]),
        int(obs["n_total"][i, slot]), int(obs["symp_abs"][i, slot]), int(obs["mask_abs"][i, slot]),
        int(obs["distancing_abs"][i, slot]),
    )


def step(sim: SimulationState, engine: Engine) -> SimulationState:
    return engine.step(sim)


def run(
    config: Config,
    population: Population,
    disease: DiseaseModel,
    behavior: BehaviorModel,
    on_step: Callable[[SimulationState], None] | None = None,
    **overrides,
) -> SimulationOutputs:
    """Initialise and run ``config.iterations`` steps; ``overrides`` patch :class:`RunParameters`."""
    params = RunParameters.from_config(config, **overrides)
    return Engine(population, disease, behavior, params).run(on_step)
