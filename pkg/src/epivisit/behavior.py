"""Per-person daily actions and the behavior models that choose them.

A behavior model maps a read-only :class:`BehaviorContext` (time step, the
person's record and health state, their latest local observables and the
population-wide history) plus a keyed random stream to an :class:`Action`.
Models hold no mutable state; anything that must persist across steps (e.g.
membership of a fixed random subset) is derived from a hash of the run seed.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Any, Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .disease import HealthState
from .errors import BadParameter, UnknownModel
from .population import ActivityType, Person, Visit
from .streams import MEMBERSHIP, Stream, derive_key, name_tag, uniform_at

ACTION_FIELDS = ("mask", "distancing", "no_other", "no_college", "no_shopping", "no_religion", "no_school", "no_work")
N_ACTIONS = len(ACTION_FIELDS)

# activity type -> index of its drop flag in the action vector
DROP_INDEX = {
    ActivityType.OTHER: 2,
    ActivityType.COLLEGE: 3,
    ActivityType.SHOPPING: 4,
    ActivityType.RELIGION: 5,
    ActivityType.SCHOOL: 6,
    ActivityType.WORK: 7,
}
# lookup table indexed by activity type code; -1 = never dropped
DROP_COLUMN = np.full(max(ActivityType) + 1, -1, dtype=np.int64)
for _t, _i in DROP_INDEX.items():
    DROP_COLUMN[_t] = _i

# activity types that own a local-observable slot, in slot order
OBSERVED_TYPES = (
    ActivityType.HOME,
    ActivityType.WORK,
    ActivityType.SHOPPING,
    ActivityType.OTHER,
    ActivityType.SCHOOL,
    ActivityType.COLLEGE,
    ActivityType.RELIGION,
)
N_SLOTS = len(OBSERVED_TYPES)
SLOT_OF_TYPE = np.full(max(ActivityType) + 1, -1, dtype=np.int64)
for _i, _t in enumerate(OBSERVED_TYPES):
    SLOT_OF_TYPE[_t] = _i


class Action(NamedTuple):
    mask: int = 0
    distancing: int = 0
    no_other: int = 0
    no_college: int = 0
    no_shopping: int = 0
    no_religion: int = 0
    no_school: int = 0
    no_work: int = 0

    def drops(self, activity_type: int) -> bool:
        col = DROP_COLUMN[activity_type]
        return col >= 0 and bool(self[col])


NO_ACTION = Action()


class LocalObservable(NamedTuple):
    obs_step: int  # -1 if never observed
    pid: int
    lid: int
    activity_type: int
    n_total: int
    symp_abs: int
    mask_abs: int
    distancing_abs: int

    @staticmethod
    def _rel(count: int, total: int) -> float:
        return count / total if total > 0 else 0.0

    @property
    def symp_rel(self) -> float:
        return self._rel(self.symp_abs, self.n_total)

    @property
    def mask_rel(self) -> float:
        return self._rel(self.mask_abs, self.n_total)

    @property
    def distancing_rel(self) -> float:
        return self._rel(self.distancing_abs, self.n_total)

    @property
    def observed(self) -> bool:
        return self.obs_step >= 0


class GlobalObservables:
    """Per-step health-state counts; row ``t`` holds the counts at the start of step ``t``."""

    def __init__(self, population_size: int):
        self.population_size = population_size
        self._rows: list[tuple[int, ...]] = []

    def append(self, counts: Sequence[int]) -> None:
        counts = tuple(int(c) for c in counts)
        if len(counts) != len(HealthState) or sum(counts) != self.population_size:
            raise ValueError(f"counts {counts} do not partition a population of {self.population_size}")
        self._rows.append(counts)

    def __len__(self) -> int:
        return len(self._rows)

    def counts(self, step: int = -1) -> tuple[int, ...]:
        return self._rows[step]

    def fractions(self, step: int = -1) -> tuple[float, ...]:
        n = self.population_size
        return tuple(c / n for c in self._rows[step])

    def n(self, state: HealthState, step: int = -1) -> int:
        return self._rows[step][state]

    def r(self, state: HealthState, step: int = -1) -> float:
        return self._rows[step][state] / self.population_size

    def rows(self) -> list[tuple[int, ...]]:
        return list(self._rows)


class BehaviorContext:
    """Read-only view of what one person knows at the start of a step.

    Local observables and day visits are fetched lazily through accessors
    supplied by the engine, so building a context is cheap.
    """

    __slots__ = ("time_step", "weekday", "person", "state", "model_class", "global_observables", "_obs", "_visits")

    def __init__(
        self,
        time_step: int,
        person: Person,
        state: HealthState,
        global_observables: GlobalObservables,
        model_class: int = 0,
        observables: Callable[[int], LocalObservable] | Sequence[LocalObservable] | None = None,
        visits: Callable[[], list[Visit]] | Sequence[Visit] | None = None,
    ):
        self.time_step = time_step
        self.weekday = time_step % 7
        self.person = person
        self.state = HealthState(state)
        self.model_class = model_class
        self.global_observables = global_observables
        self._obs = observables
        self._visits = visits

    def observable(self, activity_type: int) -> LocalObservable:
        slot = int(SLOT_OF_TYPE[activity_type])
        if slot < 0:
            raise KeyError(f"activity type {activity_type} has no local observable")
        if self._obs is None:
            return LocalObservable(-1, self.person.pid, 0, int(activity_type), 0, 0, 0, 0)
        if callable(self._obs):
            return self._obs(slot)
        return self._obs[slot]

    @property
    def local_observables(self) -> list[LocalObservable]:
        return [self.observable(t) for t in OBSERVED_TYPES]

    @property
    def visits(self) -> list[Visit]:
        if self._visits is None:
            return []
        return self._visits() if callable(self._visits) else list(self._visits)


class BehaviorModel(abc.ABC):
    """Plugin interface: class assignment once per run, action selection every step."""

    name: str = "abstract"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def assign_class(self, person: Person) -> int:
        return 0

    @abc.abstractmethod
    def select_action(self, ctx: BehaviorContext, stream: Stream) -> Action: ...

    def _member(self, pid: int, fraction: float) -> bool:
        """Seeded, order-free membership test for a fixed random subset."""
        key = derive_key(self.seed, MEMBERSHIP, name_tag(self.name), pid)
        return uniform_at(key, 0) < fraction

    def __repr__(self) -> str:
        params = ", ".join(f"{k}={v!r}" for k, v in vars(self).items())
        return f"{type(self).__name__}({params})"


def _fraction(value, name: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise BadParameter(f"{name} must be a number, got {value!r}") from None
    if not 0.0 <= v <= 1.0:
        raise BadParameter(f"{name} must lie in [0, 1], got {v}")
    return v


def _nonneg_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0 or int(value) != value:
        raise BadParameter(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)


def _number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise BadParameter(f"{name} must be a number, got {value!r}")
    return float(value)


class DefaultModel(BehaviorModel):
    """Independent daily mask / distancing choices with fixed probabilities (0 by default)."""

    name = "default"

    def __init__(self, seed: int = 0, mask_probability: float = 0.0, distancing_probability: float = 0.0):
        super().__init__(seed)
        self.mask_probability = _fraction(mask_probability, "mask_probability")
        self.distancing_probability = _fraction(distancing_probability, "distancing_probability")

    def select_action(self, ctx, stream):
        if self.mask_probability == 0.0 and self.distancing_probability == 0.0:
            return NO_ACTION
        mask = int(stream.uniform() < self.mask_probability)
        dist = int(stream.uniform() < self.distancing_probability)
        return Action(mask, dist)


class BaseModel(BehaviorModel):
    """Nobody does anything."""

    name = "base"

    def select_action(self, ctx, stream):
        return NO_ACTION


class MaskDistancingRandom(BehaviorModel):
    """Each step, a fresh random share ``fraction`` of people masks and distances."""

    name = "mask_distancing_random"

    def __init__(self, seed: int = 0, fraction: float = 0.70):
        super().__init__(seed)
        self.fraction = _fraction(fraction, "fraction")

    def select_action(self, ctx, stream):
        if stream.uniform() < self.fraction:
            return Action(mask=1, distancing=1)
        return NO_ACTION


class MaskDistancingFixed(BehaviorModel):
    """A fixed random subset of size ~``fraction`` masks and distances every step."""

    name = "mask_distancing_fixed"

    def __init__(self, seed: int = 0, fraction: float = 0.70):
        super().__init__(seed)
        self.fraction = _fraction(fraction, "fraction")

    def assign_class(self, person):
        return int(self._member(person.pid, self.fraction))

    def select_action(self, ctx, stream):
        if self._member(ctx.person.pid, self.fraction):
            return Action(mask=1, distancing=1)
        return NO_ACTION


_DROP_NON_ESSENTIAL = dict(no_other=1, no_college=1, no_shopping=1, no_religion=1, no_school=1)


class _VisitDropMandated(BehaviorModel):
    def __init__(self, seed: int = 0, fraction: float = 0.75, start_day: int = 8, income_threshold: float = 100000):
        super().__init__(seed)
        self.fraction = _fraction(fraction, "fraction")
        self.start_day = _nonneg_int(start_day, "start_day")
        self.income_threshold = _number(income_threshold, "income_threshold")

    def assign_class(self, person):
        return int(person.hh_income >= self.income_threshold)

    def _selected(self, ctx: BehaviorContext, stream: Stream) -> bool:
        raise NotImplementedError

    def select_action(self, ctx, stream):
        if ctx.time_step < self.start_day:
            return NO_ACTION
        selected = self._selected(ctx, stream)
        wfh = int(ctx.person.hh_income >= self.income_threshold)
        if selected:
            return Action(no_work=wfh, **_DROP_NON_ESSENTIAL)
        return Action(no_work=wfh)


class VisitDropMandatedRandom(_VisitDropMandated):
    """From ``start_day`` a fresh random share of people stays home for non-essential visits."""

    name = "visit_drop_mandated_random"

    def _selected(self, ctx, stream):
        return stream.uniform() < self.fraction


class VisitDropMandatedFixed(_VisitDropMandated):
    name = "visit_drop_mandated_fixed"

    def assign_class(self, person):
        return int(person.hh_income >= self.income_threshold) + 2 * int(self._member(person.pid, self.fraction))

    def _selected(self, ctx, stream):
        return self._member(ctx.person.pid, self.fraction)


class VisitDropObserved(BehaviorModel):
    """Skip an activity type while its latest observation is recent and showed a symptomatic person.

    People at or above ``income_threshold`` apply the same rule to work.
    """

    name = "visit_drop_observed"
    WATCHED = (ActivityType.SHOPPING, ActivityType.OTHER, ActivityType.SCHOOL, ActivityType.COLLEGE, ActivityType.RELIGION)

    def __init__(self, seed: int = 0, window_days: int = 7, income_threshold: float = 100000):
        super().__init__(seed)
        self.window_days = _nonneg_int(window_days, "window_days")
        self.income_threshold = _number(income_threshold, "income_threshold")

    def assign_class(self, person):
        return int(person.hh_income >= self.income_threshold)

    def _alarming(self, ctx: BehaviorContext, activity_type: int) -> bool:
        obs = ctx.observable(activity_type)
        return obs.observed and ctx.time_step - obs.obs_step < self.window_days and obs.symp_abs >= 1

    def select_action(self, ctx, stream):
        flags = [0] * N_ACTIONS
        for t in self.WATCHED:
            if self._alarming(ctx, t):
                flags[DROP_INDEX[t]] = 1
        if ctx.person.hh_income >= self.income_threshold and self._alarming(ctx, ActivityType.WORK):
            flags[DROP_INDEX[ActivityType.WORK]] = 1
        return Action(*flags)


BUILTIN_MODELS: dict[str, type[BehaviorModel]] = {
    cls.name: cls
    for cls in (
        DefaultModel,
        BaseModel,
        MaskDistancingRandom,
        MaskDistancingFixed,
        VisitDropMandatedRandom,
        VisitDropMandatedFixed,
        VisitDropObserved,
    )
}


def builtin(identifier: str, params: Mapping[str, Any] | None = None, seed: int = 0) -> BehaviorModel:
    """Instantiate a built-in model by name with its parameters bound."""
    try:
        cls = BUILTIN_MODELS[identifier]
    except KeyError:
        raise UnknownModel(f"unknown behavior model {identifier!r}; choose from {sorted(BUILTIN_MODELS)}") from None
    params = dict(params or {})
    params.pop("seed", None)
    try:
        return cls(seed, **params)
    except TypeError as exc:
        raise BadParameter(f"{identifier}: {exc}") from None


def select_action(model: BehaviorModel, ctx: BehaviorContext, stream: Stream) -> Action:
    return model.select_action(ctx, stream)


def apply_action_to_day(action: Action, person: Person, visits: Sequence[Visit]) -> list[Visit]:
    """Move every visit whose activity type is dropped to the person's residence."""
    out = []
    for v in visits:
        if action.drops(v.activity_type):
            v = Visit(v.daynum, v.pid, v.activity_number, v.activity_type, v.start_time, v.end_time, v.duration,
                      person.residence_lid)
        out.append(v)
    return out


@dataclass(frozen=True)
class ActionScales:
    mask_susc: float = 0.8
    mask_inf: float = 0.8
    distancing_susc: float = 0.8
    distancing_inf: float = 0.8

    @classmethod
    def from_config(cls, config) -> "ActionScales":
        return cls(config.mask_susc_scale, config.mask_inf_scale, config.distancing_susc_scale, config.distancing_inf_scale)


def action_scales(action: Action, scales: ActionScales | Any) -> tuple[float, float]:
    """(susceptibility multiplier, infectivity multiplier) implied by the mask and distancing flags."""
    if not isinstance(scales, ActionScales):
        scales = ActionScales.from_config(scales)
    susc = inf = 1.0
    if action.mask:
        susc *= scales.mask_susc
        inf *= scales.mask_inf
    if action.distancing:
        susc *= scales.distancing_susc
        inf *= scales.distancing_inf
    return susc, inf
