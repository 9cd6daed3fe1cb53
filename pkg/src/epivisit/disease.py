"""Extended SEIR disease model and its stochastic kernels.

Transmission uses the direct Gillespie method per (susceptible person,
location): the total propensity of all applicable contact triples decides
whether a transmission happens within one step, and cumulative-sum inversion
picks the triple. Progression (all within-host changes) is sampled on entry to
a state: next state from the edge probabilities, dwell time from the edge's
dwell distribution.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

from scipy import stats

from .streams import Stream

STEP_DURATION = 1.0  # one step (day); tau is per-second per-step


class HealthState(enum.IntEnum):
    S = 0
    E = 1
    Is = 2
    Ia = 3
    R = 4

    @classmethod
    def parse(cls, value) -> "HealthState":
        if isinstance(value, str):
            try:
                return cls[value]
            except KeyError:
                raise ValueError(f"unknown health state {value!r}") from None
        return cls(int(value))


N_STATES = len(HealthState)


@dataclass(frozen=True)
class DwellSpec:
    """Dwell-time distribution in steps: ``fixed`` (``days``) or ``gamma`` (``shape``, ``scale``)."""

    kind: str = "fixed"
    days: float = 0.0
    shape: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind == "fixed":
            if not self.days >= 0:
                raise ValueError(f"fixed dwell must be >= 0, got {self.days}")
        elif self.kind == "gamma":
            if not (self.shape > 0 and self.scale > 0):
                raise ValueError(f"gamma dwell needs shape > 0 and scale > 0, got {self.shape}, {self.scale}")
        else:
            raise ValueError(f"unknown dwell kind {self.kind!r}")

    @classmethod
    def fixed(cls, days: float) -> "DwellSpec":
        return cls(kind="fixed", days=days)

    @classmethod
    def gamma(cls, shape: float, scale: float) -> "DwellSpec":
        return cls(kind="gamma", shape=shape, scale=scale)

    def quantile(self, u: float) -> float:
        if self.kind == "fixed":
            return self.days
        return float(stats.gamma.ppf(u, self.shape, scale=self.scale))

    def sample_steps(self, u: float) -> int:
        """Dwell in whole steps: round half away from zero, clamp at 0."""
        x = self.quantile(u)
        if x <= 0:
            return 0
        return int(math.floor(x + 0.5))

    def to_dict(self) -> dict:
        if self.kind == "fixed":
            return {"kind": "fixed", "days": self.days}
        return {"kind": "gamma", "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class TransmissionConfiguration:
    entry: HealthState
    exit: HealthState
    contact: HealthState
    weight: float = 1.0


@dataclass(frozen=True)
class ProgressionEdge:
    source: HealthState
    target: HealthState
    probability: float
    dwell: DwellSpec


class TransmissionCandidate(NamedTuple):
    susceptible: int  # pid
    infector: int  # pid
    exit_state: HealthState
    lid: int
    propensity: float


class ContactTriple(NamedTuple):
    """One applicable (infector, configuration) pair for a susceptible person at a location."""

    infector: int  # pid
    infector_state: HealthState
    duration: float  # seconds
    infectivity: float  # effective, i.e. scale * iota(state)


@dataclass(frozen=True)
class DiseaseModel:
    infectivity: tuple  # indexed by HealthState
    susceptibility: tuple
    transmissions: tuple[TransmissionConfiguration, ...]
    progressions: tuple[ProgressionEdge, ...]
    tau: float = 0.0
    step_duration: float = STEP_DURATION
    _out: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.infectivity) != N_STATES or len(self.susceptibility) != N_STATES:
            raise ValueError("infectivity and susceptibility need one value per health state")
        if min(self.infectivity) < 0 or min(self.susceptibility) < 0:
            raise ValueError("infectivity and susceptibility must be non-negative")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        for tc in self.transmissions:
            if tc.weight < 0:
                raise ValueError("transmission weight must be non-negative")
        out: dict[HealthState, list[ProgressionEdge]] = {}
        for e in self.progressions:
            if not 0.0 <= e.probability <= 1.0:
                raise ValueError(f"edge {e.source.name}->{e.target.name}: probability out of [0, 1]")
            out.setdefault(e.source, []).append(e)
        for src, edges in out.items():
            total = math.fsum(e.probability for e in edges)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"outgoing probabilities of {src.name} sum to {total}, not 1")
        object.__setattr__(self, "_out", {k: tuple(v) for k, v in out.items()})

    def outgoing(self, state: HealthState) -> tuple[ProgressionEdge, ...]:
        return self._out.get(HealthState(state), ())

    @property
    def susceptible_states(self) -> frozenset:
        return frozenset(tc.entry for tc in self.transmissions)

    @property
    def infectious_states(self) -> frozenset:
        return frozenset(tc.contact for tc in self.transmissions)

    def configurations_for(self, entry: HealthState, contact: HealthState) -> list[TransmissionConfiguration]:
        return [tc for tc in self.transmissions if tc.entry == entry and tc.contact == contact]

    def with_tau(self, tau: float) -> "DiseaseModel":
        return DiseaseModel(self.infectivity, self.susceptibility, self.transmissions, self.progressions, tau, self.step_duration)


def default_seir_model(tau: float = 0.0, dwell: Mapping[tuple, DwellSpec] | None = None) -> DiseaseModel:
    """S -> E by contact with Is or Ia; E -> Is (0.67) | Ia (0.33); Is, Ia -> R.

    Dwell times are gamma(2, 2.5) days out of E and gamma(4, 2) days out of
    Is/Ia unless overridden via ``dwell`` keyed by ``(source, target)``.
    """
    S, E, Is, Ia, R = HealthState
    dwell = dict(dwell or {})
    incubation = DwellSpec.gamma(2.0, 2.5)
    infectious = DwellSpec.gamma(4.0, 2.0)
    edges = (
        ProgressionEdge(E, Is, 0.67, dwell.get((E, Is), incubation)),
        ProgressionEdge(E, Ia, 0.33, dwell.get((E, Ia), incubation)),
        ProgressionEdge(Is, R, 1.0, dwell.get((Is, R), infectious)),
        ProgressionEdge(Ia, R, 1.0, dwell.get((Ia, R), infectious)),
    )
    return DiseaseModel(
        infectivity=(0.0, 0.0, 1.0, 1.0, 0.0),
        susceptibility=(1.0, 0.0, 0.0, 0.0, 0.0),
        transmissions=(
            TransmissionConfiguration(S, E, Is, 1.0),
            TransmissionConfiguration(S, E, Ia, 1.0),
        ),
        progressions=edges,
        tau=tau,
    )


def effective_susceptibility(scale: float, state: HealthState, model: DiseaseModel) -> float:
    return scale * model.susceptibility[state]


def effective_infectivity(scale: float, state: HealthState, model: DiseaseModel) -> float:
    return scale * model.infectivity[state]


def propensity(duration: float, tau: float, weight: float, susceptibility: float, infectivity: float, omega: float) -> float:
    """Transmission propensity of one contact configuration.

    ``susceptibility`` and ``infectivity`` are the effective (person-scaled)
    values of the susceptible and the infectious person respectively.
    """
    return (duration * tau) * weight * susceptibility * infectivity * omega


def triple_propensities(
    model: DiseaseModel,
    entry: HealthState,
    susceptibility: float,
    location_weight: float,
    contacts: Sequence[ContactTriple],
) -> list[tuple[float, ContactTriple, TransmissionConfiguration]]:
    """Expand contacts into (rho, contact, configuration) in well-ordered triple order.

    ``contacts`` must already be sorted by infector; configurations follow
    declaration order.
    """
    out = []
    for c in contacts:
        for tc in model.transmissions:
            if tc.entry == entry and tc.contact == c.infector_state:
                rho = propensity(c.duration, model.tau, location_weight, susceptibility, c.infectivity, tc.weight)
                out.append((rho, c, tc))
    return out


def sample_location_transmission(
    susceptible: int,
    entry: HealthState,
    susceptibility: float,
    lid: int,
    location_weight: float,
    contacts: Sequence[ContactTriple],
    model: DiseaseModel,
    stream: Stream,
    trace: list | None = None,
) -> TransmissionCandidate | None:
    """Direct Gillespie draw for one susceptible person at one location-day.

    Consumes exactly two uniforms from ``stream`` whenever at least one triple
    applies, whatever the outcome. If ``trace`` is given, every triple's
    ``(infector, duration, rho)`` is appended to it.
    """
    triples = triple_propensities(model, entry, susceptibility, location_weight, contacts)
    if not triples:
        return None
    u_wait = stream.uniform()
    u_pick = stream.uniform()
    if trace is not None:
        trace.extend((c.infector, c.duration, rho) for rho, c, _ in triples)
    cumulative = []
    total = 0.0
    for rho, _, _ in triples:
        total += rho
        cumulative.append(total)
    if total <= 0.0:
        return None
    wait = -math.log(u_wait) / total
    if wait > model.step_duration:
        return None
    alpha = u_pick * total
    k = bisect.bisect_left(cumulative, alpha)
    if k >= len(triples):
        k = len(triples) - 1
    while triples[k][0] <= 0.0:  # only reachable through rounding at the top end
        k -= 1
    rho, c, tc = triples[k]
    return TransmissionCandidate(susceptible, c.infector, tc.exit, lid, rho)


def choose_infector(candidates: Sequence[TransmissionCandidate], stream: Stream) -> TransmissionCandidate:
    """Pick one candidate with probability proportional to its propensity.

    Candidates must be in (susceptible, lid) order; one uniform is consumed
    only when there is more than one candidate.
    """
    if len(candidates) == 1:
        return candidates[0]
    cumulative = []
    total = 0.0
    for c in candidates:
        total += c.propensity
        cumulative.append(total)
    k = bisect.bisect_left(cumulative, stream.uniform() * total)
    return candidates[min(k, len(candidates) - 1)]


def sample_progression(
    state: HealthState, model: DiseaseModel, stream: Stream, current_step: int
) -> tuple[HealthState, int] | None:
    """Sample the next state and the step at whose end the transition fires.

    Returns ``None`` for terminal states. Draws two uniforms otherwise: one for
    the next state (cumulative probabilities in declaration order) and one for
    the dwell time.
    """
    edges = model.outgoing(state)
    if not edges:
        return None
    u = stream.uniform()
    u_dwell = stream.uniform()
    acc = 0.0
    chosen = edges[-1]
    for e in edges:
        acc += e.probability
        if u < acc:
            chosen = e
            break
    return chosen.target, current_step + chosen.dwell.sample_steps(u_dwell)
