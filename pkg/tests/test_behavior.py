from dataclasses import replace

import pytest

from epivisit.behavior import (
    ACTION_FIELDS,
    NO_ACTION,
    Action,
    ActionScales,
    BehaviorContext,
    GlobalObservables,
    LocalObservable,
    action_scales,
    apply_action_to_day,
    builtin,
)
from epivisit.disease import HealthState
from epivisit.errors import BadParameter, UnknownModel
from epivisit.population import ActivityType, Person, Visit
from epivisit.streams import BEHAVIOR, Stream

PERSON = Person(2208253, 5586585, 38, 1, 4, 1, 1, "military", 6, 55000, 1, 1001018209,
                -78.4884675, 38.0430255, "51", "540", "201", "1")
RICH = replace(PERSON, pid=5586586, hh_income=100000)
DAY = [
    Visit(0, 5586585, 0, ActivityType.HOME, 0, 27900, 27900, 1001018209),
    Visit(0, 5586585, 2, ActivityType.WORK, 28800, 45900, 17100, 82246),
    Visit(0, 5586585, 4, ActivityType.OTHER, 46800, 48000, 1200, 86726),
]
ALL = ("default", "base", "mask_distancing_random", "mask_distancing_fixed",
       "visit_drop_mandated_random", "visit_drop_mandated_fixed", "visit_drop_observed")


def ctx(t=0, person=PERSON, observables=None):
    g = GlobalObservables(1)
    g.append((1, 0, 0, 0, 0))
    return BehaviorContext(t, person, HealthState.S, g, observables=observables)


def stream(t, pid, seed=0):
    return Stream.keyed(seed, BEHAVIOR, t, pid)


def test_action_has_eight_fields():
    assert ACTION_FIELDS == ("mask", "distancing", "no_other", "no_college", "no_shopping", "no_religion", "no_school", "no_work")
    assert len(NO_ACTION) == 8
    assert not any(Action(*[1] * 8).drops(t) for t in (ActivityType.HOME, ActivityType.TRANSIT))


def test_builtin_names_and_errors():
    for name in ALL:
        assert builtin(name).name == name
    with pytest.raises(UnknownModel):
        builtin("nonexistent")
    with pytest.raises(BadParameter):
        builtin("mask_distancing_fixed", {"fraction": 1.5})
    with pytest.raises(BadParameter):
        builtin("base", {"bogus": 1})


def test_defaults_bound():
    assert builtin("mask_distancing_random").fraction == 0.70
    m = builtin("visit_drop_mandated_fixed")
    assert (m.fraction, m.start_day, m.income_threshold) == (0.75, 8, 100000)
    assert builtin("visit_drop_observed").window_days == 7


def test_base_never_acts():
    m = builtin("base")
    assert all(m.select_action(ctx(t), stream(t, PERSON.pid)) == NO_ACTION for t in range(30))


@pytest.mark.parametrize("name", ALL)
def test_deterministic_given_seed_step_pid(name):
    m = builtin(name, seed=9)
    for t in (0, 8, 20):
        assert m.select_action(ctx(t), stream(t, PERSON.pid, 9)) == m.select_action(ctx(t), stream(t, PERSON.pid, 9))


def test_mask_fixed_membership_constant_and_seeded():
    m = builtin("mask_distancing_fixed", seed=3)
    persons = [replace(PERSON, pid=p) for p in range(10_000)]
    acts = [m.select_action(ctx(0, p), stream(0, p.pid)) for p in persons]
    share = sum(a.mask for a in acts) / len(acts)
    assert abs(share - 0.70) < 0.02
    assert all(a.mask == a.distancing for a in acts)
    for p, a in list(zip(persons, acts))[:200]:
        assert all(m.select_action(ctx(t, p), stream(t, p.pid)) == a for t in (1, 5, 40))
        assert m.assign_class(p) == a.mask
    other = builtin("mask_distancing_fixed", seed=4)
    assert [other.select_action(ctx(0, p), None).mask for p in persons[:500]] != [a.mask for a in acts[:500]]


def test_mask_fixed_full_fraction():
    m = builtin("mask_distancing_fixed", {"fraction": 1.0})
    assert m.select_action(ctx(0), stream(0, 1)) == Action(mask=1, distancing=1)


def test_mask_random_share_each_step():
    m = builtin("mask_distancing_random", seed=1)
    for t in (0, 1):
        share = sum(m.select_action(ctx(t, replace(PERSON, pid=p)), stream(t, p, 1)).mask for p in range(10_000)) / 10_000
        assert abs(share - 0.70) < 0.02


def test_visit_drop_mandated_start_day():
    m = builtin("visit_drop_mandated_fixed", {"fraction": 1.0})
    assert m.select_action(ctx(7), stream(7, 1)) == NO_ACTION
    a = m.select_action(ctx(8), stream(8, 1))
    assert a == Action(no_other=1, no_college=1, no_shopping=1, no_religion=1, no_school=1)
    rich = m.select_action(ctx(8, RICH), stream(8, 1))
    assert rich.no_work == 1 and rich.no_shopping == 1


def test_visit_drop_mandated_income_rule_without_selection():
    m = builtin("visit_drop_mandated_random", {"fraction": 0.0})
    assert m.select_action(ctx(9, RICH), stream(9, RICH.pid)) == Action(no_work=1)
    assert m.select_action(ctx(9), stream(9, PERSON.pid)) == NO_ACTION


def test_visit_drop_mandated_random_share():
    m = builtin("visit_drop_mandated_random", seed=2)
    share = sum(m.select_action(ctx(10, replace(PERSON, pid=p)), stream(10, p, 2)).no_shopping for p in range(10_000)) / 10_000
    assert abs(share - 0.75) < 0.02


def observed(t_obs, symp, atype=ActivityType.SHOPPING, pid=PERSON.pid):
    def lookup(slot):
        t = slot + 1  # slots follow activity type codes 1..7
        if t == atype:
            return LocalObservable(t_obs, pid, 77, t, 5, symp, 0, 0)
        return LocalObservable(-1, pid, 0, t, 0, 0, 0, 0)
    return lookup


@pytest.mark.parametrize(
    "t_obs,symp,expect",
    [(17, 2, 1), (14, 1, 1), (13, 1, 0), (17, 0, 0), (-1, 0, 0)],
)
def test_visit_drop_observed_rule(t_obs, symp, expect):
    m = builtin("visit_drop_observed")
    a = m.select_action(ctx(20, observables=observed(t_obs, symp)), stream(20, 1))
    assert a.no_shopping == expect
    assert sum(a) == expect


def test_visit_drop_observed_work_only_for_high_income():
    m = builtin("visit_drop_observed")
    obs = observed(19, 1, ActivityType.WORK)
    assert m.select_action(ctx(20, observables=obs), None).no_work == 0
    assert m.select_action(ctx(20, RICH, observables=obs), None).no_work == 1


def test_apply_action_to_day():
    assert apply_action_to_day(NO_ACTION, PERSON, DAY) == DAY
    out = apply_action_to_day(Action(no_work=1), PERSON, DAY)
    assert out[1] == replace(DAY[1], lid=1001018209)
    assert out[0] == DAY[0] and out[2] == DAY[2]
    assert apply_action_to_day(Action(no_shopping=1), PERSON, DAY) == DAY
    everything = apply_action_to_day(Action(*[1] * 8), PERSON, DAY)
    assert [(v.start_time, v.end_time, v.activity_type) for v in everything] == [
        (v.start_time, v.end_time, v.activity_type) for v in DAY
    ]
    assert {v.lid for v in everything} == {1001018209}


def test_action_scales():
    s = ActionScales()
    assert action_scales(NO_ACTION, s) == (1.0, 1.0)
    assert action_scales(Action(mask=1), s) == (0.8, 0.8)
    assert action_scales(Action(mask=1, distancing=1), s) == pytest.approx((0.64, 0.64))
    assert action_scales(Action(distancing=1), ActionScales(0.5, 0.4, 0.3, 0.2)) == (0.3, 0.2)


def test_local_observable_ratios():
    o = LocalObservable(3, 1, 2, 3, 3, 1, 0, 3)
    assert (o.symp_rel, o.mask_rel, o.distancing_rel) == (1 / 3, 0.0, 1.0)
    assert LocalObservable(-1, 1, 0, 3, 0, 0, 0, 0).symp_rel == 0.0


def test_global_observables():
    g = GlobalObservables(10)
    g.append((9, 1, 0, 0, 0))
    assert g.n(HealthState.E) == 1 and g.r(HealthState.S) == 0.9
    assert sum(g.fractions()) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        g.append((9, 0, 0, 0, 0))


def test_context_weekday():
    assert ctx(15).weekday == 1
    assert ctx(3).observable(ActivityType.WORK).obs_step == -1
