"""Shared run helpers for engine, output and acceptance tests."""

from __future__ import annotations

from epivisit.behavior import builtin
from epivisit.disease import default_seir_model
from epivisit.engine import Engine, RunParameters

# tau/contact probability giving a 60-70% base attack rate on generate_random_population(1000, 50, 42)
CALIBRATED_TAU = 2e-6
CALIBRATED_CONTACT_PROBABILITY = 0.33


def simulate(population, model=None, behavior="default", behavior_params=None, on_step=None, **params):
    model = model or default_seir_model(tau=CALIBRATED_TAU)
    seed = params.get("seed", 0)
    engine = Engine(population, model, builtin(behavior, behavior_params, seed=seed), RunParameters(**params))
    return engine.run(on_step)


def state_history(outputs, n_steps=None):
    """Per-step start-of-step state of every pid, rebuilt from the transition log."""
    n_steps = outputs.iterations if n_steps is None else n_steps
    state = {int(p): 0 for p in outputs.pids}
    by_step = {}
    for it, s, p1, _ in outputs.transitions:
        by_step.setdefault(it, []).append((p1, s))
    for p1, s in by_step.get(-1, []):
        state[p1] = s
    history = []
    for t in range(n_steps):
        history.append(dict(state))
        for p1, s in by_step.get(t, []):
            state[p1] = s
    return history, state
