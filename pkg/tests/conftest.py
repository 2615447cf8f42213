"""Session-scoped fixtures; the simulated scenarios are expensive, so
each is generated exactly once per test run."""

import pytest

from locater import simulate
from locater.store import EventStore

SCENARIO_NAMES = ("airport", "mall", "office", "university")


@pytest.fixture(scope="session")
def scenario_runs():
    runs = {}
    for name in SCENARIO_NAMES:
        sim = simulate.generate(simulate.bundled_scenario(name))
        runs[name] = (sim, EventStore.build(sim.events, sim.space))
    return runs


@pytest.fixture(scope="session")
def office_run(scenario_runs):
    return scenario_runs["office"]
