"""Scenario simulator: determinism, consistency, serialization."""

import copy

import pytest

from _helpers import TINY_SCENARIO
from locater.errors import DataError, InfeasibleCapacityError, UnknownDeviceError
from locater.simulate import (
    bundled_scenario,
    bundled_scenario_names,
    generate,
    predictability,
    predictability_bucket,
    read_truth,
    scenario_from_dict,
    write_events_csv,
    write_space_json,
    write_truth,
)
from locater.store import parse_events, parse_space


def _tiny(**overrides):
    doc = copy.deepcopy(TINY_SCENARIO)
    doc.update(overrides)
    return scenario_from_dict(doc)


def test_bundled_scenarios_are_available():
    names = bundled_scenario_names()
    assert {"office", "university", "mall", "airport"} <= set(names)
    assert bundled_scenario("office").name == "office"
    with pytest.raises(DataError):
        bundled_scenario("atlantis")


def test_scenario_validation():
    bad = copy.deepcopy(TINY_SCENARIO)
    bad["emission_probability"] = 1.5
    with pytest.raises(DataError):
        scenario_from_dict(bad)

    bad = copy.deepcopy(TINY_SCENARIO)
    bad["profiles"][0]["home_rooms"] = ["nowhere"]
    with pytest.raises(DataError):
        scenario_from_dict(bad)

    bad = copy.deepcopy(TINY_SCENARIO)
    bad["events"][0]["capacity"] = 0
    with pytest.raises(DataError):
        scenario_from_dict(bad)

    bad = copy.deepcopy(TINY_SCENARIO)
    bad["events"][0]["room"] = "void"
    with pytest.raises(DataError):
        scenario_from_dict(bad)


def test_generation_is_deterministic():
    a = generate(_tiny())
    b = generate(_tiny())
    assert a.events == b.events
    assert a.truth == b.truth


def test_events_agree_with_ground_truth():
    result = generate(_tiny())
    assert result.events and result.truth
    covering = {
        rec.device: [] for rec in result.truth
    }
    for rec in result.truth:
        covering[rec.device].append(rec)
    for event in result.events:
        rooms = result.space.regions[event.ap].rooms
        rec = next(
            r for r in covering[event.dev] if r.start <= event.time < r.end
        )
        assert rec.room in rooms


def test_population_gets_device_entries():
    result = generate(_tiny())
    assert set(result.space.devices) == {"owner001", "guest001", "guest002"}
    assert result.space.devices["owner001"].preferred_rooms == frozenset({"desk"})
    assert result.space.devices["guest001"].preferred_rooms == frozenset()


def test_mandatory_overflow_raises():
    doc = copy.deepcopy(TINY_SCENARIO)
    doc["events"][0]["capacity"] = 1
    doc["profiles"][1]["attendance"]["lunch"] = 1.0
    with pytest.raises(InfeasibleCapacityError):
        generate(scenario_from_dict(doc))


def test_capacity_caps_attendance():
    # the meeting room is nobody's base room, so its only occupants are
    # event attendees and the capacity bound is observable in the truth
    doc = copy.deepcopy(TINY_SCENARIO)
    doc["space"]["regions"]["tapm"] = ["meet"]
    doc["space"]["rooms"]["meet"] = {"type": "private"}
    doc["events"][0]["room"] = "meet"
    doc["events"][0]["capacity"] = 1
    result = generate(scenario_from_dict(doc))
    start = result.config.start
    for day in range(3):
        window_lo = start + day * 86_400 + 12 * 3600
        window_hi = window_lo + 30 * 60
        present = {
            rec.device
            for rec in result.truth
            if rec.room == "meet" and rec.start < window_hi and rec.end > window_lo
        }
        assert len(present) <= 1


def test_predictability_and_buckets():
    result = generate(_tiny())
    pct = predictability(result.truth, "owner001")
    assert 40 < pct <= 100
    assert predictability_bucket(100.0) == "[85,100)"
    assert predictability_bucket(60.0) == "[55,70)"
    assert predictability_bucket(10.0) == "<40"
    with pytest.raises(UnknownDeviceError):
        predictability(result.truth, "nobody")


def test_serialization_round_trips(tmp_path):
    result = generate(_tiny())

    truth_path = tmp_path / "truth.csv"
    write_truth(result.truth, truth_path)
    assert read_truth(truth_path) == result.truth

    events_path = tmp_path / "events.csv"
    write_events_csv(result.events, events_path)
    parsed, rejects = parse_events(events_path)
    assert rejects == []
    assert [(e.dev, e.time, e.ap) for e in parsed] == [
        (e.dev, e.time, e.ap) for e in result.events
    ]

    space_path = tmp_path / "space.json"
    write_space_json(result.space, space_path)
    space = parse_space(space_path)
    assert space.regions.keys() == result.space.regions.keys()
    assert space.devices["owner001"].preferred_rooms == frozenset({"desk"})
