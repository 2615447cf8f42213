"""Scenario simulator: synthetic trajectories plus the connectivity
events an AP infrastructure would log for them.

A scenario is a declarative document: a space model, population profiles
(count, schedule, attendance probabilities, preferred-room policy) and
scheduled room events with capacities.  The clock is minute-resolution;
each in-building minute emits a connectivity event to a covering AP with
the profile's emission probability.  Everything is a pure function of
(config, seed).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from .errors import DataError, InfeasibleCapacityError, UnknownDeviceError
from .model import (
    PRIVATE,
    PUBLIC,
    ConnectivityEvent,
    Device,
    Region,
    Room,
    SpaceModel,
)

DAY_S = 86400
MIN_S = 60

PREDICTABILITY_BUCKETS = ((40, 55), (55, 70), (70, 85), (85, 100))


@dataclass(frozen=True)
class Profile:
    name: str
    count: int
    attendance: dict[str, float]
    home_rooms: tuple[str, ...] = ()
    preferred_policy: str = "assigned"  # or "none"
    favorite_bias: float = 0.0  # stickiness of the daily public-room pick
    favorite_rooms: tuple[str, ...] = ()  # candidate favorites, default all public
    days: tuple[int, ...] = (0, 1, 2, 3, 4)
    arrive_hour: float = 9.0
    depart_hour: float = 17.0
    arrive_jitter_min: int = 30
    emission_probability: float | None = None


@dataclass(frozen=True)
class ScheduledEvent:
    klass: str
    room: str
    days: tuple[int, ...]
    start_hour: float
    duration_min: int
    capacity: int
    profiles: tuple[str, ...]


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    start: int  # epoch seconds, midnight of day 0
    horizon_days: int
    space: SpaceModel
    profiles: tuple[Profile, ...]
    events: tuple[ScheduledEvent, ...]
    emission_probability: float = 0.1


@dataclass(frozen=True)
class GroundTruthRecord:
    device: str
    room: str
    start: int
    end: int


@dataclass(frozen=True)
class SimulationResult:
    events: list[ConnectivityEvent]
    truth: list[GroundTruthRecord]
    space: SpaceModel
    config: ScenarioConfig


def _prob(p: float, what: str) -> float:
    if not (0.0 <= p <= 1.0):
        raise DataError(f"{what} must be a probability, got {p}")
    return float(p)


def load_scenario(path: str | Path) -> ScenarioConfig:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def bundled_scenario(name: str) -> ScenarioConfig:
    """One of the packaged scenarios: office, university, mall, airport."""
    ref = resources.files("locater") / "scenarios" / f"{name}.json"
    try:
        text = ref.read_text()
    except FileNotFoundError:
        raise DataError(f"no bundled scenario named {name!r}") from None
    return scenario_from_dict(json.loads(text))


def bundled_scenario_names() -> list[str]:
    base = resources.files("locater") / "scenarios"
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    space_doc = doc["space"]
    # region id doubles as the AP id, matching the store schema
    regions = {
        ap: Region(ap=ap, rooms=tuple(room_list))
        for ap, room_list in space_doc["regions"].items()
    }
    rooms = {
        rid: Room(kind=spec.get("type", PUBLIC))
        for rid, spec in space_doc["rooms"].items()
    }
    for rid, room in rooms.items():
        if room.kind not in (PUBLIC, PRIVATE):
            raise DataError(f"room {rid}: invalid type {room.kind!r}")
    space = SpaceModel(regions=regions, rooms=rooms, devices={})

    profiles = tuple(
        Profile(
            name=p["name"],
            count=int(p["count"]),
            attendance={k: _prob(v, "attendance") for k, v in p.get("attendance", {}).items()},
            home_rooms=tuple(p.get("home_rooms", [])),
            preferred_policy=p.get("preferred_policy", "assigned"),
            favorite_bias=_prob(p.get("favorite_bias", 0.0), "favorite_bias"),
            favorite_rooms=tuple(p.get("favorite_rooms", [])),
            days=tuple(p.get("days", [0, 1, 2, 3, 4])),
            arrive_hour=float(p.get("arrive_hour", 9)),
            depart_hour=float(p.get("depart_hour", 17)),
            arrive_jitter_min=int(p.get("arrive_jitter_min", 30)),
            emission_probability=p.get("emission_probability"),
        )
        for p in doc["profiles"]
    )
    events = tuple(
        ScheduledEvent(
            klass=e.get("class", "event"),
            room=e["room"],
            days=tuple(e["days"]),
            start_hour=float(e["start_hour"]),
            duration_min=int(e["duration_min"]),
            capacity=int(e["capacity"]),
            profiles=tuple(e["profiles"]),
        )
        for e in doc.get("events", [])
    )
    for prof in profiles:
        for rid in prof.favorite_rooms + prof.home_rooms:
            if rid not in rooms:
                raise DataError(f"profile {prof.name}: unknown room {rid}")
    for e in events:
        if e.capacity < 1:
            raise DataError(f"event in room {e.room}: capacity must be >= 1")
        if e.room not in rooms:
            raise DataError(f"event references unknown room {e.room}")

    start = doc["start"]
    if isinstance(start, str):
        start = int(
            datetime.fromisoformat(start).replace(tzinfo=timezone.utc).timestamp()
        )
    return ScenarioConfig(
        name=doc.get("name", "scenario"),
        seed=int(doc.get("seed", 0)),
        start=int(start),
        horizon_days=int(doc["horizon_days"]),
        space=space,
        profiles=profiles,
        events=events,
        emission_probability=_prob(doc.get("emission_probability", 0.1), "emission"),
    )


@dataclass
class _Person:
    dev: str
    profile: Profile
    preferred: str | None
    emission: float
    favorite: str | None = None


def _build_population(config: ScenarioConfig) -> list[_Person]:
    public_rooms = sorted(
        rid for rid, room in config.space.rooms.items() if room.kind == PUBLIC
    )
    people = []
    for profile in config.profiles:
        for i in range(profile.count):
            dev = f"{profile.name}{i + 1:03d}"
            preferred = None
            if profile.preferred_policy == "assigned" and profile.home_rooms:
                preferred = profile.home_rooms[i % len(profile.home_rooms)]
            emission = (
                profile.emission_probability
                if profile.emission_probability is not None
                else config.emission_probability
            )
            favorite = None
            pool = list(profile.favorite_rooms) or public_rooms
            if preferred is None and pool:
                favorite = pool[i % len(pool)]
            people.append(
                _Person(dev, profile, preferred, _prob(emission, "emission"), favorite)
            )
    return people


def generate(config: ScenarioConfig) -> SimulationResult:
    """Simulate the scenario and return events, ground truth and the
    space model extended with the generated device population."""
    rng = random.Random(config.seed)
    people = _build_population(config)
    regions_by_room: dict[str, list[str]] = {}
    for gid in sorted(config.space.regions):
        for rid in config.space.regions[gid].rooms:
            regions_by_room.setdefault(rid, []).append(gid)
    public_rooms = sorted(
        rid for rid, room in config.space.rooms.items() if room.kind == PUBLIC
    )

    truth: list[GroundTruthRecord] = []
    events: list[ConnectivityEvent] = []
    eid = 0

    for day in range(config.horizon_days):
        day_start = config.start + day * DAY_S
        weekday = datetime.fromtimestamp(day_start, timezone.utc).weekday()

        # presence windows for the day, in minutes from local midnight
        windows: dict[str, tuple[int, int]] = {}
        base_room: dict[str, str] = {}
        for person in people:
            prof = person.profile
            if weekday not in prof.days:
                continue
            arrive = int(prof.arrive_hour * 60) + rng.randrange(prof.arrive_jitter_min + 1)
            depart = int(prof.depart_hour * 60) - rng.randrange(prof.arrive_jitter_min + 1)
            if depart <= arrive:
                continue
            if person.preferred is not None:
                room = person.preferred
            elif public_rooms:
                if person.favorite and rng.random() < prof.favorite_bias:
                    room = person.favorite
                else:
                    room = rng.choice(public_rooms)
            else:
                continue
            windows[person.dev] = (arrive, depart)
            base_room[person.dev] = room

        # minute -> room assignment, events override the base room
        timeline = {
            dev: {m: base_room[dev] for m in range(*windows[dev])} for dev in windows
        }
        for ev in config.events:
            if weekday not in ev.days:
                continue
            start_m = int(ev.start_hour * 60)
            end_m = start_m + ev.duration_min
            eligible = sorted(
                p.dev
                for p in people
                if p.profile.name in ev.profiles and p.dev in windows
                and windows[p.dev][0] < end_m and windows[p.dev][1] > start_m
            )
            by_dev = {p.dev: p for p in people}
            mandatory = [
                d for d in eligible
                if by_dev[d].profile.attendance.get(ev.klass, 0.0) >= 1.0
            ]
            if len(mandatory) > ev.capacity:
                raise InfeasibleCapacityError(
                    f"event in {ev.room}: {len(mandatory)} mandatory attendees "
                    f"exceed capacity {ev.capacity}"
                )
            attendees = list(mandatory)
            for d in eligible:
                if d in mandatory:
                    continue
                if rng.random() < by_dev[d].profile.attendance.get(ev.klass, 0.0):
                    attendees.append(d)
            if len(attendees) > ev.capacity:
                optional = [d for d in attendees if d not in mandatory]
                keep = rng.sample(optional, ev.capacity - len(mandatory))
                attendees = mandatory + sorted(keep)
            for d in attendees:
                lo = max(start_m, windows[d][0])
                hi = min(end_m, windows[d][1])
                for m in range(lo, hi):
                    timeline[d][m] = ev.room

        # truth records + emissions
        for dev in sorted(timeline):
            person = next(p for p in people if p.dev == dev)
            minutes = timeline[dev]
            run_room, run_start = None, None
            for m in range(windows[dev][0], windows[dev][1] + 1):
                room = minutes.get(m)
                if room != run_room:
                    if run_room is not None:
                        truth.append(
                            GroundTruthRecord(
                                dev, run_room,
                                day_start + run_start * MIN_S,
                                day_start + m * MIN_S,
                            )
                        )
                    run_room, run_start = room, m
                if room is None:
                    continue
                if rng.random() < person.emission:
                    gid = rng.choice(regions_by_room[room])
                    t = day_start + m * MIN_S + rng.randrange(MIN_S)
                    eid += 1
                    events.append(
                        ConnectivityEvent(
                            eid=f"e{eid:06d}", dev=dev, time=t,
                            ap=config.space.regions[gid].ap,
                        )
                    )

    events.sort(key=lambda e: (e.time, e.eid))
    devices = {
        p.dev: Device(
            preferred_rooms=frozenset({p.preferred} if p.preferred else set())
        )
        for p in people
    }
    space = SpaceModel(
        regions=config.space.regions, rooms=config.space.rooms, devices=devices
    )
    return SimulationResult(events=events, truth=truth, space=space, config=config)


def predictability(truth: list[GroundTruthRecord], device: str) -> float:
    """Share of a device's in-building time spent in its modal room, as
    a percentage."""
    per_room: dict[str, int] = {}
    for rec in truth:
        if rec.device == device:
            per_room[rec.room] = per_room.get(rec.room, 0) + (rec.end - rec.start)
    total = sum(per_room.values())
    if total == 0:
        raise UnknownDeviceError(device)
    return 100.0 * max(per_room.values()) / total


def predictability_bucket(pct: float) -> str:
    for lo, hi in PREDICTABILITY_BUCKETS:
        if lo <= pct < hi or (hi == 100 and pct >= 100):
            return f"[{lo},{hi})"
    return "<40"


def write_truth(truth: list[GroundTruthRecord], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        fh.write("device,room,start,end\n")
        for rec in truth:
            fh.write(f"{rec.device},{rec.room},{rec.start},{rec.end}\n")


def read_truth(path: str | Path) -> list[GroundTruthRecord]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "device,room,start,end":
        raise DataError(f"{path}: expected header device,room,start,end")
    out = []
    for line in lines[1:]:
        if not line.strip():
            continue
        dev, room, start, end = line.split(",")
        out.append(GroundTruthRecord(dev, room, int(start), int(end)))
    return out


def write_events_csv(events: list[ConnectivityEvent], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        fh.write("eid,device,timestamp,ap\n")
        for e in events:
            fh.write(f"{e.eid},{e.dev},{e.time},{e.ap}\n")


def write_space_json(space: SpaceModel, path: str | Path) -> None:
    doc = {
        "regions": {gid: list(r.rooms) for gid, r in sorted(space.regions.items())},
        "rooms": {
            rid: {"type": room.kind} for rid, room in sorted(space.rooms.items())
        },
        "devices": {
            did: {"preferred_rooms": sorted(d.preferred_rooms)}
            for did, d in sorted(space.devices.items())
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
