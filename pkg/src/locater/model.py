"""Core domain types: space hierarchy, events, the semantic location table.

All types are immutable after construction and safe to share across
threads.  Timestamps are integer seconds since the Unix epoch (UTC);
calendar-derived features use a configurable IANA timezone elsewhere.
Interval convention throughout the package is half-open [st, et).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import UnknownRegionError

#: Reserved location value meaning "not in any building".
OUTSIDE = "outside"

PUBLIC = "public"
PRIVATE = "private"


@dataclass(frozen=True)
class Region:
    """Coverage area of a single AP: an ordered set of room ids."""

    ap: str
    rooms: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "rooms", tuple(sorted(set(self.rooms))))


@dataclass(frozen=True)
class Room:
    kind: str  # PUBLIC or PRIVATE
    owners: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Device:
    preferred_rooms: frozenset[str] = frozenset()
    delta_seconds: int | None = None


@dataclass(frozen=True)
class SpaceModel:
    """Topological space model: regions (one per AP), rooms, devices."""

    regions: dict[str, Region] = field(default_factory=dict)
    rooms: dict[str, Room] = field(default_factory=dict)
    devices: dict[str, Device] = field(default_factory=dict)

    def region_of_ap(self, ap: str) -> str | None:
        for gid, region in self.regions.items():
            if region.ap == ap:
                return gid
        return None


@dataclass(frozen=True)
class ConnectivityEvent:
    eid: str
    dev: str
    time: int
    ap: str


@dataclass(frozen=True)
class ValidityInterval:
    st: int
    et: int


@dataclass(frozen=True)
class SemanticLocationTuple:
    """One row of the semantic location table.

    loc is a region id, OUTSIDE, a room id (derived rows only), or None
    for gaps ("dirty" rows).
    """

    lid: str
    dev: str
    loc: str | None
    st: int
    et: int

    @property
    def is_gap(self) -> bool:
        return self.loc is None

    @property
    def duration(self) -> int:
        return self.et - self.st


@dataclass(frozen=True)
class Query:
    dev: str
    t_q: int
    granularity: str = "fine"  # "coarse" or "fine"


@dataclass(frozen=True)
class LocationAnswer:
    level: str  # OUTSIDE, "region" or "room"
    value: str
    distribution: dict[str, float] = field(default_factory=dict)
    processed_neighbors: int = 0


def validate_space_model(model: SpaceModel) -> list[str]:
    """Check all space-model invariants; violations are data, not errors."""
    violations: list[str] = []

    seen_aps: dict[str, str] = {}
    for gid, region in sorted(model.regions.items()):
        if region.ap in seen_aps:
            violations.append(
                f"region {gid}: AP {region.ap} already mapped to region {seen_aps[region.ap]}"
            )
        seen_aps[region.ap] = gid
        for rid in region.rooms:
            if rid not in model.rooms:
                violations.append(f"region {gid}: unknown room {rid}")

    covered = {rid for region in model.regions.values() for rid in region.rooms}
    for rid in sorted(model.rooms):
        if model.regions and rid not in covered:
            violations.append(f"room {rid}: not covered by any region")

    for rid, room in sorted(model.rooms.items()):
        if room.kind not in (PUBLIC, PRIVATE):
            violations.append(f"room {rid}: invalid type {room.kind!r}")

    for did, device in sorted(model.devices.items()):
        for rid in sorted(device.preferred_rooms):
            if rid not in model.rooms:
                violations.append(f"device {did}: preferred room {rid} does not exist")
        if device.delta_seconds is not None and device.delta_seconds <= 0:
            violations.append(f"device {did}: non-positive validity period")

    return violations


def rooms_of_region(model: SpaceModel, region: str) -> tuple[str, ...]:
    """Rooms covered by a region, in lexicographic order."""
    if region not in model.regions:
        raise UnknownRegionError(region)
    return model.regions[region].rooms
