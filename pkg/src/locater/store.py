"""Log ingestion and the on-disk event store.

Parses connectivity logs and space metadata, derives per-event validity
intervals and the semantic location table (with explicit gap rows), and
persists everything to a plain-file store directory:

    events.csv    append-only raw event log
    space.json    space metadata document
    meta.json     build parameters (timezone, delta defaults)
    rejects.txt   one line per rejected input row
    derived.jsonl cleaned tuples written back by the engine (never raw)

The location table is rebuilt from the log on load; rebuilding is
idempotent.
"""

from __future__ import annotations

import csv
import json
import shutil
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from statistics import median
from zoneinfo import ZoneInfo

from .errors import DataError, OutOfHorizonError, UnknownAPError, UnknownDeviceError
from .model import (
    ConnectivityEvent,
    Device,
    Region,
    Room,
    SemanticLocationTuple,
    SpaceModel,
    ValidityInterval,
)

EVENTS_HEADER = ["eid", "device", "timestamp", "ap"]

DEFAULT_DELTA_S = 600
DELTA_CAP_S = 1800
DELTA_MIN_S = 30


def _parse_timestamp(raw: str) -> int:
    raw = raw.strip()
    if raw.isdigit():
        return int(raw)
    try:
        dt = datetime.strptime(raw, "%Y-%m-%dT%H:%M:%SZ")
    except ValueError as exc:
        raise ValueError(f"bad timestamp {raw!r}") from exc
    return int(dt.replace(tzinfo=timezone.utc).timestamp())


def parse_events(path: str | Path, fmt: str = "csv") -> tuple[list[ConnectivityEvent], list[tuple[int, str]]]:
    """Parse a connectivity log; malformed rows become reject entries.

    Returns (events in file order, rejects as (line-number, reason)).
    """
    path = Path(path)
    events: list[ConnectivityEvent] = []
    rejects: list[tuple[int, str]] = []

    if fmt == "csv":
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file, expected header {','.join(EVENTS_HEADER)}")
            if [h.strip() for h in header] != EVENTS_HEADER:
                raise DataError(f"{path}: invalid header {header!r}")
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 4:
                    rejects.append((lineno, f"expected 4 columns, got {len(row)}"))
                    continue
                eid, dev, ts, ap = (c.strip() for c in row)
                try:
                    t = _parse_timestamp(ts)
                except ValueError as exc:
                    rejects.append((lineno, str(exc)))
                    continue
                if t < 0:
                    rejects.append((lineno, "negative timestamp"))
                    continue
                if not eid or not dev or not ap:
                    rejects.append((lineno, "empty field"))
                    continue
                events.append(ConnectivityEvent(eid, dev.lower(), t, ap))
    elif fmt == "jsonl":
        with path.open() as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    t = _parse_timestamp(str(obj["timestamp"]))
                    events.append(
                        ConnectivityEvent(str(obj["eid"]), str(obj["device"]).lower(), t, str(obj["ap"]))
                    )
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    rejects.append((lineno, str(exc)))
    else:
        raise DataError(f"unknown event format: {fmt}")

    return events, rejects


def parse_space(path: str | Path) -> SpaceModel:
    """Parse the space metadata document; unknown keys are rejected.

    Region ids are the AP ids (one region per AP).
    """
    with Path(path).open() as fh:
        doc = json.load(fh)

    unknown = set(doc) - {"regions", "rooms", "devices"}
    if unknown:
        raise DataError(f"space document: unknown keys {sorted(unknown)}")

    rooms: dict[str, Room] = {}
    for rid, spec in doc.get("rooms", {}).items():
        extra = set(spec) - {"type", "owners"}
        if extra:
            raise DataError(f"room {rid}: unknown keys {sorted(extra)}")
        rooms[rid] = Room(kind=spec["type"], owners=frozenset(d.lower() for d in spec.get("owners", [])))

    regions = {
        ap: Region(ap=ap, rooms=tuple(room_list))
        for ap, room_list in doc.get("regions", {}).items()
    }

    devices: dict[str, Device] = {}
    for did, spec in doc.get("devices", {}).items():
        extra = set(spec) - {"preferred_rooms", "delta_seconds"}
        if extra:
            raise DataError(f"device {did}: unknown keys {sorted(extra)}")
        devices[did.lower()] = Device(
            preferred_rooms=frozenset(spec.get("preferred_rooms", [])),
            delta_seconds=spec.get("delta_seconds"),
        )

    return SpaceModel(regions=regions, rooms=rooms, devices=devices)


def estimate_delta(
    events: list[ConnectivityEvent],
    default: int = DEFAULT_DELTA_S,
    cap: int = DELTA_CAP_S,
    minimum: int = DELTA_MIN_S,
) -> int:
    """Validity period for one device: capped median inter-event interval.

    Intervals above the cap (long absences) are ignored; fewer than two
    events, or no interval under the cap, falls back to the default.
    """
    times = sorted(e.time for e in events)
    intervals = [b - a for a, b in zip(times, times[1:]) if 0 < b - a <= cap]
    if not intervals:
        return default
    return int(min(max(median(intervals), minimum), cap))


def compute_validity_intervals(
    events: list[ConnectivityEvent], delta: int
) -> list[ValidityInterval]:
    """Validity window per event, aligned with the (time-sorted) input.

    The end extends delta past the event unless the next event arrives
    within delta, in which case it stops there; symmetrically the start
    reaches back delta unless the previous event is within delta, in
    which case it starts at the event itself.  Adjacent intervals never
    overlap.
    """
    out: list[ValidityInterval] = []
    for i, e in enumerate(events):
        if i > 0 and e.time - events[i - 1].time <= delta:
            st = e.time
        else:
            st = e.time - delta
        if out:
            st = max(st, out[-1].et)  # never reach back into the previous interval
        if i + 1 < len(events) and events[i + 1].time - e.time <= delta:
            et = events[i + 1].time
        else:
            et = e.time + delta
        out.append(ValidityInterval(st=max(st, 0), et=et))
    return out


def _midnight_boundaries(st: int, et: int, tz: ZoneInfo) -> list[int]:
    """Local-midnight instants strictly inside (st, et)."""
    bounds = []
    d = datetime.fromtimestamp(st, tz).date()
    while True:
        d = d.fromordinal(d.toordinal() + 1)
        t = int(datetime(d.year, d.month, d.day, tzinfo=tz).timestamp())
        if t >= et:
            break
        if t > st:
            bounds.append(t)
    return bounds


def build_location_table(
    events: list[ConnectivityEvent],
    space: SpaceModel,
    delta_map: dict[str, int],
    tz: str = "UTC",
) -> list[SemanticLocationTuple]:
    """Materialize table L: one region row per event, one gap row per
    maximal uncovered interval.  Gaps spanning local midnight are split
    at each midnight boundary."""
    zone = ZoneInfo(tz)
    ap_to_region = {r.ap: gid for gid, r in space.regions.items()}
    by_dev: dict[str, list[ConnectivityEvent]] = {}
    for e in sorted(events, key=lambda e: (e.dev, e.time, e.eid)):
        if e.ap not in ap_to_region:
            raise UnknownAPError(e.ap)
        by_dev.setdefault(e.dev, []).append(e)

    table: list[SemanticLocationTuple] = []
    seq = 0
    for dev in sorted(by_dev):
        dev_events = by_dev[dev]
        delta = delta_map.get(dev, DEFAULT_DELTA_S)
        vis = compute_validity_intervals(dev_events, delta)
        prev_et: int | None = None
        for e, vi in zip(dev_events, vis):
            if prev_et is not None and vi.st > prev_et:
                for gst, get_ in _split_interval(prev_et, vi.st, zone):
                    seq += 1
                    table.append(SemanticLocationTuple(f"l{seq}", dev, None, gst, get_))
            seq += 1
            table.append(
                SemanticLocationTuple(f"l{seq}", dev, ap_to_region[e.ap], vi.st, vi.et)
            )
            prev_et = vi.et
    return table


def _split_interval(st: int, et: int, zone: ZoneInfo) -> list[tuple[int, int]]:
    cuts = [st] + _midnight_boundaries(st, et, zone) + [et]
    return [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]


def lookup_tuple(
    table_of_device: list[SemanticLocationTuple], dev: str, t: int
) -> SemanticLocationTuple:
    """The unique tuple covering time t; intervals are [st, et)."""
    if not table_of_device:
        raise UnknownDeviceError(dev)
    for tup in table_of_device:
        if tup.st <= t < tup.et:
            return tup
    raise OutOfHorizonError(dev, t)


@dataclass(frozen=True)
class EventStore:
    """Immutable snapshot of parsed events and the derived table L."""

    space: SpaceModel
    events: tuple[ConnectivityEvent, ...]
    deltas: dict[str, int]
    table: tuple[SemanticLocationTuple, ...]
    tz: str = "UTC"
    path: Path | None = None
    _by_dev: dict[str, list[SemanticLocationTuple]] = field(default_factory=dict, repr=False)

    @staticmethod
    def build(
        events: list[ConnectivityEvent],
        space: SpaceModel,
        tz: str = "UTC",
        default_delta: int = DEFAULT_DELTA_S,
        path: Path | None = None,
    ) -> "EventStore":
        events = sorted(events, key=lambda e: (e.dev, e.time, e.eid))
        deltas: dict[str, int] = {}
        by_dev: dict[str, list[ConnectivityEvent]] = {}
        for e in events:
            by_dev.setdefault(e.dev, []).append(e)
        for dev, evs in by_dev.items():
            configured = space.devices.get(dev, Device()).delta_seconds
            deltas[dev] = configured if configured else estimate_delta(evs, default=default_delta)
        table = build_location_table(events, space, deltas, tz=tz)
        store = EventStore(
            space=space, events=tuple(events), deltas=deltas, table=tuple(table), tz=tz, path=path
        )
        for tup in table:
            store._by_dev.setdefault(tup.dev, []).append(tup)
        return store

    def device_table(self, dev: str) -> list[SemanticLocationTuple]:
        return self._by_dev.get(dev, [])

    def devices(self) -> list[str]:
        return sorted(self._by_dev)

    def lookup(self, dev: str, t: int) -> SemanticLocationTuple:
        return lookup_tuple(self.device_table(dev), dev, t)

    def tuples_in_window(self, dev: str, start: int, end: int) -> list[SemanticLocationTuple]:
        """Device tuples overlapping [start, end)."""
        return [t for t in self.device_table(dev) if t.et > start and t.st < end]


def ingest(
    events_path: str | Path,
    space_path: str | Path,
    out_dir: str | Path,
    fmt: str = "csv",
    tz: str = "UTC",
    default_delta: int = DEFAULT_DELTA_S,
) -> tuple[EventStore, list[tuple[int, str]]]:
    """Parse inputs, build the store, and persist it to out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    space = parse_space(space_path)
    events, rejects = parse_events(events_path, fmt=fmt)

    if fmt == "csv":
        if Path(events_path).resolve() != (out / "events.csv").resolve():
            shutil.copy(events_path, out / "events.csv")
    else:
        with (out / "events.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(EVENTS_HEADER)
            for e in events:
                w.writerow([e.eid, e.dev, e.time, e.ap])
    if Path(space_path).resolve() != (out / "space.json").resolve():
        shutil.copy(space_path, out / "space.json")
    (out / "meta.json").write_text(
        json.dumps({"timezone": tz, "default_delta_seconds": default_delta}, indent=2)
    )
    with (out / "rejects.txt").open("w") as fh:
        for lineno, reason in rejects:
            fh.write(f"{lineno}\t{reason}\n")

    store = EventStore.build(events, space, tz=tz, default_delta=default_delta, path=out)
    return store, rejects


def load_store(store_dir: str | Path) -> EventStore:
    """Rebuild the store snapshot from a store directory."""
    store_dir = Path(store_dir)
    meta = json.loads((store_dir / "meta.json").read_text())
    space = parse_space(store_dir / "space.json")
    events, _ = parse_events(store_dir / "events.csv", fmt="csv")
    return EventStore.build(
        events,
        space,
        tz=meta.get("timezone", "UTC"),
        default_delta=meta.get("default_delta_seconds", DEFAULT_DELTA_S),
        path=store_dir,
    )


def append_derived(store_dir: str | Path, tup: SemanticLocationTuple) -> None:
    """Write a cleaned tuple back, tagged derived; raw data is untouched."""
    rec = {
        "lid": tup.lid,
        "dev": tup.dev,
        "loc": tup.loc,
        "st": tup.st,
        "et": tup.et,
        "tag": "derived",
    }
    with (Path(store_dir) / "derived.jsonl").open("a") as fh:
        fh.write(json.dumps(rec) + "\n")
