"""Fine localization: pick a room within the coarse region.

Room-level evidence comes from three affinities: a per-device room prior
built from preferred/public/private weights, the co-location fraction of
a device set's history, and their product conditioned on a room.  The
posterior over rooms folds in one neighbor device at a time; expected,
max and min bounds over the placements of still-unprocessed neighbors
allow stopping early once the leading room cannot be overtaken.
"""

from __future__ import annotations

import bisect
import itertools
import logging
import math
from dataclasses import dataclass

from .config import EngineConfig
from .errors import DataError, OutOfHorizonError, TooManyDevicesError
from .model import (
    OUTSIDE,
    PUBLIC,
    LocationAnswer,
    SemanticLocationTuple,
    SpaceModel,
    rooms_of_region,
)
from .store import EventStore

log = logging.getLogger(__name__)

DAY_S = 86400

MAX_BRUTE_FORCE_DEVICES = 12


def room_affinity(
    space: SpaceModel, dev: str, region: str, weights: tuple[float, float, float]
) -> dict[str, float]:
    """Per-room prior for a device within a region.

    Preferred rooms share w_pf, public non-preferred rooms share w_pb,
    private non-preferred rooms share w_pr.  Weight of classes with no
    rooms in the region is redistributed proportionally so the map sums
    to 1.
    """
    rooms = rooms_of_region(space, region)
    if not rooms:
        raise DataError(f"region {region} has no rooms")
    w_pf, w_pb, w_pr = weights
    preferred = space.devices.get(dev)
    preferred = preferred.preferred_rooms if preferred else frozenset()

    classes: dict[str, list[str]] = {"pf": [], "pb": [], "pr": []}
    for rid in rooms:
        if rid in preferred:
            classes["pf"].append(rid)
        elif space.rooms[rid].kind == PUBLIC:
            classes["pb"].append(rid)
        else:
            classes["pr"].append(rid)

    base = {"pf": w_pf, "pb": w_pb, "pr": w_pr}
    present = {c: w for c, w in base.items() if classes[c]}
    total = sum(present.values())
    out: dict[str, float] = {}
    for c, members in classes.items():
        if not members:
            continue
        share = base[c] / total / len(members)
        for rid in members:
            out[rid] = share
    return out


def device_affinity(tuples_by_dev: dict[str, list[SemanticLocationTuple]]) -> float:
    """Fraction of the device set's location tuples in which every other
    member has a clean tuple with overlapping time interval and the same
    region.  Gap tuples count in the denominator but never intersect."""
    devs = sorted(tuples_by_dev)
    total = sum(len(ts) for ts in tuples_by_dev.values())
    if total == 0:
        return 0.0
    # clean tuples sorted by start so overlap candidates come from a bisect
    clean: dict[str, list[SemanticLocationTuple]] = {}
    starts: dict[str, list[int]] = {}
    for d, ts in tuples_by_dev.items():
        rows = sorted((t for t in ts if not t.is_gap), key=lambda t: t.st)
        clean[d] = rows
        starts[d] = [t.st for t in rows]

    def overlaps(d2: str, t: SemanticLocationTuple) -> bool:
        rows = clean[d2]
        i = bisect.bisect_left(starts[d2], t.et)
        # rows[i:] start at or after t.et; scan left while intervals can reach t.st
        for o in reversed(rows[:i]):
            if o.et <= t.st:
                break
            if o.loc == t.loc and o.st < t.et and t.st < o.et:
                return True
        return False

    hits = 0
    for d in devs:
        for t in clean[d]:
            if all(overlaps(d2, t) for d2 in devs if d2 != d):
                hits += 1
    return hits / total


def group_affinity(
    alpha_d: float,
    maps: dict[str, dict[str, float]],
    r_is: frozenset[str] | set[str],
    room: str,
) -> float:
    """Joint probability that the device set is in `room`.

    Each device's room prior is renormalized over the shared candidate
    rooms r_is; the result is alpha_d times the product of those
    conditionals, and 0 outside r_is.
    """
    if room not in r_is:
        return 0.0
    prod = alpha_d
    for dev, amap in maps.items():
        mass = sum(amap.get(r, 0.0) for r in r_is)
        if mass <= 0:
            log.warning("device %s has zero affinity mass on shared rooms", dev)
            return 0.0
        prod *= amap.get(room, 0.0) / mass
    return prod


@dataclass(frozen=True)
class NeighborInfo:
    """One neighbor of the query device: its region at query time, its
    pairwise affinities with the query device per candidate room, and
    the placement prior used for possible-world enumeration."""

    dev: str
    region: str
    device_aff: float
    affinities: dict[str, float]  # candidate room -> pairwise group affinity
    world_probs: dict[str, float]  # candidate room -> placement probability


@dataclass(frozen=True)
class RoomPosterior:
    p: float
    exp_p: float
    max_p: float
    min_p: float


def _window_tuples(store: EventStore, dev: str, t_q: int, days: int):
    return store.tuples_in_window(dev, t_q - days * DAY_S, t_q)


def pairwise_affinity(
    store: EventStore,
    dev: str,
    region: str,
    other: str,
    other_region: str,
    t_q: int,
    config: EngineConfig,
) -> tuple[dict[str, float], float]:
    """Group affinity of {dev, other} for every candidate room of the
    query region, plus the pair's device affinity."""
    space = store.space
    candidates = rooms_of_region(space, region)
    r_is = frozenset(candidates) & frozenset(rooms_of_region(space, other_region))
    alpha_d = device_affinity(
        {
            dev: _window_tuples(store, dev, t_q, config.affinity_window_days),
            other: _window_tuples(store, other, t_q, config.affinity_window_days),
        }
    )
    maps = {
        dev: room_affinity(space, dev, region, config.weights),
        other: room_affinity(space, other, other_region, config.weights),
    }
    aff = {r: group_affinity(alpha_d, maps, r_is, r) for r in candidates}
    return aff, alpha_d


def _world_probs(
    space: SpaceModel, other: str, other_region: str,
    candidates: tuple[str, ...], weights,
) -> dict[str, float]:
    amap = room_affinity(space, other, other_region, weights)
    probs = {r: amap.get(r, 0.0) for r in candidates}
    mass = sum(probs.values())
    if mass <= 0:
        return {r: 1.0 / len(candidates) for r in candidates}
    return {r: v / mass for r, v in probs.items()}


def neighbors(
    store: EventStore,
    dev: str,
    region: str,
    t_q: int,
    config: EngineConfig,
    locate=None,
) -> list[NeighborInfo]:
    """Devices usable as evidence for (dev, region, t_q).

    A neighbor must be online at t_q (a clean covering tuple, or a gap
    that `locate` resolves to a region), share a candidate room with the
    query region, and have positive group affinity for some candidate
    room.  Ordered by descending device affinity, ties lexicographic.
    """
    space = store.space
    candidates = rooms_of_region(space, region)
    result = []
    for other in store.devices():
        if other == dev:
            continue
        try:
            tup = store.lookup(other, t_q)
        except OutOfHorizonError:
            continue
        if tup.is_gap:
            other_region = locate(other) if locate is not None else None
        else:
            other_region = tup.loc
        if other_region is None or other_region == OUTSIDE:
            continue
        if other_region not in space.regions:
            continue
        if not set(candidates) & set(rooms_of_region(space, other_region)):
            continue
        aff, alpha_d = pairwise_affinity(
            store, dev, region, other, other_region, t_q, config
        )
        if all(v <= 0 for v in aff.values()):
            continue
        result.append(
            NeighborInfo(
                dev=other,
                region=other_region,
                device_aff=alpha_d,
                affinities=aff,
                world_probs=_world_probs(space, other, other_region, candidates, config.weights),
            )
        )
    result.sort(key=lambda n: (-n.device_aff, n.dev))
    return result


def _odds(p: float) -> float:
    if p <= 0:
        return math.inf
    if p >= 1:
        return 0.0
    return (1 - p) / p


def _p_from_odds(odds: float) -> float:
    if math.isinf(odds):
        return 0.0
    return 1.0 / (1.0 + odds)


def posterior_independent(
    priors: dict[str, float],
    processed: list[dict[str, float]],
    prior_weighted: bool = False,
) -> dict[str, float]:
    """Posterior per room given independent neighbor evidence.

    Each processed entry maps room to that neighbor's pairwise group
    affinity with the query device.  A zero affinity pins the room's
    posterior to 0; all-ones pins it to 1.  With no processed neighbors
    the prior map is returned unchanged.
    """
    if not processed:
        return dict(priors)
    out = {}
    for room, prior in priors.items():
        alphas = [m.get(room, 0.0) for m in processed]
        if any(a <= 0 for a in alphas):
            out[room] = 0.0
            continue
        if all(a >= 1 for a in alphas):
            out[room] = 1.0
            continue
        odds = 1.0
        for a in alphas:
            odds *= (1 - a) / a
        if prior_weighted:
            odds = _mul(odds, _odds(prior))
        out[room] = _p_from_odds(odds)
    return out


def _mul(odds: float, factor: float) -> float:
    # inf dominates so bounds and the brute-force oracle agree at the edges
    if math.isinf(factor) or math.isinf(odds):
        return math.inf
    return odds * factor


def _world_factor(alpha: float, placed_here: bool) -> float:
    """Odds-against factor contributed by an unprocessed neighbor whose
    pairwise affinity for the room is alpha, under a world that places it
    in the room (shrinks the odds) or elsewhere (inflates them)."""
    if placed_here:
        return 1.0 - alpha
    if alpha >= 1:
        return math.inf
    return 1.0 / (1.0 - alpha)


def bounds(
    priors: dict[str, float],
    processed: list[dict[str, float]],
    unprocessed: list[NeighborInfo],
    rooms: tuple[str, ...],
    prior_weighted: bool = False,
) -> dict[str, RoomPosterior]:
    """Expected, max and min posterior per room over the placements of
    the unprocessed neighbors.

    maxP(r) realizes the world placing every unprocessed neighbor in r;
    minP(r) the world placing them all in the strongest other room.  The
    expectation equals the current posterior.
    """
    post = posterior_independent(priors, processed, prior_weighted)
    out = {}
    for room in rooms:
        p = post[room]
        if not unprocessed:
            out[room] = RoomPosterior(p, p, p, p)
            continue
        base = _odds(p)
        odds_max = base
        odds_min = base
        for n in unprocessed:
            a = n.affinities.get(room, 0.0)
            odds_max = _mul(odds_max, _world_factor(a, True))
            if len(rooms) == 1:
                odds_min = _mul(odds_min, _world_factor(a, True))
            else:
                odds_min = _mul(odds_min, _world_factor(a, False))
        out[room] = RoomPosterior(
            p=p,
            exp_p=p,
            max_p=_p_from_odds(odds_max),
            min_p=_p_from_odds(odds_min),
        )
    return out


def brute_force_bounds(
    priors: dict[str, float],
    processed: list[dict[str, float]],
    unprocessed: list[NeighborInfo],
    rooms: tuple[str, ...],
    prior_weighted: bool = False,
) -> dict[str, RoomPosterior]:
    """Oracle: enumerate every placement of the unprocessed neighbors.

    World probability is the product of each neighbor's placement prior;
    max and min are taken over all worlds, the expectation is the
    probability-weighted average.
    """
    if len(unprocessed) > MAX_BRUTE_FORCE_DEVICES:
        raise TooManyDevicesError(
            f"{len(unprocessed)} unprocessed devices exceed the enumeration guard"
        )
    post = posterior_independent(priors, processed, prior_weighted)
    if not unprocessed:
        return {r: RoomPosterior(post[r], post[r], post[r], post[r]) for r in rooms}

    out = {}
    for room in rooms:
        base = _odds(post[room])
        best, worst, acc, mass = -1.0, 2.0, 0.0, 0.0
        for world in itertools.product(rooms, repeat=len(unprocessed)):
            odds = base
            pw = 1.0
            for n, placed in zip(unprocessed, world):
                a = n.affinities.get(room, 0.0)
                odds = _mul(odds, _world_factor(a, placed == room))
                pw *= n.world_probs.get(placed, 0.0)
            val = _p_from_odds(odds)
            best = max(best, val)
            worst = min(worst, val)
            acc += pw * val
            mass += pw
        exp_p = acc / mass if mass > 0 else post[room]
        out[room] = RoomPosterior(p=post[room], exp_p=exp_p, max_p=best, min_p=worst)
    return out


def stop_check(
    posteriors: dict[str, RoomPosterior], mode: str = "relaxed"
) -> tuple[bool, str | None, bool]:
    """Decide whether processing more neighbors can change the answer.

    Returns (stop, answer room, strict) where strict marks the exact
    test minP(leader) > maxP of every other room; the relaxed mode adds
    minP(a) >= expP(b) and expP(a) >= maxP(b) against the runner-up.
    """
    ranked = sorted(posteriors, key=lambda r: (-posteriors[r].p, r))
    if len(ranked) == 1:
        return True, ranked[0], True
    a, b = posteriors[ranked[0]], posteriors[ranked[1]]
    strict = a.min_p > max(posteriors[r].max_p for r in ranked[1:])
    if strict:
        return True, ranked[0], True
    if mode == "relaxed" and (a.min_p >= b.exp_p or a.exp_p >= b.max_p):
        return True, ranked[0], False
    return False, None, False


def cluster_partition(
    devs: list[str], pair_aff: dict[frozenset, float]
) -> list[tuple[str, ...]]:
    """Connected components of the positive pairwise-affinity graph,
    each sorted, components ordered by first member."""
    remaining = sorted(devs)
    comps = []
    seen: set[str] = set()
    for d in remaining:
        if d in seen:
            continue
        comp = {d}
        frontier = [d]
        while frontier:
            cur = frontier.pop()
            for other in remaining:
                if other not in comp and pair_aff.get(frozenset((cur, other)), 0.0) > 0:
                    comp.add(other)
                    frontier.append(other)
        seen |= comp
        comps.append(tuple(sorted(comp)))
    return comps


def posterior_dependent(
    priors: dict[str, float], cluster_affs: dict[str, list[float]]
) -> dict[str, float]:
    """Posterior per room from per-cluster joint affinities.

    p = 1 / (1 + (1 - prod of cluster affinities) / (1 - prior)); a
    prior of 1 or a full-certainty cluster product yields p = 1.
    """
    out = {}
    for room, prior in priors.items():
        affs = cluster_affs.get(room, [])
        prod = 1.0
        for a in affs:
            prod *= a
        if prior >= 1 or prod >= 1:
            out[room] = 1.0
            continue
        out[room] = 1.0 / (1.0 + (1.0 - prod) / (1.0 - prior))
    return out


def _set_group_affinity(
    store: EventStore,
    members: dict[str, str],  # device -> region at t_q
    room: str,
    t_q: int,
    config: EngineConfig,
) -> float:
    """Eq-1 group affinity for an arbitrary device set (cluster + query)."""
    space = store.space
    r_is: frozenset[str] | None = None
    for region in members.values():
        rooms = frozenset(rooms_of_region(space, region))
        r_is = rooms if r_is is None else r_is & rooms
    if not r_is or room not in r_is:
        return 0.0
    alpha_d = device_affinity(
        {d: _window_tuples(store, d, t_q, config.affinity_window_days) for d in members}
    )
    maps = {
        d: room_affinity(space, d, region, config.weights)
        for d, region in members.items()
    }
    return group_affinity(alpha_d, maps, r_is, room)


def _normalize(dist: dict[str, float], fallback: dict[str, float]) -> dict[str, float]:
    mass = sum(dist.values())
    if mass <= 0:
        dist = dict(fallback)
        mass = sum(dist.values())
    return {r: v / mass for r, v in dist.items()}


def fine_localize(
    store: EventStore,
    dev: str,
    t_q: int,
    region: str,
    config: EngineConfig | None = None,
    neighbor_list: list[NeighborInfo] | None = None,
    locate=None,
) -> LocationAnswer:
    """Room-level answer for a device known to be in `region` at t_q.

    Neighbors fold in one at a time until the stop test fires or the
    list is exhausted; the reported distribution is the posterior
    normalized over the region's candidate rooms.
    """
    config = config or EngineConfig()
    candidates = rooms_of_region(store.space, region)
    if not candidates:
        raise DataError(f"region {region} has no rooms")
    priors = room_affinity(store.space, dev, region, config.weights)
    if len(candidates) == 1:
        return LocationAnswer("room", candidates[0], {candidates[0]: 1.0}, 0)

    if neighbor_list is None:
        neighbor_list = neighbors(store, dev, region, t_q, config, locate=locate)
    neighbor_list = neighbor_list[: config.max_neighbors]

    if config.variant == "dependent":
        return _fine_dependent(
            store, dev, region, t_q, candidates, priors, neighbor_list, config
        )
    return _fine_independent(candidates, priors, neighbor_list, config)


def _answer(dist: dict[str, float], priors: dict[str, float], count: int) -> LocationAnswer:
    dist = _normalize(dist, priors)
    room = min(dist, key=lambda r: (-dist[r], r))
    return LocationAnswer("room", room, dist, count)


def _fine_independent(candidates, priors, neighbor_list, config):
    processed: list[dict[str, float]] = []
    post = dict(priors)
    count = 0
    for i, n in enumerate(neighbor_list):
        processed.append(n.affinities)
        count += 1
        room_posts = bounds(
            priors, processed, neighbor_list[i + 1:], candidates, config.prior_weighted
        )
        post = {r: rp.p for r, rp in room_posts.items()}
        if config.stop_mode != "none":
            mode = config.stop_mode
            stop, _, strict = stop_check(room_posts, mode)
            if stop and (mode == "relaxed" or strict):
                break
    return _answer(post, priors, count)


def _fine_dependent(store, dev, region, t_q, candidates, priors, neighbor_list, config):
    regions = {n.dev: n.region for n in neighbor_list}
    pair_cache: dict[tuple, float] = {}
    cluster_cache: dict[tuple, float] = {}

    def pair(room, a, b):
        key = (room, frozenset((a, b)))
        if key not in pair_cache:
            pair_cache[key] = _set_group_affinity(
                store, {a: regions[a], b: regions[b]}, room, t_q, config
            )
        return pair_cache[key]

    def cluster_aff(room, comp):
        key = (room, comp)
        if key not in cluster_cache:
            members = {d: regions[d] for d in comp}
            members[dev] = region
            cluster_cache[key] = _set_group_affinity(store, members, room, t_q, config)
        return cluster_cache[key]

    processed: list[NeighborInfo] = []
    post = dict(priors)
    count = 0
    for n in neighbor_list:
        processed.append(n)
        count += 1
        devs = [m.dev for m in processed]
        cluster_affs: dict[str, list[float]] = {}
        any_zero = False
        for room in candidates:
            edges = {
                frozenset((a, b)): pair(room, a, b)
                for a, b in itertools.combinations(devs, 2)
            }
            affs = [cluster_aff(room, comp) for comp in cluster_partition(devs, edges)]
            cluster_affs[room] = affs
            any_zero = any_zero or any(a <= 0 for a in affs)
        post = posterior_dependent(priors, cluster_affs)
        # a cluster whose joint affinity hits zero settles the evidence
        if any_zero:
            break
    return _answer(post, priors, count)
