"""Query-time cleaning: coarse stage, then fine stage, then cache update."""

from __future__ import annotations

from dataclasses import replace

from . import cache as cache_mod
from . import coarse as coarse_mod
from . import fine as fine_mod
from .config import EngineConfig
from .errors import LocaterError
from .model import OUTSIDE, LocationAnswer, SemanticLocationTuple, rooms_of_region
from .store import EventStore, append_derived


def answer_query(
    store: EventStore,
    cache_graph,
    dev: str,
    t_q: int,
    granularity: str = "fine",
    config: EngineConfig | None = None,
    memo: dict | None = None,
    thresholds=None,
    write_back: bool = False,
    with_region: bool = False,
):
    """Locate a device at a point in time.

    Clean tuples give their region directly; gaps go through coarse
    classification.  Fine-granularity queries inside a building then get
    a room distribution, with neighbor ordering taken from the affinity
    cache when enabled.  Returns the LocationAnswer, or (answer, region)
    when with_region is set.
    """
    config = config or EngineConfig()
    try:
        tup = store.lookup(dev, t_q)
        if tup.is_gap:
            region = coarse_mod.coarse_localize(
                store, dev, t_q, config, thresholds=thresholds, memo=memo
            )
        else:
            region = tup.loc

        if region == OUTSIDE:
            answer = LocationAnswer(OUTSIDE, OUTSIDE, {}, 0)
        elif granularity == "coarse":
            answer = LocationAnswer("region", region, {}, 0)
        else:
            answer = _fine_stage(
                store, cache_graph, dev, t_q, region, config, memo, thresholds
            )
    except LocaterError as exc:
        # keep the concrete type, just prepend query context
        exc.args = (f"query dev={dev} t={t_q}: {exc}",)
        raise

    if write_back and tup.is_gap and store.path is not None:
        loc = answer.value if answer.level != OUTSIDE else OUTSIDE
        append_derived(
            store.path,
            SemanticLocationTuple(tup.lid, dev, loc, tup.st, tup.et),
        )
    if with_region:
        return answer, region
    return answer


def _fine_stage(store, cache_graph, dev, t_q, region, config, memo, thresholds):
    # neighbors stuck in gaps are placed by the cheap bootstrap rule only
    bootstrap_cfg = replace(config, coarse_mode="bootstrap")

    def locate(other: str):
        try:
            return coarse_mod.coarse_localize(
                store, other, t_q, bootstrap_cfg, thresholds=thresholds, memo=memo
            )
        except LocaterError:
            return None

    nlist = fine_mod.neighbors(store, dev, region, t_q, config, locate=locate)
    if config.cache_enabled and cache_graph is not None:
        nlist = cache_mod.ordered_neighbors(cache_graph, dev, t_q, nlist)
    elif config.neighbor_order == "input":
        nlist = sorted(nlist, key=lambda n: n.dev)

    answer = fine_mod.fine_localize(
        store, dev, t_q, region, config, neighbor_list=nlist
    )

    if config.cache_enabled and cache_graph is not None:
        processed = nlist[: answer.processed_neighbors]
        regions = {n.dev: n.region for n in processed}

        def pair_room_affinity(room, a, b):
            return fine_mod._set_group_affinity(
                store, {a: regions[a], b: regions[b]}, room, t_q, config
            )

        local = cache_mod.local_graph(
            dev, t_q, processed, rooms_of_region(store.space, region),
            pair_room_affinity=pair_room_affinity,
        )
        cache_graph.merge(local)
    return answer


def clean_all(
    store: EventStore,
    config: EngineConfig | None = None,
    cache_graph=None,
    granularity: str = "coarse",
) -> int:
    """Naive full pass: answer every gap at its midpoint and write the
    result back as a derived tuple.  Returns the number of gaps cleaned."""
    config = config or EngineConfig()
    memo: dict = {}
    cleaned = 0
    for dev in store.devices():
        for tup in store.device_table(dev):
            if not tup.is_gap:
                continue
            answer_query(
                store,
                cache_graph,
                dev,
                (tup.st + tup.et) // 2,
                granularity=granularity,
                config=config,
                memo=memo,
                write_back=store.path is not None,
            )
            cleaned += 1
    return cleaned
