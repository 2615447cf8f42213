"""Evaluation harness: baselines, accuracy metrics, system comparison.

Ground truth is room-level with implicit outside time: any queried
moment not covered by a truth record counts as outside the building.
"""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field, replace

from .config import EngineConfig
from .errors import DataError, OutOfHorizonError
from .model import OUTSIDE, Query, SpaceModel, rooms_of_region
from .simulate import GroundTruthRecord, predictability, predictability_bucket
from .store import EventStore

SYSTEMS = ("baseline1", "baseline2", "I-LOCATER", "D-LOCATER")

PROB_BUCKETS = ((0.0, 0.2), (0.2, 0.4), (0.4, 0.6), (0.6, 0.8), (0.8, 1.01))


@dataclass(frozen=True)
class EvalRecord:
    """One evaluated query: truth label plus the system's answers."""

    dev: str
    t_q: int
    truth: str  # room id or OUTSIDE
    region_pred: str  # region id or OUTSIDE
    room_pred: str | None
    distribution: dict[str, float] = field(default_factory=dict)
    processed_neighbors: int = 0


@dataclass(frozen=True)
class AccuracyReport:
    n: int
    a_c: float
    a_f: float
    a_o: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_accuracy: float
    prh_buckets: dict[str, int] = field(default_factory=dict)
    dpr_buckets: dict[str, int] = field(default_factory=dict)
    support_buckets: dict[str, int] = field(default_factory=dict)

    def cell(self) -> str:
        return f"{100 * self.a_c:.0f}|{100 * self.a_f:.0f}|{100 * self.a_o:.0f}"


def _region_correct(space: SpaceModel, truth: str, region_pred: str) -> bool:
    if truth == OUTSIDE or region_pred == OUTSIDE:
        return False
    if region_pred not in space.regions:
        return False
    return truth in rooms_of_region(space, region_pred)


def _final_label(rec: EvalRecord) -> str:
    if rec.region_pred == OUTSIDE:
        return OUTSIDE
    return rec.room_pred if rec.room_pred is not None else rec.region_pred


def _bucket_label(value: float) -> str:
    for lo, hi in PROB_BUCKETS:
        if lo <= value < hi:
            return f"[{lo:.1f},{min(hi, 1.0):.1f})"
    return "?"


def accuracy(records: list[EvalRecord], space: SpaceModel) -> AccuracyReport:
    """Coarse, fine and overall accuracy plus macro metrics.

    a_c counts correct outside calls and correct regions; a_f is room
    accuracy among the region-correct queries only; a_o counts correct
    rooms and correct outside calls.
    """
    if not records:
        raise DataError("empty query set")

    n = len(records)
    q_out = sum(
        1 for r in records if r.truth == OUTSIDE and r.region_pred == OUTSIDE
    )
    region_ok = [r for r in records if _region_correct(space, r.truth, r.region_pred)]
    q_room = sum(1 for r in region_ok if r.room_pred == r.truth)

    a_c = (q_out + len(region_ok)) / n
    a_f = q_room / len(region_ok) if region_ok else 0.0
    a_o = (q_room + q_out) / n

    # confusion over final labels, macro-averaged over truth classes
    classes = sorted({r.truth for r in records})
    tp = {c: 0 for c in classes}
    fp = {c: 0 for c in classes}
    fn = {c: 0 for c in classes}
    correct = 0
    for r in records:
        pred = _final_label(r)
        if pred == r.truth:
            tp[r.truth] += 1
            correct += 1
        else:
            fn[r.truth] += 1
            if pred in tp:
                fp[pred] += 1
    precs, recs, f1s = [], [], []
    for c in classes:
        p = tp[c] / (tp[c] + fp[c]) if tp[c] + fp[c] else 0.0
        rec = tp[c] / (tp[c] + fn[c]) if tp[c] + fn[c] else 0.0
        precs.append(p)
        recs.append(rec)
        f1s.append(2 * p * rec / (p + rec) if p + rec else 0.0)

    prh: dict[str, int] = {}
    dpr: dict[str, int] = {}
    support: dict[str, int] = {}
    for r in records:
        if not r.distribution:
            continue
        probs = sorted(r.distribution.values(), reverse=True)
        prh[_bucket_label(probs[0])] = prh.get(_bucket_label(probs[0]), 0) + 1
        delta = probs[0] - probs[1] if len(probs) > 1 else probs[0]
        dpr[_bucket_label(delta)] = dpr.get(_bucket_label(delta), 0) + 1
        k = sum(1 for p in probs if p > 0)
        key = str(k) if k < 5 else "5+"
        support[key] = support.get(key, 0) + 1

    return AccuracyReport(
        n=n,
        a_c=a_c,
        a_f=a_f,
        a_o=a_o,
        macro_precision=sum(precs) / len(precs),
        macro_recall=sum(recs) / len(recs),
        macro_f1=sum(f1s) / len(f1s),
        micro_accuracy=correct / n,
        prh_buckets=prh,
        dpr_buckets=dpr,
        support_buckets=support,
    )


def coarse_baseline(store: EventStore, dev: str, t_q: int) -> str:
    """Hour rule: gaps of an hour or more mean outside, shorter gaps get
    the last known region; clean tuples pass through."""
    tup = store.lookup(dev, t_q)
    if not tup.is_gap:
        return tup.loc
    if tup.duration >= 3600:
        return OUTSIDE
    for prev in reversed(store.device_table(dev)):
        if prev.et <= tup.st and not prev.is_gap:
            return prev.loc
    return OUTSIDE


def fine_baseline1(space: SpaceModel, region: str, dev: str, seed: int) -> str:
    rooms = rooms_of_region(space, region)
    rng = random.Random(f"{seed}:{dev}:{region}")
    return rng.choice(list(rooms))


def fine_baseline2(space: SpaceModel, region: str, dev: str, seed: int) -> str:
    """Preferred room when it lies in the region, else the random pick."""
    rooms = rooms_of_region(space, region)
    device = space.devices.get(dev)
    if device:
        preferred = sorted(set(device.preferred_rooms) & set(rooms))
        if preferred:
            return preferred[0]
    return fine_baseline1(space, region, dev, seed)


class TruthIndex:
    """Point lookups into the truth records, outside when uncovered."""

    def __init__(self, truth: list[GroundTruthRecord]):
        self.records = truth
        self._by_dev: dict[str, list[GroundTruthRecord]] = {}
        for rec in sorted(truth, key=lambda r: (r.device, r.start)):
            self._by_dev.setdefault(rec.device, []).append(rec)
        self._starts = {
            dev: [r.start for r in recs] for dev, recs in self._by_dev.items()
        }

    def devices(self) -> list[str]:
        return sorted(self._by_dev)

    def horizon(self) -> tuple[int, int]:
        lo = min(r.start for r in self.records)
        hi = max(r.end for r in self.records)
        return lo, hi

    def label(self, dev: str, t: int) -> str:
        recs = self._by_dev.get(dev, [])
        i = bisect.bisect_right(self._starts.get(dev, []), t) - 1
        if i >= 0 and recs[i].start <= t < recs[i].end:
            return recs[i].room
        return OUTSIDE


def generate_queries(
    truth: list[GroundTruthRecord], n: int, seed: int, granularity: str = "fine"
) -> list[Query]:
    """Uniform (device, time) sample over the truth horizon."""
    index = TruthIndex(truth)
    devs = index.devices()
    lo, hi = index.horizon()
    rng = random.Random(seed)
    return [
        Query(dev=rng.choice(devs), t_q=rng.randrange(lo, hi), granularity=granularity)
        for _ in range(n)
    ]


def run_system(
    store: EventStore,
    system: str,
    queries: list[Query],
    truth_index: TruthIndex,
    config: EngineConfig,
    cache_graph=None,
    memo: dict | None = None,
) -> list[EvalRecord]:
    """Answer a query batch with one system and label the records."""
    if system not in SYSTEMS:
        raise DataError(f"unknown system {system!r}; expected one of {SYSTEMS}")
    memo = memo if memo is not None else {}
    records = []
    for q in queries:
        truth = truth_index.label(q.dev, q.t_q)
        try:
            records.append(
                _answer_one(store, system, q, truth, config, cache_graph, memo)
            )
        except OutOfHorizonError:
            # no observations around the query time means outside
            records.append(EvalRecord(q.dev, q.t_q, truth, OUTSIDE, None))
    return records


def _answer_one(store, system, q, truth, config, cache_graph, memo) -> EvalRecord:
    from . import engine  # deferred: engine imports this module's baselines

    if system in ("baseline1", "baseline2"):
        region = coarse_baseline(store, q.dev, q.t_q)
        if region == OUTSIDE:
            return EvalRecord(q.dev, q.t_q, truth, OUTSIDE, None)
        pick = fine_baseline1 if system == "baseline1" else fine_baseline2
        room = pick(store.space, region, q.dev, config.seed)
        return EvalRecord(q.dev, q.t_q, truth, region, room)

    variant = "independent" if system == "I-LOCATER" else "dependent"
    answer, region = engine.answer_query(
        store,
        cache_graph,
        q.dev,
        q.t_q,
        granularity="fine",
        config=replace(config, variant=variant),
        memo=memo,
        with_region=True,
    )
    if answer.level == OUTSIDE:
        return EvalRecord(q.dev, q.t_q, truth, OUTSIDE, None)
    return EvalRecord(
        q.dev, q.t_q, truth, region, answer.value,
        answer.distribution, answer.processed_neighbors,
    )


@dataclass(frozen=True)
class ComparisonRow:
    system: str
    overall: AccuracyReport
    by_bucket: dict[str, AccuracyReport]


def compare(
    store: EventStore,
    truth: list[GroundTruthRecord],
    queries: list[Query],
    systems: list[str],
    config: EngineConfig | None = None,
    cache_graph=None,
) -> list[ComparisonRow]:
    """Accuracy per system, overall and per predictability bucket."""
    config = config or EngineConfig()
    index = TruthIndex(truth)
    buckets = {
        dev: predictability_bucket(predictability(truth, dev))
        for dev in index.devices()
    }
    rows = []
    memo: dict = {}
    for system in systems:
        records = run_system(
            store, system, queries, index, config, cache_graph=cache_graph, memo=memo
        )
        by_bucket = {}
        for bucket in sorted({buckets[r.dev] for r in records if r.dev in buckets}):
            subset = [r for r in records if buckets.get(r.dev) == bucket]
            if subset:
                by_bucket[bucket] = accuracy(subset, store.space)
        rows.append(
            ComparisonRow(
                system=system,
                overall=accuracy(records, store.space),
                by_bucket=by_bucket,
            )
        )
    return rows
