"""Coarse localization: label gaps as outside or as a region.

Bootstrapping by duration thresholds seeds an iterative semi-supervised
loop around a from-scratch multinomial logistic classifier; the loop
promotes one unlabeled gap per round (the one predicted with highest
confidence) until none remain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from zoneinfo import ZoneInfo

import numpy as np

from .config import EngineConfig
from .errors import NoLabeledDataError
from .model import OUTSIDE, ConnectivityEvent, SemanticLocationTuple
from .store import EventStore

INSIDE = "inside"

DAY_S = 86400


@dataclass(frozen=True)
class Thresholds:
    tau_low: float
    tau_high: float

    def __post_init__(self):
        if not (0 < self.tau_low <= self.tau_high):
            raise ValueError("thresholds must satisfy 0 < tau_low <= tau_high")


@dataclass(frozen=True)
class GapFeatures:
    start_tod: float  # seconds in [0, 86400)
    end_tod: float
    duration: float
    start_dow: int  # 0=Monday .. 6=Sunday
    end_dow: int
    prev_region: str | None
    next_region: str | None
    omega: float  # mean clean tuples/day in the same time-of-day window


def estimate_thresholds(
    events: list[ConnectivityEvent],
    config: EngineConfig | None = None,
    min_devices: int = 5,
) -> Thresholds:
    """Duration thresholds from the spread of per-device connection cadence.

    Fits the per-device average inter-event durations and takes the 95%
    interval of that distribution (population interval by default, CI of
    the mean behind threshold_method="ci_of_mean").  Falls back to the
    configured defaults when too few devices have repeated events.
    """
    config = config or EngineConfig()
    by_dev: dict[str, list[int]] = {}
    for e in events:
        by_dev.setdefault(e.dev, []).append(e.time)

    means = []
    for times in by_dev.values():
        times.sort()
        intervals = [b - a for a, b in zip(times, times[1:])]
        if intervals:
            means.append(sum(intervals) / len(intervals))

    if len(means) < min_devices:
        return Thresholds(config.tau_default_low_s, config.tau_default_high_s)

    arr = np.asarray(means, dtype=float)
    mu = float(arr.mean())
    sigma = float(arr.std())  # population std
    if config.threshold_method == "ci_of_mean":
        sigma = sigma / math.sqrt(len(arr))
    return Thresholds(max(mu - 1.96 * sigma, 1.0), max(mu + 1.96 * sigma, 1.0))


def resolve_thresholds(store: EventStore, config: EngineConfig) -> Thresholds:
    if config.tau_low_s is not None and config.tau_high_s is not None:
        return Thresholds(config.tau_low_s, config.tau_high_s)
    return estimate_thresholds(list(store.events), config)


def _tod_dow(t: int, zone: ZoneInfo) -> tuple[float, int]:
    dt = datetime.fromtimestamp(t, zone)
    return float(dt.hour * 3600 + dt.minute * 60 + dt.second), dt.weekday()


def connection_density(
    store: EventStore, dev: str, start_tod: float, end_tod: float,
    window_start: int, window_end: int, zone: ZoneInfo,
) -> float:
    """Mean count per day of the device's clean tuples that overlap the
    [start_tod, end_tod] time-of-day window, over the training window."""
    if end_tod <= start_tod:
        end_tod = float(DAY_S)
    n_days = max(1, round((window_end - window_start) / DAY_S))
    clean = [t for t in store.tuples_in_window(dev, window_start, window_end) if not t.is_gap]
    total = 0
    day0 = datetime.fromtimestamp(window_start, zone)
    day_start = int(datetime(day0.year, day0.month, day0.day, tzinfo=zone).timestamp())
    for _ in range(n_days + 1):
        ws, we = day_start + start_tod, day_start + end_tod
        total += sum(1 for t in clean if t.et > ws and t.st < we)
        day_start += DAY_S
    return total / n_days


def extract_features(
    store: EventStore,
    tup: SemanticLocationTuple,
    window_start: int,
    window_end: int,
    zone: ZoneInfo,
) -> GapFeatures:
    start_tod, start_dow = _tod_dow(tup.st, zone)
    end_tod, end_dow = _tod_dow(tup.et, zone)
    dev_table = store.device_table(tup.dev)
    idx = next((i for i, t in enumerate(dev_table) if t.lid == tup.lid), None)
    prev_region = next_region = None
    if idx is not None:
        if idx > 0 and not dev_table[idx - 1].is_gap:
            prev_region = dev_table[idx - 1].loc
        if idx + 1 < len(dev_table) and not dev_table[idx + 1].is_gap:
            next_region = dev_table[idx + 1].loc
    omega = connection_density(
        store, tup.dev, start_tod, end_tod, window_start, window_end, zone
    )
    return GapFeatures(
        start_tod=start_tod,
        end_tod=end_tod,
        duration=float(tup.duration),
        start_dow=start_dow,
        end_dow=end_dow,
        prev_region=prev_region,
        next_region=next_region,
        omega=omega,
    )


def most_visited_region(
    store: EventStore, dev: str, start_tod: float, end_tod: float,
    window_start: int, window_end: int, zone: ZoneInfo,
) -> str | None:
    """Most frequent region among clean tuples in the same time-of-day
    window of the history; ties broken lexicographically."""
    if end_tod <= start_tod:
        end_tod = float(DAY_S)
    counts: dict[str, int] = {}
    for t in store.tuples_in_window(dev, window_start, window_end):
        if t.is_gap:
            continue
        tod, _ = _tod_dow(t.st, zone)
        tod_e, _ = _tod_dow(max(t.st, t.et - 1), zone)
        if tod_e >= start_tod and tod <= end_tod:
            counts[t.loc] = counts.get(t.loc, 0) + 1
    if not counts:
        return None
    return min(counts, key=lambda g: (-counts[g], g))


def bootstrap_region(
    store: EventStore, feats: GapFeatures, dev: str,
    window_start: int, window_end: int, zone: ZoneInfo,
) -> str | None:
    if feats.prev_region is not None and feats.prev_region == feats.next_region:
        return feats.prev_region
    region = most_visited_region(
        store, dev, feats.start_tod, feats.end_tod, window_start, window_end, zone
    )
    if region is not None:
        return region
    return feats.prev_region or feats.next_region


def bootstrap_labels(
    dirty: list[SemanticLocationTuple],
    thresholds: Thresholds,
    store: EventStore,
    window_start: int,
    window_end: int,
    zone: ZoneInfo,
) -> tuple[dict[str, tuple[str, str | None]], list[SemanticLocationTuple]]:
    """Partition dirty tuples by the duration heuristic.

    Returns (labeled: lid -> (inside|outside, region-or-None), unlabeled).
    """
    labeled: dict[str, tuple[str, str | None]] = {}
    unlabeled: list[SemanticLocationTuple] = []
    for tup in dirty:
        if tup.duration <= thresholds.tau_low:
            feats = extract_features(store, tup, window_start, window_end, zone)
            region = bootstrap_region(store, feats, tup.dev, window_start, window_end, zone)
            labeled[tup.lid] = (INSIDE, region)
        elif tup.duration >= thresholds.tau_high:
            labeled[tup.lid] = (OUTSIDE, None)
        else:
            unlabeled.append(tup)
    return labeled, unlabeled


class _Encoder:
    """One-hot categoricals + standardized numerics, fit on training data."""

    def __init__(self, feats: list[GapFeatures]):
        self.region_vocab = sorted(
            {f.prev_region for f in feats if f.prev_region}
            | {f.next_region for f in feats if f.next_region}
        )
        x = np.array([self._numeric(f) for f in feats], dtype=float)
        self.mean = x.mean(axis=0)
        self.std = x.std(axis=0)
        self.std[self.std == 0] = 1.0

    @staticmethod
    def _numeric(f: GapFeatures) -> list[float]:
        same = 1.0 if f.prev_region is not None and f.prev_region == f.next_region else 0.0
        return [f.start_tod, f.end_tod, f.duration, f.omega, same]

    def encode(self, feats: list[GapFeatures]) -> np.ndarray:
        rows = []
        for f in feats:
            num = (np.array(self._numeric(f)) - self.mean) / self.std
            dow = np.zeros(14)
            dow[f.start_dow] = 1.0
            dow[7 + f.end_dow] = 1.0
            reg = np.zeros(2 * len(self.region_vocab))
            if f.prev_region in self.region_vocab:
                reg[self.region_vocab.index(f.prev_region)] = 1.0
            if f.next_region in self.region_vocab:
                reg[len(self.region_vocab) + self.region_vocab.index(f.next_region)] = 1.0
            rows.append(np.concatenate([num, dow, reg]))
        return np.array(rows)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def loss_and_grad(
    w: np.ndarray, x: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy with L2 penalty and its gradient.

    w is (features+1, classes) with the bias in the last row (the bias is
    not penalized); y is one-hot (samples, classes).
    """
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    probs = softmax(xb @ w)
    n = x.shape[0]
    eps = 1e-12
    loss = -float(np.sum(y * np.log(probs + eps))) / n
    loss += 0.5 * l2 * float(np.sum(w[:-1] ** 2))
    grad = xb.T @ (probs - y) / n
    grad[:-1] += l2 * w[:-1]
    return loss, grad


class LogisticClassifier:
    """Multinomial logistic model over an explicit, sorted label set."""

    def __init__(self, labels: tuple[str, ...], encoder: _Encoder | None,
                 weights: np.ndarray | None, constant: str | None = None):
        self.labels = labels
        self.encoder = encoder
        self.weights = weights
        self.constant = constant

    def predict(self, feats: GapFeatures) -> tuple[np.ndarray, str, float]:
        """Probability array over labels, argmax label, confidence.

        Confidence is the population variance of the probability array;
        argmax ties break lexicographically (labels are sorted).
        """
        if self.constant is not None:
            probs = np.array([1.0 if lab == self.constant else 0.0 for lab in self.labels])
        else:
            x = self.encoder.encode([feats])
            xb = np.hstack([x, np.ones((1, 1))])
            probs = softmax(xb @ self.weights)[0]
        label = self.labels[int(np.argmax(probs))]
        return probs, label, float(probs.var())


def train_logistic(
    samples: list[tuple[GapFeatures, str]],
    label_set: set[str],
    iterations: int = 300,
    l2: float = 1e-3,
    step: float = 0.5,
) -> LogisticClassifier:
    """Full-batch gradient descent fit; deterministic (zero init)."""
    if not samples:
        raise NoLabeledDataError("cannot train on an empty labeled set")
    labels = tuple(sorted(label_set | {lab for _, lab in samples}))
    present = sorted({lab for _, lab in samples})
    if len(present) == 1:
        return LogisticClassifier(labels, None, None, constant=present[0])

    feats = [f for f, _ in samples]
    encoder = _Encoder(feats)
    x = encoder.encode(feats)
    y = np.zeros((len(samples), len(labels)))
    for i, (_, lab) in enumerate(samples):
        y[i, labels.index(lab)] = 1.0

    w = np.zeros((x.shape[1] + 1, len(labels)))
    for _ in range(iterations):
        _, grad = loss_and_grad(w, x, y, l2)
        w -= step * grad
    return LogisticClassifier(labels, encoder, w)


def iterative_classify(
    s_labeled: list[tuple[GapFeatures, str]],
    s_unlabeled: list[tuple[str, GapFeatures]],
    label_set: set[str],
    iterations: int = 300,
    l2: float = 1e-3,
    step: float = 0.5,
) -> tuple[LogisticClassifier, dict[str, str], int]:
    """Self-training loop: retrain, promote the single highest-confidence
    unlabeled tuple with its predicted label, repeat until none remain.

    Returns (last classifier, promoted labels keyed by tuple id, number
    of retrain rounds).  Confidence ties break on tuple id.
    """
    if not s_labeled:
        raise NoLabeledDataError("bootstrap produced no labeled tuples; fall back to defaults")

    labeled = list(s_labeled)
    pending = sorted(s_unlabeled, key=lambda kv: kv[0])
    assigned: dict[str, str] = {}
    rounds = 0
    clf = None
    while pending:
        clf = train_logistic(labeled, label_set, iterations, l2, step)
        rounds += 1
        best_key, best_label, best_conf = None, None, -1.0
        for key, feats in pending:
            _, label, conf = clf.predict(feats)
            if conf > best_conf:
                best_key, best_label, best_conf = key, label, conf
        pending = [(k, f) for k, f in pending if k != best_key]
        feats = next(f for k, f in s_unlabeled if k == best_key)
        labeled.append((feats, best_label))
        assigned[best_key] = best_label
    if clf is None:
        clf = train_logistic(labeled, label_set, iterations, l2, step)
    return clf, assigned, rounds


def coarse_localize(
    store: EventStore,
    dev: str,
    t_q: int,
    config: EngineConfig | None = None,
    thresholds: Thresholds | None = None,
    memo: dict | None = None,
) -> str:
    """Region id or OUTSIDE for (dev, t_q).

    Clean tuples pass through unchanged; gaps go through bootstrapping
    plus two-stage (building, then region) iterative classification over
    the device's dirty tuples in the history window.
    """
    config = config or EngineConfig()
    tup = store.lookup(dev, t_q)
    if not tup.is_gap:
        return tup.loc

    key = (dev, tup.lid, config.coarse_mode)
    if memo is not None and key in memo:
        return memo[key]
    result = _classify_gap(store, dev, tup, t_q, config, thresholds)
    if memo is not None:
        memo[key] = result
    return result


def _classify_gap(store, dev, tup, t_q, config, thresholds):
    zone = ZoneInfo(config.timezone)
    thresholds = thresholds or resolve_thresholds(store, config)
    w_start, w_end = t_q - config.history_days * DAY_S, t_q

    dirty = [t for t in store.tuples_in_window(dev, w_start, w_end) if t.is_gap]
    if all(t.lid != tup.lid for t in dirty):
        dirty.append(tup)

    labeled, unlabeled = bootstrap_labels(dirty, thresholds, store, w_start, w_end, zone)

    def fallback(t):
        # bootstrap-only decision for a mid-duration gap
        feats = extract_features(store, t, w_start, w_end, zone)
        region = bootstrap_region(store, feats, dev, w_start, w_end, zone)
        if region is None:
            region = min(store.space.regions) if store.space.regions else OUTSIDE
        return region

    if tup.lid in labeled:
        kind, region = labeled[tup.lid]
        if kind == OUTSIDE:
            return OUTSIDE
        return region if region is not None else fallback(tup)

    if config.coarse_mode == "bootstrap":
        return fallback(tup)

    feats_by_lid = {
        t.lid: extract_features(store, t, w_start, w_end, zone) for t in dirty
    }

    # stage 1: inside/outside
    s_lab = [(feats_by_lid[lid], kind) for lid, (kind, _) in labeled.items()]
    global_pool = None
    if len(s_lab) < config.min_labeled_per_device:
        global_pool = _global_bootstrap_pool(store, dev, thresholds, w_start, w_end, zone)
        s_lab = s_lab + [(f, kind) for f, kind, _ in global_pool]
    if not s_lab:
        return fallback(tup)

    s_unlab = sorted(
        ((t.lid, feats_by_lid[t.lid]) for t in unlabeled), key=lambda kv: kv[0]
    )

    def fit(seeds, pending, label_set):
        # "seed" mode trains once on the bootstrap labels, no promotion
        if config.coarse_mode == "seed":
            return train_logistic(
                seeds, label_set, config.lr_iterations, config.lr_l2, config.lr_step
            )
        clf, _, _ = iterative_classify(
            seeds, pending, label_set,
            config.lr_iterations, config.lr_l2, config.lr_step,
        )
        return clf

    clf1 = fit(s_lab, s_unlab, {INSIDE, OUTSIDE})
    _, stage1, _ = clf1.predict(feats_by_lid[tup.lid])
    if stage1 == OUTSIDE:
        return OUTSIDE

    # stage 2: region, seeded by bootstrapped inside tuples
    region_seeds = [
        (feats_by_lid[lid], region)
        for lid, (kind, region) in labeled.items()
        if kind == INSIDE and region is not None
    ]
    if len(region_seeds) < config.min_labeled_per_device:
        if global_pool is None:
            global_pool = _global_bootstrap_pool(store, dev, thresholds, w_start, w_end, zone)
        region_seeds = region_seeds + [
            (f, region) for f, kind, region in global_pool
            if kind == INSIDE and region is not None
        ]
    if not region_seeds:
        return fallback(tup)

    inside_unlabeled = []
    for lid, feats in s_unlab:
        if lid == tup.lid:
            continue
        _, lab, _ = clf1.predict(feats)
        if lab == INSIDE:
            inside_unlabeled.append((lid, feats))
    label_set = {region for _, region in region_seeds}
    clf2 = fit(region_seeds, inside_unlabeled, label_set)
    _, region, _ = clf2.predict(feats_by_lid[tup.lid])
    return region


def _global_bootstrap_pool(store, exclude_dev, thresholds, w_start, w_end, zone):
    """Bootstrap-labeled dirty tuples of all other devices in the window,
    used when the queried device has too little labeled history."""
    pool = []
    for other in store.devices():
        if other == exclude_dev:
            continue
        dirty = [t for t in store.tuples_in_window(other, w_start, w_end) if t.is_gap]
        labeled, _ = bootstrap_labels(dirty, thresholds, store, w_start, w_end, zone)
        for t in dirty:
            if t.lid in labeled:
                kind, region = labeled[t.lid]
                feats = extract_features(store, t, w_start, w_end, zone)
                pool.append((feats, kind, region))
    return pool
