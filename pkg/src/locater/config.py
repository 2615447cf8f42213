"""Engine configuration: one document validated at load time."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import DataError

CONFIG_ENV_VAR = "LOCATER_CONFIG"


@dataclass(frozen=True)
class EngineConfig:
    # coarse
    history_days: int = 56  # 8-week plateau
    tau_low_s: float | None = None  # None: estimate from data
    tau_high_s: float | None = None
    tau_default_low_s: float = 1200.0
    tau_default_high_s: float = 10800.0
    threshold_method: str = "population"  # or "ci_of_mean"
    lr_iterations: int = 300
    lr_l2: float = 1e-3
    lr_step: float = 0.5
    coarse_mode: str = "iterative"  # or "seed" (no promotion) or "bootstrap"
    min_labeled_per_device: int = 5
    # fine
    weight_pf: float = 0.6
    weight_pb: float = 0.3
    weight_pr: float = 0.1
    variant: str = "dependent"  # or "independent"
    prior_weighted: bool = False  # fold the room prior into each neighbor update
    max_neighbors: int = 20
    affinity_window_days: int = 21  # three-week plateau
    stop_mode: str = "relaxed"  # "relaxed", "strict" or "none"
    neighbor_order: str = "affinity"  # "affinity", "input" or "cache"
    # cache
    cache_enabled: bool = False
    cache_ttl_days: float = 90.0
    # misc
    seed: int = 0
    timezone: str = "UTC"

    def __post_init__(self):
        if not (self.weight_pf > self.weight_pb > self.weight_pr > 0):
            raise DataError("room-affinity weights must satisfy pf > pb > pr > 0")
        if abs(self.weight_pf + self.weight_pb + self.weight_pr - 1.0) > 1e-9:
            raise DataError("room-affinity weights must sum to 1")
        if self.variant not in ("independent", "dependent"):
            raise DataError(f"unknown variant {self.variant!r}")
        if self.stop_mode not in ("relaxed", "strict", "none"):
            raise DataError(f"unknown stop_mode {self.stop_mode!r}")
        if self.neighbor_order not in ("affinity", "input", "cache"):
            raise DataError(f"unknown neighbor_order {self.neighbor_order!r}")
        if self.tau_low_s is not None and self.tau_high_s is not None:
            if not (0 < self.tau_low_s <= self.tau_high_s):
                raise DataError("thresholds must satisfy 0 < tau_low <= tau_high")

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.weight_pf, self.weight_pb, self.weight_pr)


_FLAT_KEYS = {f.name for f in fields(EngineConfig)}


def config_from_dict(doc: dict) -> EngineConfig:
    """Build a config from a parsed document; unknown keys are rejected.

    The nested `weights: {pf, pb, pr}` form is accepted alongside the
    flat weight_* keys.
    """
    doc = dict(doc)
    weights = doc.pop("weights", None)
    if weights is not None:
        extra = set(weights) - {"pf", "pb", "pr"}
        if extra:
            raise DataError(f"config weights: unknown keys {sorted(extra)}")
        doc.setdefault("weight_pf", weights["pf"])
        doc.setdefault("weight_pb", weights["pb"])
        doc.setdefault("weight_pr", weights["pr"])
    unknown = set(doc) - _FLAT_KEYS
    if unknown:
        raise DataError(f"config: unknown keys {sorted(unknown)}")
    return EngineConfig(**doc)


def load_config(path: str | Path | None = None) -> EngineConfig:
    """Load config from a file, the LOCATER_CONFIG env var, or defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return EngineConfig()
    return config_from_dict(json.loads(Path(path).read_text()))
