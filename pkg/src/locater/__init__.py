"""locater: semantic indoor location from sporadic WiFi connectivity logs."""

from .cache import GlobalAffinityGraph, LocalAffinityGraph, local_graph
from .config import EngineConfig, load_config
from .engine import answer_query, clean_all
from .errors import DataError, LocaterError
from .model import (
    OUTSIDE,
    ConnectivityEvent,
    Device,
    LocationAnswer,
    Query,
    Region,
    Room,
    SemanticLocationTuple,
    SpaceModel,
)
from .store import EventStore, ingest, load_store

__version__ = "0.1.0"
