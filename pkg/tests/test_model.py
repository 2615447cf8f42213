"""Domain model invariants."""

import pytest

from locater.errors import UnknownRegionError
from locater.model import (
    PRIVATE,
    PUBLIC,
    Device,
    Region,
    Room,
    SpaceModel,
    rooms_of_region,
    validate_space_model,
)


def test_region_rooms_are_deduplicated_and_sorted():
    region = Region(ap="ap1", rooms=("b", "a", "b"))
    assert region.rooms == ("a", "b")


def test_rooms_of_region_unknown_region():
    with pytest.raises(UnknownRegionError):
        rooms_of_region(SpaceModel(), "nope")


def test_region_of_ap():
    model = SpaceModel(regions={"g1": Region("ap1", ("r",))}, rooms={"r": Room(PUBLIC)})
    assert model.region_of_ap("ap1") == "g1"
    assert model.region_of_ap("ap2") is None


def _valid_model():
    return SpaceModel(
        regions={"g1": Region("ap1", ("r1", "r2")), "g2": Region("ap2", ("r2",))},
        rooms={"r1": Room(PRIVATE), "r2": Room(PUBLIC)},
        devices={"d1": Device(preferred_rooms=frozenset({"r1"}))},
    )


def test_validate_space_model_accepts_valid_model():
    assert validate_space_model(_valid_model()) == []


def test_validate_space_model_reports_violations():
    model = SpaceModel(
        regions={
            "g1": Region("ap1", ("r1", "ghost")),
            "g2": Region("ap1", ("r1",)),  # duplicate AP
        },
        rooms={"r1": Room(PRIVATE), "r2": Room("lounge"), "orphan": Room(PUBLIC)},
        devices={"d1": Device(preferred_rooms=frozenset({"missing"}), delta_seconds=0)},
    )
    messages = "\n".join(validate_space_model(model))
    assert "already mapped" in messages
    assert "unknown room ghost" in messages
    assert "not covered by any region" in messages
    assert "invalid type" in messages
    assert "preferred room missing" in messages
    assert "non-positive validity period" in messages
