"""Room-level disambiguation: affinities, posteriors, stopping."""

import pytest

from _helpers import build_store, reference_space, tup
from locater.config import EngineConfig
from locater.errors import DataError, TooManyDevicesError
from locater.fine import (
    NeighborInfo,
    RoomPosterior,
    bounds,
    brute_force_bounds,
    cluster_partition,
    device_affinity,
    fine_localize,
    group_affinity,
    posterior_dependent,
    posterior_independent,
    room_affinity,
    stop_check,
)
from locater.model import PUBLIC, Device, Region, Room, SpaceModel


class TestRoomAffinity:
    def test_reference_configuration(self):
        out = room_affinity(reference_space(), "d1", "g3", (0.5, 0.3, 0.2))
        assert out["2061"] == pytest.approx(0.5, abs=1e-9)
        assert out["2065"] == pytest.approx(0.3, abs=1e-9)
        for rid in ("2059", "2069", "2099"):
            assert out[rid] == pytest.approx(0.2 / 3, abs=1e-9)

    def test_alternate_weights(self):
        out = room_affinity(reference_space(), "d1", "g3", (0.6, 0.3, 0.1))
        assert out["2061"] == pytest.approx(0.6, abs=1e-9)
        assert out["2059"] == pytest.approx(0.1 / 3, abs=1e-9)

    def test_all_public_without_preference_is_uniform(self):
        space = SpaceModel(
            regions={"g": Region("g", ("a", "b", "c"))},
            rooms={r: Room(PUBLIC) for r in "abc"},
        )
        out = room_affinity(space, "dx", "g", (0.6, 0.3, 0.1))
        assert all(v == pytest.approx(1 / 3) for v in out.values())

    def test_empty_region_is_an_error(self):
        space = SpaceModel(regions={"g": Region("g", ())}, rooms={})
        with pytest.raises(DataError):
            room_affinity(space, "dx", "g", (0.6, 0.3, 0.1))


class TestDeviceAffinity:
    def test_counts_intersecting_tuples(self):
        # ten tuples each; the first four pairs are co-located
        d1 = [tup(f"a{i}", "d1", "g", i * 100, i * 100 + 100) for i in range(10)]
        d2 = [
            tup(f"b{i}", "d2", "g" if i < 4 else "h", i * 100, i * 100 + 100)
            for i in range(10)
        ]
        assert device_affinity({"d1": d1, "d2": d2}) == pytest.approx(8 / 20)

    def test_identical_histories(self):
        rows = [tup(f"x{i}", "d1", "g", i, i + 1) for i in range(3)]
        mirrored = [tup(f"y{i}", "d2", "g", i, i + 1) for i in range(3)]
        assert device_affinity({"d1": rows, "d2": mirrored}) == 1.0

    def test_disjoint_histories(self):
        a = [tup("a", "d1", "g", 0, 10)]
        b = [tup("b", "d2", "g", 20, 30)]
        assert device_affinity({"d1": a, "d2": b}) == 0.0
        assert device_affinity({"d1": [], "d2": []}) == 0.0

    def test_gap_rows_count_in_denominator_only(self):
        a = [tup("a", "d1", "g", 0, 10), tup("a2", "d1", None, 10, 20)]
        b = [tup("b", "d2", "g", 0, 10)]
        assert device_affinity({"d1": a, "d2": b}) == pytest.approx(2 / 3)

    def test_symmetry(self):
        a = [tup("a", "d1", "g", 0, 10), tup("a2", "d1", "h", 10, 20)]
        b = [tup("b", "d2", "g", 5, 15)]
        assert device_affinity({"d1": a, "d2": b}) == device_affinity({"d2": b, "d1": a})


class TestGroupAffinity:
    MAPS = {
        "d1": {"2065": 0.3, "2069": 0.066, "2099": 0.066},
        "d2": {"2065": 0.4, "2069": 0.01, "2099": 0.5},
    }

    def test_room_outside_shared_candidates_scores_zero(self):
        assert group_affinity(0.4, self.MAPS, frozenset({"2069"}), "2065") == 0.0

    def test_zero_mass_scores_zero(self):
        maps = {"d1": {"a": 0.0}, "d2": {"a": 0.5}}
        assert group_affinity(0.5, maps, frozenset({"a"}), "a") == 0.0

    def test_singleton_set_normalizes_its_own_map(self):
        maps = {"d1": {"a": 0.2, "b": 0.6}}
        value = group_affinity(1.0, maps, frozenset({"a", "b"}), "b")
        assert value == pytest.approx(0.75)

    def test_monotone_in_device_affinity(self):
        r_is = frozenset({"2065", "2069", "2099"})
        low = group_affinity(0.2, self.MAPS, r_is, "2065")
        high = group_affinity(0.4, self.MAPS, r_is, "2065")
        assert high == pytest.approx(2 * low)


class TestPosteriorIndependent:
    def test_no_evidence_returns_priors(self):
        priors = {"a": 0.7, "b": 0.3}
        assert posterior_independent(priors, []) == priors

    def test_single_neighbor_reduces_to_its_affinity(self):
        post = posterior_independent({"a": 0.5}, [{"a": 0.12}])
        assert post["a"] == pytest.approx(0.12)

    def test_two_equal_neighbors(self):
        post = posterior_independent({"a": 0.5}, [{"a": 0.9}, {"a": 0.9}])
        assert post["a"] == pytest.approx(81 / 82)

    def test_zero_and_one_pins(self):
        post = posterior_independent({"a": 0.5, "b": 0.5}, [{"a": 0.0, "b": 1.0}])
        assert post == {"a": 0.0, "b": 1.0}

    def test_order_invariance(self):
        ev = [{"a": 0.3}, {"a": 0.8}, {"a": 0.6}]
        assert posterior_independent({"a": 0.4}, ev) == posterior_independent(
            {"a": 0.4}, ev[::-1]
        )


def _neighbor(dev, affs, probs):
    return NeighborInfo(dev, "g", 0.5, affs, probs)


class TestBounds:
    def test_no_unprocessed_collapses(self):
        out = bounds({"a": 0.6, "b": 0.4}, [], [], ("a", "b"))
        for rp in out.values():
            assert rp.min_p == rp.exp_p == rp.max_p == rp.p

    def test_monotone_ordering(self):
        n = _neighbor("n1", {"a": 0.7, "b": 0.2}, {"a": 0.5, "b": 0.5})
        out = bounds({"a": 0.5, "b": 0.5}, [{"a": 0.6, "b": 0.4}], [n], ("a", "b"))
        for rp in out.values():
            assert rp.min_p <= rp.exp_p <= rp.max_p

    def test_brute_force_guard(self):
        many = [_neighbor(f"n{i}", {"a": 0.5}, {"a": 1.0}) for i in range(13)]
        with pytest.raises(TooManyDevicesError):
            brute_force_bounds({"a": 1.0}, [], many, ("a",))


class TestStopCheck:
    def test_single_room_stops(self):
        assert stop_check({"a": RoomPosterior(1, 1, 1, 1)}) == (True, "a", True)

    def test_strict_separation(self):
        posts = {
            "a": RoomPosterior(0.7, 0.7, 0.9, 0.6),
            "b": RoomPosterior(0.3, 0.3, 0.5, 0.1),
        }
        stop, room, strict = stop_check(posts, "strict")
        assert (stop, room, strict) == (True, "a", True)

    def test_relaxed_condition(self):
        posts = {
            "a": RoomPosterior(0.5, 0.5, 0.9, 0.4),
            "b": RoomPosterior(0.45, 0.45, 0.48, 0.2),
        }
        assert stop_check(posts, "strict")[0] is False
        stop, room, strict = stop_check(posts, "relaxed")
        assert (stop, room, strict) == (True, "a", False)

    def test_strict_considers_every_other_room(self):
        posts = {
            "a": RoomPosterior(0.5, 0.5, 0.8, 0.45),
            "b": RoomPosterior(0.3, 0.3, 0.4, 0.1),
            "c": RoomPosterior(0.2, 0.2, 0.6, 0.1),  # low p but high ceiling
        }
        assert stop_check(posts, "strict")[0] is False


class TestClusterPartition:
    def test_components(self):
        devs = ["d2", "d3", "d4", "d5", "d6"]
        aff = {
            frozenset(("d2", "d3")): 0.4,
            frozenset(("d3", "d4")): 0.2,
            frozenset(("d5", "d6")): 0.7,
        }
        assert cluster_partition(devs, aff) == [("d2", "d3", "d4"), ("d5", "d6")]

    def test_all_zero_yields_singletons(self):
        assert cluster_partition(["a", "b"], {}) == [("a",), ("b",)]

    def test_complete_graph_is_one_cluster(self):
        aff = {frozenset(p): 1.0 for p in (("a", "b"), ("b", "c"), ("a", "c"))}
        assert cluster_partition(["c", "a", "b"], aff) == [("a", "b", "c")]


class TestPosteriorDependent:
    def test_full_certainty_cluster(self):
        assert posterior_dependent({"a": 0.5}, {"a": [1.0]})["a"] == 1.0

    def test_all_zero_clusters(self):
        post = posterior_dependent({"a": 0.5}, {"a": [0.0, 0.0]})
        assert post["a"] == pytest.approx(1 / 3)

    def test_two_half_clusters(self):
        post = posterior_dependent({"a": 0.5}, {"a": [0.5, 0.5]})
        assert post["a"] == pytest.approx(0.4)


def _two_room_setup():
    space = SpaceModel(
        regions={"gx": Region("gx", ("r1", "r2")), "gy": Region("gy", ("r2",))},
        rooms={"r1": Room(PUBLIC), "r2": Room(PUBLIC)},
        devices={"q": Device(), "n": Device()},
    )
    table = [
        tup("q1", "q", "gx", 0, 100),
        tup("q2", "q", "gx", 200, 300),
        tup("n1", "n", "gx", 0, 100),
        tup("n2", "n", "gy", 200, 300),
    ]
    return build_store(space, table)


class TestFineLocalize:
    def test_single_room_region_short_circuits(self):
        store = _two_room_setup()
        answer = fine_localize(store, "q", 250, "gy")
        assert answer.value == "r2"
        assert answer.distribution == {"r2": 1.0}
        assert answer.processed_neighbors == 0

    def test_no_neighbors_falls_back_to_prior(self):
        store = _two_room_setup()
        answer = fine_localize(store, "q", 250, "gx", neighbor_list=[])
        assert answer.value == "r1"  # uniform prior, lexicographic tie-break
        assert sum(answer.distribution.values()) == pytest.approx(1.0)

    def test_neighbor_in_narrower_region_settles_the_room(self):
        # the neighbor's own region covers only r2, so r1 is ruled out
        store = _two_room_setup()
        for variant in ("independent", "dependent"):
            config = EngineConfig(variant=variant)
            answer = fine_localize(store, "q", 250, "gx", config=config)
            assert answer.value == "r2", variant
            assert answer.distribution["r2"] > answer.distribution["r1"]
        independent = fine_localize(
            store, "q", 250, "gx", config=EngineConfig(variant="independent")
        )
        assert independent.distribution["r1"] == 0.0

    def test_dependent_variant_stops_on_a_dead_cluster(self):
        store = _two_room_setup()
        answer = fine_localize(store, "q", 250, "gx", config=EngineConfig())
        assert answer.processed_neighbors == 1
