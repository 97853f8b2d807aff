import pytest

from qgraph_msa.covering import (
    boundary_cover,
    build_containers,
    container_radii,
    disjoint_representatives,
    fine_raster,
    maximal_packing,
    packing_cardinality_bounds,
    raster_cover,
    verify_covering,
)
from qgraph_msa.exceptions import GeometryError
from qgraph_msa.graph_core import ball_edge_set, build_lattice_graph
from qgraph_msa.models import Container

# Z^1 box [-120, 120]; coordinate c is vertex c + 120
LINE = build_lattice_graph(1, 120)
X = 120


def at(c: int) -> int:
    return c + X


def test_container_radii():
    assert container_radii(10.0, 1.0) == pytest.approx((32.0, 74.0, 116.5))


def test_packing_on_chain_is_optimal(long_chain):
    packing = maximal_packing(long_chain, 40, 30.0, 3.0)
    coords = sorted(c - 40 for c in packing.centers)
    assert coords == [-27, -21, -15, -9, -3, 3, 9, 15, 21, 27]
    # farthest candidates come first, the lower id breaking the tie
    assert packing.centers[:2] == [40 - 27, 40 + 27]
    lower, upper = packing_cardinality_bounds(30.0, 3.0, 1.0, c_P=2.0, d=1.0)
    assert lower <= packing.cardinality <= upper


def test_packing_balls_are_disjoint_and_cover():
    square = build_lattice_graph(2, 14)
    center = square.vertex_at((0, 0))
    packing = maximal_packing(square, center, 10.0, 2.0)
    balls = [ball_edge_set(square, c, 2.0) for c in packing.centers]
    assert sum(len(b) for b in balls) == len(frozenset().union(*balls))
    covered, uncovered = verify_covering(square, center, 10.0, 2.0, packing)
    assert covered
    assert uncovered == []


def test_packing_rejects_inverted_radii(chain):
    with pytest.raises(GeometryError):
        maximal_packing(chain, 20, 2.0, 3.0)


def test_fine_raster_uses_tenth_radius():
    raster = fine_raster(LINE, X, 100.0, 10.0)
    assert raster.radius == pytest.approx(1.0)
    assert sorted(c - X for c in raster.centers) == [c for c in range(-99, 100, 2)]


def test_disjoint_representatives_prefer_low_ids():
    assert disjoint_representatives(LINE, [at(3), at(1)], 10.0) == [at(1)]
    assert disjoint_representatives(LINE, [at(41), at(1)], 10.0) == [at(1), at(41)]


def test_overlapping_bad_balls_share_one_container():
    result = build_containers(LINE, X, 100.0, 10.0, [at(1), at(3)], allow_outside_regime=True)
    assert len(result.containers) == 1
    assert result.containers[0].center == at(1)
    assert result.containers[0].radius == pytest.approx(32.0)
    assert result.containers[0].level == 0


def test_touching_containers_merge_to_next_level():
    result = build_containers(LINE, X, 100.0, 10.0, [at(1), at(41)], allow_outside_regime=True)
    assert len(result.containers) == 1
    merged = result.containers[0]
    assert merged.level == 1
    assert merged.center == at(21)
    assert merged.radius == pytest.approx(74.0)
    assert result.radius_sum <= container_radii(10.0, 1.0)[2]


def test_four_disjoint_bad_balls_leave_good_geometry():
    bad = [at(-39), at(1), at(41), at(81)]
    with pytest.raises(GeometryError):
        build_containers(LINE, X, 100.0, 10.0, bad, allow_outside_regime=True)


def test_containers_below_threshold_need_opt_in():
    with pytest.raises(GeometryError):
        build_containers(LINE, X, 100.0, 10.0, [at(1)])


def test_bad_center_must_be_raster_point():
    with pytest.raises(GeometryError):
        build_containers(LINE, X, 100.0, 10.0, [at(2)], allow_outside_regime=True)


def test_no_bad_balls_means_no_containers():
    result = build_containers(LINE, X, 100.0, 10.0, [], allow_outside_regime=True)
    assert result.containers == []
    assert result.radius_sum == 0


@pytest.mark.slow
def test_boundary_cover_in_proof_regime():
    g = build_lattice_graph(1, 1600)
    x = 1600
    container = Container(center=x, radius=container_radii(301.0, 1.0)[0], level=0)
    cover = boundary_cover(g, x, 1500.0, 301.0, container)
    assert cover
    reached = frozenset().union(*(ball_edge_set(g, w, 301.0 / 3) for w in cover))
    annulus = ball_edge_set(g, x, 905.0) - ball_edge_set(g, x, 902.0)
    assert annulus <= reached


def test_boundary_cover_without_container_is_empty():
    assert boundary_cover(LINE, X, 100.0, 10.0, None, allow_outside_regime=True) == []


def test_raster_cover_covers_target_ball():
    chosen = raster_cover(LINE, X, 60.0, 12.0, X, 10.0, allow_outside_regime=True)
    reached = frozenset().union(*(ball_edge_set(LINE, w, 4.0) for w in chosen))
    assert ball_edge_set(LINE, X, 10.0) <= reached


def test_raster_cover_below_threshold_needs_opt_in():
    with pytest.raises(GeometryError):
        raster_cover(LINE, X, 60.0, 12.0, X, 10.0)
