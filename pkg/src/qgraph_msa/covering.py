"""
Packing and covering geometry on metric graphs.

A packing V_{R,r}(v0) is a maximal set of centers whose r-balls are pairwise
edge-disjoint and contained in the R-ball at v0. Containers absorb the bad
raster balls of one scale into at most three disjoint balls with radii from
{3r+2U, 63r/10+11U, 48r/5+41U/2}. Every construction is verified on edge sets
before it is returned.

Packings scan candidate centers farthest-first from v0 (ties by vertex id)
instead of in breadth-first order. Both orders give maximal packings; the
farthest-first scan packs segments optimally.
"""

from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from .exceptions import GeometryError
from .graph_core import BALL_TOL, MetricGraph, ball, ball_edge_set
from .models import Container, ContainerSet, Packing

# radius (in units of U) below which the covering construction is not guaranteed
GEOMETRY_THRESHOLD = 300.0


def container_radii(r: float, U: float) -> Tuple[float, float, float]:
    return (3 * r + 2 * U, 63 * r / 10 + 11 * U, 48 * r / 5 + 41 * U / 2)


def packing_cardinality_bounds(
    R: float, r: float, U: float, c_P: float, d: float
) -> Tuple[float, float]:
    """Lower and upper bounds on |V_{R,r}| for a graph of growth (c_P, d)."""
    return R / (c_P * (3 * r + 5 * U) ** d), c_P * R**d / r


def _check_regime(
    r: float, bound: float, allow_outside_regime: bool, what: str, inclusive: bool = False
):
    if r > bound or (inclusive and r >= bound):
        return
    if not allow_outside_regime:
        raise GeometryError(f"{what} needs r above {bound}, got r = {r}")
    logger.warning(f"{what} at r = {r} runs outside proof regime (threshold {bound})")


def maximal_packing(g: MetricGraph, v0: int, R: float, r: float) -> Packing:
    """
    Greedy maximal packing of r-balls inside the R-ball at v0.

    Candidates are visited farthest-first (by distance from v0, ties by vertex
    id), which packs segments optimally; disjointness and containment are
    re-verified on the result.
    """
    if r < g.u:
        raise GeometryError(f"packing radius {r} below the minimal edge length {g.u}")
    if R < r:
        raise GeometryError(f"outer radius {R} smaller than packing radius {r}")
    region = ball(g, v0, R).edge_set
    dist = g.vertex_distances(v0, limit=R + g.U)
    candidates = np.flatnonzero(np.isfinite(dist))
    order = sorted(candidates.tolist(), key=lambda v: (-dist[v], v))

    used: set = set()
    centers: List[int] = []
    balls: Dict[int, FrozenSet[int]] = {}
    for v in order:
        edges = ball_edge_set(g, v, r)
        balls[v] = edges
        if edges <= region and not (edges & used):
            centers.append(v)
            used |= edges

    if sum(len(balls[c]) for c in centers) != len(used):
        raise GeometryError("packing balls overlap")
    chosen = set(centers)
    for v in order:
        if v not in chosen and balls[v] <= region and not (balls[v] & used):
            raise GeometryError(f"packing not maximal: vertex {v} can be added")
    return Packing(center=v0, outer_radius=R, radius=r, centers=centers)


def verify_covering(
    g: MetricGraph, v0: int, R: float, r: float, packing: Packing
) -> Tuple[bool, List[int]]:
    """Check that the (3r+5U)-balls at the packing centers cover the R-ball."""
    region = ball_edge_set(g, v0, R)
    covered: set = set()
    for c in packing.centers:
        covered |= ball_edge_set(g, c, 3 * r + 5 * g.U)
    uncovered = sorted(region - covered)
    return not uncovered, uncovered


def fine_raster(g: MetricGraph, x: int, R: float, r: float) -> Packing:
    """The raster V_{R, r/10}(x)."""
    return maximal_packing(g, x, R, r / 10.0)


def _one_center(g: MetricGraph, candidates: Sequence[int], targets: Sequence[int]) -> int:
    """Candidate minimising the largest distance to the targets (ties by id)."""
    reach = np.max([g.vertex_distances(t) for t in targets], axis=0)
    return min(candidates, key=lambda v: (reach[v], v))


def disjoint_representatives(
    g: MetricGraph, centers: Iterable[int], r: float
) -> List[int]:
    """Greedy set of centers (ascending ids) whose r-balls are pairwise edge-disjoint."""
    balls = {c: ball_edge_set(g, c, r) for c in sorted(set(centers))}
    chosen: List[int] = []
    for c, edges in balls.items():
        if all(not (edges & balls[rep]) for rep in chosen):
            chosen.append(c)
    return chosen


def build_containers(
    g: MetricGraph,
    x: int,
    R: float,
    r: float,
    bad_centers: Sequence[int],
    raster: Optional[Packing] = None,
    allow_outside_regime: bool = False,
) -> ContainerSet:
    """Absorb the bad raster balls into at most three disjoint containers."""
    U = g.U
    _check_regime(r, GEOMETRY_THRESHOLD * U, allow_outside_regime, "container construction")
    raster = raster or fine_raster(g, x, R, r)
    raster_set = set(raster.centers)
    strays = [b for b in bad_centers if b not in raster_set]
    if strays:
        raise GeometryError(f"bad center {strays[0]} is not a raster point")

    bad_balls = {b: ball_edge_set(g, b, r) for b in sorted(set(bad_centers))}
    representatives = disjoint_representatives(g, bad_centers, r)
    if len(representatives) > 3:
        raise GeometryError(
            f"{len(representatives)} disjoint bad balls: "
            "the sample lies outside the good-geometry event"
        )

    radii = container_radii(r, U)
    containers = [Container(center=b, radius=radii[0], level=0) for b in representatives]
    members = [[b] for b in representatives]
    while True:
        edges = [ball_edge_set(g, c.center, c.radius) for c in containers]
        pair = next(
            (
                (i, j)
                for i in range(len(containers))
                for j in range(i + 1, len(containers))
                if edges[i] & edges[j]
            ),
            None,
        )
        if pair is None:
            break
        i, j = pair
        level = max(containers[i].level, containers[j].level) + 1
        if level > 2:
            raise GeometryError("container merge exceeds the third radius level")
        group = members[i] + members[j]
        center = _one_center(g, raster.centers, group)
        merged = Container(center=center, radius=radii[level], level=level)
        logger.debug(
            f"Merged containers at {containers[i].center} and {containers[j].center} "
            f"into level {level} at {center}"
        )
        containers[i], members[i] = merged, group
        del containers[j], members[j]

    result = ContainerSet(r=r, U=U, containers=containers)
    absorbed = [ball_edge_set(g, c.center, c.radius) for c in containers]
    for b, edges in bad_balls.items():
        if not any(edges <= box for box in absorbed):
            raise GeometryError(f"bad ball at {b} is not inside a container")
    if result.radius_sum > radii[2] + BALL_TOL:
        raise GeometryError(f"container radii sum {result.radius_sum} exceeds {radii[2]}")
    return result


def boundary_cover(
    g: MetricGraph,
    x: int,
    R: float,
    r: float,
    container: Optional[Container],
    raster: Optional[Packing] = None,
    allow_outside_regime: bool = False,
) -> List[int]:
    """Raster points whose r/3-balls cover the outer annulus of a container."""
    _check_regime(r, GEOMETRY_THRESHOLD * g.U, allow_outside_regime, "boundary cover")
    if container is None:
        return []
    raster = raster or fine_raster(g, x, R, r)
    inside = ball_edge_set(g, container.center, container.radius)
    annulus = inside - ball_edge_set(g, container.center, container.radius - 3 * g.U)
    cover: List[int] = []
    reached: set = set()
    for w in raster.centers:
        edges = ball_edge_set(g, w, r / 3.0)
        if edges <= inside or not (edges & annulus):
            continue
        cover.append(w)
        reached |= edges
    if not annulus <= reached:
        raise GeometryError(
            f"container annulus at {container.center} not covered: edge {min(annulus - reached)}"
        )
    return cover


def raster_cover(
    g: MetricGraph,
    x: int,
    R: float,
    r: float,
    v: int,
    s: float,
    raster: Optional[Packing] = None,
    allow_outside_regime: bool = False,
) -> List[int]:
    """Raster points within s + r/3 of v whose r/3-balls cover Lambda_s(v)."""
    _check_regime(r, 180.0 * g.U, allow_outside_regime, "raster cover", inclusive=True)
    raster = raster or fine_raster(g, x, R, r)
    target = ball_edge_set(g, v, s)
    dist = g.vertex_distances(v, limit=s + r / 3.0 + BALL_TOL)
    chosen: List[int] = []
    reached: set = set()
    for w in raster.centers:
        if not np.isfinite(dist[w]):
            continue
        edges = ball_edge_set(g, w, r / 3.0)
        if edges & target:
            chosen.append(w)
            reached |= edges
    if not target <= reached:
        raise GeometryError(f"ball at {v} of radius {s} not covered by raster balls")
    return chosen
