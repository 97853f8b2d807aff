"""
Metric graphs, the path metric on edge-interior points, balls and induced subgraphs.

Vertices and edges carry dense integer ids. Distances between vertices come from
Dijkstra on the vertex skeleton; points inside an edge reach the skeleton through
the two endpoints of their edge. A ball E(v0, r) is the set of edges carrying an
interior point at distance <= r from v0, i.e. the edges with an endpoint closer
than r.
"""

import itertools
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .exceptions import GeometryError
from .models import Edge, GraphPoint, GrowthEstimate, GrowthSample

# slack for comparisons of summed edge lengths against radii
BALL_TOL = 1e-9


class MetricGraph(BaseModel):
    """Finite connected metric graph with edge lengths in [u, U]."""

    model_config = ConfigDict(frozen=True)

    vertices: List[int]
    edges: List[Edge]
    u: float = Field(gt=0, description="Uniform lower bound on edge lengths")
    U: float = Field(gt=0, description="Uniform upper bound on edge lengths")
    coordinates: Optional[List[Tuple[int, ...]]] = Field(
        default=None, description="Group element of each vertex (lattice and Cayley builders)"
    )
    outer_vertices: List[int] = Field(
        default_factory=list,
        description="Vertices on the artificial boundary of a finite box",
    )

    _incidence: Optional[List[List[Tuple[int, int]]]] = PrivateAttr(default=None)
    _skeleton: Optional[csr_matrix] = PrivateAttr(default=None)
    _coord_index: Optional[Dict[Tuple[int, ...], int]] = PrivateAttr(default=None)
    _edge_index: Optional[Dict[Tuple[int, int], List[int]]] = PrivateAttr(default=None)
    _arrays: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _check_graph(self) -> "MetricGraph":
        n = len(self.vertices)
        if self.vertices != list(range(n)):
            raise ValueError("vertex ids must be dense integers 0..n-1")
        if not self.edges:
            raise ValueError("a metric graph needs at least one edge")
        if [e.id for e in self.edges] != list(range(len(self.edges))):
            raise ValueError("edge ids must be dense integers 0..m-1 in order")
        if not 0 < self.u <= self.U:
            raise ValueError("edge bounds need 0 < u <= U")
        touched = np.zeros(n, dtype=bool)
        for e in self.edges:
            if e.i >= n or e.j >= n:
                raise ValueError(f"edge {e.id} references a missing vertex")
            if not self.u - 1e-12 <= e.length <= self.U + 1e-12:
                raise ValueError(f"edge {e.id} length {e.length} outside [u, U]")
            touched[e.i] = touched[e.j] = True
        if not touched.all():
            raise ValueError(f"isolated vertex {int(np.flatnonzero(~touched)[0])}")
        if self.coordinates is not None and len(self.coordinates) != n:
            raise ValueError("coordinates must list one entry per vertex")
        heads = [e.i for e in self.edges]
        tails = [e.j for e in self.edges]
        adjacency = csr_matrix((np.ones(len(heads)), (heads, tails)), shape=(n, n))
        components, _ = connected_components(adjacency, directed=False)
        if components != 1:
            raise ValueError(f"graph is disconnected ({components} components)")
        return self

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def _edge_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._arrays is None:
            self._arrays = (
                np.array([e.i for e in self.edges], dtype=np.int64),
                np.array([e.j for e in self.edges], dtype=np.int64),
                np.array([e.length for e in self.edges], dtype=float),
            )
        return self._arrays

    @property
    def heads(self) -> np.ndarray:
        return self._edge_arrays()[0]

    @property
    def tails(self) -> np.ndarray:
        return self._edge_arrays()[1]

    @property
    def lengths(self) -> np.ndarray:
        return self._edge_arrays()[2]

    def edge(self, e: int) -> Edge:
        if not 0 <= e < self.num_edges:
            raise ValueError(f"missing edge {e}")
        return self.edges[e]

    def has_vertex(self, v: int) -> bool:
        return 0 <= v < self.num_vertices

    def incidence(self, v: int) -> List[Tuple[int, int]]:
        """Edge ends at v as (edge id, end) sorted; end 0 is i(e), end 1 is j(e)."""
        if self._incidence is None:
            table: List[List[Tuple[int, int]]] = [[] for _ in self.vertices]
            for e in self.edges:
                table[e.i].append((e.id, 0))
                table[e.j].append((e.id, 1))
            self._incidence = [sorted(ends) for ends in table]
        return self._incidence[v]

    def degree(self, v: int) -> int:
        return len(self.incidence(v))

    def _skeleton_matrix(self) -> csr_matrix:
        if self._skeleton is None:
            shortest: Dict[Tuple[int, int], float] = {}
            for e in self.edges:
                if e.i == e.j:
                    continue
                key = (min(e.i, e.j), max(e.i, e.j))
                shortest[key] = min(shortest.get(key, np.inf), e.length)
            rows = [k[0] for k in shortest]
            cols = [k[1] for k in shortest]
            n = self.num_vertices
            self._skeleton = csr_matrix(
                (list(shortest.values()), (rows, cols)), shape=(n, n)
            )
        return self._skeleton

    def vertex_distances(self, source: int, limit: float = np.inf) -> np.ndarray:
        """Skeleton distances from one vertex; entries beyond limit are inf."""
        if not self.has_vertex(source):
            raise ValueError(f"missing vertex {source}")
        return dijkstra(self._skeleton_matrix(), directed=False, indices=source, limit=limit)

    def distances_from_set(self, sources: Iterable[int], limit: float = np.inf) -> np.ndarray:
        """Distance of every vertex to the nearest source."""
        indices = sorted(set(sources))
        if not indices:
            return np.full(self.num_vertices, np.inf)
        return dijkstra(
            self._skeleton_matrix(), directed=False, indices=indices, limit=limit, min_only=True
        )

    def vertex_at(self, coords: Sequence[int]) -> Optional[int]:
        if self.coordinates is None:
            raise ValueError("graph carries no group coordinates")
        if self._coord_index is None:
            self._coord_index = {c: v for v, c in enumerate(self.coordinates)}
        return self._coord_index.get(tuple(coords))

    def edges_between(self, a: int, b: int) -> List[int]:
        if self._edge_index is None:
            index: Dict[Tuple[int, int], List[int]] = {}
            for e in self.edges:
                index.setdefault((min(e.i, e.j), max(e.i, e.j)), []).append(e.id)
            self._edge_index = index
        return self._edge_index.get((min(a, b), max(a, b)), [])


class InducedSubgraph(BaseModel):
    """Subgraph spanned by an edge subset, with its inner/boundary vertex split."""

    model_config = ConfigDict(frozen=True)

    parent: MetricGraph
    edge_ids: Tuple[int, ...]
    inner_vertices: Tuple[int, ...]
    boundary_vertices: Tuple[int, ...]

    @model_validator(mode="after")
    def _check_partition(self) -> "InducedSubgraph":
        if list(self.edge_ids) != sorted(set(self.edge_ids)):
            raise ValueError("edge ids must be sorted and unique")
        edge_set = set(self.edge_ids)
        spanned = set()
        for e in self.edge_ids:
            edge = self.parent.edge(e)
            spanned.update((edge.i, edge.j))
        inner, boundary = set(self.inner_vertices), set(self.boundary_vertices)
        if inner & boundary or inner | boundary != spanned:
            raise ValueError("inner and boundary vertices must partition the spanned vertices")
        for v in inner:
            if any(e not in edge_set for e, _ in self.parent.incidence(v)):
                raise ValueError(f"vertex {v} has an outside edge but is marked inner")
        return self

    @property
    def edge_set(self) -> FrozenSet[int]:
        return frozenset(self.edge_ids)

    @property
    def vertices(self) -> Tuple[int, ...]:
        return tuple(sorted(self.inner_vertices + self.boundary_vertices))

    @property
    def is_empty(self) -> bool:
        return not self.edge_ids

    def __len__(self) -> int:
        return len(self.edge_ids)


def induce(g: MetricGraph, edge_ids: Iterable[int]) -> InducedSubgraph:
    """Induced subgraph of an edge subset."""
    edges = sorted(set(edge_ids))
    edge_set = set(edges)
    spanned = set()
    for e in edges:
        edge = g.edge(e)
        spanned.update((edge.i, edge.j))
    inner = [v for v in sorted(spanned) if all(e in edge_set for e, _ in g.incidence(v))]
    boundary = sorted(spanned.difference(inner))
    return InducedSubgraph(
        parent=g,
        edge_ids=tuple(edges),
        inner_vertices=tuple(inner),
        boundary_vertices=tuple(boundary),
    )


def whole_graph(g: MetricGraph) -> InducedSubgraph:
    return induce(g, range(g.num_edges))


def _anchors(g: MetricGraph, x: GraphPoint) -> List[Tuple[int, float]]:
    if x.vertex is not None:
        if not g.has_vertex(x.vertex):
            raise ValueError(f"missing vertex {x.vertex}")
        return [(x.vertex, 0.0)]
    edge = g.edge(x.edge)
    if not 0.0 < x.t < edge.length:
        raise ValueError(f"parameter {x.t} not interior to edge {edge.id}")
    return [(edge.i, x.t), (edge.j, edge.length - x.t)]


def point_distance(g: MetricGraph, x: GraphPoint, y: GraphPoint) -> float:
    """Path distance between two points of the metric graph."""
    best = np.inf
    if x.edge is not None and x.edge == y.edge:
        best = abs(x.t - y.t)
    targets = _anchors(g, y)
    for vx, off_x in _anchors(g, x):
        dist = g.vertex_distances(vx)
        for vy, off_y in targets:
            best = min(best, off_x + dist[vy] + off_y)
    return float(best)


def ball_edge_set(g: MetricGraph, v0: int, r: float) -> FrozenSet[int]:
    """E(v0, r): edges with an interior point at distance <= r from v0."""
    if r < g.u:
        raise GeometryError(f"radius {r} below the minimal edge length {g.u}")
    dist = g.vertex_distances(v0, limit=r)
    near = np.minimum(dist[g.heads], dist[g.tails]) < r - BALL_TOL
    return frozenset(np.flatnonzero(near).tolist())


def ball(g: MetricGraph, v0: int, r: float, check_ambient: bool = True) -> InducedSubgraph:
    """Ball subgraph Lambda_r(v0); rejects balls reaching the artificial box boundary."""
    edges = ball_edge_set(g, v0, r)
    if check_ambient and g.outer_vertices:
        dist = g.vertex_distances(v0, limit=r)
        reached = [v for v in g.outer_vertices if dist[v] < r - BALL_TOL]
        if reached:
            raise GeometryError(
                f"ball of radius {r} at {v0} touches the ambient boundary at vertex {reached[0]}"
            )
    return induce(g, edges)


def interior_exterior(
    g: MetricGraph, v: int, r: float, check_ambient: bool = True
) -> Tuple[InducedSubgraph, InducedSubgraph]:
    """Interior ball of radius r/3 and exterior annulus E(v, r) minus E(v, r - 3U)."""
    if r < 6 * g.U:
        raise GeometryError(f"radius {r} < 6U = {6 * g.U}: interior and exterior overlap")
    outer = ball(g, v, r, check_ambient=check_ambient)
    interior = induce(g, ball_edge_set(g, v, r / 3.0))
    exterior = induce(g, outer.edge_set - ball_edge_set(g, v, r - 3 * g.U))
    return interior, exterior


def volume(s: InducedSubgraph) -> float:
    return float(sum(s.parent.edge(e).length for e in s.edge_ids))


def subgraph_distance(a: InducedSubgraph, b: InducedSubgraph) -> float:
    """Distance between the point sets of two subgraphs of the same graph."""
    if a.is_empty or b.is_empty:
        return float("inf")
    if a.edge_set & b.edge_set:
        return 0.0
    dist = a.parent.distances_from_set(a.vertices)
    return float(min(dist[v] for v in b.vertices))


def estimate_growth(
    g: MetricGraph, centers: Sequence[int], radii: Sequence[float]
) -> GrowthEstimate:
    """Fit vol(Lambda_r(v)) ~ c_P r^d over the sampled balls."""
    if len(set(radii)) < 2:
        raise ValueError("at least two distinct radii are needed to fit a growth degree")
    samples = [
        GrowthSample(center=v, radius=r, volume=volume(ball(g, v, r)))
        for v in centers
        for r in radii
    ]
    log_r = np.log([s.radius for s in samples])
    log_vol = np.log([s.volume for s in samples])
    degree = float(np.polyfit(log_r, log_vol, 1)[0])
    c_P = max(s.volume / s.radius**degree for s in samples)
    logger.debug(f"Growth fit: d = {degree:.3f}, c_P = {c_P:.3f} over {len(samples)} balls")
    return GrowthEstimate(c_P=float(c_P), d=degree, samples=samples)


def from_networkx(
    graph: nx.MultiGraph, outer: Iterable = (), keep_coordinates: bool = True
) -> MetricGraph:
    """Convert a networkx multigraph with 'length' edge data; nodes are ordered by label."""
    nodes = sorted(graph.nodes)
    index = {node: k for k, node in enumerate(nodes)}
    records = []
    for a, b, data in graph.edges(data=True):
        i, j = sorted((index[a], index[b]))
        records.append((i, j, float(data["length"])))
    records.sort()
    edges = [Edge(id=k, i=i, j=j, length=length) for k, (i, j, length) in enumerate(records)]
    lengths = [length for _, _, length in records]
    return MetricGraph(
        vertices=list(range(len(nodes))),
        edges=edges,
        u=min(lengths),
        U=max(lengths),
        coordinates=[tuple(node) for node in nodes] if keep_coordinates else None,
        outer_vertices=sorted(index[node] for node in outer),
    )


def to_networkx(g: MetricGraph) -> nx.MultiGraph:
    graph = nx.MultiGraph()
    graph.add_nodes_from(g.vertices)
    for e in g.edges:
        graph.add_edge(e.i, e.j, key=e.id, length=e.length)
    return graph


def build_lattice_graph(d: int, extent: int, edge_len: float = 1.0) -> MetricGraph:
    """Box [-extent, extent]^d of the Z^d lattice with uniform edge length."""
    if d not in (1, 2, 3):
        raise ValueError(f"lattice dimension {d} not supported (1, 2 or 3)")
    if extent < 1:
        raise ValueError("extent must be >= 1")
    if edge_len <= 0:
        raise ValueError("edge length must be positive")
    side = range(-extent, extent + 1)
    graph = nx.MultiGraph()
    graph.add_nodes_from(itertools.product(side, repeat=d))
    for node in list(graph.nodes):
        for axis in range(d):
            if node[axis] < extent:
                step = node[:axis] + (node[axis] + 1,) + node[axis + 1 :]
                graph.add_edge(node, step, length=edge_len)
    outer = [node for node in graph.nodes if max(abs(c) for c in node) == extent]
    return from_networkx(graph, outer=outer)


def build_cayley_graph(
    generators: Sequence[Tuple[Sequence[int], float]], extent: int
) -> MetricGraph:
    """
    Metric Cayley graph of Z^d: word ball of the given extent, edges (g, g + s).

    The support is a word-metric ball, so the standard generators of Z^2 give the
    diamond |x| + |y| <= extent rather than the box of build_lattice_graph.
    """
    if not generators:
        raise ValueError("empty generator set")
    if extent < 1:
        raise ValueError("extent must be >= 1")
    steps = [(tuple(int(c) for c in s), float(length)) for s, length in generators]
    dims = {len(s) for s, _ in steps}
    if len(dims) != 1:
        raise ValueError("generators must share one dimension")
    for s, length in steps:
        if length <= 0:
            raise ValueError(f"generator {s} has non-positive length {length}")
    d = dims.pop()
    origin = (0,) * d
    depth = {origin: 0}
    frontier = [origin]
    for level in range(1, extent + 1):
        fresh = []
        for node in frontier:
            for s, _ in steps:
                for sign in (1, -1):
                    image = tuple(a + sign * b for a, b in zip(node, s))
                    if image not in depth:
                        depth[image] = level
                        fresh.append(image)
        frontier = fresh
    graph = nx.MultiGraph()
    graph.add_nodes_from(depth)
    for node in sorted(depth):
        for s, length in steps:
            image = tuple(a + b for a, b in zip(node, s))
            if image in depth:
                graph.add_edge(node, image, length=length)
    outer = [node for node, level in depth.items() if level == extent]
    return from_networkx(graph, outer=outer)


def shift_edge(g: MetricGraph, e: int, k: Sequence[int]) -> Optional[int]:
    """Image of edge e under translation by the group element k, if it lies in the box."""
    edge = g.edge(e)
    if len(g.coordinates[edge.i]) != len(k) or len(g.coordinates[edge.j]) != len(k):
        return None
    a = g.vertex_at(tuple(x + y for x, y in zip(g.coordinates[edge.i], k)))
    b = g.vertex_at(tuple(x + y for x, y in zip(g.coordinates[edge.j], k)))
    if a is None or b is None:
        return None
    for candidate in g.edges_between(a, b):
        if abs(g.edge(candidate).length - edge.length) < 1e-12:
            return candidate
    return None


def append_pendant_edge(g: MetricGraph, v: int, length: float) -> MetricGraph:
    """Attach a new edge from v to a fresh leaf; existing ids are kept."""
    if not g.has_vertex(v):
        raise ValueError(f"missing vertex {v}")
    if length <= 0:
        raise ValueError("edge length must be positive")
    u, U = min(g.u, length), max(g.U, length)
    if (u, U) != (g.u, g.U):
        logger.warning(f"Pendant length {length} widens edge bounds to [{u}, {U}]")
    leaf = g.num_vertices
    edges = list(g.edges) + [Edge(id=g.num_edges, i=v, j=leaf, length=length)]
    coordinates = None
    if g.coordinates is not None:
        # leaf sits off the group: its key extends the anchor by its own id
        coordinates = list(g.coordinates) + [tuple(g.coordinates[v]) + (leaf,)]
    return MetricGraph(
        vertices=list(range(leaf + 1)),
        edges=edges,
        u=u,
        U=U,
        coordinates=coordinates,
        outer_vertices=list(g.outer_vertices),
    )


def save_graph(g: MetricGraph, path: str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(g.model_dump_json(indent=2, exclude_none=True), encoding="utf-8")
    return target


def load_graph(path: str) -> MetricGraph:
    return MetricGraph.model_validate_json(Path(path).read_text(encoding="utf-8"))
