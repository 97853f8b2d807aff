"""
Vertex conditions, random alloy potentials and finite-element assembly of the
Schroedinger operator -d^2/dx^2 + V_omega with (P, L) vertex conditions.

Each edge carries continuous piecewise-linear elements with its own endpoint
degrees of freedom (the decoupled space). Vertex conditions enter through an
explicit basis Z of the constraint space P_v tr_v f = 0 and through the vertex
form <L_v tr_v f, tr_v f>; boundary vertices of a restriction are Dirichlet.
"""

import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.sparse import coo_matrix, csc_matrix, csr_matrix
from scipy.sparse.linalg import splu

from .exceptions import GeometryError
from .graph_core import InducedSubgraph, MetricGraph
from .models import CouplingAssignment, RandomPotentialSpec, VertexConditionSpec

MATRIX_TOL = 1e-10

ConditionMap = Dict[int, "VertexCondition"]


class VertexCondition(BaseModel):
    """Orthogonal projection P_v and symmetric L_v acting on range(1 - P_v)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: str
    P: np.ndarray
    L: np.ndarray

    @field_validator("P", "L", mode="before")
    @classmethod
    def _as_symmetric(cls, value):
        matrix = np.atleast_2d(np.asarray(value, dtype=float))
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError("vertex matrices must be square")
        if np.abs(matrix - matrix.T).max(initial=0.0) > MATRIX_TOL:
            raise ValueError("vertex matrices must be symmetric")
        return (matrix + matrix.T) / 2.0

    @model_validator(mode="after")
    def _check_pair(self) -> "VertexCondition":
        if self.P.shape != self.L.shape or self.P.shape[0] < 1:
            raise ValueError("P and L must share a size >= 1")
        if np.abs(self.P @ self.P - self.P).max() > MATRIX_TOL:
            raise ValueError("P is not a projection")
        Q = np.eye(self.degree) - self.P
        if np.abs(Q @ self.L @ Q - self.L).max() > MATRIX_TOL:
            raise ValueError("L does not act on range(1 - P)")
        return self

    @property
    def degree(self) -> int:
        return self.P.shape[0]

    @property
    def negative_part(self) -> float:
        """S_v with L_v >= -S_v."""
        return max(0.0, -float(np.linalg.eigvalsh(self.L)[0]))

    def constraint_basis(self) -> np.ndarray:
        """Orthonormal basis of range(1 - P), shape (degree, k)."""
        values, vectors = np.linalg.eigh(self.P)
        return vectors[:, values < 0.5]


def make_vertex_condition(
    kind: str,
    degree: int,
    gamma: Optional[float] = None,
    P: Optional[Sequence[Sequence[float]]] = None,
    L: Optional[Sequence[Sequence[float]]] = None,
) -> VertexCondition:
    """
    Build a standard vertex condition.

    dirichlet: P = I. kirchhoff: P = I - J/d, L = 0. delta(gamma): kirchhoff P
    with L = gamma/d^2 J, so that the sum of ingoing derivatives equals
    gamma f(v). neumann: P = 0, L = 0 (free decoupled ends).
    """
    if degree < 1:
        raise ValueError("vertex degree must be >= 1")
    eye = np.eye(degree)
    ones = np.ones((degree, degree))
    zero = np.zeros((degree, degree))
    if kind == "dirichlet":
        return VertexCondition(kind=kind, P=eye, L=zero)
    if kind == "kirchhoff":
        return VertexCondition(kind=kind, P=eye - ones / degree, L=zero)
    if kind == "delta":
        if gamma is None:
            raise ValueError("delta condition needs gamma")
        return VertexCondition(
            kind=kind, P=eye - ones / degree, L=gamma / degree**2 * ones
        )
    if kind == "neumann":
        return VertexCondition(kind=kind, P=zero, L=zero)
    if kind == "custom":
        if P is None or L is None:
            raise ValueError("custom condition needs P and L")
        condition = VertexCondition(kind=kind, P=P, L=L)
        if condition.degree != degree:
            raise ValueError(
                f"custom matrices have size {condition.degree}, vertex degree {degree}"
            )
        return condition
    raise ValueError(f"unknown vertex condition kind {kind}")


def condition_from_spec(spec: VertexConditionSpec, degree: int) -> VertexCondition:
    return make_vertex_condition(spec.kind, degree, gamma=spec.gamma, P=spec.P, L=spec.L)


def uniform_conditions(
    g: MetricGraph, kind: str = "kirchhoff", gamma: Optional[float] = None
) -> ConditionMap:
    return {v: make_vertex_condition(kind, g.degree(v), gamma=gamma) for v in g.vertices}


def conditions_from_spec(
    g: MetricGraph,
    default: VertexConditionSpec,
    overrides: Optional[Dict[int, VertexConditionSpec]] = None,
) -> ConditionMap:
    overrides = overrides or {}
    missing = [v for v in overrides if not g.has_vertex(v)]
    if missing:
        raise ValueError(f"condition override for missing vertex {missing[0]}")
    return {
        v: condition_from_spec(overrides.get(v, default), g.degree(v)) for v in g.vertices
    }


def negative_part_bound(conditions: ConditionMap) -> float:
    return max((c.negative_part for c in conditions.values()), default=0.0)


def potential_norm_bound(spec: RandomPotentialSpec) -> float:
    """C_pot = max(|q_-|, |q_+|) c_+."""
    return spec.C_pot


def form_lower_bound(conditions: ConditionMap, u: float, spec: RandomPotentialSpec) -> float:
    """Uniform lower bound for the spectrum of every restriction."""
    pot_min = min(
        q * c for q in (spec.q_minus, spec.q_plus) for c in (spec.c_minus, spec.c_plus)
    )
    S = negative_part_bound(conditions)
    if S == 0.0:
        return pot_min
    eps = min(u, 1.0 / (4.0 * S))
    return -4.0 * S / eps + pot_min


def sample_potential(
    spec: RandomPotentialSpec,
    seed: int,
    edge_ids: Iterable[int],
    sample_index: int = 0,
) -> CouplingAssignment:
    """
    Draw i.i.d. couplings by inverse CDF.

    Each edge reads from its own Philox stream keyed by (seed, sample, edge), so
    the value of an edge does not depend on which other edges are sampled.
    """
    omega = {}
    for e in edge_ids:
        stream = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(seed, spawn_key=(int(sample_index), int(e))))
        )
        omega[int(e)] = float(spec.inverse_cdf(stream.random()))
    return CouplingAssignment(omega=omega, seed=seed, sample_index=sample_index)


class AssembledOperator:
    """Discretized H^{P,L}(omega) restricted to an induced subgraph."""

    def __init__(
        self,
        sub: InducedSubgraph,
        h: float,
        edge_slices: Dict[int, slice],
        stiffness: csr_matrix,
        vertex_form: csr_matrix,
        potential: csr_matrix,
        potential_sq: csr_matrix,
        mass: csr_matrix,
        Z: csr_matrix,
        omega: Dict[int, float],
        spec: RandomPotentialSpec,
        conditions: ConditionMap,
    ):
        self.sub = sub
        self.h = h
        self.edge_slices = edge_slices
        self.stiffness = stiffness
        self.vertex_form = vertex_form
        self.potential = potential
        self.potential_sq = potential_sq
        self.mass = mass
        self.A = (stiffness + vertex_form + potential).tocsr()
        self.Z = Z
        self.omega = omega
        self.spec = spec
        self.conditions = conditions

        Ar = (Z.T @ self.A @ Z).tocsc()
        Mr = (Z.T @ mass @ Z).tocsc()
        self.Ar = ((Ar + Ar.T) / 2.0).tocsc()
        self.Mr = ((Mr + Mr.T) / 2.0).tocsc()
        # full spectrum, filled lazily by the spectral layer
        self.spectrum_cache: Optional[np.ndarray] = None

    @property
    def parent(self) -> MetricGraph:
        return self.sub.parent

    @property
    def edge_ids(self) -> Tuple[int, ...]:
        return self.sub.edge_ids

    @property
    def dim(self) -> int:
        return self.Ar.shape[0]

    @property
    def n_dofs(self) -> int:
        return self.mass.shape[0]

    def node_positions(self, e: int) -> np.ndarray:
        block = self.edge_slices[e]
        return np.linspace(0.0, self.parent.edge(e).length, block.stop - block.start)

    def lift(self, coefficients: np.ndarray) -> np.ndarray:
        """Reduced coefficients -> nodal values on every edge."""
        return self.Z @ coefficients

    def region_dofs(self, edge_ids: Iterable[int]) -> np.ndarray:
        edges = sorted(set(edge_ids))
        strays = [e for e in edges if e not in self.edge_slices]
        if strays:
            raise GeometryError(f"edge {strays[0]} is not part of the assembled region")
        if not edges:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(
            [np.arange(self.edge_slices[e].start, self.edge_slices[e].stop) for e in edges]
        )

    def region_norm(self, f: np.ndarray, edge_ids: Iterable[int]) -> float:
        dofs = self.region_dofs(edge_ids)
        block = f[dofs]
        return math.sqrt(max(float(block @ (self.mass[dofs][:, dofs] @ block)), 0.0))

    def derivative_norm(self, f: np.ndarray, edge_ids: Iterable[int]) -> float:
        dofs = self.region_dofs(edge_ids)
        block = f[dofs]
        return math.sqrt(max(float(block @ (self.stiffness[dofs][:, dofs] @ block)), 0.0))

    def edge_norms(self, f: np.ndarray) -> Dict[int, Tuple[float, float]]:
        """edge -> (||f||_e, ||f'||_e)."""
        return {e: (self.region_norm(f, [e]), self.derivative_norm(f, [e])) for e in self.edge_ids}

    def quadratic_form(self, f: np.ndarray) -> float:
        return float(f @ (self.A @ f))

    def potential_norm_ratio(self, f: np.ndarray) -> float:
        """||V_omega f|| / ||f|| for nodal values f."""
        denominator = float(f @ (self.mass @ f))
        if denominator <= 0.0:
            return 0.0
        return math.sqrt(float(f @ (self.potential_sq @ f)) / denominator)

    def shifted(self, lam: float) -> csc_matrix:
        return (self.Ar - lam * self.Mr).tocsc()

    def factorize(self, lam: float):
        """Sparse LU of the reduced shifted matrix; owned by the caller."""
        return splu(self.shifted(lam))


def _element_blocks(offset: int, n_el: int, weights: np.ndarray, he: float):
    first = offset + np.arange(n_el)
    second = first + 1
    rows = np.concatenate([first, first, second, second])
    cols = np.concatenate([first, second, first, second])
    stiff = np.concatenate([np.ones(n_el), -np.ones(n_el), -np.ones(n_el), np.ones(n_el)]) / he
    shape = np.concatenate([2 * np.ones(n_el), np.ones(n_el), np.ones(n_el), 2 * np.ones(n_el)])
    mass = shape * he / 6.0
    w = np.tile(weights, 4)
    return rows, cols, stiff, mass, mass * w, mass * w**2


def assemble(
    sub: InducedSubgraph,
    conditions: ConditionMap,
    spec: RandomPotentialSpec,
    omega: Dict[int, float],
    h: Optional[float] = None,
) -> AssembledOperator:
    """Assemble the restriction of H^{P,L}(omega) to sub with Dirichlet boundary vertices."""
    g = sub.parent
    if sub.is_empty:
        raise GeometryError("cannot assemble an empty subgraph")
    h = g.u / 64.0 if h is None else h
    if h > g.u / 8.0 * (1 + 1e-12):
        raise ValueError(f"mesh size {h} exceeds u/8 = {g.u / 8.0}")
    missing = [e for e in sub.edge_ids if e not in omega]
    if missing:
        raise ValueError(f"no coupling for edge {missing[0]}")

    rows, cols, stiff, mass, pot, pot_sq = [], [], [], [], [], []
    edge_slices: Dict[int, slice] = {}
    ends: Dict[Tuple[int, int], int] = {}
    interior: List[int] = []
    offset = 0
    for e in sub.edge_ids:
        length = g.edge(e).length
        coupling = omega[e]
        if not spec.q_minus - 1e-12 <= coupling <= spec.q_plus + 1e-12:
            raise ValueError(f"coupling {coupling} on edge {e} outside the support")
        profile = spec.profile_for(e)
        pieces = profile.size
        n_el = pieces * max(1, math.ceil(length / (h * pieces) - 1e-9))
        he = length / n_el
        weights = coupling * np.repeat(profile, n_el // pieces)
        r_, c_, k_, m_, p_, q_ = _element_blocks(offset, n_el, weights, he)
        rows.append(r_)
        cols.append(c_)
        stiff.append(k_)
        mass.append(m_)
        pot.append(p_)
        pot_sq.append(q_)
        edge_slices[e] = slice(offset, offset + n_el + 1)
        ends[(e, 0)] = offset
        ends[(e, 1)] = offset + n_el
        interior.extend(range(offset + 1, offset + n_el))
        offset += n_el + 1

    n = offset
    rows_all, cols_all = np.concatenate(rows), np.concatenate(cols)

    def _matrix(values: List[np.ndarray]) -> csr_matrix:
        return coo_matrix((np.concatenate(values), (rows_all, cols_all)), shape=(n, n)).tocsr()

    # constraint basis: identity on interior nodes, range(1 - P_v) on inner vertex ends
    z_rows: List[int] = list(interior)
    z_cols: List[int] = list(range(len(interior)))
    z_vals: List[float] = [1.0] * len(interior)
    v_rows: List[int] = []
    v_cols: List[int] = []
    v_vals: List[float] = []
    column = len(interior)
    for v in sub.inner_vertices:
        if v not in conditions:
            raise ValueError(f"no vertex condition at vertex {v}")
        condition = conditions[v]
        incident = g.incidence(v)
        if condition.degree != len(incident):
            raise ValueError(
                f"condition at vertex {v} has size {condition.degree}, degree is {len(incident)}"
            )
        dofs = [ends[end] for end in incident]
        for a, da in enumerate(dofs):
            for b, db in enumerate(dofs):
                if condition.L[a, b] != 0.0:
                    v_rows.append(da)
                    v_cols.append(db)
                    v_vals.append(condition.L[a, b])
        basis = condition.constraint_basis()
        for k in range(basis.shape[1]):
            for a, da in enumerate(dofs):
                if abs(basis[a, k]) > 0.0:
                    z_rows.append(da)
                    z_cols.append(column)
                    z_vals.append(basis[a, k])
            column += 1

    Z = coo_matrix((z_vals, (z_rows, z_cols)), shape=(n, column)).tocsr()
    vertex_form = coo_matrix((v_vals, (v_rows, v_cols)), shape=(n, n)).tocsr()
    op = AssembledOperator(
        sub=sub,
        h=h,
        edge_slices=edge_slices,
        stiffness=_matrix(stiff),
        vertex_form=vertex_form,
        potential=_matrix(pot),
        potential_sq=_matrix(pot_sq),
        mass=_matrix(mass),
        Z=Z,
        omega={e: omega[e] for e in sub.edge_ids},
        spec=spec,
        conditions=conditions,
    )

    trial = np.random.default_rng(0).standard_normal(n)
    if op.potential_norm_ratio(trial) > spec.C_pot * (1 + 1e-9):
        raise ValueError("potential exceeds its norm bound C_pot")
    logger.debug(
        f"Assembled {len(sub.edge_ids)} edges: {n} nodal values, reduced dimension {op.dim}"
    )
    return op
