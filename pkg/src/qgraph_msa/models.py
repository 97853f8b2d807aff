"""
Pydantic data models for the quantum-graph toolkit.

These models define graph records, vertex-condition and potential specs,
experiment reports and the experiment configuration that flow between the
geometry, operator, estimate and orchestration layers.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import cumulative_trapezoid


class Edge(BaseModel):
    """One edge of a metric graph, oriented from i to j."""

    model_config = ConfigDict(frozen=True)

    id: int = Field(ge=0, description="Dense edge id")
    i: int = Field(ge=0, description="Start vertex")
    j: int = Field(ge=0, description="End vertex")
    length: float = Field(gt=0, description="Edge length l(e)")


class GraphPoint(BaseModel):
    """A point of the metric graph: a vertex, or an edge with an interior parameter."""

    model_config = ConfigDict(frozen=True)

    vertex: Optional[int] = None
    edge: Optional[int] = None
    t: Optional[float] = None

    @model_validator(mode="after")
    def _one_kind(self) -> "GraphPoint":
        on_vertex = self.vertex is not None
        on_edge = self.edge is not None or self.t is not None
        if on_vertex == on_edge:
            raise ValueError("a point is either a vertex or (edge, t)")
        if on_edge and (self.edge is None or self.t is None):
            raise ValueError("edge points need both edge and t")
        return self

    @classmethod
    def at_vertex(cls, v: int) -> "GraphPoint":
        return cls(vertex=v)

    @classmethod
    def on_edge(cls, e: int, t: float) -> "GraphPoint":
        return cls(edge=e, t=t)


class VertexConditionSpec(BaseModel):
    """Serialized vertex condition as found in graph and experiment files."""

    kind: Literal["dirichlet", "kirchhoff", "delta", "neumann", "custom"] = Field(
        default="kirchhoff", description="Condition family"
    )
    gamma: Optional[float] = Field(
        default=None, description="Coupling strength for delta conditions"
    )
    P: Optional[List[List[float]]] = Field(
        default=None, description="Projection matrix for custom conditions"
    )
    L: Optional[List[List[float]]] = Field(
        default=None, description="Symmetric matrix for custom conditions"
    )

    @model_validator(mode="after")
    def _kind_fields(self) -> "VertexConditionSpec":
        if self.kind == "delta" and self.gamma is None:
            raise ValueError("delta condition needs gamma")
        if self.kind == "custom" and (self.P is None or self.L is None):
            raise ValueError("custom condition needs P and L")
        return self


class RandomPotentialSpec(BaseModel):
    """
    Alloy-type random potential: single-site profiles and the coupling law.

    The coupling law lives on [q_minus, q_plus]. ``uniform`` is flat,
    ``power_law`` is the pendant-edge example density (power piece of degree
    2d-1 up to y = 2^(-1/(2d)), then constant, in the rescaled variable
    y = (x - q_minus) / (q_plus - q_minus)) and ``tabulated`` interpolates
    density values on a uniform grid.
    """

    q_minus: float = Field(default=1.0, description="Lower end of the coupling support")
    q_plus: float = Field(default=2.0, description="Upper end of the coupling support")
    law: Literal["uniform", "power_law", "tabulated"] = "uniform"
    law_degree: int = Field(default=1, ge=1, description="Degree d of the power law")
    density_values: Optional[List[float]] = Field(
        default=None, description="Density samples for the tabulated law"
    )
    profile: List[float] = Field(
        default_factory=lambda: [1.0],
        description="Piecewise-constant single-site profile on a uniform edge grid",
    )
    edge_profiles: Dict[int, List[float]] = Field(
        default_factory=dict, description="Per-edge profile overrides"
    )
    c_minus: float = Field(default=1.0, gt=0, description="Lower profile bound")
    c_plus: float = Field(default=1.0, gt=0, description="Upper profile bound")
    tau: Optional[float] = Field(default=None, gt=0, description="Disorder exponent")

    @model_validator(mode="after")
    def _check_bounds(self) -> "RandomPotentialSpec":
        if not self.q_minus < self.q_plus:
            raise ValueError("coupling support needs q_minus < q_plus")
        if self.c_minus > self.c_plus:
            raise ValueError("profile bounds need c_minus <= c_plus")
        for label, values in [("profile", self.profile), *self.edge_profiles.items()]:
            if not values:
                raise ValueError(f"empty profile {label}")
            if min(values) < self.c_minus - 1e-12 or max(values) > self.c_plus + 1e-12:
                raise ValueError(
                    f"profile {label} leaves [c_minus, c_plus] = [{self.c_minus}, {self.c_plus}]"
                )
        if self.law == "tabulated":
            values = self.density_values or []
            if len(values) < 2 or min(values) < 0 or sum(values) <= 0:
                raise ValueError("tabulated law needs >= 2 nonnegative density values")
        return self

    @property
    def width(self) -> float:
        return self.q_plus - self.q_minus

    @property
    def disorder_exponent(self) -> float:
        """tau with mu([q_-, q_- + h]) <= h^tau (law default when not given)."""
        if self.tau is not None:
            return self.tau
        if self.law == "power_law":
            return 2.0 * self.law_degree
        return 1.0

    @property
    def C_pot(self) -> float:
        return max(abs(self.q_minus), abs(self.q_plus)) * self.c_plus

    def profile_for(self, edge_id: int) -> np.ndarray:
        return np.asarray(self.edge_profiles.get(edge_id, self.profile), dtype=float)

    # coupling law

    def _power_law_break(self) -> Tuple[float, float]:
        d = self.law_degree
        b = 2.0 ** (-1.0 / (2 * d))
        return b, 1.0 / (2.0 * (1.0 - b))

    def _tabulated(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        rho = np.asarray(self.density_values, dtype=float)
        grid = np.linspace(self.q_minus, self.q_plus, rho.size)
        cum = cumulative_trapezoid(rho, grid, initial=0.0)
        return grid, rho / cum[-1], cum / cum[-1]

    def density(self, x: Any) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = (x - self.q_minus) / self.width
        inside = (y >= 0) & (y <= 1)
        if self.law == "uniform":
            out = np.ones_like(y) / self.width
        elif self.law == "power_law":
            d = self.law_degree
            b, c = self._power_law_break()
            yc = np.clip(y, 0.0, 1.0)
            out = np.where(yc <= b, 2 * d * yc ** (2 * d - 1), c) / self.width
        else:
            grid, rho, _ = self._tabulated()
            out = np.interp(x, grid, rho)
        return np.where(inside, out, 0.0)

    def cdf(self, x: Any) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.clip((x - self.q_minus) / self.width, 0.0, 1.0)
        if self.law == "uniform":
            return y
        if self.law == "power_law":
            d = self.law_degree
            b, c = self._power_law_break()
            return np.where(y <= b, y ** (2 * d), 0.5 + (y - b) * c)
        grid, _, cum = self._tabulated()
        return np.interp(np.clip(x, self.q_minus, self.q_plus), grid, cum)

    def inverse_cdf(self, p: Any) -> np.ndarray:
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        if self.law == "uniform":
            y = p
        elif self.law == "power_law":
            d = self.law_degree
            b, c = self._power_law_break()
            y = np.where(p <= 0.5, p ** (1.0 / (2 * d)), b + (p - 0.5) / c)
        else:
            grid, _, cum = self._tabulated()
            return np.interp(p, cum, grid)
        return self.q_minus + self.width * np.clip(y, 0.0, 1.0)

    @property
    def c_rho(self) -> float:
        """Sup norm of the density."""
        if self.law == "uniform":
            return 1.0 / self.width
        if self.law == "power_law":
            d = self.law_degree
            b, c = self._power_law_break()
            return max(2 * d * b ** (2 * d - 1), c) / self.width
        _, rho, _ = self._tabulated()
        return float(rho.max())

    def modulus_of_continuity(self, eps: float, resolution: int = 4001) -> float:
        """sup over lambda of mu([lambda - eps, lambda + eps])."""
        centers = np.linspace(self.q_minus - eps, self.q_plus + eps, resolution)
        return float(np.max(self.cdf(centers + eps) - self.cdf(centers - eps)))

    def disorder_mass(self, h: float) -> float:
        """mu([q_-, q_- + h])."""
        return float(self.cdf(self.q_minus + h))


class CouplingAssignment(BaseModel):
    """Realized couplings omega_e for a set of edges."""

    omega: Dict[int, float] = Field(description="edge id -> coupling value")
    seed: int = Field(description="Master seed the values derive from")
    sample_index: int = Field(default=0, ge=0)

    def as_array(self, edge_ids: List[int]) -> np.ndarray:
        return np.array([self.omega[e] for e in edge_ids], dtype=float)


class GrowthSample(BaseModel):
    center: int
    radius: float
    volume: float


class GrowthEstimate(BaseModel):
    """Fitted polynomial growth vol(ball(v, r)) <= c_P r^d on sampled balls."""

    c_P: float
    d: float
    samples: List[GrowthSample]


class Packing(BaseModel):
    """Centers whose r-balls are disjoint and contained in the R-ball at center."""

    center: int
    outer_radius: float
    radius: float
    centers: List[int]

    @property
    def cardinality(self) -> int:
        return len(self.centers)


class Container(BaseModel):
    center: int
    radius: float
    level: int = Field(ge=0, le=2, description="0, 1 or 2 merges")


class ContainerSet(BaseModel):
    """Up to three disjoint balls absorbing every bad raster ball."""

    r: float
    U: float
    containers: List[Container] = Field(default_factory=list)

    @property
    def radius_sum(self) -> float:
        return sum(c.radius for c in self.containers)


class GoodBallVerdict(BaseModel):
    """(n, lambda, omega) goodness of one ball."""

    center: int
    radius: float
    lam: float
    n: float
    block_norm: Optional[float] = Field(
        default=None, description="Outer-inner resolvent block norm (None when resonant)"
    )
    resonance_distance: float = Field(description="dist(lambda, spectrum of the restriction)")
    good: bool
    resonant: bool = False


class CountingReport(BaseModel):
    """Counting function on a lambda grid compared with a bound."""

    lambdas: List[float]
    counts: List[int]
    bounds: List[float]
    ok: List[bool]
    verdict: bool
    margin: float
    fitted: Dict[str, float] = Field(default_factory=dict)


class InequalityCheck(BaseModel):
    """A deterministic inequality lhs <= constant * rhs, reported as a ratio."""

    name: str
    lhs: float
    rhs: float
    ratio: float
    holds: Optional[bool] = None
    details: Dict[str, Any] = Field(default_factory=dict)


class EstimateReport(BaseModel):
    """Result of one Monte-Carlo or fitting experiment."""

    experiment: str
    n_samples: int = Field(ge=0)
    seed: Optional[int] = None
    p_hat: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    standard_error: Optional[float] = Field(default=None, ge=0.0)
    bound: Optional[float] = None
    verdict: bool
    fitted: Dict[str, float] = Field(default_factory=dict)
    details: Dict[str, Any] = Field(default_factory=dict)
    outside_proof_regime: bool = False
    rows: List[Dict[str, Any]] = Field(default_factory=list, exclude=True)
    plot: List[Dict[str, float]] = Field(default_factory=list, exclude=True)


class MsaParams(BaseModel):
    """Induction parameters (d, tau, q, xi, alpha, theta, n, beta)."""

    d: float = Field(ge=1)
    tau: float
    q: float
    xi: float
    alpha: float
    theta: float
    n: float
    beta: float
    U: float = Field(default=1.0, gt=0)

    @property
    def r_geom(self) -> float:
        return 300.0 * self.U


class FeasibilityCertificate(BaseModel):
    feasible: bool
    relations: Dict[str, bool]
    intervals: Dict[str, Tuple[float, float]]
    first_violation: Optional[str] = None


class PrefactorReport(BaseModel):
    delta_plus: float
    delta_minus: float
    k_plus_lower: float
    delta_minus_exponent: float
    exponent_negative: bool
    exponent_boundary: bool


class PendantEdgeReport(BaseModel):
    omega: float
    pendant_eigenvalue: float
    expected: float
    base_spectrum_preserved: bool
    max_base_deviation: float
    pendant_levels_found: bool
    verdict: bool


class PendantSpec(BaseModel):
    vertex: int
    length: float = Field(gt=0)


class GraphSource(BaseModel):
    """Either a graph file or a builder description."""

    file: Optional[str] = None
    builder: Optional[Literal["lattice", "cayley"]] = None
    d: int = Field(default=1, ge=1)
    extent: int = Field(default=10, ge=1)
    edge_len: float = Field(default=1.0, gt=0)
    generators: Optional[List[Tuple[List[int], float]]] = None
    pendants: List[PendantSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def _one_source(self) -> "GraphSource":
        if (self.file is None) == (self.builder is None):
            raise ValueError("graph source needs exactly one of file or builder")
        if self.file is not None and not Path(self.file).exists():
            raise ValueError(f"graph file not found: {self.file}")
        if self.builder == "cayley" and not self.generators:
            raise ValueError("cayley builder needs generators")
        return self


ExperimentKind = Literal[
    "build-graph",
    "spectrum",
    "counting",
    "cover",
    "good-ball",
    "wegner",
    "ilse",
    "ct-decay",
    "gri-check",
    "params-validate",
    "msa-step",
    "pendant-edge",
]


class ExperimentConfig(BaseModel):
    """One flat experiment description."""

    kind: ExperimentKind
    seed: int = Field(ge=0, description="Master seed, mandatory for reproducibility")
    graph: Optional[GraphSource] = None
    conditions: VertexConditionSpec = Field(default_factory=VertexConditionSpec)
    condition_overrides: Dict[int, VertexConditionSpec] = Field(default_factory=dict)
    potential: RandomPotentialSpec = Field(default_factory=RandomPotentialSpec)
    n_samples: int = Field(default=100, ge=1)
    mesh: Optional[float] = Field(default=None, gt=0, description="FEM mesh size h")
    params: Dict[str, Any] = Field(default_factory=dict)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _graph_needed(self) -> "ExperimentConfig":
        if self.graph is None and self.kind != "params-validate":
            raise ValueError(f"experiment kind {self.kind} needs a graph source")
        return self


class RunResult(BaseModel):
    status: int
    message: str
    artifacts: Dict[str, str] = Field(default_factory=dict)

