"""
Spectral Toolkit for Random Quantum Graphs

This package checks, numerically and statistically, the inputs of a multiscale
analysis for random Schroedinger operators on metric graphs of polynomial growth.

Pipeline Steps:
1. Graph Construction: metric graphs, balls, packings and containers
2. Operator Assembly: (P, L) vertex conditions, alloy potentials, finite elements
3. Spectral Analysis: eigenvalues, counting functions, resolvent block norms
4. Estimates: Wegner, initial length scale, Combes-Thomas, good balls
5. Multiscale Step: parameter feasibility, prefactors, induction-step sampling
"""

from .exceptions import (
    ConvergenceError,
    GeometryError,
    ParameterError,
    QGraphError,
    ResonanceError,
)
from .graph_core import (
    InducedSubgraph,
    MetricGraph,
    ball,
    build_cayley_graph,
    build_lattice_graph,
    interior_exterior,
)
from .hamiltonian import AssembledOperator, assemble, make_vertex_condition, sample_potential
from .models import EstimateReport, ExperimentConfig, MsaParams, RandomPotentialSpec
from .msa import validate_params
from .pipeline import ExperimentPipeline

__all__ = [
    "QGraphError",
    "GeometryError",
    "ResonanceError",
    "ParameterError",
    "ConvergenceError",
    "MetricGraph",
    "InducedSubgraph",
    "ball",
    "interior_exterior",
    "build_lattice_graph",
    "build_cayley_graph",
    "AssembledOperator",
    "assemble",
    "make_vertex_condition",
    "sample_potential",
    "RandomPotentialSpec",
    "EstimateReport",
    "ExperimentConfig",
    "MsaParams",
    "validate_params",
    "ExperimentPipeline",
]
