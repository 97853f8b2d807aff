import math

import pytest

from qgraph_msa.graph_core import MetricGraph, build_lattice_graph
from qgraph_msa.hamiltonian import uniform_conditions
from qgraph_msa.models import Edge, RandomPotentialSpec


@pytest.fixture
def make_edge():
    """Factory for a single edge [0, length] between two vertices."""

    def build(length: float = math.pi) -> MetricGraph:
        return MetricGraph(
            vertices=[0, 1],
            edges=[Edge(id=0, i=0, j=1, length=length)],
            u=length,
            U=length,
        )

    return build


@pytest.fixture
def chain():
    """Z^1 box [-20, 20]; coordinate c is vertex c + 20."""
    return build_lattice_graph(1, 20)


@pytest.fixture
def long_chain():
    """Z^1 box [-40, 40]; coordinate c is vertex c + 40."""
    return build_lattice_graph(1, 40)


@pytest.fixture
def kirchhoff(chain):
    return uniform_conditions(chain, "kirchhoff")


@pytest.fixture
def spec():
    """Uniform couplings on [1, 2] with profile 1."""
    return RandomPotentialSpec()


@pytest.fixture
def free_spec():
    """Support [0, 1]; with couplings 0 the potential vanishes."""
    return RandomPotentialSpec(q_minus=0.0, q_plus=1.0)
