import math

import numpy as np
import pytest

from qgraph_msa.estimates import (
    ball_norm_growth,
    caccioppoli_check,
    check_ilse_parameters,
    chebyshev_grid,
    classify_ball,
    cone_estimate_check,
    ct_decay_experiment,
    eigenfunction_decay_check,
    estimate_G,
    gri_check,
    gri_constant,
    ground_energy,
    ilse_experiment,
    ilse_proof_bound,
    is_good_ball,
    region_pairs_at_distances,
    resonance_test,
    weight_is_summable,
    weighted_norm,
    wegner_experiment,
)
from qgraph_msa.exceptions import GeometryError, ParameterError
from qgraph_msa.graph_core import MetricGraph, ball, ball_edge_set, build_lattice_graph, whole_graph
from qgraph_msa.hamiltonian import assemble, sample_potential, uniform_conditions
from qgraph_msa.models import Edge, RandomPotentialSpec
from qgraph_msa.sampling import passes_upper_bound
from qgraph_msa.spectral import eigenvalues

COARSE = 0.125


def _constant(sub, value=1.5):
    return {e: value for e in sub.edge_ids}


# grids and ground energy


def test_chebyshev_grid_includes_endpoints():
    grid = chebyshev_grid((-2.0, 3.0), 9)
    assert len(grid) == 9
    assert grid[0] == -2.0
    assert grid[-1] == 3.0
    assert grid == sorted(grid)
    # clustered at the ends
    assert grid[1] - grid[0] < grid[5] - grid[4]


def test_chebyshev_grid_degenerate_cases():
    assert chebyshev_grid((1.0, 3.0), 1) == [2.0]
    assert chebyshev_grid((2.0, 2.0), 5) == [2.0]
    with pytest.raises(ValueError):
        chebyshev_grid((3.0, 1.0), 4)


def test_ground_energy_with_neumann_ends(chain, kirchhoff, spec):
    assert ground_energy(chain, kirchhoff, spec, h=COARSE) == pytest.approx(spec.q_minus, abs=1e-9)


# good balls and assertion G


def test_deep_energy_ball_is_good():
    g = build_lattice_graph(1, 30)
    conds = uniform_conditions(g, "kirchhoff")
    spec = RandomPotentialSpec()
    omega = sample_potential(spec, 1, ball(g, 30, 20.0).edge_ids)
    verdict = is_good_ball(g, conds, spec, omega, 30, 20.0, -10.0, 1, h=COARSE)
    assert verdict.good
    assert not verdict.resonant
    assert verdict.block_norm < 20.0**-1
    assert is_good_ball(g, conds, spec, omega, 30, 20.0, -10.0, 0, h=COARSE).good


def test_eigenvalue_makes_ball_resonant(long_chain, spec):
    sub = ball(long_chain, 40, 8.0)
    conds = uniform_conditions(long_chain, "kirchhoff")
    op = assemble(sub, conds, spec, _constant(sub), h=COARSE)
    lowest = eigenvalues(op, count=1)[0]
    verdict = classify_ball(op, 40, 8.0, [lowest], 1)[0]
    assert verdict.resonant
    assert not verdict.good
    assert verdict.block_norm is None


def test_assertion_G_in_a_deep_gap(long_chain, spec):
    conds = uniform_conditions(long_chain, "kirchhoff")
    grid = chebyshev_grid((-21.0, -20.0), 4)
    report = estimate_G(long_chain, conds, spec, grid, 8.0, 1, 1.5, 20, 60, 10, seed=1, h=COARSE)
    assert report.p_hat == 1.0
    assert report.bound == pytest.approx(1 - 8.0**-3)
    assert report.verdict
    assert report.outside_proof_regime
    assert len(report.rows) == 10

    strict = estimate_G(long_chain, conds, spec, grid, 8.0, 1000, 1.5, 20, 60, 5, seed=1, h=COARSE)
    assert strict.p_hat == 0.0
    assert not strict.verdict


def test_assertion_G_rejects_bad_input(long_chain, spec):
    conds = uniform_conditions(long_chain, "kirchhoff")
    with pytest.raises(ValueError):
        estimate_G(long_chain, conds, spec, [-20.0], 8.0, 1, 1.5, 20, 60, 0, seed=1, h=COARSE)
    with pytest.raises(GeometryError):
        estimate_G(long_chain, conds, spec, [-20.0], 8.0, 1, 1.5, 20, 25, 3, seed=1, h=COARSE)


def _relabel_edges(g, perm):
    edges = [
        Edge(id=k, i=g.edge(int(p)).i, j=g.edge(int(p)).j, length=g.edge(int(p)).length)
        for k, p in enumerate(perm)
    ]
    return MetricGraph(
        vertices=g.vertices, edges=edges, u=g.u, U=g.U,
        coordinates=g.coordinates, outer_vertices=g.outer_vertices,
    )


def test_good_ball_verdicts_ignore_edge_labels():
    g = build_lattice_graph(1, 30)
    spec = RandomPotentialSpec()
    omega = sample_potential(spec, 1, range(g.num_edges)).omega
    perm = np.random.default_rng(4).permutation(g.num_edges)
    relabeled = _relabel_edges(g, perm)
    moved = {k: omega[int(p)] for k, p in enumerate(perm)}
    conds = uniform_conditions(g, "kirchhoff")
    moved_conds = uniform_conditions(relabeled, "kirchhoff")
    for lam in (-10.0, 0.5, 3.0):
        before = is_good_ball(g, conds, spec, omega, 30, 20.0, lam, 1, h=COARSE)
        after = is_good_ball(relabeled, moved_conds, spec, moved, 30, 20.0, lam, 1, h=COARSE)
        assert after.good == before.good
        assert after.resonant == before.resonant
        assert after.block_norm == pytest.approx(before.block_norm, rel=1e-6)
        assert after.resonance_distance == pytest.approx(
            before.resonance_distance, rel=1e-6, abs=1e-10
        )


# Wegner


def test_wegner_on_a_single_edge(make_edge, spec):
    g = make_edge(math.pi)
    conds = uniform_conditions(g, "dirichlet")
    report = wegner_experiment(
        g, conds, spec, [0], 2.5, [0.05, 0.1, 0.2, 0.4], n_samples=2000, seed=2, C_W=1.5
    )
    assert report.verdict
    assert 0.8 <= report.fitted["slope"] <= 1.2
    table = report.details["table"]
    assert [row["eps"] for row in table] == [0.05, 0.1, 0.2, 0.4]
    for row in table:
        assert row["modulus_ok"]
        assert row["estimate"] == pytest.approx(2 * row["eps"], abs=4 * row["se"] + 0.02)
    assert [p["x"] for p in report.plot] == [0.05, 0.1, 0.2, 0.4]


def test_wegner_fits_the_constant(make_edge, spec):
    g = make_edge(math.pi)
    conds = uniform_conditions(g, "dirichlet")
    report = wegner_experiment(g, conds, spec, [0], 2.5, [0.1, 0.3], n_samples=200, seed=3)
    assert 0.6 <= report.fitted["C_W"] <= 1.6
    assert report.verdict


def test_wegner_window_without_spectrum(make_edge, spec):
    g = make_edge(math.pi)
    conds = uniform_conditions(g, "dirichlet")
    report = wegner_experiment(g, conds, spec, [0], 0.5, [0.1], n_samples=5, seed=0, C_W=1.0)
    assert report.details["table"][0]["estimate"] == 0.0
    assert report.verdict


def test_wegner_bound_scales_with_edge_count(chain, kirchhoff, spec):
    small = wegner_experiment(chain, kirchhoff, spec, [19, 20], 2.0, [0.1], 2, 0, C_W=1.0, h=COARSE)
    large = wegner_experiment(
        chain, kirchhoff, spec, [18, 19, 20, 21], 2.0, [0.1], 2, 0, C_W=1.0, h=COARSE
    )
    assert large.bound == pytest.approx(2 * small.bound)


def test_wegner_rejects_wide_windows(make_edge, spec):
    g = make_edge(math.pi)
    with pytest.raises(ValueError):
        wegner_experiment(g, uniform_conditions(g, "dirichlet"), spec, [0], 2.5, [0.6], 5, 0)


@pytest.mark.slow
def test_wegner_estimate_is_linear_on_twenty_edges():
    # Dirichlet at every vertex decouples the edges; each lowest level is pi^2 + omega_e
    g = build_lattice_graph(1, 10)
    conds = uniform_conditions(g, "dirichlet")
    spec = RandomPotentialSpec()
    report = wegner_experiment(
        g, conds, spec, range(g.num_edges), 11.4, [1e-3, 1e-2, 1e-1],
        n_samples=500, seed=9, h=COARSE,
    )
    assert report.details["edges"] == 20
    assert 0.8 <= report.fitted["slope"] <= 1.2
    assert report.verdict
    for row in report.details["table"]:
        assert row["estimate"] == pytest.approx(40 * row["eps"], abs=4 * row["se"] + 1e-3)
        assert passes_upper_bound(row["estimate"], row["se"], row["bound"])


# initial length scale


def test_ilse_proof_bound():
    assert ilse_proof_bound(3.0, 10.0, 1.0, 1.0, 10**-1.5, 1.0, 2.0) == pytest.approx(0.97)


def test_ilse_parameter_checks():
    check_ilse_parameters(2.0, 1.0, 1.5, 0.1)
    with pytest.raises(ParameterError) as info:
        check_ilse_parameters(2.0, 1.0, 3.5, 0.1)
    assert info.value.relation == "(ii)"
    with pytest.raises(ParameterError) as info:
        check_ilse_parameters(2.0, 1.0, 1.5, 0.9)
    assert info.value.relation == "beta"


def test_ilse_gap_is_never_small_at_the_band_edge(chain, kirchhoff):
    spec = RandomPotentialSpec(law="power_law", law_degree=1)
    report = ilse_experiment(
        chain, kirchhoff, spec, 20, [8.0], beta=0.1, xi=1.5, c_P=2.0, d=1.0,
        n_samples=20, seed=4, h=COARSE,
    )
    assert report.fitted["sigma0"] == pytest.approx(1.0, abs=1e-9)
    scale = report.details["scales"][0]
    assert scale["p_hat"] == 0.0
    assert scale["bound"] == pytest.approx(8.0**-1.5)
    assert scale["verdict"]
    assert 0.0 < scale["exact_probability"] <= 1.0
    assert report.verdict
    assert report.outside_proof_regime


@pytest.mark.slow
def test_ilse_on_the_chain_respects_both_bounds(long_chain):
    spec = RandomPotentialSpec(law="power_law", law_degree=1)
    conds = uniform_conditions(long_chain, "kirchhoff")
    report = ilse_experiment(
        long_chain, conds, spec, 40, [8.0, 16.0], beta=0.1, xi=1.5, c_P=2.0, d=1.0,
        n_samples=500, seed=5, h=COARSE,
    )
    assert report.verdict
    for scale in report.details["scales"]:
        r = scale["r"]
        proof = ilse_proof_bound(2.0, r, 1.0, long_chain.u, r ** (0.1 - 2.0), spec.c_minus, 2.0)
        assert scale["proof_bound"] == pytest.approx(proof)
        assert scale["p_hat"] <= r**-1.5 + 2 * scale["se"]
        assert scale["p_hat"] <= 1.0 - proof + 2 * scale["se"]
        assert scale["proof_consistent"]


# Combes-Thomas decay


def _ct_operator():
    g = build_lattice_graph(1, 30)
    sub = whole_graph(g)
    spec = RandomPotentialSpec()
    return assemble(sub, uniform_conditions(g, "kirchhoff"), spec, _constant(sub), h=COARSE)


def test_ct_decay_is_exponential():
    op = _ct_operator()
    pairs = region_pairs_at_distances(op, 15, [5.0, 10.0, 20.0, 40.0])
    report = ct_decay_experiment(op, 1.0, pairs)
    assert report.details["gap"] == pytest.approx([0.5, 1.5])
    assert report.fitted["eta"] == pytest.approx(0.5)
    assert report.details["monotone"]
    assert report.details["bounded_by_resolvent"]
    assert report.fitted["r_squared"] >= 0.99
    assert report.fitted["decay_rate"] == pytest.approx(math.sqrt(0.5), rel=0.15)
    assert report.verdict
    assert [row["delta"] for row in report.rows] == [5.0, 10.0, 20.0, 40.0]


def test_ct_decay_rate_grows_with_eta():
    op = _ct_operator()
    pairs = region_pairs_at_distances(op, 15, [5.0, 10.0, 20.0])
    near = ct_decay_experiment(op, 1.0, pairs)
    far = ct_decay_experiment(op, 0.5, pairs)
    assert far.fitted["eta"] == pytest.approx(2 * near.fitted["eta"])
    assert far.fitted["decay_rate"] > near.fitted["decay_rate"]


def test_ct_decay_rejects_fake_gap():
    op = _ct_operator()
    pairs = region_pairs_at_distances(op, 15, [5.0])
    with pytest.raises(ValueError):
        ct_decay_experiment(op, 1.0, pairs, gap=(0.0, 3.0))
    with pytest.raises(ValueError):
        ct_decay_experiment(op, 1.0, pairs, gap=(1.2, 3.0))


def test_region_pairs_need_edges_at_the_distance():
    op = _ct_operator()
    with pytest.raises(GeometryError):
        region_pairs_at_distances(op, 15, [100.0])


# geometric resolvent inequality and local estimates


@pytest.fixture
def gri_setup():
    g = build_lattice_graph(1, 45)
    spec = RandomPotentialSpec()
    omega = sample_potential(spec, 6, range(g.num_edges))
    return g, uniform_conditions(g, "kirchhoff"), spec, omega


def test_gri_ratio(gri_setup):
    g, conds, spec, omega = gri_setup
    check = gri_check(g, conds, spec, omega, 45, 55, 50, 40.0, 20.0, 8.0, 0.5, C_GRU=1e3, h=COARSE)
    assert check.name == "gri"
    assert check.rhs > 0
    assert 0 < check.ratio < 1e3
    assert check.holds


def test_gri_with_equal_inner_balls(gri_setup):
    g, conds, spec, omega = gri_setup
    check = gri_check(g, conds, spec, omega, 45, 55, 55, 40.0, 8.0, 8.0, 0.5, h=COARSE)
    assert math.isfinite(check.ratio)
    assert check.holds is None


def test_gri_nesting_is_checked(gri_setup):
    g, conds, spec, omega = gri_setup
    with pytest.raises(GeometryError):
        gri_check(g, conds, spec, omega, 45, 55, 70, 40.0, 20.0, 8.0, 0.5, h=COARSE)


def test_gri_constant():
    assert gri_constant(2.0, -3.0, 0.5) == pytest.approx(8.0)


def _gri_ratios(g, conds, spec, scale, offsets, count, rng):
    R, s, r = scale
    far, near = offsets
    origin = g.vertex_at((0,))
    ratios = []
    for k in range(count):
        v = origin + int(rng.integers(-far, far + 1))
        v1 = v + int(rng.integers(-near, near + 1))
        omega = sample_potential(spec, 8, range(g.num_edges), sample_index=k)
        check = gri_check(g, conds, spec, omega, origin, v, v1, R, s, r, 0.5, h=COARSE)
        assert 0 < check.ratio < math.inf
        ratios.append(check.ratio)
    return ratios


@pytest.mark.slow
def test_gri_constant_does_not_grow_with_the_scale(long_chain):
    spec = RandomPotentialSpec()
    conds = uniform_conditions(long_chain, "kirchhoff")
    rng = np.random.default_rng(12)
    small = _gri_ratios(long_chain, conds, spec, (16.0, 8.0, 6.0), (5, 2), 100, rng)
    large = _gri_ratios(long_chain, conds, spec, (32.0, 16.0, 12.0), (10, 4), 100, rng)
    assert max(large) <= 4 * max(small)


def _ground_state(g, spec, center, radius, omega=None):
    sub = ball(g, center, radius)
    op = assemble(
        sub, uniform_conditions(g, "kirchhoff"), spec, omega or _constant(sub), h=COARSE
    )
    values, vectors = eigenvalues(op, count=1, return_vectors=True)
    return op, values[0], vectors[:, 0]


def test_caccioppoli_ratio_on_an_eigenfunction(chain, spec):
    op, lam, f = _ground_state(chain, spec, 20, 12.0)
    inner = ball_edge_set(chain, 20, 4.0)
    outer = ball_edge_set(chain, 20, 8.0)
    check = caccioppoli_check(op, f, inner, outer, g_rhs=lam * f, C_CP=10.0)
    assert check.lhs > 0
    assert check.holds
    assert caccioppoli_check(op, np.zeros_like(f), inner, outer).ratio == 0.0
    with pytest.raises(GeometryError):
        caccioppoli_check(op, f, inner, inner)


def test_caccioppoli_vanishes_on_constants(chain, free_spec):
    sub = ball(chain, 20, 8.0)
    op = assemble(sub, uniform_conditions(chain, "kirchhoff"), free_spec, _constant(sub, 0.0), h=COARSE)
    f = np.ones(op.n_dofs)
    inner = ball_edge_set(chain, 20, 3.0)
    outer = ball_edge_set(chain, 20, 6.0)
    assert caccioppoli_check(op, f, inner, outer).ratio == 0.0


def test_eigenfunction_decay(long_chain, spec):
    op, lam, f = _ground_state(long_chain, spec, 40, 36.0)
    check = eigenfunction_decay_check(
        op, f, 40, 12.0, lam, uniform_conditions(long_chain, "kirchhoff"), C_VEF=1e3
    )
    assert check.lhs > 0
    assert check.rhs > 0
    assert check.holds


def test_eigenfunction_decay_needs_a_larger_region(long_chain, spec):
    op, lam, f = _ground_state(long_chain, spec, 40, 12.0)
    with pytest.raises(GeometryError):
        eigenfunction_decay_check(op, f, 40, 12.0, lam, uniform_conditions(long_chain, "kirchhoff"))


def test_cone_ratio_of_dirichlet_ground_state(make_edge, free_spec):
    g = make_edge(math.pi)
    op = assemble(whole_graph(g), uniform_conditions(g, "dirichlet"), free_spec, {0: 0.0})
    values, vectors = eigenvalues(op, count=1, return_vectors=True)
    check = cone_estimate_check(op, vectors[:, 0], values[0], C_cone=2.0)
    assert check.ratio == pytest.approx(1.0, rel=1e-2)
    assert check.holds


# weights


def test_weight_summability():
    assert weight_is_summable(2.0, 1.0)
    assert not weight_is_summable(0.5, 1.0)
    assert not weight_is_summable(1.5, 2.0)


def _constant_function_operator(extent):
    g = build_lattice_graph(1, extent)
    sub = whole_graph(g)
    spec = RandomPotentialSpec()
    op = assemble(sub, uniform_conditions(g, "kirchhoff"), spec, _constant(sub), h=COARSE)
    return op, np.ones(op.n_dofs)


def test_weighted_norm_of_constants():
    op, f = _constant_function_operator(20)
    expected = math.sqrt(2.0 / 3.0 * (1.0 - 21.0**-3))
    assert weighted_norm(op, f, 20, 2.0) == pytest.approx(expected, rel=1e-6)
    assert weighted_norm(op, f, 20, 0.5) == pytest.approx(math.sqrt(2.0 * math.log(21.0)), rel=1e-6)
    assert weighted_norm(op, np.zeros_like(f), 20, 2.0) == 0.0


def test_non_summable_weight_norm_grows():
    norms = [weighted_norm(*_constant_function_operator(n), n, 0.5) for n in (10, 20, 40)]
    assert norms[0] < norms[1] < norms[2]


def test_ball_norm_growth_table():
    op, f = _constant_function_operator(20)
    table, constant = ball_norm_growth(op, f, 20, 20, [2.0, 4.0, 8.0], 1.0)
    assert [row["R"] for row in table] == [2.0, 4.0, 8.0]
    assert table[0]["norm"] == pytest.approx(2.0)
    assert constant == max(row["ratio"] for row in table)


# resonances


def test_resonance_threshold_is_closed(make_edge, free_spec):
    g = make_edge(math.pi)
    op = assemble(whole_graph(g), uniform_conditions(g, "dirichlet"), free_spec, {0: 0.0})
    lowest = float(eigenvalues(op, count=1)[0])
    # threshold 4^(-1) / 2 = 0.125
    assert resonance_test(op, lowest + 0.125, 4.0, 0.5, 2.0) == "resonant"
    assert resonance_test(op, lowest + 0.25, 4.0, 0.5, 2.0) == "dissonant"
    assert resonance_test(op, lowest, 4.0, 0.5, 2.0) == "resonant"
