import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qgraph_msa.estimates import chebyshev_grid
from qgraph_msa.exceptions import GeometryError, ParameterError
from qgraph_msa.hamiltonian import uniform_conditions
from qgraph_msa.models import EstimateReport, MsaParams
from qgraph_msa.msa import (
    certify,
    decay_annuli,
    delta_minus_exponent,
    feasible_params,
    first_pass_radius,
    good_ball_decay_exponent,
    induction_step_experiment,
    iteration_prefactors,
    parameter_intervals,
    polynomial_decay_exponent,
    probability_exponents,
    relation_checks,
    scale_schedule,
    terminal_goodness_bound,
    validate_params,
    weak_wegner_bound,
)

COARSE = 0.125

SAMPLE = MsaParams(d=1, tau=2, q=6, xi=1.5, alpha=1.2, n=36, theta=0.5, beta=0.1)


# feasibility


def test_sample_tuple_is_feasible():
    params, certificate = validate_params(1, 2, SAMPLE)
    assert params is SAMPLE
    assert certificate.feasible
    assert certificate.first_violation is None
    lo, hi = certificate.intervals["theta"]
    assert lo == pytest.approx(7 / 36)
    assert hi == pytest.approx(35.8 / 43.2)


@pytest.mark.parametrize(
    "d, tau, q, xi, n",
    [(1, 2.0, 4.0, 0.75, 36.0), (2, 3.5, 11.0, 2.75, 55.0), (3, 5.0, 18.0, 4.75, 74.0)],
)
def test_constructed_tuples(d, tau, q, xi, n):
    params, certificate = validate_params(d, tau)
    assert certificate.feasible
    assert params.q == pytest.approx(q)
    assert params.xi == pytest.approx(xi)
    assert params.n == n
    assert params.n == 19 * d + 17
    assert params.alpha < 3


def test_constructed_midpoints_for_d1():
    params = feasible_params(1, 2)
    assert params.alpha == pytest.approx((1 + 3.5 / 2.75) / 2)
    assert params.beta == pytest.approx(0.5625)


def test_construction_is_idempotent():
    first, _ = validate_params(2, 3.5)
    second, certificate = validate_params(2, 3.5, first)
    assert second == first
    assert certificate.feasible


def test_large_alpha_is_rejected():
    certificate = certify(SAMPLE.model_copy(update={"alpha": 3.0}))
    assert not certificate.feasible
    assert certificate.first_violation == "alpha"
    assert not certificate.relations["alpha<3"]


def test_small_tau_is_rejected():
    with pytest.raises(ParameterError) as info:
        validate_params(1, 0.5)
    assert info.value.relation == "tau"
    with pytest.raises(ParameterError) as info:
        validate_params(0.5, 2)
    assert info.value.relation == "d"


def test_candidate_must_match_d_and_tau():
    with pytest.raises(ParameterError) as info:
        validate_params(1, 2.5, SAMPLE)
    assert info.value.relation == "candidate"


def test_relations_are_reported_in_order():
    names = list(relation_checks(SAMPLE))
    assert names[:7] == ["q", "tau", "xi", "alpha", "theta", "n", "beta"]
    assert names[7] == "(i)"
    assert names[-1] == "alpha<3"


def test_theta_interval_depends_on_n():
    intervals = parameter_intervals(SAMPLE.model_copy(update={"n": 40}))
    assert intervals["theta"][0] == pytest.approx(7 / 40)


@given(
    st.sampled_from([1.0, 1.5, 2.0, 3.0]),
    st.floats(min_value=0.05, max_value=3.0),
    st.lists(st.floats(min_value=0.02, max_value=0.98), min_size=5, max_size=5),
)
def test_constructed_tuples_satisfy_every_relation(d, margin, fractions):
    params = feasible_params(d, 1.5 * d - 1 + margin, fractions)
    relations = relation_checks(params)
    assert all(relations.values()), [name for name, ok in relations.items() if not ok]


def test_fractions_must_be_interior():
    with pytest.raises(ValueError):
        feasible_params(1, 2, (0.5, 0.5, 1.0, 0.5, 0.5))


# scales and prefactors


def test_scale_schedule():
    radii = scale_schedule(10, 1.2, 2)
    assert radii == pytest.approx([10.0, 15.85, 27.54], rel=1e-3)
    assert radii[2] == radii[1] ** 1.2
    assert scale_schedule(10, 1.2, 0) == [10.0]
    with pytest.raises(ParameterError):
        scale_schedule(10, 1.0, 2)
    with pytest.raises(ValueError):
        scale_schedule(1.0, 1.2, 2)


def test_prefactors_for_the_sample_tuple():
    report = iteration_prefactors(SAMPLE, 1000.0, C_GRU=1.0, C_CTA=1.0, c_P=1.0)
    assert report.delta_plus < 1
    assert report.delta_minus < 1
    assert report.delta_minus_exponent == pytest.approx(-14.2)
    assert report.exponent_negative
    assert not report.exponent_boundary
    assert iteration_prefactors(SAMPLE, 1000.0, 1.0, 1.0, 1.0, R=34000.0).k_plus_lower == pytest.approx(0.0)


def test_prefactor_exponent_vanishes_on_the_theta_boundary():
    top = (36 + 2 - 1 - 1.2) / (1.2 * 36)
    params = SAMPLE.model_copy(update={"theta": top})
    assert delta_minus_exponent(params) == pytest.approx(0.0, abs=1e-9)
    report = iteration_prefactors(params, 1000.0, 1.0, 1.0, 1.0)
    assert report.exponent_boundary
    assert not report.exponent_negative


def test_prefactors_shrink_with_n():
    small = iteration_prefactors(SAMPLE, 1000.0, 1.0, 1.0, 1.0)
    large = iteration_prefactors(SAMPLE.model_copy(update={"n": 40}), 1000.0, 1.0, 1.0, 1.0)
    assert large.delta_plus < small.delta_plus
    assert large.delta_minus < small.delta_minus


def test_prefactors_need_valid_parameters():
    with pytest.raises(ParameterError):
        iteration_prefactors(SAMPLE.model_copy(update={"alpha": 3.0}), 1000.0, 1.0, 1.0, 1.0)


def test_probability_exponents():
    exponents = probability_exponents(SAMPLE)
    assert exponents["bad_balls"] == pytest.approx(-1.6)
    assert exponents["resonances"] == pytest.approx(-0.8)


def test_weak_wegner_bound():
    bound, target, ok = weak_wegner_bound(SAMPLE, 1000.0, C_W=1.0, c_rho=1.0, c_P=2.0, u=1.0)
    assert ok
    assert bound < target
    assert target == pytest.approx(1000.0**-6)


def test_goodness_bound_needs_enough_steps():
    delta_plus = iteration_prefactors(SAMPLE, 1000.0, 1.0, 1.0, 1.0).delta_plus
    _, _, holds = terminal_goodness_bound(SAMPLE, 1000.0, 1.0, 1.0, delta_plus)
    assert not holds
    _, target, holds = terminal_goodness_bound(SAMPLE, 1000.0, 1.0, 1.0, delta_plus, R=1e5)
    assert holds
    assert target == pytest.approx(1e5**-36)


def test_decay_annuli():
    annuli = decay_annuli(10, 1.2, 1, 1.0)
    assert len(annuli) == 2
    assert annuli[0][0] == pytest.approx(21.0)
    assert annuli[0][1] == pytest.approx(2 * 10**1.2 + 2)
    assert annuli[1][0] == pytest.approx(2 * 10**1.2 + 1)


def test_decay_exponents():
    assert polynomial_decay_exponent(1, 36, 1.2) == pytest.approx(30 - 1 / 1.2 - 1.5)
    assert polynomial_decay_exponent(1, 36, 1.2) > 1
    assert good_ball_decay_exponent(1, 36) == pytest.approx(33.5)


# induction step


def _step(long_chain, spec, n, x=20, y=60, samples=3):
    params = SAMPLE.model_copy(update={"n": n})
    return induction_step_experiment(
        long_chain,
        uniform_conditions(long_chain, "kirchhoff"),
        spec,
        params,
        chebyshev_grid((-21.0, -20.0), 3),
        8.0,
        samples,
        seed=5,
        x=x,
        y=y,
        h=COARSE,
    )


def test_induction_step_in_a_deep_gap(long_chain, spec):
    report = _step(long_chain, spec, 1)
    assert report.experiment == "msa-step"
    assert report.details["R"] == pytest.approx(8.0**1.2)
    assert report.details["p_hat_r"] == 1.0
    assert report.p_hat == 1.0
    assert report.details["freq_few_bad_balls"] == 1.0
    assert report.details["freq_dissonant"] == 1.0
    assert report.verdict
    assert report.outside_proof_regime


def test_induction_step_with_huge_n_fails(long_chain, spec):
    report = _step(long_chain, spec, 1000, samples=2)
    assert report.details["p_hat_r"] == 0.0
    assert report.p_hat == 0.0
    assert not report.verdict


def test_induction_step_geometry(long_chain, spec):
    with pytest.raises(GeometryError):
        _step(long_chain, spec, 1, x=20, y=30)
    with pytest.raises(GeometryError):
        _step(long_chain, spec, 1, x=5, y=60)


def _report(r, verdict):
    return EstimateReport(experiment="msa-step", n_samples=1, verdict=verdict, details={"r": r})


def test_first_pass_radius():
    assert first_pass_radius([_report(16, True), _report(8, False), _report(32, True)]) == 16
    assert first_pass_radius([_report(8, True), _report(16, False), _report(32, True)]) == 32
    assert first_pass_radius([_report(8, False), _report(16, False)]) is None
    assert math.isclose(first_pass_radius([_report(8.5, True)]), 8.5)
