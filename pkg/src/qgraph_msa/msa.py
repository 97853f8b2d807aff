"""
Multiscale analysis driver.

Induction parameters are checked relation by relation (each a named predicate),
feasible tuples are constructed interval by interval, and the prefactors of the
iteration step are evaluated directly. The induction step itself is tested
statistically: good-pair probabilities at r and R = r^alpha from sampled
couplings on the ambient graph.
"""

import math
from typing import Dict, List, Optional, Sequence, Tuple

from loguru import logger

from .covering import GEOMETRY_THRESHOLD, disjoint_representatives, maximal_packing
from .estimates import classify_ball
from .exceptions import GeometryError, ParameterError
from .graph_core import MetricGraph, ball, ball_edge_set
from .hamiltonian import AssembledOperator, ConditionMap, assemble, sample_potential
from .models import (
    EstimateReport,
    FeasibilityCertificate,
    MsaParams,
    PrefactorReport,
    RandomPotentialSpec,
)
from .sampling import frequency, map_samples, passes_lower_bound, standard_error
from .spectral import eigenvalues

BOUNDARY_TOL = 1e-9


# parameter relations


def parameter_intervals(params: MsaParams) -> Dict[str, Tuple[float, float]]:
    """Open intervals each induction parameter has to lie in, given the earlier ones."""
    d, tau, q, xi, alpha, n = params.d, params.tau, params.q, params.xi, params.alpha, params.n
    return {
        "tau": (1.5 * d - 1.0, math.inf),
        "q": (7 * d - 6, 7 * d),
        "xi": (2 * d - 2, min(2 * tau - d, (q - 3 * d + 2) / 2.0)),
        "alpha": (1.0, min((2 + 2 * xi) / (2 * d + xi), (2 + q) / (3 * d + 2 * xi))),
        "n": (9 * alpha * d + d - 2, math.inf),
        "theta": ((q + d) / n, (n + 2 - d - alpha * d) / (alpha * n)),
        "beta": (0.0, min(2.0, (2 * tau - d - xi) / tau)),
    }


def relation_checks(params: MsaParams, closed_theta: bool = False) -> Dict[str, bool]:
    """
    Every membership and derived relation as a named predicate, in checking order.

    Args:
        params: Candidate tuple
        closed_theta: Accept theta on the upper end of its interval

    Returns:
        Ordered mapping relation name -> holds
    """
    d, tau, q, xi = params.d, params.tau, params.q, params.xi
    alpha, theta, n, beta = params.alpha, params.theta, params.n, params.beta
    intervals = parameter_intervals(params)

    def inside(name: str, value: float, closed_top: bool = False) -> bool:
        lo, hi = intervals[name]
        if closed_top:
            return lo < value <= hi * (1 + BOUNDARY_TOL) + BOUNDARY_TOL
        return lo < value < hi

    theta_top = (n + 2 - d - alpha * d) / (alpha * n)
    return {
        "q": inside("q", q),
        "tau": inside("tau", tau),
        "xi": inside("xi", xi),
        "alpha": inside("alpha", alpha),
        "theta": inside("theta", theta, closed_theta),
        "n": inside("n", n),
        "beta": inside("beta", beta),
        "(i)": tau > d / 2.0,
        "(ii)": 0 < xi < 2 * tau - d,
        "(iii)": q < theta * n - d,
        "(iv)": alpha < (2 + 2 * xi) / (2 * d + xi),
        "(v)": alpha < (2 + q) / (3 * d + 2 * xi),
        "(vi)": (
            theta <= theta_top * (1 + BOUNDARY_TOL) + BOUNDARY_TOL
            if closed_theta
            else theta < theta_top
        ),
        "(vii)": alpha * d - 1 - 2 * xi < 0,
        "(viii)": d / alpha + (d + 2) / 2.0 - n / alpha < 0,
        "(ix)": polynomial_decay_exponent(d, n, alpha) > (d + 1) / 2.0,
        "(x)": (2 + 2 * xi) / (2 * d + xi) > 1 and (2 + q) / (3 * d + 2 * xi) > 1,
        "(xi)": theta_top > (q + d) / n,
        "alpha<3": alpha < 3,
    }


def certify(params: MsaParams, closed_theta: bool = False) -> FeasibilityCertificate:
    relations = relation_checks(params, closed_theta=closed_theta)
    failed = next((name for name, holds in relations.items() if not holds), None)
    return FeasibilityCertificate(
        feasible=failed is None,
        relations=relations,
        intervals=parameter_intervals(params),
        first_violation=failed,
    )


def _check_tau(d: float, tau: float) -> None:
    if d < 1:
        raise ParameterError("d", f"growth degree d = {d} must be >= 1")
    if tau <= 1.5 * d - 1:
        raise ParameterError(
            "tau", f"disorder exponent tau = {tau} must exceed 3d/2 - 1 = {1.5 * d - 1}"
        )


def _between(interval: Tuple[float, float], fraction: float) -> float:
    lo, hi = interval
    if not lo < hi:
        raise ParameterError("interval", f"empty interval ({lo}, {hi})")
    return lo + fraction * (hi - lo)


def feasible_params(
    d: float,
    tau: float,
    fractions: Sequence[float] = (0.5, 0.5, 0.5, 0.5, 0.5),
    U: float = 1.0,
) -> MsaParams:
    """
    Construct a tuple interval by interval in the order q, xi, alpha, n, theta, beta.

    fractions places q, xi, alpha, theta and beta inside their open intervals
    (0.5 picks midpoints). n is the smallest integer above every lower bound,
    and at least 19d + 17.
    """
    _check_tau(d, tau)
    f_q, f_xi, f_alpha, f_theta, f_beta = fractions
    if not all(0 < f < 1 for f in fractions):
        raise ValueError("fractions must lie strictly between 0 and 1")

    q = _between((7 * d - 6, 7 * d), f_q)
    xi = _between((2 * d - 2, min(2 * tau - d, (q - 3 * d + 2) / 2.0)), f_xi)
    alpha = _between(
        (1.0, min((2 + 2 * xi) / (2 * d + xi), (2 + q) / (3 * d + 2 * xi))), f_alpha
    )
    lower = max(
        19 * d + 16,
        9 * alpha * d + d - 2,
        alpha * (q + d) + d + alpha * d - 2,
        d + alpha * (2 * d + 3) / 2.0,
    )
    n = float(math.floor(lower) + 1)
    theta = _between(((q + d) / n, (n + 2 - d - alpha * d) / (alpha * n)), f_theta)
    beta = _between((0.0, min(2.0, (2 * tau - d - xi) / tau)), f_beta)
    return MsaParams(d=d, tau=tau, q=q, xi=xi, alpha=alpha, theta=theta, n=n, beta=beta, U=U)


def validate_params(
    d: float, tau: float, candidate: Optional[MsaParams] = None
) -> Tuple[MsaParams, FeasibilityCertificate]:
    """
    Certify a candidate tuple, or construct a feasible one from midpoints.

    Args:
        d: Growth degree of the graph
        tau: Disorder exponent of the coupling law
        candidate: Tuple to check; constructed when omitted

    Returns:
        The (candidate or constructed) tuple and its certificate
    """
    _check_tau(d, tau)
    if candidate is not None:
        if candidate.d != d or candidate.tau != tau:
            raise ParameterError(
                "candidate", f"candidate has (d, tau) = ({candidate.d}, {candidate.tau})"
            )
        certificate = certify(candidate)
        if certificate.feasible:
            logger.success(f"Parameters feasible for d = {d}, tau = {tau}")
        else:
            logger.warning(f"Parameters violate relation {certificate.first_violation}")
        return candidate, certificate

    params = feasible_params(d, tau)
    certificate = certify(params)
    if not certificate.feasible:
        raise ParameterError(
            certificate.first_violation, "constructed tuple is not feasible"
        )
    logger.info(
        f"Constructed parameters: q = {params.q:.4g}, xi = {params.xi:.4g}, "
        f"alpha = {params.alpha:.4g}, n = {params.n:g}, theta = {params.theta:.4g}, "
        f"beta = {params.beta:.4g}"
    )
    return params, certificate


# scales and prefactors


def scale_schedule(r0: float, alpha: float, K: int) -> List[float]:
    """r_0, r_1 = r_0^alpha, ..., r_K."""
    if alpha <= 1:
        raise ParameterError("alpha", f"scale exponent alpha = {alpha} must exceed 1")
    if r0 <= 1:
        raise ValueError(f"initial scale r0 = {r0} must exceed 1")
    if K < 0:
        raise ValueError("number of steps must be >= 0")
    radii = [float(r0)]
    for _ in range(K):
        radii.append(radii[-1] ** alpha)
    return radii


def delta_minus_exponent(params: MsaParams) -> float:
    """Exponent of r in delta_minus: -n - 2 + d + alpha theta n + alpha d."""
    p = params
    return -p.n - 2 + p.d + p.alpha * p.theta * p.n + p.alpha * p.d


def iteration_prefactors(
    params: MsaParams,
    r: float,
    C_GRU: float,
    C_CTA: float,
    c_P: float,
    r_i: Optional[float] = None,
    R: Optional[float] = None,
) -> PrefactorReport:
    """
    delta_plus, delta_minus and the lower bound on the number of good steps.

    r_i defaults to R = r^alpha. All products are formed in log space.
    """
    certificate = certify(params, closed_theta=True)
    if not certificate.feasible:
        raise ParameterError(certificate.first_violation, "invalid induction parameters")
    if r <= params.r_geom:
        logger.warning(f"Prefactors at r = {r} outside proof regime (r_geom = {params.r_geom})")
    d, n, theta, U = params.d, params.n, params.theta, params.U
    R = r**params.alpha if R is None else R
    r_i = R if r_i is None else r_i

    log_plus = math.log(C_GRU * c_P) + d * math.log(1.5) + (-n - 1 + d) * math.log(r)
    log_minus = (
        math.log(20.0 * C_CTA)
        + d * math.log(1.5)
        + 2 * math.log(C_GRU * c_P)
        + d * math.log(r_i + 13 * r / 30.0 + U)
        + (-n - 2 + d) * math.log(r)
        + theta * n * math.log(r_i)
    )
    exponent = delta_minus_exponent(params)
    return PrefactorReport(
        delta_plus=math.exp(log_plus),
        delta_minus=math.exp(log_minus),
        k_plus_lower=R / (2 * r) - 17,
        delta_minus_exponent=exponent,
        exponent_negative=exponent < -BOUNDARY_TOL,
        exponent_boundary=abs(exponent) <= BOUNDARY_TOL,
    )


def probability_exponents(params: MsaParams) -> Dict[str, float]:
    """Exponents of r in the bad-ball and resonance probability bounds (both negative)."""
    d, q, xi, alpha = params.d, params.q, params.xi, params.alpha
    return {
        "bad_balls": -4 + 4 * alpha * d - 4 * xi + 2 * alpha * xi,
        "resonances": 3 * d * alpha - 2 - q + 2 * alpha * xi,
    }


def weak_wegner_bound(
    params: MsaParams, r: float, C_W: float, c_rho: float, c_P: float, u: float
) -> Tuple[float, float, bool]:
    """(C_W 2 c_rho r^(-theta n) c_P r^d / u, r^(-q), bound <= r^(-q))."""
    log_bound = (
        math.log(2.0 * C_W * c_rho * c_P / u)
        - params.theta * params.n * math.log(r)
        + params.d * math.log(r)
    )
    log_target = -params.q * math.log(r)
    return math.exp(log_bound), math.exp(log_target), log_bound <= log_target


def terminal_goodness_bound(
    params: MsaParams,
    r: float,
    C_CTA: float,
    c_P: float,
    delta_plus: float,
    R: Optional[float] = None,
) -> Tuple[float, float, bool]:
    """
    Terminal bound 2 C_CTA c_P delta_plus^k 10 (R/3 + 13r/30 + U)^d / r * R^(theta n)
    with k = R/(2r) - 17, against R^(-n).
    """
    d, n, theta, U = params.d, params.n, params.theta, params.U
    R = r**params.alpha if R is None else R
    k_plus = R / (2 * r) - 17
    log_target = -n * math.log(R)
    if delta_plus <= 0:
        return 0.0, math.exp(log_target), True
    log_bound = (
        math.log(20.0 * C_CTA * c_P)
        + k_plus * math.log(delta_plus)
        + d * math.log(R / 3.0 + 13 * r / 30.0 + U)
        - math.log(r)
        + theta * n * math.log(R)
    )
    holds = k_plus > 0 and log_bound <= log_target
    return math.exp(min(log_bound, 700.0)), math.exp(log_target), holds


def decay_annuli(r0: float, alpha: float, K: int, U: float) -> List[Tuple[float, float]]:
    """Radii (2 r_k + U, 2 r_{k+1} + 2U) of the annuli carrying eigenfunction decay."""
    radii = scale_schedule(r0, alpha, K + 1)
    return [(2 * radii[k] + U, 2 * radii[k + 1] + 2 * U) for k in range(K + 1)]


def polynomial_decay_exponent(d: float, n: float, alpha: float) -> float:
    return n / alpha - d / alpha - (d + 2) / 2.0


def good_ball_decay_exponent(d: float, n: float) -> float:
    return n - (3 * d + 2) / 2.0


# induction step


def _raster_operators(
    g: MetricGraph,
    center: int,
    R: float,
    r: float,
    region: frozenset,
    conds: ConditionMap,
    spec: RandomPotentialSpec,
    omega: Dict[int, float],
    h: Optional[float],
) -> List[Tuple[int, AssembledOperator]]:
    raster = maximal_packing(g, center, R, max(r / 10.0, g.u))
    ops = []
    for w in raster.centers:
        edges = ball_edge_set(g, w, r)
        if edges <= region:
            ops.append((w, assemble(ball(g, w, r, check_ambient=False), conds, spec, omega, h=h)))
    return ops


def _spectra_close(
    first: Sequence[float], second: Sequence[float], threshold: float
) -> bool:
    return any(abs(a - b) <= threshold for a in first for b in second)


def induction_step_experiment(
    g: MetricGraph,
    conds: ConditionMap,
    spec: RandomPotentialSpec,
    params: MsaParams,
    lambdas: Sequence[float],
    r: float,
    n_samples: int,
    seed: int,
    x: int,
    y: int,
    h: Optional[float] = None,
    workers: Optional[int] = None,
) -> EstimateReport:
    """
    Good-pair probabilities at scales r and R = r^alpha around two centers.

    Per sample the couplings on both R-balls are drawn once; the pair (x, y) is
    classified at r and at R on the lambda grid. Also reported: the frequency of
    at most three disjoint bad raster balls per R-ball for every lambda, and of
    non-resonant raster spectra across the two R-balls.
    """
    if n_samples < 1:
        raise ValueError("induction step needs at least one sample")
    if len(lambdas) == 0:
        raise ValueError("empty energy grid")
    R = r**params.alpha
    n, theta = params.n, params.theta
    big_x, big_y = ball(g, x, R), ball(g, y, R)
    if big_x.edge_set & big_y.edge_set:
        raise GeometryError(f"R-balls at {x} and {y} of radius {R:.4g} overlap")
    outside = r <= GEOMETRY_THRESHOLD * g.U
    if outside:
        logger.warning(f"Induction step at r = {r} runs outside proof regime")
    edge_ids = big_x.edge_ids + big_y.edge_ids
    window = (min(lambdas) - 0.5, max(lambdas) + 0.5)

    def run(k: int) -> Dict:
        omega = sample_potential(spec, seed, edge_ids, sample_index=k).omega
        small = {
            c: classify_ball(
                assemble(ball(g, c, r), conds, spec, omega, h=h), c, r, lambdas, n
            )
            for c in (x, y)
        }
        big_ops = {c: assemble(b, conds, spec, omega, h=h) for c, b in ((x, big_x), (y, big_y))}
        large = {c: classify_ball(big_ops[c], c, R, lambdas, n) for c in (x, y)}
        good_r = all(a.good or b.good for a, b in zip(small[x], small[y]))
        good_R = all(a.good or b.good for a, b in zip(large[x], large[y]))

        few_bad = True
        spectra: Dict[int, List[Tuple[float, List[float]]]] = {}
        for c, region in ((x, big_x.edge_set), (y, big_y.edge_set)):
            rasters = _raster_operators(g, c, R, r, region, conds, spec, omega, h)
            verdicts = {w: classify_ball(op, w, r, lambdas, n) for w, op in rasters}
            for index in range(len(lambdas)):
                bad = [w for w, rows in verdicts.items() if not rows[index].good]
                if len(disjoint_representatives(g, bad, r)) > 3:
                    few_bad = False
            spectra[c] = [(R, eigenvalues(big_ops[c], interval=window).tolist())] + [
                (r, eigenvalues(op, interval=window).tolist()) for _, op in rasters
            ]
        dissonant = not any(
            _spectra_close(a, b, min(ra, rb) ** (-theta * n))
            for ra, a in spectra[x]
            for rb, b in spectra[y]
        )
        return {
            "sample": k,
            "good_r": good_r,
            "good_R": good_R,
            "few_bad_balls": few_bad,
            "dissonant": dissonant,
        }

    logger.info(f"Step 1: Sampling {n_samples} couplings on two balls of radius {R:.4g}")
    rows = map_samples(run, n_samples, workers)
    logger.info("Step 2: Reducing good-pair frequencies")
    p_r = frequency(row["good_r"] for row in rows)
    p_R = frequency(row["good_R"] for row in rows)
    se_r, se_R = standard_error(p_r, n_samples), standard_error(p_R, n_samples)
    bound = 1.0 - R ** (-2.0 * params.xi)
    verdict = passes_lower_bound(p_R, se_R, bound)
    message = f"induction step r = {r}: p_R = {p_R:.4f} +- {se_R:.4f} against {bound:.4g}"
    if verdict:
        logger.success(f"PASS {message}")
    else:
        logger.warning(f"FAIL {message}")
    return EstimateReport(
        experiment="msa-step",
        n_samples=n_samples,
        seed=seed,
        p_hat=p_R,
        standard_error=se_R,
        bound=bound,
        verdict=verdict,
        details={
            "r": r,
            "R": R,
            "p_hat_r": p_r,
            "se_r": se_r,
            "freq_few_bad_balls": frequency(row["few_bad_balls"] for row in rows),
            "freq_dissonant": frequency(row["dissonant"] for row in rows),
            "grid_points": len(lambdas),
        },
        outside_proof_regime=outside,
        rows=rows,
    )


def first_pass_radius(reports: Sequence[EstimateReport]) -> Optional[float]:
    """Smallest radius from which every report (ordered by radius) passes."""
    ordered = sorted(reports, key=lambda report: report.details["r"])
    first = None
    for report in ordered:
        if report.verdict:
            first = report.details["r"] if first is None else first
        else:
            first = None
    return first
