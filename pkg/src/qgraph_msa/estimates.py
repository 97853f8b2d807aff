"""
Numerical checks of the estimates feeding the multiscale analysis.

Deterministic inequalities (geometric resolvent inequality, Caccioppoli,
eigenfunction decay, cone condition) are reported as InequalityCheck ratios;
probabilistic statements (assertion G, Wegner, initial length scale) are
Monte-Carlo experiments returning an EstimateReport.
"""

import math
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .covering import GEOMETRY_THRESHOLD
from .exceptions import GeometryError, ParameterError
from .graph_core import (
    MetricGraph,
    ball,
    ball_edge_set,
    induce,
    interior_exterior,
    subgraph_distance,
    whole_graph,
)
from .hamiltonian import AssembledOperator, ConditionMap, assemble, sample_potential
from .models import (
    CouplingAssignment,
    EstimateReport,
    GoodBallVerdict,
    InequalityCheck,
    RandomPotentialSpec,
)
from .sampling import (
    frequency,
    map_samples,
    passes_lower_bound,
    passes_upper_bound,
    standard_error,
)
from .spectral import (
    COUNT_TOL,
    RESONANCE_TOL,
    distance_to_spectrum,
    eigenvalues,
    resolvent_block_norm,
)

GRID_POINTS = 32

Couplings = Union[Dict[int, float], CouplingAssignment]


def _omega(omega: Couplings) -> Dict[int, float]:
    return omega.omega if isinstance(omega, CouplingAssignment) else dict(omega)


def chebyshev_grid(interval: Tuple[float, float], points: int = GRID_POINTS) -> List[float]:
    """Chebyshev-Lobatto points of a closed interval, ascending (endpoints included)."""
    lo, hi = interval
    if hi < lo:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if points < 1:
        raise ValueError("grid needs at least one point")
    if points == 1 or hi == lo:
        return [(lo + hi) / 2.0]
    k = np.arange(points)
    nodes = (lo + hi) / 2.0 - (hi - lo) / 2.0 * np.cos(np.pi * k / (points - 1))
    nodes[0], nodes[-1] = lo, hi
    return nodes.tolist()


def ground_energy(
    g: MetricGraph, conds: ConditionMap, spec: RandomPotentialSpec, h: Optional[float] = None
) -> float:
    """sigma_0: bottom of the spectrum with every coupling at q_minus."""
    omega = {e: spec.q_minus for e in range(g.num_edges)}
    op = assemble(whole_graph(g), conds, spec, omega, h=h)
    return float(eigenvalues(op, count=1)[0])


# good and bad balls


def classify_ball(
    op: AssembledOperator, v: int, r: float, lambdas: Sequence[float], n: float
) -> List[GoodBallVerdict]:
    """(n, lambda, omega) verdicts of an assembled ball restriction for every lambda."""
    g = op.parent
    interior, exterior = interior_exterior(g, v, r, check_ambient=False)
    threshold = r ** (-n)
    verdicts = []
    for lam in lambdas:
        gap = distance_to_spectrum(op, lam)
        if gap <= RESONANCE_TOL:
            verdicts.append(
                GoodBallVerdict(
                    center=v, radius=r, lam=lam, n=n, resonance_distance=gap,
                    good=False, resonant=True,
                )
            )
            continue
        norm = resolvent_block_norm(op, lam, exterior.edge_ids, interior.edge_ids)
        verdicts.append(
            GoodBallVerdict(
                center=v, radius=r, lam=lam, n=n, block_norm=norm,
                resonance_distance=gap, good=norm <= threshold,
            )
        )
    return verdicts


def is_good_ball(
    g: MetricGraph,
    conds: ConditionMap,
    spec: RandomPotentialSpec,
    omega: Couplings,
    v: int,
    r: float,
    lam: float,
    n: float,
    h: Optional[float] = None,
) -> GoodBallVerdict:
    """Is Lambda_r(v) (n, lambda, omega)-good?"""
    if r < 24 * g.U:
        logger.warning(f"Good-ball radius {r} below 24U = {24 * g.U}")
    op = assemble(ball(g, v, r), conds, spec, _omega(omega), h=h)
    return classify_ball(op, v, r, [lam], n)[0]


def estimate_G(
    g: MetricGraph,
    conds: ConditionMap,
    spec: RandomPotentialSpec,
    lambdas: Sequence[float],
    r: float,
    n: float,
    xi: float,
    v1: int,
    v2: int,
    n_samples: int,
    seed: int,
    h: Optional[float] = None,
    workers: Optional[int] = None,
) -> EstimateReport:
    """
    Estimate P{for every lambda on the grid one of Lambda_r(v1), Lambda_r(v2) is good}.

    Args:
        lambdas: Grid standing in for the interval I
        n_samples: Number of independent coupling samples (>= 1)
        seed: Master seed

    Returns:
        EstimateReport with the verdict p_hat + 2 SE >= 1 - r^(-2 xi)
    """
    if n_samples < 1:
        raise ValueError("estimate_G needs at least one sample")
    ball1, ball2 = ball(g, v1, r), ball(g, v2, r)
    if ball1.edge_set & ball2.edge_set:
        raise GeometryError(f"balls at {v1} and {v2} of radius {r} overlap")
    edge_ids = ball1.edge_ids + ball2.edge_ids

    def run(k: int) -> Dict:
        omega = sample_potential(spec, seed, edge_ids, sample_index=k).omega
        first = classify_ball(assemble(ball1, conds, spec, omega, h=h), v1, r, lambdas, n)
        second = classify_ball(assemble(ball2, conds, spec, omega, h=h), v2, r, lambdas, n)
        failing = [a.lam for a, b in zip(first, second) if not (a.good or b.good)]
        return {"sample": k, "good_pair": not failing, "failing_lambdas": len(failing)}

    rows = map_samples(run, n_samples, workers)
    p_hat = frequency(row["good_pair"] for row in rows)
    se = standard_error(p_hat, n_samples)
    bound = 1.0 - r ** (-2.0 * xi)
    verdict = passes_lower_bound(p_hat, se, bound)
    _log_verdict("G", verdict, p_hat, se, bound)
    return EstimateReport(
        experiment="G",
        n_samples=n_samples,
        seed=seed,
        p_hat=p_hat,
        standard_error=se,
        bound=bound,
        verdict=verdict,
        details={"r": r, "n": n, "xi": xi, "grid_points": len(lambdas)},
        outside_proof_regime=r <= GEOMETRY_THRESHOLD * g.U,
        rows=rows,
    )


def _log_verdict(name: str, verdict: bool, p_hat: float, se: float, bound: float) -> None:
    message = f"{name}: p_hat = {p_hat:.4f} +- {se:.4f} against bound {bound:.4g}"
    if verdict:
        logger.success(f"PASS {message}")
    else:
        logger.warning(f"FAIL {message}")


# Wegner estimate


def wegner_experiment(
    g: MetricGraph,
    conds: ConditionMap,
    spec: RandomPotentialSpec,
    edge_ids: Sequence[int],
    lam: float,
    eps_list: Sequence[float],
    n_samples: int,
    seed: int,
    C_W: Optional[float] = None,
    h: Optional[float] = None,
    workers: Optional[int] = None,
) -> EstimateReport:
    """
    Monte-Carlo estimate of E[Tr 1_[lam-eps, lam+eps](H)] on an edge set, per eps.

    Each estimate is compared with C_W * 2 eps c_rho |E|. Without a given C_W the
    constant is fitted as the largest estimate / (s(mu, eps) |E|) ratio.
    """
    eps_values = sorted(float(eps) for eps in eps_list)
    if not eps_values:
        raise ValueError("wegner experiment needs at least one eps")
    if eps_values[0] <= 0 or eps_values[-1] > 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    if n_samples < 1:
        raise ValueError("wegner experiment needs at least one sample")
    sub = induce(g, edge_ids)
    size = len(sub)

    def run(k: int) -> Dict:
        omega = sample_potential(spec, seed, sub.edge_ids, sample_index=k).omega
        op = assemble(sub, conds, spec, omega, h=h)
        counts = {
            eps: int(len(eigenvalues(op, interval=(lam - eps, lam + eps))))
            for eps in eps_values
        }
        return {"sample": k, **{f"count_{eps:g}": c for eps, c in counts.items()}}

    rows = map_samples(run, n_samples, workers)
    c_rho = spec.c_rho
    table = []
    for eps in eps_values:
        counts = np.array([row[f"count_{eps:g}"] for row in rows], dtype=float)
        mean = float(counts.mean())
        se = float(counts.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
        modulus = spec.modulus_of_continuity(eps)
        table.append(
            {
                "eps": eps,
                "estimate": mean,
                "se": se,
                "modulus": modulus,
                "density_bound": 2.0 * eps * c_rho,
                "modulus_ok": modulus <= 2.0 * eps * c_rho * (1 + 1e-6) + 1e-12,
            }
        )

    fitted: Dict[str, float] = {}
    if C_W is None:
        ratios = [row["estimate"] / (row["modulus"] * size) for row in table if row["modulus"] > 0]
        C_W = max(ratios, default=0.0)
        fitted["C_W"] = C_W
    for row in table:
        row["bound"] = C_W * row["density_bound"] * size
        row["ok"] = passes_upper_bound(row["estimate"], row["se"], row["bound"])

    positive = [row for row in table if row["estimate"] > 0]
    if len(positive) >= 2:
        slope = float(
            np.polyfit(
                np.log([row["eps"] for row in positive]),
                np.log([row["estimate"] for row in positive]),
                1,
            )[0]
        )
        fitted["slope"] = slope
    verdict = all(row["ok"] and row["modulus_ok"] for row in table)
    logger.info(f"Wegner experiment on {size} edges: C_W = {C_W:.4g}, verdict {verdict}")
    return EstimateReport(
        experiment="wegner",
        n_samples=n_samples,
        seed=seed,
        bound=C_W * 2.0 * eps_values[-1] * c_rho * size,
        verdict=verdict,
        fitted=fitted,
        details={"lambda": lam, "edges": size, "c_rho": c_rho, "table": table},
        rows=rows,
        plot=[{"x": row["eps"], "y": row["estimate"]} for row in table],
    )


# initial length scale estimate


def ilse_proof_bound(
    c_P: float, r: float, d: float, u: float, h: float, c_minus: float, tau: float
) -> float:
    """Lower bound 1 - (c_P r^d / u)(h / c_-)^tau for P(all couplings >= q_- + h/c_-)."""
    return 1.0 - c_P * r**d / u * (h / c_minus) ** tau


def check_ilse_parameters(tau: float, d: float, xi: float, beta: float) -> None:
    if not 0 < xi < 2 * tau - d:
        raise ParameterError("(ii)", f"xi = {xi} must lie in (0, 2 tau - d) = (0, {2 * tau - d})")
    upper = (2 * tau - d - xi) / tau
    if not 0 < beta < upper:
        raise ParameterError("beta", f"beta = {beta} must lie in (0, {upper:.6g})")


def ilse_experiment(
    g: MetricGraph,
    conds: ConditionMap,
    spec: RandomPotentialSpec,
    v: int,
    r_list: Sequence[float],
    beta: float,
    xi: float,
    c_P: float,
    d: float,
    n_samples: int,
    seed: int,
    h: Optional[float] = None,
    workers: Optional[int] = None,
) -> EstimateReport:
    """Estimate P{dist(spectrum of Lambda_r(v), sigma_0) <= r^(beta-2)} per radius."""
    tau = spec.disorder_exponent
    check_ilse_parameters(tau, d, xi, beta)
    if n_samples < 1:
        raise ValueError("ilse experiment needs at least one sample")
    logger.info("Step 1: Computing the ground energy sigma_0")
    sigma0 = ground_energy(g, conds, spec, h=h)
    logger.info(f"sigma_0 = {sigma0:.6f}")

    rows: List[Dict] = []
    scales: List[Dict] = []
    for r in r_list:
        logger.info(f"Step 2: Sampling gaps at r = {r}")
        sub = ball(g, v, r)
        width = r ** (beta - 2.0)

        def run(k: int, sub=sub, r=r, width=width) -> Dict:
            omega = sample_potential(spec, seed, sub.edge_ids, sample_index=k).omega
            gap = distance_to_spectrum(assemble(sub, conds, spec, omega, h=h), sigma0)
            return {"sample": k, "r": r, "gap": gap, "small_gap": gap <= width}

        batch = map_samples(run, n_samples, workers)
        rows.extend(batch)
        p_hat = frequency(row["small_gap"] for row in batch)
        se = standard_error(p_hat, n_samples)
        bound = r ** (-xi)
        proof = ilse_proof_bound(c_P, r, d, g.u, width, spec.c_minus, tau)
        exact = (1.0 - spec.disorder_mass(width / spec.c_minus)) ** len(sub)
        verdict = passes_upper_bound(p_hat, se, bound)
        proof_ok = p_hat <= (1.0 - proof) + 3.0 * se + 1e-12
        _log_verdict(f"ILSE r = {r}", verdict, p_hat, se, bound)
        scales.append(
            {
                "r": r,
                "p_hat": p_hat,
                "se": se,
                "bound": bound,
                "verdict": verdict,
                "width": width,
                "proof_bound": proof,
                "exact_probability": exact,
                "proof_consistent": proof_ok,
            }
        )

    last = scales[-1]
    return EstimateReport(
        experiment="ilse",
        n_samples=n_samples,
        seed=seed,
        p_hat=last["p_hat"],
        standard_error=last["se"],
        bound=last["bound"],
        verdict=all(s["verdict"] and s["proof_consistent"] for s in scales),
        fitted={"sigma0": sigma0},
        details={"tau": tau, "xi": xi, "beta": beta, "scales": scales},
        outside_proof_regime=max(r_list) <= GEOMETRY_THRESHOLD * g.U,
        rows=rows,
        plot=[{"x": s["r"], "y": s["p_hat"]} for s in scales],
    )


# Combes-Thomas decay


def region_pairs_at_distances(
    op: AssembledOperator, v: int, deltas: Sequence[float]
) -> List[Tuple[List[int], List[int], float]]:
    """
    Source region: edges of op at v. Target for delta: edges of op whose nearest
    endpoint lies in [delta, delta + U) from the source vertices.
    """
    g = op.parent
    source = [e for e in op.edge_ids if v in (g.edge(e).i, g.edge(e).j)]
    if not source:
        raise GeometryError(f"vertex {v} carries no edge of the assembled region")
    sources = {g.edge(e).i for e in source} | {g.edge(e).j for e in source}
    dist = g.distances_from_set(sources)
    pairs = []
    for delta in deltas:
        target = [
            e
            for e in op.edge_ids
            if delta - 1e-9 <= min(dist[g.edge(e).i], dist[g.edge(e).j]) < delta + g.U - 1e-9
        ]
        if not target:
            raise GeometryError(f"no edges at distance {delta} from vertex {v}")
        pairs.append((source, target, float(delta)))
    return pairs


def ct_decay_experiment(
    op: AssembledOperator,
    lam: float,
    region_pairs: Sequence[Tuple[Sequence[int], Sequence[int], float]],
    gap: Optional[Tuple[float, float]] = None,
) -> EstimateReport:
    """
    Measure ||1_A (H - lam)^(-1) 1_B|| against the separation delta and fit
    log-norm = a - c delta.

    Without a gap, lam below the spectrum uses (2 lam - lambda_1, lambda_1);
    otherwise the enclosing gap between neighbouring eigenvalues.
    """
    spectrum = eigenvalues(op, count=op.dim) if op.dim else np.zeros(0)
    if gap is None:
        if spectrum.size == 0:
            raise ValueError("operator without spectrum")
        lowest = float(spectrum[0])
        if lam < lowest:
            gap = (2.0 * lam - lowest, lowest)
        else:
            below = spectrum[spectrum < lam]
            above = spectrum[spectrum > lam]
            if not below.size or not above.size:
                raise ValueError(f"lambda = {lam} lies in no bounded spectral gap")
            gap = (float(below[-1]), float(above[0]))
    s, t = gap
    if not s < lam < t:
        raise ValueError(f"lambda = {lam} not inside the gap ({s}, {t})")
    inside = spectrum[(spectrum > s + COUNT_TOL) & (spectrum < t - COUNT_TOL)]
    if inside.size:
        raise ValueError(f"({s}, {t}) is not a spectral gap: eigenvalue {inside[0]:.6g} inside")
    eta = min(lam - s, t - lam)

    lu = op.factorize(lam)
    plot = []
    for a, b, delta in sorted(region_pairs, key=lambda pair: pair[2]):
        norm = resolvent_block_norm(op, lam, a, b, lu=lu)
        plot.append({"x": delta, "y": norm})

    norms = np.array([p["y"] for p in plot])
    deltas = np.array([p["x"] for p in plot])
    resolvent_bound = 1.0 / distance_to_spectrum(op, lam)
    monotone = bool(np.all(norms[1:] <= norms[:-1] * (1 + 1e-6) + 1e-300))
    bounded = bool(np.all(norms <= resolvent_bound * (1 + 1e-6)))
    fitted: Dict[str, float] = {"eta": eta}
    decaying = deltas > 0
    r_squared = None
    if decaying.sum() >= 2 and np.all(norms[decaying] > 0):
        x, y = deltas[decaying], np.log(norms[decaying])
        slope, intercept = np.polyfit(x, y, 1)
        residual = y - (slope * x + intercept)
        spread = float(np.sum((y - y.mean()) ** 2))
        r_squared = 1.0 - float(np.sum(residual**2)) / spread if spread > 0 else 1.0
        fitted.update(
            {
                "decay_rate": float(-slope),
                "log_prefactor": float(intercept),
                "r_squared": r_squared,
                "C_tilde": float(-slope / math.sqrt(eta * (t - s))),
            }
        )
    verdict = monotone and bounded and (r_squared is None or r_squared >= 0.9)
    logger.info(f"Combes-Thomas decay at lambda = {lam}: rate {fitted.get('decay_rate')}")
    return EstimateReport(
        experiment="ct-decay",
        n_samples=0,
        verdict=verdict,
        fitted=fitted,
        details={
            "lambda": lam,
            "gap": [s, t],
            "monotone": monotone,
            "bounded_by_resolvent": bounded,
            "resolvent_bound": resolvent_bound,
        },
        rows=[{"delta": p["x"], "norm": p["y"]} for p in plot],
        plot=plot,
    )


# geometric resolvent inequality and friends


def gri_constant(C_CP: float, lam: float, phi_prime_sup: float) -> float:
    """C_GRU = 2 C_CP (1 + |lam|) ||phi'||_inf."""
    return 2.0 * C_CP * (1.0 + abs(lam)) * phi_prime_sup


def gri_check(
    g: MetricGraph,
    conds: ConditionMap,
    spec: RandomPotentialSpec,
    omega: Couplings,
    x: int,
    v: int,
    v1: int,
    R: float,
    s: float,
    r: float,
    lam: float,
    C_GRU: Optional[float] = None,
    h: Optional[float] = None,
) -> InequalityCheck:
    """
    ||1_out(R,x) G_R 1_int(r,v1)|| against
    ||1_out(R,x) G_R 1_out(s,v)|| * ||1_out(s,v) G_s 1_int(r,v1)||.
    """
    omega = _omega(omega)
    big = ball(g, x, R)
    middle = ball(g, v, s)
    if not middle.edge_set <= big.edge_set:
        raise GeometryError(f"Lambda_{s}({v}) is not inside Lambda_{R}({x})")
    if not ball_edge_set(g, v1, r) <= middle.edge_set:
        raise GeometryError(f"Lambda_{r}({v1}) is not inside Lambda_{s}({v})")
    _, big_out = interior_exterior(g, x, R)
    if big_out.edge_set & middle.edge_set:
        raise GeometryError("exterior of the large ball meets the middle ball")
    small_in, _ = interior_exterior(g, v1, r, check_ambient=False)
    _, middle_out = interior_exterior(g, v, s, check_ambient=False)
    if subgraph_distance(small_in, middle_out) <= 0.0:
        raise GeometryError("interior of the small ball touches the exterior of the middle ball")

    op_big = assemble(big, conds, spec, omega, h=h)
    op_middle = assemble(middle, conds, spec, omega, h=h)
    lhs = resolvent_block_norm(op_big, lam, big_out.edge_ids, small_in.edge_ids)
    first = resolvent_block_norm(op_big, lam, big_out.edge_ids, middle_out.edge_ids)
    second = resolvent_block_norm(op_middle, lam, middle_out.edge_ids, small_in.edge_ids)
    rhs = first * second
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return InequalityCheck(
        name="gri",
        lhs=lhs,
        rhs=rhs,
        ratio=ratio,
        holds=None if C_GRU is None else ratio <= C_GRU,
        details={"R": R, "s": s, "r": r, "lambda": lam, "outer_factor": first, "inner_factor": second},
    )


def caccioppoli_check(
    op: AssembledOperator,
    f: np.ndarray,
    inner_edges: Sequence[int],
    outer_edges: Sequence[int],
    g_rhs: Optional[np.ndarray] = None,
    C_CP: Optional[float] = None,
) -> InequalityCheck:
    """||f'||_E3 / (||f||_E4 + ||g||_E4) for a weak solution of H f = g on E4."""
    graph = op.parent
    e3, e4 = induce(graph, inner_edges), induce(graph, outer_edges)
    if not e3.edge_set <= e4.edge_set:
        raise GeometryError("inner edge set is not contained in the outer one")
    loose = set(e3.boundary_vertices) - set(e4.inner_vertices)
    if loose:
        raise GeometryError(f"boundary vertex {min(loose)} of E3 is not inner to E4")
    g_rhs = np.zeros_like(f) if g_rhs is None else g_rhs
    lhs = op.derivative_norm(f, e3.edge_ids)
    rhs = op.region_norm(f, e4.edge_ids) + op.region_norm(g_rhs, e4.edge_ids)
    ratio = lhs / rhs if rhs > 0 else 0.0
    return InequalityCheck(
        name="caccioppoli",
        lhs=lhs,
        rhs=rhs,
        ratio=ratio,
        holds=None if C_CP is None else ratio <= C_CP,
    )


def eigenfunction_decay_check(
    op: AssembledOperator,
    f: np.ndarray,
    v: int,
    r: float,
    lam: float,
    conds: ConditionMap,
    C_VEF: Optional[float] = None,
    h: Optional[float] = None,
) -> InequalityCheck:
    """
    ||1_int f|| <= C_VEF ||1_out G 1_int|| ||1_out f|| for the ball Lambda_r(v).

    f holds nodal values on op, an eigenfunction of a strictly larger region
    standing in for a generalized eigenfunction.
    """
    g = op.parent
    interior, exterior = interior_exterior(g, v, r, check_ambient=False)
    restricted = induce(g, ball_edge_set(g, v, r))
    if not restricted.edge_set < set(op.edge_ids):
        raise GeometryError(f"Lambda_{r}({v}) is not strictly inside the eigenfunction region")
    small = assemble(restricted, conds, op.spec, op.omega, h=h or op.h)
    norm = resolvent_block_norm(small, lam, exterior.edge_ids, interior.edge_ids)
    lhs = op.region_norm(f, interior.edge_ids)
    outside = op.region_norm(f, exterior.edge_ids)
    rhs = norm * outside
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return InequalityCheck(
        name="eigenfunction-decay",
        lhs=lhs,
        rhs=rhs,
        ratio=ratio,
        holds=None if C_VEF is None else lhs <= C_VEF * rhs,
        details={"block_norm": norm, "exterior_norm": outside, "lambda": lam},
    )


def cone_estimate_check(
    op: AssembledOperator, f: np.ndarray, lam: float, C_cone: Optional[float] = None
) -> InequalityCheck:
    """Largest per-edge ratio ||f'||^2 / ||f||^2 over edges where f is not negligible."""
    ratios = {}
    for e, (value, derivative) in op.edge_norms(f).items():
        if value > 1e-10:
            ratios[e] = derivative**2 / value**2
    worst = max(ratios.values(), default=0.0)
    return InequalityCheck(
        name="cone",
        lhs=worst,
        rhs=1.0,
        ratio=worst,
        holds=None if C_cone is None else worst <= C_cone,
        details={"lambda": lam, "edges": len(ratios)},
    )


# weights and growth of eigenfunctions


def weight_is_summable(m: float, d: float) -> bool:
    return m > (d + 1) / 2.0


def weighted_norm(op: AssembledOperator, f: np.ndarray, root: int, m: float) -> float:
    """||w^-1 f|| with w(x) = (1 + dist(x, root))^m, Gauss-Legendre per element."""
    g = op.parent
    dist = g.vertex_distances(root)
    nodes, weights = np.polynomial.legendre.leggauss(4)
    total = 0.0
    for e in op.edge_ids:
        edge = g.edge(e)
        block = op.edge_slices[e]
        values = f[block]
        positions = op.node_positions(e)
        left, right = positions[:-1], positions[1:]
        half = (right - left) / 2.0
        for node, weight in zip(nodes, weights):
            t = (left + right) / 2.0 + half * node
            share = (node + 1.0) / 2.0
            value = values[:-1] * (1.0 - share) + values[1:] * share
            point_dist = np.minimum(dist[edge.i] + t, dist[edge.j] + edge.length - t)
            total += float(np.sum(weight * half * value**2 / (1.0 + point_dist) ** (2 * m)))
    return math.sqrt(total)


def ball_norm_growth(
    op: AssembledOperator,
    f: np.ndarray,
    root: int,
    v: int,
    radii: Sequence[float],
    d: float,
) -> Tuple[List[Dict[str, float]], float]:
    """
    ||1_{Lambda_R(v)} f|| against R^d (1 + dist(v, root) + R + U)^((d+2)/2).

    Returns the table and the fitted constant (largest ratio).
    """
    g = op.parent
    offset = float(g.vertex_distances(root)[v])
    available = set(op.edge_ids)
    table = []
    for R in radii:
        norm = op.region_norm(f, ball_edge_set(g, v, R) & available)
        reference = R**d * (1.0 + offset + R + g.U) ** ((d + 2) / 2.0)
        table.append({"R": R, "norm": norm, "reference": reference, "ratio": norm / reference})
    return table, max((row["ratio"] for row in table), default=0.0)


def resonance_test(
    op: AssembledOperator, lam: float, r: float, theta: float, n: float
) -> Literal["resonant", "dissonant"]:
    """Resonant iff dist(spectrum, lam) <= r^(-theta n) / 2."""
    if distance_to_spectrum(op, lam) <= r ** (-theta * n) / 2.0:
        return "resonant"
    return "dissonant"
