"""
Experiment Pipeline - Main Orchestrator

This module runs one experiment from a flat JSON config:
1. Load and validate the experiment config
2. Build the metric graph and its vertex conditions
3. Dispatch to the experiment of the requested kind
4. Write summary.json, samples.csv and plot_data.csv

Artifacts land in <output_dir>/<kind>/.
"""

import csv
import json
import math
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv
from loguru import logger
from pydantic import ValidationError

from .covering import (
    build_containers,
    maximal_packing,
    packing_cardinality_bounds,
    verify_covering,
)
from .estimates import (
    chebyshev_grid,
    classify_ball,
    ct_decay_experiment,
    estimate_G,
    gri_check,
    ground_energy,
    ilse_experiment,
    region_pairs_at_distances,
    wegner_experiment,
)
from .exceptions import QGraphError
from .graph_core import (
    InducedSubgraph,
    MetricGraph,
    append_pendant_edge,
    ball,
    build_cayley_graph,
    build_lattice_graph,
    estimate_growth,
    induce,
    load_graph,
    save_graph,
    whole_graph,
)
from .hamiltonian import (
    ConditionMap,
    assemble,
    conditions_from_spec,
    form_lower_bound,
    make_vertex_condition,
    sample_potential,
    uniform_conditions,
)
from .models import (
    PendantEdgeReport,
    ExperimentConfig,
    GraphSource,
    MsaParams,
    RandomPotentialSpec,
    RunResult,
)
from .msa import first_pass_radius, induction_step_experiment, validate_params
from .sampling import map_samples
from .spectral import counting_function, counting_gap_check, eigenvalues, weyl_check

OUTPUT_ENV = "QGRAPH_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "data/runs"
EXAMPLE_TOL = 1e-3

Artifacts = Tuple[Dict[str, Any], List[Dict[str, Any]], List[Dict[str, Any]]]


def build_graph(source: GraphSource) -> MetricGraph:
    """Load or build the graph of a config, then attach its pendant edges."""
    if source.file is not None:
        g = load_graph(source.file)
    elif source.builder == "lattice":
        g = build_lattice_graph(source.d, source.extent, source.edge_len)
    else:
        g = build_cayley_graph(source.generators, source.extent)
    for pendant in source.pendants:
        g = append_pendant_edge(g, pendant.vertex, pendant.length)
    return g


def resolve_vertex(g: MetricGraph, ref: Any) -> int:
    """Vertex id from an int or a coordinate list."""
    if isinstance(ref, (list, tuple)):
        if g.coordinates is None:
            raise ValueError(f"graph has no coordinates to resolve {ref}")
        v = g.vertex_at(tuple(int(c) for c in ref))
        if v is None:
            raise ValueError(f"no vertex at coordinates {list(ref)}")
        return v
    v = int(ref)
    if not g.has_vertex(v):
        raise ValueError(f"missing vertex {v}")
    return v


def pendant_edge_check(
    g: MetricGraph,
    conds: ConditionMap,
    spec: RandomPotentialSpec,
    vertex: int,
    omega_pendant: float,
    seed: int,
    h: Optional[float] = None,
    lam_max: float = 30.0,
) -> PendantEdgeReport:
    """
    Attach a Dirichlet pi-edge with profile 1 at vertex and compare spectra.

    The pendant decouples, so below lam_max the new spectrum is the old one
    together with n^2 + omega_pendant, n >= 1.
    """
    tilde = append_pendant_edge(g, vertex, math.pi)
    pendant = tilde.num_edges - 1
    leaf = tilde.num_vertices - 1
    h = h or tilde.u / 64.0

    base = conds[vertex]
    size = base.degree + 1
    P = np.zeros((size, size))
    L = np.zeros((size, size))
    P[: base.degree, : base.degree] = base.P
    L[: base.degree, : base.degree] = base.L
    P[-1, -1] = 1.0
    tilde_conds = dict(conds)
    tilde_conds[vertex] = make_vertex_condition("custom", size, P=P, L=L)
    tilde_conds[leaf] = make_vertex_condition("dirichlet", 1)
    tilde_spec = RandomPotentialSpec(
        **{
            **spec.model_dump(),
            "edge_profiles": {**spec.edge_profiles, pendant: [1.0]},
            "c_minus": min(spec.c_minus, 1.0),
            "c_plus": max(spec.c_plus, 1.0),
        }
    )

    omega = sample_potential(spec, seed, range(g.num_edges)).omega
    op = assemble(whole_graph(g), conds, spec, omega, h=h)
    op_tilde = assemble(
        whole_graph(tilde), tilde_conds, tilde_spec, {**omega, pendant: omega_pendant}, h=h
    )
    floor = form_lower_bound(conds, g.u, spec) - 1.0
    old = eigenvalues(op, interval=(floor, lam_max)).tolist()
    new = eigenvalues(op_tilde, interval=(floor, lam_max + 1.0)).tolist()
    levels = []
    k = 1
    while k * k + omega_pendant <= lam_max:
        levels.append(k * k + omega_pendant)
        k += 1

    used: set = set()

    def match(value: float) -> float:
        free = [j for j in range(len(new)) if j not in used]
        if not free:
            return math.inf
        best = min(free, key=lambda j: abs(new[j] - value))
        used.add(best)
        return abs(new[best] - value) / max(1.0, abs(value))

    base_dev = max((match(value) for value in old), default=0.0)
    pendant_dev = [match(value) for value in levels]
    expected = 1.0 + omega_pendant
    lowest = min(new, key=lambda value: abs(value - expected), default=math.nan)
    preserved = base_dev <= EXAMPLE_TOL
    found = abs(lowest - expected) <= EXAMPLE_TOL and all(dev <= EXAMPLE_TOL for dev in pendant_dev)
    report = PendantEdgeReport(
        omega=omega_pendant,
        pendant_eigenvalue=lowest,
        expected=expected,
        base_spectrum_preserved=preserved,
        max_base_deviation=base_dev,
        pendant_levels_found=found,
        verdict=preserved and found,
    )
    if report.verdict:
        logger.success(f"Pendant level {lowest:.6f} matches 1 + omega = {expected}")
    else:
        logger.warning(f"Pendant comparison failed: {lowest:.6f} vs {expected}, base {base_dev:.2e}")
    return report


class ExperimentPipeline:
    """Complete pipeline for running one configured experiment."""

    def __init__(self, output_dir: Optional[str] = None, workers: Optional[int] = None):
        """
        Initialize the experiment pipeline.

        Args:
            output_dir: Artifact root (QGRAPH_OUTPUT_DIR, then data/runs, when omitted)
            workers: Monte-Carlo worker count (QGRAPH_WORKERS when omitted)
        """
        # Load environment variables
        load_dotenv()

        self.output_dir = Path(output_dir or os.getenv(OUTPUT_ENV, DEFAULT_OUTPUT_DIR))
        self.workers = workers
        self.handlers: Dict[str, Callable[..., Artifacts]] = {
            "build-graph": self._build_graph,
            "spectrum": self._spectrum,
            "counting": self._counting,
            "cover": self._cover,
            "good-ball": self._good_ball,
            "wegner": self._wegner,
            "ilse": self._ilse,
            "ct-decay": self._ct_decay,
            "gri-check": self._gri_check,
            "params-validate": self._params_validate,
            "msa-step": self._msa_step,
            "pendant-edge": self._pendant_edge,
        }

        logger.info("Initialized experiment pipeline")
        logger.info(f"Output directory: {self.output_dir}")

    def load_config(self, file_path: str) -> ExperimentConfig:
        """
        Load an experiment config from a JSON file.

        Args:
            file_path: Path to the config file

        Returns:
            Validated ExperimentConfig
        """
        text = Path(file_path).read_text(encoding="utf-8")
        return ExperimentConfig.model_validate_json(text)

    def run(self, config: ExperimentConfig) -> RunResult:
        """
        Run one experiment and write its artifacts.

        Args:
            config: Validated experiment config

        Returns:
            RunResult with status 0 on success, nonzero with the failure otherwise
        """
        try:
            logger.info(f"Running experiment {config.kind} with seed {config.seed}")
            out_dir = Path(config.output_dir) if config.output_dir else self.output_dir

            # Step 1: Build graph and vertex conditions
            g, conds = None, None
            if config.graph is not None:
                logger.info("Step 1: Building graph and vertex conditions...")
                g = build_graph(config.graph)
                conds = conditions_from_spec(g, config.conditions, config.condition_overrides)
                logger.info(f"Graph with {g.num_vertices} vertices, {g.num_edges} edges")

            # Step 2: Run the experiment
            logger.info(f"Step 2: Running {config.kind}...")
            summary, rows, plot = self.handlers[config.kind](config, g, conds)

            # Step 3: Write artifacts
            logger.info("Step 3: Writing artifacts...")
            summary = {"kind": config.kind, "seed": config.seed, **summary}
            artifacts = self.write_artifacts(out_dir / config.kind, summary, rows, plot)
            if config.kind == "build-graph":
                artifacts["graph"] = str(save_graph(g, str(out_dir / config.kind / "graph.json")))

            logger.success(f"Experiment {config.kind} complete")
            return RunResult(status=0, message="ok", artifacts=artifacts)

        except (QGraphError, ValidationError, ValueError, KeyError, FileNotFoundError) as e:
            logger.error(f"Experiment {config.kind} failed: {e}")
            return RunResult(status=1, message=str(e))

    def run_file(self, file_path: str, seed: Optional[int] = None) -> RunResult:
        """Load a config (optionally overriding its seed) and run it."""
        try:
            config = self.load_config(file_path)
            if seed is not None:
                config = ExperimentConfig.model_validate({**config.model_dump(), "seed": seed})
        except (ValidationError, ValueError, FileNotFoundError) as e:
            logger.error(f"Invalid config {file_path}: {e}")
            return RunResult(status=2, message=str(e))
        return self.run(config)

    def write_artifacts(
        self,
        kind_dir: Path,
        summary: Dict[str, Any],
        rows: Sequence[Dict[str, Any]],
        plot: Sequence[Dict[str, Any]],
    ) -> Dict[str, str]:
        """
        Save the JSON summary and the two CSV files.

        Args:
            kind_dir: Directory for this experiment kind
            summary: JSON-serializable summary
            rows: One record per sample (may be empty)
            plot: x,y records

        Returns:
            Mapping artifact name -> path
        """
        kind_dir.mkdir(parents=True, exist_ok=True)
        summary_path = kind_dir / "summary.json"
        with open(summary_path, "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, ensure_ascii=False, default=_plain)
        samples_path = kind_dir / "samples.csv"
        _write_csv(samples_path, rows)
        plot_path = kind_dir / "plot_data.csv"
        _write_csv(plot_path, plot, fields=["x", "y"])
        logger.info(f"Saved artifacts to: {kind_dir}")
        return {
            "summary": str(summary_path),
            "samples": str(samples_path),
            "plot_data": str(plot_path),
        }

    # shared helpers

    def _region(self, g: MetricGraph, params: Dict[str, Any]) -> InducedSubgraph:
        if "edges" in params:
            return induce(g, params["edges"])
        if "center" in params and "radius" in params:
            return ball(g, resolve_vertex(g, params["center"]), float(params["radius"]))
        return whole_graph(g)

    def _couplings(
        self, config: ExperimentConfig, edge_ids: Sequence[int]
    ) -> Dict[int, float]:
        if "coupling" in config.params:
            return {e: float(config.params["coupling"]) for e in edge_ids}
        return sample_potential(config.potential, config.seed, edge_ids).omega

    def _lambdas(self, params: Dict[str, Any]) -> List[float]:
        if "lambdas" in params:
            return [float(lam) for lam in params["lambdas"]]
        if "interval" in params:
            return chebyshev_grid(tuple(params["interval"]), int(params.get("grid_points", 32)))
        return [float(params["lambda"])]

    # experiment kinds

    def _build_graph(self, config, g, conds) -> Artifacts:
        summary = {"vertices": g.num_vertices, "edges": g.num_edges, "u": g.u, "U": g.U}
        plot = []
        if "growth_radii" in config.params:
            centers = [resolve_vertex(g, c) for c in config.params.get("growth_centers", [0])]
            growth = estimate_growth(g, centers, config.params["growth_radii"])
            summary["growth"] = {"c_P": growth.c_P, "d": growth.d}
            plot = [{"x": s.radius, "y": s.volume} for s in growth.samples]
        rows = [{"edge": e.id, "i": e.i, "j": e.j, "length": e.length} for e in g.edges]
        return summary, rows, plot

    def _spectrum(self, config, g, conds) -> Artifacts:
        params = config.params
        sub = self._region(g, params)
        op = assemble(sub, conds, config.potential, self._couplings(config, sub.edge_ids), config.mesh)
        if "interval" in params:
            values = eigenvalues(op, interval=tuple(params["interval"]))
        else:
            values = eigenvalues(op, count=int(params.get("count", 10)))
        rows = [{"index": k, "eigenvalue": float(v)} for k, v in enumerate(values)]
        summary = {"edges": len(sub), "dimension": op.dim, "eigenvalues": [float(v) for v in values]}
        return summary, rows, [{"x": row["index"], "y": row["eigenvalue"]} for row in rows]

    def _counting(self, config, g, conds) -> Artifacts:
        params = config.params
        sub = self._region(g, params)
        omega = self._couplings(config, sub.edge_ids)
        op = assemble(sub, conds, config.potential, omega, config.mesh)
        dirichlet = assemble(sub, uniform_conditions(g, "dirichlet"), config.potential, omega, config.mesh)
        lambdas = np.linspace(
            float(params.get("lambda_min", -5.0)),
            float(params.get("lambda_max", 50.0)),
            int(params.get("points", 50)),
        )
        counts = counting_function(op, lambdas)
        dirichlet_counts = counting_function(dirichlet, lambdas)
        max_gap, bound = counting_gap_check(op, dirichlet, lambdas)
        summary: Dict[str, Any] = {"max_gap": max_gap, "bound": bound, "verdict": max_gap <= bound}
        if {"c_P", "d", "r"} <= params.keys():
            report = weyl_check(
                op, params["c_P"], params["d"], params["r"], (lambdas[0], lambdas[-1]), len(lambdas)
            )
            summary["weyl"] = report.model_dump(include={"verdict", "margin", "fitted"})
        rows = [
            {"lambda": float(lam), "count": int(a), "dirichlet_count": int(b)}
            for lam, a, b in zip(lambdas, counts, dirichlet_counts)
        ]
        return summary, rows, [{"x": row["lambda"], "y": row["count"]} for row in rows]

    def _cover(self, config, g, conds) -> Artifacts:
        params = config.params
        x = resolve_vertex(g, params["center"])
        R, r = float(params["R"]), float(params["r"])
        packing = maximal_packing(g, x, R, r)
        covered, uncovered = verify_covering(g, x, R, r, packing)
        summary: Dict[str, Any] = {
            "centers": len(packing.centers),
            "covered": covered,
            "uncovered_edges": uncovered,
        }
        if {"c_P", "d"} <= params.keys():
            lower, upper = packing_cardinality_bounds(R, r, g.U, params["c_P"], params["d"])
            summary["cardinality_bounds"] = [lower, upper]
            summary["cardinality_ok"] = lower <= len(packing.centers) <= upper
        if "bad_centers" in params:
            containers = build_containers(
                g, x, R, r,
                [resolve_vertex(g, b) for b in params["bad_centers"]],
                allow_outside_regime=bool(params.get("allow_outside_regime", False)),
            )
            summary["containers"] = containers.model_dump()
        rows = [{"center": c} for c in packing.centers]
        return summary, rows, []

    def _good_ball(self, config, g, conds) -> Artifacts:
        params = config.params
        v = resolve_vertex(g, params["center"])
        r, n = float(params["r"]), float(params["n"])
        lambdas = self._lambdas(params)
        if "center2" in params:
            report = estimate_G(
                g, conds, config.potential, lambdas, r, n, float(params["xi"]),
                v, resolve_vertex(g, params["center2"]),
                config.n_samples, config.seed, config.mesh, self.workers,
            )
            return report.model_dump(), report.rows, report.plot

        sub = ball(g, v, r)

        def run(k: int) -> List[Dict[str, Any]]:
            omega = sample_potential(config.potential, config.seed, sub.edge_ids, k).omega
            op = assemble(sub, conds, config.potential, omega, config.mesh)
            return [
                {
                    "sample": k,
                    "lambda": verdict.lam,
                    "block_norm": verdict.block_norm,
                    "resonance_distance": verdict.resonance_distance,
                    "good": verdict.good,
                }
                for verdict in classify_ball(op, v, r, lambdas, n)
            ]

        rows = [row for batch in map_samples(run, config.n_samples, self.workers) for row in batch]
        fraction = sum(row["good"] for row in rows) / len(rows)
        plot = [
            {"x": lam, "y": sum(row["good"] for row in rows if row["lambda"] == lam) / config.n_samples}
            for lam in lambdas
        ]
        return {"r": r, "n": n, "good_fraction": fraction}, rows, plot

    def _wegner(self, config, g, conds) -> Artifacts:
        params = config.params
        sub = self._region(g, params)
        report = wegner_experiment(
            g, conds, config.potential, sub.edge_ids, float(params["lambda"]), params["eps"],
            config.n_samples, config.seed, params.get("C_W"), config.mesh, self.workers,
        )
        return report.model_dump(), report.rows, report.plot

    def _ilse(self, config, g, conds) -> Artifacts:
        params = config.params
        report = ilse_experiment(
            g, conds, config.potential, resolve_vertex(g, params["center"]),
            [float(r) for r in params["radii"]], float(params["beta"]), float(params["xi"]),
            float(params["c_P"]), float(params["d"]),
            config.n_samples, config.seed, config.mesh, self.workers,
        )
        return report.model_dump(), report.rows, report.plot

    def _ct_decay(self, config, g, conds) -> Artifacts:
        params = config.params
        sub = self._region(g, params.get("region", {}))
        op = assemble(sub, conds, config.potential, self._couplings(config, sub.edge_ids), config.mesh)
        pairs = region_pairs_at_distances(
            op, resolve_vertex(g, params["source"]), [float(d) for d in params["deltas"]]
        )
        gap = tuple(params["gap"]) if "gap" in params else None
        report = ct_decay_experiment(op, float(params["lambda"]), pairs, gap)
        return report.model_dump(), report.rows, report.plot

    def _gri_check(self, config, g, conds) -> Artifacts:
        params = config.params
        x, v, v1 = (resolve_vertex(g, params[key]) for key in ("x", "v", "v1"))
        R, s, r = (float(params[key]) for key in ("R", "s", "r"))
        lam = float(params["lambda"])
        edge_ids = ball(g, x, R).edge_ids

        def run(k: int) -> Dict[str, Any]:
            omega = sample_potential(config.potential, config.seed, edge_ids, k).omega
            check = gri_check(
                g, conds, config.potential, omega, x, v, v1, R, s, r, lam,
                params.get("C_GRU"), config.mesh,
            )
            return {"sample": k, "lhs": check.lhs, "rhs": check.rhs, "ratio": check.ratio}

        rows = map_samples(run, config.n_samples, self.workers)
        max_ratio = max(row["ratio"] for row in rows)
        summary: Dict[str, Any] = {"R": R, "s": s, "r": r, "lambda": lam, "max_ratio": max_ratio}
        if "C_GRU" in params:
            summary["verdict"] = max_ratio <= params["C_GRU"]
        return summary, rows, [{"x": row["sample"], "y": row["ratio"]} for row in rows]

    def _params_validate(self, config, g, conds) -> Artifacts:
        params = config.params
        candidate = MsaParams(**params["candidate"]) if "candidate" in params else None
        d = float(params.get("d", candidate.d if candidate else 1.0))
        tau = float(params.get("tau", candidate.tau if candidate else config.potential.disorder_exponent))
        chosen, certificate = validate_params(d, tau, candidate)
        summary = {"params": chosen.model_dump(), "certificate": certificate.model_dump()}
        rows = [{"relation": name, "holds": holds} for name, holds in certificate.relations.items()]
        return summary, rows, []

    def _msa_params(self, config) -> MsaParams:
        params = config.params
        if "msa" in params:
            return MsaParams(**params["msa"])
        chosen, _ = validate_params(float(params.get("d", 1.0)), config.potential.disorder_exponent)
        overrides = params.get("overrides", {})
        return MsaParams(**{**chosen.model_dump(), **overrides})

    def _msa_step(self, config, g, conds) -> Artifacts:
        params = config.params
        msa = self._msa_params(config)
        x, y = resolve_vertex(g, params["x"]), resolve_vertex(g, params["y"])
        radii = [float(r) for r in params.get("radii") or [params["r"]]]
        sigma0 = None
        reports = []
        for r in radii:
            if "interval" in params or "lambdas" in params:
                lambdas = self._lambdas(params)
            else:
                if sigma0 is None:
                    sigma0 = ground_energy(g, conds, config.potential, config.mesh)
                lambdas = chebyshev_grid(
                    (sigma0, sigma0 + 0.5 * r ** (msa.beta - 2)), int(params.get("grid_points", 32))
                )
            reports.append(
                induction_step_experiment(
                    g, conds, config.potential, msa, lambdas, r,
                    config.n_samples, config.seed, x, y, config.mesh, self.workers,
                )
            )
        summary = {
            "params": msa.model_dump(),
            "scales": [report.model_dump() for report in reports],
            "first_pass_radius": first_pass_radius(reports),
        }
        rows = [{"r": report.details["r"], **row} for report in reports for row in report.rows]
        plot = [{"x": report.details["R"], "y": report.p_hat} for report in reports]
        return summary, rows, plot

    def _pendant_edge(self, config, g, conds) -> Artifacts:
        params = config.params
        vertex = resolve_vertex(g, params.get("vertex", 0))
        reports = [
            pendant_edge_check(
                g, conds, config.potential, vertex, float(omega), config.seed,
                config.mesh, float(params.get("lam_max", 30.0)),
            )
            for omega in params.get("omegas", [1.5])
        ]
        summary = {
            "verdict": all(report.verdict for report in reports),
            "reports": [report.model_dump() for report in reports],
        }
        rows = [report.model_dump() for report in reports]
        plot = [{"x": report.omega, "y": report.pendant_eigenvalue} for report in reports]
        return summary, rows, plot


def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    raise TypeError(f"not serializable: {type(value).__name__}")


def _write_csv(path: Path, records: Sequence[Dict[str, Any]], fields: Optional[List[str]] = None):
    if fields is None:
        fields = []
        for record in records:
            fields.extend(key for key in record if key not in fields)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for record in records:
            writer.writerow({key: _cell(record.get(key)) for key in fields})


def _cell(value: Any) -> Any:
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, default=_plain, sort_keys=True)
    if isinstance(value, np.generic):
        return value.item()
    return value
