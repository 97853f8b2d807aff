"""
Eigenvalues, the spectral counting function with its comparison bounds, and
resolvent block norms ||1_A (H - lambda)^{-1} 1_B|| of assembled operators.
"""

import math
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.linalg import cholesky, eigh, svdvals
from scipy.sparse.linalg import eigsh

from .exceptions import ConvergenceError, ResonanceError
from .hamiltonian import AssembledOperator, form_lower_bound
from .models import CountingReport

DENSE_LIMIT = 6000
COUNT_TOL = 1e-12
RESONANCE_TOL = 1e-10
RESIDUAL_TOL = 1e-8
SVD_LIMIT = 2000


def _dense_pencil(op: AssembledOperator) -> Tuple[np.ndarray, np.ndarray]:
    return op.Ar.toarray(), op.Mr.toarray()


def full_spectrum(op: AssembledOperator) -> np.ndarray:
    """All generalized eigenvalues of the reduced pencil, cached on the operator."""
    if op.spectrum_cache is None:
        if op.dim == 0:
            op.spectrum_cache = np.zeros(0)
        elif op.dim <= DENSE_LIMIT:
            A, M = _dense_pencil(op)
            op.spectrum_cache = eigh(A, M, eigvals_only=True)
        else:
            raise ValueError(
                f"reduced dimension {op.dim} too large for a full spectrum; query an interval"
            )
    return op.spectrum_cache


def _check_residuals(op: AssembledOperator, values: np.ndarray, vectors: np.ndarray) -> None:
    scale_a = abs(op.Ar).sum(axis=0).max()
    scale_m = abs(op.Mr).sum(axis=0).max()
    for k, lam in enumerate(values):
        x = vectors[:, k]
        residual = np.linalg.norm(op.Ar @ x - lam * (op.Mr @ x))
        size = np.linalg.norm(x) * (scale_a + abs(lam) * scale_m)
        if residual > RESIDUAL_TOL * size:
            raise ConvergenceError(f"eigenpair {k} residual {residual:.2e} above tolerance")


def _sparse_eigs(op: AssembledOperator, count: int, sigma: float):
    k = min(count, op.dim - 1)
    values, vectors = eigsh(op.Ar, k=k, M=op.Mr, sigma=sigma, which="LM")
    order = np.argsort(values)
    return values[order], vectors[:, order]


def eigenvalues(
    op: AssembledOperator,
    count: Optional[int] = None,
    interval: Optional[Tuple[float, float]] = None,
    return_vectors: bool = False,
) -> Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """
    Lowest eigenvalues (count) or eigenvalues inside a closed interval, ascending.

    Eigenvectors are returned as nodal values on the assembled edges. An interval
    without spectrum gives an empty result.
    """
    if (count is None) == (interval is None):
        raise ValueError("pass exactly one of count or interval")
    if op.dim == 0:
        empty = np.zeros(0)
        return (empty, np.zeros((op.n_dofs, 0))) if return_vectors else empty

    if op.dim <= DENSE_LIMIT:
        spectrum = full_spectrum(op)
        if count is not None:
            lo_index, hi_index = 0, min(count, op.dim) - 1
        else:
            lo, hi = interval
            lo_index = int(np.searchsorted(spectrum, lo - COUNT_TOL, side="left"))
            hi_index = int(np.searchsorted(spectrum, hi + COUNT_TOL, side="right")) - 1
        if hi_index < lo_index:
            empty = np.zeros(0)
            return (empty, np.zeros((op.n_dofs, 0))) if return_vectors else empty
        if not return_vectors:
            return spectrum[lo_index : hi_index + 1].copy()
        A, M = _dense_pencil(op)
        values, vectors = eigh(A, M, subset_by_index=[lo_index, hi_index])
    else:
        if count is not None:
            sigma = form_lower_bound(op.conditions, op.parent.u, op.spec) - 1.0
            values, vectors = _sparse_eigs(op, count, sigma)
        else:
            lo, hi = interval
            want = 8
            while True:
                values, vectors = _sparse_eigs(op, want, (lo + hi) / 2.0)
                # shift at the midpoint: passing either end covers the interval
                covers = values.min() < lo or values.max() > hi
                if covers or want >= op.dim - 1:
                    break
                want *= 2
            keep = (values >= lo - COUNT_TOL) & (values <= hi + COUNT_TOL)
            values, vectors = values[keep], vectors[:, keep]
    _check_residuals(op, values, vectors)
    return (values, op.lift(vectors)) if return_vectors else values


def counting(op: AssembledOperator, lam: float) -> int:
    """n(lambda): eigenvalues <= lambda, with multiplicity."""
    if op.dim <= DENSE_LIMIT:
        return int(np.searchsorted(full_spectrum(op), lam + COUNT_TOL, side="right"))
    floor = form_lower_bound(op.conditions, op.parent.u, op.spec) - 1.0
    return int(len(eigenvalues(op, interval=(floor, lam))))


def counting_function(op: AssembledOperator, lambdas: Sequence[float]) -> np.ndarray:
    return np.array([counting(op, lam) for lam in lambdas], dtype=int)


def counting_gap_check(
    op1: AssembledOperator, op2: AssembledOperator, lambdas: Sequence[float]
) -> Tuple[int, int]:
    """Largest |n_1 - n_2| on the grid and the bound 2|E|."""
    same_edges = op1.edge_ids == op2.edge_ids and (
        op1.parent is op2.parent or op1.parent.edges == op2.parent.edges
    )
    if not same_edges:
        raise ValueError("counting comparison needs two realizations on the same graph")
    if op1.omega != op2.omega or op1.spec != op2.spec:
        raise ValueError("counting comparison needs the same potential")
    gap = np.abs(counting_function(op1, lambdas) - counting_function(op2, lambdas))
    return int(gap.max(initial=0)), 2 * len(op1.edge_ids)


def interval_counting_formula(length: float, lam: float) -> int:
    """Dirichlet interval: floor((l/pi) sqrt(lambda)) for lambda >= 0."""
    if lam < 0:
        return 0
    return int(math.floor(length / math.pi * math.sqrt(lam) + COUNT_TOL))


def dirichlet_count_bound(lam: float, U: float, n_edges: int) -> float:
    return U / math.pi * math.sqrt(max(lam, 0.0)) * n_edges


def perturbed_count_bound(lam: float, U: float, n_edges: int, w_norm: float) -> float:
    """|E| [2 + (U/pi)(sqrt(lambda) + ||W||)], valid for lambda >= -||W||."""
    return n_edges * (2.0 + U / math.pi * (math.sqrt(max(lam, 0.0)) + w_norm))


def weyl_bound(
    lam: float, c_P: float, d: float, r: float, u: float, U: float, C_pot: float
) -> float:
    """Weyl-type count bound; sqrt(lambda) is taken as 0 for -C_pot <= lambda < 0."""
    if lam < -C_pot:
        return 2.0 * c_P * r**d / u
    return (2.0 + (math.sqrt(max(lam, 0.0)) + math.sqrt(C_pot)) * U / math.pi) * c_P * r**d / u


def weyl_check(
    op: AssembledOperator,
    c_P: float,
    d: float,
    r: float,
    lam_interval: Tuple[float, float],
    points: int = 64,
) -> CountingReport:
    """Compare n(lambda) of a ball restriction with the Weyl-type bound."""
    g = op.parent
    lambdas = np.linspace(lam_interval[0], lam_interval[1], points)
    counts = counting_function(op, lambdas)
    bounds = np.array(
        [weyl_bound(lam, c_P, d, r, g.u, g.U, op.spec.C_pot) for lam in lambdas]
    )
    ok = counts <= bounds
    margin = float(np.min(bounds - counts))
    if not ok.all():
        logger.warning(f"Weyl bound violated at {int((~ok).sum())} grid points")
    return CountingReport(
        lambdas=lambdas.tolist(),
        counts=counts.tolist(),
        bounds=bounds.tolist(),
        ok=ok.tolist(),
        verdict=bool(ok.all()),
        margin=margin,
        fitted={"C_Weyl": float(bounds.max() / r**d)},
    )


def distance_to_spectrum(op: AssembledOperator, lam: float) -> float:
    if op.dim == 0:
        return float("inf")
    if op.dim <= DENSE_LIMIT:
        return float(np.min(np.abs(full_spectrum(op) - lam)))
    values, _ = _sparse_eigs(op, 1, lam)
    return float(abs(values[0] - lam))


def spectral_gap(op: AssembledOperator, lam: float) -> Tuple[float, float]:
    """Nearest eigenvalues strictly below and at-or-above lambda (+-inf when absent)."""
    spectrum = full_spectrum(op)
    below = spectrum[spectrum < lam]
    above = spectrum[spectrum >= lam]
    return (
        float(below.max()) if below.size else -math.inf,
        float(above.min()) if above.size else math.inf,
    )


def resolvent_block_norm(
    op: AssembledOperator,
    lam: float,
    region_a: Iterable[int],
    region_b: Iterable[int],
    method: str = "auto",
    tol: float = 1e-6,
    max_iter: int = 500,
    lu=None,
) -> float:
    """
    ||1_A (H - lambda)^{-1} 1_B|| on discrete functions supported in B.

    The mass matrix is block diagonal per edge, so indicators of edge sets act
    exactly on nodal values. "svd" takes the singular values of the
    mass-weighted block; "power" iterates the composed map T* T.
    """
    a = op.region_dofs(region_a)
    b = op.region_dofs(region_b)
    if a.size == 0 or b.size == 0:
        return 0.0
    gap = distance_to_spectrum(op, lam)
    if gap <= RESONANCE_TOL:
        raise ResonanceError(f"lambda = {lam} lies within {gap:.1e} of the spectrum")
    lu = lu or op.factorize(lam)
    Za, Zb = op.Z[a], op.Z[b]
    Ma = op.mass[a][:, a]
    Mb = op.mass[b][:, b]
    if method == "auto":
        method = "svd" if max(a.size, b.size) <= SVD_LIMIT else "power"

    if method == "svd":
        La = cholesky(Ma.toarray(), lower=True)
        Lb = cholesky(Mb.toarray(), lower=True)
        solved = lu.solve(np.asarray(Zb.T @ Lb))
        block = La.T @ np.asarray(Za @ solved)
        return float(svdvals(block)[0])

    if method != "power":
        raise ValueError(f"unknown block-norm method {method}")
    y = np.random.default_rng(0).standard_normal(b.size)
    previous = 0.0
    for _ in range(max_iter):
        w = lu.solve(Zb.T @ (Mb @ y))
        ua = Za @ w
        mu = float(ua @ (Ma @ ua)) / float(y @ (Mb @ y))
        if abs(mu - previous) <= tol * mu or mu == 0.0:
            return math.sqrt(mu)
        ty = Zb @ lu.solve(Za.T @ (Ma @ ua))
        y = ty / math.sqrt(float(ty @ (Mb @ ty)))
        previous = mu
    raise ConvergenceError(f"block-norm power iteration did not converge in {max_iter} steps")
