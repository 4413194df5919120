"""Sparse reconstruction engines for grid imaging.

All solvers take a sensing operator (see ``imaging.dictionary``) or a plain
matrix, the measurement vector and a :class:`SolverConfig`, and return a
:class:`SparseImage`. None of them raises on non-convergence; the result is
flagged and a warning is logged instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import scipy.linalg

from displaced_radar.errors import ConfigurationError, ConfigValidationError, UndefinedMetricError
from displaced_radar.imaging.dictionary import BlockDictionary, MatrixOperator, SensingOperator, image_magnitude

logger = logging.getLogger(__name__)

_RELATIVE_RESIDUAL_FLOOR = 1e-12
_POWER_ITERATIONS = 60


@dataclass
class SolverConfig:
    """Stopping rules and hyperparameters shared by the solvers.

    Attributes:
        max_sparsity: Greedy iteration cap and support size limit.
        residual_tol: Greedy stop once the residual norm falls to this value.
        l1_weight: Weight μ of the ℓ1 penalty; derived from ``noise_variance`` when None.
        noise_variance: Per-sample noise variance, used for defaults only.
        rvm_hyper: Gamma hyperparameters (a1, b1, a2, b2).
        max_iters: Iteration cap of the ℓ1 and RVM loops.
        l1_tol: Relative iterate change that ends the shrinkage loop.
        l1_support_threshold: Magnitude, relative to the largest, kept as support after shrinkage.
        rvm_tol: Relative precision change that ends the RVM loop.
        rvm_max_active: Size of the initial RVM candidate set.
        rvm_prune_ratio: Cells with β⁻¹ below this fraction of the largest are pruned.
        rvm_refit: Least-squares refit on the surviving RVM cells.
        learn_hyperparameters: Update β and σ² (False gives ridge regression).
    """

    max_sparsity: int = 10
    residual_tol: float = 1e-9
    l1_weight: Optional[float] = None
    noise_variance: Optional[float] = None
    rvm_hyper: Tuple[float, float, float, float] = (1e-6, 1e-6, 1e-6, 1e-6)
    max_iters: int = 500
    l1_tol: float = 1e-7
    l1_support_threshold: float = 1e-3
    rvm_tol: float = 1e-4
    rvm_max_active: int = 256
    rvm_prune_ratio: float = 1e-3
    rvm_refit: bool = True
    learn_hyperparameters: bool = True

    def __post_init__(self):
        self.rvm_hyper = tuple(float(v) for v in self.rvm_hyper)  # type: ignore[assignment]
        errors = self.validate()
        if errors:
            raise ConfigValidationError(errors)

    def validate(self) -> List[str]:
        errors: List[str] = []
        if self.max_sparsity < 1:
            errors.append("max_sparsity must be >= 1")
        if not self.residual_tol > 0:
            errors.append("residual_tol must be > 0")
        if self.l1_weight is not None and not self.l1_weight > 0:
            errors.append("l1_weight must be > 0")
        if self.noise_variance is not None and self.noise_variance < 0:
            errors.append("noise_variance must be >= 0")
        if len(self.rvm_hyper) != 4 or any(v < 0 for v in self.rvm_hyper):
            errors.append("rvm_hyper must be four non-negative values (a1, b1, a2, b2)")
        if self.max_iters < 1:
            errors.append("max_iters must be >= 1")
        for name in ("l1_tol", "rvm_tol", "rvm_prune_ratio", "l1_support_threshold"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be > 0")
        if self.rvm_max_active < 1:
            errors.append("rvm_max_active must be >= 1")
        return errors

    @classmethod
    def for_noise(cls, n_rows: int, noise_variance: float, expected_targets: int, **overrides) -> "SolverConfig":
        """Noise-floor stopping: residual_tol = 1.1 sqrt(P σ²), max_sparsity = 2 x expected targets."""
        settings: Dict[str, Any] = {
            "max_sparsity": max(1, 2 * expected_targets),
            "residual_tol": max(1.1 * math.sqrt(n_rows * noise_variance), 1e-9),
            "noise_variance": noise_variance,
        }
        settings.update(overrides)
        return cls(**settings)

    def with_changes(self, **changes) -> "SolverConfig":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["rvm_hyper"] = list(self.rvm_hyper)
        return data


@dataclass
class SparseImage:
    """Recovered coefficients over the grid.

    ``coefficients`` has one entry per dictionary column: L for coherent
    dictionaries, L*Q (cell-major) for block dictionaries. ``support`` lists
    the selected cells; ``indices`` the selected coefficient positions.
    """

    coefficients: np.ndarray
    support: Tuple[int, ...]
    residual_norm: float
    iterations: int
    converged: bool = True
    block_size: int = 1
    indices: Tuple[int, ...] = ()
    noise_variance: Optional[float] = None
    method: str = ""
    residual_history: List[float] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_cells(self) -> int:
        return self.coefficients.size // self.block_size

    def cell_coefficients(self) -> np.ndarray:
        """Coefficients reshaped to (L, block_size)."""
        return self.coefficients.reshape(-1, self.block_size)

    def magnitude(self) -> np.ndarray:
        return image_magnitude(self.coefficients, self.block_size)


def _as_operator(operator: Union[SensingOperator, np.ndarray]) -> SensingOperator:
    if isinstance(operator, np.ndarray):
        return MatrixOperator(operator)
    return operator


def _check_inputs(op: SensingOperator, data: np.ndarray, config: SolverConfig) -> np.ndarray:
    data = np.asarray(data, dtype=complex).reshape(-1)
    if data.size != op.shape[0]:
        raise ConfigurationError(f"data length {data.size} does not match operator rows {op.shape[0]}")
    n_cells = op.shape[1] // op.block_size
    if config.max_sparsity > n_cells:
        raise ConfigurationError(f"max_sparsity {config.max_sparsity} exceeds the {n_cells} grid cells")
    return data


def _empty_image(op: SensingOperator, method: str, data_norm: float = 0.0) -> SparseImage:
    return SparseImage(
        coefficients=np.zeros(op.shape[1], dtype=complex),
        support=(),
        residual_norm=data_norm,
        iterations=0,
        converged=True,
        block_size=op.block_size,
        method=method,
        residual_history=[data_norm],
    )


def _refit(op: SensingOperator, data: np.ndarray, indices: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Least-squares coefficients on ``indices`` and the resulting residual."""
    columns = op.columns(indices)
    values, *_ = scipy.linalg.lstsq(columns, data, lapack_driver="gelsy")
    return values, data - columns @ values


def _scatter(op: SensingOperator, indices: Sequence[int], values: np.ndarray) -> np.ndarray:
    coefficients = np.zeros(op.shape[1], dtype=complex)
    coefficients[np.asarray(indices, dtype=int)] = values
    return coefficients


def _cells(indices: Sequence[int], block_size: int) -> Tuple[int, ...]:
    return tuple(sorted({int(i) // block_size for i in indices}))


def _finish(
    image: SparseImage, *, warn_reason: Optional[str] = None
) -> SparseImage:
    if not image.converged:
        logger.warning("%s did not converge after %d iterations: %s", image.method, image.iterations, warn_reason)
    else:
        logger.debug(
            "%s finished: %d cells, residual %.3e after %d iterations",
            image.method, len(image.support), image.residual_norm, image.iterations,
        )
    return image


def omp(operator: Union[SensingOperator, np.ndarray], data: np.ndarray, config: SolverConfig) -> SparseImage:
    """Orthogonal matching pursuit over individual columns.

    Selection uses correlations against unit-normalised columns, ties go to
    the lowest index, and every iteration refits all selected columns.
    """
    op = _as_operator(operator)
    data = _check_inputs(op, data, config)
    data_norm = float(np.linalg.norm(data))
    if data_norm == 0.0:
        return _empty_image(op, "omp")

    norms = op.column_norms()
    inverse_norms = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    stop_at = max(config.residual_tol, _RELATIVE_RESIDUAL_FLOOR * data_norm)

    selected: List[int] = []
    values = np.zeros(0, dtype=complex)
    residual = data
    history = [data_norm]
    converged = False
    reason = None
    while len(selected) < config.max_sparsity:
        scores = np.abs(op.adjoint(residual)) * inverse_norms
        scores[selected] = -1.0
        best = int(np.argmax(scores))
        if scores[best] <= 0.0:
            reason = "no column correlates with the residual"
            break
        selected.append(best)
        values, residual = _refit(op, data, selected)
        history.append(float(np.linalg.norm(residual)))
        if history[-1] <= stop_at:
            converged = True
            break
    else:
        converged = True

    image = SparseImage(
        coefficients=_scatter(op, selected, values),
        support=_cells(selected, op.block_size),
        residual_norm=history[-1],
        iterations=len(selected),
        converged=converged,
        block_size=op.block_size,
        indices=tuple(selected),
        method="omp",
        residual_history=history,
    )
    return _finish(image, warn_reason=reason)


def block_grams(op: SensingOperator, chunk_cells: int = 128) -> np.ndarray:
    """Per-cell Gram matrices H_s(Φ_l)^H H_s(Φ_l), shape (L, Q, Q)."""
    q = op.block_size
    n_cells = op.shape[1] // q
    if isinstance(op, BlockDictionary):
        # sensor blocks occupy disjoint rows, so the Gram is diagonal
        grams = np.zeros((n_cells, q, q), dtype=complex)
        squared = op.column_norms().reshape(n_cells, q) ** 2
        grams[:, np.arange(q), np.arange(q)] = squared
        return grams
    grams = np.empty((n_cells, q, q), dtype=complex)
    for start in range(0, n_cells, chunk_cells):
        stop = min(start + chunk_cells, n_cells)
        cols = op.columns(np.arange(start * q, stop * q)).reshape(op.shape[0], stop - start, q)
        grams[start:stop] = np.einsum("dcq,dcp->cqp", cols.conj(), cols)
    return grams


def block_omp(operator: Union[SensingOperator, np.ndarray], data: np.ndarray, config: SolverConfig) -> SparseImage:
    """Block OMP: selects whole cells (Q columns at once) and refits all selected blocks jointly.

    The selection score of cell l is the residual energy captured by its
    block, c_l^H G_l^+ c_l with c_l = H_s(Φ_l)^H r and G_l the block Gram.
    """
    op = _as_operator(operator)
    data = _check_inputs(op, data, config)
    data_norm = float(np.linalg.norm(data))
    if data_norm == 0.0:
        return _empty_image(op, "block_omp")

    q = op.block_size
    grams_pinv = np.linalg.pinv(block_grams(op), hermitian=True)
    stop_at = max(config.residual_tol, _RELATIVE_RESIDUAL_FLOOR * data_norm)

    cells: List[int] = []
    indices: List[int] = []
    values = np.zeros(0, dtype=complex)
    residual = data
    history = [data_norm]
    converged = False
    reason = None
    while len(cells) < config.max_sparsity:
        correlations = op.adjoint(residual).reshape(-1, q)
        scores = np.einsum("lq,lqp,lp->l", correlations.conj(), grams_pinv, correlations).real
        scores[cells] = -1.0
        best = int(np.argmax(scores))
        if scores[best] <= 0.0:
            reason = "no block correlates with the residual"
            break
        cells.append(best)
        indices.extend(range(best * q, (best + 1) * q))
        values, residual = _refit(op, data, indices)
        history.append(float(np.linalg.norm(residual)))
        if history[-1] <= stop_at:
            converged = True
            break
    else:
        converged = True

    image = SparseImage(
        coefficients=_scatter(op, indices, values),
        support=tuple(sorted(cells)),
        residual_norm=history[-1],
        iterations=len(cells),
        converged=converged,
        block_size=q,
        indices=tuple(indices),
        method="block_omp",
        residual_history=history,
    )
    return _finish(image, warn_reason=reason)


def operator_norm_squared(op: SensingOperator, iterations: int = _POWER_ITERATIONS, seed: int = 0) -> float:
    """Largest eigenvalue of H^H H by power iteration."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.shape[1]) + 1j * rng.standard_normal(op.shape[1])
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(iterations):
        y = op.adjoint(op.apply(x))
        estimate = float(np.linalg.norm(y))
        if estimate == 0.0:
            return 0.0
        x = y / estimate
    return estimate


def default_l1_weight(op: SensingOperator, noise_variance: float) -> float:
    """Universal threshold 2 σ sqrt(2 log L) scaled by the largest column norm."""
    n_columns = op.shape[1]
    return 2.0 * math.sqrt(noise_variance) * math.sqrt(2.0 * math.log(max(n_columns, 2))) * float(
        np.max(op.column_norms())
    )


def l1_objective(op: SensingOperator, data: np.ndarray, coefficients: np.ndarray, weight: float) -> float:
    """J = ||r - H b||^2 + μ ||b||_1."""
    residual = data - op.apply(coefficients)
    return float(np.vdot(residual, residual).real + weight * np.sum(np.abs(coefficients)))


def soft_threshold(values: np.ndarray, threshold: float) -> np.ndarray:
    """Complex soft thresholding: shrink magnitudes by ``threshold``, keep phases."""
    magnitude = np.abs(values)
    scale = np.maximum(magnitude - threshold, 0.0) / np.where(magnitude > 0, magnitude, 1.0)
    return values * scale


def l1_map(operator: Union[SensingOperator, np.ndarray], data: np.ndarray, config: SolverConfig) -> SparseImage:
    """MAP estimate under a Laplace prior by iterative shrinkage, then a debiasing refit.

    Minimises J = ||r - H b||^2 + μ ||b||_1 with step 1/(2||H||^2); the
    support is the set of shrinkage survivors above ``l1_support_threshold``
    of the peak, capped at ``max_sparsity`` cells.
    """
    op = _as_operator(operator)
    data = _check_inputs(op, data, config)
    if config.l1_weight is not None:
        weight = config.l1_weight
    elif config.noise_variance:
        weight = default_l1_weight(op, config.noise_variance)
    else:
        raise ConfigurationError("l1_map needs l1_weight or a positive noise_variance")
    data_norm = float(np.linalg.norm(data))
    if data_norm == 0.0:
        return _empty_image(op, "l1_map")

    lipschitz = 2.0 * 1.01 * operator_norm_squared(op)
    step = 1.0 / lipschitz
    coefficients = np.zeros(op.shape[1], dtype=complex)
    objective = [l1_objective(op, data, coefficients, weight)]
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        gradient = 2.0 * op.adjoint(op.apply(coefficients) - data)
        updated = soft_threshold(coefficients - step * gradient, weight * step)
        change = np.linalg.norm(updated - coefficients)
        coefficients = updated
        objective.append(l1_objective(op, data, coefficients, weight))
        if change <= config.l1_tol * max(np.linalg.norm(coefficients), 1e-300):
            converged = True
            break

    q = op.block_size
    magnitudes = image_magnitude(coefficients, q)
    peak = float(magnitudes.max())
    support: List[int] = []
    if peak > 0.0:
        candidates = np.flatnonzero(magnitudes > config.l1_support_threshold * peak)
        order = candidates[np.argsort(-magnitudes[candidates], kind="stable")]
        support = sorted(int(c) for c in order[: config.max_sparsity])
    indices = [cell * q + j for cell in support for j in range(q)]
    if indices:
        values, residual = _refit(op, data, indices)
    else:
        values, residual = np.zeros(0, dtype=complex), data

    image = SparseImage(
        coefficients=_scatter(op, indices, values),
        support=tuple(support),
        residual_norm=float(np.linalg.norm(residual)),
        iterations=iterations,
        converged=converged,
        block_size=q,
        indices=tuple(indices),
        method="l1_map",
        residual_history=[data_norm, float(np.linalg.norm(residual))],
        diagnostics={"objective": objective, "l1_weight": weight, "shrinkage": coefficients},
    )
    return _finish(image, warn_reason="iterate still moving at max_iters")


def _cholesky(matrix: np.ndarray, attempts: int = 3):
    """Cholesky factor with growing diagonal jitter; None when every attempt fails."""
    scale = float(np.trace(matrix).real) / matrix.shape[0]
    jitter = 0.0
    for attempt in range(attempts + 1):
        try:
            return scipy.linalg.cho_factor(matrix + jitter * np.eye(matrix.shape[0]), lower=False, check_finite=False)
        except np.linalg.LinAlgError:
            jitter = scale * 1e-12 * (100.0 ** attempt)
            logger.debug("RVM precision matrix not positive definite; retrying with jitter %.3e", jitter)
    return None


def bcs_rvm(
    operator: Union[SensingOperator, np.ndarray],
    data: np.ndarray,
    config: SolverConfig,
    *,
    noise_variance: Optional[float] = None,
    initial_precision: Optional[Union[float, np.ndarray]] = None,
) -> SparseImage:
    """Bayesian compressed sensing with a complex relevance vector machine.

    Each column has a zero-mean complex Gaussian prior of precision β_i with a
    Gamma(a1, b1) hyperprior; the noise precision has a Gamma(a2, b2)
    hyperprior. Every iteration computes the posterior

        Σ = σ² (H^H H + σ² diag β)^-1,   μ = σ^-2 Σ H^H r,

    then γ_i = 1 - β_i Σ_ii, β_i = (γ_i + a1) / (|μ_i|² + b1) and
    σ² = (||r - H μ||² + b2) / (D - Σ γ + a2). Cells whose β⁻¹ falls below
    ``rvm_prune_ratio`` of the largest are removed from the active set.

    Args:
        operator: Sensing operator or matrix (coherent or compressed data).
        data: Measurement vector.
        config: Solver settings.
        noise_variance: Starting σ²; 10% of the mean data power when omitted.
        initial_precision: Starting β (scalar or per active cell); matched-filter
            amplitudes when omitted.

    Returns:
        SparseImage whose ``noise_variance`` is the final σ² estimate.
    """
    op = _as_operator(operator)
    data = _check_inputs(op, data, config)
    data_norm = float(np.linalg.norm(data))
    if data_norm == 0.0:
        return _empty_image(op, "bcs_rvm")
    a1, b1, a2, b2 = config.rvm_hyper
    n_rows = data.size

    norms = op.column_norms()
    correlation = op.adjoint(data)
    scores = np.abs(correlation) / np.where(norms > 0, norms, np.inf)
    if op.shape[1] <= config.rvm_max_active:
        active = np.arange(op.shape[1])
    else:
        active = np.sort(np.argsort(-scores, kind="stable")[: config.rvm_max_active])
    active = active[norms[active] > 0]

    columns = op.columns(active)
    gram = columns.conj().T @ columns
    projected = correlation[active]
    sigma2 = float(noise_variance) if noise_variance is not None else 0.1 * data_norm ** 2 / n_rows
    sigma2_floor = 1e-10 * data_norm ** 2 / n_rows
    if initial_precision is None:
        amplitude2 = np.abs(projected) ** 2 / norms[active] ** 4
        beta = 1.0 / np.maximum(amplitude2, 1e-12 * amplitude2.max())
    else:
        beta = np.broadcast_to(np.asarray(initial_precision, dtype=float), active.shape).copy()

    gamma_bounds = [math.inf, -math.inf]
    converged = False
    failed = False
    mean = np.zeros(active.size, dtype=complex)
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        factor = _cholesky(gram + sigma2 * np.diag(beta))
        if factor is None:
            failed = True
            break
        mean = scipy.linalg.cho_solve(factor, projected, check_finite=False)
        inverse_diag = np.real(np.diag(scipy.linalg.cho_solve(factor, np.eye(active.size), check_finite=False)))
        sigma_diag = sigma2 * inverse_diag
        gamma = np.clip(1.0 - beta * sigma_diag, 0.0, 1.0)
        gamma_bounds = [min(gamma_bounds[0], float(gamma.min())), max(gamma_bounds[1], float(gamma.max()))]
        if not config.learn_hyperparameters:
            converged = True
            break

        new_beta = (gamma + a1) / (np.abs(mean) ** 2 + b1)
        residual = data - columns @ mean
        sigma2 = max(
            (float(np.vdot(residual, residual).real) + b2) / (n_rows - float(gamma.sum()) + a2), sigma2_floor
        )
        change = float(np.max(np.abs(new_beta - beta) / beta))
        beta = new_beta

        keep = 1.0 / beta >= config.rvm_prune_ratio * np.max(1.0 / beta)
        if not np.all(keep):
            active, beta, mean, projected = active[keep], beta[keep], mean[keep], projected[keep]
            columns = columns[:, keep]
            gram = gram[np.ix_(keep, keep)]
        logger.debug("RVM iteration %d: %d active cells, sigma2=%.3e, max change %.3e", iterations, active.size, sigma2, change)
        if change < config.rvm_tol:
            converged = True
            break

    q = op.block_size
    posterior = _scatter(op, active, mean)
    indices = [int(i) for i in active]
    if config.rvm_refit and indices and not failed:
        values, residual = _refit(op, data, indices)
        coefficients = _scatter(op, indices, values)
    else:
        coefficients = posterior
        residual = data - op.apply(coefficients)

    image = SparseImage(
        coefficients=coefficients,
        support=_cells(indices, q),
        residual_norm=float(np.linalg.norm(residual)),
        iterations=iterations,
        converged=converged and not failed,
        block_size=q,
        indices=tuple(indices),
        noise_variance=sigma2,
        method="bcs_rvm",
        residual_history=[data_norm, float(np.linalg.norm(residual))],
        diagnostics={
            "gamma_min": gamma_bounds[0],
            "gamma_max": gamma_bounds[1],
            "precision": beta,
            "posterior_mean": posterior,
            "factorization_failed": failed,
        },
    )
    reason = "posterior precision matrix not positive definite" if failed else "precision updates still moving"
    return _finish(image, warn_reason=reason)


def nmse(
    truth: np.ndarray, estimate: np.ndarray, target_support: Union[Set[int], Sequence[int]]
) -> Tuple[float, float]:
    """Max-normalised errors over all rows and over the target rows.

    NMSE_all = || α/|α|max - α̂/|α̂|max ||_2, NMSE_target restricts the
    difference to ``target_support``. A zero estimate normalises to zero.
    """
    truth = np.asarray(truth, dtype=complex).reshape(-1)
    estimate = np.asarray(estimate, dtype=complex).reshape(-1)
    if truth.shape != estimate.shape:
        raise ConfigurationError(f"truth length {truth.size} differs from estimate length {estimate.size}")
    truth_peak = float(np.max(np.abs(truth))) if truth.size else 0.0
    if truth_peak == 0.0:
        raise UndefinedMetricError("NMSE undefined for an all-zero truth vector")
    estimate_peak = float(np.max(np.abs(estimate)))
    normalised = estimate / estimate_peak if estimate_peak > 0 else np.zeros_like(estimate)
    difference = truth / truth_peak - normalised
    rows = np.asarray(sorted(target_support), dtype=int)
    return float(np.linalg.norm(difference)), float(np.linalg.norm(difference[rows]))


SOLVERS = {
    "omp": omp,
    "block_omp": block_omp,
    "l1_map": l1_map,
    "bcs_rvm": bcs_rvm,
}
