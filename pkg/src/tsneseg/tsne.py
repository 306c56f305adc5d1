"""Exact-gradient t-SNE with early and late exaggeration.

All affinities are dense n x n matrices, so this is meant for a few thousand
points at most.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np

from .dataset import Dataset

logger = logging.getLogger(__name__)

AFFINITY_FLOOR = 1e-12
_PERPLEXITY_TOL = 1e-4
_MAX_SEARCH_STEPS = 200


class CalibrationWarning(RuntimeWarning):
    """Bandwidth search stopped before reaching the target perplexity."""


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    n_iterations: int = 1000
    early_exaggeration_factor: float = 12.0
    early_exaggeration_iters: int = 250
    late_exaggeration_factor: float = 1.0
    late_exaggeration_start: int = 800
    learning_rate: float = 200.0
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch_iter: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.perplexity <= 0:
            raise ValueError("perplexity must be positive")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.early_exaggeration_factor <= 0:
            raise ValueError("early_exaggeration_factor must be positive")
        if self.late_exaggeration_factor < 1:
            raise ValueError("late_exaggeration_factor must be >= 1")
        if not (0 <= self.early_exaggeration_iters < self.late_exaggeration_start <= self.n_iterations):
            raise ValueError(
                "need early_exaggeration_iters < late_exaggeration_start <= n_iterations, got "
                f"{self.early_exaggeration_iters}, {self.late_exaggeration_start}, {self.n_iterations}"
            )
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for name in ("momentum_initial", "momentum_final"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Embedding:
    coords: np.ndarray
    final_kl: float
    config_used: TsneConfig

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]


def pairwise_sq_distances(points: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance matrix; exactly symmetric with a zero diagonal."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d, 0.0, out=d)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def _row_entropy_bits(sq_dist: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    shifted = sq_dist - sq_dist.min()
    w = np.exp(-beta * shifted)
    total = w.sum()
    p = w / total
    # H = log Z + beta * E[d], in nats, on the shifted distances
    h_nats = np.log(total) + beta * float(np.dot(p, shifted))
    return h_nats / np.log(2.0), p


def calibrate_bandwidth(sq_dist_row: np.ndarray, target_perplexity: float) -> float:
    """Find the Gaussian precision whose neighbor distribution has the target perplexity.

    ``sq_dist_row`` holds squared distances to every *other* point (self
    excluded). The conditional distribution is ``exp(-beta * d)`` normalized;
    beta is found by doubling/halving until bracketed, then bisection. If the
    target cannot be met within the step budget a ``CalibrationWarning`` is
    issued and the best precision seen is returned.
    """
    d = np.asarray(sq_dist_row, dtype=float)
    if d.size < 2:
        raise ValueError("need at least two neighbors to calibrate a bandwidth")
    target_h = np.log2(target_perplexity)
    beta, lo, hi = 1.0, 0.0, np.inf
    best_beta, best_err = beta, np.inf
    for _ in range(_MAX_SEARCH_STEPS):
        h, _ = _row_entropy_bits(d, beta)
        err = abs(2.0**h - target_perplexity)
        if err < best_err:
            best_beta, best_err = beta, err
        if err < _PERPLEXITY_TOL:
            return beta
        if h > target_h:
            lo = beta
            beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
        else:
            hi = beta
            beta = beta * 0.5 if lo == 0.0 else 0.5 * (beta + lo)
        if lo > 0 and hi < np.inf and hi - lo <= 1e-15 * hi:
            break
    warnings.warn(
        f"perplexity search stopped at {2.0 ** _row_entropy_bits(d, best_beta)[0]:.6g} "
        f"(target {target_perplexity})",
        CalibrationWarning,
        stacklevel=2,
    )
    return best_beta


def conditional_probabilities(points: np.ndarray, perplexity: float) -> np.ndarray:
    """Row-stochastic matrix of p_{j|i}, each row calibrated to ``perplexity``."""
    d2 = pairwise_sq_distances(points)
    n = d2.shape[0]
    cond = np.zeros((n, n))
    others = ~np.eye(n, dtype=bool)
    for i in range(n):
        row = d2[i, others[i]]
        beta = calibrate_bandwidth(row, perplexity)
        _, p = _row_entropy_bits(row, beta)
        cond[i, others[i]] = p
    return cond


def joint_probabilities(d: Dataset | np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized affinities ``(p_{j|i} + p_{i|j}) / 2n``; sums to one, zero diagonal."""
    x = d.values if isinstance(d, Dataset) else np.asarray(d, dtype=float)
    if x.shape[0] < 4:
        raise ValueError("joint_probabilities needs at least 4 points")
    cond = conditional_probabilities(x, perplexity)
    p = (cond + cond.T) / (2.0 * x.shape[0])
    return p


def _student_kernel(coords: np.ndarray) -> np.ndarray:
    w = 1.0 / (1.0 + pairwise_sq_distances(coords))
    np.fill_diagonal(w, 0.0)
    return w


def kl_divergence(P: np.ndarray, coords: np.ndarray) -> float:
    """KL(P || Q) for the heavy-tailed output affinities Q of ``coords``."""
    w = _student_kernel(coords)
    q = w / w.sum()
    mask = P > 0
    return float(max(np.sum(P[mask] * np.log(P[mask] / q[mask])), 0.0))


def kl_gradient(P: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Analytic gradient ``4 sum_j (p_ij - q_ij) w_ij (y_i - y_j)``."""
    y = np.asarray(coords, dtype=float)
    # in-place kernel build; this is the hot loop of the optimizer
    sq = np.einsum("ij,ij->i", y, y)
    w = y @ y.T
    w *= -2.0
    w += sq[:, None]
    w += sq[None, :]
    np.maximum(w, 0.0, out=w)
    w += 1.0
    np.reciprocal(w, out=w)
    np.fill_diagonal(w, 0.0)
    m = w * (-1.0 / w.sum())
    m += P
    m *= w
    return 4.0 * (m.sum(axis=1)[:, None] * y - m @ y)


def floored_affinities(P: np.ndarray) -> np.ndarray:
    """Raise off-diagonal entries to the affinity floor and renormalize to sum one."""
    out = np.maximum(P, AFFINITY_FLOOR)
    np.fill_diagonal(out, 0.0)
    return out / out.sum()


def effective_perplexity(perplexity: float, n_points: int) -> float:
    """Clamp perplexity to (n - 1) / 3 so tiny inputs still have a solvable search."""
    limit = (n_points - 1) / 3.0
    return perplexity if perplexity <= limit else limit


def initial_coords(n_points: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).normal(0.0, 1e-4, size=(n_points, 2))


def embed(d: Dataset | np.ndarray, cfg: TsneConfig | None = None) -> Embedding:
    """Embed the rows of ``d`` in the plane by momentum gradient descent on KL(P || Q)."""
    cfg = cfg or TsneConfig()
    x = d.values if isinstance(d, Dataset) else np.asarray(d, dtype=float)
    n = x.shape[0]
    if n < 4:
        raise ValueError("t-SNE needs at least 4 points")
    perplexity = effective_perplexity(cfg.perplexity, n)
    if perplexity != cfg.perplexity:
        logger.warning("perplexity %.4g too large for %d points; using %.4g", cfg.perplexity, n, perplexity)
        cfg = replace(cfg, perplexity=perplexity)

    P = floored_affinities(joint_probabilities(x, perplexity))
    y = initial_coords(n, cfg.seed)
    update = np.zeros_like(y)
    for it in range(cfg.n_iterations):
        if it < cfg.early_exaggeration_iters:
            factor = cfg.early_exaggeration_factor
        elif it >= cfg.late_exaggeration_start:
            factor = cfg.late_exaggeration_factor
        else:
            factor = 1.0
        momentum = cfg.momentum_initial if it < cfg.momentum_switch_iter else cfg.momentum_final
        grad = kl_gradient(P * factor if factor != 1.0 else P, y)
        update = momentum * update - cfg.learning_rate * grad
        y = y + update
        y -= y.mean(axis=0)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(
                f"t-SNE diverged at iteration {it} (learning_rate={cfg.learning_rate}, factor={factor})"
            )
    kl = kl_divergence(P, y)
    logger.debug("t-SNE finished: n=%d, KL=%.5f", n, kl)
    y.setflags(write=False)
    return Embedding(y, kl, cfg)
