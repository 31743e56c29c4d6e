# src/latent_analysis/gmm.py
import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

COVARIANCE_FLOOR = 1e-6
DEGENERATE_RESPONSIBILITY = 2.0


class ConvergenceError(RuntimeError):
    """EM log-likelihood decreased between iterations."""


@dataclass
class GaussianMixture:
    """
    Mixture of Gaussians over k-dimensional latents.

    Attributes:
        weights: (n,) mixing weights on the simplex.
        means: (n, k) component means.
        covariances: (n, k, k) symmetric positive definite covariances
            (diagonal matrices when covariance_type is 'diag').
        covariance_type: 'full' or 'diag'.
    """
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    covariance_type: str = "full"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.covariances = np.asarray(self.covariances, dtype=np.float64)
        n, k = self.means.shape
        if self.weights.shape != (n,) or self.covariances.shape != (n, k, k):
            raise ValueError(
                f"Inconsistent mixture shapes: weights {self.weights.shape}, means {self.means.shape}, "
                f"covariances {self.covariances.shape}."
            )
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("Mixture weights must be non-negative and sum to 1.")
        if self.covariance_type not in ("full", "diag"):
            raise ValueError(f"Unknown covariance type '{self.covariance_type}'.")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_prob(self, latents: np.ndarray) -> np.ndarray:
        """(m, n) matrix of log w_j + log N(x_i | mean_j, cov_j)."""
        latents = np.asarray(latents, dtype=np.float64)
        m, k = latents.shape
        logprobs = np.full((m, self.n_components), -0.5 * k * np.log(2.0 * np.pi))
        for j in range(self.n_components):
            diff = latents - self.means[j]
            if self.covariance_type == "diag":
                variances = np.diag(self.covariances[j])
                logprobs[:, j] -= 0.5 * np.sum(np.log(variances))
                logprobs[:, j] -= 0.5 * np.sum(diff * diff / variances, axis=1)
            else:
                chol = scipy.linalg.cholesky(self.covariances[j], lower=True)
                logprobs[:, j] -= np.sum(np.log(np.diag(chol)))
                soln = scipy.linalg.solve_triangular(chol, diff.T, lower=True)
                logprobs[:, j] -= 0.5 * np.sum(soln ** 2, axis=0)
        with np.errstate(divide="ignore"):
            logprobs += np.log(self.weights)[None, :]
        return logprobs

    def log_likelihood(self, latents: np.ndarray) -> float:
        """Average per-sample log-likelihood."""
        return float(np.mean(logsumexp(self.component_log_prob(latents), axis=1)))

    def to_arrays(self) -> Dict[str, np.ndarray]:
        return {"weights": self.weights, "means": self.means, "covariances": self.covariances}

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], covariance_type: str = "full") -> "GaussianMixture":
        return cls(weights=arrays["weights"], means=arrays["means"], covariances=arrays["covariances"],
                   covariance_type=covariance_type)


def _kmeans_plus_plus(latents: np.ndarray, n_components: int, rng: np.random.Generator) -> np.ndarray:
    m = latents.shape[0]
    centers = [latents[rng.integers(m)]]
    closest = np.sum((latents - centers[0]) ** 2, axis=1)
    for _ in range(1, n_components):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(m)
        else:
            idx = rng.choice(m, p=closest / total)
        centers.append(latents[idx])
        closest = np.minimum(closest, np.sum((latents - latents[idx]) ** 2, axis=1))
    return np.stack(centers)


def _floor_covariance(cov: np.ndarray, floor: float, covariance_type: str) -> np.ndarray:
    if covariance_type == "diag":
        return np.diag(np.maximum(np.diag(cov), floor))
    cov = 0.5 * (cov + cov.T)
    eigvals, eigvecs = scipy.linalg.eigh(cov)
    eigvals = np.maximum(eigvals, floor)
    return (eigvecs * eigvals) @ eigvecs.T


def _m_step(latents: np.ndarray, resp: np.ndarray, previous: Optional[GaussianMixture], floor: float,
            covariance_type: str) -> GaussianMixture:
    m, k = latents.shape
    n = resp.shape[1]
    counts = resp.sum(axis=0)
    weights = counts / m
    means = np.zeros((n, k))
    covariances = np.zeros((n, k, k))
    for j in range(n):
        if counts[j] < DEGENERATE_RESPONSIBILITY:
            logger.warning(
                f"GMM component {j} is degenerate ({counts[j]:.3g} responsible points); covariance floored at {floor:g}."
            )
        if counts[j] <= 1e-12:
            # An empty component keeps its previous moments; its weight is zero either way.
            means[j] = previous.means[j] if previous is not None else latents[j % m]
            covariances[j] = previous.covariances[j] if previous is not None else floor * np.eye(k)
            continue
        means[j] = resp[:, j] @ latents / counts[j]
        diff = latents - means[j]
        if covariance_type == "diag":
            cov = np.diag((resp[:, j] @ (diff * diff)) / counts[j])
        else:
            cov = (diff * resp[:, j][:, None]).T @ diff / counts[j]
        covariances[j] = _floor_covariance(cov, floor, covariance_type)
    weights = weights / weights.sum()
    return GaussianMixture(weights=weights, means=means, covariances=covariances, covariance_type=covariance_type)


def fit_gmm(latents: np.ndarray, n_components: int, max_iters: int = 200, tol: float = 1e-6, seed: int = 0,
            covariance_type: str = "full", reg_floor: float = COVARIANCE_FLOOR) -> GaussianMixture:
    """
    Fits a Gaussian mixture by expectation-maximization.

    Initialization is k-means++ center selection from `seed` followed by a hard
    nearest-center assignment. Covariance eigenvalues are clipped from below at
    `reg_floor`. Iteration stops once the average log-likelihood improves by
    less than `tol` or after `max_iters` iterations.

    Args:
        latents: (m, k) training points, typically encoder means.
        n_components: Number of mixture components; must not exceed m.
        max_iters: Upper bound on EM iterations.
        tol: Convergence threshold on the per-sample log-likelihood gain.
        seed: Seed of the initialization.
        covariance_type: 'full' or 'diag'.
        reg_floor: Lower bound for covariance eigenvalues.

    Returns:
        The fitted GaussianMixture.

    Raises:
        ValueError: if m < n_components or the input is not a finite 2-D matrix.
        ConvergenceError: if the log-likelihood ever decreases.
    """
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 2 or latents.shape[1] < 1:
        raise ValueError(f"fit_gmm expects an (m, k) matrix, got shape {latents.shape}.")
    if not np.all(np.isfinite(latents)):
        raise ValueError("fit_gmm: latents contain non-finite values.")
    m, k = latents.shape
    if n_components < 1 or m < n_components:
        raise ValueError(f"fit_gmm needs at least n_components={n_components} points, got {m}.")
    if covariance_type not in ("full", "diag"):
        raise ValueError(f"Unknown covariance type '{covariance_type}'.")

    rng = np.random.default_rng(seed)
    centers = _kmeans_plus_plus(latents, n_components, rng)
    distances = np.sum((latents[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    resp = np.zeros((m, n_components))
    resp[np.arange(m), np.argmin(distances, axis=1)] = 1.0
    mixture = _m_step(latents, resp, None, reg_floor, covariance_type)

    previous_ll = -np.inf
    for iteration in range(1, max_iters + 1):
        logprobs = mixture.component_log_prob(latents)
        per_sample = logsumexp(logprobs, axis=1)
        ll = float(np.mean(per_sample))
        if ll < previous_ll - 1e-9 * max(1.0, abs(previous_ll)):
            raise ConvergenceError(f"EM log-likelihood decreased at iteration {iteration}: {previous_ll:.10g} -> {ll:.10g}.")
        if ll - previous_ll < tol:
            logger.debug(f"EM converged after {iteration} iterations (avg log-likelihood {ll:.6f}).")
            break
        previous_ll = ll
        resp = np.exp(logprobs - per_sample[:, None])
        mixture = _m_step(latents, resp, mixture, reg_floor, covariance_type)
    else:
        logger.info(f"EM stopped at max_iters={max_iters} (avg log-likelihood {previous_ll:.6f}).")

    logger.info(f"Fitted GMM: {n_components} components, dim {k}, {m} points, {covariance_type} covariances.")
    return mixture


def sample_gmm(gmm: GaussianMixture, count: int, seed: int) -> np.ndarray:
    """
    Draws `count` latents: a component by weight, then a Gaussian draw through
    the component's Cholesky factor.

    Raises:
        ValueError: if a covariance is not positive definite.
    """
    rng = np.random.default_rng(seed)
    components = rng.choice(gmm.n_components, size=count, p=gmm.weights / gmm.weights.sum())
    noise = rng.standard_normal((count, gmm.dim))
    samples = np.empty((count, gmm.dim))
    for j in np.unique(components):
        try:
            chol = scipy.linalg.cholesky(gmm.covariances[j], lower=True)
        except np.linalg.LinAlgError as e:
            raise ValueError(f"Covariance of component {j} is not positive definite.") from e
        mask = components == j
        samples[mask] = gmm.means[j] + noise[mask] @ chol.T
    return samples
