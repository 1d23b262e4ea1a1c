"""Adjacency spectral embedding and related estimators."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .graph import RngSeed


@dataclass(frozen=True)
class EmbeddingResult:
    """Output of :func:`ase`.

    Attributes
    ----------
    positions : ndarray of shape (n, d)
        Estimated latent positions ``U S^{1/2}``.
    singular_values : ndarray of shape (d,)
        Retained singular values, nonincreasing.
    all_singular_values : ndarray of shape (n,)
        Full spectrum, nonincreasing.
    """

    positions: np.ndarray
    singular_values: np.ndarray
    all_singular_values: np.ndarray

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def to_csv(self, path) -> None:
        header = ",".join(f"dim{i + 1}" for i in range(self.d))
        np.savetxt(path, self.positions, delimiter=",", header=header, comments="", fmt="%.17g")

    def to_json(self) -> str:
        return json.dumps({
            "d": self.d,
            "singular_values": self.singular_values.tolist(),
            "all_singular_values": self.all_singular_values.tolist(),
            "positions": self.positions.tolist(),
        })


def ase(A, d: int) -> EmbeddingResult:
    """Adjacency spectral embedding of a symmetric matrix.

    The singular values of a symmetric matrix are the absolute eigenvalues,
    so the decomposition comes from ``eigh``. Each retained column is signed
    so that its largest-magnitude entry is positive.
    """
    M = np.asarray(A, dtype=float)
    n = M.shape[0]
    if not 1 <= d <= n:
        raise ValueError(f"embedding dimension must satisfy 1 <= d <= n={n}, got {d}")

    evals, evecs = np.linalg.eigh(M)
    sv = np.abs(evals)
    order = np.argsort(-sv, kind="stable")
    sv = sv[order]
    U = evecs[:, order[:d]]

    peak = np.abs(U).argmax(axis=0)
    signs = np.sign(U[peak, np.arange(d)])
    signs[signs == 0] = 1
    U = U * signs

    X = U * np.sqrt(sv[:d])
    return EmbeddingResult(X, sv[:d].copy(), sv)


def _profile_loglik(values, q):
    p = len(values)
    a, b = values[:q], values[q:]
    var = (np.sum((a - a.mean()) ** 2) + np.sum((b - b.mean()) ** 2)) / p
    if var == 0:
        return np.inf
    return -0.5 * p * (np.log(2 * np.pi * var) + 1.0)


def select_dimension(values, max_elbow_candidates: int | None = None) -> int:
    """Pick the scree-plot elbow by two-segment Gaussian profile likelihood.

    For each split ``q`` the first ``q`` values and the remainder get their
    own means and a pooled maximum-likelihood variance; the split with the
    highest log-likelihood wins. ``max_elbow_candidates`` caps ``q``.
    """
    values = np.asarray(values, dtype=float).ravel()
    p = values.size
    if p < 2:
        raise ValueError("need at least two values to select a dimension")
    if np.all(values == values[0]):
        warnings.warn("all values are equal; returning dimension 1", RuntimeWarning)
        return 1
    qmax = p - 1 if max_elbow_candidates is None else min(p - 1, int(max_elbow_candidates))
    if qmax < 1:
        raise ValueError("max_elbow_candidates must be positive")
    ll = [_profile_loglik(values, q) for q in range(1, qmax + 1)]
    return int(np.argmax(ll)) + 1


def estimate_clt_covariance(X) -> np.ndarray:
    """Plug-in estimate of the per-vertex ASE limiting covariance.

    Returns an ``(n, d, d)`` array whose ``i``-th slice is::

        (1/n) D^{-1} [ (1/n) sum_j X_j X_j^T v(X_i . X_j) ] D^{-1}

    with ``D = X^T X / n`` and ``v(p) = max(p - p^2, 0)``. Each slice is
    symmetrized and its negative eigenvalues are clipped to zero.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    delta = X.T @ X / n
    if np.linalg.matrix_rank(delta) < d:
        raise np.linalg.LinAlgError(
            "second-moment matrix is singular; the embedding is rank deficient, try a smaller d")
    delta_inv = np.linalg.inv(delta)

    P = X @ X.T
    V = np.clip(P - P * P, 0.0, None)
    inner = np.einsum("ij,jk,jl->ikl", V, X, X) / n
    cov = delta_inv @ inner @ delta_inv / n
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))

    w, Q = np.linalg.eigh(cov)
    w = np.clip(w, 0.0, None)
    return (Q * w[:, None, :]) @ np.swapaxes(Q, 1, 2)


def _mvn_noise(cov, rng):
    """One draw from MVN(0, cov[i]) per slice of a stack of PSD matrices."""
    w, Q = np.linalg.eigh(cov)
    root = Q * np.sqrt(np.clip(w, 0.0, None))[:, None, :]
    g = rng.standard_normal(cov.shape[:2])
    return np.einsum("ikl,il->ik", root, g)


def variance_correct(X_large, n_small: int, seed: RngSeed, covariances=None) -> np.ndarray:
    """Inflate the noise of the larger graph's embedding to match a smaller graph.

    Adds independent ``MVN(0, (n_large / n_small - 1) * Sigma_i)`` noise to each
    row, where ``Sigma_i`` is :func:`estimate_clt_covariance` of ``X_large``
    unless ``covariances`` is given.
    """
    X = np.asarray(X_large, dtype=float)
    n_large = X.shape[0]
    if n_small >= n_large:
        raise ValueError(f"n_small ({n_small}) must be smaller than n_large ({n_large})")
    if covariances is None:
        covariances = estimate_clt_covariance(X)
    scale = n_large / n_small - 1.0
    return X + _mvn_noise(scale * np.asarray(covariances), seed.generator())
