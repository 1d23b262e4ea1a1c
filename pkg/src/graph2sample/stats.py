"""Distance-based two-sample statistics and permutation tests.

Two-sample problems are turned into independence problems by stacking the
samples and testing them against a 0/1 label vector (the k-sample
transform). DCorr and MGC are then computed on the stacked data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from ._kernels import label_local_grid, largest_component_max
from .graph import RngSeed

STATISTICS = ("dcorr-u", "dcorr-biased", "mgc")


class DegenerateInputError(ValueError):
    """A centered distance matrix has zero variance; the statistic is undefined."""


def pairwise_distances(Z) -> np.ndarray:
    """Euclidean distance matrix of the rows of ``Z``."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if not np.all(np.isfinite(Z)):
        raise ValueError("input must be finite")
    return cdist(Z, Z)


def double_center(D) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    return D - D.mean(axis=0, keepdims=True) - D.mean(axis=1, keepdims=True) + D.mean()


def u_center(D) -> np.ndarray:
    """U-centering: ``1/(N-2)`` row/column means, ``1/((N-1)(N-2))`` grand mean, zero diagonal."""
    D = np.asarray(D, dtype=float)
    N = D.shape[0]
    if N < 4:
        raise ValueError(f"U-centering needs N >= 4, got {N}")
    out = (D - D.sum(axis=0, keepdims=True) / (N - 2) - D.sum(axis=1, keepdims=True) / (N - 2)
           + D.sum() / ((N - 1) * (N - 2)))
    np.fill_diagonal(out, 0.0)
    return out


_CENTERINGS = {"u-centered": u_center, "u": u_center, "double": double_center, "biased": double_center}


def ksample_transform(X, Y):
    """Stack two samples and build the matching 0/1 label column."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    Z = np.vstack([X, Y])
    E = np.concatenate([np.zeros(len(X)), np.ones(len(Y))])[:, None]
    return Z, E


def _check_n(Z, E):
    Z = np.asarray(Z, dtype=float)
    E = np.asarray(E, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if E.ndim == 1:
        E = E[:, None]
    if Z.shape[0] != E.shape[0]:
        raise ValueError("Z and E must have the same number of rows")
    if Z.shape[0] < 4:
        raise ValueError(f"need N >= 4 observations, got {Z.shape[0]}")
    return Z, E


def _corr(A, B):
    # sigma = sqrt(sum(D^2) / (N (N - 3))) so the N(N-3) factors cancel
    saa = np.sum(A * A)
    sbb = np.sum(B * B)
    if saa <= 0 or sbb <= 0:
        raise DegenerateInputError("a centered distance matrix is identically zero (constant sample)")
    return float(np.sum(A * B) / np.sqrt(saa * sbb))


def dcorr(Z, E, centering: str = "u-centered") -> float:
    """Sample distance correlation between the rows of ``Z`` and ``E``.

    ``centering="u-centered"`` gives the unbiased statistic,
    ``"double"`` the biased one.
    """
    Z, E = _check_n(Z, E)
    center = _CENTERINGS[centering]
    return _corr(center(pairwise_distances(Z)), center(pairwise_distances(E)))


def _neighbor_ranks(D):
    """Row-wise nearest-neighbour ranks: self is 0, ties go to the lower index."""
    D = np.array(D, dtype=float)
    N = D.shape[0]
    np.fill_diagonal(D, -np.inf)
    order = np.argsort(D, axis=1, kind="stable")
    ranks = np.empty((N, N), dtype=np.int64)
    ranks[np.arange(N)[:, None], order] = np.arange(N)[None, :]
    return ranks


def _binary_label_ranks(labels):
    """Fast path of :func:`_neighbor_ranks` for a 0/1 label vector."""
    e = labels.astype(bool)
    N = e.size
    idx = np.arange(N)
    # number of earlier indices carrying each label
    before = np.where(e, np.cumsum(e) - e, np.cumsum(~e) - ~e)
    n_same = np.where(e, e.sum(), N - e.sum())
    same = e[:, None] == e[None, :]
    ranks = np.where(same,
                     1 + before[None, :] - (idx[:, None] < idx[None, :]),
                     n_same[:, None] + before[None, :])
    np.fill_diagonal(ranks, 0)
    return ranks


@dataclass
class MGCResult:
    statistic: float
    optimal_scale: tuple | str
    local_correlations: np.ndarray = field(repr=False)
    global_statistic: float = 0.0

    def grid_to_csv(self, path) -> None:
        np.savetxt(path, self.local_correlations, delimiter=",", fmt="%.17g")


class _MGCKernel:
    """Precomputed Z side of MGC, reused across label permutations."""

    def __init__(self, Z, tau=0.0, rank_on="distance"):
        DZ = pairwise_distances(Z)
        self.N = DZ.shape[0]
        self.tau = tau
        self.rank_on = rank_on
        self.A = u_center(DZ)
        self.rz = _neighbor_ranks(DZ if rank_on == "distance" else self.A)
        N = self.N
        self.flat_rz = (self.rz * N).ravel()
        self.dz = np.bincount(self.rz.ravel(), weights=(self.A * self.A).ravel(), minlength=N).cumsum()
        self.sqrt_dz = np.sqrt(self.dz)
        # work buffers reused across permutations
        self._grid = np.empty((N, N))
        self._de = np.empty(N)
        # int32 halves memory traffic; fine while N * N < 2**31
        self._parent = np.empty(N * N, dtype=np.int32)
        self._size = np.empty(N * N, dtype=np.int32)
        self._vmax = np.empty(N * N)
        self._arg = np.empty(N * N, dtype=np.int32)

    def local_grid(self, E):
        E = np.asarray(E, dtype=float).reshape(self.N, -1)
        if self.rank_on == "distance" and E.shape[1] == 1 and np.all((E == 0) | (E == 1)):
            c, ok = label_local_grid(self.A, self.rz, self.sqrt_dz, E[:, 0].astype(np.int64), self._grid, self._de)
            if not ok:
                raise DegenerateInputError("a centered distance matrix is identically zero (constant sample)")
            return c
        return self._local_grid_dense(E)

    def _local_grid_dense(self, E):
        N = self.N
        DE = pairwise_distances(E)
        B = u_center(DE)
        re = _neighbor_ranks(DE if self.rank_on == "distance" else B)
        de = np.bincount(re.ravel(), weights=(B * B).ravel(), minlength=N).cumsum()
        if self.dz[-1] <= 0 or de[-1] <= 0:
            raise DegenerateInputError("a centered distance matrix is identically zero (constant sample)")
        hist = np.bincount(self.flat_rz + re.ravel(), weights=(self.A * B).ravel(), minlength=N * N)
        S = hist.reshape(N, N).cumsum(axis=0).cumsum(axis=1)
        denom = np.outer(self.sqrt_dz, np.sqrt(de))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(denom > 1e-14 * denom[-1, -1], S / denom, 0.0)

    def __call__(self, E, keep_grid: bool = True) -> MGCResult:
        """MGC for labels ``E``; ``keep_grid=False`` may return a reused buffer as the grid."""
        c = self.local_grid(E)
        if keep_grid and c is self._grid:
            c = c.copy()
        c_nn = float(c[-1, -1])
        size, value, idx = largest_component_max(c, max(self.tau, c_nn), self._parent, self._size,
                                                 self._vmax, self._arg)
        if size >= 2 * self.N:
            k, l = divmod(int(idx), c.shape[1])
            return MGCResult(float(value), (k + 1, l + 1), c, c_nn)
        return MGCResult(c_nn, "global", c, c_nn)


def mgc(Z, E, tau: float = 0.0, rank_on: str = "distance") -> MGCResult:
    """Multiscale graph correlation.

    Local correlations ``c[k-1, l-1]`` restrict the unbiased distance
    correlation to pairs where ``j`` is among the ``k`` nearest neighbours of
    ``i`` in ``Z`` and among the ``l`` nearest in ``E``. The statistic is the
    largest local correlation inside the largest 4-connected region of
    scales exceeding ``max(tau, c_NN)``; if that region covers fewer than
    ``2N`` scales, it falls back to ``c_NN``, the global unbiased DCorr.

    Parameters
    ----------
    rank_on : {"distance", "centered"}
        Rank neighbours on raw distances (default) or on the U-centered
        matrices.
    """
    Z, E = _check_n(Z, E)
    if rank_on not in ("distance", "centered"):
        raise ValueError(f"unknown rank_on {rank_on!r}")
    return _MGCKernel(Z, tau, rank_on)(E)


@dataclass
class TestResult:
    statistic_name: str
    statistic: float
    p_value: float
    null_values: np.ndarray = field(repr=False)
    permutations: int = 0
    seed: RngSeed | None = None
    optimal_scale: tuple | str | None = None

    __test__ = False  # not a pytest class

    def to_dict(self, include_null: bool = False) -> dict:
        out = {
            "schema_version": 1,
            "statistic_name": self.statistic_name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "permutations": self.permutations,
            "seed": None if self.seed is None else {"seed": self.seed.seed, "stream": self.seed.stream},
            "optimal_scale": list(self.optimal_scale) if isinstance(self.optimal_scale, tuple)
            else self.optimal_scale,
        }
        if include_null:
            out["null_values"] = self.null_values.tolist()
        return out

    def to_json(self, include_null: bool = False) -> str:
        return json.dumps(self.to_dict(include_null), indent=2)


def pvalue(observed: float, null_values) -> float:
    null_values = np.asarray(null_values)
    return float((1 + np.count_nonzero(null_values >= observed)) / (null_values.size + 1))


def permutation_test(Z, E, statistics=("mgc",), B: int = 1000, seed: RngSeed | None = None,
                     tau: float = 0.0) -> dict:
    """Permutation tests for several statistics sharing one set of relabelings.

    Permutation ``b`` is drawn from its own stream ``seed.generator(b)`` so
    results do not depend on evaluation order. MGC and unbiased DCorr share
    one pass because the global MGC scale equals unbiased DCorr.

    Returns
    -------
    dict mapping statistic name to :class:`TestResult`.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    unknown = set(statistics) - set(STATISTICS)
    if unknown:
        raise ValueError(f"unknown statistics {sorted(unknown)}; choose from {STATISTICS}")
    seed = seed or RngSeed(0)
    Z, E = _check_n(Z, E)
    N = Z.shape[0]

    fns = {}
    if "mgc" in statistics:
        kernel = _MGCKernel(Z, tau)

        def run_mgc(e):
            res = kernel(e, keep_grid=False)
            return {"mgc": (res.statistic, res.optimal_scale), "dcorr-u": (res.global_statistic, "global")}
        fns["mgc"] = run_mgc
    for name, centering in (("dcorr-u", "u-centered"), ("dcorr-biased", "double")):
        if name in statistics and not (name == "dcorr-u" and "mgc" in statistics):
            Azz = _CENTERINGS[centering](pairwise_distances(Z))

            def run_dc(e, Azz=Azz, name=name, center=_CENTERINGS[centering]):
                return {name: (_corr(Azz, center(pairwise_distances(e))), "global")}
            fns[name] = run_dc

    def evaluate(e):
        out = {}
        for fn in fns.values():
            out.update(fn(e))
        return out

    observed = evaluate(E)
    nulls = {name: np.empty(B) for name in statistics}
    for b in range(B):
        perm = seed.generator(b).permutation(N)
        vals = evaluate(E[perm])
        for name in statistics:
            nulls[name][b] = vals[name][0]

    results = {}
    for name in statistics:
        stat, scale = observed[name]
        results[name] = TestResult(name, stat, pvalue(stat, nulls[name]), nulls[name], B, seed,
                                   scale if name == "mgc" else None)
    return results


def permutation_pvalue(statistic: str, Z, E, B: int = 1000, seed: RngSeed | None = None,
                       tau: float = 0.0) -> TestResult:
    """Permutation test of independence between ``Z`` and ``E`` for one statistic.

    The p-value is ``(1 + #{null >= observed}) / (B + 1)``.
    """
    return permutation_test(Z, E, (statistic,), B, seed, tau)[statistic]
