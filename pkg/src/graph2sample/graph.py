"""Graph containers, validation, file ingestion and RDPG sampling."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1


class GraphFormatError(ValueError):
    """Raised when a graph file cannot be parsed or fails validation."""


@dataclass(frozen=True)
class RngSeed:
    """A (seed, stream) pair naming an independent random stream.

    Draws depend only on the pair, never on the order in which streams are
    consumed, so replicates can be farmed out to workers freely.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64 and 0 <= self.stream <= _MASK64):
            raise ValueError("seed and stream must be unsigned 64-bit integers")

    def generator(self, *counter: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *counter))
        return np.random.default_rng(ss)

    def spawn(self, *key: int) -> "RngSeed":
        """Derive a child stream from this one and an integer key path."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *key))
        stream = int(ss.generate_state(1, dtype=np.uint64)[0])
        return RngSeed(self.seed, stream)


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Dense undirected adjacency matrix.

    ``entries`` is stored as a read-only float array. Construction does not
    validate; use :func:`validate_graph` or :func:`load_graph`.
    """

    entries: np.ndarray
    source: str | None = None
    directed: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.entries, fmt="%d", delimiter=",")


def validate_graph(A) -> list[str]:
    """Return the list of violated invariants (empty when valid).

    Checks that ``A`` is symmetric, hollow and binary.
    """
    M = np.asarray(A, dtype=float)
    report = []
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return ["not square"]
    if not np.all(np.isfinite(M)):
        report.append("non-finite entries")
    if not np.array_equal(M, M.T):
        report.append("not symmetric")
    if np.any(np.diag(M) != 0):
        report.append("not hollow")
    if not np.all((M == 0) | (M == 1)):
        report.append("not binary")
    return report


def _read_lines(path, header):
    if not os.path.exists(path):
        raise FileNotFoundError(f"file not found: {path}")
    with open(path) as fh:
        lines = fh.read().splitlines()
    if header:
        lines = lines[1:]
    return [(i, ln) for i, ln in enumerate(lines, start=2 if header else 1) if ln.strip()]


def _load_edge_list(path, index_base, n, header):
    pairs = []
    for lineno, line in _read_lines(path, header):
        tok = line.split()
        if len(tok) < 2:
            raise GraphFormatError(f"{path}:{lineno}: expected 'i j [w]', got {line!r}")
        try:
            i, j = int(tok[0]) - index_base, int(tok[1]) - index_base
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: non-integer vertex index in {line!r}") from None
        pairs.append((i, j, lineno))

    if n is None:
        n = 1 + max((max(i, j) for i, j, _ in pairs), default=-1)
    M = np.zeros((n, n))
    loops = 0
    for i, j, lineno in pairs:
        if not (0 <= i < n and 0 <= j < n):
            raise GraphFormatError(f"{path}:{lineno}: vertex index out of range for n={n}")
        if i == j:
            loops += 1
            continue
        M[i, j] = M[j, i] = 1
    return M, loops


def _load_dense_csv(path, header):
    rows = []
    for lineno, line in _read_lines(path, header):
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: could not parse row") from None
    if not rows or any(len(r) != len(rows) for r in rows):
        raise GraphFormatError(f"{path}: dense CSV must hold a square matrix")
    M = np.array(rows)
    loops = int(np.count_nonzero(np.diag(M)))
    np.fill_diagonal(M, 0)
    return M, loops


def load_graph(path, fmt: str = "dense-csv", index_base: int = 0, *,
               n: int | None = None, header: bool = False) -> AdjacencyMatrix:
    """Read a binary undirected graph from disk.

    Parameters
    ----------
    path : str or path-like
        File to read.
    fmt : {"dense-csv", "edge-list"}
        Dense CSV holds one comma-separated row per vertex. An edge list
        holds whitespace-separated integer pairs; a third column is ignored
        and each pair sets both ``(i, j)`` and ``(j, i)``.
    index_base : {0, 1}
        Index of the first vertex in edge-list files.
    n : int, optional
        Vertex count for edge lists; inferred from the largest index if
        omitted.
    header : bool
        Skip the first line.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    GraphFormatError
        On parse failures, out-of-range indices or invalid entries.
    """
    if index_base not in (0, 1):
        raise ValueError("index_base must be 0 or 1")
    if fmt == "edge-list":
        M, loops = _load_edge_list(path, index_base, n, header)
    elif fmt == "dense-csv":
        M, loops = _load_dense_csv(path, header)
    else:
        raise ValueError(f"unknown graph format {fmt!r}")

    if loops:
        logger.warning("%s: dropped %d self-loop(s)", path, loops)
    report = validate_graph(M)
    if report:
        raise GraphFormatError(f"{path}: {', '.join(report)}")
    return AdjacencyMatrix(M, source=str(path), meta={"format": fmt, "self_loops_dropped": loops})


def sample_rdpg(X, seed: RngSeed) -> AdjacencyMatrix:
    """Sample an undirected hollow graph with edge probabilities ``clip(X X^T, 0, 1)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise ValueError("latent positions must be finite")
    n = X.shape[0]
    P = np.clip(X @ X.T, 0.0, 1.0)
    iu = np.triu_indices(n, k=1)
    draws = seed.generator().random(iu[0].size)
    A = np.zeros((n, n))
    A[iu] = (draws < P[iu]).astype(float)
    A = A + A.T
    return AdjacencyMatrix(A)
