"""Monte Carlo experiments: univariate RDPG power, synthetic connectome pairs,
and the left/right hemisphere comparison.

Every replicate draws from streams derived from ``(master seed, size,
replicate index)``, so results are identical whether replicates run serially
or in a process pool.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .alignment import median_sign_flip, otp_align
from .embedding import _mvn_noise, ase, estimate_clt_covariance, variance_correct
from .graph import AdjacencyMatrix, RngSeed, sample_rdpg
from .stats import ksample_transform, permutation_test

UNIVARIATE_SCENARIOS = ("null", "linear-shift", "nonlinear-beta")
ALIGNMENTS = ("otp", "median")
TESTS = {"dcorr": "dcorr-u", "mgc": "mgc", "dcorr-biased": "dcorr-biased"}
DISPLAY = {"dcorr": "DCorr", "dcorr-biased": "DCorr-biased", "mgc": "MGC", "otp": "OTP", "median": "Median"}

THREADS_ENV = "GRAPH2SAMPLE_THREADS"


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _pmap(fn, tasks, threads):
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


def binomial_ci(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson interval for a binomial proportion."""
    ci = sps.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="exact")
    return float(ci.low), float(ci.high)


def null_interval(p0: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """Central ``level`` range of the rejection rate when the true rate is ``p0``."""
    tail = (1 - level) / 2
    return (float(sps.binom.ppf(tail, n, p0)) / n, float(sps.binom.ppf(1 - tail, n, p0)) / n)


def _check_tests(tests):
    tests = (tests,) if isinstance(tests, str) else tuple(tests)
    bad = [t for t in tests if t not in TESTS]
    if bad:
        raise ValueError(f"unknown tests {bad}; choose from {sorted(TESTS)}")
    return tests


@dataclass
class PowerCurve:
    """Rejection rates against sample size for one test/alignment combination."""

    sizes: list
    p_values: list = field(repr=False)
    test: str = "mgc"
    alignment: str = "median"
    alpha: float = 0.05
    rho: float | None = None
    label: str = ""
    seed: int = 0

    @property
    def replicates(self) -> list:
        return [len(p) for p in self.p_values]

    def rates_at(self, alpha: float) -> np.ndarray:
        return np.array([np.mean(np.asarray(p) <= alpha) for p in self.p_values])

    @property
    def rates(self) -> np.ndarray:
        return self.rates_at(self.alpha)

    @property
    def ci(self) -> list:
        return [binomial_ci(int(np.sum(np.asarray(p) <= self.alpha)), len(p)) for p in self.p_values]

    @property
    def method(self) -> str:
        return f"{self.test}+{self.alignment}"

    def rows(self) -> list[dict]:
        out = []
        for n, rate, (lo, hi), reps in zip(self.sizes, self.rates, self.ci, self.replicates):
            out.append({"n": int(n), "rate": float(rate), "ci_lo": lo, "ci_hi": hi,
                        "method": self.test, "alignment": self.alignment,
                        "rho": "" if self.rho is None else self.rho, "replicates": reps})
        return out

    def to_dict(self) -> dict:
        return {"schema_version": 1, "label": self.label, "test": self.test,
                "alignment": self.alignment, "alpha": self.alpha, "rho": self.rho,
                "seed": self.seed, "rows": self.rows()}


CURVE_COLUMNS = ("n", "rate", "ci_lo", "ci_hi", "method", "alignment", "rho", "replicates")


def curves_to_csv(curves, path=None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CURVE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for curve in curves:
        for row in curve.rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


# univariate experiments

def sample_univariate(scenario: str, n: int, rng: np.random.Generator):
    """Latent positions for the two graphs of a univariate scenario."""
    x = rng.uniform(0.2, 0.7, n)
    if scenario == "null":
        y = rng.uniform(0.2, 0.7, n)
    elif scenario == "linear-shift":
        y = rng.uniform(0.2, 0.7, n) + 0.1
    elif scenario == "nonlinear-beta":
        y = 0.5 * rng.beta(0.2, 0.2, n) + 0.2
    else:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {UNIVARIATE_SCENARIOS}")
    return x, y


def _univariate_replicate(task):
    scenario, n, rseed, tests, B, tau = task
    x, y = sample_univariate(scenario, n, rseed.generator(0))
    A = sample_rdpg(x, rseed.spawn(1))
    Bg = sample_rdpg(y, rseed.spawn(2))
    X = ase(A, 1).positions
    Y, _ = median_sign_flip(X, ase(Bg, 1).positions)
    Z, E = ksample_transform(X, Y)
    res = permutation_test(Z, E, tuple(TESTS[t] for t in tests), B, rseed.spawn(3), tau)
    return [res[TESTS[t]].p_value for t in tests]


def run_univariate_power(scenario: str, n_grid, replicates: int = 200, alpha: float = 0.05,
                         tests=("dcorr", "mgc"), B: int = 500, seed: int = 0, *,
                         tau: float = 0.0, threads: int | None = None) -> dict:
    """Power of graph two-sample tests on one-dimensional RDPGs.

    Each replicate samples two graphs of ``n`` vertices, embeds them at
    ``d = 1``, aligns them by median flip and runs the permutation tests.

    Returns
    -------
    dict mapping test name to :class:`PowerCurve`.
    """
    if scenario not in UNIVARIATE_SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {UNIVARIATE_SCENARIOS}")
    tests = _check_tests(tests)
    n_grid = list(n_grid)
    if not n_grid or replicates < 1:
        raise ValueError("need a nonempty n_grid and at least one replicate")
    master = RngSeed(seed)
    tasks = [(scenario, n, master.spawn(n, r), tests, B, tau) for n in n_grid for r in range(replicates)]
    pvals = np.array(_pmap(_univariate_replicate, tasks, threads)).reshape(len(n_grid), replicates, len(tests))
    return {t: PowerCurve(n_grid, [pvals[i, :, j] for i in range(len(n_grid))], t, "median", alpha,
                          None, scenario, seed)
            for j, t in enumerate(tests)}


# synthetic connectome pairs

@dataclass
class SyntheticPair:
    A: AdjacencyMatrix
    B: AdjacencyMatrix
    sampled: np.ndarray
    perturbed: np.ndarray
    Y: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)
    eps: np.ndarray = field(repr=False)


def _sphere(k, d, r, rng):
    g = rng.standard_normal((k, d))
    return r * g / np.linalg.norm(g, axis=1, keepdims=True)


def generate_synthetic_pair(X_hat, m: int, rho: float, r: float, seed: RngSeed,
                            covariances=None) -> SyntheticPair:
    """Resample vertices of an estimated embedding into two new graphs.

    ``m`` rows are drawn with replacement from ``X_hat``; each gets two
    noisy copies ``Y_i ~ MVN(X_i, Sigma_i)`` and ``Z_i ~ MVN(X_i + eps_i,
    Sigma_i)``. ``round(rho * m)`` randomly chosen slots get ``eps_i`` drawn
    uniformly from the radius-``r`` sphere, the rest get zero.
    """
    X_hat = np.asarray(X_hat, dtype=float)
    if m < 1 or not 0 <= rho <= 1 or r < 0:
        raise ValueError("need m >= 1, 0 <= rho <= 1 and r >= 0")
    n, d = X_hat.shape
    if covariances is None:
        covariances = estimate_clt_covariance(X_hat)
    rng = seed.generator(0)
    sampled = rng.integers(0, n, m)
    n_pert = int(np.floor(rho * m + 0.5))
    perturbed = np.sort(rng.choice(m, n_pert, replace=False))
    eps = np.zeros((m, d))
    eps[perturbed] = _sphere(n_pert, d, r, rng)

    centers = X_hat[sampled]
    cov = np.asarray(covariances)[sampled]
    Y = centers + _mvn_noise(cov, seed.generator(1))
    Z = centers + eps + _mvn_noise(cov, seed.generator(2))
    return SyntheticPair(sample_rdpg(Y, seed.spawn(3)), sample_rdpg(Z, seed.spawn(4)),
                         sampled, perturbed, Y, Z, eps)


def align(X, Y, method: str, **otp_kwargs):
    """Align ``Y`` to ``X`` by ``"median"`` flip or ``"otp"``."""
    if method == "median":
        return median_sign_flip(X, Y)[0]
    if method == "otp":
        return otp_align(X, Y, **otp_kwargs).apply(Y)
    raise ValueError(f"unknown alignment {method!r}; choose from {ALIGNMENTS}")


@dataclass
class SyntheticConfig:
    source: np.ndarray = field(repr=False)
    rho: float = 0.0
    r: float = 1.0
    alignments: tuple = ("otp",)
    tests: tuple = ("dcorr", "mgc")
    replicates: int = 200
    alpha: float = 0.05
    B: int = 500
    d: int | None = None
    tau: float = 0.0
    label: str = ""

    def __post_init__(self):
        self.source = np.asarray(self.source, dtype=float)
        if isinstance(self.alignments, str):
            self.alignments = (self.alignments,)
        self.tests = _check_tests(self.tests)
        for a in self.alignments:
            if a not in ALIGNMENTS:
                raise ValueError(f"unknown alignment {a!r}")
        if not 0 <= self.rho <= 1 or self.r < 0:
            raise ValueError("need 0 <= rho <= 1 and r >= 0")
        if self.d is None:
            self.d = self.source.shape[1]


def _synthetic_replicate(task):
    cfg, cov, m, rseed = task
    pair = generate_synthetic_pair(cfg.source, m, cfg.rho, cfg.r, rseed, cov)
    XA = ase(pair.A, cfg.d).positions
    XB = ase(pair.B, cfg.d).positions
    names = tuple(TESTS[t] for t in cfg.tests)
    out = []
    for method in cfg.alignments:
        Z, E = ksample_transform(XA, align(XA, XB, method))
        res = permutation_test(Z, E, names, cfg.B, rseed.spawn(5), cfg.tau)
        out.append([res[name].p_value for name in names])
    return out


def run_synthetic_power(config: SyntheticConfig, m_grid, seed: int = 0, *,
                        threads: int | None = None) -> dict:
    """Validity/power of the embedding-alignment-test pipeline on synthetic pairs.

    All alignments in ``config`` are applied to the same sampled graphs.

    Returns
    -------
    dict mapping ``(test, alignment)`` to :class:`PowerCurve`.
    """
    m_grid = list(m_grid)
    if not m_grid:
        raise ValueError("m_grid must be nonempty")
    if min(m_grid) < config.d:
        raise ValueError("every m must be at least the embedding dimension")
    cov = estimate_clt_covariance(config.source)
    master = RngSeed(seed)
    tasks = [(config, cov, m, master.spawn(m, r)) for m in m_grid for r in range(config.replicates)]
    pvals = np.array(_pmap(_synthetic_replicate, tasks, threads))
    pvals = pvals.reshape(len(m_grid), config.replicates, len(config.alignments), len(config.tests))
    curves = {}
    for a, method in enumerate(config.alignments):
        for j, t in enumerate(config.tests):
            curves[(t, method)] = PowerCurve(m_grid, [pvals[i, :, a, j] for i in range(len(m_grid))],
                                             t, method, config.alpha, config.rho, config.label, seed)
    return curves


# hemisphere comparison

@dataclass
class HemisphereTable:
    """p-values indexed by (test, alignment) row and embedding dimension."""

    d_grid: list
    p_values: dict
    B: int
    seed: int
    correct_variance: bool = False

    def row_names(self) -> list:
        return [f"{DISPLAY[t]}+{DISPLAY[a]}" for (t, a) in self.p_values]

    def as_array(self) -> np.ndarray:
        return np.array([[self.p_values[key][d] for d in self.d_grid] for key in self.p_values])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["algorithm"] + [f"d={d}" for d in self.d_grid])
        for name, row in zip(self.row_names(), self.as_array()):
            writer.writerow([name] + [repr(float(p)) for p in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": 1, "B": self.B, "seed": self.seed,
            "correct_variance": self.correct_variance, "d_grid": list(self.d_grid),
            "rows": {name: [float(p) for p in row]
                     for name, row in zip(self.row_names(), self.as_array())},
        }, indent=2)


def embed_pair(A, B, d: int, *, correct_variance: bool = False, seed: RngSeed | None = None):
    """ASE of both graphs, optionally inflating the larger graph's noise."""
    X = ase(A, d).positions
    Y = ase(B, d).positions
    if correct_variance and len(X) != len(Y):
        seed = seed or RngSeed(0)
        if len(X) > len(Y):
            X = variance_correct(X, len(Y), seed)
        else:
            Y = variance_correct(Y, len(X), seed)
    return X, Y


def hemisphere_test(A_L, A_R, d_grid=(1, 2, 3, 4, 5), alignments=("otp", "median"),
                    tests=("mgc", "dcorr"), B: int = 1000, seed: int = 0, *,
                    correct_variance: bool = False, tau: float = 0.0) -> HemisphereTable:
    """Test equality of latent distributions of two graphs at several dimensions.

    Rows are ordered alignment-major to mirror the usual table layout:
    every test under the first alignment, then under the next.
    """
    tests = _check_tests(tests)
    alignments = (alignments,) if isinstance(alignments, str) else tuple(alignments)
    master = RngSeed(seed)
    table = {(t, a): {} for a in alignments for t in tests}
    for d in d_grid:
        X, Y = embed_pair(A_L, A_R, d, correct_variance=correct_variance, seed=master.spawn(d, 1))
        for a in alignments:
            Z, E = ksample_transform(X, align(X, Y, a))
            res = permutation_test(Z, E, tuple(TESTS[t] for t in tests), B, master.spawn(d), tau)
            for t in tests:
                table[(t, a)][d] = res[TESTS[t]].p_value
    return HemisphereTable(list(d_grid), table, B, seed, correct_variance)
