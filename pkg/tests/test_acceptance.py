"""Acceptance gate: one test per numbered criterion.

Quantitative criteria run at desk scale. Each records a PASS/FAIL line that
is repeated in the pytest terminal summary. Master seeds equal the criterion
number and were fixed before any run.
"""

from pathlib import Path

import numpy as np
import pytest
from scipy.stats import ortho_group

from graph2sample.alignment import _cost, orthogonal_procrustes, otp_align, sinkhorn_plan
from graph2sample.embedding import ase
from graph2sample.graph import load_graph
from graph2sample.simulate import (SyntheticConfig, curves_to_csv, hemisphere_test, null_interval,
                                   run_synthetic_power, run_univariate_power)
from graph2sample.stats import DegenerateInputError, dcorr, double_center, mgc, pairwise_distances

from oracles import exact_ot, naive_center, naive_dcorr, naive_distances

DATA = Path(__file__).parent / "data"
ALPHA = 0.05

pytestmark = pytest.mark.acceptance


def fmt(values):
    return "[" + ", ".join(f"{v:.3f}" for v in values) + "]"


@pytest.fixture(scope="module")
def hemispheres():
    return load_graph(DATA / "drosophila_left.csv"), load_graph(DATA / "drosophila_right.csv")


def table1(hemispheres):
    left, right = hemispheres
    return hemisphere_test(left, right, (1, 2, 3, 4, 5), ("otp", "median"), ("mgc", "dcorr"), B=999, seed=5)


def nonlinear_curves():
    return run_univariate_power("nonlinear-beta", [25, 50, 75, 100], replicates=200, B=500, seed=3)


_cache = {}


@pytest.mark.slow
def test_criterion_01_null_validity(record_criterion):
    curves = run_univariate_power("null", [50, 100], replicates=300, B=500, seed=1)
    lo, hi = null_interval(ALPHA, 300)
    ok = all(lo <= rate <= hi for c in curves.values() for rate in c.rates)
    detail = "; ".join(f"{t} rates {fmt(c.rates)} at n=[50, 100]" for t, c in curves.items())
    assert record_criterion(1, ok, f"{detail}; allowed [{lo:.3f}, {hi:.3f}]"), detail


@pytest.mark.slow
def test_criterion_02_linear_power(record_criterion):
    sizes = [50, 100, 200]
    curves = run_univariate_power("linear-shift", sizes, replicates=200, B=500, seed=2)
    ok = True
    for c in curves.values():
        ci = c.ci
        for i in range(len(sizes) - 1):
            # a drop only counts if the confidence intervals separate
            if c.rates[i + 1] < c.rates[i] and ci[i + 1][1] < ci[i][0]:
                ok = False
        ok = ok and c.rates[-1] >= 0.8
    detail = "; ".join(f"{t} rates {fmt(c.rates)} at n={sizes}" for t, c in curves.items())
    assert record_criterion(2, ok, detail + "; need nondecreasing and >= 0.8 at n=200"), detail


@pytest.mark.slow
def test_criterion_03_nonlinear_ordering(record_criterion):
    curves = nonlinear_curves()
    _cache["nonlinear_csv"] = curves_to_csv(curves.values())
    d, m = curves["dcorr"], curves["mgc"]
    idx = [i for i, r in enumerate(d.rates) if 0.2 < r < 0.8]
    rates = f"DCorr {fmt(d.rates)}, MGC {fmt(m.rates)} at n={d.sizes}"
    if not idx:
        record_criterion(3, False, f"no n with DCorr power in (0.2, 0.8): {rates}")
        pytest.fail(rates)
    i = idx[0]
    lo, hi = d.ci[i]
    half = (hi - lo) / 2
    ok = m.rates[i] >= d.rates[i] - half
    assert record_criterion(3, ok, f"{rates}; at n={d.sizes[i]} MGC {m.rates[i]:.3f} vs "
                                   f"DCorr {d.rates[i]:.3f} - {half:.3f}"), rates


@pytest.mark.slow
def test_criterion_04_median_flip_invalidity(record_criterion, hemispheres):
    source = ase(hemispheres[1], 3).positions
    cfg = SyntheticConfig(source, rho=0.0, r=1.0, alignments=("otp", "median"), tests=("dcorr", "mgc"),
                          replicates=100, B=200, d=3)
    curves = run_synthetic_power(cfg, [100, 200], seed=4)
    se = np.sqrt(ALPHA * (1 - ALPHA) / 100)
    lo, hi = null_interval(ALPHA, 100)
    parts, ok = [], True
    for t in ("dcorr", "mgc"):
        med = curves[(t, "median")].rates
        otp = curves[(t, "otp")].rates
        med_ok = med[1] > ALPHA + 2 * se and med[1] > med[0]
        otp_ok = all(lo <= r <= hi for r in otp)
        ok = ok and med_ok and otp_ok
        parts.append(f"{t}: median {fmt(med)} ({'ok' if med_ok else 'fails'}), "
                     f"OTP {fmt(otp)} ({'ok' if otp_ok else 'fails'})")
    detail = "; ".join(parts) + f" at m=[100, 200]; median needs > {ALPHA + 2 * se:.3f} at m=200, " \
                                f"OTP needs [{lo:.2f}, {hi:.2f}]"
    assert record_criterion(4, ok, detail), detail


@pytest.mark.slow
def test_criterion_05_table1(record_criterion, hemispheres):
    table = table1(hemispheres)
    _cache["table1_csv"] = table.to_csv()
    P = dict(zip(table.row_names(), table.as_array()))
    otp_ok = all(p > ALPHA for name in ("MGC+OTP", "DCorr+OTP") for p in P[name])
    med_ok = all(P[name][i] < ALPHA for name in ("MGC+Median", "DCorr+Median") for i in (2, 3, 4)) and \
        all(P[name][i] > ALPHA for name in ("MGC+Median", "DCorr+Median") for i in (0, 1))
    detail = "; ".join(f"{name} {fmt(row)}" for name, row in P.items())
    assert record_criterion(5, otp_ok and med_ok,
                            f"{detail} at d=1..5 (OTP rows {'ok' if otp_ok else 'fail'}, "
                            f"median rows {'ok' if med_ok else 'fail'})"), detail


def test_criterion_06_dcorr_oracle(record_criterion):
    rng = np.random.default_rng(6)
    worst, degenerate, ok = 0.0, 0, True
    for _ in range(100):
        N = int(rng.integers(4, 11))
        Z = rng.normal(size=(N, int(rng.integers(1, 4))))
        E = rng.normal(size=(N, 1)) if rng.random() < 0.5 else np.r_[0.0, 1.0, rng.integers(0, 2, N - 2)]
        for centering, unbiased in (("u-centered", True), ("double", False)):
            try:
                fast = dcorr(Z, E, centering)
            except DegenerateInputError:
                # a one-vs-rest label is additive and U-centers to zero; the oracle must agree
                B = naive_center(naive_distances(E), unbiased)
                degenerate += 1
                ok = ok and np.abs(B).max() <= 1e-12
                continue
            worst = max(worst, abs(fast - naive_dcorr(Z, E, unbiased)))
    ok = ok and worst <= 1e-12
    assert record_criterion(6, ok, f"max |fast - naive| = {worst:.2e} over 100 instances x 2 centerings; "
                                   f"{degenerate} degenerate cases rejected by both"), worst


def test_criterion_07_double_center_sums(record_criterion):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        N = int(rng.integers(2, 60))
        D = pairwise_distances(rng.normal(size=(N, 3)) * 10.0 ** rng.uniform(-3, 6))
        Dc = double_center(D)
        scale = N * D.max() if D.max() > 0 else 1.0
        worst = max(worst, np.abs(Dc.sum(0)).max() / scale, np.abs(Dc.sum(1)).max() / scale)
    ok = worst < 1e-9
    assert record_criterion(7, ok, f"max |row or column sum| / (N max D) = {worst:.2e}"), worst


def test_criterion_08_mgc_global_scale(record_criterion):
    rng = np.random.default_rng(8)
    worst = 0.0
    for k in range(50):
        N = int(rng.integers(5, 60))
        Z = rng.normal(size=(N, int(rng.integers(1, 4))))
        E = np.r_[0.0, 1.0, rng.integers(0, 2, N - 2)] if k % 2 else rng.normal(size=N)
        worst = max(worst, abs(mgc(Z, E).local_correlations[-1, -1] - dcorr(Z, E)))
    ok = worst <= 1e-10
    assert record_criterion(8, ok, f"max |c_NN - unbiased DCorr| = {worst:.2e} over 50 instances"), worst


def test_criterion_09_procrustes_and_otp(record_criterion):
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 6))
        X = rng.normal(size=(int(rng.integers(d + 1, 50)), d))
        W0 = ortho_group.rvs(d, random_state=rng) if d > 1 else np.array([[rng.choice([-1.0, 1.0])]])
        worst = max(worst, np.linalg.norm(orthogonal_procrustes(X, X @ W0.T) - W0))

    X = np.random.default_rng(90).uniform(0.2, 0.7, (200, 2))
    Y = X @ ortho_group.rvs(2, random_state=91)
    # the entropic blur alone costs about 0.8 reg, so the 1e-3 target needs reg well below 1.2e-3
    reg = 0.0005 * np.median(_cost(X, Y, np.eye(2)))
    res = otp_align(X, Y, reg=reg, sinkhorn_max_iter=20000)
    rises = [max(np.diff(run.history), default=0.0) / max(run.history) for run in res.candidates]
    # plans are exact only to the 1e-8 Sinkhorn tolerance
    monotone = max(rises) <= 1e-8
    ok = worst < 1e-10 and res.objective < 1e-3 and monotone
    assert record_criterion(9, ok, f"Procrustes max error {worst:.2e}; OTP objective {res.objective:.2e} "
                                   f"(reg {reg:.2e}); largest relative rise {max(rises):.1e}"), ok


def test_criterion_10_sinkhorn(record_criterion):
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(60):
        n, m = int(rng.integers(2, 80)), int(rng.integers(2, 80))
        C = rng.uniform(0, 1, (n, m)) * 10.0 ** rng.uniform(-2, 2)
        reg = float(np.median(C)) * 10.0 ** rng.uniform(-2, 0.5)
        P = sinkhorn_plan(C, reg, max_iter=20000)
        worst = max(worst, np.abs(P.sum(1) - 1 / n).max(), np.abs(P.sum(0) - 1 / m).max())
    X = rng.normal(size=(40, 3))
    for run in otp_align(X, rng.normal(size=(30, 3))).candidates:
        worst = max(worst, np.abs(run.plan.sum(1) - 1 / 40).max(), np.abs(run.plan.sum(0) - 1 / 30).max())
    C = np.full((4, 4), 10.0)
    np.fill_diagonal(C, 0.0)
    lp_gap = np.abs(sinkhorn_plan(C, 0.01) - exact_ot(C)).max()
    ok = worst <= 1e-8 and lp_gap <= 1e-3
    assert record_criterion(10, ok, f"max marginal error {worst:.2e} over 68 plans; 4x4 gap to LP {lp_gap:.2e}"), ok


@pytest.mark.slow
def test_criterion_11_determinism(record_criterion, hemispheres):
    if "table1_csv" not in _cache or "nonlinear_csv" not in _cache:
        pytest.skip("needs criteria 3 and 5 in the same session")
    table_same = table1(hemispheres).to_csv() == _cache["table1_csv"]
    # rerun through a process pool to check scheduling independence
    again = run_univariate_power("nonlinear-beta", [25, 50, 75, 100], replicates=200, B=500, seed=3, threads=2)
    curves_same = curves_to_csv(again.values()) == _cache["nonlinear_csv"]
    ok = table_same and curves_same
    assert record_criterion(11, ok, f"Table 1 CSV identical: {table_same}; nonlinear power CSV identical "
                                    f"(pooled rerun): {curves_same}"), ok
