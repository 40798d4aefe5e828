"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python3 tests/test_acceptance.py``.
"""

import csv
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from dgsp import (
    BandSpec,
    Coarsening,
    Delta,
    Discrete,
    DiscreteMap,
    GibbsConfig,
    IntervalFamily,
    MHConfig,
    OperatorEnsemble,
    QuadratureRule,
    SymOperator,
    TruncatedGaussian,
    Uniform,
    analyze,
    band_pass,
    bandlimit_residual,
    bottom,
    compile_spec,
    convexity_check,
    convolution_matrix,
    eval_bipolynomial,
    fit_bipolynomial,
    forward,
    gibbs_exact,
    inverse,
    knn_graph,
    lambda_kernel,
    laplacian_from_edges,
    lattice_edges,
    mh_sample,
    nonuniqueness_witness,
    plan,
    pullback_filter_via_fibers,
    pullback_kernel_filter,
    pushforward,
    reconstruct,
    response_kernel,
    stretch_map,
    table_kernel,
)
from dgsp.sampling import sample_signal

from _util import ACCEPTANCE_LINES, oracle_eigh, random_ensemble, random_weighted_laplacian

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def report(capsys):
    def emit(num, ok, text):
        line = f"criterion {num} {'PASS' if ok else 'FAIL'}: {text}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def weighted_lattice(rows, cols, rng):
    """Vertical/horizontal lattice Laplacians with jittered weights (simple spectra)."""
    v, h = lattice_edges(rows, cols)
    n = rows * cols
    v = [(a, b, 1.0 + 0.5 * rng.random()) for a, b, _ in v]
    h = [(a, b, 1.0 + 0.5 * rng.random()) for a, b, _ in h]
    return laplacian_from_edges(v, n), laplacian_from_edges(h, n)


# -- 1 ---------------------------------------------------------------------------


def test_criterion_01_parseval_and_inversion(report):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_norm = worst_inv = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 51))
        Q = int(rng.integers(1, 33))
        ens = random_ensemble(n, Q, rng)
        for _ in range(100):
            f = rng.standard_normal(n) * 10.0 ** rng.uniform(-3, 3)
            c = forward(f, ens)
            nf = np.linalg.norm(f)
            worst_norm = max(worst_norm, abs(c.norm() - nf) / max(nf, 1.0))
            worst_inv = max(worst_inv, np.abs(inverse(c) - f).max() / max(nf, 1.0))
    elapsed = time.perf_counter() - start
    ok = worst_norm <= 1e-10 and worst_inv <= 1e-10 and elapsed < 10
    report(1, ok, f"max norm gap {worst_norm:.1e}, max inversion error {worst_inv:.1e}, {elapsed:.2f}s (tol 1e-10, <10s)")
    assert ok


# -- 2 ---------------------------------------------------------------------------


def classical_reconstruct(U_band, V_j, samples):
    """Least-squares interpolation of samples in the span of the band's eigenvectors."""
    coef, *_ = np.linalg.lstsq(U_band[list(V_j)], samples, rcond=None)
    return U_band @ coef


def test_criterion_02_classical_reduction(report):
    rng = np.random.default_rng(202)
    worst = {"transform": 0.0, "convolution": 0.0, "band-pass": 0.0, "sampling": 0.0}
    for _ in range(6):
        n = int(rng.integers(6, 41))
        M = random_weighted_laplacian(n, rng)
        lam, U = oracle_eigh(M)
        ens = compile_spec(Delta(SymOperator(M)))
        f = rng.standard_normal(n)
        worst["transform"] = max(worst["transform"], np.abs(forward(f, ens).table[0] - U.T @ f).max())
        resp = np.exp(-0.4 * lam) + 0.1 * lam
        F = convolution_matrix(response_kernel(ens, lambda t, x: np.exp(-0.4 * x) + 0.1 * x)).matrix
        worst["convolution"] = max(worst["convolution"], np.abs(F - U @ np.diag(resp) @ U.T).max())
        m = int(rng.integers(1, n))
        B = band_pass(bottom(m), ens)
        worst["band-pass"] = max(worst["band-pass"], np.abs(B.matrix - U[:, :m] @ U[:, :m].T).max())
        p = plan(analyze(B), budget=m)
        g = U[:, :m] @ rng.standard_normal(m)
        rep = reconstruct(p, sample_signal(p, g), 0.0)
        oracle = classical_reconstruct(U[:, :m], p.V_j, g[list(p.V_j)])
        worst["sampling"] = max(worst["sampling"], np.abs(rep.f_prime - oracle).max(), np.abs(rep.f_prime - g).max())
    ok = max(worst.values()) <= 1e-8
    report(2, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (tol 1e-8)")
    assert ok


# -- 3 ---------------------------------------------------------------------------


def test_criterion_03_moment_identities(report):
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(8):
        ens = random_ensemble(int(rng.integers(3, 21)), int(rng.integers(1, 9)), rng)
        for p in (1, 2, 3):
            F = convolution_matrix(lambda_kernel(ens, p)).matrix
            ref = sum(w * np.linalg.matrix_power(op.matrix, p) for w, op in zip(ens.weights, ens.operators))
            worst = max(worst, np.linalg.norm(F - ref) / np.linalg.norm(ref))
    P = np.array([[1.0, -1, 0], [-1, 2, -1], [0, -1, 1]])
    S = np.array([[2.0, -1, -1], [-1, 1, 0], [-1, 0, 1]])
    pair = OperatorEnsemble.from_operators([SymOperator(P), SymOperator(S)], [0.5, 0.5])
    Ex = convolution_matrix(lambda_kernel(pair)).matrix
    Ex2 = convolution_matrix(lambda_kernel(pair, 2)).matrix
    gap = np.linalg.norm(Ex2 - Ex @ Ex)
    ok = worst <= 1e-10 and gap > 1e-6
    report(3, ok, f"max relative moment error {worst:.1e} (tol 1e-10); ||E(x^2) - (Ex)^2||_F = {gap:.3f} (> 1e-6)")
    assert ok


# -- 4 ---------------------------------------------------------------------------


def test_criterion_04_band_pass_spectra(report):
    rng = np.random.default_rng(404)
    lo, hi = np.inf, -np.inf
    for _ in range(50):
        n = int(rng.integers(2, 31))
        Q = int(rng.integers(1, 9))
        ens = random_ensemble(n, Q, rng)
        if rng.random() < 0.5:
            Y = bottom(int(rng.integers(0, n + 1)))
        else:
            Y = BandSpec(per_fiber=tuple(tuple(np.flatnonzero(rng.random(n) < 0.4)) for _ in range(Q)))
        ev = analyze(band_pass(Y, ens)).eigenvalues if Y.bottom != 0 else np.zeros(n)
        lo, hi = min(lo, ev.min()), max(hi, ev.max())
    A = SymOperator(np.diag([0.0, 1.0, 2.0]))
    B = SymOperator(np.diag([1.0, 0.0, 2.0]))
    mix = analyze(band_pass(bottom(1), OperatorEnsemble.from_operators([A, B], [0.5, 0.5]))).eigenvalues
    witness = [float(x) for x in mix if 0.4 < x < 0.6]
    ok = lo >= -1e-10 and hi <= 1 + 1e-10 and bool(witness)
    report(4, ok, f"spectra within [{lo:.2e}, {hi:.12f}] over 50 fixtures; mixture eigenvalue {witness[:1]}")
    assert ok


# -- 5 ---------------------------------------------------------------------------


def proposition_fixtures(rng):
    M = random_weighted_laplacian(30, rng)
    yield "delta n=30", band_pass(bottom(8), compile_spec(SymOperator(M))), {"budget": 10}
    X = rng.random((40, 2))
    ops = [laplacian_from_edges(knn_graph(X, k), 40) for k in (3, 4, 5, 6)]
    ens = compile_spec(Discrete(tuple(ops), (0.1, 0.4, 0.3, 0.2)))
    yield "knn mixture n=40", band_pass(bottom(10), ens), {"threshold": 0.5}
    L1, L2 = weighted_lattice(6, 7, rng)
    fam = IntervalFamily(L1, L2, TruncatedGaussian(0.5, 0.2), QuadratureRule("uniform_midpoint", 16))
    yield "lattice family n=42", band_pass(bottom(10), compile_spec(fam)), {"budget": 14}


def test_criterion_05_proposition_bounds(report):
    start = time.perf_counter()
    rng = np.random.default_rng(505)
    violations = trials = 0
    tightest = 0.0
    for name, B, cut in proposition_fixtures(rng):
        p = plan(analyze(B), **cut)
        n, k = p.basis.shape
        for _ in range(1000):
            f = p.basis @ rng.standard_normal(k) + rng.uniform(0, 1) ** 2 * rng.standard_normal(n)
            eps = bandlimit_residual(f, B) * (1.0 + rng.uniform(0, 0.5) * (rng.random() < 0.5))
            rep = reconstruct(p, sample_signal(p, f), eps)
            err = float(np.linalg.norm(rep.f_prime - f))
            res = bandlimit_residual(rep.f_prime, B)
            if err > rep.bound_a + 1e-9 or res > rep.epsilon_prime + 1e-9:
                violations += 1
            if rep.bound_a > 0:
                tightest = max(tightest, err / rep.bound_a)
            trials += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and trials == 3000 and elapsed < 60
    report(5, ok, f"{violations} violations in {trials} trials over 3 fixtures, tightest error/bound {tightest:.3f}, {elapsed:.2f}s (<60s)")
    assert ok


# -- 6 ---------------------------------------------------------------------------


def test_criterion_06_convexity(report):
    rng = np.random.default_rng(606)
    ens = random_ensemble(20, 5, rng)
    B = band_pass(bottom(6), ens)
    p = plan(analyze(B), budget=8)
    failures = 0
    worst_excess = -np.inf
    for _ in range(500):
        f = p.basis @ rng.standard_normal(8) + rng.uniform(0, 0.5) * rng.standard_normal(20)
        g = p.basis @ rng.standard_normal(8) + rng.uniform(0, 0.5) * rng.standard_normal(20)
        eps = max(bandlimit_residual(f, B), bandlimit_residual(g, B))
        worst_excess = max(worst_excess, bandlimit_residual(0.5 * (f + g), B) - eps)
        failures += not convexity_check(f, g, B, eps)
    f0 = p.basis @ rng.standard_normal(8)
    eps = bandlimit_residual(f0, B) + 0.5
    f1, f2 = nonuniqueness_witness(p, B, f0, eps)
    same = np.array_equal(sample_signal(p, f1), sample_signal(p, f2))
    both = max(bandlimit_residual(f1, B), bandlimit_residual(f2, B)) <= eps + 1e-12
    diff = float(np.linalg.norm(f1 - f2))
    ok = failures == 0 and worst_excess <= 1e-12 and same and both and diff > 1e-3
    report(6, ok, f"{failures}/500 midpoint failures (max excess {worst_excess:.1e}); witness at eps={eps:.3f}: same samples {same}, bandlimited {both}, distance {diff:.3f}")
    assert ok


# -- 7 ---------------------------------------------------------------------------


def test_criterion_07_base_change(report):
    rng = np.random.default_rng(707)
    heat = lambda t, lam: np.exp(-(0.5 + t) * lam)  # noqa: E731

    mats = [random_weighted_laplacian(8, rng) for _ in range(3)]
    X = OperatorEnsemble.from_operators([SymOperator(m) for m in mats], [0.2, 0.3, 0.5])
    Y = OperatorEnsemble.from_operators([SymOperator(mats[0].copy()), SymOperator(mats[2].copy())], [0.5, 0.5])
    K = table_kernel(rng.standard_normal((3, 8)), X)
    incl = np.abs(pullback_filter_via_fibers(K, DiscreteMap((0, 2)), Y, X) - pullback_kernel_filter(K, DiscreteMap((0, 2)), Y, X)).max()

    L1, L2 = weighted_lattice(4, 5, rng)
    fam = IntervalFamily(L1, L2, quadrature=QuadratureRule(Q=10))
    Yf = compile_spec(fam)
    Xc = compile_spec(Discrete((fam.fiber_at(0.15), fam.fiber_at(0.65)), (0.5, 0.5), (0.15, 0.65)))
    h = Coarsening((0.3,), (0.15, 0.65))
    F_fib = pullback_filter_via_fibers(heat, h, Yf, Xc)
    push = np.abs(convolution_matrix(response_kernel(pushforward(Yf, h, Xc), heat)).matrix - F_fib).max()
    coarse_gap = np.linalg.norm(F_fib - pullback_kernel_filter(heat, h, Yf, Xc))

    inv_err = scal_err = 0.0
    A, B = L1.matrix, L2.matrix
    for eta in (0.5, 2.0, 5.0):
        s = stretch_map(eta)
        for y in np.linspace(0.0, 1.0, 101):
            inv_err = max(inv_err, abs(s(s.inverse(y)) - y), abs(s.inverse(s(y)) - y))
            x = s(y)
            H = x * A + (1 - x) * eta * B
            c = eta / (1 - y + y * eta)
            scal_err = max(scal_err, np.linalg.norm(H - c * (y * A + (1 - y) * B)))
    ok = incl <= 1e-12 and push <= 1e-12 and inv_err <= 1e-14 and scal_err <= 1e-12 and coarse_gap > 1e-6
    report(
        7,
        ok,
        f"inclusion {incl:.1e}, pushforward {push:.1e}, stretch inverse {inv_err:.1e}, "
        f"scalar multiple {scal_err:.1e}, coarsening gap {coarse_gap:.3f} (> 1e-6)",
    )
    assert ok


# -- 8 ---------------------------------------------------------------------------


def test_criterion_08_bipolynomial(report):
    rng = np.random.default_rng(808)
    fam = IntervalFamily(SymOperator(random_weighted_laplacian(6, rng)), SymOperator(random_weighted_laplacian(6, rng)))
    T = [0.0, 0.25, 0.5, 0.75, 1.0]
    held_out = [0.1, 0.37, 0.62, 0.9]
    kernels = [
        lambda t, lam: lam,
        lambda t, lam: t * lam,
        lambda t, lam: t**3 + lam**3,
        lambda t, lam: 1 - 2 * t * lam**2 + t**2 * lam,
    ]
    for _ in range(6):
        C = np.zeros((4, 4))
        for s in range(4):
            for i in range(4 - s):
                C[s, i] = rng.standard_normal()
        kernels.append(lambda t, lam, C=C: sum(C[s, i] * t**s * lam**i for s in range(4) for i in range(4)))
    worst = 0.0
    for k in kernels:
        bp = fit_bipolynomial(fam, k, T, 3)
        for t in held_out:
            lam, U = oracle_eigh(fam.fiber_at(t).matrix)
            worst = max(worst, np.abs(eval_bipolynomial(bp, t) - U @ np.diag(k(t, lam)) @ U.T).max())
    ok = worst <= 1e-6
    report(8, ok, f"max held-out filter error {worst:.1e} over {len(kernels)} kernels x {len(held_out)} parameters (tol 1e-6)")
    assert ok


# -- 9 ---------------------------------------------------------------------------


def test_criterion_09_gibbs_and_mh(report):
    exact = gibbs_exact([0.0, 1.0], GibbsConfig(math.log(2)))
    exact_err = float(np.abs(exact - [2 / 3, 1 / 3]).max())
    rng = np.random.default_rng(909)
    fixtures = [([0.0, 1.0], math.log(2)), (list(rng.random(5)), 4.0), (list(rng.random(10)), 3.0)]
    # per fixture and proposal: mean of the per-seed TV distances over 5 seeds
    worst_tv = worst_single = 0.0
    for risks, gamma in fixtures:
        target = gibbs_exact(risks, GibbsConfig(gamma))
        for proposal in ("uniform_independent", "neighbor_walk"):
            tvs = [
                tv(mh_sample(risks, len(risks), GibbsConfig(gamma), MHConfig(steps=100_000, proposal=proposal, seed=seed)).weights, target)
                for seed in range(5)
            ]
            worst_tv, worst_single = max(worst_tv, np.mean(tvs)), max(worst_single, max(tvs))
    prior_tv = 0.0
    for prior in ((0.25, 0.25, 0.25, 0.25), (0.1, 0.2, 0.3, 0.4)):
        tvs = [tv(mh_sample([3.0, 0.0, 1.0, 2.0], 4, GibbsConfig(0.0, prior), MHConfig(steps=100_000, seed=seed)).weights, prior) for seed in range(5)]
        prior_tv = max(prior_tv, np.mean(tvs))
    ok = exact_err <= 1e-12 and worst_tv <= 0.02 and prior_tv <= 0.02
    report(
        9,
        ok,
        f"exact posterior error {exact_err:.1e}; max seed-averaged MH TV {worst_tv:.4f} (worst single seed {worst_single:.4f}); "
        f"gamma=0 prior TV {prior_tv:.4f} (tol 0.02)",
    )
    assert ok


# -- 10 --------------------------------------------------------------------------


def run_pipeline(name, outdir):
    cmd = [sys.executable, "-m", "dgsp.cli", "experiment", "--pipeline", name, "--config", str(ROOT / "configs" / f"{name}.json"), "--out", str(outdir)]
    start = time.perf_counter()
    r = subprocess.run(cmd, capture_output=True, text=True)
    return r.returncode, time.perf_counter() - start, r.stderr


def table_values(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(x) for x in r[1:]] for r in rows[1:]])


def test_criterion_10_pipelines(report, tmp_path):
    notes = []
    ok = True
    for name, table in (("sampling", "sampling_table.csv"), ("anomaly", "anomaly_table.csv")):
        times = []
        for run in ("a", "b"):
            rc, dt, err = run_pipeline(name, tmp_path / name / run)
            ok &= rc == 0
            times.append(dt)
        header, vals = table_values(tmp_path / name / "a" / table)
        finite = bool(np.all(np.isfinite(vals)))
        identical = all(
            (tmp_path / name / "a" / f.name).read_bytes() == (tmp_path / name / "b" / f.name).read_bytes()
            for f in (tmp_path / name / "a").iterdir()
        )
        ok &= finite and identical and max(times) < 120 and header[0] == "metric" and header[-1] in ("B_Y", "distribution")
        notes.append(f"{name} {max(times):.1f}s finite={finite} identical={identical}")
    s = json.loads((tmp_path / "sampling" / "a" / "sampling_summary.json").read_text())
    ok &= s["B_Y_abs_error"] <= s["max_single_abs_error"]
    notes.append(f"B_Y error {s['B_Y_abs_error']:.3f} <= max single {s['max_single_abs_error']:.3f}")
    report(10, ok, "; ".join(notes))
    assert ok


# -- 11 --------------------------------------------------------------------------


def test_criterion_11_quadrature_refinement(report):
    rng = np.random.default_rng(1111)
    A = SymOperator(random_weighted_laplacian(12, rng))
    B = SymOperator(random_weighted_laplacian(12, rng))
    heat = lambda t, lam: np.exp(-0.3 * lam)  # noqa: E731
    ratios = []
    for dens in (Uniform(), TruncatedGaussian(0.4, 0.2)):

        def F(Q):
            ens = compile_spec(IntervalFamily(A, B, dens, QuadratureRule("uniform_midpoint", Q)))
            return convolution_matrix(response_kernel(ens, heat)).matrix

        ref = F(512)
        errs = {Q: np.linalg.norm(F(Q) - ref) for Q in (4, 8, 16, 32, 64)}
        ratios += [errs[Q] / errs[2 * Q] for Q in (4, 8, 16, 32)]
    ok = min(ratios) >= 3
    report(11, ok, f"error ratios Q->2Q in [{min(ratios):.2f}, {max(ratios):.2f}] (>= 3)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
