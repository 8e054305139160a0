"""Acceptance criteria, each run at its stated tolerance and time limit.

Every test records a single PASS/FAIL line (also shown in the pytest
terminal summary). Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import json
import time

import numpy as np
import pytest
from scipy.linalg import orthogonal_procrustes

from matcomp import (CleaningConfig, GrassmannPair, RevealModel, complete, dense_svd,
                     distances, random_low_rank, reveal, rmse, solve_S, top_r_svd)
from matcomp.cleaning import Ftilde, cost_G, grad_Ftilde
from matcomp.cli import main as cli_main
from matcomp.experiments import ExperimentSpec, run_experiment
from matcomp.grassmann import (TangentPair, geodesic, in_K, pair_geodesic, project_tangent,
                               rescale_incoherent, row_norms_sq)

from conftest import random_frame, random_pair, random_sparse, report


# -- 1 ---------------------------------------------------------------------

def test_criterion_01_gradient_finite_differences():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    m, n = 60, 40
    worst, instances = 0.0, 0
    for inst in range(20):
        r = (1, 2, 3)[inst % 3]
        truth = random_low_rank(m, n, r, np.linspace(1.5, 1.0, r), seed=inst)
        a = reveal(truth, RevealModel("uniform_fixed_size", 6 * n * r, seed=inst))
        x = random_pair(rng, m, n, r)
        # half the instances sit where the incoherence penalty is active
        mu0 = 0.5 if inst % 2 else 10.0
        config = CleaningConfig(mu0=mu0)
        rho = config.resolve_rho(a)
        g = grad_Ftilde(x, a, config)
        for _ in range(20):
            w = TangentPair(project_tangent(x.X, rng.standard_normal((m, r))),
                            project_tangent(x.Y, rng.standard_normal((n, r))))
            w = w.scaled(1.0 / w.norm())
            h = 1e-6 * np.sqrt(m)
            fd = (Ftilde(pair_geodesic(x, w, h), a, mu0, rho)
                  - Ftilde(pair_geodesic(x, w, -h), a, mu0, rho)) / (2 * h)
            exact = g.inner(w)
            worst = max(worst, abs(fd - exact) / abs(exact))
        instances += cost_G(x, mu0) > 0
    dt = time.perf_counter() - t0
    ok = worst <= 1e-5 and dt < 30
    report(1, ok, f"max relative FD error {worst:.2e} over 400 directions "
                  f"({instances} instances with active penalty)", dt)
    assert ok


# -- 2 ---------------------------------------------------------------------

def test_criterion_02_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    svd_err, svd_count = 0.0, 0
    for _ in range(50):
        m, n = (int(v) for v in rng.integers(5, 101, 2))
        a = random_sparse(rng, m, n, int(rng.integers(min(m, n), m * n // 3 + min(m, n))))
        s = dense_svd(a.to_dense()).s
        s1 = s[0]
        # ranks whose trailing gap satisfies the relative-gap proviso
        candidates = [r for r in range(1, min(m, n, 12) + 1)
                      if s[r - 1] - (s[r] if r < s.size else 0.0) >= 1e-6 * s1]
        r = int(rng.choice(candidates))
        svd_err = max(svd_err, float(np.max(np.abs(top_r_svd(a, r).s - s[:r]))))
        svd_count += 1
    s_err = 0.0
    for _ in range(50):
        m, n = (int(v) for v in rng.integers(6, 20, 2))
        r = int(rng.integers(1, 4))
        a = random_sparse(rng, m, n, int(rng.integers(r * r + 2, m * n // 2)))
        x = random_pair(rng, m, n, r)
        A = np.array([np.kron(x.X[i], x.Y[j]) for i, j in zip(a.rows, a.cols)])
        oracle = np.linalg.lstsq(A, a.values, rcond=None)[0].reshape(r, r)
        s_err = max(s_err, float(np.max(np.abs(solve_S(x, a) - oracle))))
    dt = time.perf_counter() - t0
    ok = svd_err <= 1e-8 and s_err <= 1e-10 and svd_count == 50 and dt < 60
    report(2, ok, f"top_r_svd vs dense max |ds| {svd_err:.1e} (50 matrices); "
                  f"solve_S vs lstsq max error {s_err:.1e} (50 instances)", dt)
    assert ok


# -- 3 ---------------------------------------------------------------------

def test_criterion_03_distance_geometry():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    chain_viol, def_err = 0, 0.0
    for k in range(10_000):
        r = (1, 2, 5)[k % 3]
        n = int(rng.integers(r + 1, 30))
        x1 = random_frame(rng, n, r)
        if k % 4 == 0:
            # nearby pairs stress the small-angle end
            w = project_tangent(x1, rng.standard_normal((n, r)))
            x2 = geodesic(x1, w * 10.0 ** rng.uniform(-8, -1) / np.linalg.norm(w) * np.sqrt(n), 1.0)
        else:
            x2 = random_frame(rng, n, r)
        d, dc, dp = distances(x1, x2)
        s = 1e-10
        chain = (d / np.pi <= dc / np.sqrt(2) + s and dc / np.sqrt(2) <= dp + s
                 and dp <= dc + s and dc <= d + s)
        chain_viol += not chain
        q, _ = orthogonal_procrustes(x1, x2)
        dc_def = np.linalg.norm(x1 @ q - x2) / np.sqrt(n)
        dp_def = np.linalg.norm(x1 @ x1.T - x2 @ x2.T) / (np.sqrt(2) * n)
        def_err = max(def_err, abs(dc - dc_def), abs(dp - dp_def))
    dt = time.perf_counter() - t0
    ok = chain_viol == 0 and def_err <= 1e-8
    report(3, ok, f"{chain_viol} chain violations in 10^4 pairs; angle vs matrix-norm "
                  f"definitions max diff {def_err:.1e}", dt)
    assert ok


# -- 4 and 9 ---------------------------------------------------------------

@pytest.fixture(scope="module")
def scaling_run(tmp_path_factory):
    t0 = time.perf_counter()
    spec = ExperimentSpec(kind="rmse_scaling", n_grid=[1000], r_grid=[3], seeds=list(range(10)),
                          eps_grid=[15.0, 30.0, 60.0, 120.0], sigma=[1.2, 1.1, 1.0],
                          skip_clean=True, output=str(tmp_path_factory.mktemp("c4")))
    records, summary = run_experiment(spec)
    return records, summary, time.perf_counter() - t0


def test_criterion_04_projection_rmse_slope(scaling_run):
    records, summary, dt = scaling_run
    slope = summary["slopes"]["n1000_r3"]
    meds = ", ".join(f"{row['median_rmse']:.3g}" for row in summary["table"])
    ok = summary["failures"] == 0 and -0.65 <= slope <= -0.35 and dt < 600
    report(4, ok, f"fitted slope {slope:.3f} (target [-0.65, -0.35]); "
                  f"median RMSE by eps 15/30/60/120: {meds}", dt)
    assert ok


def test_criterion_09_gap_bound_on_projections(scaling_run):
    records, summary, dt = scaling_run
    checked = [rec.extra["gap_bound"] for rec in records if rec.failure is None]
    viol = sum(not g["holds"] for g in checked)
    worst = max(max(g["dp_u"], g["dp_v"]) / g["bound"] for g in checked)
    ok = len(checked) == 40 and viol == 0
    report(9, ok, f"{viol} violations over {len(checked)} projections "
                  f"(largest d_p / bound {worst:.3f})", 0.0)
    assert ok


# -- 5 ---------------------------------------------------------------------

def test_criterion_05_deviation_constant(tmp_path):
    t0 = time.perf_counter()
    spec = ExperimentSpec(kind="lemma_constants", n_grid=[500, 1000, 2000], r_grid=[3],
                          seeds=list(range(5)), eps_grid=[30.0], sigma=[1.2, 1.1, 1.0],
                          output=str(tmp_path))
    _, summary = run_experiment(spec)
    spread = summary["normalized_opnorm_spread"]["r3_b30"]
    per_n = ", ".join(f"n={row['n']}: {row['max_normalized_opnorm']:.3f}" for row in summary["table"])
    dt = time.perf_counter() - t0
    ok = summary["failures"] == 0 and spread < 2 and dt < 300
    report(5, ok, f"normalized deviation max/min across n = {spread:.3f} ({per_n})", dt)
    assert ok


# -- 6 ---------------------------------------------------------------------

def test_criterion_06_trimming_effect(tmp_path):
    t0 = time.perf_counter()
    spec = ExperimentSpec(kind="trim_effect", n_grid=[2000], r_grid=[3], seeds=list(range(10)),
                          eps_grid=[30.0], model="heavytail", sigma=[1.2, 1.1, 1.0], top_k=10,
                          output=str(tmp_path))
    records, summary = run_experiment(spec)
    row = summary["table"][0]
    improved, exact = row["gap_improved"], row["exactly_r_above_after"]
    dt = time.perf_counter() - t0
    ok = summary["failures"] == 0 and improved >= 9 and exact == 10 and dt < 300
    report(6, ok, f"gap s3/s4 improved by trimming in {improved}/10 seeds (need >= 9); "
                  f"exactly 3 above 2x median(s4..s10) after trimming in {exact}/10 seeds "
                  f"(median gap {row['median_gap_before']:.3f} -> {row['median_gap_after']:.3f})",
           dt)
    assert ok


# -- 7 ---------------------------------------------------------------------

def test_criterion_07_exact_recovery():
    t0 = time.perf_counter()
    n, r = 400, 2
    count = int(8 * n * np.log(n))
    errors, residual_ok, g_zero = [], 0, 0
    for seed in range(20):
        truth = random_low_rank(n, n, r, [1.5, 1.0], seed=seed)
        a = reveal(truth, RevealModel("uniform_fixed_size", count, seed=seed))
        fit = complete(a, r, seed=seed)
        errors.append(rmse(truth, fit.factors).rel_frobenius)
        st = fit.state
        trace_f = [t["F"] + st.rho * t["G"] for t in st.trace]
        monotone = all(b <= a_ for a_, b in zip(trace_f, trace_f[1:]))
        residual_ok += bool(st.F <= st.fit_residual0 and monotone)
        g_zero += st.G == 0
    dt = time.perf_counter() - t0
    successes = sum(e <= 1e-6 for e in errors)
    ok = successes >= 18 and residual_ok == 20 and g_zero == 20 and dt < 600
    report(7, ok, f"{successes}/20 seeds with relative Frobenius <= 1e-6 (median "
                  f"{np.median(errors):.1e}, worst {max(errors):.1e}); residual never above x0 "
                  f"in {residual_ok}/20; G = 0 at the end in {g_zero}/20", dt)
    assert ok


# -- 8 ---------------------------------------------------------------------

def test_criterion_08_rescaling():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    in_k, within, clipped, worst = 0, 0, 0, 0.0
    for k in range(100):
        n = int(rng.choice([100, 200, 400]))
        r = int(rng.integers(1, 6))
        U = random_frame(rng, n, r)
        mu0 = row_norms_sq(U).max() / r
        delta = rng.uniform(0.002, 1 / 16)
        W = rng.standard_normal((n, r))
        if k % 2:
            # push the perturbation into the heaviest rows so clipping must act
            heavy = np.argsort(row_norms_sq(U))[-3:]
            W[np.setdiff1d(np.arange(n), heavy)] *= 0.05
            W[heavy] = np.abs(W[heavy]) * np.sign(U[heavy])
        W = project_tangent(U, W)
        # geodesic length d(X, U) = |W|_F / sqrt(n) for small angles
        X = geodesic(U, W * delta * np.sqrt(n) / np.linalg.norm(W), 1.0)
        d_in = distances(X, U).geodesic
        clipped += not in_K(X, mu0, r)
        out = rescale_incoherent(X, mu0)
        in_k += in_K(out, 3 * mu0, r)
        d_out = distances(out, U).geodesic
        within += d_out <= 4 * d_in
        worst = max(worst, d_out / d_in)
    dt = time.perf_counter() - t0
    ok = in_k == 100 and within == 100 and dt < 30
    report(8, ok, f"{in_k}/100 outputs in K(3 mu0); {within}/100 with d <= 4 delta "
                  f"(largest ratio {worst:.2f}; clipping active in {clipped})", dt)
    assert ok


# -- 10 --------------------------------------------------------------------

def _json_without_timings(path):
    d = json.loads(path.read_text())
    d.pop("timings", None)
    if isinstance(d.get("spec"), dict):
        d["spec"].pop("output", None)
    return d


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    compared, mismatched = 0, []

    def twice(args_for):
        nonlocal compared
        outs = [tmp_path / f"{args_for.__name__}_{k}" for k in (0, 1)]
        for out in outs:
            assert cli_main(args_for(out)) == 0
        for p in sorted(outs[0].rglob("*.json")):
            other = outs[1] / p.relative_to(outs[0])
            compared += 1
            if _json_without_timings(p) != _json_without_timings(other):
                mismatched.append(str(p.relative_to(tmp_path)))
        for p in sorted(outs[0].rglob("*")):
            if p.suffix in (".csv", ".mtx", ".txt"):
                compared += 1
                if p.read_bytes() != (outs[1] / p.relative_to(outs[0])).read_bytes():
                    mismatched.append(str(p.relative_to(tmp_path)))

    gen = tmp_path / "gen"
    assert cli_main(["generate", "--n", "400", "--r", "2", "--sigma", "1.5,1", "--num-revealed",
                     str(int(8 * 400 * np.log(400))), "--seed", "3", "--output", str(gen)]) == 0

    def complete_cmd(out):
        return ["complete", "--observed", str(gen / "observed.mtx"), "--r", "2", "--truth",
                str(gen / "factors.txt"), "--output", str(out)]

    def spectrum_cmd(out):
        return ["spectrum", "--observed", str(gen / "observed.mtx"), "--truth",
                str(gen / "factors.txt"), "--output", str(out)]

    def deviation_cmd(out):
        return ["experiment", "--kind", "lemma_constants", "--n", "500,1000", "--r", "3",
                "--eps", "30", "--seeds", "0-1", "--sigma", "1.2,1.1,1", "--output", str(out)]

    def scaling_cmd(out):
        return ["experiment", "--kind", "rmse_scaling", "--n", "300", "--r", "3", "--eps",
                "15,30", "--seeds", "0-1", "--sigma", "1.2,1.1,1", "--output", str(out)]

    for cmd in (complete_cmd, spectrum_cmd, deviation_cmd, scaling_cmd):
        twice(cmd)
    dt = time.perf_counter() - t0
    ok = compared > 0 and not mismatched
    report(10, ok, f"{compared} output files compared across repeated CLI runs, "
                   f"{len(mismatched)} differ (timing fields excluded)", dt)
    assert ok, mismatched


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v"]))
