"""Experiment suites: grids of synthetic problems, per-run records and summaries.

Output layout of :func:`run_experiment`::

    <output>/runs/<run-id>.json   one RunRecord per (n, r, budget, seed)
    <output>/hist/<run-id>_*.csv  spectrum histograms (spectrum_histogram only)
    <output>/summary.csv
    <output>/summary.json
"""
from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cleaning import CleaningConfig
from .formats import write_csv, write_json
from .grassmann import subspace_gap_bound
from .metrics import rmse
from .pipeline import complete
from .records import RunRecord
from .sampling import REVEAL_KINDS, RevealModel, random_low_rank, reveal
from .sparsemat import top_r_svd
from .spectral import spectral_diagnostics, trim

KINDS = ("spectrum_histogram", "rmse_scaling", "exact_recovery", "trim_effect", "lemma_constants")
MODEL_ALIASES = {"uniform": "uniform_fixed_size", "bernoulli": "bernoulli",
                 "heavytail": "heavy_tail_rows", "heavy_tail": "heavy_tail_rows"}
DESK_CAP = 10_000
SPECTRUM_DENSE_CAP = 2000


def default_sigma(r: int) -> list[float]:
    """``(1 + 0.1 (r-1), ..., 1.1, 1)``; r = 3 gives (1.2, 1.1, 1)."""
    return [round(1 + 0.1 * k, 10) for k in range(r - 1, -1, -1)]


def model_name(name: str) -> str:
    name = MODEL_ALIASES.get(name, name)
    if name not in REVEAL_KINDS:
        raise ValueError(f"unknown reveal model {name!r}")
    return name


@dataclass
class ExperimentSpec:
    kind: str
    n_grid: list
    r_grid: list
    seeds: list
    eps_grid: list | None = None
    num_revealed_grid: list | None = None
    nlogn_grid: list | None = None
    model: str = "uniform_fixed_size"
    alpha: float = 1.0
    sigma: list | None = None
    output: str = "experiment"
    top_k: int = 10
    skip_clean: bool | None = None
    success_tol: float = 1e-6
    threads: int = 1
    allow_large: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        self.model = model_name(self.model)
        if not self.n_grid or not self.r_grid or not self.seeds:
            raise ValueError("grids and seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        given = [g for g in (self.eps_grid, self.num_revealed_grid, self.nlogn_grid)
                 if g is not None]
        if len(given) != 1:
            raise ValueError("give exactly one of eps_grid, num_revealed_grid, nlogn_grid")
        if not given[0]:
            raise ValueError("budget grid must be nonempty")
        if self.eps_grid is None and self.model != "uniform_fixed_size":
            raise ValueError("|E| grids need the uniform_fixed_size model")
        if not self.allow_large and max(self.n_grid) * max(self.alpha, 1) > DESK_CAP:
            raise ValueError(f"dimensions above {DESK_CAP} need allow_large")
        if self.sigma is not None and any(len(self.sigma) != r for r in self.r_grid):
            raise ValueError("sigma length must match every rank in r_grid")
        if self.skip_clean is None:
            self.skip_clean = self.kind == "rmse_scaling"

    def budgets(self):
        if self.eps_grid is not None:
            return [("eps", float(e)) for e in self.eps_grid]
        if self.nlogn_grid is not None:
            return [("nlogn", float(c)) for c in self.nlogn_grid]
        return [("num_revealed", int(e)) for e in self.num_revealed_grid]

    def tasks(self) -> list[dict]:
        out = []
        for n, r, (bkind, b), seed in itertools.product(self.n_grid, self.r_grid,
                                                         self.budgets(), self.seeds):
            m = int(round(self.alpha * n))
            out.append({
                "kind": self.kind, "m": m, "n": int(n), "r": int(r), "budget_kind": bkind,
                "budget": b, "seed": int(seed), "model": self.model,
                "sigma": list(self.sigma) if self.sigma is not None else default_sigma(r),
                "top_k": int(self.top_k), "skip_clean": bool(self.skip_clean),
                "success_tol": float(self.success_tol),
            })
        return out


def run_id(task: dict) -> str:
    b = task["budget"]
    btag = {"eps": "e", "nlogn": "c", "num_revealed": "E"}[task["budget_kind"]] + f"{b:g}"
    return f"n{task['n']}_m{task['m']}_r{task['r']}_{btag}_s{task['seed']}"


def _reveal_model(task):
    m, n, b = task["m"], task["n"], task["budget"]
    if task["model"] == "uniform_fixed_size":
        count = {"num_revealed": lambda: int(b),
                 "nlogn": lambda: int(b * n * math.log(n)),
                 "eps": lambda: int(round(b * math.sqrt(m * n)))}[task["budget_kind"]]()
        return RevealModel("uniform_fixed_size", count, task["seed"])
    return RevealModel(task["model"], b, task["seed"])


def _count_above(s, r, top_k):
    """Singular values above twice the median of ``s_{r+1}..s_{top_k}``."""
    tail = s[r:top_k]
    if tail.size == 0:
        return None
    return int(np.sum(s > 2 * np.median(tail)))


def _gap(s, r):
    return float(s[r - 1] / s[r]) if s.size > r and s[r] > 0 else None


def _spectrum(a, k):
    if min(a.shape) <= SPECTRUM_DENSE_CAP:
        return np.linalg.svd(a.to_dense(), compute_uv=False)
    return top_r_svd(a, min(k, min(a.shape)), vectors=0).s


def _histogram_rows(values):
    edges = np.histogram_bin_edges(values, bins="fd")
    counts, edges = np.histogram(values, bins=edges)
    return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def run_task(task: dict, hist_dir: str | None = None) -> RunRecord:
    """One synthetic problem; exceptions are captured in ``record.failure``."""
    rec = RunRecord(kind=task["kind"], seed=task["seed"], spec=dict(task))
    t_start = time.perf_counter()
    try:
        _run(task, rec, hist_dir)
    except Exception as exc:  # noqa: BLE001 - a failed seed must not stop the grid
        rec.failure = f"{type(exc).__name__}: {exc}"
    rec.timings["total"] = time.perf_counter() - t_start
    return rec


def _run(task, rec, hist_dir):
    kind, r = task["kind"], task["r"]
    truth = random_low_rank(task["m"], task["n"], r, task["sigma"], seed=task["seed"])
    observed = reveal(truth, _reveal_model(task))
    rec.extra["num_revealed"] = observed.nnz
    rec.extra["eps"] = observed.eps
    rec.extra["E_over_nr"] = observed.nnz / (task["n"] * r)
    trimmed, report = trim(observed)
    rec.trim = report.summary()
    top_k = max(task["top_k"], r + 1)

    if kind in ("rmse_scaling", "exact_recovery"):
        fit = complete(observed, r, CleaningConfig(), skip_clean=task["skip_clean"],
                       seed=task["seed"])
        rec.timings.update(fit.timings)
        rec.error = rmse(truth, fit.factors, observed.nnz).to_dict()
        proj_err = rmse(truth, fit.projection, observed.nnz)
        rec.extra["projection_rmse"] = proj_err.rmse
        bound = subspace_gap_bound(truth, fit.projection, strict=False)
        rec.extra["gap_bound"] = bound._asdict()
        if fit.state is not None:
            rec.cleaning = fit.state.summary()
        if kind == "exact_recovery":
            rec.extra["success"] = bool(rec.error["rel_frobenius"] <= task["success_tol"])
    elif kind == "lemma_constants":
        rec.spectral = spectral_diagnostics(truth, trimmed, r, observed.eps,
                                            seed=task["seed"]).to_dict()
    elif kind == "trim_effect":
        k = min(top_k, min(observed.shape))
        before = top_r_svd(observed, k, seed=task["seed"], vectors=0).s
        after = top_r_svd(trimmed, k, seed=task["seed"], vectors=0).s
        rec.extra.update(_spectrum_summary(before, after, r, k))
    elif kind == "spectrum_histogram":
        before = _spectrum(observed, top_k)
        after = _spectrum(trimmed, top_k)
        rec.extra.update(_spectrum_summary(before, after, r, top_k))
        if hist_dir is not None:
            rid = run_id(task)
            for tag, vals in (("before", before), ("after", after)):
                write_csv(Path(hist_dir) / f"{rid}_{tag}.csv", ["bin_left", "bin_right", "count"],
                          _histogram_rows(vals))
    else:  # pragma: no cover - guarded by ExperimentSpec
        raise ValueError(kind)


def _spectrum_summary(before, after, r, k):
    return {
        "sigma_before": [float(v) for v in before[:k]],
        "sigma_after": [float(v) for v in after[:k]],
        "gap_before": _gap(before, r),
        "gap_after": _gap(after, r),
        "above_before": _count_above(before, r, k),
        "above_after": _count_above(after, r, k),
    }


def _group_key(task):
    return (task["n"], task["r"], task["budget"])


def summarize(spec: ExperimentSpec, records: list[RunRecord]) -> tuple[list, dict]:
    """``(csv_rows, summary_dict)``; independent of record order."""
    records = sorted(records, key=lambda rec: (_group_key(rec.spec), rec.seed))
    ok = [rec for rec in records if rec.failure is None]
    groups = {}
    for rec in ok:
        groups.setdefault(_group_key(rec.spec), []).append(rec)
    rows = []
    summary = {"kind": spec.kind, "runs": len(records), "failures": len(records) - len(ok),
               "spec": asdict(spec)}
    header = ["n", "r", "budget", "seeds"]
    if spec.kind == "rmse_scaling":
        header += ["median_rmse", "median_E_over_nr", "gap_bound_violations"]
        per_nr = {}
        for (n, r, b), recs in sorted(groups.items()):
            med = float(np.median([x.error["rmse"] for x in recs]))
            x = float(np.median([x.extra["E_over_nr"] for x in recs]))
            viol = sum(not x.extra["gap_bound"]["holds"] for x in recs)
            rows.append([n, r, b, len(recs), med, x, viol])
            per_nr.setdefault((n, r), []).append((x, med))
        slopes = {}
        for (n, r), pts in per_nr.items():
            if len(pts) >= 2:
                xs, ys = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
                slopes[f"n{n}_r{r}"] = float(np.polyfit(xs, ys, 1)[0])
        summary["slopes"] = slopes
        summary["gap_bound_violations"] = int(sum(row[-1] for row in rows))
    elif spec.kind == "exact_recovery":
        header += ["success_rate", "median_rel_frobenius"]
        rates = {}
        for (n, r, b), recs in sorted(groups.items()):
            rate = float(np.mean([x.extra["success"] for x in recs]))
            rows.append([n, r, b, len(recs), rate,
                         float(np.median([x.error["rel_frobenius"] for x in recs]))])
            rates.setdefault(f"n{n}_r{r}", []).append(rate)
        summary["success_rates"] = rates
        summary["inversions"] = {k: int(sum(b < a for a, b in zip(v, v[1:])))
                                 for k, v in rates.items()}
    elif spec.kind == "lemma_constants":
        header += ["max_normalized_opnorm", "median_max_deviation"]
        per_rb = {}
        for (n, r, b), recs in sorted(groups.items()):
            mx = float(max(x.spectral["normalized_opnorm"] for x in recs))
            rows.append([n, r, b, len(recs), mx,
                         float(np.median([x.spectral["max_deviation"] for x in recs]))])
            per_rb.setdefault(f"r{r}_b{b:g}", []).append(mx)
        summary["normalized_opnorm_spread"] = {k: float(max(v) / min(v)) for k, v in per_rb.items()}
    else:
        header += ["gap_improved", "exactly_r_above_after", "median_gap_before", "median_gap_after"]
        for (n, r, b), recs in sorted(groups.items()):
            improved = sum((x.extra["gap_after"] or 0) > (x.extra["gap_before"] or 0) for x in recs)
            exact = sum(x.extra["above_after"] == r for x in recs)
            rows.append([n, r, b, len(recs), improved, exact,
                         float(np.median([x.extra["gap_before"] or 0 for x in recs])),
                         float(np.median([x.extra["gap_after"] or 0 for x in recs]))])
    summary["table"] = [dict(zip(header, row)) for row in rows]
    return [header] + rows, summary


def run_experiment(spec: ExperimentSpec, write: bool = True):
    """Run every task of ``spec``; returns ``(records, summary)``.

    With ``spec.threads > 1`` tasks run in a process pool; records are
    sorted by task before anything is written.
    """
    out = Path(spec.output)
    hist_dir = None
    if write:
        (out / "runs").mkdir(parents=True, exist_ok=True)
        if spec.kind == "spectrum_histogram":
            hist_dir = out / "hist"
            hist_dir.mkdir(exist_ok=True)
    tasks = spec.tasks()
    hd = str(hist_dir) if hist_dir else None
    if spec.threads > 1:
        with ProcessPoolExecutor(max_workers=spec.threads) as pool:
            records = list(pool.map(run_task, tasks, [hd] * len(tasks)))
    else:
        records = [run_task(t, hd) for t in tasks]
    records.sort(key=lambda rec: (_group_key(rec.spec), rec.seed))
    rows, summary = summarize(spec, records)
    if write:
        for rec in records:
            rec.write(out / "runs" / f"{run_id(rec.spec)}.json")
        write_csv(out / "summary.csv", rows[0], rows[1:])
        write_json(out / "summary.json", summary)
    return records, summary
