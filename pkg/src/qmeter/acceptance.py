"""Acceptance suite: eight criteria with fixed parameters, seeds and tolerances.

Every criterion returns a :class:`CriterionResult` whose ``rows`` are written as CSV.
CSV contents depend only on the seeds and parameters (never on timing or thread
count), which criterion 8 checks by rerunning the quick suite with a different number
of workers and comparing bytes.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qmeter.analytic import covariances, exact_excess, fluctuation_table, moment_bounds, moments, remainder_bounds
from qmeter.fock import FockSpace, block_error, displacement, propagate_path, time_averaged_N
from qmeter.functionals import compute_functionals, sample_ensemble
from qmeter.limits import gaussianity_check, limit_cf_check, real_transform_check, scaled_z_samples
from qmeter.model import ModelParams, TimeGrid
from qmeter.montecarlo import MCEstimate, _variance_estimate, error_curve
from qmeter.parallel import exact_mean, worker_count
from qmeter.paths import sample_path

SEED = 20240611
MOMENT_PARAMS = ModelParams(1.0, 0.25, 0.1)
REGIME_PARAMS = ModelParams(1.0, 0.1, 0.1)
FOCK_PARAMS = ModelParams(1.0, 0.25, 0.2)
LIMIT_PARAMS = ModelParams(1.0, 0.5, 0.2)

MOMENT_TIMES = (0.1, 1.0, 10.0, 50.0)
COVARIANCE_TIMES = (1.0, 5.0, 20.0)
FULL = {"moment_paths": 100_000, "regime_paths": 2000, "growth_paths": 10_000, "limit_paths": 10_000}
QUICK = {"moment_paths": 10_000, "regime_paths": 500, "growth_paths": 2000, "limit_paths": 2000}
RUNTIME_LIMITS = {1: 120.0, 5: 180.0, 7: 600.0}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    summary: str
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    runtime: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number} [{status}] {self.name}: {self.summary} ({self.runtime:.1f} s)"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_bytes(rows: list) -> bytes:
    """Rows (dicts sharing the keys of the first row) as CSV with round-trip float formatting."""
    buf = io.StringIO()
    if rows:
        keys = list(rows[0])
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in keys])
    return buf.getvalue().encode()


def _cplx_rows(base: dict, est: MCEstimate, target) -> list:
    """One row per real component of an estimate."""
    target = complex(target)
    mean, se = complex(est.mean), complex(est.se)
    out = []
    for part, m, s, tg in (("re", mean.real, se.real, target.real), ("im", mean.imag, se.imag, target.imag)):
        if part == "im" and not np.iscomplexobj(np.asarray(est.mean)):
            continue
        z = abs(m - tg) / s if s > 0 else (0.0 if m == tg else math.inf)
        out.append({**base, "part": part, "estimate": m, "se": s, "target": tg, "z": z, "ok": z <= 3.0})
    return out


# ---------------------------------------------------------------------------
# 1, 2: moments and covariances from one ensemble


def moment_ensemble(n_paths: int, workers=None):
    grid = TimeGrid.from_dt(max(MOMENT_TIMES), 1e-3)
    times = sorted(set(MOMENT_TIMES) | set(COVARIANCE_TIMES))
    return sample_ensemble(MOMENT_PARAMS, grid, times, n_paths, SEED, 0, workers)


def criterion_moments(ens) -> CriterionResult:
    rows = []
    dt = ens.grid.dt
    for t in MOMENT_TIMES:
        d = ens.at(t)
        m = moments(MOMENT_PARAMS, t)
        est = {
            "exp_eiphi": (MCEstimate.from_samples(d["e"], dt), m.exp_eiphi),
            "mean_Z": (MCEstimate.from_samples(d["z"], dt), m.mean_Z),
            "mean_ZstarZ": (MCEstimate.from_samples(np.abs(d["z"]) ** 2, dt), m.mean_ZstarZ),
            "mean_Y1": (MCEstimate.from_samples(d["y1"], dt), m.mean_Y1),
            "mean_Y0": (MCEstimate.from_samples(d["y0"], dt), m.mean_Y0),
            "mean_Y1starY1": (MCEstimate.from_samples(np.abs(d["y1"]) ** 2, dt), m.mean_Y1starY1),
        }
        for name, (e, target) in est.items():
            rows += _cplx_rows({"t": t, "quantity": name}, e, target)
    bad = [f"{r['quantity']}({r['part']}) t={r['t']} z={r['z']:.2f}" for r in rows if not r["ok"]]
    zmax = max(r["z"] for r in rows)
    return CriterionResult(1, "moment suite", not bad, f"{len(rows)} components, max z = {zmax:.2f}", rows, bad)


def covariance_estimates(ens, t: float) -> dict:
    d = ens.at(t)
    dt = ens.grid.dt
    z, e = d["z"], d["e"]
    zz = np.abs(z) ** 2
    pairs = {
        "zz_e": (zz, e),
        "ze_z": (np.conj(z) * e, z),
        "ez_z": (np.conj(e) * z, z),
    }
    out = {}
    for k, (a, b) in pairs.items():
        da = a - exact_mean(a)
        db = b - exact_mean(b)
        out[k] = MCEstimate.from_samples(da * db, dt)
    return out


def criterion_covariances(ens) -> CriterionResult:
    rows = []
    for t in COVARIANCE_TIMES:
        exact = covariances(MOMENT_PARAMS, t)
        for k, e in covariance_estimates(ens, t).items():
            rows += _cplx_rows({"t": t, "quantity": k}, e, getattr(exact, k))
    bad = [f"{r['quantity']}({r['part']}) t={r['t']} z={r['z']:.2f}" for r in rows if not r["ok"]]
    zmax = max(r["z"] for r in rows)
    return CriterionResult(2, "covariance suite", not bad, f"{len(rows)} components, max z = {zmax:.2f}", rows, bad)


# ---------------------------------------------------------------------------
# 3: regime asymptotics


def _slope(f, t: float, rel: float = 1e-2) -> float:
    return (f(t * (1 + rel)) - f(t * (1 - rel))) / (2 * rel * t)


def criterion_regimes(n_paths: int, workers=None) -> CriterionResult:
    p = REGIME_PARAMS
    a2, g2, w = abs(p.alpha) ** 2, p.gamma**2, p.omega
    t_early, t_mid, t_late = 0.1 / w, math.pi / w, 100 / g2
    rows = []

    def add(regime, observable, kind, value, target, rtol):
        err = abs(value - target) / abs(target)
        rows.append(
            {"regime": regime, "observable": observable, "kind": kind, "value": value, "target": target, "rel_err": err, "tol": rtol, "ok": err <= rtol}
        )

    en, ep = exact_excess(p, t_early)
    add("early", "N", "excess", en, a2 * (w * t_early) ** 2, 0.05)
    add("early", "pointer", "excess", ep, a2 * (w * t_early) ** 2 / 3, 0.05)
    add("early", "pointer/N", "ratio", ep / en, 1 / 3, 0.05)
    en, ep = exact_excess(p, t_mid)
    add("mid", "N", "excess", en, 4 * a2, 0.15)
    add("mid", "pointer", "excess", ep, 2 * a2, 0.15)
    sn = _slope(lambda t: exact_excess(p, t)[0], t_late)
    sp = _slope(lambda t: exact_excess(p, t)[1], t_late)
    add("late", "N", "slope", sn, a2 * g2, 0.10)
    add("late", "pointer", "slope", sp, a2 * g2 / 2, 0.10)
    add("late", "pointer/N", "slope_ratio", sp / sn, 0.5, 0.10)

    # Monte-Carlo consistency of the exact excesses the asymptotics were compared with.
    h = p.heating_prefactor
    mc_rows = []
    for regime, t, dt in (("early", t_early, t_early / 1000), ("mid", t_mid, t_mid / 1000), ("late", t_late, 0.1)):
        grid = TimeGrid(t, int(round(t / dt)))
        d = sample_ensemble(p, grid, [t], n_paths, SEED + 3, 0, workers).at(t)
        en, ep = exact_excess(p, t)
        mc_rows += _cplx_rows({"regime": regime, "observable": "N"}, MCEstimate.from_samples(h * np.abs(d["z"]) ** 2, grid.dt), en)
        mc_rows += _cplx_rows({"regime": regime, "observable": "pointer"}, MCEstimate.from_samples(h * d["y0"] / t, grid.dt), ep)
    for r in mc_rows:
        rows.append(
            {"regime": r["regime"], "observable": r["observable"], "kind": "mc_vs_exact", "value": r["estimate"], "target": r["target"], "rel_err": r["z"], "tol": 3.0, "ok": r["ok"]}
        )
    bad = [f"{r['regime']} {r['observable']} {r['kind']} err={r['rel_err']:.3g}" for r in rows if not r["ok"]]
    worst = max(r["rel_err"] / r["tol"] for r in rows)
    return CriterionResult(3, "regime asymptotics", not bad, f"{len(rows)} checks, worst err/tol = {worst:.2f}", rows, bad)


# ---------------------------------------------------------------------------
# 4: bounds and variance growth


def criterion_bounds(n_paths: int, workers=None, draws: int = 1000) -> CriterionResult:
    rng = np.random.Generator(np.random.SFC64(SEED + 4))
    rows = []
    n_bad = 0
    for i in range(draws):
        omega = 10 ** rng.uniform(-2, 2)
        gamma = math.sqrt(omega * 10 ** rng.uniform(-4, 1)) if i % 10 else 0.0
        t = 10 ** rng.uniform(-3, 3) / omega
        p = ModelParams(omega, gamma, 0.1)
        for b in moment_bounds(p, t):
            n_bad += not b.holds()
        z = complex(-(10 ** rng.uniform(-4, 3)) * rng.uniform(0, 1), 10 ** rng.uniform(-4, 3) * rng.choice([-1, 1]))
        for b in remainder_bounds(z):
            n_bad += not b.holds()
    rows.append({"check": "bounds", "draws": draws, "value": float(n_bad), "target": 0.0, "ok": n_bad == 0})

    # Variance growth exponent of |Z_t|^2 on [10, 100].
    ts = np.geomspace(10.0, 100.0, 6)
    p = MOMENT_PARAMS
    grid = TimeGrid.from_dt(100.0, 0.01)
    ts = np.round(ts / grid.dt) * grid.dt
    ens = sample_ensemble(p, grid, ts, n_paths, SEED + 5, 0, workers)
    var = np.array([_variance_estimate(np.abs(ens.at(t)["z"]) ** 2, grid.dt).mean for t in ts])
    slope_mc = float(np.polyfit(np.log(ts), np.log(var), 1)[0])
    tab = fluctuation_table(p, 100.0)
    slope_exact = float(np.polyfit(np.log(ts), np.log([tab.var_zz(t) for t in ts]), 1)[0])
    rows.append({"check": "growth_mc", "draws": n_paths, "value": slope_mc, "target": 2.1, "ok": slope_mc <= 2.1})
    rows.append({"check": "growth_exact", "draws": 0, "value": slope_exact, "target": 2.1, "ok": slope_exact <= 2.1})
    bad = [f"{r['check']} value={r['value']:.4g}" for r in rows if not r["ok"]]
    return CriterionResult(
        4,
        "bound suite",
        not bad,
        f"{n_bad} violations in {draws} draws, growth exponent {slope_mc:.3f} (exact {slope_exact:.3f})",
        rows,
        bad,
    )


# ---------------------------------------------------------------------------
# 5: Fock space


def criterion_fock() -> CriterionResult:
    space = FockSpace(64)
    p = FOCK_PARAMS
    rows = []
    T = 200 * 2 * math.pi / p.omega
    for n in (0, 1, 3):
        ta = time_averaged_N(space, p, T, n)
        for what, v, target in (("mean", ta.mean, ta.predicted_mean), ("variance", ta.variance, ta.predicted_variance)):
            err = abs(v - target) / target
            rows.append({"check": f"time_average_{what}", "n": n, "value": v, "target": target, "error": err, "tol": 0.02, "ok": err <= 0.02})
    path = sample_path(TimeGrid.from_dt(20.0, 1e-3), SEED + 6, 0)
    f = compute_functionals(path, p)
    prop = propagate_path(space, f, p, np.arange(0, 21, 1.0))
    herr = float(prop.heisenberg_error().max())
    rows.append({"check": "heisenberg", "n": -1, "value": herr, "target": 0.0, "error": herr, "tol": 1e-6, "ok": herr <= 1e-6})
    rng = np.random.Generator(np.random.SFC64(SEED + 7))
    cerr = 0.0
    for _ in range(20):
        z1, z2 = (complex(*rng.uniform(-1, 1, 2)) for _ in range(2))
        k = min(space.reliable_block(z) for z in (z1, z2, z1 + z2))
        lhs = displacement(space, z1) @ displacement(space, z2)
        rhs = np.exp(1j * (z1 * z2.conjugate()).imag) * displacement(space, z1 + z2)
        cerr = max(cerr, block_error(lhs, rhs, k))
    rows.append({"check": "composition", "n": -1, "value": cerr, "target": 0.0, "error": cerr, "tol": 1e-8, "ok": cerr <= 1e-8})
    bad = [f"{r['check']} n={r['n']} err={r['error']:.3g}" for r in rows if not r["ok"]]
    worst = max(r["error"] / r["tol"] for r in rows)
    return CriterionResult(5, "Fock-space suite", not bad, f"worst err/tol = {worst:.3g}", rows, bad)


# ---------------------------------------------------------------------------
# 6: estimator error


def criterion_estimator(n_points: int = 160) -> CriterionResult:
    p = MOMENT_PARAMS
    a2, g2 = abs(p.alpha) ** 2, p.gamma**2
    t_grid = np.geomspace(0.1 / g2, 10 / (a2 * g2), n_points)
    rows, bad = [], []
    for n in range(4):
        cur = error_curve(p, n, t_grid)
        ratio = float(np.max(cur.mse / cur.bound))
        rows.append(
            {
                "n": n,
                "max_mse_over_bound": ratio,
                "argmin": cur.argmin,
                "window_lo": cur.window[0],
                "window_hi": cur.window[1],
                "min_mse": float(cur.mse.min()),
                "ok": bool(ratio <= 1 and cur.minimum_in_window),
            }
        )
        if not rows[-1]["ok"]:
            bad.append(f"n={n} ratio={ratio:.3g} argmin={cur.argmin:.4g}")
    worst = max(r["max_mse_over_bound"] for r in rows)
    return CriterionResult(6, "estimator error", not bad, f"max mse/bound = {worst:.3f}, minima in window", rows, bad)


# ---------------------------------------------------------------------------
# 7: scaling limit


def criterion_limit(n_paths: int, workers=None) -> CriterionResult:
    p = LIMIT_PARAMS
    t, eps = 1.0, 1e-3
    k2 = abs(p.kappa) ** 2
    ens = scaled_z_samples(p, t, eps, n_paths, SEED + 8, workers=workers)
    g = gaussianity_check(ens)
    rows = []
    for part, v, pv, praw in zip(("re", "im"), g.component_var, g.ks_p, g.ks_p_raw):
        z = abs(v.mean - g.target_var) / v.se
        rows.append({"check": "gauss_var", "part": part, "lam": 0.0, "estimate": v.mean, "se": v.se, "target": g.target_var, "stat": z, "ok": z <= 3})
        rows.append({"check": "gauss_ks", "part": part, "lam": 0.0, "estimate": pv, "se": 0.0, "target": 0.01, "stat": praw, "ok": pv >= 0.01})
    lambdas = [x / (k2 * t) for x in (0.5, 1.0, 2.0)]
    for r in limit_cf_check(ens, lambdas):
        z = r.empirical.z_score(r.target)
        required = r.observable == "N"
        rows.append(
            {"check": f"laplace_{r.observable}", "part": "", "lam": r.lam, "estimate": r.empirical.mean, "se": r.empirical.se, "target": r.target, "stat": z, "ok": z <= 3 or not required}
        )
    for r in real_transform_check(t, [0.5, 1.0, 2.0], n_paths, SEED + 9):
        z = r.empirical.z_score(r.target)
        required = r.observable == "real_endpoint"
        rows.append(
            {"check": r.observable, "part": "", "lam": r.lam, "estimate": r.empirical.mean, "se": r.empirical.se, "target": r.target, "stat": z, "ok": z <= 3 or not required}
        )
    bad = [f"{r['check']} {r['part']} lam={r['lam']:.4g} stat={r['stat']:.3g}" for r in rows if not r["ok"]]
    return CriterionResult(7, "scaling limit", not bad, f"KS p = {min(g.ks_p):.3f}, {len(rows)} checks", rows, bad)


# ---------------------------------------------------------------------------
# suite


def run_criteria(quick: bool = False, workers=None, only=None) -> list[CriterionResult]:
    """Criteria 1-7 (those producing data)."""
    cfg = QUICK if quick else FULL
    want = set(range(1, 8)) if only is None else set(only)
    results = []

    def timed(fn, *args):
        t0 = time.perf_counter()
        r = fn(*args)
        r.runtime = time.perf_counter() - t0
        return r

    if want & {1, 2}:
        t0 = time.perf_counter()
        ens = moment_ensemble(cfg["moment_paths"], workers)
        t_ens = time.perf_counter() - t0
        if 1 in want:
            r = timed(criterion_moments, ens)
            r.runtime += t_ens
            results.append(r)
        if 2 in want:
            results.append(timed(criterion_covariances, ens))
        del ens
    if 3 in want:
        results.append(timed(criterion_regimes, cfg["regime_paths"], workers))
    if 4 in want:
        results.append(timed(criterion_bounds, cfg["growth_paths"], workers))
    if 5 in want:
        results.append(timed(criterion_fock))
    if 6 in want:
        results.append(timed(criterion_estimator))
    if 7 in want:
        results.append(timed(criterion_limit, cfg["limit_paths"], workers))
    if not quick:
        for r in results:
            limit = RUNTIME_LIMITS.get(r.number)
            if limit is not None and r.runtime > limit:
                r.passed = False
                r.failures.append(f"runtime {r.runtime:.1f} s exceeds {limit} s")
    return results


def write_results(results, out: Path) -> dict:
    """Write one CSV per criterion; return ``{file name: bytes}``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for r in results:
        name = f"criterion_{r.number}.csv"
        data = csv_bytes(r.rows)
        (out / name).write_bytes(data)
        files[name] = data
    return files


def criterion_determinism(reference: dict, worker_counts=(1, 2)) -> CriterionResult:
    """Rerun the quick suite with each worker count and compare the CSV bytes with each
    other and with ``reference`` (the CSVs of an earlier quick run, may be empty)."""
    t0 = time.perf_counter()
    runs = [dict(reference)] if reference else []
    runs += [{f"criterion_{r.number}.csv": csv_bytes(r.rows) for r in run_criteria(True, w)} for w in worker_counts]
    rows, bad = [], []
    for name in sorted(runs[0]):
        same = all(run.get(name) == runs[0][name] for run in runs[1:])
        rows.append({"file": name, "bytes": len(runs[0][name]), "identical": same})
        if not same:
            bad.append(name)
    summary = f"{len(rows)} CSV files identical over {len(runs)} quick runs"
    if bad:
        summary = f"differences in {', '.join(bad)}"
    return CriterionResult(8, "determinism", not bad, summary, rows, bad, time.perf_counter() - t0)


def run_suite(out=None, quick: bool = False, workers=None, only=None, log=print) -> list[CriterionResult]:
    """Requested criteria; criterion 8 reruns the quick suite with a different worker count."""
    want = set(range(1, 9)) if only is None else set(only)
    results = run_criteria(quick, workers, want - {8})
    for r in results:
        log(r.line())
    if out is not None:
        write_results(results, out)
    if 8 in want:
        if quick and want >= set(range(1, 8)):
            # The run above is the reference; one more with a different worker count.
            ref = {f"criterion_{r.number}.csv": csv_bytes(r.rows) for r in results}
            counts = (2 if worker_count(workers) == 1 else 1,)
        else:
            ref, counts = {}, (1, 2)
        r = criterion_determinism(ref, counts)
        log(r.line())
        results.append(r)
        if out is not None:
            write_results([r], out)
    return results
