"""Command-line front end: ``qmeter <subcommand> [--config PATH] [--out DIR] ...``.

Exit status: 0 when every enabled assertion passes, 1 when one fails (the list is
printed and written to ``failures.json``), 2 for an invalid configuration.  Assertions
are enabled by ``--check``; the ``acceptance`` subcommand always asserts.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qmeter import acceptance
from qmeter.analytic import covariances, fluctuation_table, moment_bounds, moments, variance_bounds
from qmeter.fock import FockSpace, propagate_path, time_averaged_N
from qmeter.functionals import compute_functionals, sample_ensemble
from qmeter.limits import DEFAULT_EPSILONS, limit_cf_check, scaled_z_samples
from qmeter.model import ModelParams, QMeterError, TimeGrid
from qmeter.montecarlo import RESOLVE_SIGMAS, MCEstimate, error_curve, exact_observables, observables_from_ensemble, window_demo
from qmeter.paths import sample_path

CONFIG_FIELDS = ("omega", "gamma", "alpha", "t_end", "n_steps", "seed", "n_paths")


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    t_end: float
    n_steps: int
    seed: int
    n_paths: int

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.t_end, self.n_steps)

    def as_dict(self) -> dict:
        a = self.params.alpha
        return {
            "omega": self.params.omega,
            "gamma": self.params.gamma,
            "alpha": [a.real, a.imag],
            "t_end": self.t_end,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "n_paths": self.n_paths,
        }


def _number(raw: dict, key: str, kind=float, positive: bool = False, nonneg: bool = False):
    if key not in raw:
        raise ConfigError(key, "missing")
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    if kind is int:
        if int(v) != v:
            raise ConfigError(key, f"expected an integer, got {v!r}")
        v = int(v)
    v = kind(v)
    if not math.isfinite(v):
        raise ConfigError(key, "must be finite")
    if positive and not v > 0:
        raise ConfigError(key, f"must be positive, got {v}")
    if nonneg and v < 0:
        raise ConfigError(key, f"must be non-negative, got {v}")
    return v


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a JSON config; raises :class:`ConfigError` naming the offending field."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = sorted(set(raw) - set(CONFIG_FIELDS))
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    omega = _number(raw, "omega", positive=True)
    gamma = _number(raw, "gamma", nonneg=True)
    if "alpha" not in raw:
        raise ConfigError("alpha", "missing")
    a = raw["alpha"]
    if isinstance(a, (int, float)) and not isinstance(a, bool):
        alpha = complex(a)
    elif isinstance(a, list) and len(a) == 2 and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in a):
        alpha = complex(a[0], a[1])
    else:
        raise ConfigError("alpha", f"expected [re, im], got {a!r}")
    if not (math.isfinite(alpha.real) and math.isfinite(alpha.imag)):
        raise ConfigError("alpha", "must be finite")
    return ExperimentConfig(
        ModelParams(omega, gamma, alpha),
        _number(raw, "t_end", positive=True),
        _number(raw, "n_steps", int, positive=True),
        _number(raw, "seed", int, nonneg=True),
        _number(raw, "n_paths", int, positive=True),
    )


def load_config(path, seed=None, n_paths=None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("--config", f"file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    if isinstance(raw, dict):
        if seed is not None:
            raw["seed"] = seed
        if n_paths is not None:
            raw["n_paths"] = n_paths
    return parse_config(raw)


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    return acceptance._fmt(v)


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fp:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _times(cfg: ExperimentConfig, n_points: int = 50) -> np.ndarray:
    """Up to ``n_points`` grid nodes, evenly spaced in index, excluding 0."""
    k = np.unique(np.linspace(0, cfg.n_steps, min(n_points, cfg.n_steps) + 1).round().astype(int))[1:]
    return cfg.grid.times[k]


def _floats(text: str, name: str) -> list:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(name, f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(name, "empty list")
    return vals


# ---------------------------------------------------------------------------
# subcommands; each returns a list of failure messages


def cmd_paths(cfg: ExperimentConfig, args, out: Path) -> list:
    n = min(cfg.n_paths, args.max_files)
    for i in range(n):
        f = compute_functionals(sample_path(cfg.grid, cfg.seed, i), cfg.params)
        with open(out / f"path_{i:05d}.csv", "w", newline="") as fp:
            f.to_csv(fp)
    fails = []
    if args.check:
        for i in range(n):
            f = compute_functionals(sample_path(cfg.grid, cfg.seed, i), cfg.params)
            if np.any(np.abs(f.z) > f.times * (1 + 1e-12) + 1e-15):
                fails.append(f"path {i}: |Z_t| > t")
            if np.any(np.diff(f.y0) < 0):
                fails.append(f"path {i}: Y0 decreasing")
    return fails


def cmd_expect(cfg: ExperimentConfig, args, out: Path) -> list:
    """Closed-form moments with Monte-Carlo estimates and standard errors side by side."""
    p = cfg.params
    h = p.heating_prefactor
    ts = _times(cfg)
    ens = sample_ensemble(p, cfg.grid, ts, cfg.n_paths, cfg.seed) if cfg.n_paths >= 2 else None
    names = ("exp_eiphi", "mean_Z", "mean_ZstarZ", "mean_Y1", "mean_Y0", "mean_Y1starY1", "heating_N", "heating_pointer")
    complex_names = {"exp_eiphi", "mean_Z", "mean_Y1"}
    header = ["t"]
    for nm in names:
        parts = ("re", "im") if nm in complex_names else ("",)
        for part in parts:
            col = f"{part}_{nm}" if part else nm
            header += [f"{col}", f"{col}_mc", f"{col}_se"]
    rows, fails = [], []
    for t in ts:
        m = moments(p, t)
        exact = {
            "exp_eiphi": m.exp_eiphi, "mean_Z": m.mean_Z, "mean_ZstarZ": m.mean_ZstarZ, "mean_Y1": m.mean_Y1,
            "mean_Y0": m.mean_Y0, "mean_Y1starY1": m.mean_Y1starY1,
            "heating_N": h * m.mean_ZstarZ, "heating_pointer": h * m.mean_Y0 / t,
        }
        if ens is not None:
            d = ens.at(t)
            samples = {
                "exp_eiphi": d["e"], "mean_Z": d["z"], "mean_ZstarZ": np.abs(d["z"]) ** 2, "mean_Y1": d["y1"],
                "mean_Y0": d["y0"], "mean_Y1starY1": np.abs(d["y1"]) ** 2,
                "heating_N": h * np.abs(d["z"]) ** 2, "heating_pointer": h * d["y0"] / t,
            }
        row = [t]
        for nm in names:
            est = MCEstimate.from_samples(samples[nm], cfg.grid.dt) if ens is not None else None
            parts = (("re", "real"), ("im", "imag")) if nm in complex_names else (("", "real"),)
            for _, attr in parts:
                ex = getattr(complex(exact[nm]), attr)
                mc = getattr(complex(est.mean), attr) if est else math.nan
                se = getattr(complex(est.se), attr) if est else math.nan
                row += [ex, mc, se]
                if args.check and est and se > 0 and abs(mc - ex) > 4 * se:
                    fails.append(f"t={t}: {nm} MC {mc:.6g} vs {ex:.6g} (> 4 SE)")
        rows.append(row)
        if args.check:
            fails += [f"t={t}: bound {b.name} violated" for b in moment_bounds(p, t) if not b.holds()]
    write_csv(out / "expect.csv", header, rows)
    return fails


def cmd_covar(cfg: ExperimentConfig, args, out: Path) -> list:
    p = cfg.params
    ts = _times(cfg)
    table = fluctuation_table(p, cfg.t_end)
    header = ["t", "re_zz_e", "im_zz_e", "re_ze_z", "im_ze_z", "re_ez_z", "im_ez_z", "var_zz", "var_y0", "bounds_hold"]
    rows, fails = [], []
    for t in ts:
        cv = covariances(p, t)
        vb = variance_bounds(p, t / 2, t, table=table)
        rows.append([
            t, cv.zz_e.real, cv.zz_e.imag, cv.ze_z.real, cv.ze_z.imag, cv.ez_z.real, cv.ez_z.imag,
            table.var_zz(t), table.var_y0(t), vb.holds,
        ])
        if args.check and not vb.holds:
            fails.append(f"t={t}: variance bound violated")
    write_csv(out / "covar.csv", header, rows)
    return fails


def cmd_measure(cfg: ExperimentConfig, args, out: Path) -> list:
    """Moments of ``N_t`` and the pointer in level ``n`` on a time grid, with the estimator error.

    Moments are Monte-Carlo estimates when the config asks for at least 100 paths
    (standard errors in the ``se`` columns) and closed-form values otherwise (``se = 0``).
    ``resolvable`` compares the unit level spacing with 4 times the larger pointer spread
    of levels ``n`` and ``n + 1``.
    """
    p = cfg.params
    t_grid = _floats(args.t_grid, "--t-grid") if args.t_grid else list(_times(cfg, 20))
    if any(t <= 0 for t in t_grid):
        raise ConfigError("--t-grid", "times must be positive")
    table = fluctuation_table(p, max(t_grid))
    curve = error_curve(p, args.n, t_grid)
    header = [
        "t", "mean_N", "se_mean_N", "var_N", "mean_pointer", "se_mean_pointer", "var_pointer", "resolvable", "mse", "bound",
    ]
    rows, fails = [], []
    for t, mse, bound in zip(curve.t, curve.mse, curve.bound):
        ex = exact_observables(p, t, args.n, table)
        ex_next = exact_observables(p, t, args.n + 1, table)
        resolvable = 1.0 >= RESOLVE_SIGMAS * math.sqrt(max(ex.var_pointer, ex_next.var_pointer))
        if cfg.n_paths >= 100:
            grid = TimeGrid(t, max(1, int(round(t / cfg.grid.dt))))
            o = observables_from_ensemble(sample_ensemble(p, grid, [t], cfg.n_paths, cfg.seed), t, args.n)
            vals = [o.mean_N.mean, o.mean_N.se, o.var_N.mean, o.mean_pointer.mean, o.mean_pointer.se, o.var_pointer.mean]
        else:
            vals = [ex.mean_N, 0.0, ex.var_N, ex.mean_pointer, 0.0, ex.var_pointer]
        rows.append([t, *(float(v) for v in vals), resolvable, mse, bound])
        if args.check and mse > bound:
            fails.append(f"t={t}: mse {mse:.4g} exceeds bound {bound:.4g}")
    write_csv(out / "measure.csv", header, rows)
    write_json(
        out / "measure.json",
        {"n": args.n, "argmin": curve.argmin, "window": list(curve.window), "minimum_in_window": curve.minimum_in_window},
    )
    return fails


def cmd_window(cfg: ExperimentConfig, args, out: Path) -> list:
    t = args.t if args.t is not None else cfg.t_end
    demo = window_demo(cfg.params, args.levels, t, args.n_sigma)
    write_csv(out / "window.csv", ["n", "mean_pointer", "sd_pointer"], demo.levels)
    write_json(
        out / "window.json",
        {"t": t, "n_sigma": args.n_sigma, "n_resolvable": demo.n_resolvable, "resolvable": demo.resolvable, "window_open": demo.window_open},
    )
    fails = []
    if args.check and demo.n_resolvable < args.levels:
        fails.append(f"only {demo.n_resolvable} of {args.levels} levels resolvable at t={t}")
    return fails


def cmd_fock_check(cfg: ExperimentConfig, args, out: Path) -> list:
    p = cfg.params
    space = FockSpace(args.dim)
    T = args.periods * 2 * math.pi / p.omega
    ta = time_averaged_N(space, p, T, args.n)
    prop = propagate_path(space, compute_functionals(sample_path(cfg.grid, cfg.seed, 0), p), p, _times(cfg, 20))
    unit = float(prop.unitarity_error().max())
    heis = float(prop.heisenberg_error().max())
    report = {
        "n": args.n,
        "T": T,
        "mean": ta.mean,
        "variance": ta.variance,
        "predicted_mean": ta.predicted_mean,
        "predicted_variance": ta.predicted_variance,
        "block_unitarity_error": unit,
        "heisenberg_error": heis,
    }
    write_json(out / "fock_check.json", report)
    fails = []
    if args.check:
        for k in ("mean", "variance"):
            target = report[f"predicted_{k}"]
            if abs(report[k] - target) > 0.02 * abs(target):
                fails.append(f"time-averaged {k} {report[k]:.6g} not within 2% of {target:.6g}")
        if unit > 1e-6:
            fails.append(f"unitarity error {unit:.3g} > 1e-6")
        if heis > 1e-6:
            fails.append(f"Heisenberg error {heis:.3g} > 1e-6")
    return fails


def cmd_limit(cfg: ExperimentConfig, args, out: Path) -> list:
    p = cfg.params
    eps_list = _floats(args.epsilon_list, "--epsilon-list") if args.epsilon_list else list(DEFAULT_EPSILONS)
    k2t = abs(p.kappa) ** 2 * cfg.t_end
    if args.lambda_grid:
        lambdas = _floats(args.lambda_grid, "--lambda-grid")
    else:
        lambdas = [x / k2t for x in (0.5, 1.0, 2.0)] if k2t > 0 else [0.5, 1.0, 2.0]
    if any(lam < 0 for lam in lambdas):
        raise ConfigError("--lambda-grid", "values must be non-negative")
    rows, fails = [], []
    for eps in eps_list:
        ens = scaled_z_samples(p, cfg.t_end, eps, cfg.n_paths, cfg.seed)
        for r in limit_cf_check(ens, lambdas):
            rows.append([eps, r.lam, r.observable, r.empirical.mean, r.target, r.empirical.se])
            if args.check and eps == min(eps_list) and r.observable == "N" and not r.ok:
                fails.append(f"eps={eps} lambda={r.lam:.4g}: {r.empirical.mean:.5g} vs {r.target:.5g}")
    write_csv(out / "limit.csv", ["epsilon", "lambda", "observable", "empirical", "target", "se"], rows)
    return fails


def cmd_acceptance(args, out: Path) -> list:
    only = None
    if args.only:
        try:
            only = sorted({int(x) for x in args.only.split(",")})
        except ValueError:
            raise ConfigError("--only", f"expected criterion numbers, got {args.only!r}") from None
        if not set(only) <= set(range(1, 9)):
            raise ConfigError("--only", "criteria are numbered 1..8")
    results = acceptance.run_suite(out, quick=args.quick, only=only)
    summary = [{"criterion": r.number, "name": r.name, "passed": r.passed, "summary": r.summary} for r in results]
    write_json(out / "summary.json", summary)
    return [f"criterion {r.number}: {f}" for r in results for f in r.failures]


COMMANDS = {
    "paths": cmd_paths,
    "expect": cmd_expect,
    "covar": cmd_covar,
    "measure": cmd_measure,
    "window": cmd_window,
    "fock-check": cmd_fock_check,
    "limit": cmd_limit,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="qmeter_out", help="output directory")
    common.add_argument("--check", action="store_true", help="enable assertions (exit 1 on failure)")
    cfg_opts = argparse.ArgumentParser(add_help=False)
    cfg_opts.add_argument("--config", required=True, help="JSON config file")
    cfg_opts.add_argument("--seed", type=int, help="override the config seed")
    cfg_opts.add_argument("--paths", type=int, help="override the config path count")

    parser = argparse.ArgumentParser(prog="qmeter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("paths", parents=[common, cfg_opts], help="per-path functionals as CSV")
    p.add_argument("--max-files", type=int, default=10)
    sub.add_parser("expect", parents=[common, cfg_opts], help="closed-form expectations (and MC E|Z|^2)")
    sub.add_parser("covar", parents=[common, cfg_opts], help="covariances and variance bounds")
    p = sub.add_parser("measure", parents=[common, cfg_opts], help="pointer moments and estimator error")
    p.add_argument("--n", type=int, default=0, help="initial level")
    p.add_argument("--t-grid", help="comma-separated times (default: config grid)")
    p = sub.add_parser("window", parents=[common, cfg_opts], help="level resolution at one time")
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--t", type=float, help="time (default t_end)")
    p.add_argument("--n-sigma", type=float, default=4.0)
    p = sub.add_parser("fock-check", parents=[common, cfg_opts], help="truncated Fock-space checks")
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--periods", type=float, default=200.0)
    p = sub.add_parser("limit", parents=[common, cfg_opts], help="scaling-limit Laplace transforms")
    p.add_argument("--epsilon-list", help="comma-separated epsilons (default 0.1,0.01,0.001)")
    p.add_argument("--lambda-grid", help="comma-separated lambdas (default (0.5,1,2)/(|kappa|^2 t))")
    p = sub.add_parser("acceptance", parents=[common], help="run the acceptance suite")
    p.add_argument("--quick", action="store_true", help="reduced path counts")
    p.add_argument("--only", help="comma-separated criterion numbers")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        if args.command == "acceptance":
            out.mkdir(parents=True, exist_ok=True)
            fails = cmd_acceptance(args, out)
        else:
            cfg = load_config(args.config, args.seed, args.paths)
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "config.json", cfg.as_dict())
            fails = COMMANDS[args.command](cfg, args, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (QMeterError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if fails:
        write_json(out / "failures.json", fails)
        print("FAILED:", file=sys.stderr)
        for f in fails:
            print(f"  {f}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
