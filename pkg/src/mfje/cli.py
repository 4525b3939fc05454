"""Experiment runner: config ingestion, seeding, parallel execution, output.

Configs are TOML with sections [experiment], [model], [numerics], [mc] and
[output].  Every experiment writes CSV/JSON artifacts plus a manifest into
the output directory; results are a pure function of (config, seed) and do
not depend on the worker count.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, presets
from .errors import ConfigError, MfjeError
from .insurance_life import (PaymentStream, meanfield_reserves,
                             n_individual_reserves, present_value,
                             reserve_lln_clt)
from .insurance_nonlife import expected_claim_amount_n, meanfield_expected_claim
from .kernel import MeasureSnapshot, audit_regularity
from .meanfield import picard_solve, scalar_fixed_point_gamma
from .simulate import ensemble_to_rows, simulate_coupled, simulate_interacting
from .stats import rate_fit

EXPERIMENTS = ("simulate", "meanfield", "chaos-convergence", "sird-reserves",
               "claims-gamma", "lln", "clt", "audit")


# ---------------------------------------------------------------------------
# output helpers


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def write_csv(out_dir: str, name: str, header, rows) -> str:
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")
    return name


def write_json(out_dir: str, name: str, payload) -> str:
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    return name


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


# ---------------------------------------------------------------------------
# config plumbing


def load_config(config_path: str) -> dict:
    try:
        with open(config_path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {config_path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {config_path}: {exc}") from exc


def resolve_seed(config: dict, flag_seed) -> int:
    if flag_seed is not None:
        return int(flag_seed)
    env = os.environ.get("MFJE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"MFJE_SEED must be an integer, got {env!r}") \
                from exc
    return int(config.get("mc", {}).get("seed", 0))


def par_map(fn, items, workers: int):
    """Order-preserving map; results never depend on the worker count."""
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _grid(config: dict, horizon):
    points = int(config.get("numerics", {}).get("grid_points", 201))
    if points < 2:
        raise ConfigError("numerics.grid_points must be >= 2")
    return np.linspace(horizon[0], horizon[1], points)


def _initials(preset: str, model: dict, n: int):
    """Initial states (or sampler) for an interacting ensemble."""
    if preset == "sird":
        return presets.sird_spec(model).initial_sampler()
    if preset == "gamma-claims":
        return np.zeros((n, 2))
    if preset == "constant-rate":
        pmf = np.asarray(model.get("initial_pmf", [1.0, 0.0]), dtype=float)
        space = presets.constant_rate_kernel(model).space

        def sample(rng):
            return space.points[rng.choice(pmf.size, p=pmf)]
        return sample
    raise ConfigError(f"unknown preset {preset!r}")


def _horizon(preset: str, model: dict):
    return tuple(model.get("horizon", [0.0, 1.0]))


# ---------------------------------------------------------------------------
# parallel workers (top level so they pickle; kernels are rebuilt per task)


def _simulate_rep(task):
    preset, model, n, rep, seed = task
    kernel = presets.build_kernel(preset, model)
    initials = _initials(preset, model, n)
    ens = simulate_interacting(kernel, initials, _horizon(preset, model),
                               [seed, rep], n=n)
    return list(ensemble_to_rows(ens, rep))


def _chaos_rep(task):
    model, flow, n, rep, seed = task
    spec = presets.sird_spec(model)
    kernel = spec.kernel()
    sampler = spec.initial_sampler()

    def joint(rng):
        x0 = sampler(rng)
        return x0, x0

    pairs = simulate_coupled(kernel, flow, n, joint, spec.horizon,
                             [seed, n, rep])
    return float(np.mean([p.sup_distance for p in pairs]))


# ---------------------------------------------------------------------------
# experiment runners


def _run_simulate(config, out_dir, seed, workers):
    preset = config.get("experiment", {}).get("preset", "sird")
    model = config.get("model", {})
    mc = config.get("mc", {})
    n = int(mc.get("n", 10))
    reps = int(mc.get("replications", 1))
    presets.build_kernel(preset, model)  # validate before spawning workers
    tasks = [(preset, model, n, r, seed) for r in range(reps)]
    results = par_map(_simulate_rep, tasks, workers)
    dim = len(results[0][0]) - 3
    state_cols = ["state"] if dim == 1 else [f"state_{k}" for k in range(dim)]
    rows = [row for chunk in results for row in chunk]
    files = [write_csv(out_dir, "paths.csv",
                       ["replication", "individual", "event_time"] + state_cols,
                       rows)]
    return files, {"replications": reps, "n": n}


def _run_meanfield(config, out_dir, seed, workers):
    preset = config.get("experiment", {}).get("preset", "sird")
    model = config.get("model", {})
    num = config.get("numerics", {})
    tol = float(num.get("tol", 1e-6))
    max_iter = int(num.get("max_iter", 50))
    files = []
    if preset == "gamma-claims":
        spec = presets.gamma_claims_spec(model)
        grid = _grid(config, spec.horizon)
        n_particles = int(config.get("mc", {}).get("n_particles", 10 ** 5))
        fp = scalar_fixed_point_gamma(spec, grid, tol, max_iter,
                                      n_particles, [seed, 0])
        files.append(write_csv(out_dir, "curves.csv", ["t", "m_bar", "theta"],
                               zip(grid, fp.m_bar, fp.theta)))
        log = fp.iteration_log
    else:
        if preset == "sird":
            spec = presets.sird_spec(model)
            kernel = spec.kernel()
            initial = MeasureSnapshot.from_pmf(spec.space, spec.initial_pmf,
                                               spec.horizon[0])
            horizon = spec.horizon
        else:
            kernel = presets.build_kernel(preset, model)
            horizon = _horizon(preset, model)
            pmf = np.asarray(model.get("initial_pmf", [1.0, 0.0]), dtype=float)
            initial = MeasureSnapshot.from_pmf(kernel.space, pmf, horizon[0])
        grid = _grid(config, horizon)
        flow, log = picard_solve(kernel, initial, grid, tol, max_iter)
        labels = kernel.space.labels
        rows = [(t, labels[i], snap.probs[i])
                for t, snap in zip(grid, flow.snapshots)
                for i in range(len(labels))]
        files.append(write_csv(out_dir, "flow.csv",
                               ["t", "state_label", "probability"], rows))
    files.append(write_csv(
        out_dir, "iterations.csv",
        ["iteration", "sup_W1_change", "wall_time_ms"],
        [(r.iteration, r.sup_w1_change, r.wall_time_ms) for r in log]))
    return files, {"iterations": len(log)}


def _run_chaos(config, out_dir, seed, workers):
    model = config.get("model", {})
    mc = config.get("mc", {})
    num = config.get("numerics", {})
    n_list = [int(v) for v in mc.get("n_list", [10, 100, 1000])]
    reps = int(mc.get("replications", 100))
    spec = presets.sird_spec(model)
    grid = _grid(config, spec.horizon)
    initial = MeasureSnapshot.from_pmf(spec.space, spec.initial_pmf,
                                       spec.horizon[0])
    flow, _ = picard_solve(spec.kernel(), initial, grid,
                           float(num.get("tol", 1e-6)),
                           int(num.get("max_iter", 50)))
    tasks = [(model, flow, n, r, seed) for n in n_list for r in range(reps)]
    gaps = np.array(par_map(_chaos_rep, tasks, workers)).reshape(
        len(n_list), reps)
    rows = []
    for n, g in zip(n_list, gaps):
        mean = g.mean()
        se = g.std(ddof=1) / np.sqrt(reps) if reps > 1 else 0.0
        rows.append((n, mean, mean - 1.96 * se, mean + 1.96 * se, reps))
    files = [write_csv(out_dir, "chaos.csv",
                       ["n", "mean_gap", "ci_low", "ci_high", "replications"],
                       rows)]
    summary = {"n_list": n_list, "replications": reps}
    means = [row[1] for row in rows]
    if len(n_list) >= 3 and all(m > 0 for m in means):
        slope, intercept, r2 = rate_fit(n_list, means)
        summary["loglog_slope"] = slope
        summary["loglog_r2"] = r2
    files.append(write_json(out_dir, "summary.json", summary))
    return files, summary


def _run_sird_reserves(config, out_dir, seed, workers):
    model = config.get("model", {})
    mc = config.get("mc", {})
    spec = presets.sird_spec(model)
    payments = presets.sird_payments(spec, model)
    grid = _grid(config, spec.horizon)
    report = meanfield_reserves(spec, payments, grid)
    rows = [("cohort", report.cohort)]
    rows += [(label, v) for label, v in report.statewise.items()]
    files = [write_csv(out_dir, "reserves.csv", ["quantity", "value"], rows),
             write_json(out_dir, "reserves.json", asdict(report))]
    summary = {"cohort": report.cohort}
    n_list = mc.get("n_list")
    if n_list:
        reps = int(mc.get("replications", 100))
        estimator = mc.get("estimator", "cohort")
        conv_rows = []
        for n in n_list:
            mc_report = n_individual_reserves(spec, payments, int(n), reps,
                                              [seed, int(n)], estimator)
            conv_rows.append((int(n), mc_report.cohort, mc_report.se,
                              abs(mc_report.cohort - report.cohort)))
        files.append(write_csv(out_dir, "convergence.csv",
                               ["n", "estimate", "se", "abs_gap"], conv_rows))
        summary["convergence"] = [list(r) for r in conv_rows]
    return files, summary


def _run_claims(config, out_dir, seed, workers):
    model = config.get("model", {})
    mc = config.get("mc", {})
    num = config.get("numerics", {})
    spec = presets.gamma_claims_spec(model)
    n = int(mc.get("n", 50))
    reps = int(mc.get("replications", 2000))
    n_particles = int(mc.get("n_particles", 10 ** 5))
    grid = _grid(config, spec.horizon)
    est, se = expected_claim_amount_n(spec, n, reps, rng=[seed, 1])
    mf = meanfield_expected_claim(spec, grid, float(num.get("tol", 1e-4)),
                                  n_particles, [seed, 2])
    rows = [("n_system", est, se), ("mean_field", mf.value, mf.se)]
    if mf.by_covariate:
        for atom, (v, s) in sorted(mf.by_covariate.items()):
            rows.append((f"mean_field_u={atom}", v, s))
    files = [write_csv(out_dir, "claims.csv", ["quantity", "value", "se"],
                       rows)]
    return files, {"n_system": est, "mean_field": mf.value}


def _lln_clt_report(config, seed):
    model = config.get("model", {})
    mc = config.get("mc", {})
    spec = presets.sird_spec(model)
    payments = presets.sird_payments(spec, model)
    n_list = [int(v) for v in mc.get("n_list", [10, 100, 1000])]
    reps = int(mc.get("replications", 1000))
    return reserve_lln_clt(spec, payments, n_list, reps, [seed, 3])


def _run_lln(config, out_dir, seed, workers):
    report = _lln_clt_report(config, seed)
    rows = [(r.n, r.l2_error, r.ci_low, r.ci_high, r.samples)
            for r in report.lln_rows]
    files = [write_csv(out_dir, "lln.csv",
                       ["n", "l2_error", "ci_low", "ci_high", "samples"],
                       rows)]
    summary = {"target": report.target, "loglog_slope": report.lln_slope,
               "n_cov": {str(k): v for k, v in report.n_cov.items()}}
    files.append(write_json(out_dir, "summary.json", summary))
    return files, summary


def _run_clt(config, out_dir, seed, workers):
    report = _lln_clt_report(config, seed)
    files = []
    if report.clt_samples is not None:
        files.append(write_csv(out_dir, "clt.csv", ["standardized_sum"],
                               [(v,) for v in report.clt_samples]))
    summary = {"target": report.target, "sigma_hat": report.sigma_hat,
               "clt_n": report.clt_n,
               "statewise_ratio": report.statewise_ratio}
    if report.clt is not None:
        summary["clt"] = asdict(report.clt)
        summary["clt"]["passed"] = report.clt.passed
    files.append(write_json(out_dir, "summary.json", summary))
    return files, summary


def _run_audit(config, out_dir, seed, workers):
    preset = config.get("experiment", {}).get("preset", "sird")
    model = config.get("model", {})
    kernel = presets.build_kernel(preset, model)
    horizon = _horizon(preset, model)
    t0 = horizon[0]
    if preset == "sird":
        spec = presets.sird_spec(model)
        fractions = [0.0, 0.25, 0.5, 1.0]
        probes = [(t0, spec.space.points[i],
                   MeasureSnapshot.from_pmf(
                       spec.space, [1 - f, f, 0.0, 0.0], t0))
                  for f in fractions for i in range(3)]
        pairs = [(i, i + 3) for i in range(len(probes) - 3)]
    elif preset == "gamma-claims":
        spec = presets.gamma_claims_spec(model)
        states = [np.array([0.0, 0.0]), np.array([2.0, 1.0]),
                  np.array([10.0, 4.0])]
        clouds = [MeasureSnapshot(t0, points=np.array([[0.0, 0.0]])),
                  MeasureSnapshot(t0, points=np.array([[4.0, 2.0]]))]
        probes = [(t0, x, c) for c in clouds for x in states]
        pairs = [(i, i + len(states)) for i in range(len(states))]
    else:
        pmf = MeasureSnapshot.from_pmf(kernel.space, [1.0, 0.0], t0)
        probes = [(t0, kernel.space.points[0], pmf)]
        pairs = []
    report = audit_regularity(kernel, probes, pairs, seed=seed)
    payload = {
        "ok": report.ok,
        "max_rate": report.max_rate,
        "declared_rate_bound": kernel.c_lambda,
        "max_mark_moment": report.max_mark_moment,
        "declared_moment_bound": kernel.c_r,
        "max_lipschitz_ratio": report.max_lipschitz_ratio,
        "declared_lipschitz": kernel.c_mu,
        "rate_violations": report.rate_violations,
        "moment_violations": report.moment_violations,
        "off_space_jumps": report.off_space_jumps,
        "lipschitz_violations": report.lipschitz_violations,
    }
    files = [write_json(out_dir, "audit.json", payload)]
    return files, {"ok": report.ok}


RUNNERS = {
    "simulate": _run_simulate,
    "meanfield": _run_meanfield,
    "chaos-convergence": _run_chaos,
    "sird-reserves": _run_sird_reserves,
    "claims-gamma": _run_claims,
    "lln": _run_lln,
    "clt": _run_clt,
    "audit": _run_audit,
}


# ---------------------------------------------------------------------------
# entry points


def run(config_path: str, output_dir: str, seed_override=None,
        workers: int = None, quiet: bool = False,
        experiment: str = None) -> int:
    config = load_config(config_path)
    name = experiment or config.get("experiment", {}).get("name")
    if name not in RUNNERS:
        raise ConfigError(
            f"experiment.name must be one of {', '.join(EXPERIMENTS)}, "
            f"got {name!r}")
    seed = resolve_seed(config, seed_override)
    if workers is None:
        workers = os.cpu_count() or 1
    os.makedirs(output_dir, exist_ok=True)
    start = time.perf_counter()
    files, summary = RUNNERS[name](config, output_dir, seed, workers)
    wall = time.perf_counter() - start
    with open(config_path, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()
    manifest = {
        "experiment": name,
        "config_path": os.path.abspath(config_path),
        "config_sha256": digest,
        "seed": seed,
        "workers": workers,
        "outputs": files,
        "wall_time_s": wall,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "mfje": __version__,
        },
    }
    write_json(output_dir, "manifest.json", manifest)
    if not quiet:
        print(f"{name}: wrote {', '.join(files)} to {output_dir} "
              f"({wall:.2f}s)")
        for key, value in summary.items():
            print(f"  {key}: {value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfje",
        description="Mean-field jump-process experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    alias = {"converge": "chaos-convergence", "reserve-sird": "sird-reserves"}
    for cmd in ("simulate", "meanfield", "converge", "reserve-sird",
                "claims-gamma", "lln", "clt", "audit"):
        p = sub.add_parser(cmd)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--quiet", action="store_true")
        p.set_defaults(experiment=alias.get(cmd, cmd))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args.config, args.out, args.seed, args.workers,
                   args.quiet, args.experiment)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MfjeError, ValueError, OSError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
