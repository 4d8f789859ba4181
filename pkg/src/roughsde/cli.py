"""Command line entry point: ``roughsde <command> --config FILE --out DIR``.

Exit status is 0 on success, 2 on invalid input and 3 when a solver diverges
or a numerical factorisation fails.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .diagnostics import eigen_tail, kde_density, norris_inequality_check, run_ensemble
from .errors import InvalidArgument, NumericFailure, SolverDiverged
from .hormander import build_hierarchy
from .malliavin import malliavin_report, solve_flows
from .roughpath import scan_roughness
from .rsde import davie_residual_scan, solve_rsde
from .scenario import TASKS, Scenario, parse_scenario

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3
SEED_ENV = "ROUGHSDE_SEED"


def _dump(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _default_eps(sc: Scenario):
    T, h = sc.grid.horizon, sc.grid.h
    eps = [T / 2 ** k for k in range(1, 8) if T / 2 ** k >= 2 * h]
    if not eps:
        raise InvalidArgument("grid too coarse for a roughness scan (need N >= 4)")
    return sorted(eps)


def _simulate(sc, out, seed, jobs):
    vf, B, Z = sc.vector_fields(), sc.brownian(seed), sc.rough_path()
    sol = solve_rsde(vf, sc.x0, B, Z, sc.guard)
    sol.to_csv(out / "solution.csv")
    return ["solution.csv"]


def _malliavin(sc, out, seed, jobs):
    task = sc.task("malliavin")
    vf, B, Z = sc.vector_fields(), sc.brownian(seed), sc.rough_path()
    sol = solve_rsde(vf, sc.x0, B, Z, sc.guard)
    flows = solve_flows(vf, sol, B, Z)
    t = int(task.get("t_index", sc.grid.steps))
    count = int(task.get("theta_count", 32))
    if count < 1:
        raise InvalidArgument("tasks.malliavin.theta_count must be >= 1")
    thetas = np.unique(np.linspace(0, t, min(count, t + 1), endpoint=False).astype(int)) if t else [0]
    rep = malliavin_report(flows, vf, sol, t, thetas, task.get("inverse", "equation"),
                           {"B_seed": seed, "Z_seed": sc.driver.seed, "Z_kind": sc.driver.kind})
    out_dict = rep.to_dict()
    out_dict["inverse_defect"] = flows.inverse_defect
    _dump(out_dict, out / "malliavin.json")
    sol.to_csv(out / "solution.csv")
    return ["malliavin.json", "solution.csv"]


def _hormander(sc, out, seed, jobs):
    task = sc.task("hormander")
    point = np.asarray(task.get("point", sc.x0), dtype=float)
    rep = build_hierarchy(sc.vector_fields(), point, int(task.get("max_level", 5)),
                          task.get("variant", "S"))
    _dump(rep.to_dict(), out / "hormander.json")
    return ["hormander.json"]


def _roughness(sc, out, seed, jobs):
    task = sc.task("roughness")
    rep = scan_roughness(sc.rough_path(), float(task.get("theta", 0.5)),
                         task.get("eps", _default_eps(sc)), int(task.get("directions", 16)))
    _dump(rep.to_dict(), out / "roughness.json")
    return ["roughness.json"]


def _density(sc, out, seed, jobs):
    task = sc.task("density")
    trials = task.get("trials", 1000)
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise InvalidArgument(f"tasks.density.trials must be a positive integer, got {trials!r}")
    tail_eps = task.get("tail_eps")
    res = run_ensemble(sc, trials, seed, task.get("t_index"),
                       malliavin=bool(task.get("malliavin", tail_eps is not None)), jobs=jobs,
                       resample_driver=bool(task.get("resample_driver", False)))
    res.to_csv(out / "samples.csv")
    written = ["samples.csv"]
    if sc.d <= 2 and res.successes:
        est = kde_density(res, task.get("bandwidth"), int(task.get("points", 128)))
        est.to_csv(out / "density.csv")
        _dump({"bandwidth": est.bandwidth.tolist(), "bandwidth_source": est.bandwidth_source,
               "trials": res.trials, "failures": res.failures, "box_mass": est.box_mass()},
              out / "density_meta.json")
        written += ["density.csv", "density_meta.json"]
    if tail_eps is not None:
        eigen_tail(res, tail_eps).to_csv(out / "tail.csv")
        written.append("tail.csv")
    return written


def _norris(sc, out, seed, jobs):
    task = sc.task("norris")
    vf, B, Z = sc.vector_fields(), sc.brownian(seed), sc.rough_path()
    theta = float(task.get("theta", 0.5))
    eps = task.get("eps", _default_eps(sc))
    scan = scan_roughness(Z, theta, eps, int(task.get("directions", 16)))
    sol = solve_rsde(vf, sc.x0, B, Z, sc.guard)
    rep = norris_inequality_check(sol, Z, theta, eps, scan.modulus, float(task.get("tolerance", 1e-9)))
    _dump(rep.to_dict(), out / "norris.json")
    return ["norris.json"]


def _residuals(sc, out, seed, jobs):
    task = sc.task("residuals")
    vf, B, Z = sc.vector_fields(), sc.brownian(seed), sc.rough_path()
    sol = solve_rsde(vf, sc.x0, B, Z, sc.guard)
    table = davie_residual_scan(sol, vf, B, Z, task.get("strides", (2, 4, 8, 16, 32, 64)),
                                float(task.get("p", 2.0)), task.get("integrals", "frozen"))
    table.to_csv(out / "residuals.csv")
    return ["residuals.csv"]


_HANDLERS = {"simulate": _simulate, "malliavin": _malliavin, "hormander": _hormander,
             "roughness": _roughness, "density": _density, "norris": _norris,
             "residuals": _residuals}


def _prepare_out(out: Path, force: bool) -> None:
    if out.exists() and any(out.iterdir()) and not force:
        raise InvalidArgument(f"output directory {out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)


def run_subcommand(name: str, scenario: Scenario, out_dir, seed: Optional[int] = None,
                   jobs: Optional[int] = None, force: bool = False, log=None) -> int:
    """Run one task, write its files and ``manifest.json``, and return the exit status."""
    start = time.perf_counter()
    log = sys.stderr if log is None else log
    try:
        if name not in _HANDLERS:
            raise InvalidArgument(f"unknown command {name!r}; choose from {', '.join(TASKS)}")
        seed = scenario.brownian_seed if seed is None else int(seed)
        if not 0 <= seed < 2 ** 64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")
        jobs = jobs or os.cpu_count() or 1
        out = Path(out_dir)
        _prepare_out(out, force)
        written = _HANDLERS[name](scenario, out, seed, jobs)
    except SolverDiverged as exc:
        print(f"error: {exc}", file=log)
        return EXIT_DIVERGED
    except NumericFailure as exc:
        print(f"error: numerical failure: {exc}", file=log)
        return EXIT_DIVERGED
    except (InvalidArgument, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=log)
        return EXIT_INVALID
    _dump({
        "schema": 1,
        "command": name,
        "config_sha256": scenario.config_sha256,
        "seed": seed,
        "versions": {"roughsde": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "runtime_s": time.perf_counter() - start,
        "outputs": written,
    }, out / "manifest.json")
    return EXIT_OK


def _parser():
    p = argparse.ArgumentParser(prog="roughsde", description="Rough SDE solvers and diagnostics.")
    p.add_argument("command", choices=TASKS)
    p.add_argument("--config", required=True, metavar="PATH", help="scenario TOML file")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int, metavar="U64",
                   help=f"Brownian/ensemble base seed (overrides ${SEED_ENV} and the scenario)")
    p.add_argument("--jobs", type=int, metavar="K", help="worker threads (default: logical cores)")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        scenario = parse_scenario(args.config)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InvalidArgument as exc:
        for msg in getattr(exc, "errors", [str(exc)]):
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    seed = args.seed
    if seed is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            print(f"error: ${SEED_ENV} must be an integer", file=sys.stderr)
            return EXIT_INVALID
    if args.jobs is not None and args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    return run_subcommand(args.command, scenario, args.out, seed, args.jobs, args.force)


if __name__ == "__main__":
    sys.exit(main())
