"""Command-line entry point: ``reflectsim <command> --spec <file>``.

Exit codes: 0 success, 1 a statistical validation rejected, 2 invalid
specification, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .domain import DomainError, ProjectionError
from .geometry import certify
from .integrator import self_convergence, simulate
from .runspec import RunSpec, SpecError, atomic_write, trajectory_csv
from .stats import GibbsSpec, rejection_sample, stationarity_test

EXIT_OK, EXIT_REJECTED, EXIT_SPEC, EXIT_NUMERIC = 0, 1, 2, 3
THREADS_ENV = "REFLECTSIM_THREADS"


class ReplicaFailure(RuntimeError):
    def __init__(self, message, manifest):
        super().__init__(message)
        self.manifest = manifest


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _path(spec: RunSpec, suffix: str) -> str:
    return os.path.join(spec.output["dir"], f"{spec.output['prefix']}{suffix}")


def run_replica(spec: RunSpec, replica: int, write: bool = True) -> dict:
    """Simulate one replica with seed ``base_seed + replica``; returns its summary."""
    model = spec.build_model()
    seed = spec.numeric["seed"] + replica
    record = simulate(spec.config(seed), model, spec.build_coefficients(model), spec.initial(model))
    suffix = "" if spec.numeric["replicas"] == 1 else f"_r{replica}"
    summary = {
        "replica": replica,
        "seed": seed,
        "samples": int(record.times.size),
        "means": dict(zip(record.names, map(float, record.states.mean(axis=0)))),
        "local_times": dict(zip(record.ids, map(float, record.ledger[-1]))),
        "diagnostics": record.diagnostics,
    }
    if write:
        atomic_write(_path(spec, f"{suffix}.csv"), trajectory_csv(record))
        meta = {
            "schema_version": 1,
            "model": spec.model,
            "coefficients": spec.coefficients,
            "numeric": {**spec.numeric, "seed": seed},
            "columns": ["t"] + record.names + [f"L_{cid}" for cid in record.ids],
            "diagnostics": record.diagnostics,
        }
        atomic_write(_path(spec, f"{suffix}.json"), _dumps(meta))
    return summary


def _replica_task(args):
    spec_dict, replica, write = args
    return run_replica(RunSpec.from_dict(spec_dict), replica, write)


def merge_summaries(summaries) -> dict:
    """Order-independent merge: replicas sorted by index, means averaged."""
    summaries = sorted(summaries, key=lambda s: s["replica"])
    names = list(summaries[0]["means"])
    pooled = {k: float(np.mean([s["means"][k] for s in summaries])) for k in names}
    return {"replicas": summaries, "mean_of_means": pooled}


def resolve_workers(flag: int | None, replicas: int) -> int:
    if flag is not None:
        workers = flag
    elif os.environ.get(THREADS_ENV):
        workers = int(os.environ[THREADS_ENV])
    else:
        workers = os.cpu_count() or 1
    return max(1, min(workers, replicas))


def ensemble(spec: RunSpec, replicas: int, workers: int = 1, write: bool = True) -> dict:
    """Run ``replicas`` independent replicas; abort with a manifest on failure."""
    if replicas < 1:
        raise SpecError("replicas must be >= 1")
    spec.numeric["replicas"] = replicas
    tasks = [(spec.to_dict(), r, write) for r in range(replicas)]
    done, failed = [], []
    if workers <= 1:
        for task in tasks:
            try:
                done.append(_replica_task(task))
            except (ProjectionError, DomainError, ValueError, RuntimeError) as exc:
                failed.append({"replica": task[1], "error": str(exc)})
                break
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_replica_task, t) for t in tasks]
            for task, fut in zip(tasks, futures):
                try:
                    done.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - reported in the manifest
                    failed.append({"replica": task[1], "error": str(exc)})
    if failed:
        manifest = {"completed": sorted(done, key=lambda s: s["replica"]), "failed": failed}
        if write:
            atomic_write(_path(spec, "_partial.json"), _dumps(manifest))
        raise ReplicaFailure(f"{len(failed)} replica(s) failed", manifest)
    return merge_summaries(done)


# commands


def cmd_simulate(spec, workers):
    replicas = spec.numeric["replicas"]
    if replicas == 1:
        return run_replica(spec, 0), EXIT_OK
    merged = ensemble(spec, replicas, workers)
    atomic_write(_path(spec, "_summary.json"), _dumps(merged))
    return merged, EXIT_OK


def cmd_verify_geometry(spec, workers):
    model = spec.build_model()
    g = spec.geometry
    cert = certify(model, g["samples"], spec.numeric["seed"], g["mc_points"], g["inflated_delta"])
    out = cert.to_dict()
    atomic_write(_path(spec, "_certificate.json"), _dumps(out))
    return out, EXIT_OK if cert.ok else EXIT_REJECTED


def _gibbs(spec, model, count, seed):
    g = spec.gibbs
    gs = GibbsSpec.for_model(model, g["window_low"], g["window_high"], spec.potential())
    return rejection_sample(gs, count, seed)


def cmd_sample_gibbs(spec, workers):
    model = spec.build_model()
    samples, rate = _gibbs(spec, model, spec.gibbs["samples"], spec.numeric["seed"])
    header = ",".join(model.coordinate_names())
    lines = [header] + [",".join(f"{v:.17g}" for v in row) for row in samples]
    atomic_write(_path(spec, "_gibbs.csv"), "\n".join(lines) + "\n")
    return {"samples": int(len(samples)), "acceptance_rate": rate}, EXIT_OK


def _default_observables(model):
    if model.name == "globules":
        return [f"r{i + 1}" for i in range(model.params.n)]
    return ["lo", "hi"]


def cmd_validate(spec, workers):
    """Trajectory marginals against i.i.d. Gibbs samples (two-sample KS)."""
    model = spec.build_model()
    v = spec.validate
    record = simulate(spec.config(), model, spec.build_coefficients(model), spec.initial(model))
    keep = record.times >= v["burn_in"]
    oracle, rate = _gibbs(spec, model, v["oracle_samples"], spec.numeric["seed"] + 10**6)
    names = model.coordinate_names()
    reports = {}
    for obs in v.get("observables") or _default_observables(model):
        if obs not in names:
            raise SpecError(f"validate/observables: unknown coordinate {obs}")
        traj = record.column(obs)[keep][:: v["thin"]]
        reports[obs] = stationarity_test(traj, oracle[:, names.index(obs)], v["level"]).to_dict()
    out = {"reports": reports, "acceptance_rate": rate, "diagnostics": record.diagnostics,
           "passed": all(r["passed"] for r in reports.values())}
    atomic_write(_path(spec, "_validate.json"), _dumps(out))
    return out, EXIT_OK if out["passed"] else EXIT_REJECTED


def cmd_self_converge(spec, workers):
    model = spec.build_model()
    n = spec.numeric
    dt_list = n.get("dt_list") or [n["dt"], n["dt"] / 2, n["dt"] / 4]
    table = self_convergence(spec.config(), model, spec.build_coefficients(model), dt_list,
                             spec.initial(model), n["replicas"])
    devs = [row["max_deviation"] for row in table]
    out = {"table": table, "strictly_decreasing": all(a > b for a, b in zip(devs, devs[1:]))}
    atomic_write(_path(spec, "_convergence.json"), _dumps(out))
    return out, EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "verify-geometry": cmd_verify_geometry,
    "sample-gibbs": cmd_sample_gibbs,
    "validate": cmd_validate,
    "self-converge": cmd_self_converge,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="reflectsim", description="Reflected diffusions of particle systems.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--spec", required=True, help="JSON run specification")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--seed", type=int, help="base seed (overrides numeric.seed)")
    parser.add_argument("--replicas", type=int, help="number of replicas (overrides numeric.replicas)")
    parser.add_argument("--workers", type=int, help=f"worker processes (default ${THREADS_ENV} or CPU count)")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = RunSpec.load(args.spec)
        if spec.command != args.command:
            raise SpecError(f"command: spec is for {spec.command!r}, invoked as {args.command!r}")
        if args.out is not None:
            spec.output["dir"] = args.out
        if args.seed is not None:
            spec.numeric["seed"] = args.seed
        if args.replicas is not None:
            if args.replicas < 1:
                raise SpecError("--replicas must be >= 1")
            spec.numeric["replicas"] = args.replicas
        workers = resolve_workers(args.workers, spec.numeric["replicas"])
    except (SpecError, OSError) as exc:
        print(_dumps({"status": "invalid", "error": str(exc)}))
        return EXIT_SPEC
    try:
        summary, code = COMMANDS[args.command](spec, workers)
    except SpecError as exc:
        print(_dumps({"status": "invalid", "error": str(exc)}))
        return EXIT_SPEC
    except ReplicaFailure as exc:
        print(_dumps({"status": "failed", "error": str(exc), "manifest": exc.manifest}))
        return EXIT_NUMERIC
    except (ProjectionError, DomainError, FloatingPointError, RuntimeError, ValueError) as exc:
        print(_dumps({"status": "failed", "error": str(exc)}))
        return EXIT_NUMERIC
    print(_dumps({"status": "ok" if code == EXIT_OK else "rejected", "result": summary}))
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
