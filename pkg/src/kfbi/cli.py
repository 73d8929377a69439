"""Command-line entry point.

One binary with subcommands covering the full pipeline: standard solves,
grid-refinement studies, dataset generation and splitting, linear model
training, inference, and the benchmark harness.  Every run writes a
manifest (config echo, package version, seed) beside its outputs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 missing artifact.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

import kfbi
from kfbi import datagen, hybrid, io, models
from kfbi.bie import (
    NEUMANN,
    PotentialCalculator,
    ProblemError,
    richardson_solve,
    assemble_solution,
    solution_errors,
)
from kfbi.datagen import DatasetError
from kfbi.geometry import ClassificationError, CurveError
from kfbi.grid import GridError
from kfbi.io import FormatError
from kfbi.models import ModelError

log = logging.getLogger("kfbi")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_MISSING = 4

CONFIG_ERRORS = (FormatError, CurveError, GridError, ProblemError, ModelError, DatasetError)


class NumericalFailure(RuntimeError):
    pass


def _out_dir(args) -> str:
    out = args.out_dir or os.environ.get("KFBI_OUT", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(out_dir, name, args, extra=None):
    path = os.path.join(out_dir, name + ".manifest.txt")
    with open(path, "w") as fh:
        fh.write(f"kfbi {kfbi.__version__}\n")
        fh.write("argv " + " ".join(sys.argv[1:]) + "\n")
        for k, v in sorted(vars(args).items()):
            if k != "func":
                fh.write(f"{k} {v}\n")
        for k, v in (extra or {}).items():
            fh.write(f"{k} {v}\n")


def _load_problem(path):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    parsed = io.parse_problem_file(path)
    return io.build_problem(parsed)


def _prepare(spec, solution):
    """Calculator plus a spec with Neumann data bound to the node set."""
    calc = PotentialCalculator(spec)
    if spec.bc_kind == NEUMANN:
        if solution is None:
            raise FormatError("Neumann problems need a manufactured solution")
        spec = dataclasses.replace(
            spec, g=io.neumann_boundary_data(calc.nodes, solution)
        )
        calc = calc.with_spec(spec)
    return spec, calc


def _solve_once(spec, solution, options, args):
    spec, calc = _prepare(spec, solution)
    kw = dict(options)
    if args.tol is not None:
        kw["tol"] = args.tol
    phi0 = None
    if kw.pop("phi0", "default") == "zero":
        phi0 = np.zeros(calc.nodes.count)
    phi, report = richardson_solve(spec, phi0=phi0, calc=calc, **kw)
    if not report.converged:
        raise NumericalFailure(
            f"iteration did not converge in {report.iterations} steps "
            f"(last update {report.residual_history[-1]:.3e})"
        )
    field, inside = assemble_solution(spec, phi, calc=calc)
    metrics = {"iterations": report.iterations, "time": f"{report.wall_time:.3f}"}
    if solution is not None and spec.bc_kind != NEUMANN:
        linf, l2 = solution_errors(spec, field, inside, solution.u)
        metrics |= {"linf": f"{linf:.6e}", "l2": f"{l2:.6e}"}
    elif solution is not None:
        linf, l2 = solution_errors(
            spec, field, inside, solution.u, pin_mean=spec.kappa == 0.0
        )
        metrics |= {"linf": f"{linf:.6e}", "l2": f"{l2:.6e}"}
    return spec, field, metrics


def cmd_solve(args):
    spec, solution, options = _load_problem(args.problem)
    spec, field, metrics = _solve_once(spec, solution, options, args)
    out = _out_dir(args)
    stem = os.path.splitext(os.path.basename(args.problem))[0]
    if args.format == "csv":
        dump = os.path.join(out, stem + ".field.csv")
        io.field_to_csv(dump, spec.grid, field)
    else:
        dump = os.path.join(out, stem + ".kfbif")
        io.write_field(dump, spec.grid, field)
    _write_manifest(out, stem, args, metrics)
    print(" ".join(f"{k}={v}" for k, v in metrics.items()), f"field={dump}")


def cmd_convergence(args):
    spec, solution, options = _load_problem(args.problem)
    if solution is None:
        raise FormatError("convergence study needs a manufactured solution")
    errors = []
    for n in args.grids:
        spec_n = dataclasses.replace(
            spec,
            grid=dataclasses.replace(spec.grid, nx=n, ny=n),
            num_nodes=0 if spec.num_nodes == 0 else spec.num_nodes,
        )
        _, _, metrics = _solve_once(spec_n, solution, options, args)
        errors.append(float(metrics["linf"]))
        print(f"grid={n} linf={metrics['linf']} iterations={metrics['iterations']}")
    for a, b, n in zip(errors, errors[1:], args.grids[1:]):
        print(f"order@{n} {np.log2(a / b):.2f}")


def cmd_datagen(args):
    config, file_seed = io.parse_dataset_config(args.config)
    seed = args.seed if args.seed is not None else file_seed
    dataset, stats = datagen.generate_dataset(config, seed=seed)
    out = _out_dir(args)
    path = os.path.join(out, args.name + ".kfbid")
    datagen.write_dataset(path, dataset)
    log_path = os.path.join(out, args.name + ".log")
    with open(log_path, "w") as fh:
        fh.write("\n".join(stats.lines) + "\n")
        fh.write(
            f"summary requested={stats.requested} accepted={stats.accepted} "
            f"rejected_error={stats.rejected_error} "
            f"rejected_diverged={stats.rejected_diverged}\n"
        )
    _write_manifest(out, args.name, args, {"seed": seed, "records": dataset.count})
    print(f"records={dataset.count} file={path} log={log_path}")


def cmd_split(args):
    dataset = datagen.read_dataset(args.dataset)
    train, test = datagen.split_dataset(dataset, args.fraction, args.seed)
    datagen.write_dataset(args.train, train)
    datagen.write_dataset(args.test, test)
    print(f"train={train.count} test={test.count}")


def cmd_train_linear(args):
    dataset = datagen.read_dataset(args.dataset)
    train, test = datagen.split_dataset(dataset, args.split, args.seed)
    model = models.fit_linear(
        train.g_mod, train.phi, layout=args.layout, d=args.d, ridge=args.ridge
    )
    models.save_weights(model, args.out)
    pred = model.infer(test.g_mod)
    rms = float(np.sqrt(np.mean((pred - test.phi) ** 2)))
    rel = rms / max(float(np.sqrt(np.mean(test.phi**2))), 1e-300)
    out = os.path.dirname(os.path.abspath(args.out)) or "."
    _write_manifest(out, os.path.basename(args.out), args, {"heldout_rms": rms})
    print(f"weights={args.out} heldout_rms={rms:.6e} heldout_rel={rel:.6e}")


def cmd_infer(args):
    model = models.load_weights(args.weights)
    g = np.loadtxt(args.input, ndmin=1)
    params = (
        np.array([float(v) for v in args.params.split(",")])
        if args.params
        else None
    )
    phi = models.infer(model, g, params)
    if args.output:
        np.savetxt(args.output, phi)
    else:
        print("\n".join(repr(v) for v in phi))


def cmd_bench(args):
    cases = io.parse_suite_file(args.suite)
    resolved = []
    problems = {}
    for case in cases:
        ppath = case["problem"]
        if ppath not in problems:
            spec, solution, options = _load_problem(ppath)
            spec, _ = _prepare(spec, solution)
            problems[ppath] = (spec, solution, options)
        spec, solution, options = problems[ppath]
        entry = {
            "name": case["name"],
            "spec": spec,
            "method": case["method"],
            "exact": solution.u if solution is not None else None,
        }
        entry.update({k: v for k, v in options.items() if k in ("gamma", "tol", "tol_mode")})
        if "model_path" in case:
            entry["model"] = models.load_weights(case["model_path"])
        if "params" in case:
            entry["params"] = case["params"]
        resolved.append(entry)
    report = hybrid.run_benchmark(resolved, repeats=args.repeats)
    out = _out_dir(args)
    path = os.path.join(out, "benchmark.csv")
    with open(path, "w") as fh:
        fh.write(report.to_csv())
    _write_manifest(out, "benchmark", args)
    print(report.to_csv(), end="")
    print(f"csv={path}")
    if any(r.failed for r in report.rows):
        return EXIT_MISSING
    return EXIT_OK


def cmd_describe(args):
    with open(args.file, "rb") as fh:
        head = fh.read(4096)
    magic = head.split(b"\n", 1)[0].decode("ascii", "replace")
    if magic not in ("KFBIW1", "KFBID1", "KFBIF1"):
        raise FormatError(f"{args.file}: unrecognized magic {magic!r}")
    for line in head.decode("ascii", "replace").split("\n"):
        print(line)
        if line == "end":
            break


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kfbi",
        description="Kernel-free boundary integral solver and operator-learning pipeline",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="warning")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default=None)
    common.add_argument("--threads", type=int, default=None, help="cap worker threads")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=argparse.ArgumentParser)

    def add_parser(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = add_parser("solve", help="run the standard solver on a problem file")
    p.add_argument("problem")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--format", choices=("binary", "csv"), default="binary")
    p.set_defaults(func=cmd_solve)

    p = add_parser("convergence", help="grid-refinement study")
    p.add_argument("problem")
    p.add_argument("--grids", type=int, nargs="+", default=[64, 128, 256])
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_convergence)

    p = add_parser("datagen", help="generate a training dataset")
    p.add_argument("config")
    p.add_argument("--name", default="dataset")
    p.set_defaults(func=cmd_datagen)

    p = add_parser("split", help="split a dataset into train/test files")
    p.add_argument("dataset")
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_split, seed_default=0)

    p = add_parser("train-linear", help="fit a linear operator model")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--layout", choices=("direct", "bottleneck"), default="direct")
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--ridge", type=float, default=1e-10)
    p.add_argument("--split", type=float, default=0.8)
    p.set_defaults(func=cmd_train_linear)

    p = add_parser("infer", help="apply a weights file to an input vector")
    p.add_argument("weights")
    p.add_argument("--input", required=True, help="text file, one value per line")
    p.add_argument("--output", default=None)
    p.add_argument("--params", default=None, help="comma-separated parameter vector")
    p.set_defaults(func=cmd_infer)

    p = add_parser("bench", help="run a benchmark suite")
    p.add_argument("suite")
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_bench)

    p = add_parser("describe", help="print the header of a kfbi file")
    p.add_argument("file")
    p.set_defaults(func=cmd_describe)

    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper())
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    if args.seed is None:
        args.seed = 0 if args.command != "datagen" else None

    try:
        rc = args.func(args)
        return EXIT_OK if rc is None else rc
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ClassificationError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
