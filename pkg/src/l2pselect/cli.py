"""Command-line front end.

Every command writes its outputs plus a ``manifest.json`` into ``--out``.
The manifest records the command, every resolved parameter, the SHA-256
of each input file and the tool version, and ``replay`` reruns it.

Exit codes: 0 success, 1 usage or input error, 2 solver budget exhausted
(outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import replace

from . import __version__
from .datafiles import (DataFormatError, atomic_write_text, read_dense_csv,
                        read_sparse_libsvm_format, result_record, write_dense_csv,
                        write_result)
from .dataset import normalize
from .harness import PlantedSpec, evaluate, generate_planted, summarize_trials
from .linalg import NumericalError
from .solver import DEFAULT_P_GRID, SolverConfig, SweepError, run, sweep_p

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_BUDGET = 2

log = logging.getLogger("l2pselect")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; 2 is reserved here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def parse_grid(text):
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse p grid {text!r}") from None
    if not grid:
        raise UsageError("p grid is empty")
    return grid


def _format_p(p):
    return repr(float(p))


def load_dataset(params):
    path = params["input"]
    if params["format"] == "libsvm":
        ds = read_sparse_libsvm_format(path)
    else:
        col = params["label_col"]
        ds = read_dense_csv(path, has_header=params["header"],
                            label_column=-1 if col is None else col - 1)
    return ds


def solver_config(params, p=None):
    return SolverConfig(
        p=params["p"] if p is None else p,
        max_outer_iterations=params["max_iters"],
        relative_objective_tolerance=params["tol"],
        feature_count_d=params["d"],
    )


def _prepared(params):
    ds = load_dataset(params)
    if params["d"] > ds.n_features:
        raise UsageError(f"--d {params['d']} exceeds the {ds.n_features} available features")
    if params["standardize"]:
        ds = normalize(ds)
    return ds


def cmd_select(params, out):
    ds = _prepared(params)
    config = solver_config(params)
    state, ranking = run(ds, config)
    record = result_record(config.to_dict(), state, ranking)
    write_result(record, os.path.join(out, "result.json"), "json")
    write_result(record, os.path.join(out, "ranking.csv"), "csv")
    return EXIT_OK if state.converged else EXIT_BUDGET


def cmd_sweep_p(params, out):
    ds = _prepared(params)
    grid = params["p_grid"]
    rows = []
    status = EXIT_OK
    for p in grid:
        config = solver_config(params, p=p)
        try:
            results = sweep_p(ds, [p], config)
        except SweepError as exc:
            rows.append([_format_p(p), "", "", "", "false", str(exc.cause)])
            status = EXIT_INPUT
            continue
        res = results[0]
        record = result_record(replace(config, p=p).to_dict(), res.state, res.ranking)
        write_result(record, os.path.join(out, f"result_p{_format_p(p)}.json"), "json")
        rows.append([_format_p(p), repr(record["objective_trace"][-1]),
                     str(res.ranking.support_size(1e-6)), str(res.state.iteration),
                     "true" if res.state.converged else "false", ""])
        if not res.state.converged and status == EXIT_OK:
            status = EXIT_BUDGET
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["p", "objective", "support_size", "iterations", "converged", "error"])
    writer.writerows(rows)
    atomic_write_text(os.path.join(out, "summary.csv"), buf.getvalue())
    return status


def cmd_synth(params, out):
    k = params["k"]
    if k < 1:
        raise UsageError("--k must be at least 1")
    try:
        spec = PlantedSpec(samples=params["m"], features=params["n"], classes=params["classes"],
                           informative=tuple(range(k)), class_separation=params["separation"],
                           noise_std=params["noise"], seed=params["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds, truth = generate_planted(spec)
    write_dense_csv(ds, os.path.join(out, "data.csv"), header=True)
    atomic_write_text(os.path.join(out, "truth.txt"),
                      "".join(f"{j + 1}\n" for j in sorted(truth)))
    return EXIT_OK


def read_truth(path):
    truth = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                j = int(line)
            except ValueError:
                raise DataFormatError(path, f"not a feature number: {line!r}", line=lineno) from None
            if j < 1:
                raise DataFormatError(path, "feature numbers start at 1", line=lineno)
            truth.add(j - 1)
    return truth


def cmd_eval(params, out):
    ds = load_dataset(params)
    if params["d"] > ds.n_features:
        raise UsageError(f"--d {params['d']} exceeds the {ds.n_features} available features")
    truth = read_truth(params["truth"]) if params["truth"] else None
    p = params["p_mode"]
    results = evaluate(ds, params["d"], p=p if p == "cv" else float(p), trials=params["trials"],
                       seed=params["seed"], folds=params["folds"], truth=truth,
                       config=solver_config(params, p=1.0), p_grid=params["p_grid"])
    report = summarize_trials(results)
    report["trial_results"] = [
        {"seed": r.seed, "p": r.p, "accuracy": r.accuracy, "support_size": r.support_size,
         "selected": [j + 1 for j in r.selected], "converged": r.converged,
         "precision_at_d": r.precision_at_d}
        for r in results
    ]
    atomic_write_text(os.path.join(out, "report.json"), json.dumps(report, indent=2) + "\n")
    return EXIT_OK if report["converged"] else EXIT_BUDGET


COMMANDS = {
    "select": cmd_select,
    "sweep-p": cmd_sweep_p,
    "synth": cmd_synth,
    "eval": cmd_eval,
}


def build_parser():
    parser = _Parser(prog="l2pselect", description="Row-sparse feature selection by l2,p minimization.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_flags(sp):
        sp.add_argument("--input", required=True, help="data file")
        sp.add_argument("--format", choices=("csv", "libsvm"), default="csv")
        sp.add_argument("--label-col", type=int, default=None,
                        help="1-based label column of a CSV file (default: last)")
        sp.add_argument("--header", action="store_true", help="CSV file has a header row")

    def solver_flags(sp):
        sp.add_argument("--d", type=int, default=10, help="number of features to select")
        sp.add_argument("--max-iters", type=int, default=SolverConfig.max_outer_iterations)
        sp.add_argument("--tol", type=float, default=SolverConfig.relative_objective_tolerance)
        sp.add_argument("--no-standardize", dest="standardize", action="store_false",
                        help="use features as given instead of zero mean, unit variance")

    def out_flag(sp):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("select", help="rank features and select the top d")
    data_flags(sp); solver_flags(sp); out_flag(sp)
    sp.add_argument("--p", type=float, default=1.0)

    sp = sub.add_parser("sweep-p", help="one selection per value of p")
    data_flags(sp); solver_flags(sp); out_flag(sp)
    sp.add_argument("--p-grid", default=",".join(repr(p) for p in DEFAULT_P_GRID))

    sp = sub.add_parser("synth", help="write a planted dataset and its informative features")
    out_flag(sp)
    sp.add_argument("--m", type=int, default=40)
    sp.add_argument("--n", type=int, default=60)
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--classes", type=int, default=2)
    sp.add_argument("--separation", type=float, default=3.0)
    sp.add_argument("--noise", type=float, default=1.0)

    sp = sub.add_parser("eval", help="split, select on train, classify test, over several trials")
    data_flags(sp); solver_flags(sp); out_flag(sp)
    sp.add_argument("--truth", default=None, help="file of informative feature numbers")
    sp.add_argument("--p", dest="p_mode", default="cv", help='a value of p, or "cv"')
    sp.add_argument("--p-grid", default=",".join(repr(p) for p in DEFAULT_P_GRID))
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--folds", type=int, default=3)

    sp = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    return parser


def resolve(args):
    """Plain dict of every parameter of the chosen command."""
    params = {k: v for k, v in vars(args).items() if k != "command"}
    if "p_grid" in params:
        params["p_grid"] = parse_grid(params["p_grid"])
    if "p" in params and not (0 < params["p"] <= 2):
        raise UsageError("--p must lie in (0, 2]")
    if "p_mode" in params and params["p_mode"] != "cv":
        try:
            value = float(params["p_mode"])
        except ValueError:
            raise UsageError('--p must be a number or "cv"') from None
        if not (0 < value <= 2):
            raise UsageError("--p must lie in (0, 2]")
        params["p_mode"] = value
    if "d" in params and params["d"] < 1:
        raise UsageError("--d must be at least 1")
    if "max_iters" in params and params["max_iters"] < 1:
        raise UsageError("--max-iters must be at least 1")
    if "tol" in params and not params["tol"] > 0:
        raise UsageError("--tol must be positive")
    if "input" in params and params["input"] is not None:
        params["input"] = os.path.abspath(params["input"])
    if params.get("truth"):
        params["truth"] = os.path.abspath(params["truth"])
    params.pop("out", None)
    return params


def manifest_for(command, params):
    inputs = {}
    for key in ("input", "truth"):
        path = params.get(key)
        if path:
            inputs[key] = {"path": path, "sha256": sha256_file(path)}
    return {
        "command": command,
        "parameters": params,
        "inputs": inputs,
        "seed": params.get("seed"),
        "version": __version__,
    }


def execute(command, params, out):
    os.makedirs(out, exist_ok=True)
    manifest = manifest_for(command, params)
    status = COMMANDS[command](params, out)
    atomic_write_text(os.path.join(out, "manifest.json"), json.dumps(manifest, indent=2) + "\n")
    return status


def replay(manifest_path, out):
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    command = manifest.get("command")
    if command not in COMMANDS:
        raise UsageError(f"manifest names unknown command {command!r}")
    if manifest.get("version") != __version__:
        log.warning("manifest was written by version %s, running %s",
                    manifest.get("version"), __version__)
    for key, entry in manifest.get("inputs", {}).items():
        if sha256_file(entry["path"]) != entry["sha256"]:
            raise UsageError(f"{key} file {entry['path']} changed since the manifest was written")
    return execute(command, manifest["parameters"], out)


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "replay":
            return replay(args.manifest, args.out)
        return execute(args.command, resolve(args), args.out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, NumericalError) as exc:
        # DataFormatError is a ValueError and already names the location
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
