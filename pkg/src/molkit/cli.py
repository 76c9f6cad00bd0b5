"""Command-line entry points.

Every subcommand prints its result to stdout and, on failure, a one-line
JSON object ``{"error": ..., "message": ...}`` to stderr with exit status 1
(2 for usage errors, 3 when no solver is available).
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from pathlib import Path

from .catalog import FringeCatalog, build_catalog
from .chemgraph import ChemGraphError
from .gnn import GnnConfig, GnnError, GnnModel, TrainParams, compute_bigM, predict, train, with_bigM
from .milp_core import (
    MilpError,
    SolverFailed,
    SolverUnavailable,
    emit_lp,
    parse_solution,
    run_solver,
)
from .milp_encode import assemble
from .molio import graph_to_json, read_molecule, write_molecule
from .spec import SpecError, load_spec, preset, save_spec
from .witness import WitnessError, brute_force_feasibility, decode_solution, encode_witness

MOLECULE_SUFFIXES = (".json", ".sdf", ".mol")
_NEGATIVE = re.compile(r"^-(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$|^-inf$")


class CliError(Exception):
    def __init__(self, kind: str, message: str, status: int = 1):
        super().__init__(message)
        self.kind = kind
        self.status = status


def _read_dataset(directory: str) -> dict[str, object]:
    root = Path(directory)
    if not root.is_dir():
        raise CliError("dataset", f"{directory} is not a directory")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in MOLECULE_SUFFIXES)
    if not files:
        raise CliError("dataset", f"no molecule files in {directory}")
    return {p.stem: read_molecule(p) for p in files}


def _read_values(path: str) -> dict[str, float]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                out[row[0].strip()] = float(row[1])
            except (IndexError, ValueError):
                if out:  # anything after the first data row must parse
                    raise CliError("values", f"bad row in {path}: {row}") from None
    return out


def _range(values) -> tuple[float, float]:
    lo, hi = (float(v) for v in values)
    if not lo <= hi:
        raise CliError("range", f"empty range [{lo}, {hi}]")
    return lo, hi


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------- subcommands


def cmd_catalog_build(a) -> None:
    mols = _read_dataset(a.dataset)
    cat = build_catalog(list(mols.values()), a.rho)
    cat.save(a.out)
    _print({"trees": len(cat), "rho": a.rho, "out": a.out})


def cmd_train(a) -> None:
    mols = _read_dataset(a.dataset)
    values = _read_values(a.values)
    missing = sorted(set(mols) - set(values))
    if missing:
        raise CliError("values", f"no value for {len(missing)} molecules, e.g. {missing[0]}")
    names = sorted(mols)
    cfg_data = json.loads(Path(a.config).read_text()) if a.config else {}
    hp_data = cfg_data.pop("training", {})
    cfg = GnnConfig.with_defaults(**cfg_data)
    hp = TrainParams(**{**hp_data, "seed": a.seed})
    catalog = FringeCatalog.load(a.catalog) if a.catalog else None
    graphs = [mols[n] for n in names]
    model = train(graphs, [values[n] for n in names], cfg, hp, catalog)
    if model.bigM is None:
        model = with_bigM(model, compute_bigM(model, graphs, hp.bigm_safety, catalog=catalog).bounds)
    model.save(a.out)
    _print({"out": a.out, "molecules": len(names), "metadata": model.metadata})


def cmd_predict(a) -> None:
    model = GnnModel.load(a.model)
    catalog = FringeCatalog.load(a.catalog) if a.catalog else None
    print(repr(predict(read_molecule(a.molecule), model, catalog)))


def _model_and_spec(a):
    spec = load_spec(a.spec)
    model = GnnModel.load(a.model)
    return spec, model


def cmd_milp_emit(a) -> None:
    spec, model = _model_and_spec(a)
    m = assemble(spec, model, _range(a.range))
    emit_lp(m, a.out)
    counts = m.counts()
    if a.counts:
        Path(a.counts).write_text(json.dumps(counts, indent=2))
    _print({"out": a.out, "variables": counts["variables"], "constraints": counts["constraints"]})


def cmd_milp_solve(a) -> None:
    try:
        run_solver(Path(a.lp), Path(a.sol), a.solver_cmd, a.timeout)
    except SolverUnavailable as exc:
        raise CliError("solver unavailable", str(exc), status=3) from None
    status = Path(a.sol).read_text().splitlines()[:1] if Path(a.sol).exists() else []
    _print({"sol": a.sol, "status": status[0] if status else "unknown"})


def cmd_milp_decode(a) -> None:
    spec, model = _model_and_spec(a)
    m = assemble(spec, model)
    sol = parse_solution(a.sol, m)
    if not sol.feasible:
        raise CliError("infeasible", f"solution status is {sol.status}")
    dec = decode_solution(sol.values, spec)
    write_molecule(dec.graph, a.out)
    y = predict(dec.graph, model, spec.catalog)
    _print({"out": a.out, "y": y, "y_milp": sol.values.get("y"), "atoms": dec.graph.n_atoms})


def cmd_witness_check(a) -> None:
    spec, model = _model_and_spec(a)
    g = read_molecule(a.molecule)
    res = encode_witness(g, spec, model, y_range=_range(a.range) if a.range else None)
    rep = res.report
    _print({
        "ok": rep.ok,
        "violations": rep.violations,
        "integrality": rep.integrality,
        "bounds": rep.bounds,
        "y": res.assignment.get("y"),
    })
    if not rep.ok:
        n = len(rep.violations) + len(rep.integrality) + len(rep.bounds)
        raise CliError("witness", f"molecule violates {n} rows or bounds")


def cmd_oracle(a) -> None:
    spec, model = _model_and_spec(a)
    res = brute_force_feasibility(spec, model, _range(a.range))
    out = {"feasible": res.feasible, "examined": res.examined, "y": res.y}
    if res.witness is not None:
        out["molecule"] = graph_to_json(res.witness)
    _print(out)


def cmd_instance_preset(a) -> None:
    catalog = FringeCatalog.load(a.catalog)
    spec = preset(a.id, catalog, a.subset, a.policy)
    save_spec(spec, a.out)
    _print({"out": a.out, "instance": a.id, "fringe_trees": len(spec.catalog)})


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as JSON instead of text.

    Values such as ``-1e9`` and ``-inf`` are read as numbers, not options.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._negative_number_matcher = _NEGATIVE

    def error(self, message: str):
        raise CliError("usage", message, status=2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="molkit", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0, help="seed for every random source")
    sub = p.add_subparsers(dest="command", required=True)

    cat = sub.add_parser("catalog").add_subparsers(dest="action", required=True)
    c = cat.add_parser("build", help="collect fringe trees of a dataset")
    c.add_argument("--dataset", required=True)
    c.add_argument("--rho", type=int, default=2)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_catalog_build)

    t = sub.add_parser("train", help="fit a GNN to property values")
    t.add_argument("--dataset", required=True)
    t.add_argument("--values", required=True, help="CSV of molecule-id,value")
    t.add_argument("--config", help="JSON with GnnConfig fields and an optional 'training' block")
    t.add_argument("--catalog")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict the property of one molecule")
    pr.add_argument("--model", required=True)
    pr.add_argument("--molecule", required=True)
    pr.add_argument("--catalog")
    pr.set_defaults(func=cmd_predict)

    milp = sub.add_parser("milp").add_subparsers(dest="action", required=True)
    e = milp.add_parser("emit", help="write the inference MILP as an LP file")
    e.add_argument("--spec", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--range", nargs=2, required=True, metavar=("LO", "HI"))
    e.add_argument("--out", required=True)
    e.add_argument("--counts", help="also write the per-family size report here")
    e.set_defaults(func=cmd_milp_emit)
    s = milp.add_parser("solve", help="run an external solver on an LP file")
    s.add_argument("--lp", required=True)
    s.add_argument("--sol", required=True)
    s.add_argument("--solver-cmd", help="template with {lp}, {sol}, {timeout}; default from MOLKIT_SOLVER_CMD")
    s.add_argument("--timeout", type=float, default=3600.0)
    s.set_defaults(func=cmd_milp_solve)
    d = milp.add_parser("decode", help="turn a solution file into a molecule")
    d.add_argument("--sol", required=True)
    d.add_argument("--spec", required=True)
    d.add_argument("--model", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_milp_decode)

    w = sub.add_parser("witness").add_subparsers(dest="action", required=True)
    wc = w.add_parser("check", help="check a molecule against the MILP")
    wc.add_argument("--molecule", required=True)
    wc.add_argument("--spec", required=True)
    wc.add_argument("--model", required=True)
    wc.add_argument("--range", nargs=2, metavar=("LO", "HI"))
    wc.set_defaults(func=cmd_witness_check)

    o = sub.add_parser("oracle", help="decide a tiny instance by enumeration")
    o.add_argument("--spec", required=True)
    o.add_argument("--model", required=True)
    o.add_argument("--range", nargs=2, required=True, metavar=("LO", "HI"))
    o.set_defaults(func=cmd_oracle)

    inst = sub.add_parser("instance").add_subparsers(dest="action", required=True)
    ip = inst.add_parser("preset", help="write a built-in test instance")
    ip.add_argument("--id", required=True, choices=["I1", "I2", "I3", "I4", "I5"])
    ip.add_argument("--catalog", required=True)
    ip.add_argument("--subset", type=int)
    ip.add_argument("--policy", default="most_frequent")
    ip.add_argument("--out", required=True)
    ip.set_defaults(func=cmd_instance_preset)
    return p


def _fail(kind: str, message: str, status: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return status


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.status)
    except SpecError as exc:
        print(json.dumps({"error": "spec", **exc.to_json()}), file=sys.stderr)
        return 1
    except SolverFailed as exc:
        return _fail("solver failed", str(exc), 1)
    except (ChemGraphError, GnnError, MilpError, WitnessError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
