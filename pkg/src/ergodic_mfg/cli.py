"""Command line front end: ``ergodic-mfg {run,oracle,check-monotonicity} CONFIG``.

Exit codes: 0 ok, 2 config or validation error, 3 solver error,
4 certification failure (artifacts still written), 5 oracle limit exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, load_scenario
from .coupling import check_C2, check_lasry_lions, compare_monotonicity, validate_coupling
from .dual import SolutionTriple
from .errors import ConfigError, ErgodicMFGError, LimitExceeded, NonConvergence
from .grid import ControlField, build_generator, validate_coefficients, write_generator_coo
from .primal import brute_force_primal, primal_objective, solve_mfg, write_trace_csv
from .stationary import read_node_csv, write_measure_csv, write_node_csv

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CERT, EXIT_LIMIT = 0, 2, 3, 4, 5

log = logging.getLogger("ergodic_mfg")


def _out_dir(cfg: ScenarioConfig, override: str | None) -> Path:
    if override:
        return Path(override)
    if cfg.output_dir is not None:
        return cfg.output_dir
    return Path("out") / cfg.name


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_solution(out: Path, cfg: ScenarioConfig, sol: SolutionTriple) -> None:
    out.mkdir(parents=True, exist_ok=True)
    arts = set(cfg.artifacts)
    if "q" in arts:
        write_measure_csv(out / "q.csv", sol.q)
    if "u" in arts:
        write_node_csv(out / "u.csv", cfg.grid, {"u": sol.u.values})
    if "alpha" in arts:
        vals = sol.field.values(cfg.controls)
        cols = {"index": sol.field.indices}
        cols.update({f"alpha{k + 1}": vals[:, k] for k in range(vals.shape[1])})
        write_node_csv(out / "alpha.csv", cfg.grid, cols)
    if "diagnostics" in arts and sol.diagnostics is not None:
        _write_json(out / "diagnostics.json", sol.diagnostics.to_dict())
    if "trace" in arts:
        write_trace_csv(out / "trace.csv", sol.trace)


def _validate(cfg: ScenarioConfig) -> bool:
    rep = validate_coefficients(cfg.model, cfg.grid, cfg.controls)
    crep = validate_coupling(cfg.coupling, cfg.model, cfg.grid, cfg.controls)
    for r in (rep, crep):
        for line in r.summary().splitlines():
            log.info("%s", line)
    if not (rep.passed and crep.passed):
        for c in rep.failures() + crep.failures():
            msg = f"validation failed: {c.name} (margin {c.margin:.6g})"
            if c.witness_x is not None:
                msg += f" at x={list(c.witness_x)}, alpha={list(c.witness_alpha)}"
            if c.detail:
                msg += f": {c.detail}"
            print(msg, file=sys.stderr)
        return False
    return True


def cmd_run(path: str, out: str | None = None, dump_generator: bool = False) -> int:
    try:
        cfg = load_scenario(path)
        if not _validate(cfg):
            return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    odir = _out_dir(cfg, out)
    try:
        sol = solve_mfg(cfg.coupling, cfg.grid, cfg.model, cfg.controls, cfg.solver)
    except NonConvergence as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        if exc.solution is not None:
            write_solution(odir, cfg, exc.solution)
        return EXIT_SOLVER
    except ErgodicMFGError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_solution(odir, cfg, sol)
    if dump_generator:
        L = build_generator(cfg.grid, cfg.model, sol.field, cfg.controls, cfg.solver.scheme)
        write_generator_coo(L, odir / "generator.coo")
    d = sol.diagnostics
    print(f"{cfg.name}: c = {d.c:.12g}, iterations = {d.iterations}, verdict = {'pass' if d.verdict else 'fail'}")
    if not d.verdict:
        for f in d.failures:
            print(f"certification failed: {f}", file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


def cmd_oracle(path: str, out: str | None = None) -> int:
    try:
        cfg = load_scenario(path)
        if not _validate(cfg):
            return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    s = cfg.solver
    try:
        fld, _, obj = brute_force_primal(
            cfg.coupling, cfg.grid, cfg.model, cfg.controls, (s.oracle_max_nodes, s.oracle_max_controls), s.scheme
        )
    except LimitExceeded as exc:
        print(f"oracle limit: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except ErgodicMFGError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    odir = _out_dir(cfg, out)
    odir.mkdir(parents=True, exist_ok=True)
    doc = {"objective": obj, "field": fld.indices.tolist()}
    alpha_csv = odir / "alpha.csv"
    if alpha_csv.exists():
        points, cols = read_node_csv(alpha_csv)
        if points.shape == cfg.grid.points.shape and np.array_equal(points, cfg.grid.points):
            solved = ControlField(cols["index"].astype(np.int64), len(cfg.controls))
            solved_obj = primal_objective(solved, cfg.coupling, cfg.grid, cfg.model, cfg.controls, s.scheme)
            doc["comparison"] = {"objective_gap": abs(solved_obj - obj), "fields_equal": solved == fld}
        else:
            log.warning("existing alpha.csv does not match the scenario grid; comparison skipped")
    _write_json(odir / "oracle.json", doc)
    print(f"{cfg.name}: oracle objective = {obj:.12g}, field = {fld.indices.tolist()}")
    return EXIT_OK


def cmd_check_monotonicity(path: str, out: str | None = None) -> int:
    try:
        cfg = load_scenario(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    c2 = check_C2(cfg.coupling, cfg.grid, cfg.controls)
    ll = check_lasry_lions(cfg.coupling, cfg.grid, cfg.controls)
    doc = compare_monotonicity(c2, ll)
    odir = _out_dir(cfg, out)
    odir.mkdir(parents=True, exist_ok=True)
    _write_json(odir / "monotonicity.json", doc)
    print(f"{cfg.name}: C2 {doc['C2']['verdict']}, M' {doc['lasry_lions']['verdict']}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "oracle": cmd_oracle, "check-monotonicity": cmd_check_monotonicity}


def _dispatch(command: str, path: str, out: str | None, dump_generator: bool = False) -> int:
    if command == "run":
        return cmd_run(path, out, dump_generator)
    return COMMANDS[command](path, out)


def _job(args):
    command, path, out, dump, level = args
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return _dispatch(command, path, out, dump)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="scenario TOML file, or a directory of them")
    common.add_argument("--out", metavar="DIR", help="output directory (default: outputs.directory or out/<name>)")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel scenarios when CONFIG is a directory")
    common.add_argument("--log-level", choices=["info", "debug"], default="info")

    p = argparse.ArgumentParser(prog="ergodic-mfg", description="Ergodic mean-field game solver and certifier")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="validate, solve and certify a scenario")
    run.add_argument("--dump-generator", action="store_true", help="also write generator.coo")
    sub.add_parser("oracle", parents=[common], help="brute-force the primal problem on a tiny grid")
    sub.add_parser("check-monotonicity", parents=[common], help="sample the C2 and Lasry-Lions conditions")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.log_level == "debug" else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    dump = getattr(args, "dump_generator", False)
    target = Path(args.config)
    if not target.is_dir():
        return _dispatch(args.command, str(target), args.out, dump)

    files = sorted(target.glob("*.toml"))
    if not files:
        print(f"config error: no *.toml files in {target}", file=sys.stderr)
        return EXIT_CONFIG
    jobs = [
        (args.command, str(f), str(Path(args.out) / f.stem) if args.out else None, dump, level) for f in files
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_job, jobs))
    else:
        codes = [_dispatch(*j[:4]) for j in jobs]
    for f, code in zip(files, codes):
        print(f"{f.name}: exit {code}")
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
