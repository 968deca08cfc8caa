"""Command-line interface: ``reptoolkit {validate|analyze|ot|order|simulate|examples}``.

Every command writes one JSON document.  Exit codes: 0 ok, 1 domain
failure, 2 input error, 3 scope limit.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

from reptoolkit import __version__
from reptoolkit.errors import DomainError, GameError, ScopeLimitError, SimulationError
from reptoolkit.mechanism_order import orderable
from reptoolkit.reputation import analyze
from reptoolkit.scenarios import BUILTINS, Scenario, builtin, parse_ot, parse_scenario
from reptoolkit.simulator import ScenarioConfig, simulate, summarize
from reptoolkit.stage_game import validate_game
from reptoolkit.tolerances import get_tolerances, override_tolerances
from reptoolkit.transport import brute_force_ot, check_dual_certificate, solve_ot

EXIT_OK, EXIT_DOMAIN, EXIT_INPUT, EXIT_SCOPE = 0, 1, 2, 3
BRUTE_FORCE_CELLS = 16


class _Exit(Exception):
    def __init__(self, code: int, report: dict):
        super().__init__(code)
        self.code = code
        self.report = report


def load_schema() -> dict:
    """The published JSON schema for report documents."""
    from importlib import resources

    return json.loads(resources.files("reptoolkit").joinpath("schema/report.schema.json").read_text("utf-8"))


# JSON output


def _fmt_float(x: float) -> str | None:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return None


def dumps(obj: Any, indent: int = 2) -> str:
    """Serialize with floats at 17 significant digits; infinities become strings."""
    out: list[str] = []

    def emit(o, depth):
        pad = " " * (indent * (depth + 1))
        end = " " * (indent * depth)
        if o is None or isinstance(o, (bool, np.bool_)):
            out.append(json.dumps(None if o is None else bool(o)))
        elif isinstance(o, (int, np.integer)):
            out.append(str(int(o)))
        elif isinstance(o, (float, np.floating)):
            x = float(o)
            special = _fmt_float(x)
            out.append(special if special is not None else format(x, ".17g"))
        elif isinstance(o, str):
            out.append(json.dumps(o, ensure_ascii=False))
        elif isinstance(o, dict):
            if not o:
                out.append("{}")
                return
            out.append("{\n")
            for k, (key, val) in enumerate(o.items()):
                out.append(f"{pad}{json.dumps(str(key), ensure_ascii=False)}: ")
                emit(val, depth + 1)
                out.append(",\n" if k < len(o) - 1 else "\n")
            out.append(end + "}")
        elif isinstance(o, (list, tuple, np.ndarray)):
            seq = list(o)
            if not seq:
                out.append("[]")
                return
            out.append("[\n")
            for k, val in enumerate(seq):
                out.append(pad)
                emit(val, depth + 1)
                out.append(",\n" if k < len(seq) - 1 else "\n")
            out.append(end + "]")
        else:
            raise TypeError(f"cannot serialize {type(o).__name__}")

    emit(obj, 0)
    return "".join(out) + "\n"


def _write(doc: dict, out: str | None) -> None:
    text = dumps(doc)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# helpers


def _load(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise GameError(f"cannot read {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameError(f"{path} is not valid JSON: {exc}") from None


def _scenario(path: str | None) -> Scenario:
    if path is None:
        raise GameError("a scenario path is required")
    return parse_scenario(_load(path))


def _provenance(command: str, sc: Scenario | None, **extra) -> dict:
    doc = {
        "tool": "reptoolkit",
        "version": __version__,
        "command": command,
        "scenario": None if sc is None else sc.name,
        "tolerances": get_tolerances().as_dict(),
    }
    doc.update(extra)
    return doc


def _with_tolerances(sc: Scenario):
    return override_tolerances(**sc.tolerances)


def _analysis(sc: Scenario, args, command: str) -> dict:
    """Validation, verdict and bounds; raises :class:`_Exit` on failure."""
    sc.require_game()
    validation = validate_game(sc.game)
    report: dict = {
        "command": command,
        "validation": validation.as_dict(),
    }
    prov = {"mode": args.mode, "grid": args.grid == "on"}
    if not validation.ok:
        report["error"] = "game fails the identification checks"
        report["provenance"] = _provenance(command, sc, **prov, scopes={})
        raise _Exit(EXIT_DOMAIN, report)
    try:
        verdict = analyze(sc.game, sc.types, sc.s1_star, args.mode, args.grid == "on")
    except ScopeLimitError as exc:
        report["error"] = f"scope limit: {exc}"
        report["provenance"] = _provenance(command, sc, **prov, scopes={})
        raise _Exit(EXIT_SCOPE, report) from None
    report["verdict"] = verdict.as_dict()
    report["bounds"] = dict(verdict.bounds)
    report["provenance"] = _provenance(command, sc, **prov, scopes=dict(verdict.scopes))
    return report


# commands


def cmd_validate(args) -> int:
    sc = _scenario(args.path)
    sc.require_game()
    with _with_tolerances(sc):
        rep = validate_game(sc.game)
        _write({"command": "validate", "validation": rep.as_dict(),
                "provenance": _provenance("validate", sc)}, args.out)
    return EXIT_OK if rep.ok else EXIT_DOMAIN


def cmd_analyze(args) -> int:
    sc = _scenario(args.path)
    with _with_tolerances(sc):
        _write(_analysis(sc, args, "analyze"), args.out)
    return EXIT_OK


def cmd_ot(args) -> int:
    src = args.path
    if src is None:
        raise GameError("ot needs a scenario path or inline JSON")
    if src.lstrip().startswith("{"):
        try:
            doc = json.loads(src)
        except json.JSONDecodeError as exc:
            raise GameError(f"inline JSON is invalid: {exc}") from None
    else:
        doc = _load(src)
    if isinstance(doc, dict) and "ot" in doc:
        sc = parse_scenario(doc)
        inst = sc.ot
    else:
        sc = None
        inst = parse_ot(doc)
    with override_tolerances(**(sc.tolerances if sc else {})):
        sol = solve_ot(inst)
        report = {"command": "ot", "ot": sol.as_dict(),
                  "dual_certificate": check_dual_certificate(inst, sol)}
        if inst.cost.size <= BRUTE_FORCE_CELLS:
            bf = brute_force_ot(inst)
            report["brute_force"] = {"value": bf.value, "vertices": len(bf.vertices), "optimal": len(bf.optimal),
                                     "unique": bf.unique}
        report["provenance"] = _provenance("ot", sc)
        _write(report, args.out)
    return EXIT_OK


def cmd_order(args) -> int:
    sc = _scenario(args.path)
    if sc.mechanism is None:
        raise GameError("scenario has no 'mechanism' section")
    with _with_tolerances(sc):
        cert = orderable(sc.mechanism)
        _write({"command": "order", "mechanism": sc.mechanism.as_dict(), "certificate": cert.as_dict(),
                "provenance": _provenance("order", sc)}, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args.path)
    with _with_tolerances(sc):
        report = _analysis(sc, args, "simulate")
        params = dict(sc.simulate or {})
        if args.seed is not None:
            params["seed"] = args.seed
        if args.runs is not None:
            params["runs"] = args.runs
        cfg = ScenarioConfig(sc.game, sc.types, sc.s1_star, **params)
        try:
            sim = simulate(cfg)
        except SimulationError as exc:
            report["error"] = f"simulation failed: {exc}"
            raise _Exit(EXIT_DOMAIN, report) from None
        report["simulation"] = summarize(sim, report["bounds"])
        report["provenance"]["seed"] = cfg.seed
        _write(report, args.out)
    return EXIT_OK


def cmd_examples(args) -> int:
    if args.path is None:
        if args.out:
            target = Path(args.out)
            target.mkdir(parents=True, exist_ok=True)
            for name in BUILTINS:
                (target / f"{name}.json").write_text(dumps(builtin(name)), encoding="utf-8")
        else:
            sys.stdout.write("".join(f"{n}\t{d.get('description', '')}\n" for n, d in BUILTINS.items()))
        return EXIT_OK
    _write(builtin(args.path), args.out)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "ot": cmd_ot,
    "order": cmd_order,
    "simulate": cmd_simulate,
    "examples": cmd_examples,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reptoolkit", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("path", nargs="?", help="scenario file (or inline JSON for 'ot'; example name for 'examples')")
    p.add_argument("--mode", choices=("exact-pure", "conservative"), default="exact-pure")
    p.add_argument("--grid", choices=("on", "off"), default="off")
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--out", help="output file (a directory for 'examples' without a name)")
    p.add_argument("--version", action="version", version=f"reptoolkit {__version__}")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except _Exit as exc:
        _write(exc.report, args.out)
        return exc.code
    except GameError as exc:
        print(f"reptoolkit: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"reptoolkit: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ScopeLimitError as exc:
        print(f"reptoolkit: scope limit: {exc}", file=sys.stderr)
        return EXIT_SCOPE
    except SimulationError as exc:
        print(f"reptoolkit: simulation failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
