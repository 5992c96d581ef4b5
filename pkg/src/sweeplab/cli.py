"""Command line entry point ``sweep``.

Exit codes: 0 when everything passes (or fails as expected), 1 on an
unexpected failure, 2 on usage or configuration errors."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import CatalogEntry, catalog, catalog_entry
from .desing import DesingularizationError, build_map, verify_desingularized
from .dynamics import catching_up, orbit_from_sequence
from .emit import EmitError, emit, report_json
from .field_expr import FieldDomainError, FieldSyntaxError
from .process import ProcessError, SweepingProcess, process_from_dict
from .suite import SUITES, SuiteConfig, run_suite
from .talweg import CriticalValueError, integrate_talweg, sample_decided, talweg_at

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class Resolved:
    process: SweepingProcess
    entry: CatalogEntry | None

    @property
    def name(self) -> str:
        return self.entry.name if self.entry else (self.process.name or "custom")

    def window(self, a: float | None, b: float | None) -> tuple[float, float]:
        if a is None or b is None:
            if self.entry is None:
                raise UsageError("--a and --b are required for processes outside the catalog")
            a = self.entry.window[0] if a is None else a
            b = self.entry.window[1] if b is None else b
        if not a < b:
            raise UsageError(f"empty window [{a}, {b}]")
        return float(a), float(b)

    @property
    def per_level(self) -> int:
        return self.entry.per_level if self.entry else 16


def resolve_process(ref: str) -> Resolved:
    """Catalog name or path to a process JSON file."""
    path = Path(ref)
    if ref.endswith(".json") or path.is_file():
        try:
            spec = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read {ref}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{ref}: invalid JSON: {exc}") from None
        if not isinstance(spec, dict):
            raise UsageError(f"{ref}: expected a JSON object")
        return Resolved(process_from_dict(spec), None)
    try:
        entry = catalog_entry(ref)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    return Resolved(entry.build(), entry)


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"cannot parse point {text!r}; expected v1,v2,...") from None


def cmd_catalog(args) -> int:
    entries = catalog()
    if args.json:
        print(json.dumps([e.summary() for e in entries], sort_keys=True, indent=2))
        return EXIT_OK
    for e in entries:
        tags = f" [{', '.join(e.tags)}]" if e.tags else ""
        print(f"{e.name:22s} {e.spec['kind']:14s} window [{e.window[0]:g}, {e.window[1]:g}]  {e.verdict}{tags}")
        print(f"{'':22s} {e.description}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    res = resolve_process(args.process)
    t0, t1 = res.window(args.t0, args.t1)
    S = res.process
    x0 = _floats(args.x0) if args.x0 else talweg_at(S, t0).point
    if x0.shape != (S.dim,):
        raise UsageError(f"--x0 needs {S.dim} coordinates, got {x0.size}")
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    seq = catching_up(S, t0, t1, args.steps, x0)
    status = EXIT_OK
    if seq.error:
        print(f"catching-up stopped at t = {seq.times[-1]:.17g}: {seq.error}", file=sys.stderr)
        status = EXIT_FAIL
    obj = seq if args.table == "sequence" or seq.error or len(seq.times) < 2 else orbit_from_sequence(seq)
    if args.out:
        emit(obj, args.out, args.format, process=S)
    print(f"{res.name}: {len(seq.times) - 1} steps on [{t0:g}, {seq.times[-1]:g}], length {seq.length:.17g}")
    return status


def cmd_talweg(args) -> int:
    res = resolve_process(args.process)
    a, b = res.window(args.a, args.b)
    table = sample_decided(res.process, a, b, args.nodes, args.m, per_level=res.per_level)
    if args.out:
        emit(table, args.out, args.format)
    try:
        integral = integrate_talweg(table, a, b)
    except CriticalValueError as exc:
        print(f"{res.name}: {exc}")
        return EXIT_FAIL
    print(f"{res.name}: {len(table)} nodes on [{a:g}, {b:g}], integral {integral.value:.17g}, "
          f"verdict {integral.verdict}")
    return EXIT_OK


def cmd_desingularize(args) -> int:
    res = resolve_process(args.process)
    a, b = res.window(args.a, args.b)
    table = sample_decided(res.process, a, b, args.nodes, args.m, per_level=res.per_level)
    try:
        dmap = build_map(res.process, a, b, args.nodes, m=args.m, table=table)
    except (DesingularizationError, CriticalValueError) as exc:
        print(f"{res.name}: {exc}")
        return EXIT_FAIL
    if args.out:
        emit(dmap, args.out, args.format)
    check = verify_desingularized(res.process, dmap, m=args.m)
    print(f"{res.name}: rho {dmap.rho:.17g}, max Psi' * modulus {check.max_value:.17g} "
          f"({'pass' if check.passed else 'fail'})")
    return EXIT_OK if check.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    cfg = SuiteConfig(suite=args.suite, seed=args.seed)
    if args.process == "all":
        if args.a is not None or args.b is not None:
            raise UsageError("--a/--b cannot be combined with --process all")
        reports = [run_suite(e, config=cfg) for e in catalog()]
    else:
        res = resolve_process(args.process)
        a, b = res.window(args.a, args.b)
        reports = [run_suite(res.entry or res.process, a, b, cfg)]
    for r in reports:
        print(f"{r.process} [{r.window[0]:g}, {r.window[1]:g}]: {r.verdict}")
        for c in r.checks:
            print(f"  {c.id:15s} {c.status}")
    if args.report:
        text = report_json(reports[0] if args.process != "all" else reports)
        try:
            Path(args.report).write_text(text, encoding="utf-8", newline="")
        except OSError as exc:
            raise EmitError(f"cannot write {args.report}: {exc.strerror or exc}") from exc
    return EXIT_FAIL if any(r.first_failure for r in reports) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sweep", description="Sweeping-process talweg and desingularization toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("catalog", help="list builtin processes")
    c.add_argument("--json", action="store_true", help="print descriptors as JSON")
    c.set_defaults(func=cmd_catalog)

    def process_arg(q):
        q.add_argument("--process", required=True, help="catalog name or process JSON file")

    s = sub.add_parser("simulate", help="run a catching-up sequence")
    process_arg(s)
    s.add_argument("--t0", type=float)
    s.add_argument("--t1", type=float)
    s.add_argument("--steps", type=int, default=1024)
    s.add_argument("--x0", help="start point v1,v2,... (default: talweg argmax at t0)")
    s.add_argument("--table", choices=("orbit", "sequence"), default="orbit")
    s.add_argument("--format", choices=("csv", "svg-polyline"), default="csv")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    for name, func, helptext in (("talweg", cmd_talweg, "sample the oriented talweg"),
                                 ("desingularize", cmd_desingularize, "build the reparametrization Psi")):
        q = sub.add_parser(name, help=helptext)
        process_arg(q)
        q.add_argument("--a", type=float)
        q.add_argument("--b", type=float)
        q.add_argument("--nodes", type=int, default=65)
        q.add_argument("--m", type=int, default=64, help="boundary samples per slice")
        q.add_argument("--format", choices=("csv", "svg-polyline"), default="csv")
        q.add_argument("--out")
        q.set_defaults(func=func)

    v = sub.add_parser("verify", help="run the verification suite")
    v.add_argument("--process", required=True, help="catalog name, process JSON file, or 'all'")
    v.add_argument("--a", type=float)
    v.add_argument("--b", type=float)
    v.add_argument("--suite", choices=tuple(SUITES), default="all")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--report")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ProcessError, FieldSyntaxError, FieldDomainError, EmitError, ValueError) as exc:
        print(f"sweep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
