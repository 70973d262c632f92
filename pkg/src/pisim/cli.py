"""Command-line entry point.

Exit codes: 0 success, 1 acceptance mismatch, 2 usage error (including an
unknown scenario or an invalid spec file).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

from .device import PlatformPolicy
from .errors import CorruptFile, InvalidSpec, UnknownScenario
from .mechanisms import build_property_matrix, load_fixture
from .pending_intent import Mutability
from .probes import run_mechanism_probes
from .registry import Registry
from .report import emit_report, render_table1, render_table3
from .scenarios import CATALOG, ScenarioSpec, run_scenario

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2

PLATFORMS = {"android14": PlatformPolicy.ANDROID_14, "android15": PlatformPolicy.ANDROID_15_MASKING}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits on error by default; main() turns this into exit code 2
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pisim", description="PendingIntent provenance-confusion simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one catalog scenario")
    run.add_argument("scenario")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--platform", choices=sorted(PLATFORMS))
    run.add_argument("--mutability", choices=[m.value.lower() for m in Mutability])
    run.add_argument("--spec", type=Path, help="JSON file overriding trials/seed/platform/mutability")
    run.add_argument("--format", choices=["json", "md"], default="json")
    run.add_argument("--out", type=Path)

    mx = sub.add_parser("matrix", help="derive the mechanism/property matrix and compare to a fixture")
    mx.add_argument("--fixture", type=Path)
    mx.add_argument("--seed", type=int, default=1)

    t3 = sub.add_parser("table3", help="run both attack-success rows")
    t3.add_argument("--trials", type=int, default=50)
    t3.add_argument("--seed", type=int, default=1)

    sr = sub.add_parser("serve-registry", help="serve the partner registry over HTTP")
    sr.add_argument("--port", type=int, required=True)
    sr.add_argument("--db", type=Path, required=True)
    sr.add_argument("--provider-credential-file", type=Path, required=True)
    sr.add_argument("--host", default="127.0.0.1")

    sub.add_parser("list", help="list catalog scenarios")
    return p


def _load_spec_file(path: Path) -> dict[str, Any]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidSpec(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidSpec(f"{path}: expected a JSON object")
    unknown = set(doc) - {"trials", "seed", "platform", "mutability"}
    if unknown:
        raise InvalidSpec(f"{path}: unsupported keys {sorted(unknown)}")
    return doc


def make_spec(args: argparse.Namespace) -> ScenarioSpec:
    spec = ScenarioSpec(args.scenario)
    overrides: dict[str, Any] = _load_spec_file(args.spec) if args.spec else {}
    # command-line flags win over the spec file
    for key in ("trials", "seed", "platform", "mutability"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    try:
        if "platform" in overrides:
            overrides["platform"] = PLATFORMS[overrides["platform"]]
        if "mutability" in overrides:
            overrides["mutability"] = Mutability(str(overrides["mutability"]).upper())
    except (KeyError, ValueError) as exc:
        raise InvalidSpec(f"bad value: {exc}") from exc
    return replace(spec, **overrides)


def cmd_run(args: argparse.Namespace) -> int:
    report = run_scenario(make_spec(args))
    emit_report(report, args.format, args.out)
    return EXIT_OK if report.passed else EXIT_MISMATCH


def cmd_matrix(args: argparse.Namespace) -> int:
    fixture = load_fixture(args.fixture)
    outcomes, _, _ = run_mechanism_probes(args.seed)
    matrix = build_property_matrix(outcomes)
    sys.stdout.write(render_table1(matrix))
    diff = matrix.diff(fixture)
    for line in diff:
        print(f"MISMATCH {line}", file=sys.stderr)
    return EXIT_MISMATCH if diff else EXIT_OK


def cmd_table3(args: argparse.Namespace) -> int:
    vuln = run_scenario(ScenarioSpec("table3_vulnerable", args.trials, args.seed))
    sec = run_scenario(ScenarioSpec("table3_secure", args.trials, args.seed))
    sys.stdout.write(render_table3([vuln, sec]))
    ok = vuln.successes == vuln.trials and sec.successes == 0 and vuln.passed and sec.passed
    return EXIT_OK if ok else EXIT_MISMATCH


def cmd_serve_registry(args: argparse.Namespace) -> int:
    from .registry_http import make_server, wall_clock_ms

    credential = args.provider_credential_file.read_text(encoding="utf-8").strip()
    if not credential:
        raise InvalidSpec(f"{args.provider_credential_file}: empty credential")
    if args.db.exists():
        registry = Registry.load(args.db, credential, wall_clock_ms)
    else:
        registry = Registry(credential, wall_clock_ms)
    server = make_server(registry, args.host, args.port, args.db)
    server.persist()
    print(f"registry listening on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_list(args: argparse.Namespace) -> int:
    for name in CATALOG:
        print(name)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "matrix": cmd_matrix,
    "table3": cmd_table3,
    "serve-registry": cmd_serve_registry,
    "list": cmd_list,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except UnknownScenario as exc:
        print(f"unknown scenario: {exc}; try `pisim list`", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidSpec, CorruptFile, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
