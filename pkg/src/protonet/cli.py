"""Command line: ``protonet validate|analyze|run``.

Exit codes: 0 ok / accepted / all adopters completed, 1 invalid / rejected /
some adopter did not complete, 2 unreadable input or bad configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .analyzer import analyze, malformed_report
from .errors import ConfigError, ProtonetError
from .policy import AccessControlList, AnalysisContext, Manifest, templates_from_json
from .scenario import run_scenario
from .structure import validate_structure
from .wire import parse_protocol, to_dot

log = logging.getLogger("protonet")


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise FileNotFoundError(f"{path}: {e.strerror}") from None


def _config(path: str | None, default):
    if path is None:
        return default
    try:
        return json.loads(_read(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None


def cmd_validate(args) -> int:
    try:
        net = parse_protocol(_read(args.file))
    except ProtonetError as e:
        print(f"{type(e).__name__}: {e}")
        return 1
    violations = validate_structure(net)
    for v in violations:
        print(v.render())
    if args.dot:
        Path(args.dot).write_text(to_dot(net), encoding="utf-8")
    if violations:
        return 1
    print("ok")
    return 0


def cmd_analyze(args) -> int:
    acl = AccessControlList.from_json(_config(args.acl, {}))
    templates = templates_from_json(_config(args.templates, []))
    manifest = Manifest.from_json(_config(args.manifest, {}))
    doc = _read(args.file)
    try:
        net = parse_protocol(doc)
    except ProtonetError as e:
        log.info("malformed protocol: %s", e)
        report = malformed_report()
    else:
        report = analyze(net, AnalysisContext(manifest, acl, tuple(templates), args.author))
    sys.stdout.write(report.render())
    return 0 if report.verdict.accepted else 1


def cmd_run(args) -> int:
    transport = "tcp" if args.tcp else args.transport
    _, code = run_scenario(args.scenario, transport, args.trace)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="protonet", description="Check and run Petri-net interaction protocols.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="parse a protocol and list structural violations")
    v.add_argument("file")
    v.add_argument("--dot", metavar="OUT", help="also write a Graphviz rendering")
    v.set_defaults(func=cmd_validate)

    a = sub.add_parser("analyze", help="run the safety analysis and print the report")
    a.add_argument("file")
    a.add_argument("--acl", help="access control list JSON (default: deny all)")
    a.add_argument("--templates", help="action templates JSON list")
    a.add_argument("--manifest", help="host functions/variables JSON")
    a.add_argument("--author", default="*", help="agent that supplied the protocol")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("run", help="run a multi-agent scenario")
    r.add_argument("scenario")
    r.add_argument("--trace", required=True, metavar="OUT", help="JSON Lines trace output")
    r.add_argument("--transport", choices=("memory", "tcp"), default="memory")
    r.add_argument("--tcp", action="store_true", help="shorthand for --transport tcp")
    r.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    level = os.environ.get("PROTONET_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
