"""Command line entry point: ``mcflab run|check|sweep``.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from . import __version__, acceptance, store
from .config import ConfigError, ExperimentConfig, load_schema
from .runner import resolve_output, run

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
STATUS_CODES = {"pass": EXIT_OK, "fail": EXIT_FAIL, "error": EXIT_RUNTIME}

log = logging.getLogger("mcflab")


def _report_config_error(exc: ConfigError) -> int:
    for pointer, msg in exc.errors:
        print(f"config error at {pointer}: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def _summarize(manifest: dict, out) -> None:
    print(f"{manifest['experiment']}: {manifest['status']} ({manifest['wall_seconds']:.1f} s) -> {out}")
    for c in manifest.get("checks", []):
        tag = "PASS" if c["pass"] else "FAIL"
        if not c.get("applicable", True):
            tag = "INFO"
        margin = c["margin"]
        m = f"{margin:.3g}" if isinstance(margin, float) else str(margin)
        print(f"  {tag} {c['check']}: margin={m}")
    if manifest.get("error"):
        print(f"  error: {manifest['error']}", file=sys.stderr)


def cmd_run(args, expect_sweep: bool = False) -> int:
    try:
        load_schema()
        cfg = ExperimentConfig.load(args.config)
        if expect_sweep and cfg.experiment != "sweep":
            raise ConfigError([("/experiment", "the sweep command needs experiment = 'sweep'")])
        out = resolve_output(cfg)
        manifest = run(cfg, out)
    except ConfigError as exc:
        return _report_config_error(exc)
    _summarize(manifest, out)
    return STATUS_CODES[manifest["status"]]


def cmd_check(args) -> int:
    t0 = time.perf_counter()
    try:
        results = acceptance.run_suite(args.suite)
    except Exception as exc:  # pragma: no cover - run_suite already traps per-criterion errors
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    wall = time.perf_counter() - t0
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} criteria passed in {wall:.1f} s")
    out = store.output_root() / f"check_{args.suite}"
    store.write_json(out / "summary.json", {"suite": args.suite, "version": __version__, "wall_seconds": wall,
                                            "criteria": [r.to_dict() for r in results]})
    return EXIT_OK if n_ok == len(results) else EXIT_FAIL


def cmd_schema(args) -> int:
    print(json.dumps(load_schema(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcflab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("config")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", help="run the acceptance battery")
    c.add_argument("suite", choices=sorted(acceptance.SUITES))
    c.set_defaults(func=cmd_check)
    s = sub.add_parser("sweep", help="run a parameter sweep config")
    s.add_argument("config")
    s.set_defaults(func=lambda a: cmd_run(a, expect_sweep=True))
    sc = sub.add_parser("schema", help="print the configuration JSON schema")
    sc.set_defaults(func=cmd_schema)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse usage errors are configuration errors
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
