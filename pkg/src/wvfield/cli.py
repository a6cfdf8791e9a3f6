"""Command-line runner: ``wvfield run|sweep|list-scenarios|validate``."""

from __future__ import annotations

import argparse
import sys

from .exceptions import ConfigError
from .scenarios import SCHEMAS, ScenarioFailure, load_config, run, sweep

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_updates(seed=args.seed)
    return cfg


def _report(manifest, out):
    print(f"{manifest.config['kind']}: {manifest.status}")
    for key, value in manifest.summary.items():
        print(f"  {key} = {value}")
    print(f"  manifest: {out}")
    return EXIT_PASS if manifest.passed else EXIT_FAIL


def _cmd_run(args):
    cfg = _load(args)
    m = run(cfg, args.out_dir)
    from .scenarios import resolve_output_dir
    return _report(m, resolve_output_dir(cfg, args.out_dir) / "manifest.json")


def _cmd_sweep(args):
    cfg = _load(args)
    values = [v for v in (s.strip() for s in args.values.split(",")) if v]
    m = sweep(cfg, args.param, values, args.out_dir)
    from .scenarios import resolve_output_dir
    return _report(m, resolve_output_dir(cfg, args.out_dir) / "manifest.json")


def _cmd_list(args):
    for kind, schema in SCHEMAS.items():
        print(kind)
        for key, (typ, default) in schema.items():
            print(f"    {key} ({typ.__name__}) = {default!r}")
    return EXIT_PASS


def _cmd_validate(args):
    cfg = _load(args)
    print(f"{args.config}: valid {cfg.kind} scenario")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wvfield", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="scenario configuration file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out-dir", default=None,
                       help="output directory (default: config, then $WVFIELD_OUT/<kind>)")

    p = sub.add_parser("run", help="run one scenario")
    common(p)
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("sweep", help="run a scenario over a list of parameter values")
    common(p)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=_cmd_sweep)
    p = sub.add_parser("list-scenarios", help="list scenario kinds and parameters")
    p.set_defaults(func=_cmd_list)
    p = sub.add_parser("validate", help="parse and check a configuration")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
