"""Command line entry point: ``lcbvm {run,geometry,selftest,list-models}``.

Exit codes: 0 on success, 1 on a configuration error (missing file, bad JSON,
invalid fields), 2 on a numerical failure (including any failed row or
acceptance criterion).
"""
import argparse
import json
import sys

from .errors import ConfigError, NumericalError
from .harness import _json_clean, emit_outputs, load_config, regime_report, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _cmd_run(args):
    config = load_config(args.config)
    rows, summary = run_experiment(config, threads=args.threads)
    out_dir = args.out or config.output_dir
    if out_dir:
        paths = emit_outputs(rows, summary, out_dir)
        print(f"wrote {paths['rows']}, {paths['summary']}, {paths['plot']}")
    for p in summary["per_n"]:
        print(f"n={p['n']:>6}  median_tv={p['median_tv']:.4g}  iqr=[{p['q25']:.4g}, {p['q75']:.4g}]")
    print(f"trend verdict: {summary['trend']['verdict']}")
    for err in summary["errors"]:
        print(f"error: {err}", file=sys.stderr)
    return EXIT_NUMERIC if summary["partial"] else EXIT_OK


def _cmd_geometry(args):
    report = regime_report(load_config(args.config))
    print(json.dumps(_json_clean(report), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_selftest(args):
    from .acceptance import run_all
    results = run_all(args.criteria or None)
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def _cmd_list_models(args):
    from .models import builtin_models
    for name, doc in sorted(builtin_models().items()):
        print(f"{name}: {doc}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="lcbvm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="sweep n and seeds for a config and report TV")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: config output.dir)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: LCBVM_THREADS or 1)")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("geometry", help="print the regime and cone geometry dossier")
    p.add_argument("config")
    p.set_defaults(func=_cmd_geometry)
    p = sub.add_parser("selftest", help="run the acceptance suite")
    p.add_argument("--criteria", type=int, nargs="*", help="subset of criterion numbers")
    p.set_defaults(func=_cmd_selftest)
    p = sub.add_parser("list-models", help="list catalog model ids")
    p.set_defaults(func=_cmd_list_models)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
