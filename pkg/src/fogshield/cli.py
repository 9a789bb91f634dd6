"""Command-line experiment driver.

Subcommands: run, compare, gen-trace, lint-rules, replay-resources.
Exit codes: 0 success, 1 usage/config error, 2 runtime stage failure.
"""

import argparse
import json
import os
import sys

from . import firewall as fw
from . import ruledsl
from .config import ConfigError, PRESETS, load_config, resolve_preset
from .metrics import ReplayProbe, render_table_csv, render_table_text
from .model import ConfigurationError, write_trace
from .runner import StageError, compare_runs, emit_report, run_scenario
from .traffic import generate_trace

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def _load(target, seed_override=None):
    if os.path.exists(target):
        path = target
    else:
        path = resolve_preset(target)
    config = load_config(path)
    if seed_override is not None:
        import dataclasses
        traffic = dataclasses.replace(config.traffic, seed=seed_override)
        config = dataclasses.replace(config, traffic=traffic, seed=seed_override)
    return config


def _cmd_run(args):
    config = _load(args.config, args.seed)
    report = run_scenario(config, serial=args.serial,
                          sample_resources=not args.no_resources)
    out_dir = args.out or ("out-%s" % config.name)
    written = emit_report(report, out_dir, fmt=args.format)
    if not args.quiet:
        det = report["detection"]
        mit = report["mitigation"]
        print("scenario %s: forwarded %d/%d (PDR %s), "
              "detection_rate %s, mitigation_rate %s"
              % (config.name, report["filter"]["forwarded"],
                 report["filter"]["total"],
                 _pct(report["filter"]["packet_delivery_ratio"]),
                 _pct(det["detection_rate"]), _pct(mit["mitigation_rate"])))
        for path in written:
            print("wrote %s" % path)
    return EXIT_OK


def _pct(value):
    if isinstance(value, (int, float)):
        return "%.2f%%" % (100.0 * value)
    return str(value)


def _cmd_compare(args):
    reports = []
    for path in args.reports:
        with open(path) as fh:
            reports.append(json.load(fh))
    result = compare_runs(reports)
    if args.format == "csv":
        text = render_table_csv(result["table"])
    elif args.format == "text":
        text = render_table_text(result["table"])
    else:
        text = json.dumps(result, sort_keys=True, indent=2, default=str) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        ext = {"json": "json", "csv": "csv", "text": "txt"}[args.format]
        path = os.path.join(args.out, "comparison.%s" % ext)
        with open(path, "w") as fh:
            fh.write(text)
        if not args.quiet:
            print("wrote %s" % path)
    elif not args.quiet:
        sys.stdout.write(text)
    if not args.quiet:
        scal = result["scalability"]
        print("scalability (detection): %s pct-points/device"
              % scal["detection_rate_pct_per_device"])
        print("scalability (mitigation): %s pct-points/device"
              % scal["mitigation_rate_pct_per_device"])
    return EXIT_OK


def _cmd_gen_trace(args):
    config = _load(args.config, args.seed)
    trace = generate_trace(config.traffic, config.flood)
    out = args.out or ("%s.trace" % config.name)
    write_trace(trace, out)
    if not args.quiet:
        print("wrote %d packets to %s" % (len(trace), out))
    return EXIT_OK


def _cmd_lint_rules(args):
    with open(args.rules) as fh:
        text = fh.read()
    if args.kind == "firewall":
        rules = fw.parse_firewall_ruleset(text)
    else:
        rules = ruledsl.parse_ruleset(text)
    if not args.quiet:
        print("%s: %d rules OK" % (args.rules, len(rules)))
    return EXIT_OK


def _cmd_replay_resources(args):
    probe = ReplayProbe(args.samples)
    for sample in probe.samples:
        print("t=%.3f cpu=%.2f%% mem=%.2f%%"
              % (sample.wall_timestamp_s, sample.cpu_percent,
                 sample.memory_percent))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fogshield",
        description="Three-layer SYN-flood detection and mitigation simulator.")
    parser.add_argument("--quiet", action="store_true", help="suppress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario (preset name or path)")
    p_run.add_argument("config",
                       help="config file path or preset: %s" % ", ".join(PRESETS))
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--format", choices=("json", "csv", "text"),
                       default="json")
    p_run.add_argument("--serial", action="store_true", default=True,
                       help="analyze fog nodes sequentially (default)")
    p_run.add_argument("--parallel", dest="serial", action="store_false",
                       help="analyze fog nodes in parallel")
    p_run.add_argument("--no-resources", action="store_true",
                       help="disable host resource sampling")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="compare persisted run reports")
    p_cmp.add_argument("reports", nargs="+")
    p_cmp.add_argument("--out", default=None)
    p_cmp.add_argument("--format", choices=("json", "csv", "text"),
                       default="text")
    p_cmp.set_defaults(func=_cmd_compare)

    p_gen = sub.add_parser("gen-trace", help="generate a labeled trace file")
    p_gen.add_argument("config")
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--out", default=None)
    p_gen.set_defaults(func=_cmd_gen_trace)

    p_lint = sub.add_parser("lint-rules", help="parse-check a rule file")
    p_lint.add_argument("rules")
    p_lint.add_argument("--kind", choices=("firewall", "mitigation"),
                        default="mitigation")
    p_lint.set_defaults(func=_cmd_lint_rules)

    p_rep = sub.add_parser("replay-resources",
                           help="print a recorded resource sample file")
    p_rep.add_argument("samples")
    p_rep.set_defaults(func=_cmd_replay_resources)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, fw.RulesetParseError,
            ruledsl.RulesetParseError, ruledsl.RuleParseError,
            FileNotFoundError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (StageError, ValueError, ZeroDivisionError, OSError) as exc:
        print("runtime error: %s" % exc, file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
