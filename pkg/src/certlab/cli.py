"""Command line entry point: ``certlab simulate | verify | figure``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from certlab.errors import CertlabError, ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3


def _write(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _cmd_simulate(args) -> int:
    from certlab import harness

    config = harness.load_config(args.config)
    if args.master_seed is not None:
        config = dataclasses.replace(config, master_seed=args.master_seed)
    records = harness.simulate(config, args.threads)
    if args.raw:
        _write(harness.records_to_csv(config, records), args.out)
        return EXIT_OK
    rows = harness.aggregate(config, records)
    text = harness.rows_to_csv(rows) if args.format == "csv" else harness.rows_to_json(rows)
    _write(text, args.out)
    return EXIT_OK


def _cmd_verify(args) -> int:
    from certlab import verification

    if args.instance:
        try:
            data = json.loads(Path(args.instance).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{args.instance}: {exc}") from None
        instance = verification.EnumInstance.from_dict(data)
        reports = verification.instance_reports(instance)
    else:
        reports = verification.default_reports(quick=not args.full)
    json.dump([r.to_dict() for r in reports], sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY


def _cmd_figure(args) -> int:
    from certlab import harness

    presets = harness.figure_presets()
    if args.name not in presets:
        raise ConfigError(f"unknown figure {args.name!r}; expected one of {', '.join(presets)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    raw_parts = []
    for cfg in presets[args.name]:
        if args.master_seed is not None:
            cfg = dataclasses.replace(cfg, master_seed=args.master_seed)
        records = harness.simulate(cfg, args.threads)
        rows.extend(harness.aggregate(cfg, records))
        if args.name == "fig_box" or args.raw:
            raw_parts.append(harness.records_to_csv(cfg, records))
    path = harness.export(rows, out / f"{args.name}.csv")
    if raw_parts:
        header, *_ = raw_parts[0].splitlines(keepends=True)
        body = "".join("".join(p.splitlines(keepends=True)[1:]) for p in raw_parts)
        (out / f"{args.name}_raw.csv").write_text(header + body)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="certlab",
                                     description="Two-stage trial designs with certified lower bounds.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment from a JSON config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out")
    sim.add_argument("--format", choices=("csv", "json"), default="csv")
    sim.add_argument("--raw", action="store_true", help="one CSV line per replication")
    sim.add_argument("--threads", type=int, default=1)
    sim.add_argument("--master-seed", type=int)
    sim.set_defaults(func=_cmd_simulate)

    ver = sub.add_parser("verify", help="numerically check the theoretical guarantees")
    ver.add_argument("--instance", help="JSON file describing a small enumerable instance")
    ver.add_argument("--full", action="store_true", help="use the full replication counts")
    ver.set_defaults(func=_cmd_verify)

    fig = sub.add_parser("figure", help="regenerate the data table of a named figure")
    fig.add_argument("name")
    fig.add_argument("--out", default="figures")
    fig.add_argument("--threads", type=int, default=1)
    fig.add_argument("--master-seed", type=int)
    fig.add_argument("--raw", action="store_true")
    fig.set_defaults(func=_cmd_figure)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("certlab: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"certlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CertlabError as exc:
        print(f"certlab: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
