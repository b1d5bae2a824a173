"""Command-line experiment runner.

Subcommands: game, bench, matrix, dump, woram. Any flag can also come from
an INI file (``--config``) with an ``[experiment]`` section whose keys are the
flag names with dashes replaced by underscores; flags given on the command
line win. Exit status is 0 on pass, 1 on a failed property, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .core import CATALOG, Level, Request
from .crypto import OVERHEAD, SeededRng, encrypt
from .device import BlockDevice, dump_trace, export_snapshot, wonly
from .errors import ConfigError, DeviceFull, NoInvalidPages, PdError
from .game import ADVERSARIES, BATTERY, GameConfig, build_challenge, estimate_advantage, make_adversary
from .schemes import REGISTRY, make_scheme
from .wom import encode_page, page_bytes
from .woram import DataRequest, WoramAdapter, oblivious_sweep

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _options(pairs: list[str] | None) -> dict:
    """Parse ``key=value`` scheme options; values are read as JSON when possible."""
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"scheme option {item!r} is not key=value")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _emit(args, result: dict, records: list[dict] | None = None, timing: dict | None = None) -> None:
    """Print the summary; with --out also write records.jsonl and summary.json there.

    ``result`` is reproducible for a given command line; wall-clock values go in ``meta``.
    """
    meta = {"timestamp": datetime.now(timezone.utc).isoformat(), "version": __version__, **(timing or {})}
    doc = {"result": result, "meta": meta}
    print(json.dumps({**result, **(timing or {})}, sort_keys=True))
    if getattr(args, "out", None):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if records is not None:
            with open(out / "records.jsonl", "w") as fh:
                for rec in records:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
        _write_json(out / "summary.json", doc)


# -- game ------------------------------------------------------------------------

def cmd_game(args) -> int:
    names = list(BATTERY) if args.adversary == "battery" else [args.adversary]
    for name in names:
        if name not in ADVERSARIES:
            raise UsageError(f"unknown adversary {name!r}")
    config = GameConfig(args.scheme, args.orient, args.rounds, args.trials, args.seed, args.epsilon,
                        args.lam, _options(args.option))
    results, records, ok = [], [], True
    for name in names:
        outcome = estimate_advantage(config, make_adversary(name))
        summary = outcome.summary()
        if args.expect_break is not None:
            summary["expect_break"] = args.expect_break
            summary["pass"] = outcome.valid > 0 and outcome.advantage >= args.expect_break
        ok &= summary["pass"]
        results.append(summary)
        records.extend({"adversary": name, **r.as_dict()} for r in outcome.records)
    _emit(args, {"command": "game", "pass": ok, "outcomes": results}, records)
    return EXIT_PASS if ok else EXIT_FAIL


# -- bench -------------------------------------------------------------------------

def _baseline_rate(scheme, ops: int, rng: SeededRng) -> float | None:
    """Operations per second of the raw device with pass-through encryption."""
    if ops == 0:
        return None
    key = rng.bytes(32)
    dev = scheme._make_device()
    start = time.perf_counter()
    if isinstance(dev, BlockDevice):
        size = dev.block_size - OVERHEAD
        for i in range(ops):
            dev.write_block(i % dev.num_blocks, encrypt(key, rng.bytes(size), rng))
    else:
        pages, size = dev.num_pages, page_bytes(dev.cells_per_page) - OVERHEAD
        for i in range(ops):
            page = i % pages
            if page == 0 and i:
                for eb in range(dev.num_erase_blocks):
                    dev.erase_block(eb)
            record = encrypt(key, rng.bytes(size), rng)
            dev.program_page(page, encode_page(record, 1, dev.cells_per_page))
    return ops / max(time.perf_counter() - start, 1e-9)


def _run_ops(scheme, patterns) -> tuple[int, float]:
    done = 0
    start = time.perf_counter()
    for pattern, on_success in patterns:
        try:
            try:
                scheme.oper(scheme.device, pattern, scheme.keys)
            except DeviceFull:
                scheme.gc()
                scheme.oper(scheme.device, pattern, scheme.keys)
        except (DeviceFull, NoInvalidPages):
            continue  # the scheme declared itself out of room; the op is not counted
        done += 1
        if on_success is not None:
            on_success()
    return done, time.perf_counter() - start


def cmd_bench(args) -> int:
    if args.ops < 0:
        raise UsageError("--ops must be non-negative")
    rng = SeededRng(args.seed)
    scheme = make_scheme(args.scheme, rng=rng.child(0), **_options(args.option))
    scheme.setup()
    profile = scheme.profile()
    wl = rng.child(1)
    span = max(1, min(scheme.pub_capacity, 64))
    written: set = set()

    def public_patterns():
        for _ in range(args.ops):
            addr = wl.randrange(span)
            if addr in written and wl.random() >= args.write_fraction:
                yield [Request.read(addr)], None
            else:
                yield [Request.write(addr, wl.bytes(scheme.payload_size))], lambda a=addr: written.add(a)

    hid_written: list = []

    def hidden_patterns():
        for _ in range(args.ops):
            if hid_written and wl.random() >= args.write_fraction:
                yield [Request.read(wl.choice(hid_written), Level.HID)], None
            else:
                pair = build_challenge(profile, wl, k=1)
                yield pair.pat1, lambda a=pair.pat_hid[0].addr: hid_written.append(a)

    pub_done, pub_t = _run_ops(scheme, public_patterns())
    hid_done, hid_t = _run_ops(scheme, hidden_patterns())
    base = _baseline_rate(scheme, args.ops, rng.child(2))

    def ratio(done, elapsed):
        if not done or base is None or elapsed <= 0:
            return "n/a"
        return round(done / elapsed / base, 4)

    result = {"command": "bench", "scheme": args.scheme, "ops": args.ops,
              "write_fraction": args.write_fraction, "space_utilization": scheme.space_utilization(),
              "pub_ops": pub_done, "hid_ops": hid_done, "pass": True}
    timing = {"pub_ratio": ratio(pub_done, pub_t), "hid_ratio": ratio(hid_done, hid_t)}
    if args.verbose:
        timing.update(pub_ops_per_s=pub_done / pub_t if pub_t else None,
                      hid_ops_per_s=hid_done / hid_t if hid_t else None, baseline_ops_per_s=base)
    _emit(args, result, timing=timing)
    return EXIT_PASS


# -- matrix ------------------------------------------------------------------------

MATRIX_FIELDS = ["name", "year", "snapshot", "security", "layer", "io_perf", "space_util",
                 "rule1", "rule2", "implemented_as"]


def matrix_rows() -> list[dict]:
    return [{"name": r.name, "year": r.year, "snapshot": r.snapshot, "security": r.security,
             "layer": r.layer, "io_perf": r.io_perf, "space_util": r.space_util,
             "rule1": r.rule1.text, "rule2": r.rule2.text, "implemented_as": r.implemented_as or ""}
            for r in CATALOG]


def cmd_matrix(args) -> int:
    rows = matrix_rows()
    if args.csv:
        path = Path(args.csv)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=MATRIX_FIELDS)
            writer.writeheader()
            writer.writerows(rows)
    widths = {f: max(len(f), *(len(str(r[f])) for r in rows)) for f in MATRIX_FIELDS[:7]}
    print("  ".join(f.ljust(widths[f]) for f in widths))
    for r in rows:
        print("  ".join(str(r[f]).ljust(widths[f]) for f in widths))
        print(f"    rule1: {r['rule1']}\n    rule2: {r['rule2']}")
    return EXIT_PASS


# -- dump --------------------------------------------------------------------------

def cmd_dump(args) -> int:
    rng = SeededRng(args.seed)
    scheme = make_scheme(args.scheme, rng=rng.child(0), **_options(args.option))
    device, keys = scheme.setup()
    device.take_trace()
    profile = scheme.profile()
    wl = rng.child(1)
    for _ in range(args.ops):
        pair = build_challenge(profile, wl, k=1)
        try:
            scheme.oper(device, pair.pat1, keys)
        except DeviceFull:
            scheme.gc()
        except NoInvalidPages:
            continue
        if wl.random() < 0.5:
            scheme.oper(device, [Request.read(pair.pat_pub1[0].addr)], keys)
    trace = device.take_trace()
    if args.wonly:
        trace = wonly(trace)
    stem = Path(args.out)
    stem.parent.mkdir(parents=True, exist_ok=True)
    trace_path = dump_trace(trace, stem.with_suffix(".trace.jsonl"))
    img, meta = export_snapshot(device.snapshot(), stem, seed=args.seed, scheme=args.scheme)
    result = {"command": "dump", "scheme": args.scheme, "seed": args.seed, "ops": args.ops,
              "trace": str(trace_path), "trace_entries": len(trace), "snapshot": str(img),
              "snapshot_sha256": device.snapshot().digest(), "pass": True}
    print(json.dumps(result, sort_keys=True))
    return EXIT_PASS


# -- woram -------------------------------------------------------------------------

def cmd_woram(args) -> int:
    opts = _options(args.option)
    reports = oblivious_sweep(args.backend, args.pairs, args.seed, args.n, args.alpha, opts)
    adapter = WoramAdapter(args.backend, args.n, args.seed, scheme_options=opts).setup()
    adapter.write(0, SeededRng(args.seed).bytes(adapter.block_size))
    read_writes = len(wonly(adapter.access(DataRequest.read(0))))
    passed = sum(r.passed for r in reports)
    ok = passed == len(reports) and read_writes == 0
    result = {"command": "woram", "backend": args.backend, "n": args.n, "pairs": args.pairs,
              "alpha": args.alpha, "passed_pairs": passed, "read_access_writes": read_writes, "pass": ok}
    _emit(args, result, [r.as_dict() for r in reports])
    return EXIT_PASS if ok else EXIT_FAIL


# -- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdkit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="INI file with an [experiment] section of flag defaults")
    sub = p.add_subparsers(dest="command", required=True)
    schemes = sorted(REGISTRY)

    def common(sp, scheme=True):
        if scheme:
            sp.add_argument("--scheme", choices=schemes, default="pd_dm")
            sp.add_argument("--option", action="append", metavar="KEY=VALUE",
                            help="scheme constructor option (repeatable)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="directory for records.jsonl and summary.json")

    g = sub.add_parser("game", help="estimate adversary advantage in the security game")
    common(g)
    g.add_argument("--adversary", default="battery", help=f"one of {sorted(ADVERSARIES)} or 'battery'")
    g.add_argument("--orient", choices=["device", "trace", "both"], default="device")
    g.add_argument("--rounds", type=int, default=1)
    g.add_argument("--trials", type=int, default=1000)
    g.add_argument("--epsilon", type=float, default=0.05)
    g.add_argument("--lam", type=int, default=256, choices=[128, 192, 256])
    g.add_argument("--expect-break", type=float, metavar="FLOOR",
                   help="pass only if the advantage reaches FLOOR")
    g.set_defaults(func=cmd_game)

    b = sub.add_parser("bench", help="relative throughput and space utilization")
    common(b)
    b.add_argument("--ops", type=int, default=200)
    b.add_argument("--write-fraction", type=float, default=0.5)
    b.add_argument("--verbose", action="store_true", help="also report raw operation rates")
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("matrix", help="comparison table of cataloged schemes")
    m.add_argument("--csv", help="also write the table as CSV")
    m.set_defaults(func=cmd_matrix)

    d = sub.add_parser("dump", help="run a workload and export its trace and snapshot")
    common(d)
    d.add_argument("--ops", type=int, default=20)
    d.add_argument("--wonly", action="store_true", help="drop Read entries from the trace")
    d.set_defaults(func=cmd_dump, out="dump")

    w = sub.add_parser("woram", help="write-only ORAM adapter conformance checks")
    w.add_argument("--backend", choices=["hive", "pd_dm"], default="pd_dm")
    w.add_argument("--option", action="append", metavar="KEY=VALUE")
    w.add_argument("--n", type=int, default=1)
    w.add_argument("--pairs", type=int, default=50)
    w.add_argument("--alpha", type=float, default=0.01)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--out")
    w.set_defaults(func=cmd_woram)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cp = configparser.ConfigParser()
    if not cp.read(known.config):
        raise UsageError(f"cannot read config file {known.config}")
    if not cp.has_section("experiment"):
        raise UsageError("config file needs an [experiment] section")
    values = dict(cp.items("experiment"))
    command = values.pop("command", None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    target = [sp for name, sp in subparsers.choices.items() if command in (None, name)]
    for sp in target:
        dests = {a.dest: a for a in sp._actions}
        for key, raw in values.items():
            if key not in dests:
                if command is not None:
                    raise UsageError(f"unknown config key {key!r} for {command}")
                continue
            action = dests[key]
            if isinstance(action, argparse._StoreTrueAction):
                sp.set_defaults(**{key: cp.getboolean("experiment", key)})
            elif isinstance(action, argparse._AppendAction):
                sp.set_defaults(**{key: raw.split()})
            else:
                sp.set_defaults(**{key: raw})  # argparse converts string defaults with the flag's type


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if getattr(args, "scheme", None) is not None and args.scheme not in REGISTRY:
            raise UsageError(f"unknown scheme {args.scheme!r}")
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, ConfigError) as exc:
        print(f"pdkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PdError as exc:
        print(f"pdkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
