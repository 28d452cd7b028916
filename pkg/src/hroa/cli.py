"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration, 2 unreadable or invalid
input data, 3 transport or protocol failure during sync.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import signal
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import sync, wire
from .bmcodec import HangingLevels, decode_block, encode_batch, subtree_height, subtree_id_level, SubTreeBlock
from .hybrid import HybridConfig
from .levelopt import CostModel, optimize_levels
from .mlcodec import scatter_degree
from .prefix import V4, V6, AddressBlock, Prefix, PrefixFormatError, Vrp, expand
from .workload import Workload, dump_csv, load_csv, synthetic_scattered

_FAMILY_NAMES = {"v4": V4, "v6": V6}


def _err(msg: str) -> None:
    print(f"hroa: {msg}", file=sys.stderr)


def _parse_levels_arg(values: list[str] | None) -> dict[int, HangingLevels]:
    """--levels accepts N,N,... inline or a profile JSON path, repeatable."""
    hanging = {V4: HangingLevels.default(V4), V6: HangingLevels.default(V6)}
    for value in values or []:
        if os.path.exists(value):
            with open(value) as fh:
                doc = json.load(fh)
            family = _FAMILY_NAMES[doc["family"]]
            hanging[family] = HangingLevels.explicit(family, doc["levels"])
            continue
        try:
            levels = [int(x) for x in value.split(",") if x.strip()]
        except ValueError:
            raise ValueError(f"--levels {value!r}: not a list or profile file") from None
        if not levels:
            raise ValueError(f"--levels {value!r}: empty")
        for family in (V4, V6):
            width = 32 if family == V4 else 128
            fit = [x for x in levels if x <= width - 1]
            hanging[family] = HangingLevels.explicit(family, fit)
    return hanging


def _build_config(args) -> HybridConfig:
    if getattr(args, "level_multiple", None):
        if getattr(args, "levels", None):
            raise ValueError("--levels and --level-multiple are mutually exclusive")
        hanging = {
            V4: HangingLevels.multiples_of(args.level_multiple, V4),
            V6: HangingLevels.multiples_of(args.level_multiple, V6),
        }
    else:
        hanging = _parse_levels_arg(getattr(args, "levels", None))
    thr_text = getattr(args, "delta_l", None)
    threshold = 3.0 if thr_text is None else (math.inf if thr_text == "inf" else float(thr_text))
    if threshold != math.inf and threshold != int(threshold):
        raise ValueError("--delta-l must be an integer or inf")
    return HybridConfig(
        delta_l_threshold=threshold,
        hanging=hanging,
        aggregate=getattr(args, "scheme", "") == "ahroa",
        expansion_cap=getattr(args, "expansion_cap", 20),
    )


def _encode_one(job):
    """Worker for --jobs: returns (asn, canonical blocks, hybrid payload)."""
    asn, blocks, cfg, recompress = job
    snap = sync.CacheSnapshot.build({asn: blocks}, cfg, session_id=0, recompress=recompress)
    return asn, snap.entries[asn], snap.payloads[asn]


def _snapshot(args, workload: Workload, cfg: HybridConfig) -> sync.CacheSnapshot:
    recompress = getattr(args, "recompress", False) or args.scheme in ("mroa", "sroa")
    jobs = getattr(args, "jobs", 1)
    if jobs <= 1:
        return sync.CacheSnapshot.build(
            workload,
            cfg,
            session_id=getattr(args, "session_id", None),
            serial=getattr(args, "serial", 1),
            recompress=recompress,
        )
    tasks = [(asn, blocks, cfg, recompress) for asn, blocks in workload.entries.items()]
    entries = {}
    payloads = {}
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for asn, blocks, payload in pool.map(_encode_one, tasks, chunksize=64):
            entries[asn] = blocks
            payloads[asn] = payload
    session = getattr(args, "session_id", None)
    return sync.CacheSnapshot(
        session_id=session if session is not None else 0,
        serial=getattr(args, "serial", 1),
        cfg=cfg,
        entries=entries,
        payloads=payloads,
    )


def _pdu_family(pdu) -> int:
    return pdu.prefix.family if isinstance(pdu, wire.PrefixPdu) else pdu.family


def cmd_encode(args) -> int:
    workload = load_csv(args.csv)
    cfg = _build_config(args)
    snapshot = _snapshot(args, workload, cfg)
    pdus = sync.payload_pdus(snapshot, args.scheme)
    per_as: dict[int, dict[str, int]] = {}
    per_family = {"v4": {"pdu_count": 0, "bytes": 0}, "v6": {"pdu_count": 0, "bytes": 0}}
    total = 0
    blob = bytearray()
    for pdu in pdus:
        raw = wire.serialize(pdu)
        blob.extend(raw)
        total += len(raw)
        asn = pdu.asn
        fam = "v4" if _pdu_family(pdu) == V4 else "v6"
        slot = per_as.setdefault(asn, {"pdu_count": 0, "bytes": 0})
        slot["pdu_count"] += 1
        slot["bytes"] += len(raw)
        per_family[fam]["pdu_count"] += 1
        per_family[fam]["bytes"] += len(raw)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(blob)
    print(
        json.dumps(
            {
                "scheme": args.scheme,
                "pdu_count": len(pdus),
                "total_bytes": total,
                "per_family": per_family,
                "per_as": {str(a): per_as[a] for a in sorted(per_as)},
            },
            sort_keys=True,
        )
    )
    return 0


def _decode_pdu_rows(pdu, cfg: HybridConfig) -> list[Vrp]:
    if isinstance(pdu, wire.PrefixPdu):
        return [Vrp(pdu.asn, AddressBlock(pdu.prefix, pdu.max_length))]
    if isinstance(pdu, (wire.SubTreePdu, wire.SubTreeAggPdu)):
        pairs = pdu.blocks if isinstance(pdu, wire.SubTreeAggPdu) else ((pdu.subtree_id, pdu.bitmap),)
        levels = cfg.levels(pdu.family)
        rows = []
        for sid, bitmap in pairs:
            block = SubTreeBlock(
                pdu.family, sid, bitmap, height=subtree_height(levels, subtree_id_level(sid))
            )
            _, prefixes = decode_block(levels, block)
            rows.extend(Vrp(pdu.asn, AddressBlock(p, p.prefixlen)) for p in prefixes)
        return rows
    return []


def cmd_decode(args) -> int:
    cfg = _build_config(args)
    with open(args.pdufile, "rb") as fh:
        data = fh.read()
    reader = wire.PduReader()
    pdus = reader.feed(data)
    if reader.pending:
        raise wire.FramingError(f"{reader.pending} trailing bytes are not a whole PDU")
    rows: list[Vrp] = []
    for pdu in pdus:
        rows.extend(_decode_pdu_rows(pdu, cfg))
    rows = sorted(set(rows))
    text = dump_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_stats(args) -> int:
    workload = load_csv(args.csv)
    cfg = _build_config(args)
    hist: dict[str, dict[int, int]] = {"v4": {}, "v6": {}}
    for vrp in workload.vrps():
        fam = "v4" if vrp.block.prefix.family == V4 else "v6"
        hist[fam][vrp.block.height] = hist[fam].get(vrp.block.height, 0) + 1
    scoped = workload if args.include_as0 else workload.without_as0()
    per_as = {}
    groups: dict[int, list[float]] = {}
    for asn in scoped.asns():
        prefixes = scoped.prefixes_for(asn, cfg.expansion_cap)
        sd = float(scatter_degree(prefixes))
        per_as[str(asn)] = {"prefix_count": len(prefixes), "scatter_degree": sd}
        groups.setdefault(len(prefixes), []).append(sd)
    doc = {
        "as_count": len(scoped.entries),
        "vrp_count": scoped.vrp_count(),
        "include_as0": bool(args.include_as0),
        "delta_l_histogram": {
            fam: {str(h): n for h, n in sorted(hist[fam].items())} for fam in hist
        },
        "scatter_degree": {
            "per_as": per_as,
            "mean": (sum(v["scatter_degree"] for v in per_as.values()) / len(per_as))
            if per_as
            else None,
        },
        "groups": {
            str(k): {"as_count": len(v), "mean_scatter_degree": sum(v) / len(v)}
            for k, v in sorted(groups.items())
        },
    }
    text = json.dumps(doc, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_sweep(args) -> int:
    from .hybrid import sweep_parameters

    workload = load_csv(args.csv)
    thresholds = [math.inf if t == "inf" else int(t) for t in args.thresholds.split(",")]
    multiples = [int(m) for m in args.multiples.split(",")]
    table = sweep_parameters(
        workload.entries,
        thresholds,
        multiples,
        aggregate=args.aggregate,
        expansion_cap=args.expansion_cap,
    )
    cells = [
        {
            "threshold": ("inf" if math.isinf(t) else t),
            "multiple": m,
            "pdu_count": cell.pdu_count,
            "total_bytes": cell.total_bytes,
        }
        for (t, m), cell in sorted(
            table.items(), key=lambda kv: (kv[0][1], float(kv[0][0]))
        )
    ]
    best_bytes = min(cells, key=lambda c: (c["total_bytes"], c["pdu_count"]))
    best_count = min(cells, key=lambda c: (c["pdu_count"], c["total_bytes"]))
    doc = {
        "optimize": args.optimize,
        "cells": cells,
        "best_by_bytes": best_bytes,
        "best_by_count": best_count,
        "best": best_count if args.optimize == "count" else best_bytes,
    }
    text = json.dumps(doc, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_optimize_levels(args) -> int:
    workload = load_csv(args.csv)
    family = _FAMILY_NAMES[args.family]
    threshold = math.inf if args.all_blocks else float(args.delta_l or 3)
    prefixes: set[Prefix] = set()
    for vrp in workload.vrps():
        block = vrp.block
        if block.prefix.family != family:
            continue
        if block.height < threshold:
            prefixes |= expand(block, args.expansion_cap)
    if not prefixes:
        raise ValueError(f"no {args.family} prefixes below the threshold")
    model = CostModel(per_block_overhead_bytes=args.overhead_bytes)
    profile, cost = optimize_levels(prefixes, model, h_max=args.h_max)
    doc = {
        "family": args.family,
        "levels": list(profile.levels),
        "cost_bytes": cost,
        "h_max": args.h_max,
        "prefix_count": len(prefixes),
    }
    text = json.dumps(doc, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_bench(args) -> int:
    if args.synthetic:
        workload = synthetic_scattered(args.synthetic, seed=args.seed)
    elif args.csv:
        workload = load_csv(args.csv)
    else:
        raise ValueError("bench needs a CSV or --synthetic N")
    cfg = _build_config(args)

    per_family: dict[int, set[Prefix]] = {V4: set(), V6: set()}
    for asn in workload.asns():
        for block in workload.entries[asn]:
            if block.height < cfg.delta_l_threshold:
                per_family[block.prefix.family] |= expand(block, cfg.expansion_cap)
    encode_total = 0
    t0 = time.perf_counter()
    for _ in range(args.reps):
        for fam, prefixes in per_family.items():
            if prefixes:
                encode_batch(cfg.levels(fam), prefixes)
                encode_total += len(prefixes)
    encode_elapsed = time.perf_counter() - t0

    blocks = []
    for fam, prefixes in per_family.items():
        if prefixes:
            blocks.extend((cfg.levels(fam), b) for b in encode_batch(cfg.levels(fam), prefixes))
    decode_total = 0
    t0 = time.perf_counter()
    for _ in range(args.reps):
        for levels, block in blocks:
            _, got = decode_block(levels, block)
            decode_total += len(got)
    decode_elapsed = time.perf_counter() - t0

    schemes = {}
    base_args = argparse.Namespace(**vars(args))
    for scheme in sync.SCHEMES:
        base_args.scheme = scheme
        snapshot = _snapshot(base_args, workload, _build_config(base_args))
        pdus = sync.payload_pdus(snapshot, scheme)
        schemes[scheme] = {
            "pdu_count": len(pdus),
            "total_bytes": sum(len(wire.serialize(p)) for p in pdus),
        }
    reductions = {}
    for scheme in ("hroa", "ahroa"):
        reductions[scheme] = {
            "pdu_count_pct": _pct(schemes["mroa"]["pdu_count"], schemes[scheme]["pdu_count"]),
            "bytes_pct": _pct(schemes["mroa"]["total_bytes"], schemes[scheme]["total_bytes"]),
        }
    doc = {
        "reps": args.reps,
        "prefix_count": sum(len(s) for s in per_family.values()),
        "encode_mpps": (encode_total / encode_elapsed / 1e6) if encode_elapsed else None,
        "decode_mpps": (decode_total / decode_elapsed / 1e6) if decode_elapsed else None,
        "schemes": schemes,
        "reduction_vs_mroa": reductions,
    }
    text = json.dumps(doc, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _pct(base: int, new: int) -> float | None:
    if base == 0:
        return None
    return round(100.0 * (base - new) / base, 2)


def _parse_bandwidth(text: str | None) -> float | None:
    if not text:
        return None
    t = text.strip().lower()
    for suffix, mult in (("gbps", 1e9), ("mbps", 1e6), ("kbps", 1e3), ("bps", 1.0)):
        if t.endswith(suffix):
            return float(t[: -len(suffix)]) * mult
    return float(t)


def cmd_serve(args) -> int:
    workload = load_csv(args.csv)
    cfg = _build_config(args)
    snapshot = _snapshot(args, workload, cfg)
    server = sync.serve(
        snapshot,
        args.scheme,
        (args.host, args.port),
        bandwidth_bps=_parse_bandwidth(args.bandwidth),
    )
    host, port = server.endpoint
    print(f"serving {args.scheme} snapshot on {host}:{port}", file=sys.stderr)
    try:
        signal.pause()
    except (KeyboardInterrupt, AttributeError):
        pass
    finally:
        server.close()
    return 0


def cmd_fetch(args) -> int:
    host, _, port = args.endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError("endpoint must be host:port")
    cfg = _build_config(args)
    got, report = sync.fetch((host, int(port)), cfg, timeout=args.timeout)
    if args.out:
        rows = [
            Vrp(asn, AddressBlock(p, p.prefixlen))
            for asn, prefixes in got.items()
            for p in prefixes
        ]
        with open(args.out, "w") as fh:
            fh.write(dump_csv(sorted(rows)))
    print(report.to_json())
    return 0


def _add_cfg_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--levels", action="append", metavar="LIST|FILE",
                   help="hanging levels: comma list or profile JSON (repeatable)")
    p.add_argument("--level-multiple", type=int, metavar="M",
                   help="hanging levels at multiples of M")
    p.add_argument("--delta-l", metavar="T",
                   help="block height threshold for the maxLength path (int or inf, default 3)")
    p.add_argument("--expansion-cap", type=int, default=20,
                   help="largest block height expand() accepts (default 20)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hroa",
        description="Route-origin authorization encoding toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a CSV workload to a PDU file")
    p.add_argument("csv")
    p.add_argument("--scheme", choices=sync.SCHEMES, default="hroa")
    p.add_argument("--out", help="write concatenated PDUs here")
    p.add_argument("--jobs", type=int, default=1, help="parallel per-AS encoding workers")
    p.add_argument("--recompress", action="store_true",
                   help="re-derive minimal blocks from expanded prefixes")
    _add_cfg_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a PDU file back to CSV rows")
    p.add_argument("pdufile")
    p.add_argument("--out")
    _add_cfg_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("stats", help="scatter-degree and block-height statistics")
    p.add_argument("csv")
    p.add_argument("--include-as0", action="store_true",
                   help="include AS0 rows in scatter-degree figures")
    p.add_argument("--out")
    _add_cfg_flags(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sweep", help="grid-sweep threshold and level multiple")
    p.add_argument("csv")
    p.add_argument("--thresholds", default="0,1,2,3,4,5",
                   help="comma list, inf allowed (default 0,1,2,3,4,5)")
    p.add_argument("--multiples", default="3,4,5,6", help="comma list (default 3,4,5,6)")
    p.add_argument("--optimize", choices=("bytes", "count"), default="bytes")
    p.add_argument("--aggregate", action="store_true")
    p.add_argument("--expansion-cap", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize-levels", help="fit a hanging-level profile to a workload")
    p.add_argument("csv")
    p.add_argument("--family", choices=("v4", "v6"), default="v4")
    p.add_argument("--h-max", type=int, default=6)
    p.add_argument("--delta-l", help="only optimize blocks below this height (default 3)")
    p.add_argument("--all-blocks", action="store_true", help="optimize over every block")
    p.add_argument("--overhead-bytes", type=int, default=12)
    p.add_argument("--expansion-cap", type=int, default=20)
    p.add_argument("--out", help="write the profile JSON here (usable via --levels)")
    p.set_defaults(func=cmd_optimize_levels)

    p = sub.add_parser("bench", help="encode/decode throughput and scheme sizes")
    p.add_argument("csv", nargs="?")
    p.add_argument("--synthetic", type=int, metavar="N",
                   help="generate a scattered workload of N rows instead of reading CSV")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    _add_cfg_flags(p)
    p.set_defaults(func=cmd_bench, scheme="hroa")

    p = sub.add_parser("serve", help="serve a snapshot over the sync protocol")
    p.add_argument("csv")
    p.add_argument("--scheme", choices=sync.SERVE_SCHEMES, default="hroa")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--bandwidth", help="rate limit, e.g. 10mbps (default unlimited)")
    p.add_argument("--session-id", type=int, default=None)
    p.add_argument("--serial", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--recompress", action="store_true")
    _add_cfg_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("fetch", help="sync from a cache and report transfer cost")
    p.add_argument("endpoint", help="host:port")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--out", help="write decoded rows as CSV here")
    _add_cfg_flags(p)
    p.set_defaults(func=cmd_fetch)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except PrefixFormatError as exc:
        _err(str(exc))
        return 2
    except wire.FramingError as exc:
        _err(f"bad PDU data: {exc}")
        return 2
    except sync.SyncError as exc:
        _err(str(exc))
        return 3
    except FileNotFoundError as exc:
        _err(str(exc))
        return 2
    except (ValueError, KeyError) as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
