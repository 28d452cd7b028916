"""Authorization workloads: CSV ingestion and synthetic generators.

The row format is ``asn,prefix/len,max_length``.  An optional header line
is skipped, the AS number may carry an ``AS`` prefix, extra columns are
ignored, and an empty max_length means "equal to the prefix length".
Prefixes are parsed leniently (stray host bits are masked off).
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .prefix import (
    V4,
    AddressBlock,
    Prefix,
    PrefixFormatError,
    Vrp,
    expand,
    parse_prefix,
    DEFAULT_EXPANSION_CAP,
)


def _parse_asn(text: str) -> int:
    t = text.strip()
    if t[:2].upper() == "AS":
        t = t[2:]
    try:
        asn = int(t, 10)
    except ValueError:
        raise PrefixFormatError(f"bad AS number {text!r}") from None
    if not 0 <= asn < 1 << 32:
        raise PrefixFormatError(f"AS number {asn} out of range")
    return asn


def parse_vrp_row(row: list[str], lineno: int = 0) -> Vrp:
    if len(row) < 2:
        raise PrefixFormatError(f"line {lineno}: expected asn,prefix/len,max_length")
    try:
        asn = _parse_asn(row[0])
        prefix = parse_prefix(row[1], strict=False)
        raw_max = row[2].strip() if len(row) > 2 else ""
        max_length = int(raw_max) if raw_max else prefix.prefixlen
        return Vrp(asn, AddressBlock(prefix, max_length))
    except (PrefixFormatError, ValueError) as exc:
        raise PrefixFormatError(f"line {lineno}: {exc}") from None


@dataclass
class Workload:
    """Per-AS address blocks, in input order, deduplicated."""

    entries: dict[int, list[AddressBlock]] = field(default_factory=dict)
    source: str = ""

    def add(self, vrp: Vrp) -> None:
        bucket = self.entries.setdefault(vrp.asn, [])
        if vrp.block not in bucket:
            bucket.append(vrp.block)

    def asns(self) -> list[int]:
        return sorted(self.entries)

    def vrps(self) -> Iterator[Vrp]:
        for asn in self.asns():
            for block in sorted(self.entries[asn]):
                yield Vrp(asn, block)

    def vrp_count(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def prefixes_for(self, asn: int, cap: int = DEFAULT_EXPANSION_CAP) -> set[Prefix]:
        out: set[Prefix] = set()
        for block in self.entries[asn]:
            out |= expand(block, cap)
        return out

    def without_as0(self) -> "Workload":
        w = Workload(source=self.source)
        w.entries = {a: list(v) for a, v in self.entries.items() if a != 0}
        return w


def load_csv(path_or_file, source: str = "") -> Workload:
    """Read a workload; accepts a path or an open text file."""
    if hasattr(path_or_file, "read"):
        return _load(path_or_file, source or getattr(path_or_file, "name", "<stream>"))
    with open(path_or_file, newline="") as fh:
        return _load(fh, source or str(path_or_file))


def _load(fh, source: str) -> Workload:
    w = Workload(source=source)
    reader = csv.reader(fh)
    first_data = True
    for lineno, row in enumerate(reader, start=1):
        if not row or not "".join(row).strip():
            continue
        if row[0].strip().startswith("#"):
            continue
        try:
            vrp = parse_vrp_row(row, lineno)
        except PrefixFormatError:
            if first_data:
                first_data = False
                continue  # header line
            raise
        first_data = False
        w.add(vrp)
    if not w.entries:
        raise PrefixFormatError(f"{source}: no usable rows")
    return w


def dump_csv(rows: Iterable[Vrp], fh=None) -> str | None:
    """Write ``asn,prefix/len,max_length`` rows; returns text when fh is None."""
    out = fh or io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["asn", "prefix", "max_length"])
    for vrp in rows:
        writer.writerow([vrp.asn, str(vrp.block.prefix), vrp.block.max_length])
    if fh is None:
        return out.getvalue()
    return None


def synthetic_scattered(
    vrp_count: int,
    seed: int = 0,
    roots_per_as: int = 2,
    root_len: int = 20,
    leaf_len: int = 24,
    leaves_per_root: int = 16,
) -> Workload:
    """A worst-case-for-maxLength workload: singleton blocks, shared sub-trees.

    Every AS gets ``roots_per_as`` random /root_len sub-trees, each filled
    with same-length leaf prefixes.  Same-length sets never merge into
    taller blocks, so the minimal maxLength encoding stays one PDU per
    prefix while all leaves of a sub-tree share one bitmap.
    """
    if not 0 < root_len < leaf_len <= 32:
        raise ValueError("need 0 < root_len < leaf_len <= 32")
    if vrp_count < 1:
        raise ValueError("vrp_count must be >= 1")
    rng = random.Random(seed)
    slots = 1 << (leaf_len - root_len)
    leaves = min(leaves_per_root, slots)
    w = Workload(source=f"synthetic:scattered:{vrp_count}")
    asn = 64500
    made = 0
    taken_roots: set[int] = set()
    while made < vrp_count:
        asn += 1
        for _ in range(roots_per_as):
            if made >= vrp_count:
                break
            while True:
                root = rng.getrandbits(root_len) << (32 - root_len)
                if root not in taken_roots:
                    taken_roots.add(root)
                    break
            for tail in rng.sample(range(slots), min(leaves, vrp_count - made)):
                bits = root | (tail << (32 - leaf_len))
                block = AddressBlock(Prefix(V4, bits, leaf_len), leaf_len)
                w.add(Vrp(asn, block))
                made += 1
    return w
