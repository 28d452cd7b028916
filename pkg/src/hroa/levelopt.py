"""Hanging-level profile optimizer.

Choosing where sub-trees hang trades block count against bitmap width: a
cut at every level gives tiny bitmaps but no sharing, sparse cuts give
wide bitmaps that are mostly empty.  For a known workload the total cost
decomposes per segment (cut level -> next cut), so the cheapest profile
falls out of a shortest-path DP over cut positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .prefix import V4, V6, WIDTH, FamilyMismatchError, Prefix
from .bmcodec import DEFAULT_GAP_CAP, HangingLevels, encode_batch


@dataclass(frozen=True)
class CostModel:
    """Bytes one block costs: fixed overhead + identifier + bitmap.

    The defaults mirror the unaggregated wire layout (8-byte header plus
    4-byte AS number around the id/bitmap pair), with the bitmap priced at
    its packed width instead of the wire's fixed 4 bytes.
    """

    per_block_overhead_bytes: int = 12
    id_bytes_v4: int = 4
    id_bytes_v6: int = 16

    def id_bytes(self, family: int) -> int:
        if family == V4:
            return self.id_bytes_v4
        if family == V6:
            return self.id_bytes_v6
        raise ValueError(f"bad family {family!r}")

    def bitmap_bytes(self, height: int) -> int:
        if height < 1:
            raise ValueError("height must be >= 1")
        return ((1 << height) + 7) // 8

    def block_size(self, family: int, height: int) -> int:
        return self.per_block_overhead_bytes + self.id_bytes(family) + self.bitmap_bytes(height)


def count_nonempty_subtrees(workload: Iterable[Prefix], level: int, bound: int) -> int:
    """Distinct level-`level` sub-trees holding a prefix of length in [level, bound)."""
    pl = list(workload)
    if not pl:
        raise ValueError("empty workload")
    fams = {p.family for p in pl}
    if len(fams) != 1:
        raise FamilyMismatchError("workload must be a single family")
    width = WIDTH[fams.pop()]
    if not 0 <= level < bound:
        raise ValueError(f"bad segment [{level}, {bound})")
    roots = {
        p.bits >> (width - level)
        for p in pl
        if level <= p.prefixlen < bound
    }
    return len(roots)


def _num_table(pairs: Sequence[tuple[int, int]], width: int) -> list[list[int]]:
    """num[i][j] = distinct level-i roots among prefixes with i <= len < j."""
    by_len: list[list[int]] = [[] for _ in range(width + 1)]
    for bits, plen in pairs:
        by_len[plen].append(bits)
    num = [[0] * (width + 2) for _ in range(width + 1)]
    for i in range(width + 1):
        seen: set[int] = set()
        row = num[i]
        for ln in range(i, width + 1):
            for bits in by_len[ln]:
                seen.add(bits >> (width - i))
            row[ln + 1] = len(seen)
    return num


def optimize_levels(
    workload: Iterable[Prefix],
    model: CostModel | None = None,
    h_max: int = DEFAULT_GAP_CAP,
    width: int | None = None,
) -> tuple[HangingLevels, int]:
    """Cheapest hanging-level profile for a workload under a cost model.

    Every gap between cuts, and the terminal gap to width+1, stays within
    ``h_max``.  Ties break toward fewer cuts, then the lexicographically
    smallest profile.  ``width`` below the family width restricts the
    universe to shallow tries for constrained studies.
    """
    model = model or CostModel()
    if h_max < 1:
        raise ValueError("h_max must be >= 1")
    pl = list(workload)
    if not pl:
        raise ValueError("empty workload")
    fams = {p.family for p in pl}
    if len(fams) != 1:
        raise FamilyMismatchError("workload must be a single family")
    family = fams.pop()
    if width is None:
        width = WIDTH[family]
    elif not 1 <= width <= WIDTH[family]:
        raise ValueError(f"width {width} out of range")
    if any(p.prefixlen > width for p in pl):
        raise ValueError(f"workload exceeds width {width}")

    shift = WIDTH[family] - width  # store toy universes in the top bits
    pairs = [(p.bits >> shift, p.prefixlen) for p in pl]
    num = _num_table(pairs, width)

    def cost(i: int, j: int) -> int:
        return num[i][j] * model.block_size(family, j - i)

    # best[l]: (cost, cut count, profile) covering levels [0, l) with l the
    # next cut.  Candidate order under tuple comparison implements the
    # tie-break: cost, then fewer cuts, then lexicographically smaller.
    best: list[tuple[int, int, tuple[int, ...]] | None] = [None] * width
    best[0] = (0, 1, (0,))
    for l in range(1, width):
        cands = []
        for i in range(max(0, l - h_max), l):
            prev = best[i]
            if prev is None:
                continue
            cands.append((prev[0] + cost(i, l), prev[1] + 1, prev[2] + (l,)))
        if cands:
            best[l] = min(cands)

    finals = []
    for c in range(max(0, width + 1 - h_max), width):
        prev = best[c]
        if prev is None:
            continue
        finals.append((prev[0] + cost(c, width + 1), prev[1], prev[2]))
    if not finals:
        raise ValueError(f"no profile satisfies h_max={h_max} at width {width}")
    total, _, levels = min(finals)
    if width == WIDTH[family]:
        profile = HangingLevels(family, levels, gap_cap=h_max)
    else:
        # Toy-width profiles: validity is relative to the reduced universe,
        # so only the explicit constructor's widened cap fits.
        profile = HangingLevels.explicit(family, levels)
    return profile, total


def simulate_profile_cost(
    workload: Iterable[Prefix],
    profile: HangingLevels,
    model: CostModel | None = None,
) -> int:
    """Price a profile by actually encoding the workload block by block."""
    model = model or CostModel()
    blocks = encode_batch(profile, workload)
    return sum(model.block_size(b.family, b.height) for b in blocks)
