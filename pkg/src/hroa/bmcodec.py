"""Bitmap sub-tree codec.

A profile of "hanging levels" slices the address trie into disjoint
sub-trees: a prefix of length n hangs at the nearest profile level l <= n,
inside the sub-tree rooted at its first l bits.  One encoded block then
carries a whole sub-tree:

  identifier  2^l + (first l bits of the address)   (self-delimiting: the
              leading 1 bit recovers l, so ids never collide across levels)
  bitmap      bit 0 = withdraw flag, bit y = the sub-tree node numbered y
              in level order (root 1, node y's children 2y and 2y+1, left
              child = appended 0 bit)

A node of length n in the sub-tree rooted at level l is numbered
2^(n-l) + (bits l+1..n), mirroring the identifier construction one level
down.  A sub-tree of height h uses bitmap bits 1..2^h - 1 plus the flag.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .prefix import V4, V6, WIDTH, FamilyMismatchError, Prefix

DEFAULT_GAP_CAP = 6

_DEFAULT_LEVELS = {
    V4: tuple(range(0, 32, 5)),   # 0,5,...,30; terminal sub-tree height 3
    V6: tuple(range(0, 128, 5)),  # 0,5,...,125; terminal height 4
}


@dataclass(frozen=True, slots=True)
class HangingLevels:
    """A strictly ascending level profile starting at 0.

    Gaps between consecutive levels (and the terminal gap to width+1) are
    capped so bitmaps stay bounded: a gap of h means 2^h-bit bitmaps.
    """

    family: int
    levels: tuple[int, ...]
    gap_cap: int = field(default=DEFAULT_GAP_CAP, compare=False)

    def __post_init__(self) -> None:
        if self.family not in WIDTH:
            raise ValueError(f"bad family {self.family!r}")
        lv = self.levels
        if not lv or lv[0] != 0:
            raise ValueError("profile must start at level 0")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError("levels must be strictly ascending")
        width = WIDTH[self.family]
        if lv[-1] > width - 1:
            raise ValueError(f"last level {lv[-1]} exceeds {width - 1}")
        gaps = [b - a for a, b in zip(lv, lv[1:])]
        gaps.append(width + 1 - lv[-1])
        if max(gaps) > self.gap_cap:
            raise ValueError(
                f"level gap {max(gaps)} exceeds cap {self.gap_cap}"
            )

    @classmethod
    def default(cls, family: int) -> "HangingLevels":
        return cls(family, _DEFAULT_LEVELS[family])

    @classmethod
    def multiples_of(cls, step: int, family: int) -> "HangingLevels":
        """Profile 0, step, 2*step, ... below the family width."""
        if step < 1:
            raise ValueError("step must be >= 1")
        levels = tuple(range(0, WIDTH[family], step))
        terminal = WIDTH[family] + 1 - levels[-1]
        return cls(family, levels, gap_cap=max(step, terminal, DEFAULT_GAP_CAP))

    @classmethod
    def explicit(cls, family: int, levels: Iterable[int]) -> "HangingLevels":
        """User-supplied profile; the gap cap widens to fit what was given."""
        lv = tuple(sorted(set(levels) | {0}))
        width = WIDTH[family]
        gaps = [b - a for a, b in zip(lv, lv[1:])] + [width + 1 - lv[-1]]
        return cls(family, lv, gap_cap=max(max(gaps), DEFAULT_GAP_CAP))

    @property
    def width(self) -> int:
        return WIDTH[self.family]


def nearest_hanging_level(cfg: HangingLevels, prefixlen: int) -> int:
    """Largest profile level <= prefixlen."""
    if not 0 <= prefixlen <= cfg.width:
        raise ValueError(f"prefixlen {prefixlen} out of range")
    return cfg.levels[bisect_right(cfg.levels, prefixlen) - 1]


def subtree_height(cfg: HangingLevels, level: int) -> int:
    """Levels spanned by the sub-tree rooted at a profile level.

    The sub-tree at level l holds prefixes of length l..l+h-1 where h is
    the distance to the next level (or to width+1 for the last).
    """
    i = bisect_right(cfg.levels, level) - 1
    if i < 0 or cfg.levels[i] != level:
        raise ValueError(f"{level} is not a profile level")
    if i + 1 < len(cfg.levels):
        return cfg.levels[i + 1] - level
    return cfg.width + 1 - level


def make_subtree_id(prefix: Prefix, level: int) -> int:
    """2^level + the prefix's first `level` bits."""
    if not 0 <= level <= prefix.prefixlen:
        raise ValueError(f"level {level} not above {prefix}")
    return (1 << level) | (prefix.bits >> (prefix.width - level))


def subtree_id_level(subtree_id: int) -> int:
    """Recover the hanging level from an identifier's leading 1 bit."""
    if subtree_id < 1:
        raise ValueError("identifier must be >= 1")
    return subtree_id.bit_length() - 1


def make_node_number(prefix: Prefix, level: int) -> int:
    """2^(n-level) + bits level+1..n of the prefix (n = prefixlen)."""
    depth = prefix.prefixlen - level
    if depth < 0:
        raise ValueError(f"{prefix} is above level {level}")
    tail = (prefix.bits >> (prefix.width - prefix.prefixlen)) & ((1 << depth) - 1)
    return (1 << depth) | tail


@dataclass(frozen=True, slots=True)
class SubTreeBlock:
    """One encoded sub-tree: identifier, bitmap, and its profile height."""

    family: int
    id: int
    bitmap: int
    height: int

    def __post_init__(self) -> None:
        if self.family not in WIDTH:
            raise ValueError(f"bad family {self.family!r}")
        if self.id < 1:
            raise ValueError("identifier must be >= 1")
        if self.height < 1:
            raise ValueError("height must be >= 1")
        if not 0 <= self.bitmap < 1 << (1 << self.height):
            raise ValueError("bitmap wider than 2^height bits")
        if self.bitmap >> 1 == 0:
            raise ValueError("bitmap carries no sub-tree nodes")

    @property
    def flag(self) -> int:
        """0 = announce, 1 = withdraw."""
        return self.bitmap & 1


@dataclass(frozen=True, slots=True)
class BitmapRoa:
    """A batch of sub-tree blocks for one origin AS."""

    asn: int
    blocks: tuple[SubTreeBlock, ...]

    def __post_init__(self) -> None:
        if not 0 <= self.asn < 1 << 32:
            raise ValueError(f"asn {self.asn} out of range")
        ids = [b.id for b in self.blocks]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate sub-tree id in one batch")


def encode_batch(
    cfg: HangingLevels, prefixes: Iterable[Prefix], withdraw: bool = False
) -> list[SubTreeBlock]:
    """Fold prefixes into per-sub-tree bitmaps; one block per touched sub-tree.

    Bit 0 of every emitted bitmap carries the announce/withdraw flag.
    Output is sorted by identifier.
    """
    flag = 1 if withdraw else 0
    acc: dict[int, tuple[int, int]] = {}  # id -> (bitmap, height)
    for p in prefixes:
        if p.family != cfg.family:
            raise FamilyMismatchError(f"{p} in a v{cfg.family} batch")
        level = nearest_hanging_level(cfg, p.prefixlen)
        sid = make_subtree_id(p, level)
        y = make_node_number(p, level)
        got = acc.get(sid)
        if got is None:
            acc[sid] = (1 << y, subtree_height(cfg, level))
        else:
            acc[sid] = (got[0] | (1 << y), got[1])
    return [
        SubTreeBlock(cfg.family, sid, bm | flag, height=h)
        for sid, (bm, h) in sorted(acc.items())
    ]


def _node_numbers(bitmap: int) -> Iterator[int]:
    """Set bit positions >= 1, i.e. the encoded node numbers."""
    rest = bitmap & ~1
    while rest:
        low = rest & -rest
        yield low.bit_length() - 1
        rest ^= low


def decode_block(cfg: HangingLevels, block: SubTreeBlock) -> tuple[int, set[Prefix]]:
    """Rebuild (flag, prefixes) from one block.  Inverse of encode_batch."""
    if block.family != cfg.family:
        raise FamilyMismatchError(f"block family v{block.family} vs cfg v{cfg.family}")
    level = subtree_id_level(block.id)
    height = subtree_height(cfg, level)  # raises if id level not in profile
    if block.height != height:
        raise ValueError(
            f"block height {block.height} disagrees with profile height {height}"
        )
    if block.bitmap >> (1 << height):
        raise ValueError("bitmap has node bits beyond the sub-tree")
    width = cfg.width
    root = (block.id ^ (1 << level)) << (width - level)
    out = set()
    for y in _node_numbers(block.bitmap):
        depth = y.bit_length() - 1
        n = level + depth
        tail = (y ^ (1 << depth)) << (width - n)
        out.add(Prefix(cfg.family, root | tail, n))
    return block.bitmap & 1, out


@dataclass(slots=True)
class Stm:
    """Sub-tree map: one AS's announce (flag 0) or withdraw (flag 1) state.

    Single-writer; the table maps identifier -> bitmap with bit 0 always
    equal to ``flag``.
    """

    asn: int
    flag: int
    table: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.flag not in (0, 1):
            raise ValueError("flag must be 0 or 1")
        if not 0 <= self.asn < 1 << 32:
            raise ValueError(f"asn {self.asn} out of range")


def stm_insert(stm: Stm, block: SubTreeBlock) -> Stm:
    """Merge one block into the map (in place).

    A block whose flag matches the map ORs its bits in; an opposing block
    clears them.  Entries left with no node bits are dropped, and bit 0 of
    every stored bitmap is re-forced to the map's own flag.
    """
    cur = stm.table.get(block.id, 0)
    if block.flag == stm.flag:
        cur |= block.bitmap
    else:
        cur &= ~block.bitmap
    if cur >> 1 == 0:
        stm.table.pop(block.id, None)
    else:
        stm.table[block.id] = (cur & ~1) | stm.flag
    return stm


def apply_roa(cache: tuple[Stm, Stm], roa: BitmapRoa) -> tuple[Stm, Stm]:
    """Apply a batch to an AS's (announce, withdraw) map pair.

    Announce blocks land in the announce map.  Withdraw blocks accumulate
    in the withdraw map and additionally clear the announce map, so a
    withdrawal retracts previously announced prefixes.
    """
    ann, wd = cache
    if ann.flag != 0 or wd.flag != 1:
        raise ValueError("cache must be (announce Stm, withdraw Stm)")
    if ann.asn != roa.asn or wd.asn != roa.asn:
        raise ValueError(f"batch for AS{roa.asn} applied to another AS's cache")
    for block in roa.blocks:
        if block.flag:
            stm_insert(wd, block)
            stm_insert(ann, block)
        else:
            stm_insert(ann, block)
    return cache


def stm_blocks(stm: Stm, cfg: HangingLevels) -> list[SubTreeBlock]:
    """The map's current state as emittable blocks, sorted by identifier."""
    return [
        SubTreeBlock(
            cfg.family, sid, bm, height=subtree_height(cfg, subtree_id_level(sid))
        )
        for sid, bm in sorted(stm.table.items())
    ]


def stm_decode(stm: Stm, cfg: HangingLevels) -> set[Prefix]:
    """Every prefix currently present in the map."""
    out: set[Prefix] = set()
    for block in stm_blocks(stm, cfg):
        _, prefixes = decode_block(cfg, block)
        out |= prefixes
    return out
