"""Hybrid encoder: route each address block to its cheaper representation.

Tall blocks (max_length far beyond the prefix length) compress well as a
single maxLength PDU; short ones are cheaper folded into shared sub-tree
bitmaps.  The split point is the block height threshold: height >=
threshold rides the maxLength path, anything lower is expanded into plain
prefixes and bitmap-encoded.  Threshold 0 therefore means "always
maxLength" and an infinite threshold means "always bitmap".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import wire
from .bmcodec import HangingLevels, SubTreeBlock, decode_block, encode_batch
from .mlcodec import compress_minimal
from .prefix import (
    DEFAULT_EXPANSION_CAP,
    V4,
    V6,
    AddressBlock,
    Prefix,
    expand,
)

DEFAULT_HEIGHT_THRESHOLD = 3


def _default_hanging() -> dict[int, HangingLevels]:
    return {V4: HangingLevels.default(V4), V6: HangingLevels.default(V6)}


@dataclass(frozen=True)
class HybridConfig:
    """Knobs for the hybrid split.

    ``delta_l_threshold`` may be ``math.inf`` (pure bitmap); finite values
    must stay within the expansion cap since sub-threshold blocks get
    expanded.
    """

    delta_l_threshold: float = DEFAULT_HEIGHT_THRESHOLD
    hanging: Mapping[int, HangingLevels] = field(default_factory=_default_hanging)
    aggregate: bool = False
    expansion_cap: int = DEFAULT_EXPANSION_CAP

    def __post_init__(self) -> None:
        if self.delta_l_threshold < 0:
            raise ValueError("threshold must be >= 0")
        if math.isfinite(self.delta_l_threshold):
            if self.delta_l_threshold > self.expansion_cap:
                raise ValueError("threshold exceeds the expansion cap")
        for fam in (V4, V6):
            if fam not in self.hanging:
                raise ValueError(f"no hanging-level profile for v{fam}")

    def levels(self, family: int) -> HangingLevels:
        return self.hanging[family]


@dataclass(frozen=True)
class AggregatedGroup:
    """Every bitmap block of one AS and one family, merged for the wire."""

    asn: int
    family: int
    blocks: tuple[SubTreeBlock, ...]

    def __post_init__(self) -> None:
        if not self.blocks:
            raise ValueError("empty aggregation group")
        fams = {b.family for b in self.blocks}
        if fams != {self.family}:
            raise ValueError("mixed families in one aggregation group")
        ids = [b.id for b in self.blocks]
        if list(sorted(ids)) != ids or len(set(ids)) != len(ids):
            raise ValueError("group blocks must have ascending unique ids")


@dataclass(frozen=True)
class HybridPayload:
    """One AS's encoded authorization: maxLength blocks plus bitmap blocks."""

    asn: int
    ml_blocks: tuple[AddressBlock, ...]
    bm_blocks: tuple[SubTreeBlock, ...]
    aggregated: tuple[AggregatedGroup, ...] | None = None

    @property
    def unit_count(self) -> int:
        """Payload PDUs this turns into on the wire."""
        if self.aggregated is not None:
            return len(self.ml_blocks) + len(self.aggregated)
        return len(self.ml_blocks) + len(self.bm_blocks)

    def wire_units(self) -> list:
        """The units pdu_size understands, in canonical emission order."""
        units: list = list(self.ml_blocks)
        if self.aggregated is not None:
            units.extend(self.aggregated)
        else:
            units.extend(self.bm_blocks)
        return units


def aggregate_blocks(blocks: Iterable[SubTreeBlock], asn: int) -> AggregatedGroup:
    """Merge same-family blocks into one wire group, sorted by id."""
    blist = sorted(blocks, key=lambda b: b.id)
    if not blist:
        raise ValueError("nothing to aggregate")
    fams = {b.family for b in blist}
    if len(fams) != 1:
        raise ValueError("cannot aggregate across families")
    return AggregatedGroup(asn, fams.pop(), tuple(blist))


def _as_blocks(cfg: HybridConfig, items, recompress: bool) -> list[AddressBlock]:
    """Normalize the input to canonical address blocks."""
    seq = list(items)
    if not seq:
        raise ValueError("empty authorization set")
    if all(isinstance(x, Prefix) for x in seq):
        return compress_minimal(seq)
    if not all(isinstance(x, AddressBlock) for x in seq):
        raise TypeError("input must be all prefixes or all address blocks")
    if recompress:
        prefixes: set[Prefix] = set()
        for b in seq:
            prefixes |= expand(b, cfg.expansion_cap)
        return compress_minimal(prefixes)
    return sorted(set(seq))


def hybrid_encode(
    cfg: HybridConfig,
    asn: int,
    items: Iterable[Prefix] | Iterable[AddressBlock],
    recompress: bool = False,
) -> HybridPayload:
    """Encode one AS's authorization set.

    Prefix input is first compressed to minimal blocks; block input is
    taken as-is unless ``recompress`` is set.  Blocks at least
    ``delta_l_threshold`` tall keep their maxLength form, the rest are
    expanded and folded into per-family bitmaps.
    """
    blocks = _as_blocks(cfg, items, recompress)
    ml: list[AddressBlock] = []
    short: dict[int, set[Prefix]] = {V4: set(), V6: set()}
    for b in blocks:
        if b.height >= cfg.delta_l_threshold:
            ml.append(b)
        else:
            short[b.prefix.family] |= expand(b, cfg.expansion_cap)
    bm: list[SubTreeBlock] = []
    for fam in (V4, V6):
        if short[fam]:
            bm.extend(encode_batch(cfg.levels(fam), short[fam]))
    aggregated = None
    if cfg.aggregate:
        groups = [
            aggregate_blocks([b for b in bm if b.family == fam], asn)
            for fam in (V4, V6)
            if any(b.family == fam for b in bm)
        ]
        aggregated = tuple(groups)
    return HybridPayload(asn, tuple(ml), tuple(bm), aggregated)


def hybrid_decode(cfg: HybridConfig, payload: HybridPayload) -> dict[int, set[Prefix]]:
    """Rebuild {asn: prefixes} from a payload.  Inverse of hybrid_encode."""
    out: set[Prefix] = set()
    for b in payload.ml_blocks:
        out |= expand(b, cfg.expansion_cap)
    for sb in payload.bm_blocks:
        flag, prefixes = decode_block(cfg.levels(sb.family), sb)
        if flag:
            raise ValueError("withdrawal block inside an authorization payload")
        out |= prefixes
    if payload.aggregated is not None:
        agg: set[Prefix] = set()
        for group in payload.aggregated:
            for sb in group.blocks:
                flag, prefixes = decode_block(cfg.levels(sb.family), sb)
                if flag:
                    raise ValueError("withdrawal block inside an authorization payload")
                agg |= prefixes
        flat = set()
        for sb in payload.bm_blocks:
            flat |= decode_block(cfg.levels(sb.family), sb)[1]
        if agg != flat:
            raise ValueError("aggregated groups disagree with flat blocks")
    return {payload.asn: out}


@dataclass(frozen=True)
class SweepCell:
    pdu_count: int
    total_bytes: int


def sweep_parameters(
    inputs: Mapping[int, Iterable[Prefix] | Iterable[AddressBlock]],
    thresholds: Iterable[float],
    level_multiples: Iterable[int],
    aggregate: bool = False,
    expansion_cap: int = DEFAULT_EXPANSION_CAP,
) -> dict[tuple[float, int], SweepCell]:
    """Total PDU count and bytes for every (threshold, level multiple) pair."""
    table: dict[tuple[float, int], SweepCell] = {}
    materialized = {asn: list(items) for asn, items in inputs.items()}
    for step in level_multiples:
        hanging = {
            V4: HangingLevels.multiples_of(step, V4),
            V6: HangingLevels.multiples_of(step, V6),
        }
        for thr in thresholds:
            cfg = HybridConfig(
                delta_l_threshold=thr,
                hanging=hanging,
                aggregate=aggregate,
                expansion_cap=expansion_cap,
            )
            count = 0
            nbytes = 0
            for asn, items in materialized.items():
                payload = hybrid_encode(cfg, asn, items)
                for unit in payload.wire_units():
                    count += 1
                    nbytes += wire.pdu_size(unit)
            table[(thr, step)] = SweepCell(count, nbytes)
    return table
