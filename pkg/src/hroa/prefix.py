"""IP prefix primitives shared by every encoding scheme.

A prefix is a node in the binary trie over addresses: ``bits`` holds the
full 32- or 128-bit address integer with every bit past ``prefixlen``
forced to zero, so trie arithmetic is plain integer shifting.  An address
block is a prefix plus a maxLength bound and stands for the complete
sub-tree of prefixes between ``prefixlen`` and ``max_length``.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass

V4 = 4
V6 = 6
WIDTH = {V4: 32, V6: 128}

# expand() refuses blocks taller than this unless the caller raises the cap;
# a height-h block materializes 2^(h+1) - 1 prefixes.
DEFAULT_EXPANSION_CAP = 20


class PrefixFormatError(ValueError):
    """Input text is not a valid prefix, block, or VRP row."""


class FamilyMismatchError(ValueError):
    """An operation mixed IPv4 and IPv6 operands."""


class ExpansionCapError(ValueError):
    """A block is taller than the configured expansion cap."""


@dataclass(frozen=True, slots=True, order=True)
class Prefix:
    """One trie node.  Orders by (family, bits, prefixlen)."""

    family: int
    bits: int
    prefixlen: int

    def __post_init__(self) -> None:
        if self.family not in WIDTH:
            raise ValueError(f"bad family {self.family!r}")
        width = WIDTH[self.family]
        if not 0 <= self.prefixlen <= width:
            raise ValueError(f"prefixlen {self.prefixlen} out of range for v{self.family}")
        if not 0 <= self.bits < 1 << width:
            raise ValueError("address bits out of range")
        host = width - self.prefixlen
        if self.bits & ((1 << host) - 1):
            raise ValueError(f"host bits set below /{self.prefixlen}")

    @property
    def width(self) -> int:
        return WIDTH[self.family]

    def __str__(self) -> str:
        if self.family == V4:
            addr = ipaddress.IPv4Address(self.bits)
        else:
            addr = ipaddress.IPv6Address(self.bits)
        return f"{addr}/{self.prefixlen}"


@dataclass(frozen=True, slots=True, order=True)
class AddressBlock:
    """A prefix with a maxLength bound (prefixlen <= max_length <= width)."""

    prefix: Prefix
    max_length: int

    def __post_init__(self) -> None:
        if not self.prefix.prefixlen <= self.max_length <= self.prefix.width:
            raise ValueError(
                f"max_length {self.max_length} out of range for {self.prefix}"
            )

    @property
    def height(self) -> int:
        return self.max_length - self.prefix.prefixlen

    def __str__(self) -> str:
        return f"{self.prefix}-{self.max_length}"


@dataclass(frozen=True, slots=True, order=True)
class Vrp:
    """A validated payload row: origin AS number plus one address block."""

    asn: int
    block: AddressBlock

    def __post_init__(self) -> None:
        if not 0 <= self.asn < 1 << 32:
            raise ValueError(f"asn {self.asn} out of range")


def parse_prefix(text: str, strict: bool = True) -> Prefix:
    """Parse ``addr/len``.  strict=False masks stray host bits instead of failing."""
    if "/" not in text:
        raise PrefixFormatError(f"missing /len in {text!r}")
    try:
        net = ipaddress.ip_network(text.strip(), strict=strict)
    except ValueError as exc:
        raise PrefixFormatError(str(exc)) from None
    family = V4 if net.version == 4 else V6
    return Prefix(family, int(net.network_address), net.prefixlen)


def format_prefix(prefix: Prefix) -> str:
    return str(prefix)


def covers(outer: Prefix, inner: Prefix) -> bool:
    """True when inner lies in outer's sub-tree (reflexive)."""
    if outer.family != inner.family:
        raise FamilyMismatchError(f"{outer} vs {inner}")
    if outer.prefixlen > inner.prefixlen:
        return False
    shift = outer.width - outer.prefixlen
    return inner.bits >> shift == outer.bits >> shift


def children(prefix: Prefix) -> tuple[Prefix, Prefix]:
    """The two one-bit-longer prefixes under this one (left = appended 0)."""
    if prefix.prefixlen >= prefix.width:
        raise ValueError(f"{prefix} has no children")
    plen = prefix.prefixlen + 1
    hi = 1 << (prefix.width - plen)
    return (
        Prefix(prefix.family, prefix.bits, plen),
        Prefix(prefix.family, prefix.bits | hi, plen),
    )


def parent(prefix: Prefix) -> Prefix:
    if prefix.prefixlen == 0:
        raise ValueError("/0 has no parent")
    plen = prefix.prefixlen - 1
    mask = ~((1 << (prefix.width - plen)) - 1)
    return Prefix(prefix.family, prefix.bits & mask, plen)


def expand(block: AddressBlock, cap: int = DEFAULT_EXPANSION_CAP) -> set[Prefix]:
    """Every prefix the block authorizes: the full sub-tree down to max_length.

    Yields exactly 2^(height+1) - 1 prefixes; refuses heights above ``cap``.
    """
    if block.height > cap:
        raise ExpansionCapError(
            f"block height {block.height} exceeds expansion cap {cap}"
        )
    out = {block.prefix}
    frontier = [block.prefix]
    for _ in range(block.height):
        nxt = []
        for p in frontier:
            nxt.extend(children(p))
        out.update(nxt)
        frontier = nxt
    return out


def sorted_prefixes(prefixes) -> list[Prefix]:
    """Canonical (family, bits, prefixlen) ordering."""
    return sorted(prefixes)
