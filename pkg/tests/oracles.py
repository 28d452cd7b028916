"""Independent brute-force oracles the fast implementations are checked against.

Everything here favors obviousness over speed: string bit-walks, exhaustive
enumeration, frozenset-memoized search.  Nothing imports the code under
test except the value types.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations

from hroa.prefix import WIDTH, AddressBlock, Prefix


def oracle_expand(block: AddressBlock) -> set[Prefix]:
    """Enumerate the block's sub-tree by extending bit strings."""
    width = WIDTH[block.prefix.family]
    base = format(block.prefix.bits, f"0{width}b")[: block.prefix.prefixlen]
    out = set()
    frontier = [base]
    while frontier:
        s = frontier.pop()
        out.add(Prefix(block.prefix.family, int(s + "0" * (width - len(s)), 2), len(s)))
        if len(s) < block.max_length:
            frontier.append(s + "0")
            frontier.append(s + "1")
    return out


def _tree_nodes(node: tuple[int, int], max_length: int, width: int) -> frozenset[tuple[int, int]]:
    """All (bits, len) of the complete tree rooted at node down to max_length."""
    out = {node}
    frontier = [node]
    for _ in range(max_length - node[1]):
        nxt = []
        for bits, plen in frontier:
            hi = 1 << (width - plen - 1)
            nxt.append((bits, plen + 1))
            nxt.append((bits | hi, plen + 1))
        out.update(nxt)
        frontier = nxt
    return frozenset(out)


def oracle_min_partition(prefixes) -> int:
    """Exhaustive minimum over partitions into complete sub-trees.

    Every part must be a (root, max_length) tree fully inside the set, and
    the parts must be disjoint with union equal to the set.
    """
    plist = list(prefixes)
    family = plist[0].family
    width = WIDTH[family]
    whole = frozenset((p.bits, p.prefixlen) for p in plist)

    def blocks_containing(q: tuple[int, int], remaining: frozenset) -> list[frozenset]:
        """Candidate trees inside `remaining` that include node q."""
        cands = []
        bits, plen = q
        for alen in range(plen, -1, -1):
            mask = ~((1 << (width - alen)) - 1)
            anc = (bits & mask, alen)
            if anc not in remaining:
                break  # a tree rooted higher would need this missing node
            for m in range(plen, width + 1):
                tree = _tree_nodes(anc, m, width)
                if not tree <= remaining:
                    break  # taller trees only add more nodes
                cands.append(tree)
        return cands

    @lru_cache(maxsize=None)
    def best(remaining: frozenset) -> int:
        if not remaining:
            return 0
        q = min(remaining, key=lambda n: (n[1], n[0]))
        return min(1 + best(remaining - tree) for tree in blocks_containing(q, remaining))

    return best(whole)


def oracle_num(pairs, width: int, level: int, bound: int) -> int:
    """Distinct level-`level` roots among prefixes of length in [level, bound)."""
    roots = set()
    for bits, plen in pairs:
        if level <= plen < bound:
            roots.add(format(bits, f"0{width}b")[:level])
    return len(roots)


def oracle_optimize(pairs, width: int, model, family: int, h_max: int):
    """Exhaustive search over every legal cut set; returns (cost, levels)."""
    best = None
    positions = list(range(1, width))
    for k in range(len(positions) + 1):
        for combo in combinations(positions, k):
            levels = (0,) + combo
            gaps = [b - a for a, b in zip(levels, levels[1:])]
            gaps.append(width + 1 - levels[-1])
            if max(gaps) > h_max:
                continue
            cost = 0
            bounds = levels + (width + 1,)
            for i, j in zip(bounds, bounds[1:]):
                n = oracle_num(pairs, width, i, j)
                if n:
                    cost += n * model.block_size(family, j - i)
            cand = (cost, len(levels), levels)
            if best is None or cand < best:
                best = cand
    return best[0], best[2]
