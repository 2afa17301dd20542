"""Exact maximum-weight set packing by depth-first branch and bound.

Bundles are integer bitmasks.  The search branches on items (most contended
first): either one of the bundles containing the item is accepted, or the
item stays unsold.  The bound adds, for every undecided item, the best
per-item share ``weight / |bundle|`` of any bundle covering it that is
still compatible with the bundles already accepted.

Weights may be ``int``, ``Fraction`` or ``float``.  Integer and rational
weights give an exact optimum; float weights are used by the separation
oracle where only the optimal value matters.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence


def _share(weight, size: int):
    if isinstance(weight, int):
        return -(-weight // size)
    if isinstance(weight, float):
        # inflate slightly so the bound stays an upper bound after rounding
        return weight / size * (1 + 1e-12) + 1e-300
    return Fraction(weight) / size


def max_weight_packing(masks: Sequence[int], weights: Sequence, exclude=()) -> tuple:
    """Return ``(best_weight, chosen)`` for the heaviest disjoint sub-family.

    ``chosen`` is a tuple of indices into ``masks``.  Entries with weight
    <= 0 and indices in ``exclude`` never enter the packing.  Among equal
    optima the first one met by the search is kept, so callers wanting a
    specific tie-break must encode it in the weights.
    """
    excluded = set(exclude)
    cands = [i for i, w in enumerate(weights) if w > 0 and i not in excluded and masks[i]]
    zero = weights[0] * 0 if len(weights) else 0
    if not cands:
        return zero, ()

    by_item: dict[int, list[int]] = {}
    for c in cands:
        m = masks[c]
        while m:
            low = m & -m
            by_item.setdefault(low.bit_length() - 1, []).append(c)
            m ^= low

    shares = {}
    for item, cs in by_item.items():
        cs.sort(key=lambda c: (-weights[c], c))
        shares[item] = sorted(((_share(weights[c], masks[c].bit_count()), c) for c in cs),
                              key=lambda sc: -sc[0])

    order = sorted(by_item, key=lambda i: (-len(by_item[i]), i))
    n_order = len(order)
    best_value = zero
    best_set: tuple = ()

    def bound(pos, used):
        # best share among bundles still compatible with the partial packing
        total = zero
        for i in order[pos:]:
            if used >> i & 1:
                continue
            for sh, c in shares[i]:
                if not masks[c] & used:
                    total += sh
                    break
        return total

    def dfs(pos, used, value, chosen):
        nonlocal best_value, best_set
        while pos < n_order and used >> order[pos] & 1:
            pos += 1
        if value > best_value:
            best_value, best_set = value, tuple(chosen)
        if pos == n_order or value + bound(pos, used) <= best_value:
            return
        item = order[pos]
        for c in by_item[item]:
            m = masks[c]
            if m & used:
                continue
            chosen.append(c)
            dfs(pos + 1, used | m, value + weights[c], chosen)
            chosen.pop()
        dfs(pos + 1, used | (1 << item), value, chosen)

    dfs(0, 0, zero, [])
    return best_value, tuple(sorted(best_set))
