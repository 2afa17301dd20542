"""Random instance generators and independent brute-force oracles.

Nothing here calls the solvers under test: winner determination and Vickrey
prices by subset enumeration, core rows from every feasible coalition,
projection by Dykstra's alternating projections, and one-dimensional
bisection.
"""
from __future__ import annotations

import random
from decimal import Decimal
from fractions import Fraction
from itertools import combinations

import numpy as np

from corepricing.auction import AuctionInstance, Bid
from corepricing.star import StarInstance


def section_two_instance() -> AuctionInstance:
    """Two small buyers want one item each, a large buyer wants both."""
    return AuctionInstance.build(
        ["a", "b"],
        [("s1", "8", ["a"]), ("s2", "8", ["b"]), ("big", "10", ["a", "b"])],
    )


def random_star(rng: random.Random, J=None, nmax: int = 6, scale: int = 100, digits: int = 3,
                tight: bool = False) -> StarInstance:
    """Star with money values drawn from ``[0, scale]`` on a ``10**-digits`` grid.

    Uniform draws mostly leave ``eta`` far above every gap, where all
    multipliers vanish.  ``tight`` splits each bundle bid among its leaves
    (up to a few percent) so the core rows bind and the curve has kinks.
    """
    J = J or rng.randint(1, 5)
    unit = 10**digits
    q = lambda: Fraction(rng.randint(0, scale * unit), unit)
    snap = lambda x: Fraction(round(x * unit), unit)
    bids, losing, bundles = [], [], []
    for _ in range(J):
        n = rng.randint(1, nmax)
        C = q()
        while True:
            if tight:
                w = [rng.random() + 0.05 for _ in range(n)]
                b = [min(snap(float(C) * x / sum(w) * rng.uniform(0.8, 1.05)), Fraction(scale)) for x in w]
            else:
                b = [q() for _ in range(n)]
            l = [Fraction(rng.randint(0, int(x * unit)), unit) for x in b]
            if max(x - y for x, y in zip(b, l)) > 0:
                break
            C = q()
        bids.append(b)
        losing.append(l)
        bundles.append(C)
    zero = Fraction(rng.randint(0, scale * unit // 5), unit) if tight else q()
    return StarInstance(bids, losing, bundles, zero)


def random_auction(rng: random.Random, n_buyers: int = 8, n_items: int = 4, max_bundle: int = 3,
                   scale: int = 50) -> AuctionInstance:
    items = [f"i{k}" for k in range(n_items)]
    bids = []
    for b in range(n_buyers):
        size = rng.randint(1, min(max_bundle, n_items))
        bundle = rng.sample(items, size)
        amount = Decimal(rng.randint(0, scale * 4)) / 4
        bids.append(Bid(f"b{b:02d}", amount, frozenset(bundle)))
    return AuctionInstance(tuple(items), tuple(bids))


# -- brute force auctions --------------------------------------------------------

def feasible_coalitions(instance: AuctionInstance):
    buyers = instance.buyers
    for k in range(len(buyers) + 1):
        for c in combinations(buyers, k):
            used = set()
            ok = True
            for b in c:
                bundle = instance.bid(b).bundle
                if used & bundle:
                    ok = False
                    break
                used |= bundle
            if ok:
                yield frozenset(c)


def brute_best_welfare(instance: AuctionInstance, exclude=()) -> Fraction:
    skip = set(exclude)
    best = Fraction(0)
    for c in feasible_coalitions(instance):
        if c & skip:
            continue
        best = max(best, sum((Fraction(instance.amount(b)) for b in c), Fraction(0)))
    return best


def brute_vickrey(instance: AuctionInstance, winners) -> dict:
    total = sum((Fraction(instance.amount(b)) for b in winners), Fraction(0))
    return {
        j: brute_best_welfare(instance, exclude=[j]) - (total - Fraction(instance.amount(j)))
        for j in winners
    }


def brute_blocking(instance: AuctionInstance, winners, prices) -> list:
    """Coalitions with ``sum_{W \\ C} p < sum_{C \\ W} b`` (exact arithmetic)."""
    win = set(winners)
    out = []
    for c in feasible_coalitions(instance):
        lhs = sum((Fraction(prices[w]) for w in win - c), Fraction(0))
        rhs = sum((Fraction(instance.amount(b)) for b in c - win), Fraction(0))
        if lhs < rhs:
            out.append(c)
    return out


def brute_core_rows(instance: AuctionInstance, winners):
    """``(A, beta)`` with one row per feasible coalition (strongest rhs per
    indicator), written against the sorted winners."""
    order = sorted(winners)
    win = set(order)
    best = {}
    for c in feasible_coalitions(instance):
        ind = tuple(0 if w in c else 1 for w in order)
        rhs = sum(float(instance.amount(b)) for b in c - win)
        if rhs > best.get(ind, -1.0):
            best[ind] = rhs
    A = np.array([list(k) for k in best], dtype=float).reshape(-1, len(order))
    beta = np.array(list(best.values()), dtype=float)
    return order, A, beta


# -- projection oracles ------------------------------------------------------------

def dykstra_projection(r, A, beta, lower, upper, iters: int = 200_000, tol: float = 1e-13) -> np.ndarray:
    """Projection of ``r`` onto ``{A x >= beta, lower <= x <= upper}`` by
    Dykstra's algorithm (exact projections onto each halfspace and the box)."""
    x = np.array(r, dtype=float)
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    sets = len(A) + 1
    incr = np.zeros((sets, len(x)))
    norms = [float(a @ a) for a in A]
    for _ in range(iters):
        prev, prev_incr = x.copy(), incr.copy()
        for k in range(sets):
            y = x + incr[k]
            if k < len(A):
                a = A[k]
                short = beta[k] - a @ y
                z = y + (short / norms[k]) * a if short > 0 and norms[k] > 0 else y
            else:
                z = np.clip(y, lower, upper)
            incr[k] = y - z
            x = z
        # the iterate alone can stall for a cycle while corrections still move
        feasible = (not len(A) or np.min(A @ x - beta) >= -1e-12) and np.all(x >= lower - 1e-12) \
            and np.all(x <= upper + 1e-12)
        if feasible and np.max(np.abs(x - prev)) < tol and np.max(np.abs(incr - prev_incr)) < tol:
            break
    return x


def bisect_min(f, lo: float, hi: float, iters: int = 200) -> float:
    """Minimizer of a convex function on ``[lo, hi]`` by ternary bisection."""
    for _ in range(iters):
        m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if f(m1) <= f(m2):
            hi = m2
        else:
            lo = m1
    return (lo + hi) / 2


def bisect_root(g, lo: Fraction, hi: Fraction, iters: int = 200) -> Fraction:
    """Root of a nondecreasing function by exact bisection."""
    for _ in range(iters):
        mid = (lo + hi) / 2
        if g(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2
