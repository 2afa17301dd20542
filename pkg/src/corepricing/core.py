"""The core region of an outcome: coalition constraints ``A p >= beta`` plus
bounds ``lower <= p <= upper``, membership tests and the separation oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .auction import AuctionInstance, is_feasible
from .errors import InvalidInputError, ResourceLimitError
from .money import money_str, to_fraction
from .packing import max_weight_packing

VIOLATION_TOL = 1e-9


@dataclass(frozen=True)
class CoreConstraint:
    """``sum(p[i] for i with indicator[i] == 1) >= rhs``.

    ``indicator`` is aligned with the owning polytope's ``winners`` order.
    ``coalition`` is the blocking coalition the row came from (may be empty
    for rows that are not tied to a single coalition).
    """

    coalition: frozenset
    indicator: tuple
    rhs: object

    def __post_init__(self):
        if any(a not in (0, 1) for a in self.indicator):
            raise InvalidInputError("indicator entries must be 0 or 1")
        if self.rhs < 0:
            raise InvalidInputError("constraint right-hand side must be nonnegative")

    def members(self, winners: Sequence[str]) -> frozenset:
        return frozenset(w for w, a in zip(winners, self.indicator) if a)

    def slack(self, p: Sequence) -> object:
        return sum((x for x, a in zip(p, self.indicator) if a), type(self.rhs)(0)) - self.rhs


@dataclass(frozen=True)
class CorePolytope:
    """Working set of core rows for a fixed winner set.

    ``upper[i] is None`` means the coordinate has no upper bound (used for the
    relaxed problem where one buyer's individual rationality is dropped).
    """

    winners: tuple
    constraints: tuple = ()
    upper: tuple = ()
    lower: tuple = ()

    def __post_init__(self):
        n = len(self.winners)
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "upper", tuple(self.upper) if self.upper else (None,) * n)
        object.__setattr__(self, "lower", tuple(self.lower) if self.lower else (0,) * n)
        if len(self.upper) != n or len(self.lower) != n:
            raise InvalidInputError("bounds must align with winners")
        for c in self.constraints:
            if len(c.indicator) != n:
                raise InvalidInputError("constraint indicator length does not match winners")

    @property
    def upper_bounds(self) -> dict:
        return dict(zip(self.winners, self.upper))

    @property
    def lower_bounds(self) -> dict:
        return dict(zip(self.winners, self.lower))

    def with_constraint(self, row: CoreConstraint) -> "CorePolytope":
        return CorePolytope(self.winners, self.constraints + (row,), self.upper, self.lower)

    def with_lower(self, winner: str, value) -> "CorePolytope":
        lower = list(self.lower)
        i = self.winners.index(winner)
        if value > lower[i]:
            lower[i] = value
        return CorePolytope(self.winners, self.constraints, self.upper, tuple(lower))

    def arrays(self):
        """Float arrays ``(A, beta, lower, upper)``; missing upper bounds are ``inf``."""
        n = len(self.winners)
        A = np.array([c.indicator for c in self.constraints], dtype=float).reshape(-1, n)
        beta = np.array([float(c.rhs) for c in self.constraints], dtype=float)
        lower = np.array([float(x) for x in self.lower], dtype=float)
        upper = np.array([np.inf if x is None else float(x) for x in self.upper], dtype=float)
        return A, beta, lower, upper

    def contains(self, p: Sequence, tol: float = VIOLATION_TOL) -> bool:
        p = np.asarray([float(x) for x in p])
        A, beta, lower, upper = self.arrays()
        if np.any(p < lower - tol) or np.any(p > upper + tol):
            return False
        return not len(beta) or bool(np.all(A @ p >= beta - tol))

    def to_json(self) -> dict:
        def num(x):
            if x is None:
                return None
            if isinstance(x, Decimal):
                return money_str(x)
            return str(x)

        return {
            "winners": list(self.winners),
            "constraints": [
                {
                    "coalition": sorted(c.coalition),
                    "members": sorted(c.members(self.winners)),
                    "rhs": num(c.rhs),
                }
                for c in self.constraints
            ],
            "lower": {w: num(x) for w, x in zip(self.winners, self.lower)},
            "upper": {w: num(x) for w, x in zip(self.winners, self.upper)},
        }


def initial_polytope(instance: AuctionInstance, winners: Iterable[str]) -> CorePolytope:
    """No coalition rows yet; bounds ``0 <= p <= b`` on the winners."""
    order = tuple(sorted(winners))
    return CorePolytope(order, (), tuple(instance.amount(w) for w in order), (Decimal(0),) * len(order))


def constraint_for(instance: AuctionInstance, winners: Sequence[str], coalition: Iterable[str]) -> CoreConstraint:
    """Strongest row implied by ``coalition``.

    Only winners whose bundles overlap the newcomers' bundles have to leave,
    so the indicator is the set of winners in conflict with ``C \\ W``.
    """
    coalition = frozenset(coalition)
    win = set(winners)
    newcomers = [b for b in coalition if b not in win]
    mask = 0
    for b in newcomers:
        mask |= instance.mask(b)
    indicator = tuple(1 if instance.mask(w) & mask else 0 for w in winners)
    rhs = sum((instance.amount(b) for b in newcomers), Decimal(0))
    return CoreConstraint(coalition, indicator, rhs)


def _check_prices(instance: AuctionInstance, winners, prices: Mapping, tol: float):
    if set(prices) != set(winners):
        raise InvalidInputError("prices must be given for exactly the winners")
    for w in winners:
        p = prices[w]
        if float(p) < -tol or float(p) > float(instance.amount(w)) + tol:
            raise InvalidInputError(f"price of {w!r} is outside [0, bid]")


def find_most_violated_coalition(
    instance: AuctionInstance, winners: Iterable[str], prices: Mapping, tol: float = VIOLATION_TOL
) -> Optional[tuple]:
    """Separation oracle: the feasible coalition that would raise revenue the
    most if losers paid their bids and retained winners kept their prices.

    Returns ``(coalition, violation)`` or ``None`` when no coalition blocks
    by more than ``tol``.  The search is a winner-determination problem in
    which winners are valued at their current price, solved in exact
    rational arithmetic.
    """
    win = set(winners)
    # floats convert exactly to binary fractions, so the search is always
    # exact; an inflated float bound could not prune the many tied branches
    values = [to_fraction(prices[b.buyer]) if b.buyer in win else to_fraction(b.amount) for b in instance.bids]
    paid = sum((to_fraction(prices[w]) for w in win), Fraction(0))
    den = math.lcm(*(v.denominator for v in values), paid.denominator)
    ints = [v.numerator * (den // v.denominator) for v in values]
    best, chosen = max_weight_packing(instance.masks, ints)
    violation = Fraction(best, den) - paid
    if violation <= tol:
        return None
    return frozenset(instance.bids[i].buyer for i in chosen), violation


def is_in_core(instance: AuctionInstance, winners: Iterable[str], prices: Mapping, tol: float = VIOLATION_TOL):
    """Return ``(in_core, blocking)`` where ``blocking`` lists the most
    violated coalition found (empty when the outcome is in the core)."""
    winners = list(winners)
    _check_prices(instance, winners, prices, tol)
    hit = find_most_violated_coalition(instance, winners, prices, tol)
    if hit is None:
        return True, []
    return False, [hit[0]]


def _connected_loser_sets(instance: AuctionInstance, winners, cap: int):
    """Feasible sets of positive-bid losers whose conflicting winners form a
    connected pattern.  Any other loser set splits into pieces touching
    disjoint winners, and its row is the sum of the pieces' rows."""
    win = set(winners)
    wmask = {w: instance.mask(w) for w in win}
    losers = [b.buyer for b in instance.bids if b.buyer not in win and b.amount > 0]
    touches = {
        l: frozenset(w for w in win if wmask[w] & instance.mask(l)) for l in losers
    }
    neighbours = {
        l: [m for m in losers if m != l and touches[l] & touches[m] and not instance.mask(l) & instance.mask(m)]
        for l in losers
    }
    found = set()
    frontier = [frozenset([l]) for l in losers]
    found.update(frontier)
    while frontier:
        nxt = []
        for s in frontier:
            used = 0
            for l in s:
                used |= instance.mask(l)
            for l in s:
                for m in neighbours[l]:
                    if m in s or instance.mask(m) & used:
                        continue
                    t = s | {m}
                    if t not in found:
                        found.add(t)
                        nxt.append(t)
                        if len(found) > cap:
                            raise ResourceLimitError(f"more than {cap} candidate coalitions")
        frontier = nxt
    return sorted(found, key=lambda s: (len(s), sorted(s)))


def enumerate_core_constraints(
    instance: AuctionInstance, winners: Iterable[str], max_coalitions: int = 100_000
) -> CorePolytope:
    """Full core polytope for small instances.

    One row per connected set of losers, with rows that are dominated
    (smaller indicator and larger right-hand side exists) or already implied
    by the lower bounds dropped.  Rows touching a single winner become lower
    bounds.
    """
    poly = initial_polytope(instance, winners)
    order = poly.winners
    lower = dict(zip(order, poly.lower))
    best: dict = {}
    for losers in _connected_loser_sets(instance, order, max_coalitions):
        coalition = frozenset(losers) | _compatible_winners(instance, order, losers)
        row = constraint_for(instance, order, coalition)
        members = [w for w, a in zip(order, row.indicator) if a]
        if not members:
            continue
        if len(members) == 1:
            lower[members[0]] = max(lower[members[0]], row.rhs)
            continue
        if row.indicator not in best or row.rhs > best[row.indicator].rhs:
            best[row.indicator] = row

    kept = []
    rows = sorted(best.values(), key=lambda r: (sum(r.indicator), r.indicator))
    for r in rows:
        if sum(lower[w] for w, a in zip(order, r.indicator) if a) >= r.rhs:
            continue
        dominated = any(
            o is not r and o.rhs >= r.rhs and all(a <= b for a, b in zip(o.indicator, r.indicator))
            and (o.rhs > r.rhs or o.indicator != r.indicator)
            for o in rows
        )
        if not dominated:
            kept.append(r)
    return CorePolytope(order, tuple(kept), poly.upper, tuple(lower[w] for w in order))


def _compatible_winners(instance, winners, losers) -> frozenset:
    mask = 0
    for l in losers:
        mask |= instance.mask(l)
    return frozenset(w for w in winners if not instance.mask(w) & mask)


def blocking_coalitions_bruteforce(instance: AuctionInstance, winners: Iterable[str], prices: Mapping, tol=VIOLATION_TOL):
    """All blocking coalitions by exhaustive enumeration (small instances)."""
    from itertools import combinations

    win = set(winners)
    out = []
    n = len(instance.buyers)
    if n > 20:
        raise ResourceLimitError("exhaustive coalition enumeration limited to 20 buyers")
    for k in range(n + 1):
        for c in combinations(instance.buyers, k):
            if not is_feasible(instance, c):
                continue
            lhs = sum(float(prices[w]) for w in win if w not in c)
            rhs = sum(float(instance.amount(b)) for b in c if b not in win)
            if lhs < rhs - tol:
                out.append(frozenset(c))
    return out
