"""Single-parameter combinatorial auctions: instances, winner determination
and Vickrey prices."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal
from functools import cached_property
from typing import Iterable, Mapping

from .errors import InvalidInputError, PreconditionError
from .money import DEFAULT_QUANTUM, from_units, money_str, parse_money, to_units
from .packing import max_weight_packing


@dataclass(frozen=True)
class Bid:
    buyer: str
    amount: Decimal
    bundle: frozenset


@dataclass(frozen=True)
class AuctionInstance:
    """Items, one bid per buyer, and the money quantum all amounts respect."""

    items: tuple
    bids: tuple
    quantum: Decimal = DEFAULT_QUANTUM

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "bids", tuple(self.bids))
        if len(set(self.items)) != len(self.items):
            raise InvalidInputError("duplicate item identifiers")
        known = set(self.items)
        seen = set()
        for bid in self.bids:
            if bid.buyer in seen:
                raise InvalidInputError(f"duplicate buyer id {bid.buyer!r}")
            seen.add(bid.buyer)
            if not bid.bundle:
                raise InvalidInputError(f"buyer {bid.buyer!r} has an empty bundle")
            if not bid.bundle <= known:
                missing = sorted(map(str, bid.bundle - known))
                raise InvalidInputError(f"buyer {bid.buyer!r} bids on unknown items {missing}")
            if bid.amount < 0:
                raise InvalidInputError(f"buyer {bid.buyer!r} has a negative bid")
            to_units(bid.amount, self.quantum)

    @classmethod
    def build(cls, items: Iterable, bids: Iterable[tuple], quantum: Decimal = DEFAULT_QUANTUM):
        """Convenience constructor from ``(buyer, amount, bundle)`` triples."""
        return cls(
            tuple(items),
            tuple(Bid(b, parse_money(a, quantum), frozenset(s)) for b, a, s in bids),
            quantum,
        )

    @cached_property
    def buyers(self) -> tuple:
        return tuple(b.buyer for b in self.bids)

    @cached_property
    def _index(self) -> dict:
        return {b.buyer: i for i, b in enumerate(self.bids)}

    @cached_property
    def masks(self) -> tuple:
        bit = {item: 1 << i for i, item in enumerate(self.items)}
        return tuple(sum(bit[x] for x in b.bundle) for b in self.bids)

    @cached_property
    def units(self) -> tuple:
        return tuple(to_units(b.amount, self.quantum) for b in self.bids)

    def index(self, buyer: str) -> int:
        try:
            return self._index[buyer]
        except KeyError:
            raise InvalidInputError(f"unknown buyer {buyer!r}") from None

    def bid(self, buyer: str) -> Bid:
        return self.bids[self.index(buyer)]

    def amount(self, buyer: str) -> Decimal:
        return self.bid(buyer).amount

    def mask(self, buyer: str) -> int:
        return self.masks[self.index(buyer)]

    def welfare(self, coalition: Iterable[str]) -> Decimal:
        return sum((self.amount(b) for b in coalition), Decimal(0))

    def with_bid(self, buyer: str, amount) -> "AuctionInstance":
        """Copy of the instance with one buyer's amount replaced."""
        amount = parse_money(amount, self.quantum)
        i = self.index(buyer)
        bids = list(self.bids)
        bids[i] = Bid(buyer, amount, bids[i].bundle)
        return AuctionInstance(self.items, tuple(bids), self.quantum)

    def without(self, buyer: str) -> "AuctionInstance":
        i = self.index(buyer)
        return AuctionInstance(self.items, self.bids[:i] + self.bids[i + 1:], self.quantum)

    def scaled(self, factor) -> "AuctionInstance":
        factor = Decimal(factor)
        return AuctionInstance(
            self.items,
            tuple(Bid(b.buyer, b.amount * factor, b.bundle) for b in self.bids),
            self.quantum,
        )

    # JSON ---------------------------------------------------------------
    @classmethod
    def from_json(cls, data, quantum: Decimal = DEFAULT_QUANTUM) -> "AuctionInstance":
        if isinstance(data, (str, bytes)):
            try:
                data = json.loads(data)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"invalid JSON: {exc}") from None
        try:
            items = tuple(str(x) for x in data["items"])
            bids = tuple(
                Bid(str(b["buyer"]), parse_money(b["amount"], quantum), frozenset(str(x) for x in b["bundle"]))
                for b in data["bids"]
            )
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed instance: missing or invalid field {exc}") from None
        return cls(items, bids, quantum)

    def to_json(self) -> dict:
        return {
            "items": list(self.items),
            "bids": [
                {"buyer": b.buyer, "amount": money_str(b.amount), "bundle": sorted(b.bundle, key=self.items.index)}
                for b in self.bids
            ],
        }


@dataclass(frozen=True)
class TieBreakPolicy:
    """How to choose among welfare-maximizing coalitions.

    ``lex`` keeps the maximizer that includes the alphabetically earliest
    buyers (zero bids never win).  ``prefer`` selects ``coalition`` whenever
    it is itself a maximizer and falls back to ``lex`` otherwise.
    """

    mode: str = "lex"
    coalition: frozenset = frozenset()

    def __post_init__(self):
        if self.mode not in ("lex", "prefer"):
            raise InvalidInputError(f"unknown tie-break mode {self.mode!r}")
        object.__setattr__(self, "coalition", frozenset(self.coalition))

    @classmethod
    def prefer(cls, coalition: Iterable[str]) -> "TieBreakPolicy":
        return cls("prefer", frozenset(coalition))


LEX = TieBreakPolicy()


@dataclass(frozen=True)
class WdpResult:
    winners: frozenset
    welfare: Decimal


@dataclass(frozen=True)
class Outcome:
    winners: frozenset
    prices: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if set(self.prices) != set(self.winners):
            raise InvalidInputError("prices must be defined exactly on the winners")

    @property
    def revenue(self):
        return sum(self.prices.values(), Decimal(0))


def is_feasible(instance: AuctionInstance, coalition: Iterable[str]) -> bool:
    used = 0
    for buyer in coalition:
        m = instance.mask(buyer)
        if used & m:
            return False
        used |= m
    return True


def max_welfare_units(instance: AuctionInstance, exclude: Iterable[str] = ()) -> int:
    """Optimal welfare, in quantum units, optionally with some buyers removed."""
    skip = [instance.index(b) for b in exclude]
    value, _ = max_weight_packing(instance.masks, instance.units, skip)
    return value


def solve_wdp(instance: AuctionInstance, tie: TieBreakPolicy = LEX) -> WdpResult:
    """Efficient allocation with a deterministic choice among ties."""
    n = len(instance.bids)
    rank = {b: r for r, b in enumerate(sorted(instance.buyers))}
    # each unit of money outweighs every combination of tie-break bonuses
    shift = n + 1
    weights = [
        (u << shift) + (1 << (n - rank[b.buyer])) if u > 0 else 0
        for u, b in zip(instance.units, instance.bids)
    ]
    _, chosen = max_weight_packing(instance.masks, weights)
    winners = frozenset(instance.bids[i].buyer for i in chosen)
    best_units = sum(instance.units[i] for i in chosen)

    if tie.mode == "prefer":
        for b in tie.coalition:
            instance.index(b)
        if not is_feasible(instance, tie.coalition):
            raise InvalidInputError("designated tie-break coalition is not feasible")
        if sum(instance.units[instance.index(b)] for b in tie.coalition) == best_units:
            winners = tie.coalition
    return WdpResult(winners, from_units(best_units, instance.quantum))


def check_efficient(instance: AuctionInstance, winners: Iterable[str]) -> int:
    """Raise unless ``winners`` is feasible and welfare-maximizing; return the
    optimal welfare in units."""
    winners = list(winners)
    if not is_feasible(instance, winners):
        raise PreconditionError("winner set is not feasible")
    best = max_welfare_units(instance)
    got = sum(instance.units[instance.index(b)] for b in winners)
    if got != best:
        raise PreconditionError(f"winner set is not efficient (welfare {got} < {best} units)")
    return best


def vickrey_prices(instance: AuctionInstance, winners: Iterable[str]) -> dict:
    """Opportunity-cost price of every winner, as exact decimals."""
    winners = sorted(winners)
    best = check_efficient(instance, winners)
    prices = {}
    for j in winners:
        without_j = max_welfare_units(instance, exclude=[j])
        others = best - instance.units[instance.index(j)]
        prices[j] = from_units(without_j - others, instance.quantum)
    return prices
