"""Exact analysis of the star setting.

A hub item ``0`` is shared by ``J`` bundle bidders; bundle ``j`` also holds
the spoke items ``(j, 1) .. (j, n_j)``.  Every item has a winning and a
losing single-item bidder.  Buyer zero (the hub's winner) bids
``v0 + theta``; everything else is fixed.

All quantities are :class:`fractions.Fraction`, so fixed points, slopes and
breakpoints are exact.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from functools import cached_property
from typing import Optional

import numpy as np

from .auction import AuctionInstance, Bid, TieBreakPolicy
from .core import CoreConstraint, CorePolytope
from .errors import BoundaryPointError, InvalidInputError
from .money import DEFAULT_QUANTUM, money_str, parse_money, to_fraction
from .qp import project_onto_polytope

BUYER_ZERO = "w0"


def leaf_id(j: int, k: int, losing: bool = False) -> str:
    return f"{'l' if losing else 'w'}{j + 1}.{k + 1}"


def bundle_id(j: int) -> str:
    return f"c{j + 1}"


@dataclass(frozen=True)
class StarInstance:
    """Fixed bids of a star market (indices are 0-based internally)."""

    leaf_bids: tuple
    leaf_losing: tuple
    bundle_bids: tuple
    item_zero_losing: Fraction

    def __post_init__(self):
        conv = lambda xs: tuple(to_fraction(x) for x in xs)
        object.__setattr__(self, "leaf_bids", tuple(conv(r) for r in self.leaf_bids))
        object.__setattr__(self, "leaf_losing", tuple(conv(r) for r in self.leaf_losing))
        object.__setattr__(self, "bundle_bids", conv(self.bundle_bids))
        object.__setattr__(self, "item_zero_losing", to_fraction(self.item_zero_losing))
        J = len(self.bundle_bids)
        if J < 1 or len(self.leaf_bids) != J or len(self.leaf_losing) != J:
            raise InvalidInputError("need at least one bundle and matching leaf lists")
        for j in range(J):
            bids, low = self.leaf_bids[j], self.leaf_losing[j]
            if not bids or len(bids) != len(low):
                raise InvalidInputError(f"bundle {j + 1}: leaf bid lists are empty or mismatched")
            if any(x < 0 for x in (*bids, *low, self.bundle_bids[j])):
                raise InvalidInputError("bids must be nonnegative")
            if any(b < l for b, l in zip(bids, low)):
                raise InvalidInputError(f"bundle {j + 1}: a losing leaf bid exceeds the winning one")
            if max(b - l for b, l in zip(bids, low)) <= 0:
                raise InvalidInputError(f"bundle {j + 1}: every leaf has zero gap (degenerate spoke)")
        if self.item_zero_losing < 0:
            raise InvalidInputError("bids must be nonnegative")

    @property
    def J(self) -> int:
        return len(self.bundle_bids)

    @property
    def n(self) -> tuple:
        return tuple(len(r) for r in self.leaf_bids)

    @cached_property
    def deltas(self) -> tuple:
        return tuple(tuple(b - l for b, l in zip(B, L)) for B, L in zip(self.leaf_bids, self.leaf_losing))

    @cached_property
    def v0(self) -> Fraction:
        """Vickrey price of buyer zero (also its smallest winning bid)."""
        return max(self.item_zero_losing, max(C - sum(B) for C, B in zip(self.bundle_bids, self.leaf_bids)))

    @cached_property
    def eta(self) -> tuple:
        return tuple(self.v0 + sum(B) - C for C, B in zip(self.bundle_bids, self.leaf_bids))

    @cached_property
    def _integer_data(self) -> tuple:
        """``(D, deltas * D, eta * D)`` with ``D`` clearing every denominator."""
        vals = [x for row in self.deltas for x in row] + list(self.eta)
        D = math.lcm(*(x.denominator for x in vals))
        return (D, tuple(tuple(int(x * D) for x in row) for row in self.deltas),
                tuple(int(x * D) for x in self.eta))

    @cached_property
    def revenue_thresholds(self) -> tuple:
        """Smallest hub price meeting bundle ``j``'s row with spokes at their losing bids."""
        return tuple(max(C - sum(L), Fraction(0)) for C, L in zip(self.bundle_bids, self.leaf_losing))

    @cached_property
    def second_threshold(self):
        """Second largest revenue threshold, or ``None`` when ``J == 1``."""
        if self.J == 1:
            return None
        return sorted(self.revenue_thresholds, reverse=True)[1]

    def winners(self) -> tuple:
        return (BUYER_ZERO,) + tuple(leaf_id(j, k) for j in range(self.J) for k in range(self.n[j]))

    def scaled(self, factor) -> "StarInstance":
        f = to_fraction(factor)
        return StarInstance(
            tuple(tuple(x * f for x in r) for r in self.leaf_bids),
            tuple(tuple(x * f for x in r) for r in self.leaf_losing),
            tuple(x * f for x in self.bundle_bids),
            self.item_zero_losing * f,
        )

    @classmethod
    def from_json(cls, data) -> "StarInstance":
        if isinstance(data, (str, bytes)):
            try:
                data = json.loads(data)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"invalid JSON: {exc}") from None
        try:
            bundles = data["bundles"]
            return cls(
                tuple(tuple(parse_money(x) for x in b["leaf_bids"]) for b in bundles),
                tuple(tuple(parse_money(x) for x in b["leaf_losing"]) for b in bundles),
                tuple(parse_money(b["bundle_bid"]) for b in bundles),
                parse_money(data["item_zero_losing"]),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed star instance: {exc}") from None

    def to_json(self) -> dict:
        s = lambda x: money_str(_exact_decimal(x))
        return {
            "bundles": [
                {"leaf_bids": [s(x) for x in B], "leaf_losing": [s(x) for x in L], "bundle_bid": s(C)}
                for B, L, C in zip(self.leaf_bids, self.leaf_losing, self.bundle_bids)
            ],
            "item_zero_losing": s(self.item_zero_losing),
        }


def _exact_decimal(x: Fraction, quantum: Decimal = DEFAULT_QUANTUM) -> Decimal:
    d = Decimal(x.numerator) / Decimal(x.denominator)
    if Fraction(d) != x or d % quantum:
        raise InvalidInputError(f"{x} is not a multiple of the money quantum {quantum}")
    return d


def _theta(theta) -> Fraction:
    t = to_fraction(theta)
    if t < 0:
        raise InvalidInputError("theta must be nonnegative")
    return t


def _drops(star: StarInstance, theta: Fraction, j: int) -> list:
    """Vickrey discounts ``min(eta_j + theta, delta_jk)`` of spoke ``j``."""
    cap = star.eta[j] + theta
    return [min(cap, d) for d in star.deltas[j]]


def star_vickrey(star: StarInstance, theta) -> tuple:
    """Vickrey prices of the spoke winners."""
    t = _theta(theta)
    return tuple(
        tuple(b - d for b, d in zip(star.leaf_bids[j], _drops(star, t, j))) for j in range(star.J)
    )


def _solve_level(drops, target: Fraction) -> Fraction:
    """Smallest ``l >= 0`` with ``sum(max(d - l, 0)) <= target``, equality when ``l > 0``."""
    d = sorted(drops, reverse=True)
    if target >= sum(d):
        return Fraction(0)
    acc = 0
    for m, dm in enumerate(d, start=1):
        acc += dm
        level = Fraction(acc - target) / m
        nxt = d[m] if m < len(d) else 0
        if level >= nxt:
            return level
    raise AssertionError("unreachable: level search fell through")


def _level_kinks(drops) -> list:
    """Targets at which ``_solve_level`` changes slope."""
    d = sorted(drops, reverse=True)
    kinks = []
    acc = 0
    for m, dm in enumerate(d, start=1):
        acc += dm
        kinks.append(acc - m * dm)
    kinks.append(acc)
    return kinks


def phi(star: StarInstance, theta, j: int, s) -> Fraction:
    """Multiplier bundle ``j``'s row needs when the others contribute ``s``.

    ``j`` is 0-based.  Nonincreasing and piecewise linear in ``s``.
    """
    s = to_fraction(s)
    if s < 0:
        raise InvalidInputError("s must be nonnegative")
    t = _theta(theta)
    return _solve_level(_drops(star, t, j), s + star.eta[j])


@dataclass(frozen=True)
class StarSolution:
    theta: Fraction
    sigma: Fraction
    lambdas: tuple
    p0_relaxed: Fraction
    p0: Fraction
    vickrey: tuple
    leaf_prices_relaxed: tuple

    @property
    def ir_active(self) -> bool:
        return self.p0_relaxed > self.p0

    def relaxed_vector(self) -> list:
        """Relaxed prices in ``StarInstance.winners()`` order."""
        return [self.p0_relaxed] + [x for row in self.leaf_prices_relaxed for x in row]


def _sigma_on_grid(drops, eta) -> Fraction:
    """Exact fixed point by bisection over the kink grid."""
    J = len(drops)

    def gap(s):
        return s - sum(_solve_level(drops[j], s + eta[j]) for j in range(J))

    hi = sum(max(d) for d in drops)
    grid = {Fraction(0), hi}
    for j in range(J):
        for k in _level_kinks(drops[j]):
            s = k - eta[j]
            if 0 < s < hi:
                grid.add(s)
    grid = sorted(grid)

    # gap is strictly increasing: bisect for the first grid point with gap >= 0
    lo, hi_i = 0, len(grid) - 1
    if gap(grid[0]) >= 0:
        return grid[0]
    while hi_i - lo > 1:
        mid = (lo + hi_i) // 2
        if gap(grid[mid]) >= 0:
            hi_i = mid
        else:
            lo = mid
    a, b = grid[lo], grid[hi_i]
    ga, gb = gap(a), gap(b)
    # gap is linear between adjacent kinks
    return b if gb == 0 else a - ga * (b - a) / (gb - ga)


def _level_float(d: list, target: float) -> float:
    if target >= sum(d):
        return 0.0
    acc = 0.0
    for m, dm in enumerate(d, start=1):
        acc += dm
        level = (acc - target) / m
        if level >= (d[m] if m < len(d) else 0.0):
            return level
    return 0.0


def _sigma_guess(drops, eta) -> Optional[tuple]:
    """Fixed point via a float search for the active piece, solved exactly.

    On the piece where spoke ``j`` has ``m_j`` discounts above its level,
    ``lambda_j = (S_j - sigma - eta_j) / m_j`` with ``S_j`` the sum of those
    discounts, so ``sigma`` solves one linear equation.  The candidate is
    checked exactly and returned with the multipliers; ``None`` means the
    float search picked the wrong piece.  Inputs are integers (scaled).
    """
    J = len(drops)
    fd = [sorted((float(x) for x in d), reverse=True) for d in drops]
    fe = [float(e) for e in eta]
    lo, hi = 0.0, sum(d[0] for d in fd)
    for _ in range(50):
        mid = (lo + hi) / 2
        if mid - sum(_level_float(fd[j], mid + fe[j]) for j in range(J)) >= 0:
            hi = mid
        else:
            lo = mid
    s = (lo + hi) / 2
    num, den = Fraction(0), Fraction(1)
    for j in range(J):
        lam = _level_float(fd[j], s + fe[j])
        if lam <= 1e-12 * (1 + hi):
            continue
        m = max(1, sum(1 for x in fd[j] if x > lam))
        num += Fraction(sum(sorted(drops[j], reverse=True)[:m]) - eta[j], m)
        den += Fraction(1, m)
    sigma = num / den
    if sigma < 0:
        return None
    lambdas = tuple(_solve_level(drops[j], sigma + eta[j]) for j in range(J))
    return (sigma, lambdas) if sigma == sum(lambdas) else None


def solve_sigma(star: StarInstance, theta) -> StarSolution:
    """Fixed point ``sigma = sum_j phi_j(sigma)`` and the prices it induces.

    The right-hand side is piecewise linear and nonincreasing in ``sigma``,
    so ``sigma - sum_j phi_j(sigma)`` is increasing and the root is unique.
    A float search proposes the linear piece holding it, the root is solved
    exactly there and verified; if the check fails the root is bracketed by
    exact bisection over the kink grid instead.
    """
    t = _theta(theta)
    # the fixed point is positively homogeneous in the money values, so solve
    # it on integers scaled by a common denominator and scale back once
    D0, deltas, eta = star._integer_data
    D = math.lcm(D0, t.denominator)
    f = D // D0
    tD = int(t * D)
    scaled = [[min(e * f + tD, d * f) for d in row] for row, e in zip(deltas, eta)]
    etaD = [e * f for e in eta]
    found = _sigma_guess(scaled, etaD)
    if found is None:
        sigmaD = _sigma_on_grid(scaled, etaD)
        found = sigmaD, tuple(_solve_level(scaled[j], sigmaD + etaD[j]) for j in range(star.J))
    sigma = Fraction(found[0]) / D
    lambdas = tuple(Fraction(x) / D for x in found[1])
    drops = [_drops(star, t, j) for j in range(star.J)]

    vick = tuple(
        tuple(b - d for b, d in zip(star.leaf_bids[j], drops[j])) for j in range(star.J)
    )
    leaves = tuple(
        tuple(min(v + lambdas[j], b) for v, b in zip(vick[j], star.leaf_bids[j])) for j in range(star.J)
    )
    p0_relaxed = star.v0 + sigma
    return StarSolution(t, sigma, lambdas, p0_relaxed, min(star.v0 + t, p0_relaxed), vick, leaves)


def lemma1_residuals(star: StarInstance, sol: StarSolution) -> dict:
    """Residuals of the optimality system characterizing the relaxed
    projection, plus the two strict multiplier bounds (as booleans)."""
    t = sol.theta
    res = {"nonneg": Fraction(0), "hub": Fraction(0), "leaves": Fraction(0),
           "row_ineq": Fraction(0), "row_eq": Fraction(0)}
    res["hub"] = abs(sol.p0_relaxed - star.v0 - sum(sol.lambdas))
    below_max_gap = True
    below_cap = True
    for j in range(star.J):
        lam = sol.lambdas[j]
        res["nonneg"] = max(res["nonneg"], -lam)
        for v, b, p in zip(sol.vickrey[j], star.leaf_bids[j], sol.leaf_prices_relaxed[j]):
            res["leaves"] = max(res["leaves"], abs(p - min(v + lam, b)))
        lhs = sol.sigma + star.eta[j]
        rhs = sum(max(d - lam, Fraction(0)) for d in _drops(star, t, j))
        res["row_ineq"] = max(res["row_ineq"], rhs - lhs)
        if lam > 0:
            res["row_eq"] = max(res["row_eq"], abs(lhs - rhs))
        below_max_gap &= lam < max(star.deltas[j])
        if t > 0:
            below_cap &= star.eta[j] + t > lam
    res["lambda_below_max_gap"] = below_max_gap
    res["lambda_below_cap"] = below_cap
    return res


def star_to_instance(star: StarInstance, theta, quantum: Decimal = DEFAULT_QUANTUM):
    """Generic auction for the star with buyer zero bidding ``v0 + theta``.

    Returns ``(instance, tie_policy)``; the policy designates the intended
    winners so that exact ties (e.g. at ``theta = 0``) resolve in their
    favour.
    """
    t = _theta(theta)
    dec = lambda x: _exact_decimal(x, quantum)
    items = ["0"] + [f"{j + 1}.{k + 1}" for j in range(star.J) for k in range(star.n[j])]
    bids = [Bid(BUYER_ZERO, dec(star.v0 + t), frozenset(["0"])),
            Bid("l0", dec(star.item_zero_losing), frozenset(["0"]))]
    for j in range(star.J):
        spoke = []
        for k in range(star.n[j]):
            item = f"{j + 1}.{k + 1}"
            spoke.append(item)
            bids.append(Bid(leaf_id(j, k), dec(star.leaf_bids[j][k]), frozenset([item])))
            bids.append(Bid(leaf_id(j, k, losing=True), dec(star.leaf_losing[j][k]), frozenset([item])))
        bids.append(Bid(bundle_id(j), dec(star.bundle_bids[j]), frozenset(["0", *spoke])))
    inst = AuctionInstance(tuple(items), tuple(bids), quantum)
    return inst, TieBreakPolicy.prefer(star.winners())


def expanded_core_polytope(star: StarInstance) -> CorePolytope:
    """Star core without buyer zero's upper bound (independent of theta)."""
    order = star.winners()
    rows = []
    for j in range(star.J):
        members = {BUYER_ZERO} | {leaf_id(j, k) for k in range(star.n[j])}
        coalition = frozenset({bundle_id(j)} | (set(order) - members))
        rows.append(CoreConstraint(coalition, tuple(1 if w in members else 0 for w in order), star.bundle_bids[j]))
    upper = (None,) + tuple(b for row in star.leaf_bids for b in row)
    lower = (star.v0,) + tuple(l for row in star.leaf_losing for l in row)
    return CorePolytope(order, tuple(rows), upper, lower)


def star_core_polytope(star: StarInstance, theta) -> CorePolytope:
    """The star core with buyer zero's bid ``v0 + theta`` as its upper bound."""
    poly = expanded_core_polytope(star)
    upper = (star.v0 + _theta(theta),) + poly.upper[1:]
    return CorePolytope(poly.winners, poly.constraints, upper, poly.lower)


def star_reference(star: StarInstance, theta) -> list:
    """Vickrey vector ``(v0, v_jk ...)`` in ``winners()`` order."""
    return [star.v0] + [v for row in star_vickrey(star, theta) for v in row]


def star_core_prices(star: StarInstance, theta) -> list:
    """Quadratic-rule price vector for the star.

    Closed form while buyer zero's bid does not bind; otherwise only the hub
    price is analytic and the spokes come from the generic projection.
    """
    sol = solve_sigma(star, theta)
    if not sol.ir_active:
        return [float(x) for x in sol.relaxed_vector()]
    res = project_onto_polytope(star_core_polytope(star, theta), [float(x) for x in star_reference(star, theta)])
    prices = res.prices.copy()
    prices[0] = float(sol.p0)
    return list(prices)


def _count_above(values, level) -> int:
    return sum(1 for v in values if v > level)


def sigma_right_derivative(star: StarInstance, theta, guard=Fraction(1, 10**6)) -> Fraction:
    """Right derivative of ``sigma`` in ``theta`` from the counting formula.

    Raises :class:`BoundaryPointError` when ``theta`` lies within ``guard``
    of a kink: a spoke discount saturating, a moving multiplier crossing a
    gap value, or a change of slope of ``sigma`` or of any multiplier.
    """
    t = _theta(theta)
    g = to_fraction(guard)
    for j in range(star.J):
        for d in star.deltas[j]:
            if abs(star.eta[j] + t - d) <= g:
                raise BoundaryPointError(f"theta={float(t)} is at a discount saturation point")
    here = solve_sigma(star, t)

    def slopes(a: StarSolution, b: StarSolution):
        h = b.theta - a.theta
        return (b.sigma - a.sigma) / h, tuple((y - x) / h for x, y in zip(a.lambdas, b.lambdas))

    right = slopes(here, solve_sigma(star, t + g))
    if slopes(here, solve_sigma(star, t + g / 2)) != right:
        raise BoundaryPointError(f"theta={float(t)}: slope changes just to the right")
    if t >= g:
        left = slopes(solve_sigma(star, t - g), here)
        if slopes(solve_sigma(star, t - g / 2), here) != left or left != right:
            raise BoundaryPointError(f"theta={float(t)} is a breakpoint of sigma")
    # a moving multiplier crossing a gap value changes its active count; a
    # multiplier resting on one does not matter
    for j in range(star.J):
        if right[1][j] != 0 and any(abs(here.lambdas[j] - d) <= g for d in star.deltas[j]):
            raise BoundaryPointError(f"theta={float(t)}: multiplier {j + 1} crosses a gap value")

    moving = [j for j, s in enumerate(right[1]) if s != 0]
    num = Fraction(0)
    den = Fraction(1)
    for j in moving:
        active = _count_above(star.deltas[j], here.lambdas[j])
        num += Fraction(_count_above(star.deltas[j], star.eta[j] + t), active)
        den += Fraction(1, active)
    return num / den


def star_core_price(star: StarInstance, theta) -> Fraction:
    """Buyer zero's quadratic-rule price."""
    return solve_sigma(star, theta).p0


def star_mrc_price(star: StarInstance, theta) -> Fraction:
    """Buyer zero's price under the minimum-revenue-core variant."""
    t = _theta(theta)
    core = solve_sigma(star, t).p0
    second = star.second_threshold
    if second is None:
        return core
    b0 = star.v0 + t
    if b0 <= second:
        return b0
    return max(core, second)
