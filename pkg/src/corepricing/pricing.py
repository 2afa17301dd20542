"""Core-selecting payment rules over the full core, by constraint generation.

``project_onto_core`` is the quadratic rule: the core point nearest a
reference (by default the Vickrey prices).  ``mrc_quadratic_price`` first
finds the minimum core revenue with an exact LP and then projects onto the
core slice with that revenue.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Mapping, Optional

import numpy as np

from .auction import AuctionInstance, check_efficient, vickrey_prices
from .core import (
    VIOLATION_TOL,
    CorePolytope,
    constraint_for,
    find_most_violated_coalition,
    initial_polytope,
)
from .errors import InvalidInputError, NumericalFailure
from .money import quantize, to_fraction
from .qp import ProjectionResult, project_onto_polytope, stack_rows
from .simplex import Tableau, maximize

MAX_ROUNDS = 1_000
REVENUE_BAND = 1e-9

RULES = ("vickrey", "quad-core", "mrc-quad")


def _add_cut(instance, poly: CorePolytope, coalition) -> CorePolytope:
    row = constraint_for(instance, poly.winners, coalition)
    members = [w for w, a in zip(poly.winners, row.indicator) if a]
    if len(members) == 1:
        # C = W - j style rows are plain lower bounds
        return poly.with_lower(members[0], row.rhs)
    for old in poly.constraints:
        if old.indicator == row.indicator and old.rhs >= row.rhs:
            raise NumericalFailure("separation returned a row that is already enforced")
    return poly.with_constraint(row)


def _warm_start(poly, x, anchor, extra_rows=None, extra_rhs=None):
    """Move ``x`` toward the feasible ``anchor`` just far enough to satisfy
    every row; all old rows hold along the segment by convexity."""
    G, h, _ = stack_rows(poly, extra_rows, extra_rhs)
    gx, ga = G @ x, G @ anchor
    t = 0.0
    for a, b, rhs in zip(gx, ga, h):
        if a < rhs and b > a:
            t = max(t, (rhs - a) / (b - a))
    return x + min(t, 1.0) * (anchor - x)


def _reference_vector(instance, order, reference) -> np.ndarray:
    if reference is None:
        reference = vickrey_prices(instance, order)
    if isinstance(reference, Mapping):
        if set(reference) != set(order):
            raise InvalidInputError("reference must cover exactly the winners")
        return np.array([float(reference[w]) for w in order])
    return np.array([float(x) for x in reference])


def project_onto_core(
    instance: AuctionInstance,
    winners: Iterable[str],
    reference=None,
    tol: float = VIOLATION_TOL,
    max_rounds: int = MAX_ROUNDS,
) -> ProjectionResult:
    """Quadratic-rule prices: projection of ``reference`` (Vickrey prices if
    omitted) onto the core of ``winners``.

    Blocking coalitions are generated on demand by the separation oracle;
    each round warm-starts the active-set solver from the previous answer.
    """
    order = tuple(sorted(winners))
    check_efficient(instance, order)
    r = _reference_vector(instance, order, reference)
    poly = initial_polytope(instance, order)
    anchor = np.array([float(instance.amount(w)) for w in order])
    start = anchor
    history = []
    for rnd in range(1, max_rounds + 1):
        res = project_onto_polytope(poly, r, start=start)
        history.append(float(np.sum((res.prices - r) ** 2)))
        hit = find_most_violated_coalition(instance, order, res.price_map(), tol)
        if hit is None:
            res.rounds = rnd
            res.objective_history = history
            return res
        poly = _add_cut(instance, poly, hit[0])
        start = _warm_start(poly, res.prices, anchor)
    raise NumericalFailure(f"constraint generation exceeded {max_rounds} rounds", best=res.prices)


@dataclass(frozen=True)
class RevenueCertificate:
    """Dual solution of ``min sum(p)`` over the generated rows.

    ``core_duals`` align with ``polytope.constraints``; ``lower_duals`` and
    ``upper_duals`` with the winners.  Weak duality plus the fact that every
    row is a genuine core row makes ``dual_value`` a lower bound on revenue
    over the whole core.
    """

    polytope: CorePolytope
    core_duals: tuple
    lower_duals: tuple
    upper_duals: tuple
    dual_value: Fraction
    lp_prices: tuple

    def verify(self) -> bool:
        poly = self.polytope
        n = len(poly.winners)
        lam, nu, mu = self.core_duals, self.lower_duals, self.upper_duals
        if any(x < 0 for x in (*lam, *nu, *mu)):
            return False
        for i in range(n):
            col = sum((l for l, c in zip(lam, poly.constraints) if c.indicator[i]), Fraction(0))
            if col + nu[i] - mu[i] != 1:
                return False
        value = (
            sum((l * to_fraction(c.rhs) for l, c in zip(lam, poly.constraints)), Fraction(0))
            + sum((a * to_fraction(b) for a, b in zip(nu, poly.lower)), Fraction(0))
            - sum((a * to_fraction(b) for a, b in zip(mu, poly.upper)), Fraction(0))
        )
        return value == self.dual_value == sum(self.lp_prices, Fraction(0))


def _min_revenue_lp(poly: CorePolytope):
    order = poly.winners
    n = len(order)
    if any(u is None for u in poly.upper):
        raise InvalidInputError("minimum revenue needs finite upper bounds")
    u = [to_fraction(x) for x in poly.upper]
    lo = [to_fraction(x) for x in poly.lower]
    M, q = [], []
    for c in poly.constraints:
        M.append(list(c.indicator))
        q.append(sum((u[i] for i in range(n) if c.indicator[i]), Fraction(0)) - to_fraction(c.rhs))
    for i in range(n):
        M.append([1 if k == i else 0 for k in range(n)])
        q.append(u[i] - lo[i])
    sol = maximize([1] * n, M, q)
    prices = tuple(ui - yi for ui, yi in zip(u, sol.y))
    k = len(poly.constraints)
    cert = RevenueCertificate(poly, sol.duals[:k], sol.duals[k:], sol.reduced_costs,
                              sum(u, Fraction(0)) - sol.value, prices)
    return prices, cert


class _RevenueLP:
    """The LP of ``_min_revenue_lp`` kept solved while cuts arrive.

    New coalition rows and tightened lower bounds are appended to the
    tableau.  A superseded lower-bound row is strictly slack, so its dual is
    zero and the duals fold back onto the polytope's rows unchanged.
    """

    def __init__(self, poly: CorePolytope):
        if any(u is None for u in poly.upper):
            raise InvalidInputError("minimum revenue needs finite upper bounds")
        self.u = [to_fraction(x) for x in poly.upper]
        n = len(self.u)
        self.kinds = []
        M, q = [], []
        for k, c in enumerate(poly.constraints):
            M.append(list(c.indicator))
            q.append(self._core_bound(c))
            self.kinds.append(("core", k))
        for i in range(n):
            M.append([1 if k == i else 0 for k in range(n)])
            q.append(self.u[i] - to_fraction(poly.lower[i]))
            self.kinds.append(("lower", i))
        self.tab = Tableau([1] * n, M, q)
        self.poly = poly

    def _core_bound(self, c) -> Fraction:
        return sum((u for u, a in zip(self.u, c.indicator) if a), Fraction(0)) - to_fraction(c.rhs)

    def update(self, poly: CorePolytope):
        old = self.poly
        n = len(self.u)
        for k in range(len(old.constraints), len(poly.constraints)):
            c = poly.constraints[k]
            self.tab.add_row(c.indicator, self._core_bound(c))
            self.kinds.append(("core", k))
        for i, (a, b) in enumerate(zip(old.lower, poly.lower)):
            if b != a:
                self.tab.add_row([1 if k == i else 0 for k in range(n)], self.u[i] - to_fraction(b))
                self.kinds.append(("lower", i))
        self.poly = poly

    def solve(self):
        sol = self.tab.solve()
        poly = self.poly
        core = [Fraction(0)] * len(poly.constraints)
        lower = [Fraction(0)] * len(self.u)
        for (kind, k), d in zip(self.kinds, sol.duals):
            if kind == "core":
                core[k] += d
            else:
                lower[k] += d
        prices = tuple(ui - yi for ui, yi in zip(self.u, sol.y))
        cert = RevenueCertificate(poly, tuple(core), tuple(lower), sol.reduced_costs,
                                  sum(self.u, Fraction(0)) - sol.value, prices)
        return prices, cert


def min_core_revenue_certificate(
    instance: AuctionInstance, winners: Iterable[str], max_rounds: int = MAX_ROUNDS
) -> RevenueCertificate:
    order = tuple(sorted(winners))
    check_efficient(instance, order)
    poly = initial_polytope(instance, order)
    lp = _RevenueLP(poly)
    for _ in range(max_rounds):
        prices, cert = lp.solve()
        hit = find_most_violated_coalition(instance, order, dict(zip(order, prices)), tol=0)
        if hit is None:
            if not cert.verify():  # pragma: no cover - folded duals are exact in practice
                cert = _min_revenue_lp(poly)[1]
            return cert
        poly = _add_cut(instance, poly, hit[0])
        lp.update(poly)
    raise NumericalFailure(f"minimum-revenue constraint generation exceeded {max_rounds} rounds")


def min_core_revenue(instance: AuctionInstance, winners: Iterable[str]) -> Fraction:
    """Smallest total payment of any core price vector, exactly."""
    return min_core_revenue_certificate(instance, winners).dual_value


@dataclass
class MrcResult:
    min_revenue: Fraction
    projection: ProjectionResult
    revenue_certificate: RevenueCertificate

    @property
    def prices(self) -> np.ndarray:
        return self.projection.prices

    def price_map(self) -> dict:
        return self.projection.price_map()


def mrc_quadratic_price(
    instance: AuctionInstance,
    winners: Iterable[str],
    reference=None,
    tol: float = VIOLATION_TOL,
    max_rounds: int = MAX_ROUNDS,
) -> MrcResult:
    """Minimum-revenue-core point nearest ``reference`` (Vickrey by default)."""
    order = tuple(sorted(winners))
    cert = min_core_revenue_certificate(instance, order, max_rounds)
    R = cert.dual_value
    r = _reference_vector(instance, order, reference)
    n = len(order)
    band_rows = np.vstack([np.ones(n), -np.ones(n)])
    band_rhs = np.array([float(R), -(float(R) + REVENUE_BAND)])
    anchor = np.array([float(x) for x in cert.lp_prices])
    poly = cert.polytope
    start = anchor
    for rnd in range(1, max_rounds + 1):
        res = project_onto_polytope(poly, r, start=start, extra_rows=band_rows, extra_rhs=band_rhs)
        hit = find_most_violated_coalition(instance, order, res.price_map(), tol)
        if hit is None:
            res.rounds = rnd
            return MrcResult(R, res, cert)
        poly = _add_cut(instance, poly, hit[0])
        start = _warm_start(poly, res.prices, anchor, band_rows, band_rhs)
    raise NumericalFailure(f"constraint generation exceeded {max_rounds} rounds", best=res.prices)


def rule_prices(instance: AuctionInstance, winners: Iterable[str], rule: str) -> dict:
    """Prices under a named rule, quantized to the instance's money quantum."""
    order = tuple(sorted(winners))
    if rule == "vickrey":
        return vickrey_prices(instance, order)
    if rule == "quad-core":
        raw = project_onto_core(instance, order).price_map()
    elif rule == "mrc-quad":
        raw = mrc_quadratic_price(instance, order).price_map()
    else:
        raise InvalidInputError(f"unknown rule {rule!r}; expected one of {RULES}")
    return {w: quantize(x, instance.quantum) for w, x in raw.items()}
