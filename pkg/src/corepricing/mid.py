"""Price curves of one winner's payment as a function of its own bid, and the
marginal incentive to deviate (MID): the steepest rate at which the payment
rises per unit of bid.

Star curves are traced exactly (rational breakpoints).  Generic curves are
sampled on a grid and refined where the slope changes.  The module also
builds the two-scenario family that shows no core-selecting rule can keep
MID below ``1 - 1/w`` with ``w`` winners.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_FLOOR, Decimal
from fractions import Fraction
from typing import Callable, Sequence

from .auction import LEX, AuctionInstance, Bid, TieBreakPolicy, solve_wdp, vickrey_prices
from .errors import ConstructionError, InvalidInputError, RangeInvalidError
from .money import DEFAULT_QUANTUM, money_str, parse_money, quantize, to_fraction
from .pricing import mrc_quadratic_price, project_onto_core
from .star import StarInstance, star_core_price, star_mrc_price

SLOPE_TOL = 1e-8

_ALIASES = {
    "quadratic": "quad-core", "quad-core": "quad-core", "core": "quad-core",
    "mrc": "mrc-quad", "mrc-quad": "mrc-quad",
    "vickrey": "vickrey",
}


def canonical_rule(rule: str) -> str:
    try:
        return _ALIASES[rule]
    except KeyError:
        raise InvalidInputError(f"unknown rule {rule!r}") from None


@dataclass
class PriceCurve:
    """Piecewise-linear price as a function of ``theta`` (the bid offset).

    ``breakpoints`` are ``(theta, price)`` pairs with strictly increasing
    theta; ``slopes[i]`` is the rate on ``[theta_i, theta_{i+1}]``.  Values
    are ``Fraction`` for exact curves and ``float`` for sampled ones.
    """

    breakpoints: list
    slopes: list = field(default_factory=list)
    rule: str = ""

    def __post_init__(self):
        pts = [(x, y) for x, y in self.breakpoints]
        if not pts:
            raise InvalidInputError("a price curve needs at least one point")
        for (a, _), (b, _) in zip(pts, pts[1:]):
            if not b > a:
                raise InvalidInputError("curve abscissae must be strictly increasing")
        self.breakpoints = pts
        if not self.slopes:
            self.slopes = [(y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(pts, pts[1:])]
        if len(self.slopes) != len(pts) - 1:
            raise InvalidInputError("one slope per segment is required")

    @classmethod
    def from_points(cls, points: Sequence, rule: str = "") -> "PriceCurve":
        return cls(sorted(points, key=lambda p: p[0]), rule=rule)

    @property
    def thetas(self) -> list:
        return [x for x, _ in self.breakpoints]

    @property
    def prices(self) -> list:
        return [y for _, y in self.breakpoints]

    def is_consistent(self, tol: float = 1e-9) -> bool:
        for (x0, y0), (x1, y1), s in zip(self.breakpoints, self.breakpoints[1:], self.slopes):
            if abs(float(y0 + s * (x1 - x0) - y1)) > tol:
                return False
        return True

    def value_at(self, theta):
        pts = self.breakpoints
        if theta < pts[0][0] or theta > pts[-1][0]:
            raise InvalidInputError("theta outside the curve's range")
        for (x0, y0), (x1, _), s in zip(pts, pts[1:], self.slopes):
            if theta <= x1:
                return y0 + s * (theta - x0)
        return pts[-1][1]

    def kinks(self, tol: float = 1e-9) -> list:
        """Interior abscissae where the slope changes by more than ``tol``."""
        return [
            self.breakpoints[i + 1][0]
            for i, (a, b) in enumerate(zip(self.slopes, self.slopes[1:]))
            if abs(float(a - b)) > tol
        ]

    def simplified(self, tol: float = 0.0) -> "PriceCurve":
        """Drop interior points between segments of equal slope."""
        keep = [self.breakpoints[0]]
        for i in range(1, len(self.breakpoints) - 1):
            if abs(float(self.slopes[i - 1] - self.slopes[i])) > tol:
                keep.append(self.breakpoints[i])
        if len(self.breakpoints) > 1:
            keep.append(self.breakpoints[-1])
        return PriceCurve(keep, rule=self.rule)

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["theta", "price", "slope_right"])
        for i, (x, y) in enumerate(self.breakpoints):
            slope = _num(self.slopes[i]) if i < len(self.slopes) else ""
            out.writerow([_num(x), _num(y), slope])
        return buf.getvalue()


def _num(x) -> str:
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else repr(float(x))
    if isinstance(x, Decimal):
        return money_str(x)
    return repr(float(x))


@dataclass(frozen=True)
class MidReport:
    max_slope: object
    arg_theta: object
    rule: str
    violations: tuple = ()

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "max_slope": float(self.max_slope),
            "max_slope_exact": str(self.max_slope),
            "arg_theta": None if self.arg_theta is None else float(self.arg_theta),
            "violations": [
                {"from": float(a), "to": float(b), "slope": float(s)} for a, b, s in self.violations
            ],
        }


def compute_mid(curve: PriceCurve, tol: float = SLOPE_TOL) -> MidReport:
    """Largest segment slope and every segment steeper than ``1 + tol``."""
    if not curve.slopes:
        return MidReport(Fraction(0) if isinstance(curve.breakpoints[0][1], Fraction) else 0.0,
                         curve.breakpoints[0][0], curve.rule)
    best = max(range(len(curve.slopes)), key=lambda i: (curve.slopes[i], -i))
    bad = tuple(
        (curve.breakpoints[i][0], curve.breakpoints[i + 1][0], s)
        for i, s in enumerate(curve.slopes)
        if s > 1 + tol
    )
    return MidReport(curve.slopes[best], curve.breakpoints[best][0], curve.rule, bad)


# -- exact tracing of star curves ---------------------------------------------

# irrational-looking interior probes make accidental collinearity of a kinked
# function practically impossible
_PROBES = (Fraction(38_196_601, 100_000_000), Fraction(70_710_678, 100_000_000))


def _is_linear(f, a, b, fa, fb) -> bool:
    s = (fb - fa) / (b - a)
    return all(f(a + t * (b - a)) == fa + s * t * (b - a) for t in _PROBES)


def _edge_slope(f, x, fx, width, toward: int) -> Fraction:
    """One-sided slope at ``x`` (``toward`` = +1 right, -1 left): shrink the
    step until two successive secants agree."""
    h = width / 2
    prev = None
    for _ in range(80):
        y = x + toward * h
        s = (f(y) - fx) / (y - x)
        if s == prev:
            return s
        prev = s
        h /= 2
    return prev


def _trace(f, a, b, fa, fb, out: list, floor: Fraction):
    if b - a <= floor or _is_linear(f, a, b, fa, fb):
        out.append((b, fb))
        return
    sa = _edge_slope(f, a, fa, b - a, +1)
    sb = _edge_slope(f, b, fb, b - a, -1)
    split = None
    if sa != sb:
        # where the two edge lines meet; a single kink in (a, b) sits there
        x = (fb - fa + sa * a - sb * b) / (sa - sb)
        if a < x < b:
            split = x
    if split is None:
        split = (a + b) / 2
    fs = f(split)
    _trace(f, a, split, fa, fs, out, floor)
    _trace(f, split, b, fs, fb, out, floor)


def trace_piecewise_linear(f: Callable, lo, hi, seeds: Sequence = (), rule: str = "") -> PriceCurve:
    """Exact breakpoints of a continuous piecewise-linear ``f`` on ``[lo, hi]``.

    ``f`` must map ``Fraction`` to ``Fraction``.  ``seeds`` are known kink
    candidates used as the initial partition.
    """
    lo, hi = Fraction(lo), Fraction(hi)
    if not hi > lo:
        raise InvalidInputError("the sweep range must have positive length")
    grid = sorted({lo, hi} | {Fraction(s) for s in seeds if lo < s < hi})
    floor = (hi - lo) / 10**12
    pts = [(lo, f(lo))]
    for a, b in zip(grid, grid[1:]):
        _trace(f, a, b, pts[-1][1], f(b), pts, floor)
    return PriceCurve(pts, rule=rule).simplified()


def star_seeds(star: StarInstance, theta_max) -> list:
    """Kink candidates: discount saturations and the second revenue threshold."""
    seeds = {d - e for ds, e in zip(star.deltas, star.eta) for d in ds}
    if star.second_threshold is not None:
        seeds.add(star.second_threshold - star.v0)
    return sorted(s for s in seeds if 0 < s < to_fraction(theta_max))


def sweep_star_curve(star: StarInstance, theta_max, rule: str = "quadratic") -> PriceCurve:
    """Buyer zero's price over ``theta in [0, theta_max]`` with exact breakpoints.

    ``rule`` is ``quadratic`` or ``mrc``; ``relaxed`` traces the price with
    buyer zero's bid constraint dropped.
    """
    tmax = to_fraction(theta_max)
    if tmax <= 0:
        raise InvalidInputError("theta_max must be positive")
    if rule == "relaxed":
        from .star import solve_sigma

        f = lambda t: solve_sigma(star, t).p0_relaxed
        name = "relaxed"
    else:
        name = canonical_rule(rule)
        if name == "quad-core":
            f = lambda t: star_core_price(star, t)
        elif name == "mrc-quad":
            f = lambda t: star_mrc_price(star, t)
        else:
            raise InvalidInputError("star sweeps support the quadratic and mrc rules")
    return trace_piecewise_linear(f, 0, tmax, star_seeds(star, tmax), rule=name)


# -- sampled curves on generic instances ----------------------------------------

def _price_of(instance: AuctionInstance, winners, buyer: str, rule: str) -> float:
    if rule == "vickrey":
        return float(vickrey_prices(instance, winners)[buyer])
    if rule == "quad-core":
        return float(project_onto_core(instance, winners).price_map()[buyer])
    return float(mrc_quadratic_price(instance, winners).price_map()[buyer])


def _evaluate(args):
    instance, buyer, bid, rule, tie, expected = args
    inst = instance.with_bid(buyer, bid)
    winners = solve_wdp(inst, tie).winners
    if winners != expected:
        return bid, None
    return bid, _price_of(inst, sorted(winners), buyer, rule)


def _grid(lo: Decimal, hi: Decimal, step: Decimal, quantum: Decimal) -> list:
    pts = []
    k = 0
    while True:
        x = quantize(lo + k * step, quantum)
        if x >= hi:
            break
        pts.append(x)
        k += 1
    pts.append(hi)
    return pts


def sweep_generic_curve(
    instance: AuctionInstance,
    buyer: str,
    bid_range: Sequence,
    step=None,
    rule: str = "quad-core",
    tie: TieBreakPolicy = LEX,
    jobs: int = 1,
    refine: bool = True,
    slope_tol: float = 1e-7,
) -> PriceCurve:
    """Sample ``buyer``'s price while its bid moves over ``bid_range``.

    The curve's abscissa is the offset from the low end of the range.  The
    winner set at the low end must contain ``buyer`` and may not change
    anywhere on the grid; otherwise :class:`RangeInvalidError` reports the
    first bid at which it does.  Intervals around slope changes are bisected
    down to ``1e-6`` of the range (never below the money quantum).
    """
    rule = canonical_rule(rule)
    q = instance.quantum
    lo, hi = (parse_money(x, q) if not isinstance(x, Decimal) else x for x in bid_range)
    if not hi > lo:
        raise InvalidInputError("bid range must have positive length")
    instance.index(buyer)
    expected = solve_wdp(instance.with_bid(buyer, lo), tie).winners
    if buyer not in expected:
        raise InvalidInputError(f"{buyer!r} does not win at the low end of the range")
    width = hi - lo
    step = quantize(width / 200, q) if step is None else Decimal(str(step))
    if step <= 0:
        step = q
    floor = max(quantize(width * Decimal("1e-6"), q), q)

    pool = ProcessPoolExecutor(jobs) if jobs and jobs > 1 else None

    def run(bids):
        tasks = [(instance, buyer, b, rule, tie, expected) for b in bids]
        res = list(pool.map(_evaluate, tasks)) if pool else [_evaluate(t) for t in tasks]
        for b, p in sorted(res):
            if p is None:
                raise RangeInvalidError(
                    f"winner set changes when {buyer!r} bids {money_str(b)}", crossing_bid=b
                )
        return dict(res)

    try:
        values = run(_grid(lo, hi, step, q))
        for _ in range(60 if refine else 0):
            xs = sorted(values)
            slopes = [(values[b] - values[a]) / float(b - a) for a, b in zip(xs, xs[1:])]
            new = set()
            for i in range(len(slopes) - 1):
                if abs(slopes[i + 1] - slopes[i]) > slope_tol:
                    for a, b in ((xs[i], xs[i + 1]), (xs[i + 1], xs[i + 2])):
                        if b - a > floor:
                            mid = quantize((a + b) / 2, q)
                            if a < mid < b and mid not in values:
                                new.add(mid)
            if not new:
                break
            values.update(run(sorted(new)))
    finally:
        if pool:
            pool.shutdown()
    xs = sorted(values)
    return PriceCurve([(float(x - lo), values[x]) for x in xs], rule=rule)


# -- the lower-bound construction -------------------------------------------------

@dataclass(frozen=True)
class LowerBoundScenario:
    """Two auctions differing only in ``deviating_buyer``'s bid.

    ``w`` small buyers want one distinct item each and a large buyer wants
    all of them.  In scenario two every small buyer bids ``1 + delta`` and
    the large buyer ``w``; in scenario one the deviating buyer lowers its
    bid to ``1 - (w - 1) delta`` so the small buyers exactly tie the large
    one.
    """

    w: int
    delta: Decimal
    scenario_one: AuctionInstance
    scenario_two: AuctionInstance
    deviating_buyer: str
    small_buyers: tuple
    tie: TieBreakPolicy

    @property
    def bid_increase(self) -> Decimal:
        b = self.deviating_buyer
        return self.scenario_two.amount(b) - self.scenario_one.amount(b)


def generate_lower_bound_scenario(w: int, delta, quantum: Decimal = DEFAULT_QUANTUM) -> LowerBoundScenario:
    """Build the scenario pair for ``w`` winners and offset ``delta``.

    ``delta`` is rounded down to the money quantum before the bids are
    formed, so every bid is exact and the tie in scenario one is exact.
    """
    if not isinstance(w, int) or w < 2:
        raise InvalidInputError("w must be an integer >= 2")
    d = to_fraction(delta)
    if not 0 < d <= Fraction(1, w - 1):
        raise InvalidInputError(f"delta must lie in (0, 1/(w-1)] = (0, {1 / (w - 1):.6g}]")
    dq = (Decimal(d.numerator) / Decimal(d.denominator)).quantize(quantum, rounding=ROUND_FLOOR)
    if dq <= 0:
        raise InvalidInputError("delta is smaller than the money quantum")
    items = tuple(f"i{k}" for k in range(1, w + 1))
    small = tuple(f"s{k}" for k in range(1, w + 1))
    big = Bid("big", Decimal(w), frozenset(items))

    def build(first_bid):
        bids = [Bid(small[0], first_bid, frozenset([items[0]]))]
        bids += [Bid(s, 1 + dq, frozenset([i])) for s, i in zip(small[1:], items[1:])]
        return AuctionInstance(items, tuple(bids) + (big,), quantum)

    one = build(1 - (w - 1) * dq)
    two = build(1 + dq)
    return LowerBoundScenario(w, dq, one, two, small[0], small, TieBreakPolicy.prefer(small))


@dataclass(frozen=True)
class LowerBoundReport:
    w: int
    delta: Decimal
    rule: str
    bid_one: Decimal
    bid_two: Decimal
    price_one: Decimal
    price_two: Decimal
    prices_one: dict
    price_increase: Decimal
    bid_increase: Decimal
    ratio: Fraction
    bound: Fraction

    @property
    def scenario_one_exact(self) -> bool:
        """Every scenario-one price equals the corresponding bid exactly."""
        return all(p == b for p, b in self.prices_one.values())

    @property
    def holds(self) -> bool:
        return self.ratio >= self.bound - Fraction(1, 10**8)

    def to_json(self) -> dict:
        return {
            "w": self.w,
            "delta": money_str(self.delta),
            "rule": self.rule,
            "bid_one": money_str(self.bid_one),
            "bid_two": money_str(self.bid_two),
            "price_one": money_str(self.price_one),
            "price_two": money_str(self.price_two),
            "price_increase": money_str(self.price_increase),
            "bid_increase": money_str(self.bid_increase),
            "ratio": float(self.ratio),
            "ratio_exact": str(self.ratio),
            "bound": float(self.bound),
            "scenario_one_prices_equal_bids": self.scenario_one_exact,
            "holds": self.holds,
        }


def _rule_map(instance, winners, rule) -> dict:
    if rule == "vickrey":
        raw = vickrey_prices(instance, winners)
    elif rule == "quad-core":
        raw = project_onto_core(instance, winners).price_map()
    else:
        raw = mrc_quadratic_price(instance, winners).price_map()
    return {w: quantize(x, instance.quantum) for w, x in raw.items()}


def verify_lower_bound(scenario: LowerBoundScenario, rule: str = "quad-core") -> LowerBoundReport:
    """Price the deviating buyer in both scenarios and report the ratio of
    price increase to bid increase (``>= 1 - 1/w`` for core rules)."""
    rule = canonical_rule(rule)
    small = frozenset(scenario.small_buyers)
    for inst in (scenario.scenario_one, scenario.scenario_two):
        got = solve_wdp(inst, scenario.tie).winners
        if got != small:
            raise ConstructionError(f"scenario winners {sorted(got)} differ from the small buyers")
    i = scenario.deviating_buyer
    p1 = _rule_map(scenario.scenario_one, sorted(small), rule)
    p2 = _rule_map(scenario.scenario_two, sorted(small), rule)
    b1, b2 = scenario.scenario_one.amount(i), scenario.scenario_two.amount(i)
    dp, db = p2[i] - p1[i], b2 - b1
    return LowerBoundReport(
        w=scenario.w,
        delta=scenario.delta,
        rule=rule,
        bid_one=b1,
        bid_two=b2,
        price_one=p1[i],
        price_two=p2[i],
        prices_one={w: (p1[w], scenario.scenario_one.amount(w)) for w in sorted(small)},
        price_increase=dp,
        bid_increase=db,
        ratio=to_fraction(dp) / to_fraction(db),
        bound=1 - Fraction(1, scenario.w),
    )
