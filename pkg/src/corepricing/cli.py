"""Command-line front end.

    corepricing solve      --input auction.json [--tie lex|prefer:a,b]
    corepricing price      --input auction.json --rule quad-core [--dump-core]
    corepricing sweep      --input auction.json --buyer s1 --bid-min 8 --bid-max 12 --rule quad-core
    corepricing star-sweep --input star.json --theta-max 2 --rule quadratic
    corepricing lowerbound --w 3 --delta 0.25 --rule mrc-quad
    corepricing validate   --input auction.json|star.json

Results go to stdout (or ``--output``) as JSON; curves as CSV.  Errors are
reported as one JSON object on stderr with exit status 1 (bad input),
2 (precondition / infeasible) or 3 (numerical failure).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Optional

from .auction import LEX, AuctionInstance, TieBreakPolicy, solve_wdp, vickrey_prices
from .core import VIOLATION_TOL, is_in_core
from .errors import InvalidInputError, PricingError
from .mid import (
    canonical_rule,
    compute_mid,
    generate_lower_bound_scenario,
    sweep_generic_curve,
    sweep_star_curve,
    verify_lower_bound,
)
from .money import money_str, parse_money, quantize
from .pricing import RULES, mrc_quadratic_price, project_onto_core
from .star import StarInstance

COMMANDS = ("solve", "price", "sweep", "star-sweep", "lowerbound", "validate")


@dataclass
class RunConfig:
    command: str
    rule: Optional[str] = None
    input: Optional[str] = None
    output: Optional[str] = None
    tolerance: float = VIOLATION_TOL
    tie: str = "lex"
    theta_max: Optional[str] = None
    step: Optional[str] = None
    buyer: Optional[str] = None
    bid_min: Optional[str] = None
    bid_max: Optional[str] = None
    w: Optional[int] = None
    delta: Optional[str] = None
    jobs: int = 1
    dump_core: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InvalidInputError(f"unknown command {self.command!r}")
        if self.command in ("price", "sweep", "star-sweep", "lowerbound") and not self.rule:
            raise InvalidInputError(f"--rule is required for {self.command}")
        if self.tolerance is not None and self.tolerance < 0:
            raise InvalidInputError("--tolerance must be nonnegative")
        if self.jobs is not None and self.jobs < 1:
            raise InvalidInputError("--jobs must be positive")


def _parse_tie(text: str) -> TieBreakPolicy:
    if text == "lex":
        return LEX
    if text.startswith("prefer:"):
        ids = [x for x in text[len("prefer:"):].split(",") if x]
        if not ids:
            raise InvalidInputError("--tie prefer: needs at least one buyer id")
        return TieBreakPolicy.prefer(ids)
    raise InvalidInputError(f"--tie must be 'lex' or 'prefer:<ids>', got {text!r}")


def _load_json(path: Optional[str]):
    if not path:
        raise InvalidInputError("--input is required")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"invalid JSON in {path}: {exc}") from None


def _winners(instance: AuctionInstance, tie: TieBreakPolicy) -> list:
    return sorted(solve_wdp(instance, tie).winners)


def _money_map(prices: dict) -> dict:
    return {w: money_str(p) for w, p in sorted(prices.items())}


def cmd_solve(cfg: RunConfig) -> dict:
    inst = AuctionInstance.from_json(_load_json(cfg.input))
    res = solve_wdp(inst, _parse_tie(cfg.tie))
    return {"winners": sorted(res.winners), "welfare": money_str(res.welfare)}


def cmd_price(cfg: RunConfig) -> dict:
    inst = AuctionInstance.from_json(_load_json(cfg.input))
    rule = canonical_rule(cfg.rule)
    winners = _winners(inst, _parse_tie(cfg.tie))
    out = {"rule": rule, "winners": winners}
    if rule == "vickrey":
        prices = vickrey_prices(inst, winners)
    else:
        if rule == "quad-core":
            res = project_onto_core(inst, winners, tol=cfg.tolerance)
        else:
            mrc = mrc_quadratic_price(inst, winners, tol=cfg.tolerance)
            res = mrc.projection
            out["min_revenue"] = money_str(quantize(mrc.min_revenue, inst.quantum))
            out["revenue_certificate_valid"] = mrc.revenue_certificate.verify()
        prices = {w: quantize(x, inst.quantum) for w, x in res.price_map().items()}
        out["certificate"] = res.certificate.to_json()
        out["rounds"] = res.rounds
        if cfg.dump_core:
            out["core"] = res.polytope.to_json()
    out["prices"] = _money_map(prices)
    out["revenue"] = money_str(sum(prices.values(), Decimal(0)))
    return out


def _write_curve(cfg: RunConfig, curve, extra: dict) -> dict:
    report = compute_mid(curve).to_json()
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(curve.to_csv())
        return {**extra, "mid": report, "curve_csv": cfg.output}
    return {**extra, "mid": report, "curve_csv": curve.to_csv()}


def cmd_sweep(cfg: RunConfig) -> dict:
    inst = AuctionInstance.from_json(_load_json(cfg.input))
    if not cfg.buyer:
        raise InvalidInputError("--buyer is required for sweep")
    lo = parse_money(cfg.bid_min, inst.quantum) if cfg.bid_min is not None else inst.amount(cfg.buyer)
    if cfg.bid_max is None:
        raise InvalidInputError("--bid-max is required for sweep")
    hi = parse_money(cfg.bid_max, inst.quantum)
    step = parse_money(cfg.step, inst.quantum) if cfg.step is not None else None
    curve = sweep_generic_curve(inst, cfg.buyer, (lo, hi), step, cfg.rule,
                                _parse_tie(cfg.tie), jobs=cfg.jobs)
    return _write_curve(cfg, curve, {"buyer": cfg.buyer, "bid_min": money_str(lo), "bid_max": money_str(hi)})


def cmd_star_sweep(cfg: RunConfig) -> dict:
    star = StarInstance.from_json(_load_json(cfg.input))
    if cfg.theta_max is None:
        raise InvalidInputError("--theta-max is required for star-sweep")
    curve = sweep_star_curve(star, parse_money(cfg.theta_max), cfg.rule)
    return _write_curve(cfg, curve, {"v0": str(star.v0), "theta_max": cfg.theta_max})


def cmd_lowerbound(cfg: RunConfig) -> dict:
    if cfg.w is None or cfg.delta is None:
        raise InvalidInputError("--w and --delta are required for lowerbound")
    scenario = generate_lower_bound_scenario(cfg.w, parse_money(cfg.delta))
    return verify_lower_bound(scenario, cfg.rule).to_json()


def _check(name: str, ok: bool, detail="") -> dict:
    return {"property": name, "pass": bool(ok), "detail": detail}


def validate_auction(inst: AuctionInstance, tie: TieBreakPolicy, tol: float = VIOLATION_TOL) -> list:
    from .core import enumerate_core_constraints
    from .errors import ResourceLimitError
    from .qp import project_onto_polytope

    winners = _winners(inst, tie)
    out = []
    vick = vickrey_prices(inst, winners)
    out.append(_check("vickrey_within_bids", all(0 <= vick[w] <= inst.amount(w) for w in winners)))
    quad = project_onto_core(inst, winners, tol=tol)
    out.append(_check("quad_core_kkt", quad.certificate.ok(), quad.certificate.to_json()))
    out.append(_check("quad_core_in_core", is_in_core(inst, winners, quad.price_map(), 1e-7)[0]))
    hist = quad.objective_history
    out.append(_check("objective_nondecreasing", all(b >= a - 1e-9 for a, b in zip(hist, hist[1:]))))
    mrc = mrc_quadratic_price(inst, winners, tol=tol)
    out.append(_check("mrc_revenue_certificate", mrc.revenue_certificate.verify()))
    out.append(_check("mrc_in_core", is_in_core(inst, winners, mrc.price_map(), 1e-7)[0]))
    out.append(_check("mrc_revenue_is_minimum",
                      abs(sum(mrc.prices) - float(mrc.min_revenue)) <= 1e-7,
                      f"{sum(mrc.prices):.9g} vs {float(mrc.min_revenue):.9g}"))
    out.append(_check("mrc_revenue_at_most_quadratic", float(mrc.min_revenue) <= quad.revenue + 1e-7))
    try:
        full = enumerate_core_constraints(inst, winners, max_coalitions=20_000)
        ref = [float(vick[w]) for w in full.winners]
        direct = project_onto_polytope(full, ref)
        gap = float(max(abs(direct.prices - quad.prices))) if len(winners) else 0.0
        out.append(_check("generation_matches_enumeration", gap <= 1e-8, f"{gap:.3e}"))
    except ResourceLimitError as exc:
        out.append(_check("generation_matches_enumeration", True, f"skipped: {exc}"))
    return out


def validate_star(star: StarInstance, points: int = 41) -> list:
    from .pricing import project_onto_core as generic_core
    from .qp import project_onto_polytope
    from .star import (
        expanded_core_polytope,
        lemma1_residuals,
        solve_sigma,
        star_reference,
        star_to_instance,
    )

    out = []
    top = max(max(d) for d in star.deltas) + max(star.eta) + 1
    grid = [top * Fraction(i, points - 1) for i in range(points)]
    sols = [solve_sigma(star, t) for t in grid]
    worst = Fraction(0)
    bounds = True
    for s in sols:
        res = lemma1_residuals(star, s)
        worst = max(worst, *(v for k, v in res.items() if not isinstance(v, bool)))
        bounds &= res["lambda_below_max_gap"] and res["lambda_below_cap"]
    out.append(_check("optimality_residuals", worst <= Fraction(1, 10**8), str(worst)))
    out.append(_check("multiplier_bounds", bounds))
    out.append(_check("sigma_nondecreasing", all(b.sigma >= a.sigma for a, b in zip(sols, sols[1:]))))
    for rule in ("quadratic", "mrc"):
        mid = compute_mid(sweep_star_curve(star, top, rule))
        out.append(_check(f"{rule}_slope_at_most_one", not mid.violations, str(mid.max_slope)))
    poly = expanded_core_polytope(star)
    gap = 0.0
    for t in grid[:: max(1, points // 8)]:
        sol = solve_sigma(star, t)
        qp = project_onto_polytope(poly, [float(x) for x in star_reference(star, t)])
        gap = max(gap, max(abs(float(a) - b) for a, b in zip(sol.relaxed_vector(), qp.prices)))
    out.append(_check("analytic_matches_projection", gap <= 1e-8, f"{gap:.3e}"))
    inst, tie = star_to_instance(star, grid[points // 2])
    won = solve_wdp(inst, tie).winners == frozenset(star.winners())
    out.append(_check("designated_winners_efficient", won))
    if won:
        p = generic_core(inst, star.winners()).price_map()["w0"]
        d = abs(p - float(sols[points // 2].p0))
        out.append(_check("hub_price_matches_generic", d <= 1e-6, f"{d:.3e}"))
    return out


def cmd_validate(cfg: RunConfig) -> dict:
    data = _load_json(cfg.input)
    if isinstance(data, dict) and "bundles" in data:
        checks = validate_star(StarInstance.from_json(data))
        kind = "star"
    else:
        checks = validate_auction(AuctionInstance.from_json(data), _parse_tie(cfg.tie), cfg.tolerance)
        kind = "auction"
    return {"kind": kind, "checks": checks, "all_pass": all(c["pass"] for c in checks)}


HANDLERS = {
    "solve": cmd_solve,
    "price": cmd_price,
    "sweep": cmd_sweep,
    "star-sweep": cmd_star_sweep,
    "lowerbound": cmd_lowerbound,
    "validate": cmd_validate,
}


def run(cfg: RunConfig) -> dict:
    return HANDLERS[cfg.command](cfg)


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="corepricing", description="Core-selecting auction pricing tools.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--input")
    parser.add_argument("--output")
    parser.add_argument("--rule", help=f"one of {', '.join(RULES)} (star-sweep also takes quadratic|mrc)")
    parser.add_argument("--tie", default="lex", help="lex or prefer:<id,id,...>")
    parser.add_argument("--tolerance", type=float, default=VIOLATION_TOL)
    parser.add_argument("--theta-max")
    parser.add_argument("--step")
    parser.add_argument("--buyer")
    parser.add_argument("--bid-min")
    parser.add_argument("--bid-max")
    parser.add_argument("--w", type=int)
    parser.add_argument("--delta")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--dump-core", action="store_true")
    return parser


def _emit(text: str, path: Optional[str]):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = RunConfig(
            command=args.command, rule=args.rule, input=args.input, output=args.output,
            tolerance=args.tolerance, tie=args.tie, theta_max=args.theta_max, step=args.step,
            buyer=args.buyer, bid_min=args.bid_min, bid_max=args.bid_max, w=args.w,
            delta=args.delta, jobs=args.jobs, dump_core=args.dump_core,
        )
        result = run(cfg)
    except _ArgumentError as exc:
        sys.stderr.write(json.dumps({"error": "InvalidInputError", "message": str(exc), "exit_code": 1}) + "\n")
        return 1
    except PricingError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        crossing = getattr(exc, "crossing_bid", None)
        if crossing is not None:
            err["crossing_bid"] = money_str(crossing)
        sys.stderr.write(json.dumps(err) + "\n")
        return exc.exit_code
    text = json.dumps(result, indent=2) + "\n"
    # curve commands already wrote the CSV to --output
    _emit(text, None if cfg.command in ("sweep", "star-sweep") else cfg.output)
    if cfg.command == "validate" and not result["all_pass"]:
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
