import json
import random
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corepricing.auction import solve_wdp, vickrey_prices
from corepricing.errors import BoundaryPointError, InvalidInputError
from corepricing.pricing import mrc_quadratic_price, project_onto_core
from corepricing.qp import project_onto_polytope
from corepricing.star import (
    BUYER_ZERO,
    StarInstance,
    expanded_core_polytope,
    lemma1_residuals,
    phi,
    sigma_right_derivative,
    solve_sigma,
    star_core_price,
    star_core_prices,
    star_mrc_price,
    star_reference,
    star_to_instance,
    star_vickrey,
)

from helpers import bisect_root, random_star


def star_from(deltas, eta, v0=1):
    """Single-bundle star with gaps ``deltas`` (losing leaf bids zero) and
    bundle slack ``eta``."""
    bids = tuple(F(d) for d in deltas)
    return StarInstance((bids,), ((F(0),) * len(bids),), (sum(bids) + v0 - F(eta),), F(v0))


TWO_ONE = star_from([2, 1], 2)
FIVE_ONE = star_from([5, 1], 0)


def test_derived_quantities():
    assert TWO_ONE.v0 == 1 and TWO_ONE.eta == (2,) and TWO_ONE.deltas == ((2, 1),)
    assert FIVE_ONE.v0 == 1 and FIVE_ONE.eta == (0,)
    s = StarInstance.from_json(
        '{"bundles":[{"leaf_bids":["6","6"],"leaf_losing":["4","5"],"bundle_bid":"13"}],"item_zero_losing":"3"}'
    )
    assert s.deltas == ((2, 1),) and s.v0 == 3 and s.eta == (2,)


@pytest.mark.parametrize("bad", [
    dict(leaf_bids=((1,),), leaf_losing=((2,),), bundle_bids=(1,)),
    dict(leaf_bids=((1, 2),), leaf_losing=((1, 2),), bundle_bids=(1,)),
    dict(leaf_bids=((1,),), leaf_losing=((0,),), bundle_bids=(-1,)),
    dict(leaf_bids=(), leaf_losing=(), bundle_bids=()),
])
def test_invalid_stars(bad):
    with pytest.raises(InvalidInputError):
        StarInstance(item_zero_losing=0, **bad)


def test_vickrey_drop():
    assert star_vickrey(FIVE_ONE, 0) == ((5, 1),)
    assert star_vickrey(FIVE_ONE, 2) == ((3, 0),)
    assert star_vickrey(FIVE_ONE, 100) == ((0, 0),)
    with pytest.raises(InvalidInputError):
        star_vickrey(FIVE_ONE, -1)


def test_phi_examples():
    # independent root of the monotone residual
    def oracle(s):
        g = lambda l: (s + 2) - (max(2 - l, 0) + max(1 - l, 0))
        return bisect_root(g, F(0), F(2))

    assert phi(TWO_ONE, 1, 0, 0) == F(1, 2)
    assert phi(TWO_ONE, 1, 0, F(1, 3)) == F(1, 3)
    for s in (F(0), F(1, 3), F(1, 7)):
        assert abs(phi(TWO_ONE, 1, 0, s) - oracle(s)) < F(1, 10**40)
    assert phi(TWO_ONE, 1, 0, 1) == 0
    assert phi(FIVE_ONE, 0, 0, 0) == 0  # degenerate s = eta = 0: minimum solution


def test_sigma_examples():
    for t in (0, F(1, 4), F(1, 2), 1):
        sol = solve_sigma(TWO_ONE, t)
        assert sol.sigma == F(1, 3) and sol.lambdas == (F(1, 3),)
    for t in (0, F(1, 4), F(1, 2), 1):
        assert solve_sigma(FIVE_ONE, t).sigma == F(2, 3) * t
    for t in (F(1), F(3, 2), F(2)):
        assert solve_sigma(FIVE_ONE, t).sigma == (t + 1) / 3
    flat = StarInstance(((F(5),),), ((F(4),),), (F(1),), F(2))  # eta large, phi identically zero
    sol = solve_sigma(flat, 3)
    assert sol.sigma == 0 and sol.leaf_prices_relaxed == sol.vickrey


def test_derivative_examples():
    assert sigma_right_derivative(FIVE_ONE, F(1, 2)) == F(2, 3)
    assert sigma_right_derivative(FIVE_ONE, F(3, 2)) == F(1, 3)
    assert sigma_right_derivative(TWO_ONE, F(1, 2)) == 0
    with pytest.raises(BoundaryPointError):
        sigma_right_derivative(FIVE_ONE, 1)


def test_star_to_instance_structure():
    one = StarInstance(((F(6),),), ((F(4),),), (F(13),), F(3))
    inst, tie = star_to_instance(one, 0)
    assert len(inst.buyers) == 5 and len(inst.items) == 2
    assert inst.amount(BUYER_ZERO) == one.v0
    s = StarInstance.from_json(
        '{"bundles":[{"leaf_bids":["6","6"],"leaf_losing":["4","5"],"bundle_bid":"13"}],"item_zero_losing":"3"}'
    )
    inst, tie = star_to_instance(s, 1)
    assert sorted(solve_wdp(inst, tie).winners) == sorted(s.winners())
    vick = vickrey_prices(inst, s.winners())
    assert [vick[w] for w in s.winners()[1:]] == [4, 5]
    assert [vick[w] for w in s.winners()[1:]] == list(star_vickrey(s, 1)[0])


def test_json_round_trip():
    s = random_star(random.Random(5), J=3)
    again = StarInstance.from_json(json.dumps(s.to_json()))
    assert again == s
    with pytest.raises(InvalidInputError):
        StarInstance.from_json('{"bundles": 3}')
    with pytest.raises(InvalidInputError):
        StarInstance.from_json("{nope")


def test_expanded_polytope_is_theta_free():
    s = random_star(random.Random(9), J=2)
    poly = expanded_core_polytope(s)
    assert poly.upper[0] is None and len(poly.constraints) == s.J
    a = project_onto_polytope(poly, [float(x) for x in star_reference(s, 0)])
    assert a.certificate.ok()


@settings(max_examples=80, deadline=None)
@given(st.integers(min_value=0, max_value=10**6), st.fractions(min_value=0, max_value=60, max_denominator=50))
def test_analytic_matches_projection(seed, theta):
    s = random_star(random.Random(seed))
    sol = solve_sigma(s, theta)
    qp = project_onto_polytope(expanded_core_polytope(s), [float(x) for x in star_reference(s, theta)])
    assert np.max(np.abs(qp.prices - [float(x) for x in sol.relaxed_vector()])) < 1e-8
    res = lemma1_residuals(s, sol)
    assert all(res[k] == 0 for k in ("nonneg", "hub", "leaves", "row_ineq", "row_eq"))
    assert res["lambda_below_max_gap"] and res["lambda_below_cap"]
    assert sol.p0 == min(s.v0 + sol.theta, sol.p0_relaxed)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10**6), st.integers(min_value=0, max_value=40))
def test_clamped_price_matches_generic(seed, theta):
    s = random_star(random.Random(seed), nmax=3, digits=2)
    inst, tie = star_to_instance(s, theta)
    assert sorted(solve_wdp(inst, tie).winners) == sorted(s.winners())
    generic = project_onto_core(inst, s.winners())
    assert abs(generic.prices[0] - float(star_core_price(s, theta))) < 1e-8
    assert np.max(np.abs(generic.prices - star_core_prices(s, theta))) < 1e-7
    mrc = mrc_quadratic_price(inst, s.winners())
    assert abs(mrc.prices[0] - float(star_mrc_price(s, theta))) < 1e-8


def test_sigma_monotone_and_slope_bound():
    rng = random.Random(4)
    for _ in range(30):
        s = random_star(rng)
        grid = [F(k, 4) for k in range(120)]
        sig = [solve_sigma(s, t).sigma for t in grid]
        assert all(b >= a for a, b in zip(sig, sig[1:]))
        prices = [star_core_price(s, t) for t in grid]
        mrc = [star_mrc_price(s, t) for t in grid]
        for curve in (prices, mrc):
            assert all((b - a) * 4 <= 1 for a, b in zip(curve, curve[1:]))


def test_derivative_matches_differences():
    rng = random.Random(12)
    checked = 0
    for _ in range(40):
        s = random_star(rng)
        for t in (F(3, 7), F(41, 13), F(97, 11)):
            try:
                d = sigma_right_derivative(s, t)
            except BoundaryPointError:
                continue
            h = F(1, 10**7)
            fd = (solve_sigma(s, t + h).sigma - solve_sigma(s, t - h).sigma) / (2 * h)
            assert abs(float(d - fd)) < 1e-6
            checked += 1
    assert checked > 50


def test_mrc_closed_form_cases():
    s = TWO_ONE
    for t in (0, 1, 5):
        assert star_mrc_price(s, t) == star_core_price(s, t)
    # second bundle with a high threshold: b0 <= V2 charges the full bid
    two = StarInstance(((F(4),), (F(4),)), ((F(0),), (F(0),)), (F(10), F(10)), F(1))
    assert two.second_threshold == 10 and two.v0 == 6
    assert star_mrc_price(two, 3) == 9
    assert star_mrc_price(two, 4) == 10
    assert star_mrc_price(two, 6) >= 10


def test_scaling_invariance():
    s = random_star(random.Random(2), J=3)
    for t in (F(1, 3), F(7)):
        assert solve_sigma(s.scaled(3), t * 3).sigma == 3 * solve_sigma(s, t).sigma
