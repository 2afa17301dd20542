from fractions import Fraction
from itertools import combinations

from hypothesis import given, settings, strategies as st

from corepricing.packing import max_weight_packing


def brute(masks, weights):
    best = 0
    n = len(masks)
    for k in range(n + 1):
        for c in combinations(range(n), k):
            used = 0
            ok = True
            for i in c:
                if used & masks[i]:
                    ok = False
                    break
                used |= masks[i]
            if ok:
                best = max(best, sum(weights[i] for i in c))
    return best


def test_empty_and_nonpositive():
    assert max_weight_packing([], []) == (0, ())
    assert max_weight_packing([1, 2], [0, -3]) == (0, ())


def test_simple_conflict():
    # {a}, {b}, {a,b}
    assert max_weight_packing([1, 2, 3], [8, 8, 10]) == (16, (0, 1))
    assert max_weight_packing([1, 2, 3], [8, 8, 17]) == (17, (2,))


def test_exclude():
    assert max_weight_packing([1, 2, 3], [8, 8, 10], exclude=[0]) == (10, (2,))


def test_fraction_and_float_weights():
    v, chosen = max_weight_packing([1, 2, 3], [Fraction(1, 3), Fraction(1, 3), Fraction(1, 2)])
    assert v == Fraction(2, 3) and chosen == (0, 1)
    v, _ = max_weight_packing([1, 2, 3], [0.1, 0.2, 0.25])
    assert abs(v - 0.3) < 1e-12


instances = st.integers(min_value=1, max_value=9).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(min_value=1, max_value=63), min_size=n, max_size=n),
        st.lists(st.integers(min_value=-5, max_value=40), min_size=n, max_size=n),
    )
)


@settings(max_examples=200, deadline=None)
@given(instances)
def test_matches_brute_force(data):
    masks, weights = data
    best, chosen = max_weight_packing(masks, weights)
    assert best == brute(masks, weights)
    used = 0
    for i in chosen:
        assert not used & masks[i] and weights[i] > 0
        used |= masks[i]
    assert sum(weights[i] for i in chosen) == best
