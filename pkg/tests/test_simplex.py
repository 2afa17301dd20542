import random
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corepricing.errors import InvalidInputError
from corepricing.simplex import Tableau, maximize


def test_textbook_lp():
    sol = maximize([3, 2], [[1, 1], [1, 3], [1, 0]], [4, 6, 3])
    assert sol.value == 11 and sol.y == (3, 1)
    assert sol.duals == (2, 0, 1)


def test_rational_data_and_duality():
    c = [Fraction(1, 2), 1]
    M = [[Fraction(1, 3), 1], [1, Fraction(2, 7)]]
    q = [Fraction(5, 2), 3]
    sol = maximize(c, M, q)
    dual_value = sum(d * b for d, b in zip(sol.duals, q))
    assert sol.value == dual_value == Fraction(111, 38)


def test_errors():
    with pytest.raises(InvalidInputError):
        maximize([1], [[1]], [-1])
    with pytest.raises(InvalidInputError):
        maximize([1], [[-1]], [1])  # unbounded
    with pytest.raises(InvalidInputError):
        maximize([1, 1], [[1]], [1])


def brute_lp(c, M, q):
    """Best vertex by enumerating every basis of [M; -I] y <= [q; 0]."""
    n = len(c)
    rows = [list(map(Fraction, r)) for r in M] + [[Fraction(-1 if k == i else 0) for k in range(n)] for i in range(n)]
    rhs = list(map(Fraction, q)) + [Fraction(0)] * n
    best = None
    for basis in combinations(range(len(rows)), n):
        A = np.array([[float(x) for x in rows[i]] for i in basis])
        if abs(np.linalg.det(A)) < 1e-9:
            continue
        y = np.linalg.solve(A, [float(rhs[i]) for i in basis])
        if all(sum(float(a) * v for a, v in zip(r, y)) <= float(b) + 1e-9 for r, b in zip(rows, rhs)):
            val = float(sum(float(ci) * v for ci, v in zip(c, y)))
            best = val if best is None else max(best, val)
    return best


@settings(max_examples=80, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_matches_vertex_enumeration_and_certifies(seed):
    rng = random.Random(seed)
    n, m = rng.randint(1, 4), rng.randint(1, 5)
    M = [[rng.randint(0, 3) for _ in range(n)] for _ in range(m)]
    for i in range(n):  # keep it bounded
        M.append([1 if k == i else 0 for k in range(n)])
    q = [Fraction(rng.randint(0, 20), rng.randint(1, 4)) for _ in M]
    c = [Fraction(rng.randint(0, 5)) for _ in range(n)]
    sol = maximize(c, M, q)
    assert float(sol.value) == pytest.approx(brute_lp(c, M, q), abs=1e-9)
    # exact primal/dual feasibility and zero duality gap
    assert all(sum(a * y for a, y in zip(r, sol.y)) <= b for r, b in zip(M, q))
    assert all(y >= 0 for y in sol.y) and all(d >= 0 for d in sol.duals)
    for j in range(n):
        assert sum(sol.duals[i] * M[i][j] for i in range(len(M))) - c[j] == sol.reduced_costs[j] >= 0
    assert sum(d * b for d, b in zip(sol.duals, q)) == sol.value


@settings(max_examples=150, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_added_rows_match_fresh_solve(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 4)
    c = [rng.randint(0, 4) for _ in range(n)]
    M = [[1 if k == i else 0 for k in range(n)] for i in range(n)]
    q = [Fraction(rng.randint(1, 40), rng.choice([1, 2, 3])) for _ in range(n)]
    tab = Tableau(c, M, q)
    tab.solve()
    for _ in range(rng.randint(1, 5)):
        row = [rng.randint(0, 1) for _ in range(n)]
        bound = Fraction(rng.randint(-10, 30), rng.choice([1, 2, 5, 7]))
        M.append(row)
        q.append(bound)
        tab.add_row(row, bound)
        try:
            got = tab.solve()
        except InvalidInputError:
            # infeasible: some row forces a nonnegative sum below zero
            assert brute_lp(c, M, q) is None
            return
        best = brute_lp(c, M, q)
        assert best is not None and float(got.value) == pytest.approx(best, abs=1e-9)
        assert all(sum(a * y for a, y in zip(r, got.y)) <= b for r, b in zip(M, q))
        assert all(d >= 0 for d in got.duals) and all(r >= 0 for r in got.reduced_costs)
        # strong duality with the appended rows
        assert got.value == sum(d * b for d, b in zip(got.duals, q))
