"""Dense tableau simplex in exact arithmetic.

Only the form needed by the minimum-revenue LP is supported::

    maximize c.y  subject to  M y <= q,  y >= 0,  with q >= 0

so the slack basis is feasible and no phase one is required.  Entering and
leaving variables follow Bland's lowest-index rule, which rules out cycling
on the degenerate vertices that core polytopes are full of.

Rows with integer coefficients may be appended after a solve; the old
basis stays dual feasible and a few dual simplex pivots restore primal
feasibility, which is what constraint generation needs.

The tableau is kept fraction-free: integer entries over one shared
denominator (the previous pivot), updated by Bareiss' exact division.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import InvalidInputError, NumericalFailure


@dataclass(frozen=True)
class LPSolution:
    value: Fraction
    y: tuple
    duals: tuple           # one per row, >= 0
    reduced_costs: tuple   # one per column, (M^T duals - c) >= 0
    pivots: int


def _common_scale(values) -> int:
    return math.lcm(*(Fraction(v).denominator for v in values)) if values else 1


class Tableau:
    """``max c.y, M y <= q, y >= 0`` kept solved under row additions."""

    def __init__(self, c: Sequence, M: Sequence[Sequence], q: Sequence, max_pivots: int = 100_000):
        c = [Fraction(x) for x in c]
        q = [Fraction(x) for x in q]
        rows = [[Fraction(x) for x in row] for row in M]
        self.n = n = len(c)
        if any(x < 0 for x in q):
            raise InvalidInputError("right-hand side must be nonnegative")
        if any(len(r) != n for r in rows):
            raise InvalidInputError("row length does not match objective")
        # integer data: scale each row (and the objective) by its own
        # denominator and the right-hand side by one more shared factor
        self.row_scale = [_common_scale(r) for r in rows]
        self.obj_scale = _common_scale(c)
        self.rhs_scale = _common_scale([x * s for x, s in zip(q, self.row_scale)])
        m = len(rows)
        self.T = []
        self.rhs = []
        for i, r in enumerate(rows):
            s = self.row_scale[i]
            line = [int(x * s) for x in r] + [0] * m
            line[n + i] = s
            self.T.append(line)
            self.rhs.append(int(q[i] * s * self.rhs_scale))
        self.obj = [int(-x * self.obj_scale) for x in c] + [0] * m
        self.obj_rhs = 0
        self.basis = [n + i for i in range(m)]
        self.den = 1
        self.pivots = 0
        self.max_pivots = max_pivots

    @property
    def m(self) -> int:
        return len(self.T)

    def _pivot(self, leave: int, enter: int):
        self.pivots += 1
        if self.pivots > self.max_pivots:
            raise NumericalFailure(f"simplex exceeded {self.max_pivots} pivots")
        T, den = self.T, self.den
        prow, prhs = T[leave], self.rhs[leave]
        a = prow[enter]
        for i in range(len(T)):
            if i != leave:
                f = T[i][enter]
                if f:
                    T[i] = [(a * x - f * y) // den for x, y in zip(T[i], prow)]
                    self.rhs[i] = (a * self.rhs[i] - f * prhs) // den
                elif a != den:
                    T[i] = [a * x // den for x in T[i]]
                    self.rhs[i] = a * self.rhs[i] // den
        f = self.obj[enter]
        self.obj = [(a * x - f * y) // den for x, y in zip(self.obj, prow)]
        self.obj_rhs = (a * self.obj_rhs - f * prhs) // den
        self.basis[leave] = enter
        self.den = a
        if a < 0:
            # keep the shared denominator positive so signs read directly
            self.T = [[-x for x in row] for row in T]
            self.rhs = [-x for x in self.rhs]
            self.obj = [-x for x in self.obj]
            self.obj_rhs = -self.obj_rhs
            self.den = -a

    def _primal(self):
        T, width = self.T, len(self.obj)
        while True:
            enter = next((j for j in range(width) if self.obj[j] < 0), None)
            if enter is None:
                return
            leave = None
            for i in range(len(T)):
                a = T[i][enter]
                if a > 0:
                    if leave is None:
                        leave = i
                        continue
                    lhs = self.rhs[i] * T[leave][enter]
                    rhs = self.rhs[leave] * a
                    if lhs < rhs or (lhs == rhs and self.basis[i] < self.basis[leave]):
                        leave = i
            if leave is None:
                raise InvalidInputError("linear program is unbounded")
            self._pivot(leave, enter)
            T = self.T

    def _dual(self):
        while True:
            bad = [i for i in range(len(self.T)) if self.rhs[i] < 0]
            if not bad:
                return
            leave = min(bad, key=lambda i: self.basis[i])
            row = self.T[leave]
            enter = None
            for j, a in enumerate(row):
                if a < 0:
                    if enter is None:
                        enter = j
                        continue
                    # ratio obj_j / |a_j|, smallest index on ties
                    if self.obj[j] * -row[enter] < self.obj[enter] * -a:
                        enter = j
            if enter is None:
                raise InvalidInputError("linear program is infeasible")
            self._pivot(leave, enter)

    def solve(self) -> LPSolution:
        self._dual()
        self._primal()
        return self.solution()

    def add_row(self, coeffs: Sequence, bound) -> int:
        """Append ``coeffs . y <= bound`` (integer coefficients); returns its index."""
        r = [int(x) for x in coeffs]
        if len(r) != self.n or any(Fraction(x) != y for x, y in zip(coeffs, r)):
            raise InvalidInputError("added rows need integer coefficients")
        if any(s != 1 for s in self.row_scale):
            raise InvalidInputError("rows can only be added to an integer tableau")
        b = Fraction(bound) * self.rhs_scale
        if b.denominator != 1:
            k = b.denominator
            self.rhs = [x * k for x in self.rhs]
            self.obj_rhs *= k
            self.rhs_scale *= k
            b *= k
        den = self.den
        for row in self.T:
            row.append(0)
        self.obj.append(0)
        width = len(self.obj)
        line = [den * x for x in r] + [0] * (width - self.n)
        line[-1] = den
        value = den * int(b)
        # eliminate basic columns; every basic entry equals den (slack scales
        # are 1), so each factor is an exact multiple of den
        for i, j in enumerate(self.basis):
            k = line[j] // den
            if k:
                line = [x - k * y for x, y in zip(line, self.T[i])]
                value -= k * self.rhs[i]
        self.T.append(line)
        self.rhs.append(value)
        self.basis.append(width - 1)
        self.row_scale.append(1)
        return len(self.T) - 1

    def solution(self) -> LPSolution:
        n, den = self.n, self.den
        y = [Fraction(0)] * n
        for i, b in enumerate(self.basis):
            if b < n:
                y[b] = Fraction(self.rhs[i], den * self.rhs_scale)
        # slack i has coefficient row_scale_i in its scaled row, so its
        # reduced cost is already the dual of the original row
        duals = tuple(Fraction(self.obj[n + i], den * self.obj_scale) for i in range(self.m))
        reduced = tuple(Fraction(self.obj[j], den * self.obj_scale) for j in range(n))
        value = Fraction(self.obj_rhs, den * self.obj_scale * self.rhs_scale)
        return LPSolution(value, tuple(y), duals, reduced, self.pivots)


def maximize(c: Sequence, M: Sequence[Sequence], q: Sequence, max_pivots: int = 100_000) -> LPSolution:
    return Tableau(c, M, q, max_pivots).solve()
