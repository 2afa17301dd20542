"""Euclidean projection onto a polytope ``{p : G p >= h}`` by a primal
active-set method, and KKT certificates for the result."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import CorePolytope
from .errors import InvalidInputError, NumericalFailure

MAX_PIVOTS = 10_000
PRIMAL_TOL = 1e-9
KKT_TOL = 1e-8


@dataclass(frozen=True)
class KKTCertificate:
    stationarity_residual: float
    primal_residual: float
    comp_slack_residual: float
    dual_residual: float = 0.0

    def ok(self, tol: float = KKT_TOL) -> bool:
        return max(self.stationarity_residual, self.primal_residual,
                   self.comp_slack_residual, self.dual_residual) <= tol

    def to_json(self) -> dict:
        return {k: f"{v:.3e}" for k, v in self.__dict__.items()}


@dataclass
class ProjectionResult:
    """Projected prices with multipliers.

    ``multipliers_core`` aligns with ``polytope.constraints``;
    ``multipliers_ir`` and ``multipliers_lower`` align with the winners.
    """

    polytope: CorePolytope
    prices: np.ndarray
    multipliers_core: np.ndarray
    multipliers_ir: np.ndarray
    multipliers_lower: np.ndarray
    iterations: int
    certificate: KKTCertificate
    multipliers_nonunique: bool = False
    rounds: int = 1
    objective_history: list = field(default_factory=list)

    @property
    def winners(self) -> tuple:
        return self.polytope.winners

    def price_map(self) -> dict:
        return {w: float(x) for w, x in zip(self.winners, self.prices)}

    @property
    def revenue(self) -> float:
        return float(np.sum(self.prices))


def _independent(rows: np.ndarray) -> bool:
    return rows.shape[0] == 0 or np.linalg.matrix_rank(rows, tol=1e-10) == rows.shape[0]


def active_set_projection(G, h, reference, start, max_pivots: int = MAX_PIVOTS, tol: float = PRIMAL_TOL):
    """Minimize ``||x - reference||^2`` subject to ``G x >= h``.

    ``start`` must be feasible.  Returns ``(x, multipliers, pivots)`` with
    one multiplier per row of ``G``.  Ties in the ratio test and in the
    choice of the row to release go to the lowest row index.
    """
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    r = np.asarray(reference, dtype=float)
    x = np.array(start, dtype=float)
    m, n = G.shape
    scale = max(1.0, float(np.max(np.abs(r), initial=0.0)), float(np.max(np.abs(x), initial=0.0)))
    slack = G @ x - h
    if m and slack.min() < -tol * scale:
        raise InvalidInputError("start point is infeasible")

    working: list[int] = []
    for i in np.flatnonzero(np.abs(slack) <= 1e-12 * scale):
        if _independent(G[working + [int(i)]]):
            working.append(int(i))
    norms = np.linalg.norm(G, axis=1) if m else np.zeros(0)
    stalled = False  # last step had zero length (degenerate vertex)
    arrived = False  # last step reached the working-set minimizer

    for pivot in range(1, max_pivots + 1):
        if working:
            A = G[working]
            coef = np.linalg.lstsq(A.T, r - x, rcond=None)[0]
            d = (r - x) - A.T @ coef
        else:
            d = r - x
        # after an unblocked step, or with a full-rank working set, x is the
        # working-set minimizer; what is left of d is roundoff
        if arrived or len(working) == n or np.max(np.abs(d), initial=0.0) <= 1e-13 * scale:
            arrived = False
            lam = -coef if working else np.zeros(0)
            neg = np.flatnonzero(lam < -1e-11 * scale)
            if neg.size == 0:
                mult = np.zeros(m)
                mult[working] = np.maximum(lam, 0.0)
                return x, mult, pivot
            if stalled:
                # Bland's rule at a degenerate vertex: lowest row index
                pick = min(working[k] for k in neg)
            else:
                worst = lam[neg].min()
                # most negative multiplier; equal values resolved by lowest row index
                pick = min(working[k] for k in neg if lam[k] <= worst + 1e-14 * scale)
            working.remove(pick)
            continue
        Gd = G @ d
        cur = G @ x - h
        # a row blocks only if d points out of it by more than roundoff;
        # rows dependent on the working set are parallel to d's null space
        cutoff = 1e-11 * float(np.linalg.norm(d))
        candidates = [i for i in range(m) if i not in working and Gd[i] < -cutoff * norms[i]]
        while True:
            alpha, block = 1.0, None
            for i in candidates:
                step = max(cur[i], 0.0) / -Gd[i]
                if step < alpha - 1e-15:
                    alpha, block = step, i
            if block is None or _independent(G[working + [block]]):
                break
            candidates.remove(block)
        x = x + alpha * d
        stalled = alpha == 0.0
        arrived = block is None
        if block is not None:
            working.append(block)
    raise NumericalFailure(
        f"active-set projection exceeded {max_pivots} pivots",
        best=x,
        residuals={"primal": float(max(0.0, -(G @ x - h).min(initial=0.0)))},
    )


def feasible_point(poly: CorePolytope) -> np.ndarray:
    """A point of the polytope: finite upper bounds, raised where unbounded
    coordinates can absorb a deficit."""
    A, beta, lower, upper = poly.arrays()
    x = np.where(np.isfinite(upper), upper, lower)
    free = ~np.isfinite(upper)
    for _ in range(2):
        for row, b in zip(A, beta):
            deficit = b - row @ x
            if deficit > 0:
                idx = np.flatnonzero(free & (row > 0))
                if idx.size:
                    x[idx[0]] += deficit
    if not poly.contains(x):
        raise InvalidInputError("polytope is empty (no feasible price vector found)")
    return x


def stack_rows(poly: CorePolytope, extra_rows=None, extra_rhs=None):
    """``G, h`` for ``poly`` with rows ordered: core, lower bounds, finite
    upper bounds (negated), extra rows."""
    A, beta, lower, upper = poly.arrays()
    n = len(poly.winners)
    fin = np.flatnonzero(np.isfinite(upper))
    blocks = [A, np.eye(n), -np.eye(n)[fin]]
    rhs = [beta, lower, -upper[fin]]
    if extra_rows is not None:
        blocks.append(np.asarray(extra_rows, dtype=float).reshape(-1, n))
        rhs.append(np.asarray(extra_rhs, dtype=float))
    return np.vstack(blocks), np.concatenate(rhs), fin


def kkt_residuals(poly: CorePolytope, reference, prices, lam, mu, nu) -> KKTCertificate:
    """Residuals of the KKT system for the projection of ``reference``:
    ``A p >= beta``, ``lower <= p <= upper``, multipliers >= 0,
    ``p = r + A^T lam + nu - mu`` and complementary slackness."""
    A, beta, lower, upper = poly.arrays()
    p = np.asarray(prices, dtype=float)
    r = np.asarray(reference, dtype=float)
    lam, mu, nu = (np.asarray(v, dtype=float) for v in (lam, mu, nu))
    core_slack = A @ p - beta if len(beta) else np.zeros(0)
    fin = np.isfinite(upper)
    up_slack = np.where(fin, upper - p, 0.0)
    stat = p - r - (A.T @ lam if len(beta) else 0.0) - nu + mu
    primal = max(0.0, -core_slack.min(initial=0.0), -up_slack.min(initial=0.0), (lower - p).max(initial=0.0))
    comp = max(
        np.abs(lam * core_slack).max(initial=0.0),
        np.abs(np.where(fin, mu * up_slack, mu)).max(initial=0.0),
        np.abs(nu * (p - lower)).max(initial=0.0),
    )
    dual = max(0.0, -lam.min(initial=0.0), -mu.min(initial=0.0), -nu.min(initial=0.0))
    return KKTCertificate(float(np.abs(stat).max(initial=0.0)), float(primal), float(comp), float(dual))


def project_onto_polytope(
    poly: CorePolytope,
    reference: Sequence,
    start: Optional[Sequence] = None,
    extra_rows=None,
    extra_rhs=None,
    max_pivots: int = MAX_PIVOTS,
) -> ProjectionResult:
    """Unique point of ``poly`` nearest to ``reference``.

    ``extra_rows``/``extra_rhs`` append rows ``E p >= e`` that are not core
    rows (used for the revenue band of the minimum-revenue variant); their
    multipliers are folded into the certificate but not reported.
    """
    n = len(poly.winners)
    r = np.asarray([float(x) for x in reference], dtype=float)
    if r.shape != (n,):
        raise InvalidInputError("reference must have one entry per winner")
    G, h, fin = stack_rows(poly, extra_rows, extra_rhs)
    x0 = feasible_point(poly) if start is None else np.asarray(start, dtype=float)
    x, mult, pivots = active_set_projection(G, h, r, x0, max_pivots=max_pivots)

    k = len(poly.constraints)
    lam = mult[:k]
    nu = mult[k:k + n]
    mu = np.zeros(n)
    mu[fin] = mult[k + n:k + n + len(fin)]
    extra = mult[k + n + len(fin):]

    if extra.size:
        E = np.asarray(extra_rows, dtype=float).reshape(-1, n)
        cert = _certificate_with_extra(poly, r, x, lam, mu, nu, E, np.asarray(extra_rhs, float), extra)
    else:
        cert = kkt_residuals(poly, r, x, lam, mu, nu)
    tight = np.flatnonzero(np.abs(G @ x - h) <= 1e-9 * max(1.0, np.abs(r).max(initial=0.0)))
    nonunique = not _independent(G[tight])
    return ProjectionResult(poly, x, lam, mu, nu, pivots, cert, nonunique,
                            objective_history=[float(np.sum((x - r) ** 2))])


def _certificate_with_extra(poly, r, x, lam, mu, nu, E, e, eta) -> KKTCertificate:
    base = kkt_residuals(poly, r + E.T @ eta, x, lam, mu, nu)
    extra_slack = E @ x - e
    return KKTCertificate(
        base.stationarity_residual,
        max(base.primal_residual, float(max(0.0, -extra_slack.min(initial=0.0)))),
        max(base.comp_slack_residual, float(np.abs(eta * extra_slack).max(initial=0.0))),
        max(base.dual_residual, float(max(0.0, -eta.min(initial=0.0)))),
    )


def verify_kkt(result: ProjectionResult, poly: CorePolytope, reference: Sequence, tol: float = KKT_TOL) -> bool:
    """Check primal feasibility, dual feasibility, stationarity and
    complementary slackness of ``result`` against ``poly``."""
    k = len(poly.constraints)
    if len(result.multipliers_core) != k or len(result.prices) != len(poly.winners):
        return False
    cert = kkt_residuals(poly, [float(x) for x in reference], result.prices,
                         result.multipliers_core, result.multipliers_ir, result.multipliers_lower)
    return cert.ok(tol)
