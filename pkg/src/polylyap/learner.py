"""Candidate maintenance: the feasible coefficient polytope and its center.

A candidate is a stack of m coefficient vectors in [-1, 1]^d defining
V(x) = max_i c_i . x.  Constraint triples (x, i, j) restrict the stack:
for j != i, piece j must strictly dominate piece i at x; for j == i,
piece i must be strictly positive at x and strictly decreasing along
every admissible flow direction there.  Strictness is encoded through a
shared margin variable tau that is maximized first, then frozen (capped)
before the Chebyshev-center step, so the margin cannot consume the box.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    InfeasiblePolytopeError,
    InvalidConstraintError,
    MalformedInputError,
    NumericalFailureError,
)
from .lpcore import (
    DEFAULT_SETTINGS,
    LinearProgram,
    LpStatus,
    Polytope,
    SolverSettings,
    chebyshev_center,
    solve_lp,
)
from .system import HybridSystem, active_modes

__all__ = [
    "TAU_MIN",
    "TAU_CAP",
    "Candidate",
    "ConstraintTriple",
    "ConstraintSet",
    "LearnStatus",
    "LearnResult",
    "rows_for_triple",
    "constraint_rows",
    "candidate_from",
    "eval_candidate",
]

TAU_MIN = 1e-7  # below this maximized margin the constraint set counts as empty
TAU_CAP = 0.1  # margin value frozen into the Chebyshev phase
TAU_LIMIT = 1e3  # upper bound keeping the margin-maximization LP bounded
MARGIN_FLOOR = 1e-8  # every emitted candidate clears each row by at least this
BOX_TOL = 1e-7

# Membership tolerance used when expanding a counterexample state into
# decrease rows.  Counterexamples frequently sit on domain boundaries and
# carry LP-level noise, so every mode within this distance is enforced;
# at a true boundary that is precisely what the decrease condition demands.
CEX_MEMBERSHIP_TOL = 1e-6


class Candidate:
    """Coefficients of V(x) = max_i c_i . x, one piece per row, entries in [-1, 1]."""

    def __init__(self, pieces):
        arr = np.asarray(pieces, dtype=float)
        if arr.ndim != 2:
            raise MalformedInputError("pieces must be a 2-D array (m x d)")
        if arr.shape[0] < 2:
            raise MalformedInputError("a candidate needs at least two pieces")
        if not np.isfinite(arr).all():
            raise MalformedInputError("pieces contain non-finite entries")
        if np.max(np.abs(arr)) > 1.0 + BOX_TOL:
            raise MalformedInputError("piece entries must lie in [-1, 1]")
        self.pieces = arr

    @property
    def m(self) -> int:
        return self.pieces.shape[0]

    @property
    def d(self) -> int:
        return self.pieces.shape[1]

    def values(self, x) -> np.ndarray:
        return self.pieces @ np.asarray(x, dtype=float)


def eval_candidate(c: Candidate, x) -> tuple[float, int]:
    """V(x) together with the smallest 1-based index attaining the max."""
    x = np.asarray(x, dtype=float)
    if x.shape != (c.d,):
        raise MalformedInputError(f"state has shape {x.shape}, expected ({c.d},)")
    vals = c.pieces @ x
    idx = int(np.argmax(vals))  # argmax returns the first maximizer
    return float(vals[idx]), idx + 1


@dataclass(frozen=True)
class ConstraintTriple:
    """One enforced clause at a state x with sup-norm 1 (renormalized here).

    Indices are 1-based.  j != i enforces "piece j dominates piece i at x";
    j == i enforces "piece i positive and decreasing at x".
    """

    x: tuple
    i: int
    j: int

    def __post_init__(self):
        arr = np.asarray(self.x, dtype=float)
        if arr.ndim != 1 or arr.size == 0 or not np.isfinite(arr).all():
            raise MalformedInputError("constraint state must be a finite vector")
        s = float(np.max(np.abs(arr)))
        if s <= 0.0:
            raise MalformedInputError("constraint state must be nonzero")
        object.__setattr__(self, "x", tuple(float(v) for v in arr / s))
        if self.i < 1 or self.j < 1:
            raise MalformedInputError("piece indices are 1-based")

    def state(self) -> np.ndarray:
        return np.asarray(self.x)


@dataclass(frozen=True)
class ConstraintSet:
    """An ordered multiset of triples bound to the system they refer to."""

    triples: tuple
    system: HybridSystem

    def with_triple(self, t: ConstraintTriple) -> "ConstraintSet":
        return ConstraintSet(self.triples + (t,), self.system)

    def __len__(self) -> int:
        return len(self.triples)


def _block(i: int, d: int) -> slice:
    return slice((i - 1) * d, i * d)


def rows_for_triple(t: ConstraintTriple, m: int, d: int, system: HybridSystem):
    """LP rows over (c_1..c_m, tau) encoding one triple; rhs is always 0.

    j != i:  (c_i - c_j) . x + tau <= 0
    j == i:  -c_i . x + tau <= 0, then c_i . (A_q x) + tau <= 0 for every
             active mode q at x in ascending order.
    """
    x = t.state()
    if x.size != d:
        raise MalformedInputError(f"triple state has length {x.size}, expected {d}")
    if t.i > m or t.j > m:
        raise MalformedInputError(f"triple indices ({t.i},{t.j}) exceed m={m}")
    nv = m * d
    rows = []
    if t.i != t.j:
        a = np.zeros(nv + 1)
        a[_block(t.i, d)] = x
        a[_block(t.j, d)] -= x
        a[nv] = 1.0
        rows.append((a, 0.0))
        return rows
    a = np.zeros(nv + 1)
    a[_block(t.i, d)] = -x
    a[nv] = 1.0
    rows.append((a, 0.0))
    act = active_modes(system, x, CEX_MEMBERSHIP_TOL)
    if not act:
        raise InvalidConstraintError(
            f"triple at {t.x} with i=j={t.i} activates no mode"
        )
    for q in act:
        a = np.zeros(nv + 1)
        a[_block(t.i, d)] = system.modes[q - 1].flow @ x
        a[nv] = 1.0
        rows.append((a, 0.0))
    return rows


def constraint_rows(Y: ConstraintSet, m: int, d: int):
    """All LP rows for the set: per-triple rows in order, then box rows."""
    nv = m * d
    rows = []
    for t in Y.triples:
        rows.extend(rows_for_triple(t, m, d, Y.system))
    for k in range(nv):
        a = np.zeros(nv + 1)
        a[k] = 1.0
        rows.append((a, 1.0))
        a = np.zeros(nv + 1)
        a[k] = -1.0
        rows.append((a, 1.0))
    return rows


class LearnStatus(Enum):
    CANDIDATE = "candidate"
    INFEASIBLE = "infeasible"
    BELOW_RADIUS = "below_radius"


@dataclass(frozen=True)
class LearnResult:
    status: LearnStatus
    candidate: Candidate | None
    radius: float
    margin: float


def _dedup(rows):
    seen = set()
    out = []
    for a, b in rows:
        key = (a.tobytes(), b)
        if key not in seen:
            seen.add(key)
            out.append((a, b))
    return out


def candidate_from(
    Y: ConstraintSet,
    m: int,
    d: int,
    epsilon: float,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> LearnResult:
    """Chebyshev-center candidate with margin and radius pruning.

    Maximizes the shared margin tau first; a maximum at or below TAU_MIN
    means the strict constraint system is empty.  tau is then frozen to
    min(tau*, TAU_CAP) and the Chebyshev center of the coefficient polytope
    is computed in the m*d-dimensional coefficient space.  A radius below
    epsilon yields BELOW_RADIUS instead of a candidate.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if m < 2:
        raise ValueError("m must be at least 2")
    rows = _dedup(constraint_rows(Y, m, d))
    nv = m * d

    objective = np.zeros(nv + 1)
    objective[nv] = 1.0
    bounds = [(-np.inf, np.inf)] * nv + [(0.0, TAU_LIMIT)]
    out = solve_lp(LinearProgram(objective, rows, bounds), settings)
    if out.status is LpStatus.INFEASIBLE:
        return LearnResult(LearnStatus.INFEASIBLE, None, 0.0, 0.0)
    if out.status is LpStatus.UNBOUNDED:  # pragma: no cover - tau is bounded
        raise NumericalFailureError("margin LP unbounded")
    tau_star = float(out.value)
    if tau_star <= TAU_MIN:
        return LearnResult(LearnStatus.INFEASIBLE, None, 0.0, 0.0)
    tau = min(tau_star, TAU_CAP)

    fixed = [(a[:nv].copy(), b - tau * a[nv]) for a, b in rows]
    try:
        center, radius = chebyshev_center(Polytope(nv, fixed), settings)
    except InfeasiblePolytopeError:
        # tau was frozen at the maximized margin, so the polytope is a
        # zero-radius face; within solver tolerance it can classify as
        # empty, and either way it contains no epsilon-ball
        return LearnResult(LearnStatus.BELOW_RADIUS, None, 0.0, tau)
    if radius < epsilon:
        return LearnResult(LearnStatus.BELOW_RADIUS, None, radius, tau)
    candidate = Candidate(np.clip(center.reshape(m, d), -1.0, 1.0))
    if __debug__:
        z = np.append(candidate.pieces.ravel(), 0.0)
        for a, b in rows:
            if a[nv]:  # triple row: strict margin must be realized
                assert a @ z <= b - MARGIN_FLOOR, "candidate lost its strict margin"
    return LearnResult(LearnStatus.CANDIDATE, candidate, radius, tau)
