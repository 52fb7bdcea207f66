"""Dense linear programming kernel.

Every optimization problem in this package funnels through :func:`solve_lp`,
a two-phase primal simplex on the full tableau.  The problems are tiny
(a few dozen variables, a few hundred rows), so the priorities are
determinism and robustness rather than speed.  The pivot rule is Dantzig's
until progress stalls, after which Bland's rule takes over permanently,
which rules out cycling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    InfeasiblePolytopeError,
    MalformedInputError,
    NumericalFailureError,
)

__all__ = [
    "SolverSettings",
    "DEFAULT_SETTINGS",
    "LinearProgram",
    "LpStatus",
    "LpOutcome",
    "Polytope",
    "solve_lp",
    "chebyshev_center",
    "solve_count",
]

_INF = math.inf

_solve_calls = 0


def solve_count() -> int:
    """Number of solve_lp invocations so far in this process.

    Maintained without locking; meaningful in the default single-threaded
    pipeline, indicative otherwise.
    """
    return _solve_calls


@dataclass(frozen=True)
class SolverSettings:
    """Numerical knobs for the simplex kernel."""

    tol_feas: float = 1e-9
    tol_obj: float = 1e-9
    pivot_tol: float = 1e-10
    iter_factor: int = 50  # pivot cap = iter_factor * (rows + columns)
    stall_limit: int = 30  # degenerate pivots tolerated before Bland's rule


DEFAULT_SETTINGS = SolverSettings()


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpOutcome:
    status: LpStatus
    z: np.ndarray | None = None
    value: float | None = None

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


_NORM_FLOOR = 1e-9


def _normalize_rows(rows, n):
    """Rescale each row to unit sup-norm.

    Rows whose largest coefficient is below _NORM_FLOOR are kept verbatim:
    dividing by a noise-level coefficient would blow the right-hand side up
    and wreck the conditioning the scaling is meant to provide.
    """
    out = []
    for idx, (a, b) in enumerate(rows):
        a = np.asarray(a, dtype=float)
        if a.shape != (n,):
            raise MalformedInputError(
                f"row {idx} has shape {a.shape}, expected ({n},)"
            )
        if not np.isfinite(a).all() or not np.isfinite(b):
            raise MalformedInputError(f"row {idx} contains non-finite entries")
        s = float(np.max(np.abs(a))) if a.size else 0.0
        if s >= _NORM_FLOOR:
            out.append((a / s, float(b) / s))
        else:
            out.append((a.copy(), float(b)))
    return out


class LinearProgram:
    """maximize  objective . z   s.t.   a . z <= b  per row, plus variable bounds.

    A zero row with b < 0 is legal and simply makes the program infeasible.
    Strict inequalities never appear here; callers encode them through a
    maximized margin variable.
    """

    def __init__(self, objective, rows, bounds=None):
        self.objective = np.asarray(objective, dtype=float)
        if self.objective.ndim != 1 or self.objective.size < 1:
            raise MalformedInputError("objective must be a nonempty vector")
        n = self.objective.size
        self.rows = _normalize_rows(rows, n)
        if bounds is None:
            bounds = [(-_INF, _INF)] * n
        if len(bounds) != n:
            raise MalformedInputError(
                f"{len(bounds)} bounds given for {n} variables"
            )
        checked = []
        for j, (lo, hi) in enumerate(bounds):
            lo, hi = float(lo), float(hi)
            if lo > hi:
                raise MalformedInputError(f"variable {j} has lo > hi")
            checked.append((lo, hi))
        self.bounds = checked

    @property
    def n(self) -> int:
        return self.objective.size


class Polytope:
    """Bounded halfspace intersection {z : a . z <= b for each row}.

    Rows are rescaled to unit sup-norm on ingestion.  Instances built by
    this package always include explicit box rows, which makes them bounded.
    """

    def __init__(self, n, rows):
        if n < 1:
            raise MalformedInputError("polytope dimension must be >= 1")
        self.n = int(n)
        self.rows = _normalize_rows(rows, self.n)

    def contains(self, z, tol=1e-9) -> bool:
        z = np.asarray(z, dtype=float)
        return all(a @ z <= b + tol for a, b in self.rows)


def _standard_form(lp: LinearProgram):
    """Rewrite the LP over nonnegative variables.

    Lower-bounded variables are shifted, upper-only variables are reflected,
    free variables are split.  Finite two-sided bounds add a single-variable
    cap row.  Returns (A, b, c, col_var, col_sign, z0).
    """
    n = lp.n
    col_var: list[int] = []
    col_sign: list[float] = []
    z0 = np.zeros(n)
    cap_rows: list[tuple[int, float]] = []
    for j, (lo, hi) in enumerate(lp.bounds):
        if lo == -_INF and hi == _INF:
            col_var += [j, j]
            col_sign += [1.0, -1.0]
        elif lo > -_INF:
            z0[j] = lo
            col_var.append(j)
            col_sign.append(1.0)
            if hi < _INF:
                cap_rows.append((len(col_var) - 1, hi - lo))
        else:  # lo = -inf, hi finite
            z0[j] = hi
            col_var.append(j)
            col_sign.append(-1.0)
    vars_idx = np.array(col_var, dtype=int)
    signs = np.array(col_sign, dtype=float)
    N = len(col_var)
    m = len(lp.rows) + len(cap_rows)
    A = np.zeros((m, N))
    b = np.zeros(m)
    for i, (a, bb) in enumerate(lp.rows):
        A[i, :] = a[vars_idx] * signs
        b[i] = bb - a @ z0
    for r, (col, cap) in enumerate(cap_rows):
        A[len(lp.rows) + r, col] = 1.0
        b[len(lp.rows) + r] = cap
    c = lp.objective[vars_idx] * signs
    return A, b, c, vars_idx, signs, z0


def _row_tol(b: float, zscale: float, st: SolverSettings) -> float:
    """Acceptable absolute slack violation for a row with right-hand side b.

    The second term absorbs cancellation noise when the solution point has
    large coordinates (the verifier's safeguard box reaches 1e6).
    """
    return 1e2 * st.tol_feas * (1.0 + abs(b)) + 1e-14 * zscale


def _pivot(T, obj, basis, leave, enter):
    piv = T[leave, enter]
    T[leave] /= piv
    fac = T[:, enter].copy()
    fac[leave] = 0.0
    T -= np.outer(fac, T[leave])
    delta = obj[enter]
    obj -= delta * T[leave]
    basis[leave] = enter


def _run_simplex(T, obj, basis, allowed, st: SolverSettings, budget):
    """Pivot until optimal or unbounded; mutates T, obj, basis in place.

    ``budget`` is a one-element list holding the remaining pivot count,
    shared across phases.  Raises NumericalFailureError when exhausted.
    """
    bland = False
    stall = 0
    while True:
        rc = obj[:-1]
        if bland:
            cand = np.nonzero(allowed & (rc > st.tol_obj))[0]
            if cand.size == 0:
                return "optimal"
            enter = int(cand[0])
        else:
            masked = np.where(allowed, rc, -_INF)
            enter = int(np.argmax(masked))
            if masked[enter] <= st.tol_obj:
                return "optimal"
        col = T[:, enter]
        pos = col > st.pivot_tol
        if not pos.any():
            return "unbounded"
        ratios = np.full(col.shape, _INF)
        ratios[pos] = T[pos, -1] / col[pos]
        best = float(ratios.min())
        ties = np.nonzero(ratios <= best + 1e-12 * (1.0 + abs(best)))[0]
        leave = int(ties[np.argmin(basis[ties])])
        if budget[0] <= 0:
            raise NumericalFailureError("simplex pivot cap exceeded")
        budget[0] -= 1
        gain = obj[enter] * best
        _pivot(T, obj, basis, leave, enter)
        if gain <= st.tol_obj * 1e-2:
            stall += 1
            if stall >= st.stall_limit:
                bland = True
        else:
            stall = 0


def _price_out(cvec: np.ndarray, T: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Reduced-cost row for the given column costs under the current basis."""
    obj = np.zeros(T.shape[1])
    obj[: cvec.size] = cvec
    for i in range(T.shape[0]):
        coef = cvec[basis[i]]
        if coef != 0.0:
            obj -= coef * T[i]
    return obj


def _refresh(A_cur: np.ndarray, b_cur: np.ndarray, T: np.ndarray, basis: np.ndarray, st: SolverSettings):
    """Recompute the tableau from the original data through the current basis.

    Incremental pivoting accumulates rounding, especially across long
    degenerate stretches; the basis itself is the combinatorial answer, so
    everything else can be rebuilt exactly from it.
    """
    if T.shape[0] == 0:
        return
    B = A_cur[:, basis]
    try:
        sol = np.linalg.solve(B, np.hstack([A_cur, b_cur[:, None]]))
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError("singular basis during refresh") from e
    xB = sol[:, -1]
    floor = -1e-6 * max(1.0, float(np.max(np.abs(b_cur), initial=0.0)))
    if float(xB.min(initial=0.0)) < floor:
        raise NumericalFailureError("basis lost feasibility beyond tolerance")
    np.clip(xB, 0.0, None, out=xB)
    T[:, :] = sol


def _run_phase(A_cur, b_cur, cvec, T, basis, allowed, st: SolverSettings, budget):
    """Pivot to optimality or unboundedness with periodic basis refresh.

    Refreshing after each pivoting sweep keeps verdicts anchored to the
    original data; a sweep whose refreshed reduced costs still show an
    improving column simply continues.  Returns (status, reduced_cost_row).
    """
    for _ in range(25):
        obj = _price_out(cvec, T, basis)
        status = _run_simplex(T, obj, basis, allowed, st, budget)
        _refresh(A_cur, b_cur, T, basis, st)
        obj = _price_out(cvec, T, basis)
        rc = np.where(allowed, obj[:-1], -_INF)
        if status == "unbounded":
            enter = int(np.argmax(rc)) if rc.size else -1
            if enter >= 0 and rc[enter] > st.tol_obj and not (T[:, enter] > st.pivot_tol).any():
                return "unbounded", obj
            if enter < 0 or rc[enter] <= st.tol_obj:
                return "optimal", obj
            continue
        if rc.size == 0 or float(rc.max()) <= st.tol_obj:
            return "optimal", obj
    raise NumericalFailureError("simplex failed to stabilize under refresh")


def solve_lp(lp: LinearProgram, settings: SolverSettings = DEFAULT_SETTINGS) -> LpOutcome:
    """Solve a dense LP; deterministic for a fixed input.

    Returns Optimal with a primal point feasible within ``tol_feas``,
    Infeasible (backed internally by a phase-1 Farkas certificate), or
    Unbounded.  Raises NumericalFailureError if the pivot cap is hit,
    which is deliberately distinct from infeasibility.
    """
    global _solve_calls
    _solve_calls += 1
    st = settings

    A, b, c, vars_idx, signs, z0 = _standard_form(lp)
    m, N = A.shape
    m_orig = m

    flip = np.where(b < 0.0, -1.0, 1.0)
    A2 = A * flip[:, None]
    b2 = b * flip
    art_rows = np.nonzero(flip < 0.0)[0]
    n_art = art_rows.size
    ncols = N + m + n_art

    T = np.zeros((m, ncols + 1))
    T[:, :N] = A2
    T[np.arange(m), N + np.arange(m)] = flip  # slack columns, sign-flipped with the row
    for t, r in enumerate(art_rows):
        T[r, N + m + t] = 1.0
    T[:, -1] = b2
    A_full = T[:, :-1].copy()
    basis = N + np.arange(m)
    basis[art_rows] = N + m + np.arange(n_art)

    budget = [st.iter_factor * (m + ncols)]

    if n_art:
        # Phase 1: maximize the negated sum of artificials.
        c1 = np.zeros(ncols)
        c1[N + m :] = -1.0
        allowed = np.ones(ncols, dtype=bool)
        status, obj = _run_phase(A_full, b2, c1, T, basis, allowed, st, budget)
        if status != "optimal":  # pragma: no cover - phase 1 is always bounded
            raise NumericalFailureError("phase 1 reported unbounded")
        # Decide feasibility by mapping the phase-1 point back and measuring
        # row violations at the original data scale.  Thresholds relative to
        # the shifted right-hand sides would be inflated by the magnitude of
        # the variable bounds and mask thin but genuine infeasibilities.
        u1 = np.zeros(ncols)
        u1[basis] = T[:, -1]
        z1 = z0.copy()
        np.add.at(z1, vars_idx, signs * u1[:N])
        zscale = max(1.0, float(np.max(np.abs(z1), initial=0.0)))
        feasible = all(
            a @ z1 <= bb + _row_tol(bb, zscale, st) for a, bb in lp.rows
        )
        if not feasible:
            if __debug__:
                # Farkas certificate from the phase-1 duals: w >= 0,
                # w.A >= 0 componentwise, w.b < 0, so no nonnegative
                # solution of A u <= b can exist.
                w = -obj[N : N + m]
                assert w.min(initial=0.0) >= -1e3 * st.tol_obj
                assert (w @ A).min(initial=0.0) >= -1e3 * st.tol_obj
                assert w @ b < 0.0
            return LpOutcome(LpStatus.INFEASIBLE)
        # Drive leftover artificials out of the basis, dropping redundant rows.
        drop = []
        for r in range(m):
            if basis[r] >= N + m_orig:
                row = T[r, : N + m_orig]
                nz = np.nonzero(np.abs(row) > st.pivot_tol)[0]
                if nz.size:
                    _pivot(T, obj, basis, r, int(nz[0]))
                else:
                    drop.append(r)
        if drop:
            T = np.delete(T, drop, axis=0)
            basis = np.delete(basis, drop)
            A_full = np.delete(A_full, drop, axis=0)
            b2 = np.delete(b2, drop)
        # Strip the artificial columns; basis indices all point below them now.
        T = np.hstack([T[:, : N + m_orig], T[:, -1:]])
        A_full = A_full[:, : N + m_orig]

    ncols2 = T.shape[1] - 1

    # Phase 2: the true objective.
    c2 = np.zeros(ncols2)
    c2[:N] = c
    allowed2 = np.ones(ncols2, dtype=bool)
    status, _ = _run_phase(A_full, b2, c2, T, basis, allowed2, st, budget)
    if status == "unbounded":
        return LpOutcome(LpStatus.UNBOUNDED)

    u = np.zeros(ncols2)
    u[basis] = T[:, -1]
    z = z0.copy()
    np.add.at(z, vars_idx, signs * u[:N])
    value = float(lp.objective @ z)

    if __debug__:
        zscale = max(1.0, float(np.max(np.abs(z), initial=0.0)))
        for a, bb in lp.rows:
            assert a @ z <= bb + _row_tol(bb, zscale, st), "optimal point violates a row"
        for j, (lo, hi) in enumerate(lp.bounds):
            span = max(1.0, abs(lo) if lo > -_INF else 1.0, abs(hi) if hi < _INF else 1.0)
            if lo > -_INF:
                assert z[j] >= lo - 1e2 * st.tol_feas * span
            if hi < _INF:
                assert z[j] <= hi + 1e2 * st.tol_feas * span
    return LpOutcome(LpStatus.OPTIMAL, z=z, value=value)


def chebyshev_center(p: Polytope, settings: SolverSettings = DEFAULT_SETTINGS):
    """Center and radius of the largest Euclidean ball inscribed in ``p``.

    Maximizes r subject to a . z + r * |a|_2 <= b over all rows.  Raises
    InfeasiblePolytopeError when ``p`` is empty and MalformedInputError when
    the inscribed radius is unbounded (the polytope was not bounded).
    """
    if not p.rows:
        raise MalformedInputError("chebyshev_center requires at least one row")
    n = p.n
    objective = np.zeros(n + 1)
    objective[n] = 1.0
    rows = [(np.append(a, float(np.linalg.norm(a))), b) for a, b in p.rows]
    bounds = [(-_INF, _INF)] * n + [(0.0, _INF)]
    out = solve_lp(LinearProgram(objective, rows, bounds), settings)
    if out.status is LpStatus.INFEASIBLE:
        raise InfeasiblePolytopeError("polytope is empty")
    if out.status is LpStatus.UNBOUNDED:
        raise MalformedInputError("polytope admits arbitrarily large inscribed balls")
    center = out.z[:n].copy()
    radius = float(out.z[n])
    if __debug__:
        for a, b in p.rows:
            assert a @ center + radius * np.linalg.norm(a) <= b + 1e2 * settings.tol_feas
    return center, radius
