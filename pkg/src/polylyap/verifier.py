"""Candidate verification: positivity and decrease checks via small LPs.

Positivity is checked on the 2d facets of the unit box: V fails to be
positive off the origin iff some facet carries a point where every piece
is nonpositive.  Decrease is checked per (piece, mode) pair on the region
where that piece attains the value 1; a feasible point there with a
nonnegative directional derivative refutes the candidate.  Iteration
orders are fixed so that verdicts and counterexamples are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MalformedInputError, NumericalFailureError
from .lpcore import (
    DEFAULT_SETTINGS,
    LinearProgram,
    LpStatus,
    SolverSettings,
    solve_lp,
)
from .learner import CEX_MEMBERSHIP_TOL, Candidate
from .system import HybridSystem, active_modes

__all__ = [
    "POSITIVITY",
    "DECREASE",
    "TOL_CEX",
    "Counterexample",
    "Verdict",
    "check_positivity",
    "check_decrease",
    "verify",
    "sample_soundness_check",
]

POSITIVITY = "positivity"
DECREASE = "decrease"

TOL_CEX = 1e-9  # validity margin for reported counterexamples
STATE_BOX = 1e6  # safeguard box for the decrease programs


@dataclass(frozen=True)
class Counterexample:
    """A state refuting a candidate, normalized to unit sup-norm.

    kind is "positivity" (V(x) <= 0 within tolerance) or "decrease"
    (piece i attains V(x) > 0 but fails to decrease along mode
    witness_mode at x).  Indices are 1-based.
    """

    x: tuple
    i: int
    kind: str
    witness_mode: int | None = None

    def state(self) -> np.ndarray:
        return np.asarray(self.x)


@dataclass(frozen=True)
class Verdict:
    counterexample: Counterexample | None = None

    @property
    def valid(self) -> bool:
        return self.counterexample is None


VALID = Verdict()


def _facets(d: int):
    # order: +x1, -x1, +x2, -x2, ...
    for k in range(d):
        for sign in (1.0, -1.0):
            yield k, sign


def check_positivity(
    c: Candidate,
    settings: SolverSettings = DEFAULT_SETTINGS,
    margin: float = 0.0,
) -> Verdict:
    """Search the box facets for a state where every piece is <= margin.

    margin defaults to 0, matching the plain positivity condition; a
    positive value demands a quantitative margin from Valid candidates.
    """
    d = c.d
    for k, sign in _facets(d):
        rows = [(c.pieces[i], float(margin)) for i in range(c.m)]
        e = np.zeros(d)
        e[k] = sign
        rows.append((e, 1.0))
        rows.append((-e, -1.0))
        bounds = [(-1.0, 1.0)] * d
        objective = np.zeros(d)
        try:
            out = solve_lp(LinearProgram(objective, rows, bounds), settings)
        except NumericalFailureError as err:
            raise NumericalFailureError(
                f"positivity check failed on facet ({'+' if sign > 0 else '-'}x{k + 1}): {err}"
            ) from err
        if out.status is LpStatus.OPTIMAL:
            x = out.z.copy()
            x /= np.max(np.abs(x))
            vals = c.pieces @ x
            value = float(vals.max())
            if value > max(TOL_CEX, margin + TOL_CEX):
                raise NumericalFailureError(
                    f"spurious positivity counterexample on facet ({'+' if sign > 0 else '-'}x{k + 1}):"
                    f" V(x)={value:.3e}"
                )
            i = int(np.argmax(vals)) + 1
            return Verdict(Counterexample(tuple(x), i, POSITIVITY))
    return VALID


def check_decrease(
    c: Candidate,
    sys: HybridSystem,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> Verdict:
    """Search for a state where the maximal piece fails to decrease.

    For each piece i and mode q (lexicographic order) the program asks for
    x with c_i . x = 1 >= c_j . x for all j, x in the mode's domain, and
    c_i . (A_q x) >= 0.  The equality is encoded as two inequality rows and
    a large safeguard box keeps the program bounded; any feasible point is
    rescaled to unit sup-norm, which preserves all conditions because the
    domains are cones and the pieces are linear.
    """
    if c.d != sys.d:
        raise MalformedInputError(
            f"candidate dimension {c.d} does not match system dimension {sys.d}"
        )
    d = sys.d
    for i in range(1, c.m + 1):
        ci = c.pieces[i - 1]
        if float(np.max(np.abs(ci))) * STATE_BOX * d < 1.0 - TOL_CEX:
            # the piece cannot reach value 1 inside the safeguard box, so
            # every program for it is infeasible
            continue
        for q in range(1, sys.num_modes + 1):
            mode = sys.modes[q - 1]
            rows = [(ci, 1.0), (-ci, -1.0)]
            for j in range(c.m):
                if j != i - 1:
                    rows.append((c.pieces[j], 1.0))
            for g in mode.domain_rows:
                rows.append((-g, 0.0))
            rows.append((-(mode.flow.T @ ci), 0.0))
            bounds = [(-STATE_BOX, STATE_BOX)] * d
            try:
                out = solve_lp(LinearProgram(np.zeros(d), rows, bounds), settings)
            except NumericalFailureError as err:
                raise NumericalFailureError(
                    f"decrease check failed for piece {i}, mode {q}: {err}"
                ) from err
            if out.status is LpStatus.OPTIMAL:
                x = out.z.copy()
                x /= np.max(np.abs(x))
                deriv = float(ci @ (mode.flow @ x))
                in_domain = bool((mode.domain_rows @ x >= -CEX_MEMBERSHIP_TOL).all())
                attains = float(ci @ x) >= float((c.pieces @ x).max()) - TOL_CEX * d
                if deriv < -TOL_CEX or not in_domain or not attains:
                    raise NumericalFailureError(
                        f"spurious decrease counterexample for piece {i}, mode {q}"
                    )
                return Verdict(Counterexample(tuple(x), i, DECREASE, witness_mode=q))
    return VALID


def verify(
    c: Candidate,
    sys: HybridSystem,
    settings: SolverSettings = DEFAULT_SETTINGS,
    positivity_margin: float = 0.0,
) -> Verdict:
    """Positivity first, then decrease; the first refutation wins."""
    verdict = check_positivity(c, settings, margin=positivity_margin)
    if not verdict.valid:
        return verdict
    return check_decrease(c, sys, settings)


def sample_soundness_check(
    c: Candidate,
    sys: HybridSystem,
    num_samples: int = 10_000,
    seed: int = 20260810,
    tol: float = TOL_CEX,
):
    """Independent spot check of a Valid verdict on random unit-box states.

    Draws states with unit sup-norm and demands V > 0 plus a strictly
    negative directional derivative for every argmax-tied piece under every
    active mode.  Returns (ok, info) where info describes the first failure.
    """
    if c.d != sys.d:
        raise MalformedInputError("candidate and system dimensions differ")
    rng = np.random.default_rng(seed)
    d = sys.d
    done = 0
    while done < num_samples:
        batch = rng.uniform(-1.0, 1.0, size=(min(2048, num_samples - done), d))
        norms = np.max(np.abs(batch), axis=1)
        for row, s in zip(batch, norms):
            if s < 1e-12:
                continue
            x = row / s
            vals = c.pieces @ x
            value = float(vals.max())
            if value <= 0.0:
                return False, {"x": x.tolist(), "reason": "nonpositive value", "value": value}
            tied = np.nonzero(vals >= value - tol)[0]
            for q in active_modes(sys, x):
                Ax = sys.modes[q - 1].flow @ x
                for i in tied:
                    deriv = float(c.pieces[i] @ Ax)
                    if deriv >= tol:
                        return False, {
                            "x": x.tolist(),
                            "reason": "nonnegative derivative",
                            "piece": int(i) + 1,
                            "mode": q,
                            "derivative": deriv,
                        }
            done += 1
            if done >= num_samples:
                break
    return True, None
