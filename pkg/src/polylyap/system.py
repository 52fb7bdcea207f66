"""Hybrid linear systems: parsing, mode activity, flow sets, and simulation.

A system is a finite list of modes, each a conic domain {x : g . x >= 0 for
every row g} together with a linear flow x' = A x.  The set-valued dynamics
at a state collects A_q x over all modes whose domain contains x.  Mode
indices are 1-based throughout the public interface.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    MalformedInputError,
    NumericalFailureError,
    ParseError,
    SimulationStuckError,
)

__all__ = [
    "Mode",
    "HybridSystem",
    "Trajectory",
    "parse_system",
    "serialize_system",
    "active_modes",
    "flow_set",
    "simulate",
]

MEMBERSHIP_TOL = 1e-9


class Mode:
    """One mode: a polyhedral-cone domain plus a flow matrix.

    An empty domain row list means the whole space.  Equality constraints
    (used by the SAT gadget) are represented as paired rows g and -g.
    """

    def __init__(self, domain_rows, flow):
        flow = np.asarray(flow, dtype=float)
        if flow.ndim != 2 or flow.shape[0] != flow.shape[1]:
            raise MalformedInputError(
                f"flow matrix must be square, got shape {flow.shape}"
            )
        d = flow.shape[0]
        rows = np.asarray(domain_rows, dtype=float)
        if rows.size == 0:
            rows = np.zeros((0, d))
        if rows.ndim != 2 or rows.shape[1] != d:
            raise MalformedInputError(
                f"domain rows must have length {d}, got shape {rows.shape}"
            )
        if not (np.isfinite(flow).all() and np.isfinite(rows).all()):
            raise MalformedInputError("mode contains non-finite entries")
        self.domain_rows = rows
        self.flow = flow

    @property
    def d(self) -> int:
        return self.flow.shape[0]

    def contains(self, x, tol) -> bool:
        return bool((self.domain_rows @ x >= -tol).all())


class HybridSystem:
    """An ordered collection of modes over a common state dimension."""

    def __init__(self, d, modes):
        d = int(d)
        if d < 1:
            raise MalformedInputError("state dimension must be >= 1")
        modes = list(modes)
        if not modes:
            raise MalformedInputError("a system needs at least one mode")
        for q, mode in enumerate(modes, start=1):
            if mode.d != d:
                raise MalformedInputError(
                    f"mode {q} has dimension {mode.d}, system has {d}"
                )
        self.d = d
        self.modes = modes

    @property
    def num_modes(self) -> int:
        return len(self.modes)


def parse_system(text) -> HybridSystem:
    """Build a HybridSystem from its JSON description.

    Accepts bytes or str.  The schema is
    {"dim": d, "modes": [{"domain": [[...]], "flow": [[...]]}, ...]};
    an empty "domain" list means the full space.
    """
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ParseError("top-level value must be an object")
    if "dim" not in doc or "modes" not in doc:
        raise ParseError('missing required keys "dim" and "modes"')
    d = doc["dim"]
    if not isinstance(d, int) or d < 1:
        raise ParseError('"dim" must be a positive integer')
    raw_modes = doc["modes"]
    if not isinstance(raw_modes, list) or not raw_modes:
        raise ParseError('"modes" must be a nonempty list')
    modes = []
    for q, entry in enumerate(raw_modes, start=1):
        if not isinstance(entry, dict) or "flow" not in entry:
            raise ParseError(f'mode {q}: expected an object with a "flow" key')
        try:
            mode = Mode(entry.get("domain", []), entry["flow"])
        except (MalformedInputError, ValueError) as e:
            raise ParseError(f"mode {q}: {e}") from e
        if mode.d != d:
            raise ParseError(
                f"mode {q}: flow is {mode.d}x{mode.d} but dim is {d}"
            )
        modes.append(mode)
    return HybridSystem(d, modes)


def serialize_system(sys: HybridSystem) -> str:
    """Inverse of parse_system; floats round-trip exactly."""
    doc = {
        "dim": sys.d,
        "modes": [
            {
                "domain": [list(map(float, g)) for g in mode.domain_rows],
                "flow": [list(map(float, row)) for row in mode.flow],
            }
            for mode in sys.modes
        ],
    }
    return json.dumps(doc, indent=2)


def _check_state(sys: HybridSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.d,):
        raise MalformedInputError(
            f"state has shape {x.shape}, expected ({sys.d},)"
        )
    return x


def active_modes(sys: HybridSystem, x, tol: float | None = None) -> list[int]:
    """Modes whose closed domain contains x, ascending 1-based indices.

    With tol=None, the membership tolerance defaults to MEMBERSHIP_TOL
    scaled by the sup-norm of x, so activity is invariant along rays.
    """
    x = _check_state(sys, x)
    if tol is None:
        tol = MEMBERSHIP_TOL * max(1.0, float(np.max(np.abs(x))))
    elif tol < 0:
        raise MalformedInputError("tolerance must be nonnegative")
    return [q for q, mode in enumerate(sys.modes, start=1) if mode.contains(x, tol)]


def flow_set(sys: HybridSystem, x, tol: float | None = None) -> list[tuple[int, np.ndarray]]:
    """The admissible flow directions at x: pairs (q, A_q x) over active modes."""
    x = _check_state(sys, x)
    return [(q, sys.modes[q - 1].flow @ x) for q in active_modes(sys, x, tol)]


@dataclass
class Trajectory:
    """A sampled trajectory; mode_log[k] is the mode integrated on step k."""

    times: np.ndarray
    states: np.ndarray
    mode_log: np.ndarray

    def write_csv(self, fh) -> None:
        d = self.states.shape[1]
        fh.write("t," + ",".join(f"x{k + 1}" for k in range(d)) + ",mode\n")
        last = len(self.mode_log) - 1
        for k, t in enumerate(self.times):
            mode = self.mode_log[min(k, last)] if last >= 0 else 0
            coords = ",".join(repr(float(v)) for v in self.states[k])
            fh.write(f"{t!r},{coords},{mode}\n")


ModePolicy = Callable[[np.ndarray, Sequence[int]], int]


def _rk4_step(A: np.ndarray, x: np.ndarray, h: float) -> np.ndarray:
    k1 = A @ x
    k2 = A @ (x + 0.5 * h * k1)
    k3 = A @ (x + 0.5 * h * k2)
    k4 = A @ (x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _full_steps(T: float, dt: float) -> int:
    # floor(T / dt) with a guard against 0.999... artifacts
    f = int(T / dt)
    if T / dt - f >= 1.0 - 1e-9:
        return f + 1
    return f


def simulate(
    sys: HybridSystem,
    x0,
    dt: float,
    T: float,
    policy: ModePolicy | None = None,
) -> Trajectory:
    """Fixed-step RK4 along one selected mode per step.

    The mode is re-selected every step: the policy receives the current
    state and the active mode indices and must return one of them; the
    default takes the lowest index.  This is a validation tool, not an
    enumeration of the differential inclusion, and no sliding behavior
    is modeled on domain boundaries.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < dt:
        raise ValueError("horizon T must be at least dt")
    x = _check_state(sys, x0).copy()

    n_full = _full_steps(T, dt)
    times = [k * dt for k in range(n_full + 1)]
    if T - times[-1] > dt * 1e-9:
        times.append(T)

    states = [x.copy()]
    mode_log = []
    for k in range(len(times) - 1):
        h = times[k + 1] - times[k]
        act = active_modes(sys, x)
        if not act:
            raise SimulationStuckError(
                f"no active mode at t={times[k]:.6g}, state={x.tolist()}"
            )
        q = act[0] if policy is None else int(policy(x, act))
        if q not in act:
            raise ValueError(f"policy selected mode {q}, active modes are {act}")
        x = _rk4_step(sys.modes[q - 1].flow, x, h)
        if not np.isfinite(x).all():
            raise NumericalFailureError(
                f"state became non-finite at t={times[k + 1]:.6g}"
            )
        states.append(x.copy())
        mode_log.append(q)
    return Trajectory(
        times=np.asarray(times),
        states=np.vstack(states),
        mode_log=np.asarray(mode_log, dtype=int),
    )
