"""Counterexample-guided tree search.

Each node carries a multiset of constraint triples.  Exploring a leaf
means: compute a margin-and-radius-pruned Chebyshev candidate for its
constraint set, verify it, and either return it (valid), kill the leaf
(empty or thin constraint set), or spawn m children, one per clause the
counterexample could be resolved with.  The loop ends with a verified
candidate, with every leaf closed, or with the budget spent.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from . import lpcore
from .learner import (
    Candidate,
    ConstraintSet,
    ConstraintTriple,
    LearnStatus,
    TAU_MIN,
    candidate_from,
    rows_for_triple,
)
from .lpcore import DEFAULT_SETTINGS, SolverSettings
from .system import HybridSystem
from .verifier import Counterexample, verify

__all__ = [
    "UNEXPLORED",
    "INFEASIBLE",
    "EXPANDED",
    "Node",
    "SearchTree",
    "SearchStats",
    "OutcomeKind",
    "SynthesisOutcome",
    "select_leaf",
    "expand_node",
    "depth_bound",
    "synthesize",
]

log = logging.getLogger(__name__)

UNEXPLORED = "unexplored"
INFEASIBLE = "infeasible"
EXPANDED = "expanded"


@dataclass
class Node:
    id: int
    parent: int | None
    triples: ConstraintSet
    status: str = UNEXPLORED
    depth: int = 0
    cached_radius: float = math.nan


class SearchTree:
    """Node store plus the frontier ordering used by select_leaf."""

    def __init__(self, root_constraints: ConstraintSet):
        root = Node(0, None, root_constraints)
        self.nodes: list[Node] = [root]
        # priority: larger parent radius first, then creation order
        self._frontier: list[tuple[float, int]] = [(-math.inf, 0)]

    def add_child(self, parent: Node, triples: ConstraintSet) -> Node:
        node = Node(len(self.nodes), parent.id, triples, depth=parent.depth + 1)
        self.nodes.append(node)
        heapq.heappush(self._frontier, (-parent.cached_radius, node.id))
        return node

    def unexplored_leaves(self) -> list[Node]:
        return [n for n in self.nodes if n.status == UNEXPLORED]


def select_leaf(tree: SearchTree) -> Node | None:
    """The unexplored leaf whose parent had the largest cached radius.

    Ties break by creation order; the root wins over everything.  Returns
    None when every leaf is closed.  Repeated calls without a status change
    return the same node.
    """
    frontier = tree._frontier
    while frontier and tree.nodes[frontier[0][1]].status != UNEXPLORED:
        heapq.heappop(frontier)
    if not frontier:
        return None
    return tree.nodes[frontier[0][1]]


def expand_node(tree: SearchTree, u: Node, cex: Counterexample, m: int) -> list[int]:
    """Create the m children of u, one per clause choice for cex."""
    children = []
    for j in range(1, m + 1):
        triple = ConstraintTriple(cex.x, cex.i, j)
        children.append(tree.add_child(u, u.triples.with_triple(triple)).id)
    u.status = EXPANDED
    return children


def depth_bound(m: int, d: int, epsilon: float) -> int:
    """Worst-case tree depth under the ellipsoid-center variant.

    floor(r log(eps) / log(1 - 1/r)) with r = m d.  Both logs are negative
    for epsilon in (0, 1), so the bound is nonnegative.  The Chebyshev
    center used in practice carries no such guarantee; the value serves as
    a budget heuristic only.
    """
    if m < 1 or d < 1:
        raise ValueError("m and d must be positive")
    r = m * d
    if r < 2:
        raise ValueError("m*d must be at least 2")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    return math.floor(r * math.log(epsilon) / math.log(1.0 - 1.0 / r))


class OutcomeKind(Enum):
    FOUND = "found"
    NO_ROBUST_LYAPUNOV = "no_robust_lyapunov"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass
class SearchStats:
    nodes_explored: int = 0
    max_depth: int = 0
    lp_count: int = 0
    wall_time: float = 0.0


@dataclass
class SynthesisOutcome:
    kind: OutcomeKind
    candidate: Candidate | None
    stats: SearchStats

    @property
    def found(self) -> bool:
        return self.kind is OutcomeKind.FOUND


def _cex_dict(cex: Counterexample | None):
    if cex is None:
        return None
    return {
        "x": list(cex.x),
        "i": cex.i,
        "kind": cex.kind,
        "witness_mode": cex.witness_mode,
    }


def _default_max_nodes(m: int, d: int, epsilon: float, cap: int = 10**6) -> int:
    if not 0.0 < epsilon < 1.0:
        return cap
    depth = depth_bound(m, d, epsilon)
    if (depth + 1) * math.log(m) >= math.log(cap):
        return cap
    return min(m ** (depth + 1), cap)


def _candidate_excluded(candidate: Candidate, triple: ConstraintTriple, m, d, system) -> bool:
    """True when the candidate violates the triple under the minimal margin."""
    z = np.append(candidate.pieces.ravel(), TAU_MIN)
    for a, b in rows_for_triple(triple, m, d, system):
        if a @ z > b:
            return True
    return False


def synthesize(
    sys: HybridSystem,
    m: int,
    epsilon: float,
    *,
    max_nodes: int | None = None,
    max_time: float = 600.0,
    settings: SolverSettings = DEFAULT_SETTINGS,
    on_event: Callable[[dict], None] | None = None,
    on_expand: Callable[[Node, Candidate, Counterexample, list[int]], None] | None = None,
) -> SynthesisOutcome:
    """Run the search until a verified candidate, a closed tree, or the budget.

    on_event receives one dict per explored node (id, parent, depth, radius,
    verdict, counterexample) suitable for a JSON-lines trace.  on_expand is
    an instrumentation hook fired after each expansion with the parent node,
    its candidate, the counterexample, and the new child ids.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if max_nodes is None:
        max_nodes = _default_max_nodes(m, sys.d, epsilon)

    stats = SearchStats()
    started = time.monotonic()
    lp_start = lpcore.solve_count()
    tree = SearchTree(ConstraintSet((), sys))
    d = sys.d

    def emit(node: Node, verdict: str, cex: Counterexample | None = None):
        if on_event is not None:
            on_event(
                {
                    "node": node.id,
                    "parent": node.parent,
                    "depth": node.depth,
                    "radius": None if math.isnan(node.cached_radius) else node.cached_radius,
                    "verdict": verdict,
                    "counterexample": _cex_dict(cex),
                }
            )

    def finish(kind: OutcomeKind, candidate: Candidate | None) -> SynthesisOutcome:
        stats.wall_time = time.monotonic() - started
        stats.lp_count = lpcore.solve_count() - lp_start
        return SynthesisOutcome(kind, candidate, stats)

    while True:
        leaf = select_leaf(tree)
        if leaf is None:
            # every leaf is infeasible or thinner than epsilon
            return finish(OutcomeKind.NO_ROBUST_LYAPUNOV, None)
        if stats.nodes_explored >= max_nodes or time.monotonic() - started > max_time:
            return finish(OutcomeKind.BUDGET_EXHAUSTED, None)

        stats.nodes_explored += 1
        stats.max_depth = max(stats.max_depth, leaf.depth)
        learned = candidate_from(leaf.triples, m, d, epsilon, settings)
        leaf.cached_radius = learned.radius
        if learned.status is not LearnStatus.CANDIDATE:
            leaf.status = INFEASIBLE
            emit(leaf, learned.status.value)
            continue

        verdict = verify(learned.candidate, sys, settings)
        if verdict.valid:
            # paranoia: the returned certificate must verify on a fresh pass
            recheck = verify(learned.candidate, sys, settings)
            if not recheck.valid:  # pragma: no cover - verify is deterministic
                raise AssertionError("candidate failed re-verification")
            emit(leaf, "valid")
            log.info(
                "found candidate at node %d (depth %d, %d nodes explored)",
                leaf.id,
                leaf.depth,
                stats.nodes_explored,
            )
            return finish(OutcomeKind.FOUND, learned.candidate)

        cex = verdict.counterexample
        emit(leaf, "refuted", cex)
        children = expand_node(tree, leaf, cex, m)
        if __debug__:
            for cid in children:
                added = tree.nodes[cid].triples.triples[-1]
                assert _candidate_excluded(learned.candidate, added, m, d, sys), (
                    "expansion failed to exclude the refuted candidate"
                )
        if on_expand is not None:
            on_expand(leaf, learned.candidate, cex, children)
