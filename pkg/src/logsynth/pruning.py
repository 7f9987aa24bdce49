"""Phase 2a: prune the call graph down to the methods that log or lead
to methods that log.

Kept methods are the LogMethods plus all of their ancestors in the call
graph, found with a single sweep over the SCC condensation in
callee-first (reverse topological) order.  Keeping is all-or-nothing per
component: a component survives when any member is a LogMethod or any
member calls into a surviving component.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .model import MethodId
from .probing import CallGraph


class Classification(enum.Enum):
    LOG_METHOD = "LOG_METHOD"
    LOG_INDUCING = "LOG_INDUCING"
    PRUNED = "PRUNED"


@dataclass
class PrunedCallGraph:
    kept: frozenset[MethodId]
    edges: frozenset[tuple[MethodId, MethodId]]
    classification: dict[MethodId, Classification]

    def is_leaf(self, mid: MethodId) -> bool:
        """No outgoing edges to kept methods."""
        return not any(caller == mid for caller, _ in self.edges)

    def entry_candidates(self) -> list[MethodId]:
        """Kept methods nobody calls, in id order."""
        called = {callee for _, callee in self.edges}
        return sorted(m for m in self.kept if m not in called)


def prune(cg: CallGraph, log_methods: set[MethodId]) -> PrunedCallGraph:
    scc_edges: dict[int, set[int]] = {}
    for caller, callee in cg.edges:
        s, t = cg.scc_of[caller], cg.scc_of[callee]
        if s != t:
            scc_edges.setdefault(s, set()).add(t)

    kept_scc: set[int] = set()
    # cg.sccs is callee-first, so successors are decided before each node
    for idx, members in enumerate(cg.sccs):
        if any(m in log_methods for m in members) or \
                any(t in kept_scc for t in scc_edges.get(idx, ())):
            kept_scc.add(idx)

    kept = frozenset(m for idx in kept_scc for m in cg.sccs[idx])
    classification = {}
    for m in cg.nodes:
        if m in log_methods:
            classification[m] = Classification.LOG_METHOD
        elif m in kept:
            classification[m] = Classification.LOG_INDUCING
        else:
            classification[m] = Classification.PRUNED
    return PrunedCallGraph(
        kept=kept,
        edges=frozenset((a, b) for a, b in cg.edges if a in kept and b in kept),
        classification=classification,
    )


def format_classification(pruned: PrunedCallGraph, names: dict[MethodId, str]) -> str:
    lines = [f"{names[m]} {pruned.classification[m].value}"
             for m in sorted(pruned.classification)]
    return "\n".join(lines) + "\n"
