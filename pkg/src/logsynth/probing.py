"""Phase 1: derive the call graph and mark the methods that log.

The call graph collapses call sites to distinct (caller, callee) pairs.
Its strongly connected components are condensed so later passes can
treat the graph as acyclic; methods in a component of size > 1 or with a
self call get the in_cycle flag.  A method is a LogMethod when its
execution graph contains a logging activity, or a CALL naming one of the
configured external logging APIs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import LogsynthError
from .model import Call, Log, MethodId, ProgramModel


@dataclass(frozen=True)
class LoggingApiConfig:
    """Names recognized as external logging APIs in CALL activities."""

    names: frozenset[str] = frozenset({"log"})

    def __post_init__(self):
        if not self.names:
            raise LogsynthError("logging API config must name at least one API")

    @classmethod
    def load(cls, path) -> "LoggingApiConfig":
        names = set()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    names.add(line)
        return cls(frozenset(names) if names else frozenset({"log"}))


@dataclass
class CallGraph:
    nodes: frozenset[MethodId]
    edges: frozenset[tuple[MethodId, MethodId]]
    scc_of: dict[MethodId, int]
    # components listed callee-first: every edge goes from a later
    # component to an earlier one, so iterating `sccs` in order visits
    # all successors of a component before the component itself
    sccs: tuple[tuple[MethodId, ...], ...] = field(default_factory=tuple)

    def in_cycle(self, mid: MethodId) -> bool:
        members = self.sccs[self.scc_of[mid]]
        return len(members) > 1 or (mid, mid) in self.edges


def _tarjan_sccs(nodes: list[int], succ: dict[int, list[int]]) -> list[list[int]]:
    """Iterative Tarjan; emits components in reverse topological order."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    sccs: list[list[int]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work: list[tuple[int, int]] = [(root, 0)]
        while work:
            node, child_i = work[-1]
            if child_i == 0:
                index[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            advanced = False
            children = succ.get(node, [])
            while child_i < len(children):
                child = children[child_i]
                child_i += 1
                if child not in index:
                    work[-1] = (node, child_i)
                    work.append((child, 0))
                    advanced = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], index[child])
            if advanced:
                continue
            work.pop()
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                sccs.append(sorted(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
    return sccs


def condense(nodes, edges) -> CallGraph:
    """Condense a raw (caller, callee) edge set into a CallGraph."""
    node_list = sorted(nodes)
    edge_pairs = sorted(set(edges))
    succ: dict[int, list[int]] = {}
    for caller, callee in edge_pairs:
        succ.setdefault(caller, []).append(callee)
    sccs = _tarjan_sccs(node_list, succ)
    scc_of = {m: i for i, comp in enumerate(sccs) for m in comp}
    return CallGraph(
        nodes=frozenset(node_list),
        edges=frozenset(edge_pairs),
        scc_of=scc_of,
        sccs=tuple(tuple(c) for c in sccs),
    )


def build_call_graph(model: ProgramModel) -> CallGraph:
    """Collect call edges, condense strongly connected components, and set
    each method's in_cycle flag."""
    graph = condense(
        model.methods.keys(),
        {(caller, callee) for caller, callee, _ in model.call_edges},
    )
    for mid in sorted(model.methods):
        model.methods[mid].in_cycle = graph.in_cycle(mid)
    return graph


def mark_log_methods(
    model: ProgramModel, config: LoggingApiConfig = LoggingApiConfig()
) -> set[MethodId]:
    """Identify methods that contain a logging activity (or call a
    configured external logging API) and set their is_log_method flag."""
    marked: set[MethodId] = set()
    for mid, method in model.methods.items():
        found = False
        for act in method.cfg.nodes.values():
            if isinstance(act, Log):
                found = True
                break
            if isinstance(act, Call) and act.external is not None \
                    and act.external in config.names:
                found = True
                break
        method.is_log_method = found
        if found:
            marked.add(mid)
    return marked
