"""Independent brute-force implementations used as test oracles.

Each of these mirrors a contract, not an implementation: reachability by
per-node search, Kosaraju instead of Tarjan, breadth-first path listing
with truth-assignment feasibility instead of the production DFS with a
flow-sensitive filter, and exhaustive walk-space enumeration instead of
random walking.
"""

from __future__ import annotations

from collections import deque

from logsynth.generation import Label
from logsynth.labeling import Status
from logsynth.model import AssignAct, Branch, Call, ExecutionGraph, Log
from logsynth.pathfinding import LogStep, Mark


# ── Pruning oracle: per-node DFS reachability ────────────────────────

def reachable_to_log_methods(nodes, edges, log_methods) -> set[int]:
    succ: dict[int, list[int]] = {}
    for a, b in edges:
        succ.setdefault(a, []).append(b)

    def can_reach(start: int) -> bool:
        seen = {start}
        stack = [start]
        while stack:
            n = stack.pop()
            if n in log_methods:
                return True
            for m in succ.get(n, ()):
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return False

    return {n for n in nodes if can_reach(n)}


# ── SCC oracle: Kosaraju ─────────────────────────────────────────────

def kosaraju_sccs(nodes, edges) -> set[frozenset[int]]:
    succ: dict[int, list[int]] = {n: [] for n in nodes}
    pred: dict[int, list[int]] = {n: [] for n in nodes}
    for a, b in edges:
        succ[a].append(b)
        pred[b].append(a)

    seen: set[int] = set()
    order: list[int] = []
    for root in nodes:
        if root in seen:
            continue
        stack = [(root, iter(succ[root]))]
        seen.add(root)
        while stack:
            node, it = stack[-1]
            advanced = False
            for child in it:
                if child not in seen:
                    seen.add(child)
                    stack.append((child, iter(succ[child])))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
                stack.pop()

    assigned: set[int] = set()
    comps: set[frozenset[int]] = set()
    for root in reversed(order):
        if root in assigned:
            continue
        comp = {root}
        assigned.add(root)
        queue = deque([root])
        while queue:
            n = queue.popleft()
            for m in pred[n]:
                if m not in assigned:
                    assigned.add(m)
                    comp.add(m)
                    queue.append(m)
        comps.add(frozenset(comp))
    return comps


# ── CFG path oracle ──────────────────────────────────────────────────

def bfs_all_walks(cfg: ExecutionGraph) -> list[tuple]:
    """Every entry-to-exit walk that repeats no edge, listed by iterative
    breadth-first expansion of partial walks."""
    entry, exit_ = cfg.entry_id(), cfg.exit_id()
    out_edges: dict[int, list] = {}
    for frm, to, g in cfg.edges:
        out_edges.setdefault(frm, []).append((to, g))
    done = []
    queue = deque([(((entry, None),), frozenset())])
    while queue:
        visits, used = queue.popleft()
        node = visits[-1][0]
        if node == exit_:
            done.append(visits)
            continue
        for to, g in out_edges.get(node, ()):
            key = (node, to, None if g is None else (g.var, g.value))
            if key in used:
                continue
            queue.append((visits + ((to, g),), used | {key}))
    return done


def assignment_feasible(cfg: ExecutionGraph, visits) -> bool:
    """Feasibility by enumerating truth assignments over variable epochs:
    an assignment statement or a re-evaluation at a revisited branch
    starts a fresh epoch for the variable."""
    epoch: dict[str, int] = {}
    visited_nodes: set[int] = set()
    guards: list[tuple[tuple[str, int], bool]] = []
    for node, g in visits:
        if g is not None:
            if g.var is None:
                if not g.value:
                    return False
            else:
                guards.append(((g.var, epoch.get(g.var, 0)), g.value))
        act = cfg.nodes[node]
        if node in visited_nodes and isinstance(act, Branch) \
                and act.cond.var is not None:
            epoch[act.cond.var] = epoch.get(act.cond.var, 0) + 1
        if isinstance(act, AssignAct):
            epoch[act.var] = epoch.get(act.var, 0) + 1
        visited_nodes.add(node)

    variables = sorted({v for v, _ in guards})
    if len(variables) > 20:
        raise RuntimeError("oracle blow-up: too many guard epochs")
    for mask in range(1 << len(variables)):
        assignment = {v: bool(mask >> i & 1) for i, v in enumerate(variables)}
        if all(assignment[v] == polarity for v, polarity in guards):
            return True
    return not variables


def _cycle_set(cfg: ExecutionGraph, head: int) -> set[int]:
    """The head's natural loop, from first principles: `head` dominates a
    node exactly when deleting `head` disconnects it from entry, and the
    loop is everything that can reach a dominated back-edge source
    without crossing the head."""
    entry = cfg.entry_id()
    succ: dict[int, list[int]] = {}
    pred: dict[int, list[int]] = {}
    for frm, to, _ in cfg.edges:
        succ.setdefault(frm, []).append(to)
        pred.setdefault(to, []).append(frm)

    def sweep(start: int, nxt: dict[int, list[int]], banned: int) -> set[int]:
        if start == banned:
            return set()
        seen = {start}
        stack = [start]
        while stack:
            n = stack.pop()
            for m in nxt.get(n, ()):
                if m != banned and m not in seen:
                    seen.add(m)
                    stack.append(m)
        return seen

    alive_without_head = sweep(entry, succ, banned=head)
    back_sources = [
        frm for frm, to, _ in cfg.edges
        if to == head and frm not in alive_without_head
    ]
    loop = {head}
    for u in back_sources:
        loop |= {u} | sweep(u, pred, banned=head)
    return loop


def project_walk(cfg: ExecutionGraph, visits, kept: set[int],
                 stmt_to_event: dict[int, int]) -> list[tuple]:
    """Project one walk onto (event/callee, mark) step tuples plus the
    skipped-loop flag, using consecutive head occurrences for regions.
    One variant is returned per callee choice at ambiguous call sites."""
    cycle_sets = {h: _cycle_set(cfg, h) for h in cfg.loop_heads}

    recorded: list[tuple[int, str, object]] = []
    for i, (node, _) in enumerate(visits):
        act = cfg.nodes[node]
        if isinstance(act, Log):
            recorded.append((i, "log", (stmt_to_event[act.stmt.id],)))
        elif isinstance(act, Call):
            kept_callees = tuple(c for c in act.callees if c in kept)
            if kept_callees:
                recorded.append((i, "call", kept_callees))

    marks = {j: set() for j in range(len(recorded))}
    skipped = False
    for head, cset in cycle_sets.items():
        occurrences = [i for i, (n, _) in enumerate(visits) if n == head]
        if not occurrences:
            continue
        entered = any(i + 1 < len(visits) and visits[i + 1][0] in cset
                      for i in occurrences)
        if not entered:
            if any(i + 1 < len(visits) and visits[i + 1][0] not in cset
                   for i in occurrences):
                skipped = True
            continue
        for a, b in zip(occurrences, occurrences[1:]):
            inside = [j for j, (i, _, _) in enumerate(recorded) if a < i < b]
            if inside:
                marks[inside[0]].add("start")
                marks[inside[-1]].add("end")

    def mark_of(j):
        m = marks[j]
        if "start" in m and "end" in m:
            return Mark.BOTH
        if "start" in m:
            return Mark.START
        if "end" in m:
            return Mark.END
        return Mark.NONE

    from itertools import product

    choice_lists = [payload for (_, _, payload) in recorded]
    variants = []
    for combo in product(*choice_lists) if choice_lists else [()]:
        steps = tuple(
            (kind, combo[j], mark_of(j))
            for j, (_, kind, _) in enumerate(recorded)
        )
        variants.append((steps, skipped))
    return variants


def oracle_path_set(cfg: ExecutionGraph, kept: set[int],
                    stmt_to_event: dict[int, int]) -> set[tuple]:
    """The feasible projected path set: (steps, skipped) pairs."""
    out: set[tuple] = set()
    for visits in bfs_all_walks(cfg):
        if not assignment_feasible(cfg, visits):
            continue
        out.update(project_walk(cfg, visits, kept, stmt_to_event))
    return out


def production_path_set(store, method_id: int) -> set[tuple]:
    """The production store's paths for one method, shaped like the oracle's."""
    out = set()
    for p in store.by_method[method_id]:
        steps = tuple(
            ("log", s.event, s.loop_mark) if isinstance(s, LogStep)
            else ("call", s.callee, s.loop_mark)
            for s in p.steps
        )
        out.add((steps, p.skips_loop))
    return out


# ── Walk-space oracle for generation ─────────────────────────────────

def walk_space(store, infection, scc_of, cycle_sccs, params, entry: int,
               mode: Label) -> set[tuple[int, ...]]:
    """Every event list a legal walk can produce, by exhaustive expansion
    of all path, callee, and loop-repetition choices."""
    results: set[tuple[int, ...]] = set()

    def parse(steps):
        root, stack = [], []
        cur = root
        for s in steps:
            if s.loop_mark in (Mark.START, Mark.BOTH):
                region = []
                cur.append(("region", region))
                stack.append(cur)
                cur = region
            cur.append(("step", s))
            if s.loop_mark in (Mark.END, Mark.BOTH) and stack:
                cur = stack.pop()
        while stack:  # unterminated: flatten
            parent = stack.pop()
            for i, n in enumerate(parent):
                if n[0] == "region" and n[1] is cur:
                    parent[i:i + 1] = cur
                    break
            cur = parent
        return root

    def candidates(mid, hit):
        paths = store.by_method.get(mid, [])
        if mode is Label.NORMAL:
            return [p for p in paths if infection.status[p.id] is not Status.SEED]
        if not hit:
            return [p for p in paths
                    if infection.status[p.id] is not Status.CLEAN
                    and not p.skips_loop]
        return [p for p in paths if not p.skips_loop]

    def visit(mid, hit, budgets, prefix):
        outs = set()
        for p in candidates(mid, hit):
            new_hit = hit or infection.status[p.id] is Status.SEED
            for tail_hit, tail in run(parse(p.steps), new_hit, budgets, ()):
                outs.add((tail_hit, tail))
        return outs

    def run(forest, hit, budgets, acc):
        outs = {(hit, acc)}
        for node in forest:
            next_outs = set()
            for h, events in outs:
                if node[0] == "step":
                    s = node[1]
                    if isinstance(s, LogStep):
                        next_outs.add((h, events + (s.event,)))
                    else:
                        scc = scc_of[s.callee]
                        cyclic = scc in cycle_sccs
                        if cyclic:
                            if budgets.get(scc, 0) > params.max_recursion_depth:
                                continue
                            b2 = dict(budgets)
                            b2[scc] = b2.get(scc, 0) + 1
                        else:
                            b2 = budgets
                        for h2, sub in visit(s.callee, h, b2, ()):
                            next_outs.add((h2, events + sub))
                else:
                    for reps in range(1, params.max_loop_reps + 1):
                        for h2, sub in repeat(node[1], h, budgets, reps):
                            next_outs.add((h2, events + sub))
            outs = next_outs
        return outs

    def repeat(forest, hit, budgets, reps):
        outs = {(hit, ())}
        for _ in range(reps):
            next_outs = set()
            for h, events in outs:
                for h2, sub in run(forest, h, budgets, ()):
                    next_outs.add((h2, events + sub))
            outs = next_outs
        return outs

    start_budgets = (
        {scc_of[entry]: 1} if scc_of[entry] in cycle_sccs else {}
    )
    for final_hit, events in visit(entry, False, start_budgets, ()):
        if not events:
            continue
        if mode is Label.ANOMALY and not final_hit:
            continue
        results.add(events)
    return results
