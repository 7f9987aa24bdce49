"""Phase 2b-2c: restore logging statements to message templates and
record each kept method's log-related execution paths.

Path space: every entry-to-exit walk of the method's execution graph
that traverses no edge twice.  On structured graphs this is exactly
"each loop runs zero or one time"; repetition is reintroduced at
generation time from the loop marks.  Each walk is projected onto its
logging activities and its calls to kept methods; a call site with
several possible callees (ambiguous dispatch) expands into one variant
per callee.  The first and last recorded step inside a loop body carry
start/end marks so the generator can replay the region.

A walk that leaves some loop without ever entering its body is flagged
(`skips_loop`): it is a legal zero-iteration execution, kept for path
choice, but the generator only offers it to normal-mode walks.
"""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field, replace

from .model import (
    AssignAct,
    Call,
    EventId,
    ExecutionGraph,
    Guard,
    Literal,
    Log,
    LogEvent,
    LoggingStatement,
    MethodId,
    MethodNode,
    ProgramModel,
    natural_loop,
)
from .pruning import PrunedCallGraph

log = logging.getLogger(__name__)

PLACEHOLDER = "<*>"


class Mark(str, enum.Enum):
    NONE = "none"
    START = "start"
    END = "end"
    BOTH = "both"

    def suffix(self) -> str:
        return {"none": "", "start": ":S", "end": ":E", "both": ":SE"}[self.value]


@dataclass(frozen=True)
class LogStep:
    event: EventId
    loop_mark: Mark = Mark.NONE


@dataclass(frozen=True)
class CallStep:
    callee: MethodId
    loop_mark: Mark = Mark.NONE


Step = LogStep | CallStep

# Guard/assignment events accumulated along a walk, in order:
#   ("guard", var, bool) ("assign", var) ("lit", bool)
TraceEvent = tuple


@dataclass(frozen=True)
class LogPath:
    """One log-related execution path of a method."""

    id: int
    method: MethodId
    steps: tuple[Step, ...]
    constraints: frozenset[tuple[str, bool]] = frozenset()
    skips_loop: bool = False
    guard_trace: tuple[TraceEvent, ...] = field(
        default=(), compare=False, repr=False
    )


@dataclass(frozen=True)
class PathLimits:
    max_paths_per_method: int = 4096


@dataclass
class PathStore:
    by_method: dict[MethodId, list[LogPath]]
    events: dict[EventId, LogEvent]

    def path(self, ep_id: int) -> LogPath:
        return self._index()[ep_id]

    def all_paths(self) -> list[LogPath]:
        return [p for mid in sorted(self.by_method) for p in self.by_method[mid]]

    def _index(self) -> dict[int, LogPath]:
        cached = getattr(self, "_path_index", None)
        if cached is None:
            cached = {p.id: p for p in self.all_paths()}
            object.__setattr__(self, "_path_index", cached)
        return cached


# ── Feasibility ──────────────────────────────────────────────────────

def satisfiable(trace: tuple[TraceEvent, ...]) -> bool:
    """Decide a guard/assignment trace: a variable may not be required to
    hold both polarities without an intervening reassignment, and a
    literal-false guard is never taken."""
    known: dict[str, bool] = {}
    for ev in trace:
        if ev[0] == "lit":
            if not ev[1]:
                return False
        elif ev[0] == "guard":
            _, var, val = ev
            if known.get(var, val) != val:
                return False
            known[var] = val
        else:  # assignment clears what we know about the variable
            known.pop(ev[1], None)
    return True


def filter_infeasible(paths: list[LogPath]) -> list[LogPath]:
    """Drop paths whose accumulated guards cannot all hold."""
    return [p for p in paths if satisfiable(p.guard_trace)]


# ── Raw walks over one execution graph ───────────────────────────────

def _iter_walks(cfg: ExecutionGraph, start: int, goal: int, *,
                prefixes_to: int | None = None, cap: int | None = None):
    """Yield edge-simple walks from start as tuples of (node, in-guard).

    With prefixes_to set, yields every arrival at that node instead of
    complete walks to goal.  Deterministic: successors are explored
    true-guard-first.
    """
    succ = {n: cfg.successors(n) for n in cfg.nodes}
    path: list[tuple[int, Guard | None]] = [(start, None)]
    used: set[tuple[int, int, str]] = set()
    count = 0
    target = prefixes_to if prefixes_to is not None else goal

    def rec(node):
        nonlocal count
        if cap is not None and count >= cap:
            return
        if node == target:
            count += 1
            yield tuple(path)
        for to, guard in succ[node]:
            if cap is not None and count >= cap:
                return
            key = (node, to, "" if guard is None else f"{guard.var}:{guard.value}")
            if key in used:
                continue
            used.add(key)
            path.append((to, guard))
            yield from rec(to)
            path.pop()
            used.discard(key)

    yield from rec(start)


def _trace_of(cfg: ExecutionGraph, visits,
              loops: dict[int, set[int]] | None = None) -> tuple[TraceEvent, ...]:
    if loops is None:
        loops = _loop_shapes(cfg)
    trace: list[TraceEvent] = []
    prev = None
    for node, guard in visits:
        # the in-edge guard was evaluated before moving, under the old values
        if guard is not None:
            if guard.var is None:
                trace.append(("lit", guard.value))
            else:
                trace.append(("guard", guard.var, guard.value))
        # a back edge returns to a loop head, where the loop condition is
        # evaluated afresh: its previous polarity no longer binds
        if prev is not None and node in loops and prev in loops[node]:
            cond = cfg.nodes[node].cond
            if cond.var is not None:
                trace.append(("assign", cond.var))
        act = cfg.nodes[node]
        if isinstance(act, AssignAct):
            trace.append(("assign", act.var))
        prev = node
    return tuple(trace)


# ── Restoring logging statements ─────────────────────────────────────

def _resolve_var(cfg: ExecutionGraph, node: int, var: str,
                 limits: PathLimits) -> str | None:
    """The unique constant a variable holds at every feasible arrival at
    `node`, or None when unassigned somewhere or not unique."""
    entry = cfg.entry_id()
    budget = limits.max_paths_per_method
    loops = _loop_shapes(cfg)
    values: set[str] = set()
    seen = 0
    feasible = 0
    for visits in _iter_walks(cfg, entry, -1, prefixes_to=node, cap=budget + 1):
        seen += 1
        if seen > budget:
            return None  # truncated: cannot prove uniqueness
        if not satisfiable(_trace_of(cfg, visits, loops)):
            continue
        feasible += 1
        value = None
        for n, _ in visits[:-1]:
            act = cfg.nodes[n]
            if isinstance(act, AssignAct) and act.var == var:
                value = act.literal
        if value is None:
            return None
        values.add(value)
        if len(values) > 1:
            return None
    if feasible == 0 or len(values) != 1:
        return None
    return next(iter(values))


def restore_statement(stmt: LoggingStatement, method: MethodNode,
                      event_id: int = 0,
                      limits: PathLimits = PathLimits()) -> LogEvent:
    """Build the statement's message template: literals are kept, and each
    variable becomes its uniquely-dominating in-method constant or the
    placeholder token."""
    node = None
    for aid, act in method.cfg.nodes.items():
        if isinstance(act, Log) and act.stmt.id == stmt.id:
            node = aid
            break
    if node is None:
        raise ValueError(f"statement {stmt.id} not found in method {method.name}")
    pieces: list[str] = []
    for part in stmt.parts:
        if isinstance(part, Literal):
            pieces.append(part.text)
        else:
            resolved = _resolve_var(method.cfg, node, part.name, limits)
            pieces.append(resolved if resolved is not None else PLACEHOLDER)
    return LogEvent(
        event_id=event_id,
        level=stmt.level,
        template="".join(pieces),
        origin=stmt.id,
    )


# ── Enumerating log-related execution paths ──────────────────────────

def strategy_for(method: MethodNode, cg_prime: PrunedCallGraph) -> int:
    """1: logging non-leaf, 2: logging leaf, 3: non-logging non-leaf."""
    if method.id not in cg_prime.kept:
        raise ValueError(f"method {method.name} was pruned")
    leaf = cg_prime.is_leaf(method.id)
    if method.is_log_method:
        return 2 if leaf else 1
    if leaf:
        raise ValueError(
            f"method {method.name} is kept but neither logs nor calls kept methods"
        )
    return 3


def _loop_shapes(cfg: ExecutionGraph):
    """Per loop head: its natural-loop node set."""
    return {h: natural_loop(cfg, h) for h in cfg.loop_heads}


def _regions_and_skips(cfg: ExecutionGraph, visits, loops):
    """Closed loop regions on one walk as (start, end) visit-index ranges,
    plus whether the walk skipped some loop entirely."""
    regions: list[tuple[int, int]] = []
    open_stack: list[tuple[int, int]] = []  # (head, content start index)
    body_taken: set[int] = set()
    exit_taken: set[int] = set()
    for i in range(1, len(visits)):
        prev = visits[i - 1][0]
        node = visits[i][0]
        if prev in loops:
            if node in loops[prev]:
                body_taken.add(prev)
                open_stack.append((prev, i))
            else:
                exit_taken.add(prev)
        if node in loops and any(h == node for h, _ in open_stack):
            # back at an open head: close its region, dropping any
            # unclosed inner regions opened after it
            while open_stack:
                head, start = open_stack.pop()
                if head == node:
                    regions.append((start, i - 1))
                    break
    skipped = any(h in exit_taken and h not in body_taken for h in loops)
    return regions, skipped


def enumerate_logeps(
    method: MethodNode,
    cg_prime: PrunedCallGraph,
    limits: PathLimits = PathLimits(),
    event_ids: dict[int, int] | None = None,
) -> list[LogPath]:
    """All projected paths of one kept method, unfiltered, deduplicated,
    in deterministic order.  Ids are placeholders (-1) until the store
    assigns them."""
    cfg = method.cfg
    loops = _loop_shapes(cfg)
    entry, exit_ = cfg.entry_id(), cfg.exit_id()
    out: list[LogPath] = []
    seen: set[tuple] = set()
    budget = limits.max_paths_per_method
    truncated = False

    for visits in _iter_walks(cfg, entry, exit_, cap=budget + 1):
        if len(out) > budget:
            truncated = True
            break
        regions, skipped = _regions_and_skips(cfg, visits, loops)
        trace = _trace_of(cfg, visits, loops)

        recorded: list[tuple[int, str, object]] = []  # (visit idx, kind, payload)
        for i, (node, _) in enumerate(visits):
            act = cfg.nodes[node]
            if isinstance(act, Log):
                eid = act.stmt.id if event_ids is None else event_ids[act.stmt.id]
                recorded.append((i, "log", eid))
            elif isinstance(act, Call) and act.callees:
                kept = tuple(c for c in act.callees if c in cg_prime.kept)
                if kept:
                    recorded.append((i, "call", kept))

        opens: dict[int, bool] = {}
        closes: dict[int, bool] = {}
        for start, end in regions:
            inside = [j for j, (i, _, _) in enumerate(recorded) if start <= i <= end]
            if inside:
                opens[inside[0]] = True
                closes[inside[-1]] = True

        def mark_of(j: int) -> Mark:
            o, c = opens.get(j, False), closes.get(j, False)
            if o and c:
                return Mark.BOTH
            if o:
                return Mark.START
            if c:
                return Mark.END
            return Mark.NONE

        # one variant per callee choice at each ambiguous call site
        choice_sets = []
        for j, (_, kind, payload) in enumerate(recorded):
            if kind == "call":
                choice_sets.append([(j, c) for c in payload])
        for combo in itertools.product(*choice_sets) if choice_sets else [()]:
            chosen = dict(combo)
            steps: list[Step] = []
            for j, (_, kind, payload) in enumerate(recorded):
                m = mark_of(j)
                if kind == "log":
                    steps.append(LogStep(payload, m))
                else:
                    steps.append(CallStep(chosen[j], m))
            constraints = frozenset(
                (ev[1], ev[2]) for ev in trace if ev[0] == "guard"
            )
            key = (tuple(steps), skipped, trace)
            if key in seen:
                continue
            seen.add(key)
            out.append(LogPath(
                id=-1,
                method=method.id,
                steps=tuple(steps),
                constraints=constraints,
                skips_loop=skipped,
                guard_trace=trace,
            ))
            if len(out) > budget:
                truncated = True
                break
        if truncated:
            break

    if truncated:
        out = out[:budget]
        log.warning(
            "method %s: path enumeration truncated at %d paths",
            method.name, budget,
        )
    return out


# ── Assembling the store ─────────────────────────────────────────────

def _method_paths(method: MethodNode, cg_prime: PrunedCallGraph,
                  limits: PathLimits, stmt_to_event: dict[int, int]
                  ) -> list[LogPath]:
    """Enumerate, filter, and deduplicate one method's paths (ids -1)."""
    raw = enumerate_logeps(method, cg_prime, limits, stmt_to_event)
    feasible = filter_infeasible(raw)
    final: list[LogPath] = []
    taken: set[tuple] = set()
    for p in feasible:
        key = (p.steps, p.skips_loop)
        if key in taken:
            continue
        taken.add(key)
        final.append(p)
    return final


def _method_events(method: MethodNode, limits: PathLimits,
                   assignments: list[tuple[int, LoggingStatement]]
                   ) -> list[LogEvent]:
    return [restore_statement(stmt, method, eid, limits)
            for eid, stmt in assignments]


_POOL: dict = {}


def _pool_init(model, cg_prime, limits, stmt_to_event, event_plan):
    _POOL.update(model=model, cg_prime=cg_prime, limits=limits,
                 stmt_to_event=stmt_to_event, event_plan=event_plan)


def _pool_task(mids: list[int]):
    out = []
    for mid in mids:
        method = _POOL["model"].methods[mid]
        events = _method_events(method, _POOL["limits"],
                                _POOL["event_plan"].get(mid, []))
        paths = _method_paths(method, _POOL["cg_prime"], _POOL["limits"],
                              _POOL["stmt_to_event"])
        out.append((mid, events, paths))
    return out


def build_store(
    model: ProgramModel,
    cg_prime: PrunedCallGraph,
    limits: PathLimits = PathLimits(),
    workers: int = 1,
) -> PathStore:
    """Restore every reachable logging statement of the kept methods into
    an event table and enumerate, filter, and number each kept method's
    paths.  Per-method work is independent; the worker count never
    changes the result."""
    stmt_to_event: dict[int, int] = {}
    event_plan: dict[int, list[tuple[int, LoggingStatement]]] = {}
    next_event = 0
    for mid, aid, stmt in model.statements():
        if mid not in cg_prime.kept:
            continue
        if aid not in model.methods[mid].cfg.reachable_from_entry():
            continue
        stmt_to_event[stmt.id] = next_event
        event_plan.setdefault(mid, []).append((next_event, stmt))
        next_event += 1

    kept = sorted(cg_prime.kept)
    results: dict[int, tuple[list[LogEvent], list[LogPath]]] = {}
    if workers <= 1 or len(kept) < 4:
        for mid in kept:
            method = model.methods[mid]
            results[mid] = (
                _method_events(method, limits, event_plan.get(mid, [])),
                _method_paths(method, cg_prime, limits, stmt_to_event),
            )
    else:
        from concurrent.futures import ProcessPoolExecutor

        chunk = max(1, len(kept) // (workers * 4))
        batches = [kept[i:i + chunk] for i in range(0, len(kept), chunk)]
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_pool_init,
            initargs=(model, cg_prime, limits, stmt_to_event, event_plan),
        ) as pool:
            for part in pool.map(_pool_task, batches):
                for mid, events, paths in part:
                    results[mid] = (events, paths)

    all_events: dict[int, LogEvent] = {}
    by_method: dict[int, list[LogPath]] = {}
    next_id = 0
    for mid in kept:
        events, paths = results[mid]
        for ev in events:
            all_events[ev.event_id] = ev
        final = []
        for p in paths:
            final.append(replace(p, id=next_id))
            next_id += 1
        by_method[mid] = final
    return PathStore(by_method=by_method, events=all_events)


def format_store_dump(store: PathStore, model: ProgramModel) -> str:
    """Inspection dump: the event table and every path's steps."""
    lines = []
    for eid in sorted(store.events):
        ev = store.events[eid]
        lines.append(f"EV {eid} {ev.level} {ev.template}")
    for path in store.all_paths():
        steps = []
        for s in path.steps:
            if isinstance(s, LogStep):
                steps.append(f"L:{s.event}{s.loop_mark.suffix()}")
            else:
                steps.append(f"C:{model.methods[s.callee].name}{s.loop_mark.suffix()}")
        name = model.methods[path.method].name
        lines.append(" ".join([f"EP {path.id} {name}"] + steps))
    return "\n".join(lines) + "\n"
