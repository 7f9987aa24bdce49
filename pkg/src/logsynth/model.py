"""Shared program representation: method set, call graph edges, and
per-method execution graphs with logging statements.

The on-disk model file is line-oriented UTF-8 text with four record
kinds, in this order (`#` starts a comment line):

    M <id> <name> [component]
    A <method-id> <activity-id> <kind> [payload]
    E <method-id> <from> <to> [guard]
    C <caller-id> <site-activity-id> <callee-id>

Activity kinds are ENTRY, EXIT, LOG, CALL, ASSIGN, BRANCH.  A LOG
payload is `<level>|<part>|<part>...` with parts `L:<escaped-text>` or
`V:<name>`; an ASSIGN payload is `<var>|<escaped-literal>`; a BRANCH
payload and edge guards use `T:<var>`, `F:<var>`, `TRUE`, or `FALSE`.
A CALL payload, when present, names an external logging API; internal
callees come from C records (several C records for one site encode an
ambiguous dispatch).

Statement ids are not stored: they are re-derived on load in
(method-id, activity-id) order, which is also the order the frontend
assigns them in, so save/load round-trips are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import LogsynthError

MethodId = int
ActivityId = int
StatementId = int
EventId = int

LEVELS = ("info", "warn", "error")


class ModelFormatError(LogsynthError):
    pass


# ── Guards and statement parts ───────────────────────────────────────

@dataclass(frozen=True)
class Guard:
    """Condition under which an edge is taken: a variable polarity, or a
    literal when var is None."""

    var: str | None
    value: bool

    def negation(self) -> "Guard":
        return Guard(self.var, not self.value)


GUARD_TRUE = Guard(None, True)
GUARD_FALSE = Guard(None, False)


def format_guard(g: Guard) -> str:
    if g.var is None:
        return "TRUE" if g.value else "FALSE"
    return ("T:" if g.value else "F:") + g.var


def parse_guard(text: str) -> Guard:
    if text == "TRUE":
        return GUARD_TRUE
    if text == "FALSE":
        return GUARD_FALSE
    if text.startswith("T:") and len(text) > 2:
        return Guard(text[2:], True)
    if text.startswith("F:") and len(text) > 2:
        return Guard(text[2:], False)
    raise ModelFormatError(f"malformed guard {text!r}")


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class Var:
    name: str


Part = Literal | Var


@dataclass(frozen=True)
class LoggingStatement:
    id: StatementId
    level: str
    parts: tuple[Part, ...]
    line: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"bad log level {self.level!r}")
        if not self.parts:
            raise ValueError("logging statement needs at least one part")


@dataclass(frozen=True)
class LogEvent:
    event_id: EventId
    level: str
    template: str
    # provenance; not part of the on-disk dataset, so excluded from equality
    origin: StatementId = field(default=-1, compare=False)


# ── Activities ───────────────────────────────────────────────────────

@dataclass(frozen=True)
class Entry:
    pass


@dataclass(frozen=True)
class Exit:
    pass


@dataclass(frozen=True)
class Log:
    stmt: LoggingStatement


@dataclass(frozen=True)
class Call:
    callees: tuple[MethodId, ...] = ()  # >1 encodes ambiguous dispatch
    external: str | None = None         # external logging API name


@dataclass(frozen=True)
class AssignAct:
    var: str
    literal: str


@dataclass(frozen=True)
class Branch:
    cond: Guard


Activity = Entry | Exit | Log | Call | AssignAct | Branch

_KIND_NAMES = {
    Entry: "ENTRY", Exit: "EXIT", Log: "LOG",
    Call: "CALL", AssignAct: "ASSIGN", Branch: "BRANCH",
}


# ── Execution graph ──────────────────────────────────────────────────

@dataclass
class ExecutionGraph:
    nodes: dict[ActivityId, Activity]
    edges: set[tuple[ActivityId, ActivityId, Guard | None]]
    loop_heads: set[ActivityId] = field(default_factory=set)

    def entry_id(self) -> ActivityId:
        return self._only(Entry)

    def exit_id(self) -> ActivityId:
        return self._only(Exit)

    def _only(self, kind) -> ActivityId:
        found = [a for a, act in self.nodes.items() if isinstance(act, kind)]
        if len(found) != 1:
            raise ModelFormatError(
                f"execution graph must have exactly one {_KIND_NAMES[kind]} node, found {len(found)}"
            )
        return found[0]

    def successors(self, node: ActivityId) -> list[tuple[ActivityId, Guard | None]]:
        """Out-edges of a node in a deterministic order (true guard first)."""
        out = [(to, g) for (frm, to, g) in self.edges if frm == node]
        out.sort(key=lambda e: (0 if (e[1] is not None and e[1].value) else 1,
                                e[0], format_guard(e[1]) if e[1] else ""))
        return out

    def reachable_from_entry(self) -> set[ActivityId]:
        start = self.entry_id()
        seen = {start}
        stack = [start]
        succ: dict[int, list[int]] = {}
        for frm, to, _ in self.edges:
            succ.setdefault(frm, []).append(to)
        while stack:
            n = stack.pop()
            for m in succ.get(n, ()):
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return seen


def dominators(graph: ExecutionGraph) -> dict[ActivityId, set[ActivityId]]:
    """Dominator sets over entry-reachable nodes (iterative dataflow)."""
    entry = graph.entry_id()
    reach = graph.reachable_from_entry()
    preds: dict[int, list[int]] = {n: [] for n in reach}
    for frm, to, _ in graph.edges:
        if frm in reach and to in reach:
            preds[to].append(frm)
    dom = {n: set(reach) for n in reach}
    dom[entry] = {entry}
    order = sorted(reach)
    changed = True
    while changed:
        changed = False
        for n in order:
            if n == entry:
                continue
            ps = preds[n]
            new = set.intersection(*(dom[p] for p in ps)) if ps else set()
            new.add(n)
            if new != dom[n]:
                dom[n] = new
                changed = True
    return dom


def derive_loop_heads(graph: ExecutionGraph) -> set[ActivityId]:
    """Loop heads: branch nodes that dominate the source of one of their
    in-edges (i.e. targets of a back edge)."""
    dom = dominators(graph)
    heads: set[ActivityId] = set()
    for frm, to, _ in graph.edges:
        if frm in dom and isinstance(graph.nodes.get(to), Branch) and to in dom[frm]:
            heads.add(to)
    return heads


def natural_loop(graph: ExecutionGraph, head: ActivityId) -> set[ActivityId]:
    """Nodes of the natural loop of `head`: the head plus everything that
    reaches one of its back-edge sources without passing through it."""
    dom = dominators(graph)
    preds: dict[int, list[int]] = {}
    for frm, to, _ in graph.edges:
        preds.setdefault(to, []).append(frm)
    loop = {head}
    stack = [frm for frm, to, _ in graph.edges
             if to == head and frm in dom and head in dom[frm]]
    while stack:
        n = stack.pop()
        if n in loop:
            continue
        loop.add(n)
        stack.extend(preds.get(n, ()))
    return loop


# ── Methods and the whole-program model ──────────────────────────────

@dataclass
class MethodNode:
    id: MethodId
    name: str
    cfg: ExecutionGraph
    is_log_method: bool = field(default=False, compare=False)
    in_cycle: bool = field(default=False, compare=False)


@dataclass
class ProgramModel:
    methods: dict[MethodId, MethodNode]
    call_edges: set[tuple[MethodId, MethodId, ActivityId]]  # (caller, callee, site)
    components: dict[MethodId, str] = field(default_factory=dict)

    def method_by_name(self, name: str) -> MethodNode:
        for m in self.methods.values():
            if m.name == name:
                return m
        raise KeyError(name)

    def statements(self) -> list[tuple[MethodId, ActivityId, LoggingStatement]]:
        """All logging statements in canonical (method, activity) order."""
        out = []
        for mid in sorted(self.methods):
            cfg = self.methods[mid].cfg
            for aid in sorted(cfg.nodes):
                act = cfg.nodes[aid]
                if isinstance(act, Log):
                    out.append((mid, aid, act.stmt))
        return out


_COMPONENT_OK = set(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-"
)


def validate_model(model: ProgramModel) -> None:
    """Check every structural invariant; raise ModelFormatError naming the
    offending record otherwise."""
    mids = sorted(model.methods)
    if mids != list(range(len(mids))):
        raise ModelFormatError(f"method ids must be dense 0..N-1, got {mids}")
    names: set[str] = set()
    for mid, m in model.methods.items():
        if m.id != mid:
            raise ModelFormatError(f"method {mid} carries mismatched id {m.id}")
        if not m.name or m.name in names:
            raise ModelFormatError(f"method {mid}: missing or duplicate name {m.name!r}")
        names.add(m.name)
        _validate_cfg(mid, m.cfg)
    for mid, comp in model.components.items():
        if mid not in model.methods:
            raise ModelFormatError(f"component entry for missing method id {mid}")
        if not comp or any(c not in _COMPONENT_OK for c in comp):
            raise ModelFormatError(f"method {mid}: invalid component name {comp!r}")
    for caller, callee, site in model.call_edges:
        if caller not in model.methods:
            raise ModelFormatError(f"call edge from missing method id {caller}")
        if callee not in model.methods:
            raise ModelFormatError(f"call edge to missing method id {callee}")
        act = model.methods[caller].cfg.nodes.get(site)
        if not isinstance(act, Call):
            raise ModelFormatError(
                f"call edge {caller}->{callee}: site {site} is not a CALL activity"
            )
        if callee not in act.callees:
            raise ModelFormatError(
                f"call edge {caller}->{callee}: site {site} does not list callee {callee}"
            )
    # every internal CALL activity must be covered by call edges
    for mid, m in model.methods.items():
        for aid, act in m.cfg.nodes.items():
            if isinstance(act, Call):
                if act.external is not None and act.callees:
                    raise ModelFormatError(
                        f"method {mid} activity {aid}: CALL cannot be both external and internal"
                    )
                for callee in act.callees:
                    if (mid, callee, aid) not in model.call_edges:
                        raise ModelFormatError(
                            f"method {mid} activity {aid}: callee {callee} has no call edge"
                        )
    _validate_statement_ids(model)


def _validate_cfg(mid: MethodId, cfg: ExecutionGraph) -> None:
    where = f"method {mid}"
    entry = cfg.entry_id()
    exit_ = cfg.exit_id()
    for frm, to, guard in cfg.edges:
        if frm not in cfg.nodes or to not in cfg.nodes:
            raise ModelFormatError(f"{where}: edge {frm}->{to} references missing activity")
        if guard is not None and not isinstance(cfg.nodes[frm], Branch):
            raise ModelFormatError(
                f"{where}: guarded edge {frm}->{to} leaves a non-branch activity"
            )
    for aid, act in cfg.nodes.items():
        if isinstance(act, Branch):
            out = [(to, g) for (frm, to, g) in cfg.edges if frm == aid]
            if len(out) != 2 or any(g is None for _, g in out):
                raise ModelFormatError(
                    f"{where}: branch {aid} must have exactly 2 guarded out-edges"
                )
            (g1, g2) = (out[0][1], out[1][1])
            if g1 != g2.negation():
                raise ModelFormatError(
                    f"{where}: branch {aid} out-guards are not complementary"
                )
            if act.cond not in (g1, g2):
                raise ModelFormatError(
                    f"{where}: branch {aid} condition does not match its out-guards"
                )
        elif isinstance(act, Exit):
            if any(frm == aid for frm, _, _ in cfg.edges):
                raise ModelFormatError(f"{where}: EXIT activity {aid} has out-edges")
    reach = cfg.reachable_from_entry()
    if exit_ not in reach:
        raise ModelFormatError(f"{where}: EXIT not reachable from ENTRY")
    derived = derive_loop_heads(cfg)
    if not cfg.loop_heads <= derived:
        extra = sorted(cfg.loop_heads - derived)
        raise ModelFormatError(f"{where}: activities {extra} are not loop heads")
    if entry == exit_:  # pragma: no cover - impossible by construction
        raise ModelFormatError(f"{where}: ENTRY and EXIT coincide")


def _validate_statement_ids(model: ProgramModel) -> None:
    expected = 0
    for mid, aid, stmt in model.statements():
        if stmt.id != expected:
            raise ModelFormatError(
                f"method {mid} activity {aid}: statement id {stmt.id}, expected {expected} "
                "(ids follow (method, activity) order)"
            )
        expected += 1


# ── Serialization ────────────────────────────────────────────────────

def _escape_text(text: str) -> str:
    return (text.replace("\\", "\\\\").replace("|", "\\|")
            .replace("\n", "\\n").replace("\r", "\\r"))


def _unescape_text(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\":
            if i + 1 >= len(text):
                raise ModelFormatError(f"dangling escape in {text!r}")
            nxt = text[i + 1]
            mapped = {"\\": "\\", "|": "|", "n": "\n", "r": "\r"}.get(nxt)
            if mapped is None:
                raise ModelFormatError(f"invalid escape '\\{nxt}' in {text!r}")
            out.append(mapped)
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _split_parts(payload: str) -> list[str]:
    """Split on unescaped '|' separators."""
    fields: list[str] = []
    cur: list[str] = []
    i = 0
    while i < len(payload):
        c = payload[i]
        if c == "\\" and i + 1 < len(payload):
            cur.append(payload[i:i + 2])
            i += 2
            continue
        if c == "|":
            fields.append("".join(cur))
            cur = []
            i += 1
            continue
        cur.append(c)
        i += 1
    fields.append("".join(cur))
    return fields


def _format_activity(act: Activity) -> str:
    if isinstance(act, Entry):
        return "ENTRY"
    if isinstance(act, Exit):
        return "EXIT"
    if isinstance(act, Log):
        parts = "|".join(
            f"L:{_escape_text(p.text)}" if isinstance(p, Literal) else f"V:{p.name}"
            for p in act.stmt.parts
        )
        return f"LOG {act.stmt.level}|{parts}"
    if isinstance(act, Call):
        return f"CALL {act.external}" if act.external is not None else "CALL"
    if isinstance(act, AssignAct):
        return f"ASSIGN {act.var}|{_escape_text(act.literal)}"
    if isinstance(act, Branch):
        return f"BRANCH {format_guard(act.cond)}"
    raise TypeError(f"unknown activity {act!r}")  # pragma: no cover


def dumps_model(model: ProgramModel) -> str:
    """Serialize to the model-file text; byte-identical for equal models."""
    lines: list[str] = []
    for mid in sorted(model.methods):
        m = model.methods[mid]
        comp = model.components.get(mid)
        lines.append(f"M {mid} {m.name} {comp}" if comp else f"M {mid} {m.name}")
    for mid in sorted(model.methods):
        cfg = model.methods[mid].cfg
        for aid in sorted(cfg.nodes):
            lines.append(f"A {mid} {aid} {_format_activity(cfg.nodes[aid])}")
    for mid in sorted(model.methods):
        cfg = model.methods[mid].cfg
        for frm, to, guard in sorted(
            cfg.edges, key=lambda e: (e[0], e[1], format_guard(e[2]) if e[2] else "")
        ):
            if guard is None:
                lines.append(f"E {mid} {frm} {to}")
            else:
                lines.append(f"E {mid} {frm} {to} {format_guard(guard)}")
    for caller, callee, site in sorted(
        model.call_edges, key=lambda e: (e[0], e[2], e[1])
    ):
        lines.append(f"C {caller} {site} {callee}")
    return "\n".join(lines) + "\n"


def save_model(model: ProgramModel, path) -> None:
    validate_model(model)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model))


def _parse_int(token: str, what: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ModelFormatError(f"line {lineno}: {what} must be an integer, got {token!r}")


def loads_model(text: str) -> ProgramModel:
    """Parse model-file text, re-derive statement ids and loop heads, and
    validate all invariants."""
    methods_meta: dict[int, tuple[str, str | None]] = {}
    activities: dict[int, dict[int, tuple[str, str | None]]] = {}
    edges: dict[int, set[tuple[int, int, Guard | None]]] = {}
    call_records: list[tuple[int, int, int]] = []
    order = {"M": 0, "A": 1, "E": 2, "C": 3}
    last = 0

    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        tag = line.split(None, 1)[0]
        if tag not in order:
            raise ModelFormatError(f"line {lineno}: unknown record type {tag!r}")
        if order[tag] < last:
            raise ModelFormatError(
                f"line {lineno}: {tag} record out of order (expected all M, then A, then E, then C)"
            )
        last = order[tag]

        if tag == "M":
            toks = line.split()
            if len(toks) not in (3, 4):
                raise ModelFormatError(f"line {lineno}: malformed M record")
            mid = _parse_int(toks[1], "method id", lineno)
            if mid in methods_meta:
                raise ModelFormatError(f"line {lineno}: duplicate method id {mid}")
            methods_meta[mid] = (toks[2], toks[3] if len(toks) == 4 else None)
            activities[mid] = {}
            edges[mid] = set()
        elif tag == "A":
            toks = line.split(None, 4)
            if len(toks) < 4:
                raise ModelFormatError(f"line {lineno}: malformed A record")
            mid = _parse_int(toks[1], "method id", lineno)
            aid = _parse_int(toks[2], "activity id", lineno)
            kind = toks[3]
            payload = toks[4] if len(toks) == 5 else None
            if mid not in methods_meta:
                raise ModelFormatError(f"line {lineno}: activity for missing method id {mid}")
            if aid in activities[mid]:
                raise ModelFormatError(f"line {lineno}: duplicate activity id {aid} in method {mid}")
            if kind not in ("ENTRY", "EXIT", "LOG", "CALL", "ASSIGN", "BRANCH"):
                raise ModelFormatError(f"line {lineno}: unknown activity kind {kind!r}")
            activities[mid][aid] = (kind, payload)
        elif tag == "E":
            toks = line.split()
            if len(toks) not in (4, 5):
                raise ModelFormatError(f"line {lineno}: malformed E record")
            mid = _parse_int(toks[1], "method id", lineno)
            frm = _parse_int(toks[2], "edge source", lineno)
            to = _parse_int(toks[3], "edge target", lineno)
            if mid not in methods_meta:
                raise ModelFormatError(f"line {lineno}: edge for missing method id {mid}")
            try:
                guard = parse_guard(toks[4]) if len(toks) == 5 else None
            except ModelFormatError as exc:
                raise ModelFormatError(f"line {lineno}: {exc}")
            edges[mid].add((frm, to, guard))
        else:  # C
            toks = line.split()
            if len(toks) != 4:
                raise ModelFormatError(f"line {lineno}: malformed C record")
            call_records.append(
                (_parse_int(toks[1], "caller id", lineno),
                 _parse_int(toks[2], "site activity id", lineno),
                 _parse_int(toks[3], "callee id", lineno))
            )

    callees_by_site: dict[tuple[int, int], list[int]] = {}
    for caller, site, callee in call_records:
        if caller not in methods_meta:
            raise ModelFormatError(f"call record from missing method id {caller}")
        if callee not in methods_meta:
            raise ModelFormatError(f"call record to missing method id {callee}")
        callees_by_site.setdefault((caller, site), []).append(callee)

    stmt_counter = 0
    methods: dict[int, MethodNode] = {}
    for mid in sorted(methods_meta):
        name, _comp = methods_meta[mid]
        nodes: dict[int, Activity] = {}
        for aid in sorted(activities[mid]):
            kind, payload = activities[mid][aid]
            if kind == "ENTRY":
                nodes[aid] = Entry()
            elif kind == "EXIT":
                nodes[aid] = Exit()
            elif kind == "LOG":
                if payload is None:
                    raise ModelFormatError(f"method {mid} activity {aid}: LOG needs a payload")
                fields = _split_parts(payload)
                level = fields[0]
                if level not in LEVELS or len(fields) < 2:
                    raise ModelFormatError(
                        f"method {mid} activity {aid}: malformed LOG payload {payload!r}"
                    )
                parts: list[Part] = []
                for f in fields[1:]:
                    if f.startswith("L:"):
                        parts.append(Literal(_unescape_text(f[2:])))
                    elif f.startswith("V:") and len(f) > 2:
                        parts.append(Var(f[2:]))
                    else:
                        raise ModelFormatError(
                            f"method {mid} activity {aid}: malformed LOG part {f!r}"
                        )
                nodes[aid] = Log(LoggingStatement(stmt_counter, level, tuple(parts)))
                stmt_counter += 1
            elif kind == "CALL":
                sites = callees_by_site.get((mid, aid), [])
                if payload is not None and sites:
                    raise ModelFormatError(
                        f"method {mid} activity {aid}: CALL has both external name and C records"
                    )
                nodes[aid] = Call(callees=tuple(sorted(set(sites))), external=payload)
            elif kind == "ASSIGN":
                if payload is None:
                    raise ModelFormatError(f"method {mid} activity {aid}: ASSIGN needs a payload")
                fields = _split_parts(payload)
                if len(fields) != 2 or not fields[0]:
                    raise ModelFormatError(
                        f"method {mid} activity {aid}: malformed ASSIGN payload {payload!r}"
                    )
                nodes[aid] = AssignAct(fields[0], _unescape_text(fields[1]))
            else:  # BRANCH
                if payload is None:
                    raise ModelFormatError(f"method {mid} activity {aid}: BRANCH needs a payload")
                nodes[aid] = Branch(parse_guard(payload))
        cfg = ExecutionGraph(nodes=nodes, edges=edges[mid], loop_heads=set())
        cfg.loop_heads = derive_loop_heads(cfg)
        methods[mid] = MethodNode(id=mid, name=name, cfg=cfg)

    model = ProgramModel(
        methods=methods,
        call_edges={(caller, callee, site) for (caller, site), cs in callees_by_site.items()
                    for callee in cs},
        components={mid: comp for mid, (name, comp) in methods_meta.items() if comp},
    )
    validate_model(model)
    return model


def load_model(path) -> ProgramModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


def with_statement(stmt: LoggingStatement, **kw) -> LoggingStatement:
    return replace(stmt, **kw)
