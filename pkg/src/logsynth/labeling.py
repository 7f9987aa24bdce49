"""Phase 3a-3b: the human annotation loop and infection propagation.

The worksheet is plain text so annotators need no tooling:

    EVT <event-id> <level> <method> <template>

An annotator appends ` ALERT` to the events that indicate a potential
anomaly and adds `SEED <path-id>` lines for the paths that must produce
one.  Comment lines starting with `#` carry context (source lines,
candidate paths per event) and are ignored on import.

Propagation computes the least fixpoint of "may reach a seed through
invocations": a path is INFECTED when it calls into a method owning a
SEED or INFECTED path; everything else is CLEAN and can never reach a
seed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import LogsynthError
from .model import EventId, Log, ProgramModel
from .pathfinding import CallStep, LogStep, PathStore


class AnnotationError(LogsynthError):
    pass


@dataclass(frozen=True)
class AnnotationSet:
    alerting: frozenset[EventId]
    seed_anomaly: frozenset[int]


class Status(enum.Enum):
    SEED = "SEED"
    INFECTED = "INFECTED"
    CLEAN = "CLEAN"


@dataclass
class InfectionMap:
    status: dict[int, Status]

    def of(self, path_id: int) -> Status:
        return self.status[path_id]

    def methods_with_anomaly(self, store: PathStore) -> set[int]:
        """Methods owning at least one SEED or INFECTED path."""
        out = set()
        for mid, paths in store.by_method.items():
            if any(self.status[p.id] is not Status.CLEAN for p in paths):
                out.add(mid)
        return out


def export_worksheet(store: PathStore, model: ProgramModel, path) -> None:
    """One EVT row per restored event, plus commented context: the source
    line when known, and each path containing the event."""
    paths_by_event: dict[int, list] = {}
    for p in store.all_paths():
        for s in p.steps:
            if isinstance(s, LogStep):
                paths_by_event.setdefault(s.event, []).append(p)

    lines = ["# mark alerting events by appending ' ALERT' to their EVT line,",
             "# then add 'SEED <path-id>' lines for anomaly paths"]
    stmt_home = {}
    for mid, _aid, stmt in model.statements():
        stmt_home[stmt.id] = mid
    for eid in sorted(store.events):
        ev = store.events[eid]
        mid = stmt_home[ev.origin]
        method = model.methods[mid]
        stmt = next(
            act.stmt for act in method.cfg.nodes.values()
            if isinstance(act, Log) and act.stmt.id == ev.origin
        )
        if stmt.line is not None:
            lines.append(f"# {method.name} line {stmt.line}")
        for p in paths_by_event.get(eid, []):
            lines.append(f"# candidate path {p.id} in {model.methods[p.method].name}")
        lines.append(f"EVT {eid} {ev.level} {method.name} {ev.template}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def import_annotations(path, store: PathStore) -> AnnotationSet:
    """Parse and validate an annotated worksheet."""
    alerting: set[int] = set()
    seeds: set[int] = set()
    known_paths = {p.id for p in store.all_paths()}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            toks = line.split(None, 4)
            if toks[0] == "EVT":
                if len(toks) < 4:
                    raise AnnotationError(f"line {lineno}: malformed EVT record")
                try:
                    eid = int(toks[1])
                except ValueError:
                    raise AnnotationError(f"line {lineno}: bad event id {toks[1]!r}")
                if eid not in store.events:
                    raise AnnotationError(f"line {lineno}: unknown event id {eid}")
                template = toks[4] if len(toks) == 5 else ""
                if template.endswith(" ALERT") or template == "ALERT":
                    alerting.add(eid)
            elif toks[0] == "SEED":
                if len(toks) != 2:
                    raise AnnotationError(f"line {lineno}: malformed SEED record")
                try:
                    pid = int(toks[1])
                except ValueError:
                    raise AnnotationError(f"line {lineno}: bad path id {toks[1]!r}")
                if pid not in known_paths:
                    raise AnnotationError(f"line {lineno}: unknown path id {pid}")
                seeds.add(pid)
            else:
                raise AnnotationError(f"line {lineno}: unknown record {toks[0]!r}")
    ann = AnnotationSet(alerting=frozenset(alerting), seed_anomaly=frozenset(seeds))
    validate_annotations(ann, store)
    return ann


def validate_annotations(ann: AnnotationSet, store: PathStore) -> None:
    for eid in ann.alerting:
        if eid not in store.events:
            raise AnnotationError(f"alerting event {eid} does not exist")
    for pid in ann.seed_anomaly:
        path = store.path(pid)
        if not any(isinstance(s, LogStep) and s.event in ann.alerting
                   for s in path.steps):
            raise AnnotationError(
                f"seed path {pid} contains no alerting event"
            )


def propagate(store: PathStore, ann: AnnotationSet) -> InfectionMap:
    """Least fixpoint of seed reachability through call steps."""
    status = {p.id: Status.CLEAN for p in store.all_paths()}
    for pid in ann.seed_anomaly:
        status[pid] = Status.SEED

    anomalous_methods = {
        mid for mid, paths in store.by_method.items()
        if any(status[p.id] is Status.SEED for p in paths)
    }
    changed = True
    while changed:
        changed = False
        for p in store.all_paths():
            if status[p.id] is not Status.CLEAN:
                continue
            if any(isinstance(s, CallStep) and s.callee in anomalous_methods
                   for s in p.steps):
                status[p.id] = Status.INFECTED
                if p.method not in anomalous_methods:
                    anomalous_methods.add(p.method)
                changed = True
    return InfectionMap(status=status)


def dumps_annotations(ann: AnnotationSet) -> str:
    """Canonical serialization used for dataset manifests."""
    lines = [f"ALERTING {eid}" for eid in sorted(ann.alerting)]
    lines += [f"SEED {pid}" for pid in sorted(ann.seed_anomaly)]
    return "\n".join(lines) + "\n"
