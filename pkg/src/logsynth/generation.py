"""Phase 3c: emit labeled log sequences by walking the stored paths.

A walk starts at an entry method, picks one of its paths at random, and
recurses into callees at every call step.  Anomaly walks pick only
seed/infected paths until a seed path has been selected, then anything;
normal walks pick only paths from which a seed-free completion is known
to exist, so no backtracking livelock is possible.  Loop-marked regions
replay 1..max_loop_reps times with fresh choices per repetition, and
calls into recursion cycles are bounded by max_recursion_depth
re-entries.

Every successful walk records its choice trace (path picks and loop
repetition draws); `replay` re-derives the event list from a trace,
which is how label soundness and walk legality are checked.

Sequence i is generated from its own RNG derived from (seed, i), so the
dataset bytes do not depend on how many workers ran.
"""

from __future__ import annotations

import enum
import hashlib
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import LogsynthError
from .labeling import AnnotationSet, InfectionMap, Status, dumps_annotations
from .model import EventId, LogEvent, MethodId, ProgramModel, dumps_model
from .pathfinding import CallStep, LogPath, LogStep, Mark, PathStore
from .probing import CallGraph
from .pruning import PrunedCallGraph

_ROOT_TRIES = 8  # retries per entry path before giving up on it


class ConfigError(LogsynthError):
    pass


class ExhaustionError(LogsynthError):
    """No admissible path choice left anywhere in the walk tree."""


class UnreachableSeedError(ExhaustionError):
    """Anomaly walk requested from an entry that cannot reach any seed."""


class Label(enum.Enum):
    NORMAL = "NORMAL"
    ANOMALY = "ANOMALY"


@dataclass(frozen=True)
class GenParams:
    size: int
    anomaly_rate: float
    component: str | None = None
    entries: tuple[str, ...] | None = None
    seed: int = 0
    max_loop_reps: int = 3
    max_recursion_depth: int = 1
    exact_rate: bool = True

    def __post_init__(self):
        if self.size < 1:
            raise ConfigError("size must be >= 1")
        if not 0.0 <= self.anomaly_rate <= 1.0:
            raise ConfigError("anomaly rate must be within [0, 1]")
        if self.max_loop_reps < 1:
            raise ConfigError("max loop repetitions must be >= 1")
        if self.max_recursion_depth < 0:
            raise ConfigError("max recursion depth must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")


@dataclass(frozen=True)
class LogSequence:
    seq_id: int
    label: Label
    events: tuple[EventId, ...]
    entry: MethodId


@dataclass
class LogDataset:
    sequences: list[LogSequence]
    events: dict[EventId, LogEvent]
    params: GenParams
    traces: dict[int, tuple] | None = field(default=None, compare=False)


# ── The walker ───────────────────────────────────────────────────────

class Walker:
    """Shared immutable walk state: admissibility precomputations over the
    stored paths and infection map."""

    def __init__(self, model: ProgramModel, store: PathStore,
                 infection: InfectionMap, call_graph: CallGraph,
                 params: GenParams):
        self.model = model
        self.store = store
        self.status = infection.status
        self.params = params
        self.scc_of = call_graph.scc_of
        self.cycle_sccs = {
            call_graph.scc_of[m] for m in call_graph.nodes
            if call_graph.in_cycle(m)
        }
        self.anomalous_eps = {
            p.id for p in store.all_paths()
            if self.status[p.id] is not Status.CLEAN
        }
        self.anomalous_methods = {
            mid for mid, paths in store.by_method.items()
            if any(p.id in self.anomalous_eps for p in paths)
        }
        self.clean_completable = self._clean_completable()
        self.emitting = self._emitting()

    def _clean_completable(self) -> set[int]:
        """Least fixpoint: non-seed paths whose every callee offers a
        clean-completable path, so a normal walk through them always
        finishes without touching a seed."""
        ok_paths: set[int] = set()
        ok_methods: set[int] = set()
        changed = True
        while changed:
            changed = False
            for p in self.store.all_paths():
                if p.id in ok_paths or self.status[p.id] is Status.SEED:
                    continue
                if all(s.callee in ok_methods for s in p.steps
                       if isinstance(s, CallStep)):
                    ok_paths.add(p.id)
                    if p.method not in ok_methods:
                        ok_methods.add(p.method)
                    changed = True
        return ok_paths

    def _emitting(self) -> set[int]:
        """Least fixpoint over clean-completable paths: those that can
        produce at least one event on some clean walk."""
        emitting: set[int] = set()
        emitting_methods: set[int] = set()
        changed = True
        while changed:
            changed = False
            for p in self.store.all_paths():
                if p.id in emitting or p.id not in self.clean_completable:
                    continue
                if any(isinstance(s, LogStep) for s in p.steps) or any(
                    isinstance(s, CallStep) and s.callee in emitting_methods
                    for s in p.steps
                ):
                    emitting.add(p.id)
                    if p.method not in emitting_methods:
                        emitting_methods.add(p.method)
                    changed = True
        return emitting

    # entry admissibility per mode
    def normal_entry_ok(self, mid: MethodId) -> bool:
        return any(p.id in self.emitting for p in self.store.by_method.get(mid, []))

    def anomaly_entry_ok(self, mid: MethodId) -> bool:
        return any(p.id in self.anomalous_eps and not p.skips_loop
                   for p in self.store.by_method.get(mid, []))

    def _candidates(self, mid: MethodId, mode: Label, hit: bool) -> list[LogPath]:
        paths = self.store.by_method.get(mid, [])
        if mode is Label.NORMAL:
            return [p for p in paths if p.id in self.clean_completable]
        if not hit:
            return [p for p in paths
                    if p.id in self.anomalous_eps and not p.skips_loop]
        return [p for p in paths if not p.skips_loop]

    def walk(self, entry: MethodId, mode: Label, rng: random.Random
             ) -> tuple[tuple[EventId, ...], tuple]:
        """One complete walk; returns (events, choice trace)."""
        if mode is Label.ANOMALY and not self.anomaly_entry_ok(entry):
            raise UnreachableSeedError(
                f"no seed is reachable from entry method "
                f"'{self.model.methods[entry].name}'"
            )
        state = _WalkState()
        entry_scc = self.scc_of[entry]
        roots = self._candidates(entry, mode, False)
        order = rng.sample(roots, len(roots)) if roots else []
        for root in order:
            for _ in range(_ROOT_TRIES):
                state.reset()
                if entry_scc in self.cycle_sccs:
                    state.scc_active[entry_scc] = 1  # the walk is inside already
                if self._try_path(entry, root, mode, state, rng) \
                        and state.events \
                        and (mode is Label.NORMAL or state.hit):
                    return tuple(state.events), tuple(state.trace)
        raise ExhaustionError(
            f"walk from entry method '{self.model.methods[entry].name}' "
            f"({mode.value}) exhausted every choice"
        )

    def _visit(self, mid: MethodId, mode: Label, state: "_WalkState",
               rng: random.Random) -> bool:
        cands = self._candidates(mid, mode, state.hit)
        for path in rng.sample(cands, len(cands)):
            if self._try_path(mid, path, mode, state, rng):
                return True
        return False

    def _try_path(self, mid: MethodId, path: LogPath, mode: Label,
                  state: "_WalkState", rng: random.Random) -> bool:
        mark = state.snapshot()
        if self.status[path.id] is Status.SEED:
            state.hit = True
        state.trace.append(("ep", mid, path.id))
        if self._run_forest(_parse_regions(path.steps), mode, state, rng):
            return True
        state.restore(mark)
        return False

    def _run_forest(self, forest, mode: Label, state: "_WalkState",
                    rng: random.Random) -> bool:
        for node in forest:
            if node[0] == "step":
                step = node[1]
                if isinstance(step, LogStep):
                    state.events.append(step.event)
                elif not self._call(step.callee, mode, state, rng):
                    return False
            else:  # loop region: replay with fresh choices per repetition
                reps = rng.randint(1, self.params.max_loop_reps)
                state.trace.append(("reps", reps))
                for _ in range(reps):
                    if not self._run_forest(node[1], mode, state, rng):
                        return False
        return True

    def _call(self, callee: MethodId, mode: Label, state: "_WalkState",
              rng: random.Random) -> bool:
        scc = self.scc_of[callee]
        cyclic = scc in self.cycle_sccs
        if cyclic:
            if state.scc_active.get(scc, 0) > self.params.max_recursion_depth:
                return False
            state.scc_active[scc] = state.scc_active.get(scc, 0) + 1
        ok = self._visit(callee, mode, state, rng)
        if cyclic:
            state.scc_active[scc] -= 1
        return ok

    # ── replay ───────────────────────────────────────────────────

    def replay(self, entry: MethodId, trace: tuple) -> tuple[EventId, ...]:
        """Re-derive a walk's event list from its recorded choices.  Raises
        LogsynthError when the trace is not a legal chaining."""
        cursor = _TraceCursor(trace)
        events: list[EventId] = []
        self._replay_method(entry, cursor, events)
        if not cursor.done():
            raise LogsynthError("trace has unconsumed choices")
        return tuple(events)

    def _replay_method(self, mid: MethodId, cursor: "_TraceCursor",
                       events: list[EventId]) -> None:
        kind, rec_mid, pid = cursor.take("ep")
        if rec_mid != mid:
            raise LogsynthError(f"trace chose a path of method {rec_mid}, expected {mid}")
        path = self.store.path(pid)
        if path.method != mid:
            raise LogsynthError(f"path {pid} does not belong to method {mid}")
        self._replay_forest(_parse_regions(path.steps), cursor, events)

    def _replay_forest(self, forest, cursor: "_TraceCursor",
                       events: list[EventId]) -> None:
        for node in forest:
            if node[0] == "step":
                step = node[1]
                if isinstance(step, LogStep):
                    events.append(step.event)
                else:
                    self._replay_method(step.callee, cursor, events)
            else:
                _, reps = cursor.take("reps")
                for _ in range(reps):
                    self._replay_forest(node[1], cursor, events)


class _WalkState:
    def __init__(self):
        self.events: list[int] = []
        self.trace: list[tuple] = []
        self.scc_active: dict[int, int] = {}
        self.hit = False

    def reset(self):
        self.events.clear()
        self.trace.clear()
        self.scc_active.clear()
        self.hit = False

    def snapshot(self):
        return (len(self.events), len(self.trace), dict(self.scc_active), self.hit)

    def restore(self, mark):
        ev, tr, scc, hit = mark
        del self.events[ev:]
        del self.trace[tr:]
        self.scc_active = scc
        self.hit = hit


class _TraceCursor:
    def __init__(self, trace):
        self.trace = trace
        self.pos = 0

    def take(self, kind):
        if self.pos >= len(self.trace) or self.trace[self.pos][0] != kind:
            raise LogsynthError(f"trace expected a {kind!r} record at {self.pos}")
        rec = self.trace[self.pos]
        self.pos += 1
        return rec

    def done(self):
        return self.pos == len(self.trace)


def _parse_regions(steps: tuple) -> list:
    """Group marked steps into a forest of ("step", s) leaves and
    ("region", children) loop nodes.  Unbalanced marks (possible when
    nested loop boundaries coincide) degrade to plain steps."""
    root: list = []
    stack: list[list] = [root]
    for s in steps:
        mark = s.loop_mark
        if mark in (Mark.START, Mark.BOTH):
            region: list = []
            stack[-1].append(("region", region))
            stack.append(region)
        stack[-1].append(("step", s))
        if mark in (Mark.END, Mark.BOTH) and len(stack) > 1:
            stack.pop()
    while len(stack) > 1:  # regions never closed: dissolve, no repetition
        region = stack.pop()
        parent = stack[-1]
        for i, node in enumerate(parent):
            if node[0] == "region" and node[1] is region:
                parent[i:i + 1] = region
                break
    return root


# ── Sequence and dataset generation ──────────────────────────────────

def sequence_rng(seed: int, seq_id: int) -> random.Random:
    return random.Random(f"{seed}/{seq_id}")


def generate_sequence(
    entry: MethodId,
    mode: Label,
    infection: InfectionMap,
    store: PathStore,
    model: ProgramModel,
    call_graph: CallGraph,
    rng: random.Random,
    params: GenParams,
) -> tuple[LogSequence, tuple]:
    """One labeled sequence plus its choice trace."""
    walker = Walker(model, store, infection, call_graph, params)
    events, trace = walker.walk(entry, mode, rng)
    return LogSequence(seq_id=0, label=mode, events=events, entry=entry), trace


def _resolve_entries(params: GenParams, model: ProgramModel,
                     cg_prime: PrunedCallGraph) -> list[MethodId]:
    if params.entries is not None:
        if not params.entries:
            raise ConfigError("entry list is empty")
        out = []
        for name in params.entries:
            try:
                m = model.method_by_name(name)
            except KeyError:
                raise ConfigError(f"unknown entry method '{name}'")
            if m.id not in cg_prime.kept:
                raise ConfigError(
                    f"entry method '{name}' was pruned (it neither logs nor "
                    "reaches a logging method)"
                )
            out.append(m.id)
    else:
        out = cg_prime.entry_candidates()
        if not out:
            raise ConfigError(
                "no default entry methods (every kept method has callers); "
                "pass explicit entries"
            )
    if params.component is not None:
        out = [m for m in out if model.components.get(m) == params.component]
        if not out:
            raise ConfigError(
                f"no entry method belongs to component '{params.component}'"
            )
    return sorted(set(out))


def _plan_labels(params: GenParams) -> list[Label | None]:
    """Per-sequence labels; None means the sequence's own RNG decides."""
    if not params.exact_rate:
        return [None] * params.size
    anomalies = int(round(params.size * params.anomaly_rate))
    labels: list[Label | None] = (
        [Label.ANOMALY] * anomalies + [Label.NORMAL] * (params.size - anomalies)
    )
    random.Random(f"{params.seed}/labels").shuffle(labels)
    return labels


def _make_sequence(walker: Walker, seq_id: int, planned: Label | None,
                   params: GenParams, normal_entries: list[int],
                   anomaly_entries: list[int]) -> tuple[LogSequence, tuple]:
    rng = sequence_rng(params.seed, seq_id)
    label = planned
    if label is None:
        label = Label.ANOMALY if rng.random() < params.anomaly_rate else Label.NORMAL
    pool = anomaly_entries if label is Label.ANOMALY else normal_entries
    if not pool:
        raise ConfigError(
            f"no admissible entry method for a {label.value} sequence"
        )
    entry = rng.choice(pool)
    events, trace = walker.walk(entry, label, rng)
    return LogSequence(seq_id=seq_id, label=label, events=events, entry=entry), trace


_POOL_STATE: dict = {}


def _pool_init(model, store, infection, call_graph, params,
               normal_entries, anomaly_entries):
    _POOL_STATE["walker"] = Walker(model, store, infection, call_graph, params)
    _POOL_STATE["args"] = (params, normal_entries, anomaly_entries)


def _pool_run(chunk):
    walker = _POOL_STATE["walker"]
    params, normal_entries, anomaly_entries = _POOL_STATE["args"]
    out = []
    for seq_id, planned in chunk:
        label = None if planned is None else Label(planned)
        seq, trace = _make_sequence(
            walker, seq_id, label, params, normal_entries, anomaly_entries
        )
        out.append((seq, trace))
    return out


def generate_dataset(
    params: GenParams,
    model: ProgramModel,
    infection: InfectionMap,
    store: PathStore,
    cg_prime: PrunedCallGraph,
    call_graph: CallGraph,
    workers: int = 1,
    keep_traces: bool = False,
) -> LogDataset:
    """The full dataset: exactly round(size * rate) anomalies in exact-rate
    mode, one independent Bernoulli draw per sequence otherwise.  Output
    is a pure function of (model, annotations, params); the worker count
    never changes it."""
    entries = _resolve_entries(params, model, cg_prime)
    walker = Walker(model, store, infection, call_graph, params)
    normal_entries = [m for m in entries if walker.normal_entry_ok(m)]
    anomaly_entries = [m for m in entries if walker.anomaly_entry_ok(m)]

    labels = _plan_labels(params)
    needs_anomaly = params.anomaly_rate > 0
    if params.exact_rate:
        needs_normal = any(lab is Label.NORMAL for lab in labels)
    else:
        needs_normal = params.anomaly_rate < 1.0
    if needs_anomaly and not anomaly_entries:
        raise ConfigError("anomaly rate > 0 but no entry method can reach a seed")
    if params.anomaly_rate == 1.0:
        blocked = [m for m in entries if m not in anomaly_entries]
        if blocked:
            names = ", ".join(model.methods[m].name for m in blocked)
            raise ConfigError(
                f"anomaly rate 1.0 but entries cannot reach a seed: {names}"
            )
    if needs_normal and not normal_entries:
        raise ConfigError("no entry method admits a normal (seed-free) walk")

    jobs = list(enumerate(labels))
    results: list[tuple[LogSequence, tuple]] = []
    if workers <= 1 or params.size < 2:
        for seq_id, planned in jobs:
            results.append(_make_sequence(
                walker, seq_id, planned, params, normal_entries, anomaly_entries
            ))
    else:
        chunk_size = max(1, params.size // (workers * 4))
        chunks = [
            [(sid, lab.value if lab else None) for sid, lab in jobs[i:i + chunk_size]]
            for i in range(0, len(jobs), chunk_size)
        ]
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_pool_init,
            initargs=(model, store, infection, call_graph, params,
                      normal_entries, anomaly_entries),
        ) as pool:
            for part in pool.map(_pool_run, chunks):
                results.extend(part)

    results.sort(key=lambda r: r[0].seq_id)
    sequences = [seq for seq, _ in results]
    traces = {seq.seq_id: tr for seq, tr in results} if keep_traces else None
    return LogDataset(
        sequences=sequences, events=dict(store.events), params=params,
        traces=traces,
    )


# ── On-disk dataset ──────────────────────────────────────────────────

def _csv_quote(text: str) -> str:
    return '"' + text.replace('"', '""') + '"'


def write_dataset(ds: LogDataset, outdir, model: ProgramModel,
                  ann: AnnotationSet) -> None:
    """sequences.csv, templates.csv, and a manifest; byte-stable for equal
    inputs."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["seq_id,label,entry,events"]
    for seq in ds.sequences:
        rows.append(",".join([
            str(seq.seq_id),
            "1" if seq.label is Label.ANOMALY else "0",
            model.methods[seq.entry].name,
            " ".join(str(e) for e in seq.events),
        ]))
    (out / "sequences.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    rows = ["event_id,level,template"]
    for eid in sorted(ds.events):
        ev = ds.events[eid]
        rows.append(f"{eid},{ev.level},{_csv_quote(ev.template)}")
    (out / "templates.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    from . import __version__

    p = ds.params
    manifest = [
        f"size={p.size}",
        f"anomaly_rate={p.anomaly_rate!r}",
        f"component={p.component or ''}",
        f"entries={','.join(p.entries) if p.entries else ''}",
        f"seed={p.seed}",
        f"max_loop_reps={p.max_loop_reps}",
        f"max_recursion_depth={p.max_recursion_depth}",
        f"exact_rate={int(p.exact_rate)}",
        f"model_sha256={hashlib.sha256(dumps_model(model).encode()).hexdigest()}",
        f"annotations_sha256={hashlib.sha256(dumps_annotations(ann).encode()).hexdigest()}",
        f"version={__version__}",
    ]
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n", encoding="utf-8")


def read_dataset(outdir, model: ProgramModel) -> LogDataset:
    """Inverse of write_dataset (manifest hashes are not re-checked)."""
    out = Path(outdir)
    manifest = {}
    for line in (out / "manifest.txt").read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            manifest[key] = value
    params = GenParams(
        size=int(manifest["size"]),
        anomaly_rate=float(manifest["anomaly_rate"]),
        component=manifest["component"] or None,
        entries=tuple(manifest["entries"].split(",")) if manifest["entries"] else None,
        seed=int(manifest["seed"]),
        max_loop_reps=int(manifest["max_loop_reps"]),
        max_recursion_depth=int(manifest["max_recursion_depth"]),
        exact_rate=bool(int(manifest["exact_rate"])),
    )

    sequences = []
    lines = (out / "sequences.csv").read_text(encoding="utf-8").splitlines()
    for row in lines[1:]:
        sid, label, entry_name, events_field = row.split(",", 3)
        events = tuple(int(e) for e in events_field.split()) if events_field else ()
        sequences.append(LogSequence(
            seq_id=int(sid),
            label=Label.ANOMALY if label == "1" else Label.NORMAL,
            events=events,
            entry=model.method_by_name(entry_name).id,
        ))

    events: dict[int, LogEvent] = {}
    lines = (out / "templates.csv").read_text(encoding="utf-8").splitlines()
    for row in lines[1:]:
        eid_s, level, quoted = row.split(",", 2)
        template = quoted[1:-1].replace('""', '"')
        eid = int(eid_s)
        events[eid] = LogEvent(eid, level, template)
    return LogDataset(sequences=sequences, events=events, params=params)
