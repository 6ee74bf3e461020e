"""
Compile-time planning, validation and WCET bounding of static schedules.

A schedule is an ordered list of DMA transfers and compute tasks. The
list order doubles as the program order of each resource: the manager
issues DMA transfers in list order and dispatches the computes of a core
in list order. Together with the explicit dependencies this makes every
start time a monotone max-plus function of the entry durations, so
replaying the schedule with worst-case durations yields a safe bound.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .config import ArchConfig
from .errors import InfeasiblePlanError, InvalidScheduleError
from .kernel import KernelTask, kernel_cycles
from .machine import DramRegion, SpmBuffer, parse_region, touches_dram

SELF_TIMED = "self-timed"
TIME_TRIGGERED = "time-triggered"
MODES = (SELF_TIMED, TIME_TRIGGERED)

DMA = "dma"


@dataclass(frozen=True)
class DmaTransfer:
    id: int
    src: Union[DramRegion, SpmBuffer]
    dst: Union[DramRegion, SpmBuffer]
    nbytes: int
    deps: tuple[int, ...] = ()

    @property
    def resource(self):
        return DMA

    def reads(self):
        return (self.src,) if isinstance(self.src, SpmBuffer) else ()

    def writes(self):
        return (self.dst,) if isinstance(self.dst, SpmBuffer) else ()


@dataclass(frozen=True)
class ComputeTask:
    id: int
    core: int
    task: KernelTask
    a: SpmBuffer
    b: SpmBuffer
    c: SpmBuffer
    deps: tuple[int, ...] = ()

    @property
    def resource(self):
        return self.core

    def reads(self):
        return (self.a, self.b)

    def writes(self):
        return (self.c,)


Entry = Union[DmaTransfer, ComputeTask]


@dataclass
class Schedule:
    entries: list[Entry] = field(default_factory=list)
    mode: str = SELF_TIMED
    trigger_times: Optional[dict[int, int]] = None
    n: Optional[int] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown schedule mode {self.mode!r}")

    def __len__(self):
        return len(self.entries)

    def by_id(self) -> dict[int, Entry]:
        return {e.id: e for e in self.entries}

    def computes(self) -> list[ComputeTask]:
        return [e for e in self.entries if isinstance(e, ComputeTask)]

    def transfers(self) -> list[DmaTransfer]:
        return [e for e in self.entries if isinstance(e, DmaTransfer)]


@dataclass(frozen=True)
class MatmulPlan:
    n: int
    worker_cores: int
    block_width: int
    passes: int
    rows_per_batch: int
    double_buffer: bool

    @property
    def batches(self) -> int:
        return -(-self.n // self.rows_per_batch)

    def column_range(self, pass_idx: int, core: int) -> Optional[tuple[int, int]]:
        c0 = (pass_idx * self.worker_cores + core) * self.block_width
        if c0 >= self.n:
            return None
        return c0, min(c0 + self.block_width, self.n)


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------

def _footprint(cfg: ArchConfig, n: int, bw: int, rows: int, nbuf: int) -> int:
    eb, ab = cfg.element_bits, cfg.acc_bits
    b_block = -(-n * bw * eb // 8)
    a_batch = -(-rows * n * eb // 8)
    c_frag = -(-rows * bw * ab // 8)
    return b_block + nbuf * (a_batch + c_frag) + cfg.mailbox_bytes


def choose_block_width(cfg: ArchConfig, n: int, rows_per_batch: int, double_buffer: bool) -> int:
    """Largest power-of-two block width whose staging footprint fits.

    Never wider than needed to give every core one block of the output.
    """
    nbuf = 2 if double_buffer else 1
    rows = min(rows_per_batch, n)
    cap = 1 << max(0, math.ceil(math.log2(-(-n // cfg.worker_cores))))
    if _footprint(cfg, n, 1, rows, nbuf) > cfg.data_spm_bytes:
        need = _footprint(cfg, n, 1, rows, nbuf)
        raise InfeasiblePlanError(
            f"n={n} does not fit config {cfg.name}: block width 1 needs {need} bytes "
            f"of data scratchpad, only {cfg.data_spm_bytes} available",
            required_bytes=need,
        )
    bw = 1
    while bw * 2 <= cap and _footprint(cfg, n, bw * 2, rows, nbuf) <= cfg.data_spm_bytes:
        bw *= 2
    return bw


class _HazardTracker:
    """Derives RAW/WAR/WAW dependencies while the planner emits entries."""

    def __init__(self):
        self.last_writer: dict[SpmBuffer, int] = {}
        self.readers: dict[SpmBuffer, dict] = defaultdict(dict)  # buf -> resource -> id

    def deps_for(self, reads, writes) -> set[int]:
        deps = set()
        for buf in reads:
            if buf in self.last_writer:
                deps.add(self.last_writer[buf])
        for buf in writes:
            pending = self.readers.get(buf)
            if pending:
                deps.update(pending.values())
            elif buf in self.last_writer:
                deps.add(self.last_writer[buf])
        return deps

    def record(self, entry: Entry):
        for buf in entry.reads():
            self.readers[buf][entry.resource] = entry.id
        for buf in entry.writes():
            self.last_writer[buf] = entry.id
            self.readers[buf] = {}


class _Emitter:
    def __init__(self):
        self.entries: list[Entry] = []
        self.hazards = _HazardTracker()

    def dma(self, src, dst, nbytes, extra=()):
        reads = (src,) if isinstance(src, SpmBuffer) else ()
        writes = (dst,) if isinstance(dst, SpmBuffer) else ()
        deps = self.hazards.deps_for(reads, writes) | set(extra)
        entry = DmaTransfer(len(self.entries), src, dst, nbytes, tuple(sorted(deps)))
        self._push(entry)
        return entry.id

    def compute(self, core, task, a, b, c):
        deps = self.hazards.deps_for((a, b), (c,))
        entry = ComputeTask(len(self.entries), core, task, a, b, c, tuple(sorted(deps)))
        self._push(entry)
        return entry.id

    def _push(self, entry):
        self.entries.append(entry)
        self.hazards.record(entry)


def plan_matmul(
    cfg: ArchConfig,
    n: int,
    *,
    mode: str = SELF_TIMED,
    block_width: Optional[int] = None,
    rows_per_batch: int = 4,
    double_buffer: Optional[bool] = None,
) -> tuple[MatmulPlan, Schedule]:
    """Plan the distributed ``A @ B`` for ``n x n`` matrices on ``cfg``.

    B is cut into column blocks of ``block_width`` that stay resident in
    the worker scratchpads for a whole pass; rows of A are streamed to
    every active core in batches of ``rows_per_batch`` and each core writes
    its C fragment back after computing it.
    """
    if n < 1:
        raise ValueError(f"matrix dimension must be >= 1, got {n}")
    if rows_per_batch < 1:
        raise ValueError("rows_per_batch must be >= 1")
    if mode not in MODES:
        raise ValueError(f"unknown schedule mode {mode!r}")
    if double_buffer is None:
        double_buffer = mode == SELF_TIMED
    nbuf = 2 if double_buffer else 1
    rows = min(rows_per_batch, n)

    if block_width is None:
        block_width = choose_block_width(cfg, n, rows, double_buffer)
    else:
        need = _footprint(cfg, n, block_width, rows, nbuf)
        if block_width < 1 or need > cfg.data_spm_bytes:
            raise InfeasiblePlanError(
                f"block width {block_width} needs {need} bytes of data scratchpad, "
                f"config {cfg.name} has {cfg.data_spm_bytes}",
                required_bytes=need,
            )
    passes = -(-n // (cfg.worker_cores * block_width))
    plan = MatmulPlan(n, cfg.worker_cores, block_width, passes, rows, double_buffer)

    eb, ab = cfg.element_bits, cfg.acc_bits
    em = _Emitter()
    nbatch = plan.batches

    def rows_of(j):
        return j * rows, min((j + 1) * rows, n)

    for p in range(passes):
        cores = [(c, plan.column_range(p, c)) for c in range(cfg.worker_cores)]
        cores = [(c, cr) for c, cr in cores if cr is not None]

        for c, (c0, c1) in cores:
            em.dma(DramRegion("B", 0, n, c0, c1), SpmBuffer(c, "b"), -(-n * (c1 - c0) * eb // 8))

        def load_a(j, c):
            r0, r1 = rows_of(j)
            em.dma(DramRegion("A", r0, r1, 0, n), SpmBuffer(c, f"a{j % nbuf}"),
                   -(-(r1 - r0) * n * eb // 8))

        def write_back(j, c, cr):
            r0, r1 = rows_of(j)
            em.dma(SpmBuffer(c, f"c{j % nbuf}"), DramRegion("C", r0, r1, cr[0], cr[1]),
                   -(-(r1 - r0) * (cr[1] - cr[0]) * ab // 8))

        def computes(j):
            r0, r1 = rows_of(j)
            for c, (c0, c1) in cores:
                task = KernelTask(r1 - r0, c1 - c0, n, eb, ab)
                s = j % nbuf
                em.compute(c, task, SpmBuffer(c, f"a{s}"), SpmBuffer(c, "b"), SpmBuffer(c, f"c{s}"))

        if double_buffer:
            for c, _ in cores:
                load_a(0, c)
            for j in range(nbatch):
                if j + 1 < nbatch:
                    for c, _ in cores:
                        load_a(j + 1, c)
                computes(j)
                for c, cr in cores:
                    write_back(j, c, cr)
        else:
            for j in range(nbatch):
                for c, cr in cores:
                    if j > 0:
                        write_back(j - 1, c, cr)
                    load_a(j, c)
                computes(j)
            for c, cr in cores:
                write_back(nbatch - 1, c, cr)

    schedule = Schedule(em.entries, mode=mode, n=n)
    if mode == TIME_TRIGGERED:
        starts, _ = worst_case_timeline(schedule, cfg, poll_interval=0)
        schedule.trigger_times = {e.id: s for e, s in zip(schedule.entries, starts)}
    return plan, schedule


# ---------------------------------------------------------------------------
# Durations and the worst-case timeline
# ---------------------------------------------------------------------------

def worst_duration(entry: Entry, cfg: ArchConfig) -> int:
    if isinstance(entry, ComputeTask):
        return kernel_cycles(entry.task, cfg)
    if touches_dram(entry.src, entry.dst):
        leg = cfg.dram.worst_case_access(entry.nbytes)
    else:
        leg = -(-entry.nbytes // cfg.spm_port_bytes_per_cycle)
    return cfg.dma_setup_cycles + leg


def observed_duration(duration: int, poll_interval: int) -> int:
    """Cycles until the manager sees a dispatched task finish.

    After depositing a task the manager re-reads that worker's status every
    ``poll_interval`` cycles, so completion is noticed at the first poll at
    or after the real finish.
    """
    if poll_interval <= 0:
        return duration
    return -(-duration // poll_interval) * poll_interval


def worst_case_timeline(s: Schedule, cfg: ArchConfig, poll_interval: int = 0) -> tuple[list[int], list[int]]:
    """Start/end cycles of every entry when all durations are worst case.

    Dependencies and per-resource program order are both honoured. In
    self-timed mode a compute releases its successors and its core only
    once the manager's status poll has observed it finishing.
    """
    index = {e.id: i for i, e in enumerate(s.entries)}
    starts = [0] * len(s.entries)
    ends = [0] * len(s.entries)
    resource_free: dict = {}
    for i, e in enumerate(s.entries):
        ready = resource_free.get(e.resource, 0)
        for d in e.deps:
            ready = max(ready, ends[index[d]])
        starts[i] = ready
        dur = worst_duration(e, cfg)
        if isinstance(e, ComputeTask):
            dur = observed_duration(dur, poll_interval)
        ends[i] = ready + dur
        resource_free[e.resource] = ends[i]
    return starts, ends


def wcet_bound(s: Schedule, cfg: ArchConfig, poll_interval: int = 20) -> int:
    """Compositional worst-case completion cycle of ``s``.

    Self-timed: longest path through dependencies plus single-DMA and
    per-core serialisation, each entry at its worst-case duration.
    Time-triggered: latest ``trigger + worst-case duration``.
    """
    report = validate(s, cfg)
    if not report.ok:
        raise InvalidScheduleError(
            "schedule has violations; run validate() and fix them before bounding it:\n"
            + str(report),
            report.violations,
        )
    if not s.entries:
        return 0
    if s.mode == TIME_TRIGGERED:
        return max(s.trigger_times[e.id] + worst_duration(e, cfg) for e in s.entries)
    _, ends = worst_case_timeline(s, cfg, poll_interval)
    return max(ends)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

CYCLE = "cycle"
MISSING_PRODUCER = "missing-producer"
CAPACITY = "capacity"
PREMATURE_TRIGGER = "premature-trigger"
HAZARD = "hazard"
RESOURCE_OVERLAP = "resource-overlap"
INVALID = "invalid-entry"


@dataclass(frozen=True)
class Violation:
    kind: str
    entry_id: Optional[int]
    message: str

    def __str__(self):
        where = f"entry {self.entry_id}" if self.entry_id is not None else "schedule"
        return f"[{self.kind}] {where}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def add(self, kind, entry_id, message):
        self.violations.append(Violation(kind, entry_id, message))

    def __str__(self):
        if self.ok:
            return "no violations"
        return "\n".join(str(v) for v in self.violations)


def _buffer_bytes(entry: Entry, buf: SpmBuffer) -> int:
    if isinstance(entry, DmaTransfer):
        return entry.nbytes
    if buf == entry.a:
        return entry.task.a_bytes
    if buf == entry.b:
        return entry.task.b_bytes
    return entry.task.c_bytes


def _find_cycles(entries, index) -> set[int]:
    """Ids of entries that lie on a dependency cycle (Kahn's leftovers)."""
    indeg = {e.id: 0 for e in entries}
    succ = defaultdict(list)
    for e in entries:
        for d in e.deps:
            if d in index:
                indeg[e.id] += 1
                succ[d].append(e.id)
    queue = [k for k, v in indeg.items() if v == 0]
    while queue:
        k = queue.pop()
        for nxt in succ[k]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                queue.append(nxt)
    return {k for k, v in indeg.items() if v > 0}


def validate(s: Schedule, cfg: ArchConfig) -> ValidationReport:
    """Check ``s`` against ``cfg``; violations are returned, never raised."""
    report = ValidationReport()
    entries = s.entries
    index: dict[int, int] = {}
    for i, e in enumerate(entries):
        if e.id in index:
            report.add(INVALID, e.id, "duplicate entry id")
        index.setdefault(e.id, i)

    # entry-local checks
    for e in entries:
        if isinstance(e, ComputeTask):
            if not 0 <= e.core < cfg.worker_cores:
                report.add(INVALID, e.id, f"core {e.core} out of range (0..{cfg.worker_cores - 1})")
            for buf in (e.a, e.b, e.c):
                if buf.core != e.core:
                    report.add(INVALID, e.id, f"compute on core {e.core} touches foreign buffer {buf}")
            if (e.task.element_bits, e.task.acc_bits) != (cfg.element_bits, cfg.acc_bits):
                report.add(INVALID, e.id, "kernel element/accumulator width differs from the config")
        else:
            if e.src == e.dst:
                report.add(INVALID, e.id, f"source and destination are both {e.src}")
            if isinstance(e.src, DramRegion) and isinstance(e.dst, DramRegion):
                report.add(INVALID, e.id, "DRAM-to-DRAM transfer")
            if e.nbytes <= 0:
                report.add(INVALID, e.id, f"degenerate transfer of {e.nbytes} bytes")
            for end in (e.src, e.dst):
                if isinstance(end, SpmBuffer) and not 0 <= end.core < cfg.worker_cores:
                    report.add(INVALID, e.id, f"scratchpad {end} does not exist")
                if isinstance(end, DramRegion):
                    bits = cfg.acc_bits if end.matrix == "C" else cfg.element_bits
                    rows, cols = end.shape
                    if rows <= 0 or cols <= 0:
                        report.add(INVALID, e.id, f"empty DRAM region {end}")
                    elif -(-rows * cols * bits // 8) != e.nbytes:
                        report.add(INVALID, e.id, f"byte count {e.nbytes} does not match region {end}")

    # (a)/(b) dependency structure
    for i, e in enumerate(entries):
        for d in e.deps:
            if d not in index:
                report.add(MISSING_PRODUCER, e.id, f"depends on unknown entry {d}")
            elif index[d] >= i:
                report.add(MISSING_PRODUCER, e.id, f"depends on entry {d}, which is listed after it")
    for k in sorted(_find_cycles(entries, index)):
        report.add(CYCLE, k, "entry lies on a dependency cycle")

    # happens-before: backward deps plus per-resource program order
    anc = [0] * len(entries)
    prev_on: dict = {}
    for i, e in enumerate(entries):
        bits = 0
        preds = [index[d] for d in e.deps if d in index and index[d] < i]
        if e.resource in prev_on:
            preds.append(prev_on[e.resource])
        for p in preds:
            bits |= anc[p] | (1 << p)
        anc[i] = bits
        prev_on[e.resource] = i

    # buffer hazards
    last_writer: dict[SpmBuffer, int] = {}
    readers: dict[SpmBuffer, list[int]] = defaultdict(list)
    for i, e in enumerate(entries):
        for buf in e.reads():
            w = last_writer.get(buf)
            if w is None:
                report.add(MISSING_PRODUCER, e.id, f"reads {buf}, which nothing has written")
                continue
            if not (anc[i] >> w) & 1:
                report.add(MISSING_PRODUCER, e.id,
                           f"reads {buf} without being ordered after its producer {entries[w].id}")
            elif _buffer_bytes(entries[w], buf) < _buffer_bytes(e, buf):
                report.add(MISSING_PRODUCER, e.id,
                           f"reads {_buffer_bytes(e, buf)} bytes of {buf} but producer "
                           f"{entries[w].id} wrote only {_buffer_bytes(entries[w], buf)}")
        for buf in e.writes():
            pending = readers[buf] if readers[buf] else (
                [last_writer[buf]] if buf in last_writer else [])
            for r in pending:
                if not (anc[i] >> r) & 1:
                    report.add(HAZARD, e.id,
                               f"overwrites {buf} while entry {entries[r].id} may still use it")
        for buf in e.reads():
            readers[buf].append(i)
        for buf in e.writes():
            last_writer[buf] = i
            readers[buf] = []

    # (c) scratchpad capacity
    sizes: dict[int, dict[str, int]] = defaultdict(dict)
    first_entry: dict[int, dict[str, int]] = defaultdict(dict)
    for e in entries:
        for buf in (*e.reads(), *e.writes()):
            nb = _buffer_bytes(e, buf)
            if nb > sizes[buf.core].get(buf.name, 0):
                sizes[buf.core][buf.name] = nb
                first_entry[buf.core][buf.name] = e.id
    for core, bufs in sorted(sizes.items()):
        used = sum(bufs.values()) + cfg.mailbox_bytes
        if used > cfg.data_spm_bytes:
            culprit = max(bufs, key=bufs.get)
            report.add(CAPACITY, first_entry[core][culprit],
                       f"scratchpad spm{core} needs {used} bytes "
                       f"(buffers {dict(sorted(bufs.items()))} + mailbox {cfg.mailbox_bytes}), "
                       f"capacity {cfg.data_spm_bytes}")

    # (d) time-triggered release times
    if s.mode == TIME_TRIGGERED:
        trig = s.trigger_times or {}
        missing = [e.id for e in entries if e.id not in trig]
        for k in missing:
            report.add(PREMATURE_TRIGGER, k, "time-triggered entry has no trigger time")
        if not missing:
            worst_end = {e.id: trig[e.id] + worst_duration(e, cfg) for e in entries}
            prev: dict = {}
            for e in entries:
                for d in e.deps:
                    if d in worst_end and trig[e.id] < worst_end[d]:
                        report.add(PREMATURE_TRIGGER, e.id,
                                   f"released at {trig[e.id]} before dependency {d} completes "
                                   f"in the worst case ({worst_end[d]})")
                p = prev.get(e.resource)
                if p is not None and trig[e.id] < worst_end[p]:
                    report.add(RESOURCE_OVERLAP, e.id,
                               f"released at {trig[e.id]} while entry {p} may still occupy "
                               f"{_resource_name(e.resource)} (until {worst_end[p]})")
                prev[e.resource] = e.id
    return report


def _resource_name(resource) -> str:
    return "the DMA engine" if resource == DMA else f"core {resource}"


def require_valid(s: Schedule, cfg: ArchConfig) -> None:
    report = validate(s, cfg)
    if not report.ok:
        raise InvalidScheduleError("invalid schedule:\n" + str(report), report.violations)


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------
#
#   # comment
#   schedule mode=<self-timed|time-triggered> [n=<dim>]
#   <id> dma src=<region> dst=<region> bytes=<count> [at=<cycle>] deps=<id,id|->
#   <id> compute core=<k> rows=<r> cols=<w> k=<n> eb=<bits> ab=<bits>
#        a=<spm> b=<spm> c=<spm> [at=<cycle>] deps=<id,id|->
#
# Regions are ``dram:<M>[r0:r1,c0:c1]`` or ``spm<core>:<buffer>``.

def _deps_text(deps: Iterable[int]) -> str:
    deps = list(deps)
    return ",".join(str(d) for d in deps) if deps else "-"


def dumps_schedule(s: Schedule) -> str:
    head = f"schedule mode={s.mode}"
    if s.n is not None:
        head += f" n={s.n}"
    lines = [head]
    trig = s.trigger_times or {}
    for e in s.entries:
        at = f" at={trig[e.id]}" if s.mode == TIME_TRIGGERED and e.id in trig else ""
        if isinstance(e, DmaTransfer):
            body = f"dma src={e.src} dst={e.dst} bytes={e.nbytes}"
        else:
            t = e.task
            body = (f"compute core={e.core} rows={t.rows} cols={t.block_width} k={t.inner_dim} "
                    f"eb={t.element_bits} ab={t.acc_bits} a={e.a} b={e.b} c={e.c}")
        lines.append(f"{e.id} {body}{at} deps={_deps_text(e.deps)}")
    return "\n".join(lines) + "\n"


def loads_schedule(text: str) -> Schedule:
    mode, n = SELF_TIMED, None
    entries: list[Entry] = []
    trig: dict[int, int] = {}
    seen_header = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        try:
            if words[0] == "schedule":
                kv = dict(w.split("=", 1) for w in words[1:])
                mode = kv.get("mode", SELF_TIMED)
                n = int(kv["n"]) if "n" in kv else None
                seen_header = True
                continue
            eid, kind = int(words[0]), words[1]
            kv = dict(w.split("=", 1) for w in words[2:])
            deps = () if kv["deps"] == "-" else tuple(int(d) for d in kv["deps"].split(","))
            if kind == "dma":
                entry = DmaTransfer(eid, parse_region(kv["src"]), parse_region(kv["dst"]),
                                    int(kv["bytes"]), deps)
            elif kind == "compute":
                task = KernelTask(int(kv["rows"]), int(kv["cols"]), int(kv["k"]),
                                  int(kv["eb"]), int(kv["ab"]))
                bufs = [parse_region(kv[x]) for x in ("a", "b", "c")]
                if not all(isinstance(b, SpmBuffer) for b in bufs):
                    raise ValueError("compute operands must be scratchpad buffers")
                entry = ComputeTask(eid, int(kv["core"]), task, *bufs, deps)
            else:
                raise ValueError(f"unknown entry kind {kind!r}")
            if "at" in kv:
                trig[eid] = int(kv["at"])
        except (KeyError, ValueError, IndexError) as exc:
            raise ValueError(f"schedule line {lineno}: {exc}: {raw!r}") from exc
        entries.append(entry)
    if not seen_header:
        raise ValueError("schedule text has no 'schedule' header line")
    return Schedule(entries, mode=mode, trigger_times=trig or None, n=n)
