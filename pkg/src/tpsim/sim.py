"""
Discrete-event execution of a static schedule on the machine model.

The management core is emulated at the level of its orchestration duties:
it issues DMA transfers in program order, deposits compute tasks in the
worker mailboxes and, in self-timed mode, learns about finished work by
polling the mailbox status every ``poll_interval`` cycles after each
dispatch. Polls go through the management-side scratchpad port and
therefore never delay a worker.

DRAM jitter is drawn once per run and indexed by the transfer's position
in the schedule, so a run's timing depends only on (schedule, config,
seed) and never on event processing order.
"""

from __future__ import annotations

import heapq
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import ArchConfig
from .errors import InvalidScheduleError, TimeTriggerFault
from .kernel import kernel_cycles, kernel_exec, make_operands
from .machine import DmaEngine, DramRegion, SpmBuffer, sample_jitter, touches_dram
from .schedule import (
    DMA,
    SELF_TIMED,
    TIME_TRIGGERED,
    ComputeTask,
    Schedule,
    observed_duration,
    require_valid,
)

DEFAULT_POLL_INTERVAL = 20

IDLE = "idle"
RUNNING = "running"


@dataclass
class Mailbox:
    """Status/control area reserved at the start of a worker's data scratchpad."""

    status: str = IDLE
    next_task: Optional[int] = None

    def deposit(self, entry_id: int):
        if self.status != IDLE:
            raise RuntimeError(f"task {entry_id} deposited while the worker is running")
        self.next_task = entry_id
        self.status = RUNNING

    def complete(self):
        if self.status != RUNNING:
            raise RuntimeError("completion signalled by an idle worker")
        self.status = IDLE
        self.next_task = None


@dataclass(frozen=True)
class TraceEvent:
    cycle: int
    component: str
    entry_id: int
    kind: str

    def __str__(self):
        return f"{self.cycle} {self.component} {self.entry_id} {self.kind}"


@dataclass
class SimResult:
    total_cycles: int
    per_core_busy_cycles: list[int]
    dma_busy_cycles: int
    dram_access_count: int
    start: dict[int, int]
    completion: dict[int, int]
    seed: int
    mgmt_spm_accesses: int = 0
    trace: Optional[list[TraceEvent]] = None
    c: Optional[np.ndarray] = field(default=None, repr=False)

    def durations(self) -> dict[int, int]:
        return {k: self.completion[k] - self.start[k] for k in self.completion}


def _component(entry) -> str:
    return "dma" if entry.resource == DMA else f"core{entry.resource}"


class _Prepared:
    """Seed-independent facts about a schedule, shared by all runs of a campaign."""

    def __init__(self, s: Schedule, cfg: ArchConfig):
        self.schedule = s
        self.cfg = cfg
        self.entries = s.entries
        index = {e.id: i for i, e in enumerate(s.entries)}
        self.deps = [[index[d] for d in e.deps] for e in s.entries]
        self.succ: list[list[int]] = [[] for _ in s.entries]
        for i, ds in enumerate(self.deps):
            for d in ds:
                self.succ[d].append(i)
        self.queues: dict = {}
        for i, e in enumerate(s.entries):
            self.queues.setdefault(e.resource, []).append(i)
        engine = DmaEngine(cfg.dma_setup_cycles, cfg.dram, cfg.spm_port_bytes_per_cycle)
        self.is_compute = [isinstance(e, ComputeTask) for e in s.entries]
        self.dram_slot = [-1] * len(s.entries)
        self.base = [0] * len(s.entries)
        n_dram = 0
        for i, e in enumerate(s.entries):
            if self.is_compute[i]:
                self.base[i] = kernel_cycles(e.task, cfg)
            else:
                self.base[i] = engine.cost(e.src, e.dst, e.nbytes, jitter=0)
                if touches_dram(e.src, e.dst):
                    self.dram_slot[i] = n_dram
                    n_dram += 1
        self.n_dram = n_dram

    def durations(self, seed: int) -> list[int]:
        jitter = sample_jitter(self.cfg.dram, self.n_dram, np.random.default_rng(seed))
        return [b + int(jitter[k]) if k >= 0 else b for b, k in zip(self.base, self.dram_slot)]

    def matrix_dim(self) -> int:
        if self.schedule.n is not None:
            return self.schedule.n
        dim = 0
        for i, e in enumerate(self.entries):
            if self.is_compute[i]:
                continue
            for end in (e.src, e.dst):
                if isinstance(end, DramRegion):
                    dim = max(dim, end.r1, end.c1)
        return dim


class _Memory:
    """Functional state: DRAM matrices and scratchpad buffer contents."""

    def __init__(self, cfg: ArchConfig, a: np.ndarray, b: np.ndarray):
        n = a.shape[0]
        self.cfg = cfg
        self.dram = {"A": a, "B": b, "C": np.zeros((n, b.shape[1]), dtype=np.int64)}
        self.spm: dict[SpmBuffer, np.ndarray] = {}

    def _read(self, region):
        if isinstance(region, DramRegion):
            return self.dram[region.matrix][region.r0:region.r1, region.c0:region.c1].copy()
        return self.spm[region].copy()

    def apply(self, entry):
        if isinstance(entry, ComputeTask):
            a, b = self.spm[entry.a], self.spm[entry.b]
            t = entry.task
            if a.shape != (t.rows, t.inner_dim) or b.shape != (t.inner_dim, t.block_width):
                raise InvalidScheduleError(
                    f"compute {entry.id} found operands {a.shape} and {b.shape} in its buffers"
                )
            self.spm[entry.c] = kernel_exec(a, b, t.acc_bits, chunk=self.cfg.vreg_bits // t.element_bits)
            return
        data = self._read(entry.src)
        if isinstance(entry.dst, DramRegion):
            d = entry.dst
            self.dram[d.matrix][d.r0:d.r1, d.c0:d.c1] = data
        else:
            self.spm[entry.dst] = data


def _run_prepared(
    prep: _Prepared,
    seed: int,
    poll_interval: int,
    trace: bool,
    functional: bool,
    operands: Optional[tuple[np.ndarray, np.ndarray]],
) -> SimResult:
    cfg = prep.cfg
    entries = prep.entries
    count = len(entries)
    dur = prep.durations(seed)
    starts = [-1] * count
    ends = [-1] * count
    events: Optional[list[TraceEvent]] = [] if trace else None
    mailboxes = [Mailbox() for _ in range(cfg.worker_cores)]

    memory = None
    if functional and count:
        if operands is None:
            operands = make_operands(prep.matrix_dim(), cfg.element_bits, seed=0)
        memory = _Memory(cfg, *operands)

    def on_start(i, t):
        starts[i] = t
        e = entries[i]
        if prep.is_compute[i]:
            mailboxes[e.core].deposit(e.id)
        if events is not None:
            events.append(TraceEvent(t, _component(e), e.id, "start"))

    def on_end(i, t):
        e = entries[i]
        if prep.is_compute[i]:
            mailboxes[e.core].complete()
        if memory is not None:
            memory.apply(e)
        if events is not None:
            events.append(TraceEvent(t, _component(e), e.id, "end"))

    heap: list[tuple[int, int]] = []

    if prep.schedule.mode == TIME_TRIGGERED:
        trig = prep.schedule.trigger_times or {}
        order = sorted(range(count), key=lambda i: (trig[entries[i].id], i))
        res_free: dict = {}
        for i in order:
            e = entries[i]
            t = trig[e.id]
            # retire everything that has finished by now
            while heap and heap[0][0] <= t:
                te, j = heapq.heappop(heap)
                on_end(j, te)
            for d in prep.deps[i]:
                if ends[d] < 0 or ends[d] > t:
                    raise TimeTriggerFault(e.id, t, f"dependency {entries[d].id} not complete")
            if res_free.get(e.resource, 0) > t:
                raise TimeTriggerFault(e.id, t, f"{_component(e)} still busy")
            on_start(i, t)
            ends[i] = t + dur[i]
            res_free[e.resource] = ends[i]
            heapq.heappush(heap, (ends[i], i))
        while heap:
            te, j = heapq.heappop(heap)
            on_end(j, te)
    else:
        remaining = [len(d) for d in prep.deps]
        ptr = {r: 0 for r in prep.queues}
        busy = {r: False for r in prep.queues}

        def try_start(res, now):
            q = prep.queues[res]
            p = ptr[res]
            if busy[res] or p == len(q):
                return
            i = q[p]
            if remaining[i]:
                return
            busy[res] = True
            ptr[res] = p + 1
            on_start(i, now)
            ends[i] = now + dur[i]
            seen = now + observed_duration(dur[i], poll_interval) if prep.is_compute[i] else ends[i]
            heapq.heappush(heap, (seen, i))

        for res in prep.queues:
            try_start(res, 0)
        while heap:
            t, i = heapq.heappop(heap)
            on_end(i, ends[i])
            res = entries[i].resource
            busy[res] = False
            touched = {res}
            for j in prep.succ[i]:
                remaining[j] -= 1
                if not remaining[j]:
                    touched.add(entries[j].resource)
            for r in touched:
                try_start(r, t)
        if any(e < 0 for e in ends):
            stuck = [entries[i].id for i in range(count) if ends[i] < 0][:5]
            raise InvalidScheduleError(f"schedule deadlocked; entries never started: {stuck}")

    # status reads while a worker runs; they use the management-side port
    polls = 0
    if prep.schedule.mode == SELF_TIMED and poll_interval > 0:
        for i in range(count):
            if prep.is_compute[i]:
                polls += observed_duration(dur[i], poll_interval) // poll_interval

    per_core = [0] * cfg.worker_cores
    dma_busy = 0
    dram_accesses = 0
    for i, e in enumerate(entries):
        d = ends[i] - starts[i]
        if prep.is_compute[i]:
            per_core[e.core] += d
        else:
            dma_busy += d
            dram_accesses += prep.dram_slot[i] >= 0
    if events is not None:
        events.sort(key=lambda ev: (ev.cycle, ev.kind != "end", ev.component, ev.entry_id))
    return SimResult(
        total_cycles=max(ends, default=0),
        per_core_busy_cycles=per_core,
        dma_busy_cycles=dma_busy,
        dram_access_count=dram_accesses,
        start={e.id: starts[i] for i, e in enumerate(entries)},
        completion={e.id: ends[i] for i, e in enumerate(entries)},
        seed=seed,
        mgmt_spm_accesses=polls,
        trace=events,
        c=memory.dram["C"] if memory is not None else None,
    )


def run(
    s: Schedule,
    cfg: ArchConfig,
    seed: int = 0,
    *,
    poll_interval: int = DEFAULT_POLL_INTERVAL,
    trace: bool = False,
    functional: bool = True,
    operands: Optional[tuple[np.ndarray, np.ndarray]] = None,
    check: bool = True,
) -> SimResult:
    """Execute ``s`` once with DRAM jitter drawn from ``seed``.

    ``operands`` are the A and B matrices; when omitted they are generated
    from a fixed data seed so every timing seed computes the same product.
    Pass ``check=False`` to skip validation (faults then surface at runtime).
    """
    if check:
        require_valid(s, cfg)
    return _run_prepared(_Prepared(s, cfg), seed, poll_interval, trace, functional, operands)


def _campaign_worker(args):
    prep, seed, poll_interval, functional, operands = args
    return _run_prepared(prep, seed, poll_interval, False, functional, operands)


def run_campaign(
    s: Schedule,
    cfg: ArchConfig,
    runs: int,
    seed0: int = 0,
    *,
    poll_interval: int = DEFAULT_POLL_INTERVAL,
    functional: bool = False,
    operands: Optional[tuple[np.ndarray, np.ndarray]] = None,
    workers: int = 1,
) -> list[SimResult]:
    """Run ``s`` with seeds ``seed0 .. seed0 + runs - 1``; results in seed order."""
    if runs < 1:
        raise ValueError("a campaign needs at least one run")
    require_valid(s, cfg)
    prep = _Prepared(s, cfg)
    seeds = range(seed0, seed0 + runs)
    if workers > 1:
        jobs = [(prep, sd, poll_interval, functional, operands) for sd in seeds]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_campaign_worker, jobs))
    return [_run_prepared(prep, sd, poll_interval, False, functional, operands) for sd in seeds]


def dumps_trace(result: SimResult) -> str:
    if result.trace is None:
        raise ValueError("run was executed without trace recording")
    return "".join(f"{ev}\n" for ev in result.trace)
