"""
Timing models for the memory subsystem.

Covers the bounded-jitter DRAM, the single-host DMA engine, and the
dual-port scratchpads attached to every worker core. Cost functions are
pure; the only mutable state is the DMA ``busy_until`` timestamp and the
per-port occupancy of a scratchpad, both advanced by the simulation engine.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import CapacityError, SchedulingViolation

JITTER_DISTRIBUTIONS = ("uniform", "constant-worst", "constant-zero")


@dataclass(frozen=True)
class DramModel:
    """Per-access DRAM latency with an additive, bounded jitter term.

    Defaults are simulator choices, not measured DDR4 figures.
    """

    base_latency_cycles: int = 20
    bytes_per_cycle: int = 8
    jitter_max_cycles: int = 10
    jitter_distribution: str = "uniform"

    def __post_init__(self):
        if self.base_latency_cycles < 0 or self.jitter_max_cycles < 0:
            raise ValueError("DRAM latency and jitter must be non-negative")
        if self.bytes_per_cycle <= 0:
            raise ValueError("DRAM bytes_per_cycle must be positive")
        if self.jitter_distribution not in JITTER_DISTRIBUTIONS:
            raise ValueError(
                f"unknown jitter distribution {self.jitter_distribution!r}; "
                f"expected one of {', '.join(JITTER_DISTRIBUTIONS)}"
            )

    def stream_cycles(self, nbytes: int) -> int:
        return -(-nbytes // self.bytes_per_cycle)

    def worst_case_access(self, nbytes: int) -> int:
        return self.base_latency_cycles + self.jitter_max_cycles + self.stream_cycles(nbytes)

    def describe(self) -> str:
        return (
            f"dram base={self.base_latency_cycles} bpc={self.bytes_per_cycle} "
            f"jitter_max={self.jitter_max_cycles} dist={self.jitter_distribution}"
        )


def sample_jitter(model: DramModel, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` jitter values according to the model's distribution."""
    if model.jitter_distribution == "constant-zero" or model.jitter_max_cycles == 0:
        return np.zeros(size, dtype=np.int64)
    if model.jitter_distribution == "constant-worst":
        return np.full(size, model.jitter_max_cycles, dtype=np.int64)
    return rng.integers(0, model.jitter_max_cycles + 1, size=size, dtype=np.int64)


def dram_access_cycles(model: DramModel, nbytes: int, rng: np.random.Generator) -> int:
    """Cycles for one DRAM access of ``nbytes``, jitter drawn from ``rng``."""
    if nbytes <= 0:
        raise ValueError(f"degenerate DRAM access of {nbytes} bytes")
    jitter = int(sample_jitter(model, 1, rng)[0])
    return model.base_latency_cycles + jitter + model.stream_cycles(nbytes)


# ---------------------------------------------------------------------------
# Memory regions
# ---------------------------------------------------------------------------

_DRAM_RE = re.compile(r"^dram:([A-Za-z_]\w*)\[(\d+):(\d+),(\d+):(\d+)\]$")
_SPM_RE = re.compile(r"^spm(\d+):([A-Za-z_]\w*)$")


@dataclass(frozen=True)
class DramRegion:
    """Rectangular slice ``matrix[r0:r1, c0:c1]`` of a matrix held in DRAM."""

    matrix: str
    r0: int
    r1: int
    c0: int
    c1: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.r1 - self.r0, self.c1 - self.c0)

    def __str__(self):
        return f"dram:{self.matrix}[{self.r0}:{self.r1},{self.c0}:{self.c1}]"


@dataclass(frozen=True)
class SpmBuffer:
    """Named buffer inside the data scratchpad of one worker core.

    The DMA always reaches it through the management-side port.
    """

    core: int
    name: str

    def __str__(self):
        return f"spm{self.core}:{self.name}"


Region = Union[DramRegion, SpmBuffer]


def parse_region(text: str) -> Region:
    m = _DRAM_RE.match(text)
    if m:
        name, *bounds = m.groups()
        return DramRegion(name, *(int(b) for b in bounds))
    m = _SPM_RE.match(text)
    if m:
        return SpmBuffer(int(m.group(1)), m.group(2))
    raise ValueError(f"cannot parse memory region {text!r}")


# ---------------------------------------------------------------------------
# Scratchpad
# ---------------------------------------------------------------------------

WORKER_PORT = "worker"
MGMT_PORT = "mgmt"


@dataclass
class Scratchpad:
    """SRAM with one port for the owning worker and one for the manager/DMA.

    Every access takes exactly one cycle on its port. With ``dual_port``
    disabled both sides share a single port, which is only useful as a
    counterfactual in tests.
    """

    capacity_bytes: int
    name: str = "spm"
    dual_port: bool = True
    _free_at: dict = field(default_factory=dict, repr=False)
    access_count: dict = field(default_factory=lambda: {WORKER_PORT: 0, MGMT_PORT: 0}, repr=False)

    def access(self, port: str, cycle: int) -> int:
        """Issue a one-cycle access at ``cycle``; return its completion cycle."""
        if port not in (WORKER_PORT, MGMT_PORT):
            raise ValueError(f"unknown scratchpad port {port!r}")
        key = port if self.dual_port else "shared"
        start = max(cycle, self._free_at.get(key, 0))
        self._free_at[key] = start + 1
        self.access_count[port] += 1
        return start + 1

    def check_fits(self, nbytes: int, what: str = "transfer") -> None:
        if nbytes > self.capacity_bytes:
            raise CapacityError(
                f"{what} of {nbytes} bytes exceeds scratchpad {self.name} "
                f"({self.capacity_bytes} bytes)"
            )


# ---------------------------------------------------------------------------
# DMA
# ---------------------------------------------------------------------------


@dataclass
class DmaEngine:
    """Single-initiator copy engine; one transfer in flight at a time."""

    setup_cycles: int = 8
    dram: DramModel = field(default_factory=DramModel)
    spm_port_bytes_per_cycle: int = 32
    spm_capacity_bytes: Optional[int] = None
    busy_until: int = 0
    transfers: int = 0

    def cost(self, src: Region, dst: Region, nbytes: int, jitter: int) -> int:
        """Transfer duration for an already-drawn DRAM jitter value."""
        if isinstance(src, DramRegion) or isinstance(dst, DramRegion):
            leg = self.dram.base_latency_cycles + jitter + self.dram.stream_cycles(nbytes)
        else:
            leg = -(-nbytes // self.spm_port_bytes_per_cycle)
        return self.setup_cycles + leg

    def worst_case(self, src: Region, dst: Region, nbytes: int) -> int:
        return self.cost(src, dst, nbytes, self.dram.jitter_max_cycles)


def touches_dram(src: Region, dst: Region) -> bool:
    return isinstance(src, DramRegion) or isinstance(dst, DramRegion)


def check_transfer(src: Region, dst: Region, nbytes: int, spm_capacity: Optional[int] = None) -> None:
    if src == dst:
        raise ValueError(f"transfer source and destination are both {src}")
    if isinstance(src, DramRegion) and isinstance(dst, DramRegion):
        raise ValueError("DRAM-to-DRAM transfers are not supported by the DMA")
    if nbytes <= 0:
        raise ValueError(f"degenerate transfer of {nbytes} bytes")
    if spm_capacity is not None:
        for end in (src, dst):
            if isinstance(end, SpmBuffer) and nbytes > spm_capacity:
                raise CapacityError(
                    f"transfer of {nbytes} bytes exceeds scratchpad spm{end.core} "
                    f"({spm_capacity} bytes)"
                )


def dma_transfer_cycles(
    engine: DmaEngine,
    src: Region,
    dst: Region,
    nbytes: int,
    rng: np.random.Generator,
    start: int = 0,
) -> int:
    """Issue a transfer at ``start`` and return its duration in cycles.

    Marks the engine busy for the whole transfer. Issuing while a previous
    transfer is still in flight raises :class:`SchedulingViolation`.
    """
    check_transfer(src, dst, nbytes, engine.spm_capacity_bytes)
    if start < engine.busy_until:
        raise SchedulingViolation(
            f"DMA transfer {src} -> {dst} issued at cycle {start} while the engine "
            f"is busy until cycle {engine.busy_until}"
        )
    jitter = int(sample_jitter(engine.dram, 1, rng)[0]) if touches_dram(src, dst) else 0
    duration = engine.cost(src, dst, nbytes, jitter)
    engine.busy_until = start + duration
    engine.transfers += 1
    return duration
