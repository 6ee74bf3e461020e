"""
Roofline model, campaign statistics and wall-clock conversion.

Operations are counted as two per MAC (multiply + add). Medians of
even-sized samples take the lower middle element so they remain integer
cycle counts; standard deviations are population standard deviations.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

from .config import ArchConfig, PRESETS, derive_metrics


@dataclass(frozen=True)
class RooflinePoint:
    operational_intensity: float
    attainable_perf: float


@dataclass(frozen=True)
class CampaignStats:
    median_cycles: int
    stddev_cycles: float
    min_cycles: int
    max_cycles: int
    run_count: int


def _bandwidth_bytes_per_sec(cfg: ArchConfig, fmax_hz: Optional[float]) -> float:
    clock = cfg.fmax_hz if fmax_hz is None else fmax_hz
    return derive_metrics(cfg).spm_bandwidth_bytes_per_cycle_total * clock


def peak_ops_per_sec(cfg: ArchConfig, fmax_hz: Optional[float] = None) -> float:
    clock = cfg.fmax_hz if fmax_hz is None else fmax_hz
    return 2.0 * derive_metrics(cfg).macs_per_cycle_total * clock


def ridge_point(cfg: ArchConfig, fmax_hz: Optional[float] = None) -> float:
    """Operational intensity (ops/byte) where the bandwidth slope meets the roof.

    Independent of the clock, since both roof and slope scale with it.
    """
    return peak_ops_per_sec(cfg, fmax_hz) / _bandwidth_bytes_per_sec(cfg, fmax_hz)


def roofline(
    cfg: ArchConfig,
    intensities: Sequence[float],
    fmax_hz: Optional[float] = None,
) -> list[RooflinePoint]:
    """Attainable ops/s at each intensity; ``fmax_hz`` overrides the preset clock."""
    if any(x <= 0 for x in intensities):
        raise ValueError("operational intensities must be positive")
    if list(intensities) != sorted(intensities):
        raise ValueError("operational intensities must be sorted ascending")
    peak = peak_ops_per_sec(cfg, fmax_hz)
    bw = _bandwidth_bytes_per_sec(cfg, fmax_hz)
    return [RooflinePoint(float(x), min(peak, x * bw)) for x in intensities]


def default_intensity_grid(lo_exp: int = -4, hi_exp: int = 8, per_octave: int = 4) -> list[float]:
    """Log-spaced intensities from 2**lo_exp to 2**hi_exp ops/byte."""
    steps = (hi_exp - lo_exp) * per_octave
    return [2.0 ** (lo_exp + k / per_octave) for k in range(steps + 1)]


def _cycles(item) -> int:
    return int(getattr(item, "total_cycles", item))


def stats(results: Iterable) -> CampaignStats:
    """Median (lower middle), population stddev, min and max of total cycles.

    Accepts SimResult objects or plain cycle counts.
    """
    values = sorted(_cycles(r) for r in results)
    if not values:
        raise ValueError("cannot compute statistics of an empty campaign")
    return CampaignStats(
        median_cycles=values[(len(values) - 1) // 2],
        stddev_cycles=statistics.pstdev(values),
        min_cycles=values[0],
        max_cycles=values[-1],
        run_count=len(values),
    )


def to_wall_clock(cycles: int, fmax_hz: float) -> float:
    if fmax_hz <= 0:
        raise ValueError("clock frequency must be positive")
    return cycles / fmax_hz


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

PRESET_COLUMNS = [
    "name", "worker_cores", "vreg_bits", "mult_bits", "data_spm_bytes", "imem_spm_bytes",
    "mgmt_spm_bytes", "fmax_hz", "element_bits", "acc_bits", "spm_port_bytes_per_cycle",
    "macs_per_cycle_total",
]

ROOFLINE_COLUMNS = [
    "config", "fmax_hz", "operational_intensity", "attainable_ops_per_sec",
    "peak_ops_per_sec", "ridge_point",
]

RUN_COLUMNS = ["config", "n", "mode", "seed", "total_cycles", "dram_accesses", "wcet_bound"]

STATS_COLUMNS = [
    "config", "n", "mode", "jitter", "runs", "seed_first", "seed_last",
    "median_cycles", "stddev_cycles", "min_cycles", "max_cycles",
    "wcet_bound", "bound_violations", "fmax_hz", "median_seconds_at_fmax",
    "dram_base_latency_cycles", "dram_bytes_per_cycle", "dram_jitter_max_cycles",
    "poll_interval",
]

STATS_HEADER = (
    "# median_cycles: lower middle of the sorted runs; stddev_cycles: population "
    "standard deviation; DRAM timing columns are simulator defaults unless overridden"
)
ROOFLINE_HEADER = "# ops counted as 2 per MAC (multiply + add); intensity in ops/byte"


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(fh: TextIO, columns: list[str], rows: Iterable[dict], header: Optional[str] = None):
    if header:
        fh.write(header + "\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])


def read_csv(fh: TextIO) -> list[dict]:
    """Counterpart of ``write_csv``; skips ``#`` comment lines."""
    lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def preset_rows() -> list[dict]:
    rows = []
    for cfg in PRESETS.values():
        row = {c: getattr(cfg, c) for c in PRESET_COLUMNS if hasattr(cfg, c)}
        row["macs_per_cycle_total"] = derive_metrics(cfg).macs_per_cycle_total
        rows.append(row)
    return rows


def roofline_rows(cfg: ArchConfig, intensities: Sequence[float], fmax_hz: Optional[float] = None) -> list[dict]:
    clock = cfg.fmax_hz if fmax_hz is None else fmax_hz
    peak = peak_ops_per_sec(cfg, clock)
    ridge = ridge_point(cfg, clock)
    return [
        {
            "config": cfg.name,
            "fmax_hz": clock,
            "operational_intensity": p.operational_intensity,
            "attainable_ops_per_sec": p.attainable_perf,
            "peak_ops_per_sec": peak,
            "ridge_point": ridge,
        }
        for p in roofline(cfg, intensities, clock)
    ]
