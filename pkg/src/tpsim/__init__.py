"""Simulator and static schedule compiler for a time-predictable multi-core vector processor."""

from .analysis import CampaignStats, RooflinePoint, ridge_point, roofline, stats, to_wall_clock
from .config import PRESETS, ArchConfig, PerfMetrics, derive_metrics, dump_config, load_config, parse_config, preset
from .kernel import KernelTask, kernel_cycles, kernel_exec
from .machine import DmaEngine, DramModel, Scratchpad, dma_transfer_cycles, dram_access_cycles
from .schedule import (
    ComputeTask,
    DmaTransfer,
    MatmulPlan,
    Schedule,
    dumps_schedule,
    loads_schedule,
    plan_matmul,
    validate,
    wcet_bound,
)
from .sim import SimResult, run, run_campaign

__version__ = "0.1.0"
