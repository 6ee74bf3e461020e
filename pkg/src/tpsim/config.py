"""
Architecture configurations, named presets and derived peak metrics.

The seven presets carry the core counts, vector widths, scratchpad sizes
and maximum clock frequencies of the evaluated single-core baselines
(Small, Medium, Fast) and multi-core variants (Dual ... Hexadeca).
Everything else (element width, port throughput, DRAM and DMA timing,
kernel overheads) is a simulator parameter with a documented default.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .machine import DramModel

KIB = 1024
MIB = 1024 * KIB
MHZ = 1_000_000


def _is_pow2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class ArchConfig:
    name: str
    worker_cores: int
    vreg_bits: int
    mult_bits: int
    data_spm_bytes: int
    fmax_hz: int
    imem_spm_bytes: int = 16 * KIB
    mgmt_spm_bytes: int = 64 * KIB
    element_bits: int = 8
    acc_bits: int = 32
    # Per-core width of the scratchpad connection; identical for every preset
    # so aggregate bandwidth grows with the core count.
    spm_port_bytes_per_cycle: int = 32
    dram: DramModel = field(default_factory=DramModel)
    dma_setup_cycles: int = 8
    mailbox_bytes: int = 64
    kernel_startup_cycles: int = 50
    vec_issue_cycles: int = 1

    def __post_init__(self):
        if self.worker_cores < 1:
            raise ConfigError(f"worker_cores must be >= 1, got {self.worker_cores}")
        for attr in ("vreg_bits", "mult_bits", "element_bits", "acc_bits"):
            if not _is_pow2(getattr(self, attr)):
                raise ConfigError(f"{attr} must be a power of two, got {getattr(self, attr)}")
        if not self.vreg_bits >= self.mult_bits >= self.element_bits:
            raise ConfigError(
                "need vreg_bits >= mult_bits >= element_bits, got "
                f"{self.vreg_bits} / {self.mult_bits} / {self.element_bits}"
            )
        if self.acc_bits < self.element_bits:
            raise ConfigError("acc_bits must be at least element_bits")
        if self.mailbox_bytes <= 0 or self.data_spm_bytes <= self.mailbox_bytes:
            raise ConfigError(
                f"data scratchpad ({self.data_spm_bytes} B) must exceed the reserved "
                f"mailbox region ({self.mailbox_bytes} B)"
            )
        if self.fmax_hz <= 0:
            raise ConfigError("fmax_hz must be positive")
        if self.spm_port_bytes_per_cycle <= 0:
            raise ConfigError("spm_port_bytes_per_cycle must be positive")
        for attr in ("dma_setup_cycles", "kernel_startup_cycles", "vec_issue_cycles"):
            if getattr(self, attr) < 0:
                raise ConfigError(f"{attr} must be non-negative")

    @property
    def element_bytes(self) -> float:
        return self.element_bits / 8

    @property
    def acc_bytes(self) -> float:
        return self.acc_bits / 8

    @property
    def elems_per_vreg(self) -> int:
        return self.vreg_bits // self.element_bits

    def replace(self, **changes) -> "ArchConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class PerfMetrics:
    macs_per_cycle_per_core: int
    macs_per_cycle_total: int
    peak_ops_per_sec: float
    spm_bandwidth_bytes_per_cycle_total: int


def derive_metrics(cfg: ArchConfig) -> PerfMetrics:
    """Peak compute and aggregate scratchpad bandwidth of ``cfg``.

    A MAC counts as two operations in ``peak_ops_per_sec``.
    """
    per_core = cfg.mult_bits // cfg.element_bits
    total = per_core * cfg.worker_cores
    return PerfMetrics(
        macs_per_cycle_per_core=per_core,
        macs_per_cycle_total=total,
        peak_ops_per_sec=2.0 * total * cfg.fmax_hz,
        spm_bandwidth_bytes_per_cycle_total=cfg.worker_cores * cfg.spm_port_bytes_per_cycle,
    )


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def _baseline(name, vreg, mult, mhz):
    return ArchConfig(
        name=name,
        worker_cores=1,
        vreg_bits=vreg,
        mult_bits=mult,
        data_spm_bytes=1 * MIB,
        imem_spm_bytes=64 * KIB,
        fmax_hz=mhz * MHZ,
    )


def _multicore(name, cores, vreg, mult, spm_kib, mhz):
    return ArchConfig(
        name=name,
        worker_cores=cores,
        vreg_bits=vreg,
        mult_bits=mult,
        data_spm_bytes=spm_kib * KIB,
        fmax_hz=mhz * MHZ,
    )


PRESETS: dict[str, ArchConfig] = {
    "Small": _baseline("Small", 128, 32, 179),
    "Medium": _baseline("Medium", 512, 128, 177),
    "Fast": _baseline("Fast", 2048, 1024, 149),
    "Dual": _multicore("Dual", 2, 1024, 512, 512, 168),
    "Quad": _multicore("Quad", 4, 512, 256, 256, 169),
    "Octa": _multicore("Octa", 8, 256, 128, 128, 168),
    "Hexadeca": _multicore("Hexadeca", 16, 128, 64, 64, 118),
}

BASELINE_PRESETS = ("Small", "Medium", "Fast")
MULTICORE_PRESETS = ("Dual", "Quad", "Octa", "Hexadeca")


def preset(name: str) -> ArchConfig:
    """Look up a preset by name (case-insensitive)."""
    for key, cfg in PRESETS.items():
        if key.lower() == name.strip().lower():
            return cfg
    raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")


# ---------------------------------------------------------------------------
# Key/value config files
# ---------------------------------------------------------------------------

_ARCH_FIELDS = [f for f in dataclasses.fields(ArchConfig) if f.name != "dram"]
_DRAM_FIELDS = dataclasses.fields(DramModel)


def dump_config(cfg: ArchConfig) -> str:
    """Serialize ``cfg`` as INI text with ``[arch]`` and ``[dram]`` sections."""
    parser = configparser.ConfigParser()
    parser["arch"] = {f.name: str(getattr(cfg, f.name)) for f in _ARCH_FIELDS}
    parser["dram"] = {f.name: str(getattr(cfg.dram, f.name)) for f in _DRAM_FIELDS}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _coerce(fld, raw: str):
    if fld.type in ("int", int):
        return int(raw)
    return raw.strip()


def parse_config(text: str) -> ArchConfig:
    """Parse INI text. ``[arch] preset = <name>`` seeds unspecified fields."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = set(parser.sections()) - {"arch", "dram"}
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    arch = dict(parser["arch"]) if parser.has_section("arch") else {}
    dram = dict(parser["dram"]) if parser.has_section("dram") else {}

    base = preset(arch.pop("preset")) if "preset" in arch else None
    arch_names = {f.name: f for f in _ARCH_FIELDS}
    dram_names = {f.name: f for f in _DRAM_FIELDS}
    for key in arch:
        if key not in arch_names:
            raise ConfigError(f"unknown [arch] key {key!r}")
    for key in dram:
        if key not in dram_names:
            raise ConfigError(f"unknown [dram] key {key!r}")

    try:
        arch_vals = {k: _coerce(arch_names[k], v) for k, v in arch.items()}
        dram_vals = {k: _coerce(dram_names[k], v) for k, v in dram.items()}
        if base is not None:
            dram_model = dataclasses.replace(base.dram, **dram_vals)
            return dataclasses.replace(base, dram=dram_model, **arch_vals)
        return ArchConfig(dram=DramModel(**dram_vals), **arch_vals)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(source: str) -> ArchConfig:
    """Resolve a preset name or a path to a config file."""
    if os.path.isfile(source):
        with open(source) as fh:
            return parse_config(fh.read())
    return preset(source)
