"""
Vectorized matrix-multiplication kernel run by one worker core.

``kernel_exec`` computes the integer product the way the vector loop does:
the shared dimension is cut into register-sized chunks whose products are
accumulated in ``acc_bits``-wide wrapping integers. ``kernel_cycles`` is
the matching data-independent timing model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import ArchConfig


@dataclass(frozen=True)
class KernelTask:
    rows: int
    block_width: int
    inner_dim: int
    element_bits: int = 8
    acc_bits: int = 32

    def __post_init__(self):
        if min(self.rows, self.block_width, self.inner_dim) < 1:
            raise ValueError(
                f"kernel task dimensions must be >= 1, got rows={self.rows} "
                f"block_width={self.block_width} inner_dim={self.inner_dim}"
            )

    @property
    def a_bytes(self) -> int:
        return _nbytes(self.rows * self.inner_dim, self.element_bits)

    @property
    def b_bytes(self) -> int:
        return _nbytes(self.inner_dim * self.block_width, self.element_bits)

    @property
    def c_bytes(self) -> int:
        return _nbytes(self.rows * self.block_width, self.acc_bits)

    @property
    def footprint(self) -> int:
        return self.a_bytes + self.b_bytes + self.c_bytes

    @property
    def macs(self) -> int:
        return self.rows * self.block_width * self.inner_dim


def _nbytes(count: int, bits: int) -> int:
    return -(-count * bits // 8)


def wrap(values: np.ndarray, bits: int) -> np.ndarray:
    """Two's-complement wrap of int64 ``values`` to ``bits`` bits."""
    if bits >= 64:
        return values
    half = 1 << (bits - 1)
    return ((values + half) & ((1 << bits) - 1)) - half


def kernel_exec(
    a_rows: np.ndarray,
    b_block: np.ndarray,
    acc_bits: int = 32,
    chunk: Optional[int] = None,
) -> np.ndarray:
    """Exact ``a_rows @ b_block`` with ``acc_bits`` wrapping accumulation.

    ``chunk`` is the number of elements per vector register; the inner
    dimension is consumed ``chunk`` elements at a time.
    """
    a = np.asarray(a_rows)
    b = np.asarray(b_block)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} @ {b.shape}")
    a = a.astype(np.int64)
    b = b.astype(np.int64)
    k = a.shape[1]
    step = k if chunk is None else max(1, chunk)
    acc = np.zeros((a.shape[0], b.shape[1]), dtype=np.int64)
    for k0 in range(0, k, step):
        acc = wrap(acc + a[:, k0:k0 + step] @ b[k0:k0 + step, :], acc_bits)
    return acc


def kernel_cycles(task: KernelTask, cfg: ArchConfig) -> int:
    """Cycle count of one kernel invocation on one worker core.

    Per output element: one issue per vector chunk (``vreg/mult`` passes
    through the multiplier plus the issue overhead), a log2 tree reduction,
    and the operand/result traffic through the core's scratchpad port.
    """
    epv = cfg.vreg_bits // task.element_bits
    vec_ops = -(-task.inner_dim // epv)
    per_vec_op = cfg.vreg_bits // cfg.mult_bits + cfg.vec_issue_cycles
    reduce = int(math.log2(epv))
    traffic_bits = 2 * task.inner_dim * task.element_bits + task.acc_bits
    loadstore = -(-traffic_bits // (8 * cfg.spm_port_bytes_per_cycle))
    per_output = vec_ops * per_vec_op + reduce + loadstore
    return cfg.kernel_startup_cycles + task.rows * task.block_width * per_output


def make_operands(n: int, element_bits: int = 8, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Random signed ``n x n`` operands representable in ``element_bits``."""
    rng = np.random.default_rng(seed)
    lo, hi = -(1 << (element_bits - 1)), (1 << (element_bits - 1))
    a = rng.integers(lo, hi, size=(n, n), dtype=np.int64)
    b = rng.integers(lo, hi, size=(n, n), dtype=np.int64)
    return a, b


def oracle_matmul(a: np.ndarray, b: np.ndarray, acc_bits: int = 32) -> np.ndarray:
    """Whole-matrix reference product, independent of any tiling."""
    return wrap(np.asarray(a, dtype=np.int64) @ np.asarray(b, dtype=np.int64), acc_bits)
