import io
import math

import pytest
from hypothesis import given, strategies as st

from tpsim.analysis import (
    ROOFLINE_COLUMNS,
    STATS_COLUMNS,
    default_intensity_grid,
    peak_ops_per_sec,
    preset_rows,
    read_csv,
    ridge_point,
    roofline,
    roofline_rows,
    stats,
    to_wall_clock,
    write_csv,
)
from tpsim.config import MULTICORE_PRESETS, preset


def test_roofline_plateau_and_slope():
    cfg = preset("Octa")
    peak = peak_ops_per_sec(cfg)
    ridge = ridge_point(cfg)
    pts = roofline(cfg, [ridge / 4, ridge, ridge * 4, ridge * 64])
    assert pts[0].attainable_perf == pytest.approx(peak / 4)
    assert pts[1].attainable_perf == pytest.approx(peak)
    assert pts[2].attainable_perf == pts[3].attainable_perf == peak


def test_ridge_lower_for_many_core():
    assert ridge_point(preset("Octa")) < ridge_point(preset("Fast"))


def test_ridge_independent_of_clock():
    cfg = preset("Quad")
    assert ridge_point(cfg, 1e8) == pytest.approx(ridge_point(cfg))


def test_roofline_rejects_bad_grid():
    with pytest.raises(ValueError):
        roofline(preset("Dual"), [0.0, 1.0])
    with pytest.raises(ValueError):
        roofline(preset("Dual"), [2.0, 1.0])


def test_grid_shape():
    g = default_intensity_grid(-2, 2, 2)
    assert len(g) == 9 and g[0] == 0.25 and g[-1] == 4.0


def test_stats_constant():
    s = stats([10, 10, 10])
    assert (s.median_cycles, s.stddev_cycles, s.run_count) == (10, 0.0, 3)


def test_stats_outlier_resistant_median():
    s = stats([1, 2, 3, 100])
    assert s.median_cycles == 2 and s.min_cycles == 1 and s.max_cycles == 100


def test_stats_empty():
    with pytest.raises(ValueError):
        stats([])


@given(st.lists(st.integers(0, 10**9), min_size=1, max_size=40), st.randoms())
def test_stats_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a, b = stats(values), stats(shuffled)
    assert a.median_cycles == b.median_cycles
    assert math.isclose(a.stddev_cycles, b.stddev_cycles, rel_tol=1e-9, abs_tol=1e-6)


@pytest.mark.parametrize("cycles,hz,seconds", [
    (728_548_804, 168e6, 4.337),
    (548_343_601, 118e6, 4.647),
    (0, 168e6, 0.0),
])
def test_wall_clock(cycles, hz, seconds):
    assert to_wall_clock(cycles, hz) == pytest.approx(seconds, abs=5e-4)


@given(st.integers(0, 10**10), st.integers(0, 10**10))
def test_wall_clock_linear(x, y):
    assert to_wall_clock(x + y, 1.5e8) == pytest.approx(to_wall_clock(x, 1.5e8) + to_wall_clock(y, 1.5e8))


def test_wall_clock_rejects_zero_clock():
    with pytest.raises(ValueError):
        to_wall_clock(1, 0)


def test_csv_round_trip_with_header():
    buf = io.StringIO()
    rows = roofline_rows(preset("Dual"), [1.0, 2.0])
    write_csv(buf, ROOFLINE_COLUMNS, rows, header="# note")
    buf.seek(0)
    back = read_csv(buf)
    assert [float(r["attainable_ops_per_sec"]) for r in back] == [r["attainable_ops_per_sec"] for r in rows]


def test_preset_rows_cover_all():
    rows = preset_rows()
    assert len(rows) == 7
    assert {r["name"] for r in rows} >= set(MULTICORE_PRESETS)


def test_stats_columns_have_dram_parameters():
    assert {"dram_base_latency_cycles", "dram_jitter_max_cycles", "seed_first"} <= set(STATS_COLUMNS)
