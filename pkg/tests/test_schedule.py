from pathlib import Path

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from tpsim.config import PRESETS, preset
from tpsim.errors import InfeasiblePlanError, InvalidScheduleError
from tpsim.machine import DramRegion, SpmBuffer
from tpsim.schedule import (
    MISSING_PRODUCER,
    PREMATURE_TRIGGER,
    SELF_TIMED,
    TIME_TRIGGERED,
    ComputeTask,
    DmaTransfer,
    Schedule,
    dumps_schedule,
    loads_schedule,
    plan_matmul,
    validate,
    wcet_bound,
    worst_duration,
)
from tpsim.sim import run_campaign

GOLDEN = Path(__file__).parent / "golden"


def _dual():
    return preset("Dual")


def _graph(s):
    g = nx.DiGraph()
    for e in s.entries:
        g.add_node(e.id)
        for d in e.deps:
            g.add_edge(d, e.id)
    return g


def test_small_plan_structure():
    _, s = plan_matmul(_dual(), 8, block_width=4)
    g = _graph(s)
    assert nx.is_directed_acyclic_graph(g)
    b_loads = [e for e in s.transfers() if isinstance(e.src, DramRegion) and e.src.matrix == "B"]
    a_loads = [e for e in s.transfers() if isinstance(e.src, DramRegion) and e.src.matrix == "A"]
    wbs = [e for e in s.transfers() if isinstance(e.dst, DramRegion)]
    assert len(b_loads) == 2
    # two batches of four rows, each with one A-load, compute and write-back per core
    assert len(a_loads) == 4 and len(s.computes()) == 4 and len(wbs) == 4
    for comp in s.computes():
        anc = nx.ancestors(g, comp.id)
        by_id = s.by_id()
        assert any(by_id[x] in b_loads and by_id[x].dst.core == comp.core for x in anc)
        assert any(by_id[x] in a_loads and by_id[x].dst == comp.a for x in anc)
    for wb in wbs:
        producers = [c for c in s.computes() if c.c == wb.src and c.id in nx.ancestors(g, wb.id)]
        assert producers


def test_small_plan_passes():
    plan, _ = plan_matmul(_dual(), 8, block_width=4)
    assert plan.passes == 1


def test_octa_n1024_block_width_and_passes():
    plan, s = plan_matmul(preset("Octa"), 1024)
    assert plan.block_width == 64
    assert plan.passes == 2
    assert validate(s, preset("Octa")).ok


def test_single_core_degenerates_to_baseline_flow():
    plan, s = plan_matmul(preset("Fast"), 64)
    assert plan.worker_cores == 1 and plan.passes == 1
    assert {c.core for c in s.computes()} == {0}
    b_loads = [e for e in s.transfers() if isinstance(e.src, DramRegion) and e.src.matrix == "B"]
    assert len(b_loads) == 1


def test_deterministic():
    a = plan_matmul(preset("Quad"), 48)
    b = plan_matmul(preset("Quad"), 48)
    assert a == b


def test_infeasible_plan_reports_capacity():
    with pytest.raises(InfeasiblePlanError) as err:
        plan_matmul(preset("Hexadeca"), 8192)
    assert err.value.required_bytes > preset("Hexadeca").data_spm_bytes
    assert str(err.value.required_bytes) in str(err.value)


def test_explicit_block_width_too_large():
    with pytest.raises(InfeasiblePlanError):
        plan_matmul(preset("Hexadeca"), 1024, block_width=64)


def test_partial_batches_and_blocks():
    cfg = preset("Quad")
    plan, s = plan_matmul(cfg, 10, rows_per_batch=3)
    assert validate(s, cfg).ok
    assert sum(c.task.macs for c in s.computes()) == 1000


def _coverage_ok(s, n):
    cells = {}
    for wb in s.transfers():
        if isinstance(wb.dst, DramRegion) and wb.dst.matrix == "C":
            d = wb.dst
            for r in range(d.r0, d.r1):
                for c in range(d.c0, d.c1):
                    cells[(r, c)] = cells.get((r, c), 0) + 1
    return len(cells) == n * n and set(cells.values()) == {1}


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 80), name=st.sampled_from(list(PRESETS)), mode=st.sampled_from([SELF_TIMED, TIME_TRIGGERED]),
       rows=st.integers(1, 6))
def test_planner_output_properties(n, name, mode, rows):
    cfg = preset(name)
    plan, s = plan_matmul(cfg, n, mode=mode, rows_per_batch=rows)
    assert validate(s, cfg).ok
    assert _coverage_ok(s, n)
    # every B element crosses from DRAM exactly once, in the pass owning its column
    b_cells = {}
    for t in s.transfers():
        if isinstance(t.src, DramRegion) and t.src.matrix == "B":
            for c in range(t.src.c0, t.src.c1):
                b_cells[c] = b_cells.get(c, 0) + 1
            assert t.src.r0 == 0 and t.src.r1 == n
    assert b_cells == {c: 1 for c in range(n)}
    assert plan.passes == -(-n // (cfg.worker_cores * plan.block_width))


def test_validate_flags_compute_before_its_transfer():
    cfg = _dual()
    _, s = plan_matmul(cfg, 8, block_width=4)
    entries = list(s.entries)
    comp = s.computes()[0]
    a_load = next(e for e in entries if isinstance(e, DmaTransfer) and e.dst == comp.a)
    entries.remove(comp)
    entries.insert(entries.index(a_load), comp)
    report = validate(Schedule(entries, n=8), cfg)
    assert MISSING_PRODUCER in report.kinds()


def _tight_compute(s, cfg):
    worst_end = {e.id: s.trigger_times[e.id] + worst_duration(e, cfg) for e in s.entries}
    for e in s.computes():
        if e.deps and s.trigger_times[e.id] == max(worst_end[d] for d in e.deps):
            return e
    raise AssertionError("no dependency-bound compute")


def test_validate_flags_premature_trigger():
    cfg = _dual()
    _, s = plan_matmul(cfg, 16, mode=TIME_TRIGGERED)
    assert validate(s, cfg).ok
    victim = _tight_compute(s, cfg)
    s.trigger_times[victim.id] -= 1
    assert PREMATURE_TRIGGER in validate(s, cfg).kinds()


def test_wcet_single_transfer():
    s = Schedule([DmaTransfer(0, DramRegion("A", 0, 1, 0, 64), SpmBuffer(0, "a0"), 64)], n=64)
    assert wcet_bound(s, preset("Octa")) == 8 + 38


def test_wcet_independent_transfers_serialize():
    s = Schedule([
        DmaTransfer(0, DramRegion("A", 0, 1, 0, 64), SpmBuffer(0, "a0"), 64),
        DmaTransfer(1, DramRegion("A", 1, 2, 0, 64), SpmBuffer(1, "a0"), 64),
    ], n=64)
    assert wcet_bound(s, preset("Octa")) == 46 + 46


def test_wcet_rejects_invalid_schedule():
    s = Schedule([ComputeTask(0, 0, plan_matmul(_dual(), 8)[1].computes()[0].task,
                              SpmBuffer(0, "a0"), SpmBuffer(0, "b"), SpmBuffer(0, "c0"))], n=8)
    with pytest.raises(InvalidScheduleError, match="validate"):
        wcet_bound(s, _dual())


def test_wcet_empty():
    assert wcet_bound(Schedule(), _dual()) == 0


def test_wcet_dominates_monte_carlo_dual_n64():
    cfg = _dual()
    _, s = plan_matmul(cfg, 64)
    bound = wcet_bound(s, cfg)
    assert max(r.total_cycles for r in run_campaign(s, cfg, 1000, 0)) <= bound


def test_wcet_equals_constant_worst_run():
    cfg = preset("Quad").replace(dram=preset("Quad").dram.__class__(jitter_distribution="constant-worst"))
    _, s = plan_matmul(cfg, 32)
    results = run_campaign(s, cfg, 3, 0)
    assert {r.total_cycles for r in results} == {wcet_bound(s, cfg)}


@pytest.mark.parametrize("mode", [SELF_TIMED, TIME_TRIGGERED])
def test_text_round_trip(mode):
    _, s = plan_matmul(preset("Quad"), 24, mode=mode)
    assert loads_schedule(dumps_schedule(s)) == s


def test_golden_schedule():
    _, s = plan_matmul(_dual(), 8, block_width=4, mode=TIME_TRIGGERED)
    golden = (GOLDEN / "dual_n8_bw4_timetriggered.sched").read_text()
    assert dumps_schedule(s) == golden
    assert loads_schedule(golden) == s


def test_loads_schedule_errors():
    with pytest.raises(ValueError, match="line 2"):
        loads_schedule("schedule mode=self-timed\n0 teleport deps=-\n")
    with pytest.raises(ValueError, match="header"):
        loads_schedule("0 dma src=spm0:a dst=spm1:a bytes=8 deps=-\n")
