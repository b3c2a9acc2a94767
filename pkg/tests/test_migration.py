import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridmem.migration import (
    US,
    BandwidthBalancer,
    CycleInputs,
    CycleReport,
    Direction,
    EngineConfig,
    MigrationCandidate,
    MigrationEngine,
    build_hotness_list,
    mark_candidates,
    migrate_cpu,
    migrate_dma_batch,
    rebalance_bandwidth,
)
from hybridmem.predictor import WdState
from hybridmem.sysmon import PageClass, ReuseClass
from hybridmem.system import HybridMemory

H, L, U = WdState.WD_FREQ_H, WdState.WD_FREQ_L, WdState.UN_WD
DRAM, NVM = 0, 1


def machine(n_vpages=256, dram=2048, nvm=4096, on=NVM, mapped=None):
    mem = HybridMemory(n_vpages, (dram, nvm))
    for vp in range(n_vpages if mapped is None else mapped):
        mem.map_page(vp, mem.buddies[on].alloc_any())
    return mem


def inputs(n, future=U, hotness=0, hot=False, cls=PageClass.COLD, reuse=ReuseClass.FREQ_TOUCHED,
           **bw):
    return CycleInputs(
        future=np.full(n, future, dtype=np.int8),
        hotness=np.full(n, hotness, dtype=np.int64),
        hot=np.full(n, hot, dtype=bool),
        page_class=np.full(n, cls, dtype=np.int8),
        reuse=np.full(n, reuse, dtype=np.int8),
        **bw,
    )


def cand(vp, future, hotness, rank_cls=PageClass.WD):
    return MigrationCandidate(vp, 1000 + vp, NVM, future, hotness, Direction.TO_DRAM,
                              page_class=rank_cls)


# --- marking and ordering ----------------------------------------------------------


def test_mark_examples():
    chans = np.array([NVM, DRAM, DRAM, NVM, -1])
    inp = inputs(5)
    inp.future[:] = [H, U, H, U, H]
    inp.page_class[:] = [PageClass.WD, PageClass.COLD, PageClass.WD, PageClass.RD, PageClass.WD]
    got = {c.vpage: c.direction for c in mark_candidates(chans, np.arange(5), inp)}
    assert got == {0: Direction.TO_DRAM, 1: Direction.TO_NVM}
    inp.hot[3] = True
    got = {c.vpage: c.direction for c in mark_candidates(chans, np.arange(5), inp)}
    assert got[3] == Direction.TO_DRAM


def test_candidate_direction_invariant():
    with pytest.raises(ValueError):
        MigrationCandidate(0, 0, DRAM, H, 1, Direction.TO_DRAM)
    with pytest.raises(ValueError):
        MigrationCandidate(0, 0, NVM, U, 1, Direction.TO_NVM)


def test_hotness_list_examples():
    up, down = build_hotness_list([cand(0, H, 10), cand(1, L, 90)])
    assert [c.vpage for c in up] == [0, 1] and down == []
    up, _ = build_hotness_list([cand(0, H, 20), cand(1, H, 80)])
    assert [c.vpage for c in up] == [1, 0]
    up, _ = build_hotness_list([cand(5, H, 20), cand(1, H, 20)])
    assert [c.pfn for c in up] == [1001, 1005]
    assert build_hotness_list([]) == ([], [])


@given(st.lists(st.tuples(st.sampled_from([H, L, U]), st.integers(0, 100),
                          st.sampled_from(list(PageClass))), max_size=40))
def test_hotness_list_invariants(rows):
    cands = [cand(i, f, h, c) for i, (f, h, c) in enumerate(rows)]
    up, _ = build_hotness_list(cands)
    ranks = [c.rank for c in up]
    assert ranks == sorted(ranks)
    for a, b in zip(up, up[1:]):
        if a.rank == b.rank:
            assert (a.hotness, -a.pfn) >= (b.hotness, -b.pfn)
    states = [c.future for c in up]
    if H in states and L in states:
        assert max(i for i, s in enumerate(states) if s == H) < min(
            i for i, s in enumerate(states) if s == L)


# --- copy mechanisms --------------------------------------------------------------------


def test_cpu_copy_costs_and_remaps():
    mem = machine(8)
    total = 0.0
    for vp in range(5):
        dst = mem.buddies[DRAM].alloc_any().pfn
        total += migrate_cpu(mem, vp, dst, 0.0)
        assert mem.page_table[vp] == dst and mem.channels()[vp] == DRAM
    assert total == 15.0
    assert mem.free_pages(NVM) == 4096 - 3
    assert mem.model.copy_counts[DRAM, 1] == 5 * 64


def test_cpu_copy_errors():
    mem = machine(4)
    with pytest.raises(ValueError):
        migrate_cpu(mem, 0, int(mem.page_table[0]), 0.0)
    free = mem.buddies[DRAM].alloc_any().pfn
    mem.free_pfn(free)
    with pytest.raises(RuntimeError):
        migrate_cpu(mem, 0, free, 0.0)
    with pytest.raises(RuntimeError):
        migrate_cpu(mem, 0, int(mem.page_table[1]), 0.0)


def test_access_during_copy_waits_for_the_lock():
    mem = machine(2)
    dst = mem.buddies[DRAM].alloc_any().pfn
    migrate_cpu(mem, 0, dst, 0.0)
    mem.model.replay(np.array([1000.0]), np.array([0]), np.array([0]), np.array([False]),
                     mem.page_table, mem.lock_until, mem.page_lat_sum, mem.page_lat_n)
    # 2 us left on the lock plus a DRAM row miss (10 + 5 ns)
    assert mem.page_lat_sum[0] == pytest.approx(2000.0 + 15.0)


def test_dma_quiescent_and_interference():
    mem = machine(200)
    pages = list(range(100))
    dsts = [mem.buddies[DRAM].alloc_any().pfn for _ in pages]
    res = migrate_dma_batch(mem, pages, dsts, 0.0)
    assert len(res.migrated) == 100 and not res.discarded
    assert res.cost_us == 5 + 100

    pages = list(range(100, 200))
    dsts = [mem.buddies[DRAM].alloc_any().pfn for _ in pages]
    dirty = set(range(100, 107))
    old = mem.page_table.copy()
    res = migrate_dma_batch(mem, pages, dsts, 0.0,
                            written=lambda v, a, b: np.isin(v, list(dirty)))
    assert len(res.migrated) == 93 and sorted(res.discarded) == sorted(dirty)
    assert all(mem.page_table[v] == old[v] for v in dirty)
    assert mem.free_pages(DRAM) == 2048 - 193


def test_dma_remainder_and_empty():
    mem = machine(5)
    dsts = [mem.buddies[DRAM].alloc_any().pfn for _ in range(3)]
    res = migrate_dma_batch(mem, range(5), dsts, 0.0)
    assert res.migrated == [0, 1, 2] and res.remainder == [3, 4]
    assert migrate_dma_batch(mem, [0], [], 0.0).remainder == [0]
    with pytest.raises(ValueError):
        migrate_dma_batch(mem, [], [], 0.0)


def test_single_page_dma_cost():
    mem = machine(1)
    res = migrate_dma_batch(mem, [0], [mem.buddies[DRAM].alloc_any().pfn], 0.0)
    assert res.cost_us == 5 + 1


@given(st.lists(st.booleans(), min_size=1, max_size=60))
@settings(max_examples=40)
def test_dma_never_remaps_a_dirtied_page(pattern):
    n = len(pattern)
    mem = machine(n)
    old = mem.page_table.copy()
    dsts = [mem.buddies[DRAM].alloc_any().pfn for _ in range(n)]
    mask = np.array(pattern)
    res = migrate_dma_batch(mem, range(n), dsts, 0.0, written=lambda v, a, b: mask[v])
    for vp in range(n):
        if pattern[vp]:
            assert mem.page_table[vp] == old[vp]
        else:
            assert mem.page_table[vp] == dsts[vp]
    assert len(res.migrated) + len(res.discarded) == n
    assert mem.free_pages(DRAM) + mem.free_pages(NVM) == 2048 + 4096 - n


# --- cycles ---------------------------------------------------------------------------


def test_empty_cycle():
    mem = machine(16)
    rep = MigrationEngine(mem).run_cycle(0.0, inputs(16))
    assert rep.migrated == 0 and rep.engine_us == 0.0 and rep.discarded == 0


def test_ten_hot_wd_pages_move_by_cpu():
    mem = machine(64)
    inp = inputs(64)
    hot = np.arange(10)
    inp.future[hot] = H
    inp.hot[hot] = True
    inp.hotness[hot] = 90
    inp.page_class[hot] = PageClass.WD
    rep = MigrationEngine(mem).run_cycle(0.0, inp)
    assert rep.to_dram == 10 and rep.cpu_moves == 10
    assert rep.engine_us == pytest.approx(30.0)
    assert (mem.channels()[hot] == DRAM).all()
    assert (mem.channels()[10:] == NVM).all()


def test_cold_dram_pages_evicted_in_dma_batches_with_retries():
    mem = machine(2000, dram=2048, on=DRAM)
    seen = set()

    def written(v, a, b):
        # each page is dirtied during its first copy only
        out = np.array([x % 50 == 0 and x not in seen for x in v])
        seen.update(v.tolist())
        return out

    rep = MigrationEngine(mem, EngineConfig(rebalance_banks=False)).run_cycle(
        0.0, inputs(2000), written)
    assert rep.to_nvm == 2000 and rep.discarded == 40
    assert rep.dma_batches == math.ceil(2000 / 512) + 1
    assert (mem.channels() == NVM).all()


def test_always_dirty_page_is_forced_wd():
    mem = machine(100, on=DRAM)
    eng = MigrationEngine(mem, EngineConfig(rebalance_banks=False))
    rep = eng.run_cycle(0.0, inputs(100), written=lambda v, a, b: v == 3)
    assert rep.to_nvm == 99 and rep.forced_wd == 1 and eng.force_wd[3]
    assert rep.discarded == 1 + eng.cfg.max_dma_retries
    assert mem.channels()[3] == DRAM


def test_quota_and_priority_under_scarce_dram():
    mem = HybridMemory(64, (1024, 2048))
    for vp in range(64):
        mem.map_page(vp, mem.buddies[NVM].alloc_any())
    filler = [mem.buddies[DRAM].alloc_any() for _ in range(1024 - 6)]
    assert mem.free_pages(DRAM) == 6 and filler
    inp = inputs(64)
    inp.future[:10] = L
    inp.future[10:20] = H
    inp.hotness[:20] = np.arange(20)
    inp.page_class[:20] = PageClass.WD
    eng = MigrationEngine(mem, EngineConfig(rebalance_banks=False))
    rep = eng.run_cycle(0.0, inp)
    assert rep.quota == 6 and rep.to_dram <= rep.quota
    moved = set(np.flatnonzero(mem.channels() == DRAM).tolist())
    assert moved == set(range(14, 20))  # the six hottest WD_Freq_H pages


def test_watermark_keeps_plain_hot_pages_out_of_scarce_dram():
    mem = HybridMemory(8, (1024, 1024))
    for vp in range(8):
        mem.map_page(vp, mem.buddies[NVM].alloc_any())
    for _ in range(1024 - 40):
        mem.buddies[DRAM].alloc_any()
    inp = inputs(8, hot=True, hotness=80, cls=PageClass.RD)
    rep = MigrationEngine(mem, EngineConfig(rebalance_banks=False)).run_cycle(0.0, inp)
    assert rep.to_dram == 0  # 40 free pages <= 5% of 1024


def test_static_workload_settles():
    n = 300
    mem = machine(n, dram=1024, nvm=2048, on=NVM)
    inp = inputs(n)
    wd = np.arange(0, n, 3)
    inp.future[wd] = H
    inp.page_class[wd] = PageClass.WD
    inp.hotness[wd] = 60
    eng = MigrationEngine(mem)
    for k in range(3):
        eng.run_cycle(k * 20e9, inp)
    chans = mem.channels()
    assert (chans[wd] == DRAM).all()
    assert (np.delete(chans, wd) == NVM).all()


def test_bandwidth_balancer_rules():
    b = BandwidthBalancer(7e9, 64)
    assert b.pages_to_move(4e9, 1e9) == 0
    assert b.pages_to_move(7e9, 7e9) == 0
    assert b.pages_to_move(7e9, 1e9) == 64
    assert b.pages_to_move(7.2e9, 1e9) == 64
    assert b.pages_to_move(6.5e9, 1e9) == 0  # first drop stops the moves


def test_rebalance_bandwidth_prefers_hot_rd():
    b = BandwidthBalancer(7e9, 3)
    cls = np.array([PageClass.WD, PageClass.RD, PageClass.RD, PageClass.WD, PageClass.RD])
    hotness = np.array([99, 10, 50, 5, 30])
    got = rebalance_bandwidth(b, 7e9, 1e9, np.arange(5), cls, hotness)
    assert got == [2, 4, 1]
    assert rebalance_bandwidth(BandwidthBalancer(), 4e9, 1e9, np.arange(5), cls, hotness) == []


def test_eager_request_pins_pages():
    mem = machine(20)
    eng = MigrationEngine(mem)
    rep = eng.request_migration([1, 2, 3], DRAM, 0.0)
    assert rep.to_dram == 3 and rep.cpu_moves == 3
    eng.run_cycle(1e9, inputs(20))  # cold everywhere: pinned pages stay
    assert (mem.channels()[[1, 2, 3]] == DRAM).all()


def test_cycle_report_row():
    row = CycleReport(cycle=2, to_dram=3).to_row()
    assert tuple(row) == CycleReport.CSV_FIELDS and row["to_dram"] == 3


def test_engine_config_validation():
    with pytest.raises(ValueError):
        EngineConfig(mode="sometimes")
    with pytest.raises(ValueError):
        EngineConfig(dma_batch_min=100, dma_batch_max=10)
    assert US == 1000.0
