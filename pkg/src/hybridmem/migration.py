"""Periodic DRAM/NVM page migration.

Each cycle marks pages whose placement disagrees with their predicted
write-domain state, orders them, and moves them with either a locked
CPU copy or an unlocked DMA batch that discards pages dirtied mid-copy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .address import N_BANKS, banks_of_colors, colors_of_pfns
from .buddy import COLOR_GRID, OutOfColorError, PageFrame
from .placement import (
    CapacityExhausted,
    EnlargementTrigger,
    PolicyError,
    SlabPlan,
    compute_migration_quota,
    enlarge_reserved_slab,
    PlacementTables,
    target_slabs_for,
)
from .predictor import WdState
from .sysmon import PageClass, ReuseClass
from .system import HybridMemory

US = 1000.0  # ns per microsecond

# A callable ``(vpages, t0_ns, t1_ns) -> bool mask`` telling which pages are
# written by the workload inside a copy window.
WriteOracle = Callable[[np.ndarray, float, float], np.ndarray]


def no_interference(vpages: np.ndarray, t0: float, t1: float) -> np.ndarray:
    return np.zeros(len(vpages), dtype=bool)


class Direction(enum.IntEnum):
    TO_DRAM = 0
    TO_NVM = 1
    INTRA = 2


@dataclass(frozen=True)
class EngineConfig:
    cycle_interval_s: float = 20.0
    mode: str = "lazy"
    cpu_page_cost_us: float = 3.0
    dma_setup_cost_us: float = 5.0
    dma_page_cost_us: float = 1.0
    dma_batch_min: int = 64
    dma_batch_max: int = 512
    max_dma_retries: int = 3
    watermark_fraction: float = 0.05
    rebalance_banks: bool = True
    max_bank_moves: int = 256
    bandwidth_bound: float = 7e9
    bandwidth_step: int = 64
    enlarge_after_cycles: int = 2

    def __post_init__(self):
        if self.cycle_interval_s <= 0:
            raise ValueError("cycle_interval_s must be positive")
        if self.mode not in ("lazy", "eager"):
            raise ValueError(f"unknown migration mode {self.mode!r}")
        if self.dma_batch_min < 1 or self.dma_batch_max < self.dma_batch_min:
            raise ValueError("need 1 <= dma_batch_min <= dma_batch_max")
        if self.max_dma_retries < 0:
            raise ValueError("max_dma_retries must be >= 0")
        if not 0 <= self.watermark_fraction < 1:
            raise ValueError("watermark_fraction must be in [0, 1)")
        for name in ("cpu_page_cost_us", "dma_setup_cost_us", "dma_page_cost_us"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class MigrationCandidate:
    vpage: int
    pfn: int
    current_channel: int
    future: WdState
    hotness: int
    direction: Direction
    hot: bool = False
    page_class: PageClass = PageClass.COLD
    reuse: ReuseClass = ReuseClass.FREQ_TOUCHED
    dram_channel: int = 0

    def __post_init__(self):
        in_dram = self.current_channel == self.dram_channel
        if self.direction == Direction.TO_DRAM and in_dram:
            raise ValueError("to-DRAM candidate already resides in DRAM")
        if self.direction == Direction.TO_NVM and not in_dram:
            raise ValueError("to-NVM candidate already resides in NVM")

    @property
    def rank(self) -> int:
        """Priority class in the hotness list, lower first."""
        if self.future == WdState.WD_FREQ_H:
            return 0
        if self.future == WdState.WD_FREQ_L:
            return 1
        if self.page_class == PageClass.WD:
            return 2
        return 3


@dataclass
class CycleReport:
    cycle: int = 0
    time_s: float = 0.0
    quota: int = 0
    to_dram: int = 0
    to_nvm: int = 0
    intra: int = 0
    discarded: int = 0
    forced_wd: int = 0
    cpu_moves: int = 0
    dma_batches: int = 0
    bandwidth_moves: int = 0
    engine_us: float = 0.0
    plan: str = ""

    CSV_FIELDS = (
        "cycle", "time_s", "quota", "to_dram", "to_nvm", "intra", "discarded",
        "forced_wd", "cpu_moves", "dma_batches", "bandwidth_moves", "engine_us",
    )

    @property
    def migrated(self) -> int:
        return self.to_dram + self.to_nvm + self.intra

    def to_row(self) -> dict:
        return {f: getattr(self, f) for f in self.CSV_FIELDS}


@dataclass
class CycleInputs:
    """Per-page observations the engine acts on (all arrays indexed by virtual page)."""

    future: np.ndarray
    hotness: np.ndarray
    hot: np.ndarray
    page_class: np.ndarray
    reuse: np.ndarray
    dram_bandwidth: float = 0.0
    nvm_bandwidth: float = 0.0


# --- marking and ordering -------------------------------------------------------------


def mark_candidates(
    channels: np.ndarray,
    pfns: np.ndarray,
    inputs: CycleInputs,
    dram_channel: int = 0,
    exclude: np.ndarray | None = None,
) -> list[MigrationCandidate]:
    """Pages whose channel disagrees with their predicted state.

    NVM pages predicted write-domain, or hot now, go to DRAM.  DRAM pages
    predicted not write-domain, cold or read-domain this pass and not hot,
    go to NVM.  Unmapped pages (channel < 0) are skipped.
    """
    channels = np.asarray(channels)
    future = np.asarray(inputs.future)
    hot = np.asarray(inputs.hot, dtype=bool)
    cls = np.asarray(inputs.page_class)
    mapped = channels >= 0
    in_dram = mapped & (channels == dram_channel)
    in_nvm = mapped & ~in_dram
    wd_future = future != WdState.UN_WD
    up = in_nvm & (wd_future | hot)
    down = in_dram & ~wd_future & ((cls == PageClass.COLD) | (cls == PageClass.RD)) & ~hot
    if exclude is not None:
        up &= ~exclude
        down &= ~exclude
    out = []
    for direction, mask in ((Direction.TO_DRAM, up), (Direction.TO_NVM, down)):
        for vp in np.flatnonzero(mask):
            out.append(
                MigrationCandidate(
                    vpage=int(vp),
                    pfn=int(pfns[vp]),
                    current_channel=int(channels[vp]),
                    future=WdState(int(future[vp])),
                    hotness=int(inputs.hotness[vp]),
                    direction=direction,
                    hot=bool(hot[vp]),
                    page_class=PageClass(int(cls[vp])),
                    reuse=ReuseClass(int(inputs.reuse[vp])),
                    dram_channel=dram_channel,
                )
            )
    return out


def build_hotness_list(
    candidates,
) -> tuple[list[MigrationCandidate], list[MigrationCandidate]]:
    """Split into the to-DRAM hotness list and the to-NVM eviction list.

    The hotness list puts WD_Freq_H before WD_Freq_L before hot pages that
    are only hot, with write-domain ones ahead of read-domain ones; each
    class runs from hottest to coldest, ties by ascending pfn.  Evictions run
    coldest first.
    """
    up = [c for c in candidates if c.direction == Direction.TO_DRAM]
    down = [c for c in candidates if c.direction == Direction.TO_NVM]
    up.sort(key=lambda c: (c.rank, -c.hotness, c.pfn))
    down.sort(key=lambda c: (c.hotness, c.pfn))
    return up, down


# --- copy mechanisms --------------------------------------------------------------------


@dataclass
class DmaResult:
    migrated: list[int]
    discarded: list[int]
    cost_us: float
    remainder: list[int] = field(default_factory=list)


def _finish_move(mem: HybridMemory, vpage: int, dst_pfn: int) -> None:
    old = mem.remap(vpage, dst_pfn)
    mem.free_pfn(old)


def migrate_cpu(mem: HybridMemory, vpage: int, dst_pfn: int, now_ns: float,
                cost_us: float = 3.0) -> float:
    """Locked copy of one page; returns the cost in microseconds.

    Accesses to the page before ``now_ns + cost`` stall until the copy is done.
    """
    src = int(mem.page_table[vpage])
    if src < 0:
        raise ValueError(f"virtual page {vpage} is not resident")
    if src == dst_pfn:
        raise ValueError("source and destination frames are the same")
    if not mem.buddies.owner(dst_pfn).is_allocated(dst_pfn) or mem.owner_of(dst_pfn) is not None:
        raise RuntimeError(f"destination pfn {dst_pfn:#x} is not a reserved free frame")
    end = now_ns + cost_us * US
    mem.lock_until[vpage] = max(mem.lock_until[vpage], end)
    mem.model.charge_page_copy(src, dst_pfn)
    _finish_move(mem, vpage, dst_pfn)
    return cost_us


def migrate_dma_batch(
    mem: HybridMemory,
    vpages,
    dst_pfns,
    now_ns: float,
    written: WriteOracle = no_interference,
    setup_us: float = 5.0,
    page_us: float = 1.0,
) -> DmaResult:
    """Unlocked scatter-gather copy of a batch.

    Every page is copied; pages the workload writes inside the copy window
    keep their old mapping and their destination frame is released.  Pages
    beyond the supplied destinations are returned as the remainder.
    """
    vpages = [int(v) for v in vpages]
    dst_pfns = [int(d) for d in dst_pfns]
    if not vpages:
        raise ValueError("DMA batch needs at least one page")
    n = min(len(vpages), len(dst_pfns))
    batch, remainder = vpages[:n], vpages[n:]
    if n == 0:
        return DmaResult([], [], 0.0, remainder)
    cost = setup_us + page_us * n
    dirty = np.asarray(written(np.asarray(batch, dtype=np.int64), now_ns, now_ns + cost * US), bool)
    migrated, discarded = [], []
    for vp, dst, d in zip(batch, dst_pfns[:n], dirty):
        mem.model.charge_page_copy(int(mem.page_table[vp]), dst)
        if d:
            mem.free_pfn(dst)
            discarded.append(vp)
        else:
            _finish_move(mem, vp, dst)
            migrated.append(vp)
    return DmaResult(migrated, discarded, cost, remainder)


# --- bandwidth balancing ----------------------------------------------------------------


class BandwidthBalancer:
    """Moves DRAM pages to NVM while the DRAM channel sits at its bandwidth bound.

    Once started it keeps moving ``step`` pages per cycle until the DRAM
    bandwidth measured after a step falls below the value before it.
    """

    def __init__(self, bound: float = 7e9, step: int = 64):
        self.bound = bound
        self.step = step
        self.active = False
        self._prev: float | None = None

    def pages_to_move(self, dram_bw: float, nvm_bw: float) -> int:
        if nvm_bw >= self.bound:
            self.active = False
        elif self.active:
            if self._prev is not None and dram_bw < self._prev:
                self.active = False
        elif dram_bw >= self.bound:
            self.active = True
        self._prev = dram_bw
        return self.step if self.active else 0


def rebalance_bandwidth(
    balancer: BandwidthBalancer,
    dram_bw: float,
    nvm_bw: float,
    dram_pages: np.ndarray,
    page_class: np.ndarray,
    hotness: np.ndarray,
) -> list[int]:
    """Virtual pages to push from DRAM to NVM this cycle: hottest RD first, then WD."""
    n = balancer.pages_to_move(dram_bw, nvm_bw)
    if n == 0 or len(dram_pages) == 0:
        return []
    dram_pages = np.asarray(dram_pages, dtype=np.int64)
    rd = dram_pages[page_class[dram_pages] != PageClass.WD]
    wd = dram_pages[page_class[dram_pages] == PageClass.WD]
    order = []
    for group in (rd, wd):
        order.extend(group[np.lexsort((group, -hotness[group]))].tolist())
    return order[:n]


# --- the engine -------------------------------------------------------------------------


class MigrationEngine:
    """Runs migration cycles against a :class:`HybridMemory`."""

    def __init__(self, mem: HybridMemory, cfg: EngineConfig = EngineConfig(),
                 plan: SlabPlan = SlabPlan()):
        self.mem = mem
        self.cfg = cfg
        self.plan = plan
        self.dram = mem.layout.dram_channel
        self.nvm = mem.layout.nvm_channel
        self.cycle = 0
        self.reports: list[CycleReport] = []
        self.force_wd = np.zeros(mem.n_vpages, dtype=bool)
        self.pinned = np.zeros(mem.n_vpages, dtype=bool)
        self.parked = np.zeros(mem.n_vpages, dtype=bool)
        self.balancer = BandwidthBalancer(cfg.bandwidth_bound, cfg.bandwidth_step)
        self.trigger = EnlargementTrigger(cfg.enlarge_after_cycles)
        self._tables: dict[int, PlacementTables] = {}
        self._reuse: np.ndarray | None = None

    # placement of a single destination frame

    def _channel_tables(self, channel: int, accessed: np.ndarray) -> PlacementTables:
        # one increment per page accessed in the last pass
        on = (self.mem.channels() == channel) & accessed
        return PlacementTables.from_pfns(self.mem.page_table[on])

    def allocate_target(self, channel: int, reuse: ReuseClass, demand: dict | None = None) -> PageFrame:
        """Destination frame on ``channel`` chosen by cold bank / cold slab.

        Reserved-class pages that find their slabs full fall back to the
        general slabs and count towards the enlargement trigger.
        """
        sub = self.mem.buddies[channel]
        tables = self._tables.setdefault(channel, PlacementTables())
        fmc = sub.free_capacity_matrix()
        slabs = target_slabs_for(reuse, self.plan)
        try:
            bank, slab = tables.pick(fmc, self.plan, slabs)
        except CapacityExhausted:
            if demand is not None and reuse != ReuseClass.FREQ_TOUCHED:
                key = "thrash" if reuse == ReuseClass.THRASHING else "rare"
                demand[key] = demand.get(key, 0) + 1
            try:
                bank, slab = tables.pick(fmc, self.plan)
            except CapacityExhausted:
                frame = sub.alloc_any()
                tables.record(frame.bank, frame.slab)
                return frame
        frame = self.mem.buddies.alloc_resource(channel, slab, bank)
        tables.record(bank, slab)
        return frame

    # executing a list of moves

    def _execute(self, moves: list[tuple[int, int]], channel_of_dst: int, now_ns: float,
                 written: WriteOracle, report: CycleReport, allow_cpu: bool) -> tuple[float, list[int]]:
        """Copy ``(vpage, dst_pfn)`` pairs; returns (elapsed µs, pages that never moved)."""
        cfg = self.cfg
        t = now_ns
        elapsed = 0.0
        if allow_cpu and len(moves) < cfg.dma_batch_min:
            for vp, dst in moves:
                cost = migrate_cpu(self.mem, vp, dst, t, cfg.cpu_page_cost_us)
                t += cost * US
                elapsed += cost
                report.cpu_moves += 1
            return elapsed, []
        pending = list(moves)
        failed: list[int] = []
        for attempt in range(cfg.max_dma_retries + 1):
            retry: list[tuple[int, int]] = []
            for i in range(0, len(pending), cfg.dma_batch_max):
                chunk = pending[i : i + cfg.dma_batch_max]
                res = migrate_dma_batch(
                    self.mem, [v for v, _ in chunk], [d for _, d in chunk], t, written,
                    cfg.dma_setup_cost_us, cfg.dma_page_cost_us,
                )
                t += res.cost_us * US
                elapsed += res.cost_us
                report.dma_batches += 1
                report.discarded += len(res.discarded)
                if res.discarded:
                    # fresh destinations for the next iteration
                    for vp in res.discarded:
                        retry.append((vp, self._reserve_like(vp, channel_of_dst)))
            pending = [(vp, d) for vp, d in retry if d is not None]
            failed.extend(vp for vp, d in retry if d is None)
            if not pending:
                break
        else:
            # retries exhausted: release the reserved frames
            for vp, dst in pending:
                self.mem.free_pfn(dst)
                failed.append(vp)
        if allow_cpu and failed:
            still = []
            for vp in failed:
                dst = self._reserve_like(vp, channel_of_dst)
                if dst is None:
                    still.append(vp)
                    continue
                cost = migrate_cpu(self.mem, vp, dst, t, cfg.cpu_page_cost_us)
                t += cost * US
                elapsed += cost
                report.cpu_moves += 1
            failed = still
        return elapsed, failed

    def _reserve_like(self, vpage: int, channel: int) -> int | None:
        reuse = self._reuse[vpage] if self._reuse is not None else ReuseClass.FREQ_TOUCHED
        try:
            return self.allocate_target(channel, ReuseClass(int(reuse))).pfn
        except OutOfColorError:
            return None

    def _reserve_many(self, cands, channel: int, demand: dict) -> list[tuple[int, int]]:
        moves = []
        for c in cands:
            try:
                frame = self.allocate_target(channel, c.reuse, demand)
            except OutOfColorError:
                break
            moves.append((c.vpage, frame.pfn))
        return moves

    # one cycle

    def run_cycle(self, now_ns: float, inputs: CycleInputs,
                  written: WriteOracle = no_interference) -> CycleReport:
        cfg, mem = self.cfg, self.mem
        report = CycleReport(cycle=self.cycle, time_s=now_ns / 1e9)
        self.cycle += 1
        self._reuse = np.asarray(inputs.reuse)
        accessed = np.asarray(inputs.hotness) > 0
        for ch in (self.dram, self.nvm):
            self._tables[ch] = self._channel_tables(ch, accessed)
        channels = mem.channels()
        exclude = self.pinned | self.parked
        cands = mark_candidates(channels, mem.page_table, inputs, self.dram, exclude)
        up, down = build_hotness_list(cands)
        demand: dict[str, int] = {}
        t = now_ns
        dram_sub = mem.buddies[self.dram]
        quota = compute_migration_quota(dram_sub.free_capacity_matrix())
        report.quota = quota
        watermark = int(cfg.watermark_fraction * dram_sub.total_pages)

        # 1. evictions of pages that no longer belong in DRAM
        if down:
            moves = self._reserve_many(down, self.nvm, demand)
            us, _ = self._execute(moves, self.nvm, t, written, report, allow_cpu=False)
            t += us * US
            report.engine_us += us
            report.to_nvm += len(moves) - self._count_unmoved(moves, self.nvm, report)
        freed = dram_sub.free_pages - quota

        # 2. make room for write-domain demand by evicting hot read-domain pages
        wd_demand = sum(1 for c in up if c.rank < 3)
        room = quota + max(freed, 0)
        if wd_demand > room:
            victims = self._hot_rd_in_dram(inputs)[: wd_demand - room]
            if victims:
                moves = []
                for vp in victims:
                    try:
                        frame = self.allocate_target(self.nvm, ReuseClass(int(inputs.reuse[vp])))
                    except OutOfColorError:
                        break
                    moves.append((int(vp), frame.pfn))
                us, _ = self._execute(moves, self.nvm, t, written, report, allow_cpu=False)
                t += us * US
                report.engine_us += us
                report.to_nvm += len(moves) - self._count_unmoved(moves, self.nvm, report)

        # 3. promote the top of the hotness list within the quota
        budget = dram_sub.free_pages
        chosen = []
        for c in up:
            if budget <= 0:
                break
            if c.rank == 3 and budget <= watermark:
                continue
            chosen.append(c)
            budget -= 1
        if chosen:
            moves = self._reserve_many(chosen, self.dram, demand)
            us, failed = self._execute(moves, self.dram, t, written, report, allow_cpu=True)
            t += us * US
            report.engine_us += us
            report.to_dram += len(moves) - len(failed)

        # 4. bank rebalancing inside each channel
        if cfg.rebalance_banks:
            for ch in (self.dram, self.nvm):
                us = self._rebalance_banks(ch, inputs, t, written, report)
                t += us * US
                report.engine_us += us

        # 5. channel bandwidth balancing
        dram_pages = np.flatnonzero(mem.channels() == self.dram)
        to_park = rebalance_bandwidth(
            self.balancer, inputs.dram_bandwidth, inputs.nvm_bandwidth, dram_pages,
            np.asarray(inputs.page_class), np.asarray(inputs.hotness),
        )
        if not self.balancer.active:
            self.parked[:] = False
        if to_park:
            moves = []
            for vp in to_park:
                try:
                    moves.append((vp, self.allocate_target(self.nvm, ReuseClass(int(inputs.reuse[vp]))).pfn))
                except OutOfColorError:
                    break
            us, failed = self._execute(moves, self.nvm, t, written, report, allow_cpu=True)
            t += us * US
            report.engine_us += us
            report.bandwidth_moves += len(moves) - len(failed)
            self.parked[[vp for vp, _ in moves]] = True

        self._maybe_enlarge(demand, report)
        report.plan = f"thrash={sorted(self.plan.thrash_slabs)} rare={sorted(self.plan.rare_slabs)}"
        self.reports.append(report)
        return report

    def _count_unmoved(self, moves, channel: int, report: CycleReport) -> int:
        """Pages still off ``channel`` kept getting dirtied mid-copy: treat them as WD."""
        chans = self.mem.channels()
        unmoved = [vp for vp, _ in moves if chans[vp] != channel]
        self.force_wd[unmoved] = True
        report.forced_wd += len(unmoved)
        return len(unmoved)

    def _hot_rd_in_dram(self, inputs: CycleInputs) -> list[int]:
        chans = self.mem.channels()
        hot = np.asarray(inputs.hot, bool)
        cls = np.asarray(inputs.page_class)
        fut = np.asarray(inputs.future)
        mask = (chans == self.dram) & hot & (cls != PageClass.WD) & (fut == WdState.UN_WD)
        mask &= ~self.pinned
        idx = np.flatnonzero(mask)
        hotness = np.asarray(inputs.hotness)[idx]
        return idx[np.lexsort((idx, hotness))].tolist()

    def _rebalance_banks(self, channel: int, inputs: CycleInputs, now_ns: float,
                         written: WriteOracle, report: CycleReport) -> float:
        """Spread hot pages from overloaded banks to the coldest banks of the channel."""
        mem = self.mem
        hot = np.asarray(inputs.hot, bool)
        on = np.flatnonzero((mem.channels() == channel) & hot & ~self.pinned)
        if len(on) < 2:
            return 0.0
        banks = banks_of_colors(colors_of_pfns(mem.page_table[on]))
        load = np.bincount(banks, minlength=N_BANKS).astype(np.int64)
        hotness = np.asarray(inputs.hotness)
        # hottest pages of each bank leave first so the bank's load drops fastest
        order = np.lexsort((on, -hotness[on]))
        by_bank: dict[int, list[int]] = {b: [] for b in range(N_BANKS)}
        for i in order:
            by_bank[int(banks[i])].append(int(on[i]))
        cache_freq = self._tables.get(channel, PlacementTables()).tables.cache_freq.copy()
        sub = mem.buddies[channel]
        open_banks = np.ones(N_BANKS, dtype=bool)
        moves = []
        while len(moves) < self.cfg.max_bank_moves and open_banks.any():
            src = int(np.argmax(load))
            dst = int(np.flatnonzero(open_banks)[np.argmin(load[open_banks])])
            if load[src] - load[dst] <= 1 or not by_bank[src]:
                break
            vp = by_bank[src][0]
            slabs = np.array(target_slabs_for(ReuseClass(int(inputs.reuse[vp])), self.plan))
            free = sub.free_capacity_matrix()[dst, slabs] > 0
            if not free.any():
                open_banks[dst] = False
                continue
            cand = slabs[free]
            slab = int(cand[np.argmin(cache_freq[cand])])
            frame = mem.buddies.alloc_resource(channel, slab, dst)
            by_bank[src].pop(0)
            moves.append((vp, frame.pfn))
            load[src] -= 1
            load[dst] += 1
            cache_freq[slab] += 1
        if not moves:
            return 0.0
        us, failed = self._execute(moves, channel, now_ns, written, report, allow_cpu=True)
        report.intra += len(moves) - len(failed)
        return us

    def _maybe_enlarge(self, demand: dict, report: CycleReport) -> None:
        dram = self.mem.buddies[self.dram]
        for which, slabs in (("thrash", self.plan.thrash_slabs), ("rare", self.plan.rare_slabs)):
            free = int(sum(dram.free_by_color[COLOR_GRID[:, s]].sum() for s in slabs))
            if self.trigger.observe(which, demand.get(which, 0), free):
                try:
                    self.plan = enlarge_reserved_slab(self.plan, which)
                except PolicyError:
                    pass

    # eager requests

    def request_migration(self, vpages, channel: int, now_ns: float,
                          written: WriteOracle = no_interference) -> CycleReport:
        """Move pinned pages to ``channel`` right away and keep them there."""
        report = CycleReport(cycle=-1, time_s=now_ns / 1e9)
        vpages = [int(v) for v in vpages]
        self.pinned[vpages] = True
        chans = self.mem.channels()
        todo = [v for v in vpages if chans[v] >= 0 and chans[v] != channel]
        moves = []
        for vp in todo:
            try:
                moves.append((vp, self.allocate_target(channel, ReuseClass.FREQ_TOUCHED).pfn))
            except OutOfColorError:
                break
        if moves:
            us, failed = self._execute(moves, channel, now_ns, written, report, allow_cpu=True)
            report.engine_us = us
            moved = len(moves) - len(failed)
            if channel == self.dram:
                report.to_dram = moved
            else:
                report.to_nvm = moved
        self.reports.append(report)
        return report
