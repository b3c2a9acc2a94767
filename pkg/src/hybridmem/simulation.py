"""Trace replay with profiling passes and periodic migration cycles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .address import N_BANKS, banks_of_colors, colors_of_pfns, compose_color, decompose_color
from .buddy import OutOfColorError, PageFrame
from .config import RunConfig
from .memsim import GIB, lifetime_estimate, standby_energy
from .migration import CycleInputs, CycleReport, MigrationEngine
from .placement import CapacityExhausted, PlacementTables
from .predictor import HistoryTable
from .sysmon import (
    PageClass,
    SysMon,
    bank_imbalance,
    hotness_mask,
    reuse_classes,
    wd_rd_classes,
)
from .system import HybridMemory
from .workload import Chunk, Trace, TraceError

PASS_FIELDS = (
    "pass", "time_s", "accesses", "llc_miss_rate",
    "ch0_reads", "ch0_writes", "ch1_reads", "ch1_writes",
    "ch0_bandwidth", "ch1_bandwidth",
    "ch0_hot_cold_rate", "ch1_hot_cold_rate", "ch0_wd_rd_rate", "ch1_wd_rd_rate",
    "bank_imbalance", "ch0_bank_imbalance", "ch1_bank_imbalance",
    "cycle", "to_dram", "to_nvm", "intra", "discarded", "engine_us",
)


class _Stream:
    """Time-ordered buffer over trace chunks with lookahead."""

    def __init__(self, trace: Trace):
        self._it = iter(trace.chunks())
        self._done = False
        self._parts: list[Chunk] = []
        self._buf: Chunk = _empty_chunk()
        self._last = -1
        self.n_pages = trace.n_pages

    @property
    def exhausted(self) -> bool:
        return self._done and len(self._buf[0]) == 0

    def _pull(self) -> bool:
        try:
            chunk = next(self._it)
        except StopIteration:
            self._done = True
            return False
        times = np.asarray(chunk[0], dtype=np.int64)
        if len(times):
            if times[0] < self._last or np.any(np.diff(times) < 0):
                raise TraceError("trace times go backwards")
            pages = np.asarray(chunk[1], dtype=np.int64)
            if pages.min() < 0 or pages.max() >= self.n_pages:
                raise TraceError(f"page id outside [0, {self.n_pages})")
            self._last = int(times[-1])
            self._buf = tuple(np.concatenate([a, np.asarray(b)]) for a, b in zip(self._buf, chunk))
        return True

    def _fill_to(self, t: float) -> None:
        while not self._done and (len(self._buf[0]) == 0 or self._buf[0][-1] < t):
            self._pull()

    def take_until(self, t_end: float) -> Chunk:
        self._fill_to(t_end)
        cut = int(np.searchsorted(self._buf[0], t_end, side="left"))
        out = tuple(a[:cut] for a in self._buf)
        self._buf = tuple(a[cut:] for a in self._buf)
        return out

    def written_between(self, vpages: np.ndarray, t0: float, t1: float) -> np.ndarray:
        """Which of ``vpages`` the trace writes in ``[t0, t1)``, without consuming records."""
        self._fill_to(t1)
        times, pages, _, writes = self._buf
        lo, hi = np.searchsorted(times, [t0, t1], side="left")
        written = pages[lo:hi][writes[lo:hi]]
        return np.isin(vpages, written)


def _empty_chunk() -> Chunk:
    z = np.zeros(0, dtype=np.int64)
    return (z, z, z, np.zeros(0, dtype=bool))


@dataclass
class SimulationResult:
    config: RunConfig
    metrics: dict
    rows: list[dict] = field(default_factory=list)
    cycles: list[CycleReport] = field(default_factory=list)
    mem: HybridMemory | None = None


class Simulator:
    def __init__(self, cfg: RunConfig, trace: Trace):
        self.cfg = cfg
        self.trace = trace
        n = trace.n_pages
        self.mem = HybridMemory(n, cfg.pages_per_channel, cfg.layout, cfg.media, cfg.llc, cfg.t_transfer)
        self.layout = cfg.layout
        self.mon = SysMon(n, cfg.pass_cfg, seed=cfg.seed)
        self.history = HistoryTable(n, cfg.predictor.window_len)
        self.engine = MigrationEngine(self.mem, cfg.engine, cfg.slab_plan) if cfg.migrates else None
        self._place_tables = PlacementTables()
        self.hot = np.zeros(n, dtype=bool)
        self.page_class = np.zeros(n, dtype=np.int8)
        self.hotness = np.zeros(n, dtype=np.int64)

    # --- first-touch placement ------------------------------------------------------------

    def _place(self, vpage: int) -> PageFrame:
        scheme = self.cfg.scheme
        if scheme in ("memos", "no-migration"):
            ch = self.layout.nvm_channel  # everything starts in NVM
            frame = self._place_colored(vpage, ch)
        else:
            ch = vpage % 2
            bank = (vpage // 2) % N_BANKS
            slab = (vpage // (2 * N_BANKS)) % 16
            frame = self._try(ch, compose_color(bank, slab))
        if frame is None:
            frame = self._any(ch)
        if frame is None:
            frame = self._any(1 - ch)
        if frame is None:
            raise MemoryError("both channels are full")
        return frame

    def _place_colored(self, vpage: int, ch: int) -> PageFrame | None:
        hint = int(self.trace.hints[vpage]) if vpage < len(self.trace.hints) else -1
        if hint >= 0:
            frame = self._try(ch, hint)
            if frame is not None:
                return frame
        sub = self.mem.buddies[ch]
        try:
            bank, slab = self._place_tables.pick(sub.free_capacity_matrix(), self.cfg.slab_plan)
        except CapacityExhausted:
            return None
        self._place_tables.record(bank, slab)
        return self._try(ch, compose_color(bank, slab))

    def _try(self, ch: int, color: int) -> PageFrame | None:
        bank, slab = decompose_color(color)
        try:
            return self.mem.buddies.alloc_resource(ch, slab, bank)
        except OutOfColorError:
            return None

    def _any(self, ch: int) -> PageFrame | None:
        try:
            return self.mem.buddies[ch].alloc_any()
        except OutOfColorError:
            return None

    def _first_touch(self, pages: np.ndarray) -> None:
        if len(pages) == 0:
            return
        pos = np.flatnonzero(self.mem.page_table[pages] < 0)
        if len(pos) == 0:
            return
        uniq, first = np.unique(pages[pos], return_index=True)
        # place in order of first appearance
        for vp in uniq[np.argsort(first, kind="stable")]:
            self.mem.map_page(int(vp), self._place(int(vp)))

    # --- main loop --------------------------------------------------------------------------

    def run(self) -> SimulationResult:
        cfg, mem, mon = self.cfg, self.mem, self.mon
        stream = _Stream(self.trace)
        duration = self.trace.duration_ns
        S = cfg.pass_cfg.samplings_per_pass
        t = 0
        next_cycle = cfg.engine.cycle_interval_s * 1e9
        rows: list[dict] = []
        accesses = 0
        while True:
            stream._fill_to(t)
            if t >= duration and stream.exhausted:
                break
            window = int(round(mon.interval_s * 1e9 / S))
            pass_end = t + window * S
            counts0 = mem.model.counts.copy()
            llc0 = mem.model.llc.stats.copy()
            times, pages, offsets, writes = stream.take_until(pass_end)
            self._first_touch(pages)
            mem.model.replay(times, pages, offsets, writes, mem.page_table, mem.lock_until,
                             mem.page_lat_sum, mem.page_lat_n)
            accesses += len(times)
            mon.begin_pass()
            cuts = np.searchsorted(times, t + window * np.arange(1, S + 1), side="left")
            mon.observe_windows(pages, writes, cuts)
            stats = mon.end_pass()
            t = pass_end
            report = self._end_of_pass(stats, t, stream, next_cycle, window * S / 1e9, counts0)
            if report is not None:
                next_cycle += cfg.engine.cycle_interval_s * 1e9
            rows.append(self._row(len(rows), t, len(times), counts0, llc0, window * S / 1e9, report))
        metrics = self._metrics(rows, t / 1e9, accesses)
        return SimulationResult(cfg, metrics, rows, list(self.engine.reports) if self.engine else [], mem)

    def _end_of_pass(self, stats, now_ns, stream, next_cycle, pass_s, counts0):
        sampled = stats.sampled
        hot = hotness_mask(stats, self.cfg.pass_cfg)
        cls = wd_rd_classes(stats.reads, stats.writes)
        self.hot[sampled] = hot[sampled]
        self.page_class[sampled] = cls[sampled]
        self.hotness[sampled] = stats.observed_accesses[sampled]
        wd_bits = self.page_class == PageClass.WD
        if self.engine is not None:
            wd_bits |= self.engine.force_wd
            self.engine.force_wd[:] = False
        idx = np.flatnonzero(sampled)
        self.history.push(idx, wd_bits[idx])
        if self.engine is None or now_ns < next_cycle:
            return None
        future, _ = self.history.predict(self.cfg.predictor)
        delta = self.mem.model.counts - counts0
        bw = 64.0 * delta.sum(axis=1) / pass_s
        dram, nvm = self.layout.dram_channel, self.layout.nvm_channel
        inputs = CycleInputs(
            future=future,
            hotness=self.hotness,
            hot=self.hot,
            page_class=self.page_class,
            reuse=reuse_classes(stats, self.cfg.pass_cfg),
            dram_bandwidth=float(bw[dram]),
            nvm_bandwidth=float(bw[nvm]),
        )
        return self.engine.run_cycle(float(now_ns), inputs, stream.written_between)

    # --- reporting -------------------------------------------------------------------------

    def _bank_load(self) -> np.ndarray:
        """Hot pages per (channel, bank)."""
        pt = self.mem.page_table
        mapped = pt >= 0
        sel = mapped & self.hot
        pfns = pt[sel]
        ch = self.mem.channels()[sel]
        banks = banks_of_colors(colors_of_pfns(pfns))
        return np.bincount(ch * N_BANKS + banks, minlength=2 * N_BANKS).reshape(2, N_BANKS)

    def _row(self, idx, now_ns, n_acc, counts0, llc0, pass_s, report) -> dict:
        mem = self.mem
        delta = mem.model.counts - counts0
        llc = mem.model.llc.stats - llc0
        chans = mem.channels()
        row = {"pass": idx, "time_s": now_ns / 1e9, "accesses": n_acc}
        n_llc = int(llc.sum())
        row["llc_miss_rate"] = float(llc[1] / n_llc) if n_llc else 0.0
        for ch in (0, 1):
            row[f"ch{ch}_reads"] = int(delta[ch, 0])
            row[f"ch{ch}_writes"] = int(delta[ch, 1])
            row[f"ch{ch}_bandwidth"] = 64.0 * float(delta[ch].sum()) / pass_s
            on = chans == ch
            n_hot = int(np.count_nonzero(on & self.hot))
            n_wd = int(np.count_nonzero(on & (self.page_class == PageClass.WD)))
            n_rd = int(np.count_nonzero(on & (self.page_class == PageClass.RD)))
            row[f"ch{ch}_hot_cold_rate"] = n_hot / max(int(on.sum()) - n_hot, 1)
            row[f"ch{ch}_wd_rd_rate"] = n_wd / max(n_rd, 1)
        load = self._bank_load()
        row["bank_imbalance"] = bank_imbalance(load.ravel())
        row["ch0_bank_imbalance"] = bank_imbalance(load[0])
        row["ch1_bank_imbalance"] = bank_imbalance(load[1])
        if report is None:
            row.update(cycle=-1, to_dram=0, to_nvm=0, intra=0, discarded=0, engine_us=0.0)
        else:
            row.update(cycle=report.cycle, to_dram=report.to_dram, to_nvm=report.to_nvm,
                       intra=report.intra, discarded=report.discarded, engine_us=report.engine_us)
        return row

    def _metrics(self, rows, elapsed_s, accesses) -> dict:
        cfg, model = self.cfg, self.mem.model
        counts = model.counts
        nvm_ch = [ch for ch in (0, 1) if cfg.media[ch].is_nvm]
        llc_hits, llc_misses = (int(x) for x in model.llc.stats)
        n_llc = llc_hits + llc_misses
        m: dict = {
            "scheme": cfg.scheme,
            "seed": cfg.seed,
            "passes": len(rows),
            "elapsed_s": elapsed_s,
            "accesses": accesses,
            "llc_hits": llc_hits,
            "llc_misses": llc_misses,
            "llc_miss_rate": llc_misses / n_llc if n_llc else 0.0,
            "mean_latency_ns": model.mean_latency(),
        }
        for ch in (0, 1):
            m[f"ch{ch}_medium"] = cfg.media[ch].name
            m[f"ch{ch}_reads"] = int(counts[ch, 0])
            m[f"ch{ch}_writes"] = int(counts[ch, 1])
            m[f"ch{ch}_copy_writes"] = int(model.copy_counts[ch, 1])
            m[f"ch{ch}_mean_latency_ns"] = model.mean_latency(ch)
            m[f"ch{ch}_dynamic_energy_mJ"] = float(model.energy[ch]) * 1e-6
            m[f"ch{ch}_bank_accesses"] = [int(x) for x in model.bank_count[ch]]
            for key in ("bandwidth", "hot_cold_rate", "wd_rd_rate"):
                vals = [r[f"ch{ch}_{key}"] for r in rows]
                m[f"ch{ch}_{key}_mean"] = float(np.mean(vals)) if vals else 0.0
        m["nvm_writes"] = int(sum(counts[ch, 1] for ch in nvm_ch))
        m["dynamic_energy_mJ"] = float(model.energy.sum()) * 1e-6
        m["standby_energy_J"] = float(sum(
            standby_energy(cfg.pages_per_channel[ch] * 4096 / GIB, elapsed_s, cfg.media[ch]) for ch in (0, 1)
        ))
        nvm_bytes = sum(cfg.pages_per_channel[ch] * 4096 for ch in nvm_ch)
        if nvm_ch and elapsed_s > 0:
            endurance = cfg.media[nvm_ch[0]].endurance
            life = lifetime_estimate(model.wear, elapsed_s, nvm_bytes, endurance)
        else:
            life = math.inf
        m["lifetime_years"] = None if math.isinf(life) else life
        m["lifetime_unbounded"] = math.isinf(life)
        m["bank_imbalance_initial"] = rows[0]["bank_imbalance"] if rows else 0.0
        m["bank_imbalance_final"] = rows[-1]["bank_imbalance"] if rows else 0.0
        for ch in (0, 1):
            m[f"ch{ch}_bank_imbalance_final"] = rows[-1][f"ch{ch}_bank_imbalance"] if rows else 0.0
        reports = self.engine.reports if self.engine else []
        m["migration_cycles"] = len(reports)
        for key in ("to_dram", "to_nvm", "intra", "discarded", "forced_wd", "cpu_moves",
                    "dma_batches", "bandwidth_moves"):
            m[f"migrated_{key}" if key in ("to_dram", "to_nvm", "intra") else key] = int(
                sum(getattr(r, key) for r in reports)
            )
        m["engine_us"] = float(sum(r.engine_us for r in reports))
        m["qos_group_latency_ns"] = self._group_latency()
        groups = [g for g in m["qos_group_latency_ns"] if g > 0]
        m["max_slowdown_proxy"] = max(groups) / min(groups) if groups else 1.0
        return m

    def _group_latency(self) -> list[float]:
        mem = self.mem
        n = mem.n_vpages
        if n == 0:
            return []
        g = min(self.cfg.qos_groups, n)
        ids = np.arange(n) * g // n
        s = np.bincount(ids, weights=mem.page_lat_sum, minlength=g)
        c = np.bincount(ids, weights=mem.page_lat_n, minlength=g)
        return [float(a / b) if b else 0.0 for a, b in zip(s, c)]


def run_simulation(cfg: RunConfig, trace: Trace | None = None) -> SimulationResult:
    """Replay the configured workload under ``cfg.scheme``."""
    if trace is None:
        trace = cfg.open_trace()
    return Simulator(cfg, trace).run()
