"""Timing, LLC, energy and wear model of the two-channel DRAM/NVM machine.

The per-access paths are numba kernels so that trace replay can run over
tens of millions of accesses; the classes below wrap the kernel state and
expose the same paths one access at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .address import LINE_SHIFT, LINES_PER_PAGE, N_BANKS, N_SLABS, PAGE_SHIFT

SECONDS_PER_YEAR = 365.25 * 24 * 3600
GIB = 1 << 30

# column layout of the per-channel parameter matrix handed to the kernels
P_RCD, P_RP, P_WR, P_XFER, P_RE, P_WE, P_NVM = range(7)


@dataclass(frozen=True)
class MediumParams:
    name: str
    t_rcd: float  # ns
    t_rp: float
    t_wr: float
    read_energy: float  # nJ per 64 B access
    write_energy: float
    standby_power: float  # W per GB
    endurance: float | None = None  # writes per 64 B block; None = unlimited

    def __post_init__(self):
        for f in ("t_rcd", "t_rp", "t_wr", "read_energy", "write_energy", "standby_power"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be non-negative")
        if self.endurance is not None and self.endurance <= 0:
            raise ValueError("endurance must be positive")

    @property
    def is_nvm(self) -> bool:
        return self.endurance is not None


DRAM = MediumParams("dram", 10.0, 10.0, 10.0, 51.2, 51.2, 1.0, None)
NVM = MediumParams("nvm", 20.0, 23.0, 160.0, 102.4, 512.0, 0.1, 1e6)


@dataclass(frozen=True)
class LlcConfig:
    enabled: bool = True
    capacity_bytes: int = 8 << 20
    line_bytes: int = 64
    associativity: int = 16

    @property
    def n_sets(self) -> int:
        return self.capacity_bytes // (self.line_bytes * self.associativity)

    @property
    def sets_per_slab(self) -> int:
        return self.n_sets // N_SLABS

    def __post_init__(self):
        if self.line_bytes != 1 << LINE_SHIFT:
            raise ValueError("only 64 B lines are modelled")
        sps = self.sets_per_slab
        if sps < 1 or sps & (sps - 1) or sps > 512:
            raise ValueError("sets per slab must be a power of two <= 512")
        if self.n_sets * self.associativity * self.line_bytes != self.capacity_bytes:
            raise ValueError("capacity must equal slabs * sets * ways * line")


def params_matrix(media: tuple[MediumParams, MediumParams], t_transfer: float) -> np.ndarray:
    m = np.zeros((2, 7), dtype=np.float64)
    for ch, p in enumerate(media):
        m[ch] = (p.t_rcd, p.t_rp, p.t_wr, t_transfer, p.read_energy, p.write_energy, float(p.is_nvm))
    return m


def row_of_addr(addr: int, channel_bit: int) -> int:
    return _row_of_addr(addr, channel_bit)


# --- kernels -----------------------------------------------------------------------


@numba.njit(cache=True)
def _row_of_addr(addr, channel_bit):
    a = addr & ~(1 << channel_bit)
    return ((a >> 22) << 5) | ((a >> 15) & 0x1F)


@numba.njit(cache=True)
def _bank_of_addr(addr):
    return (((addr >> 20) & 0x3) << 3) | ((addr >> 12) & 0x7)


@numba.njit(cache=True)
def _set_of_addr(addr, sets_per_slab):
    slab = (addr >> 15) & 0xF
    return slab * sets_per_slab + ((addr >> LINE_SHIFT) & (sets_per_slab - 1))


@numba.njit(cache=True)
def _llc_access(tags, dirty, stamps, clock, set_idx, line, is_write):
    """Return (hit, victim_line, victim_dirty); victim_line is -1 when none."""
    ways = tags.shape[1]
    clock[0] += 1
    now = clock[0]
    lru_way = 0
    lru_stamp = stamps[set_idx, 0]
    for w in range(ways):
        if tags[set_idx, w] == line:
            stamps[set_idx, w] = now
            if is_write:
                dirty[set_idx, w] = True
            return True, -1, False
        if tags[set_idx, w] == -1:
            # empty ways carry stamp -1 and win the LRU choice
            if lru_stamp != -1:
                lru_way = w
                lru_stamp = -1
        elif lru_stamp != -1 and stamps[set_idx, w] < lru_stamp:
            lru_way = w
            lru_stamp = stamps[set_idx, w]
    victim = tags[set_idx, lru_way]
    victim_dirty = dirty[set_idx, lru_way] if victim != -1 else False
    tags[set_idx, lru_way] = line
    dirty[set_idx, lru_way] = is_write
    stamps[set_idx, lru_way] = now
    return False, victim, victim_dirty


@numba.njit(cache=True)
def _llc_invalidate_page(tags, dirty, stamps, pfn, sets_per_slab):
    dropped = 0
    base = pfn << PAGE_SHIFT
    for i in range(LINES_PER_PAGE):
        addr = base + (i << LINE_SHIFT)
        s = _set_of_addr(addr, sets_per_slab)
        line = addr >> LINE_SHIFT
        for w in range(tags.shape[1]):
            if tags[s, w] == line:
                if dirty[s, w]:
                    dropped += 1
                tags[s, w] = -1
                dirty[s, w] = False
                stamps[s, w] = -1
    return dropped


@numba.njit(cache=True)
def _bank_access(params, open_row, busy, bus, ch, bank, row, is_write, t):
    wait = busy[ch, bank] - t
    if wait < 0.0:
        wait = 0.0
    start = t + wait
    core = 0.0
    cur = open_row[ch, bank]
    if cur != row:
        if cur != -1:
            core += params[ch, P_RP]
        core += params[ch, P_RCD]
        open_row[ch, bank] = row
    # data transfer needs the channel bus
    xfer_start = start + core
    slot_wait = bus[ch] - xfer_start
    if slot_wait < 0.0:
        slot_wait = 0.0
    xfer_end = xfer_start + slot_wait + params[ch, P_XFER]
    bus[ch] = xfer_end
    core += slot_wait + params[ch, P_XFER]
    if is_write:
        core += params[ch, P_WR]
    busy[ch, bank] = start + core
    return wait + core


@numba.njit(cache=True)
def _memory_access(
    params, open_row, busy, bus, counts, energy, bank_count, wear, wear_len, channel_bit,
    addr, is_write, t,
):
    ch = (addr >> channel_bit) & 1
    bank = _bank_of_addr(addr)
    row = _row_of_addr(addr, channel_bit)
    lat = _bank_access(params, open_row, busy, bus, ch, bank, row, is_write, t)
    bank_count[ch, bank] += 1
    if is_write:
        counts[ch, 1] += 1
        energy[ch] += params[ch, P_WE]
        blk = (addr & ~(1 << channel_bit)) >> LINE_SHIFT
        if blk < wear_len[ch]:
            # channel 1 counters follow channel 0 counters
            wear[blk + (wear_len[0] if ch == 1 else 0)] += 1
    else:
        counts[ch, 0] += 1
        energy[ch] += params[ch, P_RE]
    return ch, lat


@numba.njit(cache=True)
def _replay(
    times, vpages, offsets, writes, page_table, lock_until,
    llc_on, tags, dirty, stamps, clock, sets_per_slab, llc_stats,
    params, open_row, busy, bus, counts, energy, bank_count, lat_sum, lat_n,
    wear, wear_len, channel_bit, page_lat_sum, page_lat_n,
):
    # The helpers above are spelled out inline here: calls that pass arrays
    # cost more than the work they do at this access rate.
    ways = tags.shape[1]
    ch_mask = ~(1 << channel_bit)
    for i in range(times.shape[0]):
        vp = vpages[i]
        t = times[i]
        stall = lock_until[vp] - t
        if stall < 0.0:
            stall = 0.0
        t_eff = t + stall
        addr = (page_table[vp] << PAGE_SHIFT) | offsets[i]
        w = writes[i]
        seen = stall
        # up to two memory accesses: the demand access and a dirty victim
        n_mem = 1
        a0 = addr
        w0 = w
        a1 = 0
        if llc_on:
            s = ((addr >> 15) & 0xF) * sets_per_slab + ((addr >> LINE_SHIFT) & (sets_per_slab - 1))
            line = addr >> LINE_SHIFT
            clock[0] += 1
            now = clock[0]
            lru_way = 0
            lru_stamp = stamps[s, 0]
            hit = False
            for way in range(ways):
                tag = tags[s, way]
                if tag == line:
                    stamps[s, way] = now
                    if w:
                        dirty[s, way] = True
                    hit = True
                    break
                if tag == -1:
                    if lru_stamp != -1:
                        lru_way = way
                        lru_stamp = -1
                elif lru_stamp != -1 and stamps[s, way] < lru_stamp:
                    lru_way = way
                    lru_stamp = stamps[s, way]
            if hit:
                llc_stats[0] += 1
                n_mem = 0
            else:
                llc_stats[1] += 1
                victim = tags[s, lru_way]
                if victim != -1 and dirty[s, lru_way]:
                    n_mem = 2
                    a1 = victim << LINE_SHIFT
                tags[s, lru_way] = line
                dirty[s, lru_way] = w
                stamps[s, lru_way] = now
                w0 = False  # write-allocate: the fill is a read
        for k in range(n_mem):
            a = a0 if k == 0 else a1
            is_w = w0 if k == 0 else True
            ch = (a >> channel_bit) & 1
            bank = (((a >> 20) & 0x3) << 3) | ((a >> 12) & 0x7)
            local = a & ch_mask
            row = ((local >> 22) << 5) | ((local >> 15) & 0x1F)
            wait = busy[ch, bank] - t_eff
            if wait < 0.0:
                wait = 0.0
            start = t_eff + wait
            core = 0.0
            cur = open_row[ch, bank]
            if cur != row:
                if cur != -1:
                    core += params[ch, P_RP]
                core += params[ch, P_RCD]
                open_row[ch, bank] = row
            xfer_start = start + core
            slot_wait = bus[ch] - xfer_start
            if slot_wait < 0.0:
                slot_wait = 0.0
            bus[ch] = xfer_start + slot_wait + params[ch, P_XFER]
            core += slot_wait + params[ch, P_XFER]
            if is_w:
                core += params[ch, P_WR]
            busy[ch, bank] = start + core
            lat = wait + core
            bank_count[ch, bank] += 1
            if is_w:
                counts[ch, 1] += 1
                energy[ch] += params[ch, P_WE]
                blk = local >> LINE_SHIFT
                if blk < wear_len[ch]:
                    if ch == 1:
                        blk += wear_len[0]
                    wear[blk] += 1
            else:
                counts[ch, 0] += 1
                energy[ch] += params[ch, P_RE]
            lat_sum[ch] += lat
            lat_n[ch] += 1
            if k == 0:
                seen += lat
        page_lat_sum[vp] += seen
        page_lat_n[vp] += 1


# --- Python-facing wrappers -----------------------------------------------------------


@dataclass(frozen=True)
class CacheResult:
    hit: bool
    writeback_addr: int | None = None


class LastLevelCache:
    """Set-associative LRU LLC indexed by slab bits 15-18 and bits 6-14."""

    def __init__(self, cfg: LlcConfig = LlcConfig()):
        self.cfg = cfg
        self.sets_per_slab = cfg.sets_per_slab
        self.tags = np.full((cfg.n_sets, cfg.associativity), -1, dtype=np.int64)
        self.dirty = np.zeros((cfg.n_sets, cfg.associativity), dtype=np.bool_)
        self.stamps = np.full((cfg.n_sets, cfg.associativity), -1, dtype=np.int64)
        self.clock = np.zeros(1, dtype=np.int64)
        self.stats = np.zeros(2, dtype=np.int64)  # hits, misses

    def set_index(self, addr: int) -> int:
        return int(_set_of_addr(addr, self.sets_per_slab))

    def access(self, addr: int, is_write: bool = False) -> CacheResult:
        hit, victim, victim_dirty = _llc_access(
            self.tags, self.dirty, self.stamps, self.clock,
            self.set_index(addr), addr >> LINE_SHIFT, bool(is_write),
        )
        self.stats[0 if hit else 1] += 1
        wb = int(victim) << LINE_SHIFT if victim_dirty else None
        return CacheResult(bool(hit), wb)

    def invalidate_page(self, pfn: int) -> int:
        """Drop every line of a page; returns the number of dirty lines dropped."""
        return int(_llc_invalidate_page(self.tags, self.dirty, self.stamps, pfn, self.sets_per_slab))

    @property
    def hits(self) -> int:
        return int(self.stats[0])

    @property
    def misses(self) -> int:
        return int(self.stats[1])


class BankTimer:
    """Open-page bank state for both channels plus per-channel bus slots."""

    def __init__(self, media=(DRAM, NVM), t_transfer: float = 5.0):
        self.media = tuple(media)
        self.t_transfer = t_transfer
        self.params = params_matrix(self.media, t_transfer)
        self.open_row = np.full((2, N_BANKS), -1, dtype=np.int64)
        self.busy = np.zeros((2, N_BANKS), dtype=np.float64)
        self.bus = np.zeros(2, dtype=np.float64)

    def access(self, channel: int, bank: int, row: int, is_write: bool, t: float) -> float:
        if not 0 <= bank < N_BANKS:
            raise ValueError(f"bank {bank} outside [0, {N_BANKS})")
        if channel not in (0, 1):
            raise ValueError(f"channel {channel} is not 0 or 1")
        return float(
            _bank_access(
                self.params, self.open_row, self.busy, self.bus,
                channel, bank, row, bool(is_write), float(t),
            )
        )


class WearMap:
    """Write counters per 64 B block of the NVM-medium channels."""

    def __init__(self, channel_bit: int, pages_per_channel, media):
        self.channel_bit = channel_bit
        self.wear_len = np.array(
            [pages_per_channel[ch] * LINES_PER_PAGE if media[ch].is_nvm else 0 for ch in (0, 1)],
            dtype=np.int64,
        )
        self.counters = np.zeros(int(self.wear_len.sum()), dtype=np.int64)

    @property
    def block_count(self) -> int:
        return int(self.wear_len.sum())

    @property
    def total_writes(self) -> int:
        return int(self.counters.sum())

    def _index(self, addr: int) -> int | None:
        ch = (addr >> self.channel_bit) & 1
        blk = (addr & ~(1 << self.channel_bit)) >> LINE_SHIFT
        if blk >= self.wear_len[ch]:
            return None
        return blk + (int(self.wear_len[0]) if ch == 1 else 0)

    def record_wear(self, addr: int, is_write: bool) -> None:
        if not is_write:
            return
        idx = self._index(addr)
        if idx is not None:
            self.counters[idx] += 1

    def count(self, addr: int) -> int:
        idx = self._index(addr)
        return 0 if idx is None else int(self.counters[idx])

    def record_page_write(self, pfn: int) -> None:
        idx = self._index(pfn << PAGE_SHIFT)
        if idx is not None:
            self.counters[idx : idx + LINES_PER_PAGE] += 1


class MemoryModel:
    """LLC + bank timing + energy + wear for both channels."""

    def __init__(self, layout, pages_per_channel, media=(DRAM, NVM), llc: LlcConfig = LlcConfig(),
                 t_transfer: float = 5.0):
        self.layout = layout
        self.media = tuple(media)
        self.llc_cfg = llc
        self.llc = LastLevelCache(llc)
        self.banks = BankTimer(self.media, t_transfer)
        self.wear = WearMap(layout.channel_bit, pages_per_channel, self.media)
        self.counts = np.zeros((2, 2), dtype=np.int64)  # [channel, read/write]
        self.energy = np.zeros(2, dtype=np.float64)  # nJ, charged per access
        self.bank_count = np.zeros((2, N_BANKS), dtype=np.int64)
        self.lat_sum = np.zeros(2, dtype=np.float64)
        self.lat_n = np.zeros(2, dtype=np.int64)
        self.copy_counts = np.zeros((2, 2), dtype=np.int64)  # migration traffic subset

    def memory_access(self, addr: int, is_write: bool, t: float) -> float:
        """One access that reached memory (LLC miss, writeback or LLC bypass)."""
        ch, lat = _memory_access(
            self.banks.params, self.banks.open_row, self.banks.busy, self.banks.bus,
            self.counts, self.energy, self.bank_count, self.wear.counters,
            self.wear.wear_len, self.layout.channel_bit, addr, bool(is_write), float(t),
        )
        self.lat_sum[ch] += lat
        self.lat_n[ch] += 1
        return float(lat)

    def replay(self, times, vpages, offsets, writes, page_table, lock_until, page_lat_sum, page_lat_n):
        if len(times) == 0:
            return
        _replay(
            np.ascontiguousarray(times, dtype=np.float64),
            np.ascontiguousarray(vpages, dtype=np.int64),
            np.ascontiguousarray(offsets, dtype=np.int64),
            np.ascontiguousarray(writes, dtype=np.bool_),
            page_table, lock_until,
            self.llc_cfg.enabled, self.llc.tags, self.llc.dirty, self.llc.stamps, self.llc.clock,
            self.llc.sets_per_slab, self.llc.stats,
            self.banks.params, self.banks.open_row, self.banks.busy, self.banks.bus,
            self.counts, self.energy, self.bank_count, self.lat_sum, self.lat_n,
            self.wear.counters, self.wear.wear_len, self.layout.channel_bit,
            page_lat_sum, page_lat_n,
        )

    def charge_page_copy(self, src_pfn: int, dst_pfn: int) -> None:
        """Energy, counts and wear of copying one page (64 line reads + 64 line writes)."""
        cb = self.layout.channel_bit
        src_ch = (src_pfn >> (cb - PAGE_SHIFT)) & 1
        dst_ch = (dst_pfn >> (cb - PAGE_SHIFT)) & 1
        n = LINES_PER_PAGE
        self.counts[src_ch, 0] += n
        self.counts[dst_ch, 1] += n
        self.copy_counts[src_ch, 0] += n
        self.copy_counts[dst_ch, 1] += n
        self.energy[src_ch] += n * self.media[src_ch].read_energy
        self.energy[dst_ch] += n * self.media[dst_ch].write_energy
        if self.media[dst_ch].is_nvm:
            self.wear.record_page_write(dst_pfn)

    def invalidate_page(self, pfn: int) -> int:
        if not self.llc_cfg.enabled:
            return 0
        return self.llc.invalidate_page(pfn)

    def mean_latency(self, channel: int | None = None) -> float:
        if channel is None:
            n = int(self.lat_n.sum())
            return float(self.lat_sum.sum() / n) if n else 0.0
        n = int(self.lat_n[channel])
        return float(self.lat_sum[channel] / n) if n else 0.0


def cache_access(llc: LastLevelCache, addr: int, op: str = "R") -> CacheResult:
    return llc.access(addr, op.upper() == "W")


def bank_access(timer: BankTimer, channel: int, bank: int, row: int, op: str, time: float) -> float:
    return timer.access(channel, bank, row, op.upper() == "W", time)


def dynamic_energy(read_count: int, write_count: int, params: MediumParams) -> float:
    """nJ for memory-level (post-LLC) accesses."""
    return read_count * params.read_energy + write_count * params.write_energy


def standby_energy(capacity_gb: float, duration_s: float, params: MediumParams) -> float:
    """Joules."""
    if duration_s < 0:
        raise ValueError("duration must be non-negative")
    return capacity_gb * params.standby_power * duration_s


def lifetime_estimate(
    wear, elapsed_s: float, nvm_capacity_bytes: int, endurance: float = 1e6, leveling: float = 0.95
) -> float:
    """Years until the average block reaches ``endurance`` writes under uniform leveling.

    ``wear`` is a :class:`WearMap` or a total write count.  Returns ``math.inf``
    when no writes were recorded.
    """
    if elapsed_s <= 0:
        raise ValueError("elapsed time must be positive")
    total = wear.total_writes if isinstance(wear, WearMap) else int(wear)
    blocks = nvm_capacity_bytes // (1 << LINE_SHIFT)
    if total <= 0 or blocks <= 0:
        return math.inf
    rate = total / blocks / elapsed_s
    return leveling * endurance / rate / SECONDS_PER_YEAR
