"""Sampling profiler over emulated PTE access/dirty bits.

A pass is ``samplings_per_pass`` clear-and-check reads of the bits.  From
the per-page counts the profiler derives hotness, write/read domain,
reuse class and the per-bank / per-slab frequency tables.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numba
import numpy as np

from .address import N_BANKS, N_SLABS, LINE_SIZE, banks_of_colors, colors_of_pfns, slabs_of_colors


class PageClass(enum.IntEnum):
    COLD = 0
    RD = 1
    WD = 2


class ReuseClass(enum.IntEnum):
    FREQ_TOUCHED = 0
    THRASHING = 1
    RARELY_TOUCHED = 2


@dataclass(frozen=True)
class PassConfig:
    samplings_per_pass: int = 100
    sampling_mode: str = "full"  # or "random"
    random_fraction: float = 0.1
    pass_interval_s: float = 1.0
    interval_growth: float = 1.0
    stable_passes: int = 3
    stable_fraction: float = 0.99
    hot_threshold: float = 0.5
    rare_fraction: float = 0.1
    thrash_mean: float = 2.0
    thrash_std: float = 1.0

    def __post_init__(self):
        if self.samplings_per_pass < 1:
            raise ValueError("samplings_per_pass must be >= 1")
        if self.sampling_mode not in ("full", "random"):
            raise ValueError(f"unknown sampling_mode {self.sampling_mode!r}")
        if not 0 < self.random_fraction <= 1:
            raise ValueError("random_fraction must be in (0, 1]")
        if self.pass_interval_s <= 0:
            raise ValueError("pass_interval_s must be positive")
        if self.interval_growth < 1:
            raise ValueError("interval_growth must be >= 1")


@dataclass
class PassStats:
    """Per-page counters of one pass.  Unsampled pages have ``sampled == False``."""

    samplings: int
    sampled: np.ndarray
    observed_accesses: np.ndarray
    observed_writes: np.ndarray
    gap_count: np.ndarray
    gap_sum: np.ndarray
    gap_sumsq: np.ndarray

    @property
    def n_pages(self) -> int:
        return len(self.sampled)

    @property
    def reads(self) -> np.ndarray:
        return self.observed_accesses - self.observed_writes

    @property
    def writes(self) -> np.ndarray:
        return self.observed_writes

    @property
    def accessed(self) -> np.ndarray:
        return self.observed_accesses > 0

    @classmethod
    def empty(cls, samplings: int = 0) -> "PassStats":
        z = np.zeros(0, dtype=np.int64)
        return cls(samplings, np.zeros(0, bool), z, z, z, z.astype(float), z.astype(float))


class PageBits:
    """Emulated access/dirty bits with clear-and-check reads."""

    def __init__(self, n_pages: int):
        self.access = np.zeros(n_pages, dtype=bool)
        self.dirty = np.zeros(n_pages, dtype=bool)

    def touch(self, pages, writes=None) -> None:
        pages = np.asarray(pages, dtype=np.int64)
        self.access[pages] = True
        if writes is not None:
            self.dirty[pages[np.asarray(writes, dtype=bool)]] = True

    def read_and_clear(self) -> tuple[np.ndarray, np.ndarray]:
        acc, dirty = self.access.copy(), self.dirty.copy()
        self.access[:] = False
        self.dirty[:] = False
        return acc, dirty


class SysMon:
    """Accumulates samplings into pass statistics.

    The caller drives it: ``begin_pass()``, then ``sample(bits)`` once per
    sampling window, then ``end_pass()``.
    """

    def __init__(self, n_pages: int, cfg: PassConfig = PassConfig(), seed: int = 0):
        self.n_pages = n_pages
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.interval_s = cfg.pass_interval_s
        self._stable_run = 0
        self._prev_classes: np.ndarray | None = None
        self._sampled = np.ones(n_pages, dtype=bool)
        self._reset()

    def _reset(self):
        n = self.n_pages
        self._k = 0
        self._acc = np.zeros(n, dtype=np.int64)
        self._wr = np.zeros(n, dtype=np.int64)
        self._last = np.full(n, -1, dtype=np.int64)
        self._gcount = np.zeros(n, dtype=np.int64)
        self._gsum = np.zeros(n, dtype=np.float64)
        self._gsumsq = np.zeros(n, dtype=np.float64)

    @property
    def sampling_index(self) -> int:
        return self._k

    @property
    def window_s(self) -> float:
        return self.interval_s / self.cfg.samplings_per_pass

    def begin_pass(self) -> None:
        self._reset()
        if self.cfg.sampling_mode == "random":
            self._sampled = self.rng.random(self.n_pages) < self.cfg.random_fraction
        else:
            self._sampled = np.ones(self.n_pages, dtype=bool)

    def sample(self, bits: PageBits) -> None:
        acc, dirty = bits.read_and_clear()
        self.observe(np.flatnonzero(acc), np.flatnonzero(dirty))

    def observe(self, accessed: np.ndarray, dirtied: np.ndarray) -> None:
        """Record one sampling given the indices whose access/dirty bits were set.

        Pages outside this pass's sample are ignored.
        """
        accessed = np.asarray(accessed, dtype=np.int64)
        dirtied = np.asarray(dirtied, dtype=np.int64)
        accessed = accessed[self._sampled[accessed]]
        dirtied = dirtied[self._sampled[dirtied]]
        k = self._k
        self._acc[accessed] += 1
        self._wr[dirtied] += 1
        last = self._last[accessed]
        seen = last >= 0
        gaps = (k - last[seen]).astype(np.float64)
        idx = accessed[seen]
        self._gcount[idx] += 1
        self._gsum[idx] += gaps
        self._gsumsq[idx] += gaps * gaps
        self._last[accessed] = k
        self._k += 1

    def observe_windows(self, pages: np.ndarray, writes: np.ndarray, cuts: np.ndarray) -> None:
        """Record consecutive samplings from an access stream.

        ``cuts[i]`` is the end (exclusive) of window i in ``pages``; the result
        matches calling :meth:`observe` once per window with its unique pages.
        """
        self._k = _observe_windows(
            np.asarray(pages, dtype=np.int64), np.asarray(writes, dtype=np.bool_),
            np.asarray(cuts, dtype=np.int64), self._k, self._sampled, self._acc, self._wr,
            self._last, self._gcount, self._gsum, self._gsumsq,
        )

    def end_pass(self) -> PassStats:
        stats = PassStats(
            samplings=self._k,
            sampled=self._sampled.copy(),
            observed_accesses=self._acc,
            observed_writes=self._wr,
            gap_count=self._gcount,
            gap_sum=self._gsum,
            gap_sumsq=self._gsumsq,
        )
        self._update_interval(stats)
        return stats

    def _update_interval(self, stats: PassStats) -> None:
        if self.cfg.interval_growth == 1.0:
            return
        classes = hotness_mask(stats, self.cfg).astype(np.int8) * 3 + wd_rd_classes(
            stats.reads, stats.writes
        )
        both = stats.sampled
        if self._prev_classes is not None and both.any():
            same = np.mean(classes[both] == self._prev_classes[both])
            self._stable_run = self._stable_run + 1 if same >= self.cfg.stable_fraction else 0
        self._prev_classes = classes
        if self._stable_run >= self.cfg.stable_passes:
            self.interval_s *= self.cfg.interval_growth
            self._stable_run = 0


def sample_pass(bits: PageBits, cfg: PassConfig, workload=None, seed: int = 0) -> PassStats:
    """Run one full pass against ``bits``.

    ``workload(k, bits)``, if given, is called before sampling ``k`` to touch
    the bits for that sampling window.
    """
    n = len(bits.access)
    if n == 0:
        return PassStats.empty(cfg.samplings_per_pass)
    mon = SysMon(n, cfg, seed)
    mon.begin_pass()
    for k in range(cfg.samplings_per_pass):
        if workload is not None:
            workload(k, bits)
        mon.sample(bits)
    return mon.end_pass()


# --- classification -----------------------------------------------------------


def is_hot(observed_accesses: int, samplings: int, cfg: PassConfig = PassConfig()) -> bool:
    return observed_accesses > cfg.hot_threshold * samplings


def classify_hotness(stats: PassStats, cfg: PassConfig = PassConfig()) -> np.ndarray:
    """Boolean hot mask per page."""
    return hotness_mask(stats, cfg)


def hotness_mask(stats: PassStats, cfg: PassConfig) -> np.ndarray:
    return stats.observed_accesses > cfg.hot_threshold * stats.samplings


def classify_wd_rd(reads: int, writes: int) -> PageClass:
    """Writes weigh double: WD when 2*writes >= reads."""
    if reads == 0 and writes == 0:
        return PageClass.COLD
    if reads > 2 * writes:
        return PageClass.RD
    return PageClass.WD


def wd_rd_classes(reads: np.ndarray, writes: np.ndarray) -> np.ndarray:
    reads = np.asarray(reads)
    writes = np.asarray(writes)
    out = np.where(reads > 2 * writes, PageClass.RD, PageClass.WD).astype(np.int8)
    out[(reads == 0) & (writes == 0)] = PageClass.COLD
    return out


def _reuse_rule(accesses, samplings, gap_mean, gap_std, cfg: PassConfig):
    rare = accesses < cfg.rare_fraction * samplings
    thrash = (gap_mean <= cfg.thrash_mean) & (gap_std <= cfg.thrash_std)
    return np.where(
        rare,
        ReuseClass.RARELY_TOUCHED,
        np.where(thrash, ReuseClass.THRASHING, ReuseClass.FREQ_TOUCHED),
    ).astype(np.int8)


def classify_reuse(
    gaps, cfg: PassConfig = PassConfig(), accesses: int | None = None
) -> ReuseClass:
    """Reuse class from one pass's inter-access gaps (in sampling units).

    ``accesses`` defaults to ``len(gaps) + 1`` (each gap joins two accesses).
    """
    gaps = np.asarray(gaps, dtype=np.float64)
    if accesses is None:
        accesses = len(gaps) + 1 if len(gaps) else 0
    if len(gaps):
        mean, std = gaps.mean(), gaps.std()
    else:
        mean = std = np.inf
    return ReuseClass(int(_reuse_rule(accesses, cfg.samplings_per_pass, mean, std, cfg)))


def reuse_classes(stats: PassStats, cfg: PassConfig = PassConfig()) -> np.ndarray:
    n = np.maximum(stats.gap_count, 1)
    mean = np.where(stats.gap_count > 0, stats.gap_sum / n, np.inf)
    var = np.maximum(stats.gap_sumsq / n - (stats.gap_sum / n) ** 2, 0.0)
    std = np.where(stats.gap_count > 0, np.sqrt(var), np.inf)
    return _reuse_rule(stats.observed_accesses, stats.samplings, mean, std, cfg)


# --- utilisation tables ---------------------------------------------------------


@dataclass
class FreqTables:
    bank_freq: np.ndarray = field(default_factory=lambda: np.zeros(N_BANKS, dtype=np.int64))
    cache_freq: np.ndarray = field(default_factory=lambda: np.zeros(N_SLABS, dtype=np.int64))

    def copy(self) -> "FreqTables":
        return FreqTables(self.bank_freq.copy(), self.cache_freq.copy())


def build_freq_tables(pfns, accessed) -> FreqTables:
    """One increment per accessed page, attributed to its bank and slab."""
    pfns = np.asarray(pfns, dtype=np.int64)
    accessed = np.asarray(accessed, dtype=bool)
    colors = colors_of_pfns(pfns[accessed])
    return FreqTables(
        np.bincount(banks_of_colors(colors), minlength=N_BANKS).astype(np.int64),
        np.bincount(slabs_of_colors(colors), minlength=N_SLABS).astype(np.int64),
    )


def bank_imbalance(bank_freq) -> float:
    """Population standard deviation of the per-bank counts."""
    arr = np.asarray(bank_freq, dtype=np.float64)
    if arr.size == 0:
        return 0.0
    return float(arr.std())


def channel_bandwidth(transfers: int, duration_s: float, line_bytes: int = LINE_SIZE) -> float:
    """Bytes per second for ``transfers`` line-sized memory accesses."""
    if duration_s <= 0:
        raise ValueError(f"window duration must be positive, got {duration_s}")
    return line_bytes * transfers / duration_s


@numba.njit(cache=True)
def _observe_windows(pages, writes, cuts, k, sampled, acc, wr, last, gcount, gsum, gsumsq):
    # access and dirty bits each count once per window
    wlast = np.full(acc.shape[0], -1, np.int64)
    lo = 0
    for hi in cuts:
        for i in range(lo, hi):
            p = pages[i]
            if not sampled[p]:
                continue
            if last[p] != k:
                acc[p] += 1
                if last[p] >= 0:
                    gap = float(k - last[p])
                    gcount[p] += 1
                    gsum[p] += gap
                    gsumsq[p] += gap * gap
                last[p] = k
            if writes[i] and wlast[p] != k:
                wr[p] += 1
                wlast[p] = k
        lo = hi
        k += 1
    return k
