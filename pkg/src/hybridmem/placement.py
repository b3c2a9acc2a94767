"""Channel, bank and cache-slab selection for new and migrating pages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .address import N_BANKS, N_SLABS, PAGE_SIZE, AddressLayout, banks_of_colors, colors_of_pfns, slabs_of_colors
from .sysmon import FreqTables, PageClass, ReuseClass


class PolicyError(RuntimeError):
    """A slab-plan change would break the plan's invariants."""


class CapacityExhausted(MemoryError):
    """No (bank, slab) row group has free pages."""


@dataclass(frozen=True)
class SlabPlan:
    thrash_slabs: frozenset[int] = frozenset({0})
    rare_slabs: frozenset[int] = frozenset({15})
    min_general: int = 2

    def __post_init__(self):
        object.__setattr__(self, "thrash_slabs", frozenset(self.thrash_slabs))
        object.__setattr__(self, "rare_slabs", frozenset(self.rare_slabs))
        if not self.thrash_slabs or not self.rare_slabs:
            raise PolicyError("reserved slab sets must be non-empty")
        if self.thrash_slabs & self.rare_slabs:
            raise PolicyError("thrash and rare slabs overlap")
        everything = self.thrash_slabs | self.rare_slabs
        if not everything <= set(range(N_SLABS)):
            raise PolicyError("slab ids must be in [0, 16)")
        if len(self.general_slabs) < 1:
            raise PolicyError("general slabs must be non-empty")

    @property
    def general_slabs(self) -> frozenset[int]:
        return frozenset(range(N_SLABS)) - self.thrash_slabs - self.rare_slabs

    @property
    def reserved(self) -> frozenset[int]:
        return self.thrash_slabs | self.rare_slabs


def initial_channel_for(hot: bool, page_class: PageClass, layout: AddressLayout) -> int:
    """Channel principles: write-domain pages to DRAM, read-domain and cold pages to NVM.

    Hot read-domain pages stay on NVM here; the migration engine may still
    pull them into DRAM while DRAM has headroom.
    """
    if page_class == PageClass.WD:
        return layout.dram_channel
    return layout.nvm_channel


def target_slabs_for(reuse: ReuseClass, plan: SlabPlan) -> tuple[int, ...]:
    """Slabs a page of the given reuse class may occupy, in id order."""
    if reuse == ReuseClass.THRASHING:
        return tuple(sorted(plan.thrash_slabs))
    if reuse == ReuseClass.RARELY_TOUCHED:
        return tuple(sorted(plan.rare_slabs))
    return tuple(sorted(plan.general_slabs))


def get_cold_bank_slab(
    tables: FreqTables,
    fmc: np.ndarray,
    plan: SlabPlan = SlabPlan(),
    slabs=None,
) -> tuple[int, int]:
    """Coldest bank, then the coldest slab in it whose rows still have free pages.

    Candidate slabs default to the plan's general slabs.  Ties break towards
    the lower id.  When every candidate slab of the coldest bank is full the
    next-coldest bank is tried.
    """
    candidates = np.array(sorted(plan.general_slabs if slabs is None else slabs), dtype=np.int64)
    if candidates.size == 0:
        raise CapacityExhausted("no candidate slabs")
    bank_order = np.argsort(tables.bank_freq, kind="stable")
    slab_order = candidates[np.argsort(tables.cache_freq[candidates], kind="stable")]
    for bank in bank_order:
        free = fmc[bank, slab_order] > 0
        if free.any():
            return int(bank), int(slab_order[np.argmax(free)])
    raise CapacityExhausted("no free row group among candidate slabs")


class PlacementTables:
    """Frequency tables for a run of placements made before the next pass.

    Bumping both tables once per page makes the two argmins advance in
    lockstep, so placements would pair banks and slabs along a diagonal and
    leave half the row groups (and LLC sets) unused.  The slab choice is
    therefore keyed on pages already in the cold bank's row groups, with
    the slab table breaking ties.
    """

    def __init__(self, tables: FreqTables | None = None, counts: np.ndarray | None = None):
        self.tables = tables if tables is not None else FreqTables()
        self.counts = np.zeros((N_BANKS, N_SLABS), dtype=np.int64) if counts is None else counts

    @classmethod
    def from_pfns(cls, pfns) -> "PlacementTables":
        colors = colors_of_pfns(np.asarray(pfns, dtype=np.int64))
        banks, slabs = banks_of_colors(colors), slabs_of_colors(colors)
        counts = np.zeros((N_BANKS, N_SLABS), dtype=np.int64)
        np.add.at(counts, (banks, slabs), 1)
        return cls(FreqTables(counts.sum(axis=1), counts.sum(axis=0)), counts)

    def pick(self, fmc: np.ndarray, plan: SlabPlan, slabs=None) -> tuple[int, int]:
        cold = int(np.argmin(self.tables.bank_freq))
        scale = int(self.tables.cache_freq.max()) + 1
        key = FreqTables(self.tables.bank_freq, self.counts[cold] * scale + self.tables.cache_freq)
        return get_cold_bank_slab(key, fmc, plan, slabs)

    def record(self, bank: int, slab: int) -> None:
        self.tables.bank_freq[bank] += 1
        self.tables.cache_freq[slab] += 1
        self.counts[bank, slab] += 1


def enlarge_reserved_slab(plan: SlabPlan, which: str) -> SlabPlan:
    """Move the general slab adjacent to a reserved set into it.

    The thrash set grows upwards from slab 0, the rare set downwards from 15.
    """
    general = plan.general_slabs
    if len(general) <= plan.min_general:
        raise PolicyError(f"general slabs {sorted(general)} cannot shrink further")
    if which == "thrash":
        nxt = max(plan.thrash_slabs) + 1
        if nxt not in general:
            raise PolicyError("thrash slabs cannot grow")
        return SlabPlan(plan.thrash_slabs | {nxt}, plan.rare_slabs, plan.min_general)
    if which == "rare":
        nxt = min(plan.rare_slabs) - 1
        if nxt not in general:
            raise PolicyError("rare slabs cannot grow")
        return SlabPlan(plan.thrash_slabs, plan.rare_slabs | {nxt}, plan.min_general)
    raise ValueError(f"unknown reserved set {which!r}")


class EnlargementTrigger:
    """Counts consecutive cycles in which reserved-class demand exceeded supply."""

    def __init__(self, cycles: int = 2):
        self.cycles = cycles
        self.run = {"thrash": 0, "rare": 0}

    def observe(self, which: str, demand: int, free_pages: int) -> bool:
        if demand > free_pages:
            self.run[which] += 1
        else:
            self.run[which] = 0
        if self.run[which] >= self.cycles:
            self.run[which] = 0
            return True
        return False


def compute_migration_quota(fmc: np.ndarray) -> int:
    """Pages that still fit in the destination channel."""
    return int(np.asarray(fmc, dtype=np.int64).sum() // PAGE_SIZE)
