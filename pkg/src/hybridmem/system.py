"""Mutable machine state shared by the simulator and the migration engine."""

from __future__ import annotations

import numpy as np

from .address import PAGE_SHIFT, AddressLayout, colors_of_pfns
from .buddy import ChannelBuddies, PageFrame
from .memsim import DRAM, NVM, LlcConfig, MemoryModel

UNMAPPED = -1


class HybridMemory:
    """Page table, per-channel allocators and the memory model of one run."""

    def __init__(
        self,
        n_vpages: int,
        pages_per_channel: tuple[int, int],
        layout: AddressLayout = AddressLayout(),
        media=None,
        llc: LlcConfig = LlcConfig(),
        t_transfer: float = 5.0,
    ):
        self.layout = layout
        if media is None:
            media = [None, None]
            media[layout.dram_channel] = DRAM
            media[layout.nvm_channel] = NVM
        self.media = tuple(media)
        self.pages_per_channel = tuple(pages_per_channel)
        self.buddies = ChannelBuddies(self.pages_per_channel, layout)
        self.model = MemoryModel(layout, self.pages_per_channel, self.media, llc, t_transfer)
        self.page_table = np.full(n_vpages, UNMAPPED, dtype=np.int64)
        self.lock_until = np.zeros(n_vpages, dtype=np.float64)
        self.page_lat_sum = np.zeros(n_vpages, dtype=np.float64)
        self.page_lat_n = np.zeros(n_vpages, dtype=np.int64)
        self._owner: dict[int, int] = {}
        self._channel_shift = layout.channel_bit - PAGE_SHIFT

    @property
    def n_vpages(self) -> int:
        return len(self.page_table)

    def channel_of_pfn(self, pfn: int) -> int:
        return (pfn >> self._channel_shift) & 1

    def channels(self) -> np.ndarray:
        """Channel per virtual page, -1 when unmapped."""
        pt = self.page_table
        return np.where(pt >= 0, (pt >> self._channel_shift) & 1, UNMAPPED)

    def colors(self) -> np.ndarray:
        return np.where(self.page_table >= 0, colors_of_pfns(self.page_table), UNMAPPED)

    def owner_of(self, pfn: int) -> int | None:
        return self._owner.get(pfn)

    def is_mapped(self, vpage: int) -> bool:
        return self.page_table[vpage] != UNMAPPED

    def map_page(self, vpage: int, frame: PageFrame) -> None:
        if self.page_table[vpage] != UNMAPPED:
            raise RuntimeError(f"virtual page {vpage} is already mapped")
        self.page_table[vpage] = frame.pfn
        self._owner[frame.pfn] = vpage

    def remap(self, vpage: int, new_pfn: int) -> int:
        """Point ``vpage`` at ``new_pfn``; returns the old pfn (still allocated)."""
        old = int(self.page_table[vpage])
        self.model.invalidate_page(old)
        del self._owner[old]
        self.page_table[vpage] = new_pfn
        self._owner[new_pfn] = vpage
        return old

    def free_pfn(self, pfn: int) -> None:
        self.buddies.free_page(pfn)

    def free_pages(self, channel: int) -> int:
        return self.buddies[channel].free_pages
