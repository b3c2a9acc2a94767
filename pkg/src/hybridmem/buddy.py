"""Color-indexed buddy allocator, one instance per memory channel.

Free blocks of every order are filed by the color of their first page, so a
page of a requested color is found by probing at most one list per order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .address import (
    DEFAULT_LAYOUT,
    N_BANKS,
    N_COLORS,
    N_SLABS,
    PAGE_SIZE,
    AddressLayout,
    color_of_pfn,
    compose_color,
    decompose_color,
)

MAX_ORDER = 10
REGION_PAGES = 1 << MAX_ORDER
# colors spanned by one block of each order; pfn bit 7 (physical bit 19) is
# not a color bit, hence the repeated 128
COLORS_PER_BLOCK = (1, 2, 4, 8, 16, 32, 64, 128, 128, 256, 512)

# COLOR_GRID[bank, slab] -> color
COLOR_GRID = np.array(
    [[compose_color(b, s) for s in range(N_SLABS)] for b in range(N_BANKS)], dtype=np.int64
)


class OutOfColorError(MemoryError):
    """No free block covers the requested color."""


class BuddyStateError(RuntimeError):
    """Allocator invariant violated (double free, foreign page)."""


@dataclass(frozen=True)
class PageFrame:
    pfn: int
    channel: int
    color: int

    @property
    def bank(self) -> int:
        return decompose_color(self.color)[0]

    @property
    def slab(self) -> int:
        return decompose_color(self.color)[1]


def page_index_in_block(block_color: int, target_color: int) -> int:
    """Offset (in pages) of the first page with ``target_color`` in a block.

    Color offsets above 127 live past the non-color pfn bit 7, so the stride
    for the upper color bits is 256 pages, not 128.
    """
    offset = target_color - block_color
    return offset % 128 + (offset // 128) * 256


@dataclass
class SubBuddy:
    channel: int
    n_pages: int
    layout: AddressLayout = DEFAULT_LAYOUT
    free_pages: int = field(init=False, default=0)
    last_probes: int = field(init=False, default=0)

    def __post_init__(self):
        if self.n_pages <= 0 or self.n_pages % REGION_PAGES:
            raise ValueError(f"n_pages must be a positive multiple of {REGION_PAGES}")
        if self.n_pages > self.layout.pages_per_channel:
            raise ValueError(
                f"{self.n_pages} pages exceed the channel range of "
                f"{self.layout.pages_per_channel} pages"
            )
        self.base = self.layout.channel_base_pfn(self.channel)
        # per order: block_color -> insertion-ordered set of block start pfns
        self._lists: list[dict[int, dict[int, None]]] = [{} for _ in range(MAX_ORDER + 1)]
        self._free_blocks: dict[int, int] = {}
        self._allocated: set[int] = set()
        self.free_by_color = np.zeros(N_COLORS, dtype=np.int64)
        for start in range(self.base, self.base + self.n_pages, REGION_PAGES):
            self._file(start, MAX_ORDER)

    @property
    def total_pages(self) -> int:
        return self.n_pages

    @property
    def allocated_pages(self) -> int:
        return len(self._allocated)

    def owns(self, pfn: int) -> bool:
        return self.base <= pfn < self.base + self.n_pages

    def is_allocated(self, pfn: int) -> bool:
        return pfn in self._allocated

    def free_blocks(self) -> dict[int, int]:
        """Snapshot of free blocks as ``{start_pfn: order}``."""
        return dict(self._free_blocks)

    def _file(self, start: int, order: int) -> None:
        color = color_of_pfn(start, self.layout)
        self._lists[order].setdefault(color, {})[start] = None
        self._free_blocks[start] = order
        self._account(color, order, +1)

    def _unfile(self, start: int, order: int) -> None:
        color = color_of_pfn(start, self.layout)
        bucket = self._lists[order][color]
        del bucket[start]
        if not bucket:
            del self._lists[order][color]
        del self._free_blocks[start]
        self._account(color, order, -1)

    def _account(self, block_color: int, order: int, sign: int) -> None:
        span = COLORS_PER_BLOCK[order]
        self.free_by_color[block_color : block_color + span] += sign * ((1 << order) // span)
        self.free_pages += sign * (1 << order)

    def _expand(self, start: int, order: int, pfn: int) -> None:
        # split down to the single page at pfn, refiling the other halves
        while order > 0:
            order -= 1
            half = 1 << order
            if pfn >= start + half:
                self._file(start, order)
                start += half
            else:
                self._file(start + half, order)

    def _take(self, start: int, order: int, pfn: int) -> PageFrame:
        self._unfile(start, order)
        self._expand(start, order, pfn)
        self._allocated.add(pfn)
        return PageFrame(pfn, self.channel, color_of_pfn(pfn, self.layout))

    def alloc_page_hashed(self, order: int, target_color: int) -> PageFrame:
        """Allocate one page of ``target_color``, searching free lists from ``order`` up."""
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"order {order} outside [0, {MAX_ORDER}]")
        if not 0 <= target_color < N_COLORS:
            raise ValueError(f"color {target_color} outside [0, {N_COLORS})")
        self.last_probes = 0
        for k in range(order, MAX_ORDER + 1):
            self.last_probes += 1
            span = COLORS_PER_BLOCK[k]
            block_color = (target_color // span) * span
            bucket = self._lists[k].get(block_color)
            if not bucket:
                continue
            start = next(reversed(bucket))  # LIFO
            pfn = start + page_index_in_block(block_color, target_color)
            return self._take(start, k, pfn)
        raise OutOfColorError(
            f"channel {self.channel}: no free page of color {target_color} at order >= {order}"
        )

    def alloc_any(self) -> PageFrame:
        """Allocate some free page, smallest blocks first."""
        for k in range(MAX_ORDER + 1):
            if self._lists[k]:
                bucket = next(iter(self._lists[k].values()))
                start = next(reversed(bucket))
                return self._take(start, k, start)
        raise OutOfColorError(f"channel {self.channel}: out of memory")

    def free_page(self, page: PageFrame | int) -> None:
        pfn = page.pfn if isinstance(page, PageFrame) else int(page)
        if pfn not in self._allocated:
            raise BuddyStateError(f"pfn {pfn:#x} is not allocated on channel {self.channel}")
        self._allocated.remove(pfn)
        start, order = pfn, 0
        while order < MAX_ORDER:
            buddy = start ^ (1 << order)
            if self._free_blocks.get(buddy) != order:
                break
            self._unfile(buddy, order)
            start = min(start, buddy)
            order += 1
        self._file(start, order)

    def free_capacity_matrix(self) -> np.ndarray:
        """Free bytes indexed ``[bank, slab]``."""
        return PAGE_SIZE * self.free_by_color[COLOR_GRID]

    def free_pages_of_color(self, color: int) -> int:
        return int(self.free_by_color[color])


class ChannelBuddies:
    """The two per-channel sub-buddies plus the ``alloc_resource`` entry point."""

    def __init__(self, pages_per_channel: tuple[int, int], layout: AddressLayout = DEFAULT_LAYOUT):
        self.layout = layout
        self.subs = [SubBuddy(ch, n, layout) for ch, n in enumerate(pages_per_channel)]

    def __getitem__(self, channel: int) -> SubBuddy:
        return self.subs[channel]

    def __iter__(self):
        return iter(self.subs)

    def owner(self, pfn: int) -> SubBuddy:
        for sub in self.subs:
            if sub.owns(pfn):
                return sub
        raise BuddyStateError(f"pfn {pfn:#x} belongs to no channel")

    def alloc_resource(self, channel_id: int, cache_slab: int, bank_id: int) -> PageFrame:
        return self.subs[channel_id].alloc_page_hashed(0, compose_color(bank_id, cache_slab))

    def free_page(self, page: PageFrame | int) -> None:
        pfn = page.pfn if isinstance(page, PageFrame) else int(page)
        self.owner(pfn).free_page(pfn)


def free_capacity_matrix(buddy: SubBuddy) -> np.ndarray:
    return buddy.free_capacity_matrix()
