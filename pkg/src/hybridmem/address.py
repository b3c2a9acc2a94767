"""Physical address layout: channel, bank, cache-slab and page-color bits.

Physical bit map for a 4 KB page on the modelled machine::

    0-5    line offset
    6-11   rest of the page offset
    12-14  bank (low 3 bits)           -> color bits 0-2
    15-18  LLC slab (set-index high)   -> color bits 3-6
    19     row bit, never a color bit
    20-21  bank group                  -> color bits 7-8
    32     channel (configurable)

A page color is the 9-bit value read MSB->LSB from physical bits
21,20,18,17,16,15,14,13,12.  It names one (bank, slab) pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PAGE_SHIFT = 12
PAGE_SIZE = 1 << PAGE_SHIFT
LINE_SHIFT = 6
LINE_SIZE = 1 << LINE_SHIFT
LINES_PER_PAGE = PAGE_SIZE // LINE_SIZE

BANK_LOW_BITS = (12, 13, 14)
SLAB_BITS = (15, 16, 17, 18)
SKIPPED_BIT = 19
BANK_GROUP_BITS = (20, 21)
COLOR_BITS = BANK_LOW_BITS + SLAB_BITS + BANK_GROUP_BITS

N_COLORS = 512
N_SLABS = 16
N_BANKS = 32
N_BANK_GROUPS = 4
BANKS_PER_GROUP = 8

# pfn-relative masks (physical bit - 12)
_PFN_COLOR_LOW_MASK = 0x7F  # pfn bits 0-6 -> color bits 0-6
_PFN_GROUP_SHIFT = 8  # pfn bits 8-9 -> color bits 7-8
PFN_COLOR_MASK = _PFN_COLOR_LOW_MASK | (0x3 << _PFN_GROUP_SHIFT)


class AddressRangeError(ValueError):
    """Address or frame number outside the configured physical range."""


@dataclass(frozen=True)
class AddressLayout:
    channel_bit: int = 32
    dram_channel: int = 0

    def __post_init__(self):
        if self.channel_bit <= max(COLOR_BITS):
            raise ValueError(
                f"channel_bit must be above bit {max(COLOR_BITS)}, got {self.channel_bit}"
            )
        if self.dram_channel not in (0, 1):
            raise ValueError("dram_channel must be 0 or 1")

    @property
    def nvm_channel(self) -> int:
        return 1 - self.dram_channel

    @property
    def pages_per_channel(self) -> int:
        return 1 << (self.channel_bit - PAGE_SHIFT)

    @property
    def max_addr(self) -> int:
        """One past the highest physical address (two channels)."""
        return 1 << (self.channel_bit + 1)

    @property
    def max_pfn(self) -> int:
        return self.max_addr >> PAGE_SHIFT

    def channel_base_pfn(self, channel: int) -> int:
        return channel << (self.channel_bit - PAGE_SHIFT)

    def is_nvm(self, channel: int) -> bool:
        return channel == self.nvm_channel


DEFAULT_LAYOUT = AddressLayout()


def _check_pfn(pfn: int, layout: AddressLayout) -> None:
    if not 0 <= pfn < layout.max_pfn:
        raise AddressRangeError(f"pfn {pfn:#x} outside [0, {layout.max_pfn:#x})")


def color_of_pfn(pfn: int, layout: AddressLayout = DEFAULT_LAYOUT) -> int:
    _check_pfn(pfn, layout)
    return (pfn & _PFN_COLOR_LOW_MASK) | (((pfn >> _PFN_GROUP_SHIFT) & 0x3) << 7)


def colors_of_pfns(pfns: np.ndarray) -> np.ndarray:
    """Vectorised color_of_pfn without range checking."""
    pfns = np.asarray(pfns, dtype=np.int64)
    return (pfns & _PFN_COLOR_LOW_MASK) | (((pfns >> _PFN_GROUP_SHIFT) & 0x3) << 7)


def decompose_color(color: int) -> tuple[int, int]:
    """Return ``(bank_id, slab_id)`` for a color in [0, 511]."""
    if not 0 <= color < N_COLORS:
        raise ValueError(f"color {color} outside [0, {N_COLORS})")
    bank_low = color & 0x7
    slab = (color >> 3) & 0xF
    group = (color >> 7) & 0x3
    return (group << 3) | bank_low, slab


def compose_color(bank_id: int, slab_id: int) -> int:
    if not 0 <= bank_id < N_BANKS:
        raise ValueError(f"bank {bank_id} outside [0, {N_BANKS})")
    if not 0 <= slab_id < N_SLABS:
        raise ValueError(f"slab {slab_id} outside [0, {N_SLABS})")
    return ((bank_id >> 3) << 7) | (slab_id << 3) | (bank_id & 0x7)


def banks_of_colors(colors: np.ndarray) -> np.ndarray:
    colors = np.asarray(colors, dtype=np.int64)
    return (((colors >> 7) & 0x3) << 3) | (colors & 0x7)


def slabs_of_colors(colors: np.ndarray) -> np.ndarray:
    colors = np.asarray(colors, dtype=np.int64)
    return (colors >> 3) & 0xF


def channel_of_addr(addr: int, layout: AddressLayout = DEFAULT_LAYOUT) -> int:
    if not 0 <= addr < layout.max_addr:
        raise AddressRangeError(f"address {addr:#x} outside [0, {layout.max_addr:#x})")
    return (addr >> layout.channel_bit) & 1


def channel_of_pfn(pfn: int, layout: AddressLayout = DEFAULT_LAYOUT) -> int:
    _check_pfn(pfn, layout)
    return (pfn >> (layout.channel_bit - PAGE_SHIFT)) & 1


def bank_of_pfn(pfn: int, layout: AddressLayout = DEFAULT_LAYOUT) -> int:
    return decompose_color(color_of_pfn(pfn, layout))[0]


def slab_of_pfn(pfn: int, layout: AddressLayout = DEFAULT_LAYOUT) -> int:
    return decompose_color(color_of_pfn(pfn, layout))[1]


def compose_pfn(
    channel: int,
    color: int,
    residual: int = 0,
    layout: AddressLayout = DEFAULT_LAYOUT,
) -> int:
    """Build a pfn from a channel, a color and the remaining (non-color) pfn bits.

    ``residual`` is expressed in pfn bit positions (physical bit - 12) and may
    only use bits that carry neither color nor channel, e.g. pfn bit 7
    (physical bit 19) or bits 10 and up.
    """
    if channel not in (0, 1):
        raise ValueError(f"channel {channel} is not 0 or 1")
    if not 0 <= color < N_COLORS:
        raise ValueError(f"color {color} outside [0, {N_COLORS})")
    channel_shift = layout.channel_bit - PAGE_SHIFT
    if residual < 0 or residual & PFN_COLOR_MASK or residual >> channel_shift:
        raise ValueError(f"residual {residual:#x} overlaps color or channel bits")
    color_bits = (color & _PFN_COLOR_LOW_MASK) | ((color >> 7) << _PFN_GROUP_SHIFT)
    return (channel << channel_shift) | residual | color_bits
