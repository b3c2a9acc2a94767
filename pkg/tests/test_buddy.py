import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridmem.address import PAGE_SIZE, AddressLayout, color_of_pfn, compose_color, compose_pfn
from hybridmem.buddy import (
    COLORS_PER_BLOCK,
    MAX_ORDER,
    REGION_PAGES,
    BuddyStateError,
    ChannelBuddies,
    OutOfColorError,
    SubBuddy,
    free_capacity_matrix,
    page_index_in_block,
)


def fragmented(n_regions=4, seed=0, frac=0.5):
    """A buddy with a random half of its pages allocated and some returned."""
    rng = np.random.default_rng(seed)
    sub = SubBuddy(0, n_regions * REGION_PAGES)
    taken = []
    for _ in range(int(frac * sub.total_pages)):
        taken.append(sub.alloc_any().pfn)
    for pfn in rng.permutation(taken)[: len(taken) // 2]:
        sub.free_page(int(pfn))
    return sub


def test_colors_per_block_table():
    assert COLORS_PER_BLOCK == (1, 2, 4, 8, 16, 32, 64, 128, 128, 256, 512)


def test_page_index_examples():
    # order-10 block of color 0, target 200 -> 200 = 128 + 72 -> 72 + 256
    assert page_index_in_block(0, 200) == 328
    assert color_of_pfn(328) == 200
    assert compose_pfn(0, 200) == 328
    assert page_index_in_block(64, 64) == 0


def test_color_64_comes_from_order_2_list():
    sub = SubBuddy(1, REGION_PAGES, AddressLayout())
    # carve the region until color 64 only survives inside an order-2 block
    base = sub.base
    keep = set(range(base + 64, base + 68))
    for pfn in range(base, base + REGION_PAGES):
        if pfn not in keep:
            sub.alloc_page_hashed(0, color_of_pfn(pfn))
    # pfn bit 7 is not a color bit, so either twin block may survive
    blocks = sub.free_blocks()
    assert len(blocks) == 1
    start, order = next(iter(blocks.items()))
    assert order == 2 and start - base in (64, 192)
    frame = sub.alloc_page_hashed(0, 64)
    assert frame.color == 64 and frame.pfn == start
    assert sub.last_probes == 3  # orders 0, 1, then 2


def test_alloc_resource_examples():
    bud = ChannelBuddies((REGION_PAGES, REGION_PAGES))
    f = bud.alloc_resource(1, 8, 0)
    assert f.color == 64 and f.channel == 1 and (f.bank, f.slab) == (0, 8)
    assert bud.alloc_resource(0, 0, 0).color == 0
    assert bud.alloc_resource(0, 15, 31).color == 511


def test_order_zero_head_is_returned():
    sub = SubBuddy(0, REGION_PAGES)
    a = sub.alloc_page_hashed(0, 3)
    sub.free_page(a)
    # the freed page merged back; re-request returns the same pfn
    assert sub.alloc_page_hashed(0, 3).pfn == a.pfn


def test_exhausting_a_color_raises():
    sub = SubBuddy(0, REGION_PAGES)
    # one region holds two pages of each color (pfn bit 7 is not a color bit)
    sub.alloc_page_hashed(0, 9)
    sub.alloc_page_hashed(0, 9)
    with pytest.raises(OutOfColorError):
        sub.alloc_page_hashed(0, 9)


def test_free_single_page_restores_totals():
    sub = SubBuddy(0, REGION_PAGES)
    f = sub.alloc_any()
    sub.free_page(f)
    assert sub.free_pages == sub.total_pages
    assert sub.free_blocks() == {sub.base: MAX_ORDER}


def test_double_free_raises():
    sub = SubBuddy(0, REGION_PAGES)
    f = sub.alloc_any()
    sub.free_page(f)
    with pytest.raises(BuddyStateError):
        sub.free_page(f)
    with pytest.raises(BuddyStateError):
        sub.free_page(5)


@given(st.permutations(range(REGION_PAGES)))
@settings(max_examples=10)
def test_free_all_pages_in_any_order_merges_to_one_block(order):
    sub = SubBuddy(0, REGION_PAGES)
    frames = [sub.alloc_any() for _ in range(REGION_PAGES)]
    assert sub.free_pages == 0
    for i in order:
        sub.free_page(frames[i])
    assert sub.free_blocks() == {0: MAX_ORDER}


def test_fmc_examples():
    sub = SubBuddy(0, REGION_PAGES)
    fmc = free_capacity_matrix(sub)
    assert fmc.shape == (32, 16)
    assert (fmc == 2 * PAGE_SIZE).all()  # two pages per color per region
    sub.alloc_page_hashed(0, 64)
    sub.alloc_page_hashed(0, 64)
    after = free_capacity_matrix(sub)
    diff = fmc - after
    assert diff[0, 8] == 2 * PAGE_SIZE
    diff[0, 8] = 0
    assert not diff.any()
    while sub.free_pages:
        sub.alloc_any()
    assert not free_capacity_matrix(sub).any()


def brute_fmc(sub):
    """Oracle: walk every free page of every free block."""
    fmc = np.zeros((32, 16), dtype=np.int64)
    for start, order in sub.free_blocks().items():
        for pfn in range(start, start + (1 << order)):
            c = color_of_pfn(pfn)
            bank = ((c >> 7) << 3) | (c & 7)
            fmc[bank, (c >> 3) & 0xF] += PAGE_SIZE
    return fmc


def test_allocation_returns_requested_color_on_fragmented_buddy():
    rng = np.random.default_rng(7)
    sub = fragmented(n_regions=16, seed=3)
    served = 0
    for _ in range(10_000):
        order = int(rng.integers(0, MAX_ORDER + 1))
        color = int(rng.integers(0, 512))
        try:
            f = sub.alloc_page_hashed(order, color)
        except OutOfColorError:
            continue
        assert color_of_pfn(f.pfn) == color
        assert sub.last_probes <= MAX_ORDER - order + 1
        served += 1
        if rng.random() < 0.6:
            sub.free_page(f)
    assert served > 1000


@given(st.lists(st.tuples(st.booleans(), st.integers(0, 511)), max_size=300), st.integers(0, 5))
@settings(max_examples=30)
def test_conservation_and_no_overlap(ops, seed):
    sub = fragmented(n_regions=2, seed=seed, frac=0.3)
    held = sorted(sub._allocated)
    for alloc, color in ops:
        if alloc or not held:
            try:
                held.append(sub.alloc_page_hashed(0, color).pfn)
            except OutOfColorError:
                pass
        else:
            sub.free_page(held.pop(color % len(held)))
    assert sub.free_pages + sub.allocated_pages == sub.total_pages
    covered = set()
    for start, order in sub.free_blocks().items():
        assert start % (1 << order) == 0
        assert color_of_pfn(start) % COLORS_PER_BLOCK[order] == 0
        block = set(range(start, start + (1 << order)))
        assert not block & covered
        covered |= block
    assert not covered & sub._allocated
    assert len(covered) == sub.free_pages
    assert (sub.free_capacity_matrix() == brute_fmc(sub)).all()


def test_sub_buddy_size_validation():
    with pytest.raises(ValueError):
        SubBuddy(0, 1000)
    with pytest.raises(ValueError):
        SubBuddy(0, 2 * REGION_PAGES, AddressLayout(channel_bit=22))


def test_compose_color_round_trip_with_alloc_resource():
    bud = ChannelBuddies((2 * REGION_PAGES, 2 * REGION_PAGES))
    for bank in (0, 7, 8, 31):
        for slab in (0, 1, 14, 15):
            f = bud.alloc_resource(0, slab, bank)
            assert f.color == compose_color(bank, slab)
