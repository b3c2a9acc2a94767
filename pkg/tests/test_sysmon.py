import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridmem.address import N_COLORS, compose_pfn
from hybridmem.sysmon import (
    PageBits,
    PageClass,
    PassConfig,
    PassStats,
    ReuseClass,
    SysMon,
    bank_imbalance,
    build_freq_tables,
    channel_bandwidth,
    classify_hotness,
    classify_reuse,
    classify_wd_rd,
    is_hot,
    reuse_classes,
    sample_pass,
    wd_rd_classes,
)


def test_every_window_and_never():
    bits = PageBits(2)
    stats = sample_pass(bits, PassConfig(), workload=lambda k, b: b.touch([0]))
    assert stats.observed_accesses.tolist() == [100, 0]
    assert stats.observed_writes.tolist() == [0, 0]


def test_scripted_thirty_writes():
    written = set(np.random.default_rng(1).choice(100, 30, replace=False).tolist())

    def work(k, b):
        b.touch([0], [k in written])

    stats = sample_pass(PageBits(1), PassConfig(), workload=work)
    assert stats.observed_writes[0] == 30
    assert stats.observed_accesses[0] == 100
    assert stats.reads[0] == 70


def test_empty_page_set_gives_empty_stats():
    stats = sample_pass(PageBits(0), PassConfig())
    assert stats.n_pages == 0


def test_clear_and_check():
    bits = PageBits(3)
    bits.touch([1], [True])
    acc, dirty = bits.read_and_clear()
    assert acc.tolist() == [False, True, False] and dirty[1]
    acc, dirty = bits.read_and_clear()
    assert not acc.any() and not dirty.any()


@pytest.mark.parametrize("n,hot", [(100, True), (0, False), (51, True), (50, False)])
def test_hotness_boundary(n, hot):
    assert is_hot(n, 100) is hot
    stats = PassStats(100, np.ones(1, bool), np.array([n]), np.zeros(1, np.int64),
                      *(np.zeros(1),) * 3)
    assert bool(classify_hotness(stats)[0]) is hot


@pytest.mark.parametrize("reads,writes,cls", [(5, 1, PageClass.RD), (4, 2, PageClass.WD),
                                              (0, 0, PageClass.COLD), (0, 1, PageClass.WD),
                                              (3, 1, PageClass.RD), (2, 1, PageClass.WD)])
def test_wd_rd_examples(reads, writes, cls):
    assert classify_wd_rd(reads, writes) == cls


@given(st.integers(0, 200), st.integers(0, 200))
def test_wd_rd_vector_matches_scalar(reads, writes):
    assert wd_rd_classes(np.array([reads]), np.array([writes]))[0] == classify_wd_rd(reads, writes)


def test_reuse_examples():
    assert classify_reuse([1] * 99) == ReuseClass.THRASHING
    assert classify_reuse([30, 40], accesses=3) == ReuseClass.RARELY_TOUCHED
    rng = np.random.default_rng(0)
    gaps = rng.normal(8, 5, 39)
    gaps = (gaps - gaps.mean()) / gaps.std() * 5 + 8
    assert classify_reuse(gaps, accesses=40) == ReuseClass.FREQ_TOUCHED
    assert classify_reuse([]) == ReuseClass.RARELY_TOUCHED


def test_reuse_classes_from_pass_stats():
    mon = SysMon(3, PassConfig(samplings_per_pass=100))
    mon.begin_pass()
    for k in range(100):
        touched = [0]
        if k % 9 == 0 or k % 7 == 0:
            touched.append(1)
        if k in (5, 50):
            touched.append(2)
        mon.observe(np.array(touched), np.array([], dtype=np.int64))
    stats = mon.end_pass()
    assert reuse_classes(stats).tolist() == [ReuseClass.THRASHING, ReuseClass.FREQ_TOUCHED,
                                            ReuseClass.RARELY_TOUCHED]


def test_freq_tables_examples():
    empty = build_freq_tables(np.arange(5), np.zeros(5, bool))
    assert not empty.bank_freq.any() and not empty.cache_freq.any()
    pfns = [compose_pfn(0, 0, r << 10) for r in range(10)]
    t = build_freq_tables(pfns, np.ones(10, bool))
    assert t.bank_freq[0] == 10 and t.bank_freq.sum() == 10
    assert t.cache_freq[0] == 10 and t.cache_freq.sum() == 10
    n = 3
    pfns = [compose_pfn(0, c, r << 10) for c in range(N_COLORS) for r in range(n)]
    t = build_freq_tables(pfns, np.ones(len(pfns), bool))
    assert (t.bank_freq == 16 * n).all() and (t.cache_freq == 32 * n).all()


@given(st.lists(st.tuples(st.integers(0, (1 << 20) - 1), st.booleans()), max_size=100))
def test_freq_table_totals(entries):
    pfns = np.array([p for p, _ in entries], dtype=np.int64)
    acc = np.array([a for _, a in entries], dtype=bool)
    t = build_freq_tables(pfns, acc)
    assert t.bank_freq.sum() == t.cache_freq.sum() == acc.sum()


def test_bank_imbalance_examples():
    assert bank_imbalance([4] * 32) == 0
    one_hot = [32] + [0] * 31
    assert bank_imbalance(one_hot) == pytest.approx(31 ** 0.5)
    assert bank_imbalance(one_hot) == pytest.approx(5.568, abs=1e-3)
    rng = np.random.default_rng(2)
    x = rng.integers(0, 50, 32)
    assert bank_imbalance(2 * x) == pytest.approx(2 * bank_imbalance(x))


def test_bandwidth_examples():
    assert channel_bandwidth(0, 1.0) == 0
    assert channel_bandwidth(10**9, 1.0) == 64e9
    assert channel_bandwidth(109_226_667, 1.0) / 2**30 == pytest.approx(6.51, abs=0.01)
    assert channel_bandwidth(109_226_667, 1.0) / 1e9 == pytest.approx(7.0, abs=0.01)
    with pytest.raises(ValueError):
        channel_bandwidth(10, 0.0)


def test_random_subset_coverage():
    cfg = PassConfig(sampling_mode="random", random_fraction=0.1)
    for seed in range(10):
        mon = SysMon(2000, cfg, seed)
        seen = np.zeros(2000, bool)
        for _ in range(50):
            mon.begin_pass()
            seen |= mon.end_pass().sampled
        assert seen.mean() >= 0.99


def test_random_mode_ignores_unsampled_pages():
    mon = SysMon(100, PassConfig(sampling_mode="random", random_fraction=0.1), seed=3)
    mon.begin_pass()
    mon.observe(np.arange(100), np.arange(100))
    stats = mon.end_pass()
    assert (stats.observed_accesses == stats.sampled).all()
    assert (stats.observed_writes <= stats.observed_accesses).all()


def windows_strategy():
    window = st.lists(st.tuples(st.integers(0, 15), st.booleans()), max_size=12)
    return st.lists(window, min_size=1, max_size=15)


@given(windows_strategy(), st.booleans())
def test_observe_windows_matches_observe(windows, random_mode):
    cfg = PassConfig(sampling_mode="random" if random_mode else "full", random_fraction=0.5)
    a, b = SysMon(16, cfg, seed=5), SysMon(16, cfg, seed=5)
    a.begin_pass()
    b.begin_pass()
    pages, writes, cuts = [], [], []
    for win in windows:
        acc = sorted({p for p, _ in win})
        dirty = sorted({p for p, w in win if w})
        a.observe(np.array(acc, dtype=np.int64), np.array(dirty, dtype=np.int64))
        pages += [p for p, _ in win]
        writes += [w for _, w in win]
        cuts.append(len(pages))
    b.observe_windows(np.array(pages, dtype=np.int64), np.array(writes, bool), np.array(cuts))
    sa, sb = a.end_pass(), b.end_pass()
    assert sa.samplings == sb.samplings == len(windows)
    for f in ("observed_accesses", "observed_writes", "gap_count", "gap_sum", "gap_sumsq"):
        assert np.array_equal(getattr(sa, f), getattr(sb, f)), f
    assert (sb.observed_writes <= sb.observed_accesses).all()
    assert (sb.observed_accesses <= sb.samplings).all()


def test_interval_growth_after_stable_passes():
    cfg = PassConfig(samplings_per_pass=4, interval_growth=2.0, stable_passes=3)
    mon = SysMon(4, cfg)
    for _ in range(4):
        mon.begin_pass()
        for _ in range(4):
            mon.observe(np.array([0, 1]), np.array([0]))
        mon.end_pass()
    assert mon.interval_s == 2.0


def test_pass_config_validation():
    with pytest.raises(ValueError):
        PassConfig(samplings_per_pass=0)
    with pytest.raises(ValueError):
        PassConfig(random_fraction=0)
    with pytest.raises(ValueError):
        PassConfig(sampling_mode="sometimes")
