import numpy as np
import pytest
from conftest import small_config

from hybridmem.config import SCHEMES, ConfigError, RunConfig
from hybridmem.simulation import PASS_FIELDS, run_simulation
from hybridmem.workload import ArrayTrace, TraceError


@pytest.fixture(scope="module")
def memos_run():
    return run_simulation(small_config("memos"))


def test_empty_trace_gives_zero_activity():
    res = run_simulation(small_config(), ArrayTrace([], [], [], []))
    m = res.metrics
    assert m["passes"] == 0 and m["accesses"] == 0
    assert m["dynamic_energy_mJ"] == 0 and m["nvm_writes"] == 0
    assert m["lifetime_unbounded"] and m["lifetime_years"] is None
    assert res.rows == [] and res.cycles == []


def test_rows_follow_pass_fields(memos_run):
    assert memos_run.metrics["passes"] == 30 == len(memos_run.rows)
    for row in memos_run.rows:
        assert set(row) == set(PASS_FIELDS)
        assert row["ch0_hot_cold_rate"] >= 0 and row["ch1_wd_rd_rate"] >= 0


def test_reconciliation(memos_run):
    m, mem = memos_run.metrics, memos_run.mem
    assert m["dynamic_energy_mJ"] == pytest.approx(mem.model.energy.sum() * 1e-6)
    assert m["accesses"] == sum(r["accesses"] for r in memos_run.rows)
    for ch in (0, 1):
        assert m[f"ch{ch}_writes"] == sum(r[f"ch{ch}_writes"] for r in memos_run.rows)
        # page copies are charged to the counters but not to bank timing
        assert sum(m[f"ch{ch}_bank_accesses"]) == (
            m[f"ch{ch}_reads"] + m[f"ch{ch}_writes"] - mem.model.copy_counts[ch].sum())
    cycles = memos_run.cycles
    assert m["migration_cycles"] == len(cycles) > 0
    assert m["migrated_to_dram"] == sum(c.to_dram for c in cycles)
    assert m["migrated_to_nvm"] == sum(c.to_nvm for c in cycles)
    assert m["engine_us"] == pytest.approx(sum(c.engine_us for c in cycles))
    assert m["llc_hits"] + m["llc_misses"] == m["accesses"]
    assert m["nvm_writes"] == m["ch1_writes"]


def test_pages_start_in_nvm_and_wd_pages_move_up(memos_run):
    assert memos_run.metrics["migrated_to_dram"] > 0
    nm = run_simulation(small_config("no-migration"))
    assert nm.metrics["migration_cycles"] == 0
    assert memos_run.metrics["nvm_writes"] < nm.metrics["nvm_writes"]


@pytest.mark.parametrize("scheme", ["dram-only", "nvm-only", "no-migration", "interleaved-baseline"])
def test_scheme_isolation(scheme):
    m = run_simulation(small_config(scheme)).metrics
    assert m["migration_cycles"] == 0
    for key in ("migrated_to_dram", "migrated_to_nvm", "migrated_intra", "engine_us"):
        assert m[key] == 0
    if scheme == "dram-only":
        assert m["lifetime_unbounded"] and m["nvm_writes"] == 0
    if scheme == "nvm-only":
        assert m["ch0_medium"] == m["ch1_medium"] == "nvm"


def test_interleaved_baseline_spreads_channels_and_banks():
    res = run_simulation(small_config("interleaved-baseline"))
    chans = res.mem.channels()
    mapped = chans >= 0
    assert abs(np.mean(chans[mapped] == 0) - 0.5) < 0.05
    banks = res.metrics["ch0_bank_accesses"]
    assert min(banks) > 0


def test_determinism():
    a = run_simulation(small_config(seed=4)).metrics
    b = run_simulation(small_config(seed=4)).metrics
    assert a == b


def test_trace_with_out_of_range_page_is_rejected():
    trace = ArrayTrace([0, 1], [0, 5], [0, 0], [False, False], n_pages=3)
    with pytest.raises(TraceError):
        run_simulation(small_config(), trace)


def test_config_errors_name_the_field():
    with pytest.raises(ConfigError, match="machine"):
        RunConfig.from_dict({"machine": {"dram_pages": "lots"}, "workload": {"trace": "x"}})
    with pytest.raises(ConfigError, match="exactly one"):
        RunConfig.from_dict({"workload": {}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"scheme": "magic", "workload": {"trace": "x"}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"workload": {"trace": "x"}, "bogus": 1})
    assert set(SCHEMES) == {"memos", "interleaved-baseline", "dram-only", "nvm-only", "no-migration"}
