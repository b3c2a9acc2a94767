"""Run configuration: a YAML or JSON tree validated into frozen dataclasses."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .address import AddressLayout
from .buddy import REGION_PAGES
from .memsim import DRAM, NVM, LlcConfig, MediumParams
from .migration import EngineConfig
from .placement import SlabPlan
from .predictor import PredictorConfig
from .sysmon import PassConfig
from .workload import GeneratorSpec, Phase, SpecError, Trace, generate, read_trace

SCHEMES = ("memos", "interleaved-baseline", "dram-only", "nvm-only", "no-migration")


class ConfigError(ValueError):
    """Configuration problem; the message names the offending field path."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MediumModel(_Strict):
    t_rcd: Optional[float] = Field(None, ge=0)
    t_rp: Optional[float] = Field(None, ge=0)
    t_wr: Optional[float] = Field(None, ge=0)
    read_energy: Optional[float] = Field(None, ge=0)
    write_energy: Optional[float] = Field(None, ge=0)
    standby_power: Optional[float] = Field(None, ge=0)
    endurance: Optional[float] = Field(None, gt=0)

    def build(self, base: MediumParams) -> MediumParams:
        updates = {k: v for k, v in self.model_dump().items() if v is not None}
        return MediumParams(**{**base.__dict__, **updates})


class LlcModel(_Strict):
    enabled: bool = True
    capacity_bytes: int = Field(8 << 20, gt=0)
    line_bytes: int = Field(64, gt=0)
    associativity: int = Field(16, gt=0)

    @field_validator("line_bytes")
    @classmethod
    def _line(cls, v):
        if v != 64:
            raise ValueError("only 64-byte lines are modelled")
        return v


class MachineModel(_Strict):
    channel_bit: int = Field(32, gt=21, le=40)
    dram_channel: Literal[0, 1] = 0
    dram_pages: int = Field(4096, gt=0)
    nvm_pages: int = Field(16384, gt=0)
    t_transfer_ns: float = Field(5.0, ge=0)
    dram: MediumModel = MediumModel()
    nvm: MediumModel = MediumModel()
    llc: LlcModel = LlcModel()

    @field_validator("dram_pages", "nvm_pages")
    @classmethod
    def _regions(cls, v):
        if v % REGION_PAGES:
            raise ValueError(f"must be a multiple of {REGION_PAGES} pages")
        return v

    @model_validator(mode="after")
    def _fits(self):
        limit = 1 << (self.channel_bit - 12)
        if max(self.dram_pages, self.nvm_pages) > limit:
            raise ValueError(f"channel capacity exceeds the {limit} pages addressable below the channel bit")
        return self


class PassModel(_Strict):
    samplings_per_pass: int = Field(100, ge=1)
    sampling_mode: Literal["full", "random"] = "full"
    random_fraction: float = Field(0.1, gt=0, le=1)
    pass_interval_s: float = Field(1.0, gt=0)
    interval_growth: float = Field(1.0, ge=1)
    stable_passes: int = Field(3, ge=1)
    stable_fraction: float = Field(0.99, gt=0, le=1)
    hot_threshold: float = Field(0.5, gt=0, lt=1)
    rare_fraction: float = Field(0.1, ge=0, le=1)
    thrash_mean: float = Field(2.0, gt=0)
    thrash_std: float = Field(1.0, ge=0)


class PredictorModel(_Strict):
    window_len: int = Field(8, ge=1, le=16)
    k_len: int = Field(3, ge=1)
    high_threshold: int = Field(6, ge=0)
    low_threshold: int = Field(4, ge=0)
    validity_horizon: int = Field(10, ge=1)


class SlabModel(_Strict):
    thrash: list[int] = [0]
    rare: list[int] = [15]
    min_general: int = Field(2, ge=1)


class EngineModel(_Strict):
    cycle_interval_s: float = Field(20.0, gt=0)
    mode: Literal["lazy", "eager"] = "lazy"
    cpu_page_cost_us: float = Field(3.0, ge=0)
    dma_setup_cost_us: float = Field(5.0, ge=0)
    dma_page_cost_us: float = Field(1.0, ge=0)
    dma_batch_min: int = Field(64, ge=1)
    dma_batch_max: int = Field(512, ge=1)
    max_dma_retries: int = Field(3, ge=0)
    watermark_fraction: float = Field(0.05, ge=0, lt=1)
    rebalance_banks: bool = True
    max_bank_moves: int = Field(256, ge=0)
    bandwidth_bound: float = Field(7e9, gt=0)
    bandwidth_step: int = Field(64, ge=1)
    enlarge_after_cycles: int = Field(2, ge=1)


class PolicyModel(_Strict):
    pass_: PassModel = Field(PassModel(), alias="pass")
    predictor: PredictorModel = PredictorModel()
    slabs: SlabModel = SlabModel()
    engine: EngineModel = EngineModel()


class PhaseModel(_Strict):
    first_page: int
    last_page: int
    start: int
    length: int
    klass: str


class GeneratorModel(_Strict):
    kind: Literal["wd_bursty", "bank_skewed", "phased", "stream"]
    n_pages: int = Field(10_000, ge=0)
    n_passes: int = Field(200, ge=0)
    seed: Optional[int] = None
    samplings_per_pass: Optional[int] = Field(None, ge=1)
    pass_interval_s: Optional[float] = Field(None, gt=0)
    bursty_fraction: float = 0.3
    burst_min: int = 30
    burst_max: int = 90
    off_min: int = 40
    off_max: int = 160
    burst_wd_prob: float = 0.92
    rd_hot_fraction: float = 0.1
    rd_warm_fraction: float = 0.2
    skew: float = 0.8
    hot_fraction: float = 0.2
    hot_write_prob: float = 0.05
    phases: list[PhaseModel] = []
    stream_width: int = 64
    stream_write_prob: float = 0.3


class WorkloadModel(_Strict):
    trace: Optional[str] = None
    generator: Optional[GeneratorModel] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.trace is None) == (self.generator is None):
            raise ValueError("exactly one of 'trace' or 'generator' must be given")
        return self


class RunModel(_Strict):
    scheme: Literal["memos", "interleaved-baseline", "dram-only", "nvm-only", "no-migration"] = "memos"
    seed: int = 0
    machine: MachineModel = MachineModel()
    policy: PolicyModel = PolicyModel()
    workload: WorkloadModel
    qos_groups: int = Field(8, ge=1)


# --- the frozen view the simulator consumes ------------------------------------------------


class RunConfig:
    """Validated configuration with ready-made component configs."""

    def __init__(self, model: RunModel, base_dir: Path | None = None):
        self.model = model
        self.base_dir = base_dir
        m = model.machine
        self.scheme = model.scheme
        self.seed = model.seed
        self.layout = AddressLayout(channel_bit=m.channel_bit, dram_channel=m.dram_channel)
        dram, nvm = m.dram.build(DRAM), m.nvm.build(NVM)
        if self.scheme == "dram-only":
            media = (dram, dram)
        elif self.scheme == "nvm-only":
            media = (nvm, nvm)
        else:
            media = [None, None]
            media[self.layout.dram_channel] = dram
            media[self.layout.nvm_channel] = nvm
        self.media = tuple(media)
        pages = [0, 0]
        pages[self.layout.dram_channel] = m.dram_pages
        pages[self.layout.nvm_channel] = m.nvm_pages
        self.pages_per_channel = tuple(pages)
        self.t_transfer = m.t_transfer_ns
        self.llc = LlcConfig(**m.llc.model_dump())
        p = model.policy
        self.pass_cfg = PassConfig(**p.pass_.model_dump())
        self.predictor = PredictorConfig(**p.predictor.model_dump())
        self.slab_plan = SlabPlan(frozenset(p.slabs.thrash), frozenset(p.slabs.rare), p.slabs.min_general)
        self.engine = EngineConfig(**p.engine.model_dump())
        self.qos_groups = model.qos_groups

    @property
    def migrates(self) -> bool:
        return self.scheme == "memos"

    def with_overrides(self, scheme: str | None = None, seed: int | None = None,
                       trace: str | None = None) -> "RunConfig":
        data = self.model.model_dump(by_alias=True)
        if scheme is not None:
            data["scheme"] = scheme
        if seed is not None:
            data["seed"] = seed
        if trace is not None:
            data["workload"] = {"trace": str(trace)}
        return RunConfig.from_dict(data, self.base_dir)

    def generator_spec(self) -> GeneratorSpec | None:
        g = self.model.workload.generator
        if g is None:
            return None
        d = g.model_dump()
        d["seed"] = self.seed if d["seed"] is None else d["seed"]
        d["samplings_per_pass"] = d["samplings_per_pass"] or self.pass_cfg.samplings_per_pass
        d["pass_interval_s"] = d["pass_interval_s"] or self.pass_cfg.pass_interval_s
        d["phases"] = tuple(Phase(**ph) for ph in d["phases"])
        return GeneratorSpec(**d)

    def open_trace(self) -> Trace:
        spec = self.generator_spec()
        if spec is not None:
            return generate(spec)
        path = Path(self.model.workload.trace)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return read_trace(path)

    def to_dict(self) -> dict:
        return self.model.model_dump(by_alias=True)

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "RunConfig":
        try:
            model = RunModel.model_validate(data)
            cfg = cls(model, base_dir)
            cfg.generator_spec()
        except ValidationError as exc:
            raise ConfigError(_format_errors(exc)) from None
        except (SpecError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"{path}: not valid {'JSON' if path.suffix == '.json' else 'YAML'}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data, path.parent)


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def load_generator_spec(path) -> GeneratorSpec:
    """A bare generator spec file (the ``generator`` subtree of a run config)."""
    path = Path(path)
    try:
        text = path.read_text()
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except OSError as exc:
        raise ConfigError(f"cannot read spec {path}: {exc}") from None
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if isinstance(data, dict) and "generator" in data:
        data = data["generator"]
    try:
        g = GeneratorModel.model_validate(data).model_dump()
        g["seed"] = 0 if g["seed"] is None else g["seed"]
        g["samplings_per_pass"] = g["samplings_per_pass"] or 100
        g["pass_interval_s"] = g["pass_interval_s"] or 1.0
        g["phases"] = tuple(Phase(**ph) for ph in g["phases"])
        return GeneratorSpec(**g)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

