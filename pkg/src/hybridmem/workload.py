"""Trace files and synthetic access-pattern generators.

A trace is a time-ordered stream of ``time_ns,page_id,offset,op`` records.
Lines starting with ``#`` carry metadata (``# key: value``) and optional
placement hints (``# hint <page> <color>``).

Synthetic traces are produced one pass at a time.  Inside a pass of
``samplings_per_pass`` windows every page draws at most one access per
window from its current access profile, so the profiler's per-window bits
see exactly what the generator intended.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import asdict, dataclass
from typing import IO, Iterator

import numpy as np

from .address import (
    LINE_SIZE,
    LINES_PER_PAGE,
    N_BANKS,
    N_COLORS,
    N_SLABS,
    PAGE_SIZE,
    banks_of_colors,
    compose_color,
)
from .sysmon import bank_imbalance, wd_rd_classes

FORMAT_VERSION = 1
KINDS = ("wd_bursty", "bank_skewed", "phased", "stream")

Chunk = tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]  # times, pages, offsets, writes


class TraceError(ValueError):
    """Malformed or inconsistent trace input."""

    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class SpecError(ValueError):
    """Invalid generator specification."""


@dataclass(frozen=True)
class TraceRecord:
    time: int
    virtual_page: int
    offset_in_page: int
    op: str

    def __post_init__(self):
        if self.time < 0:
            raise TraceError(f"negative time {self.time}")
        if self.virtual_page < 0:
            raise TraceError(f"negative page id {self.virtual_page}")
        if not 0 <= self.offset_in_page < PAGE_SIZE:
            raise TraceError(f"offset {self.offset_in_page} outside [0, {PAGE_SIZE})")
        if self.op not in ("R", "W"):
            raise TraceError(f"op must be R or W, got {self.op!r}")

    @property
    def is_write(self) -> bool:
        return self.op == "W"


# --- access profiles -------------------------------------------------------------------


@dataclass(frozen=True)
class Profile:
    """Per-window access probability and write probability given an access."""

    active: float
    write: float


PROFILES = {
    "idle": Profile(0.0, 0.0),
    "wd": Profile(0.7, 0.6),
    "rd_hot": Profile(0.7, 0.02),
    "rd_warm": Profile(0.3, 0.02),
    "cold": Profile(0.01, 0.02),
}
PROFILE_IDS = {name: i for i, name in enumerate(PROFILES)}
_ACTIVE = np.array([p.active for p in PROFILES.values()])
_WRITE = np.array([p.write for p in PROFILES.values()])
CLASS_ALIASES = {"wd": "wd", "rd": "rd_hot", "rd_hot": "rd_hot", "rd_warm": "rd_warm",
                 "cold": "cold", "idle": "idle"}


@dataclass(frozen=True)
class Phase:
    """Pages ``[first_page, last_page)`` follow ``klass`` for ``length`` passes from ``start``."""

    first_page: int
    last_page: int
    start: int
    length: int
    klass: str

    def __post_init__(self):
        if self.klass not in CLASS_ALIASES:
            raise SpecError(f"unknown phase class {self.klass!r}")
        if not 0 <= self.first_page < self.last_page:
            raise SpecError("phase page range must be non-empty")
        if self.start < 0 or self.length < 1:
            raise SpecError("phase start must be >= 0 and length >= 1")

    @property
    def end(self) -> int:
        return self.start + self.length


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    n_pages: int = 10_000
    n_passes: int = 200
    seed: int = 0
    samplings_per_pass: int = 100
    pass_interval_s: float = 1.0
    # wd_bursty
    bursty_fraction: float = 0.3
    burst_min: int = 30
    burst_max: int = 90
    off_min: int = 40
    off_max: int = 160
    burst_wd_prob: float = 0.92
    rd_hot_fraction: float = 0.1
    rd_warm_fraction: float = 0.2
    # bank_skewed
    skew: float = 0.8
    hot_fraction: float = 0.2
    hot_write_prob: float = 0.05
    # phased
    phases: tuple[Phase, ...] = ()
    # stream
    stream_width: int = 64
    stream_write_prob: float = 0.3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        if self.n_pages < 0 or self.n_passes < 0:
            raise SpecError("n_pages and n_passes must be non-negative")
        if self.samplings_per_pass < 1 or self.pass_interval_s <= 0:
            raise SpecError("need samplings_per_pass >= 1 and pass_interval_s > 0")
        if not 1 <= self.burst_min <= self.burst_max or not 0 <= self.off_min <= self.off_max:
            raise SpecError("burst/off ranges must satisfy 1 <= min <= max")
        fractions = self.bursty_fraction + self.rd_hot_fraction + self.rd_warm_fraction
        if min(self.bursty_fraction, self.rd_hot_fraction, self.rd_warm_fraction) < 0 or fractions > 1:
            raise SpecError("page-mix fractions must be non-negative and sum to at most 1")
        for name in ("burst_wd_prob", "skew", "hot_fraction", "hot_write_prob", "stream_write_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise SpecError(f"{name} must be in [0, 1]")
        phases = tuple(p if isinstance(p, Phase) else Phase(**p) for p in self.phases)
        object.__setattr__(self, "phases", phases)
        _check_overlap(phases)

    @property
    def window_ns(self) -> int:
        return int(round(self.pass_interval_s * 1e9 / self.samplings_per_pass))

    @property
    def pass_ns(self) -> int:
        return self.window_ns * self.samplings_per_pass

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phases"] = [asdict(p) for p in self.phases]
        return d


def _check_overlap(phases: tuple[Phase, ...]) -> None:
    for i, a in enumerate(phases):
        for b in phases[i + 1 :]:
            pages = a.first_page < b.last_page and b.first_page < a.last_page
            times = a.start < b.end and b.start < a.end
            if pages and times:
                raise SpecError(f"overlapping phases: {a} and {b}")


# --- trace containers ------------------------------------------------------------------


class Trace:
    """Time-ordered access stream delivered in chunks."""

    n_pages: int
    meta: dict
    hints: np.ndarray

    def chunks(self) -> Iterator[Chunk]:
        raise NotImplementedError

    @property
    def duration_ns(self) -> int:
        return int(self.meta.get("duration_ns", 0))

    def records(self) -> Iterator[TraceRecord]:
        for times, pages, offsets, writes in self.chunks():
            for t, p, o, w in zip(times.tolist(), pages.tolist(), offsets.tolist(), writes.tolist()):
                yield TraceRecord(t, p, o, "W" if w else "R")


class ArrayTrace(Trace):
    def __init__(self, times, pages, offsets, writes, meta=None, hints=None, n_pages=None):
        self.times = np.asarray(times, dtype=np.int64)
        self.pages = np.asarray(pages, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.writes = np.asarray(writes, dtype=bool)
        if n_pages is None:
            n_pages = int(self.pages.max()) + 1 if len(self.pages) else 0
            if hints is not None:
                n_pages = max(n_pages, len(hints))
        self.n_pages = n_pages
        self.meta = dict(meta or {})
        self.meta.setdefault("duration_ns", int(self.times[-1]) + 1 if len(self.times) else 0)
        h = np.full(n_pages, -1, dtype=np.int64)
        if hints is not None:
            hints = np.asarray(hints, dtype=np.int64)
            h[: len(hints)] = hints
        self.hints = h

    def __len__(self):
        return len(self.times)

    def chunks(self) -> Iterator[Chunk]:
        step = 1 << 20
        for i in range(0, len(self.times), step):
            yield (self.times[i : i + step], self.pages[i : i + step],
                   self.offsets[i : i + step], self.writes[i : i + step])


class SyntheticTrace(Trace):
    """A generator spec rendered lazily, one pass per chunk."""

    def __init__(self, spec: GeneratorSpec):
        self.spec = spec
        self.n_pages = spec.n_pages
        self.schedule = build_schedule(spec)
        self.hints = _hints_for(spec, self.schedule)
        self.meta = {
            "format_version": FORMAT_VERSION,
            "generator": spec.kind,
            "seed": spec.seed,
            "n_pages": spec.n_pages,
            "n_passes": spec.n_passes,
            "samplings_per_pass": spec.samplings_per_pass,
            "duration_ns": spec.pass_ns * spec.n_passes,
        }
        self._flags: np.ndarray | None = None

    def chunks(self) -> Iterator[Chunk]:
        spec = self.spec
        rng = np.random.default_rng([spec.seed, 1])
        for p in range(spec.n_passes):
            yield _render_pass(spec, self.schedule[:, p], p, rng)

    def wd_flags(self) -> np.ndarray:
        """Per-page, per-pass WD flags as a full-coverage profiler would see them."""
        if self._flags is None:
            flags = np.zeros((self.n_pages, self.spec.n_passes), dtype=np.int8)
            for p, (_, pages, _, writes) in enumerate(self.chunks()):
                acc = np.bincount(pages, minlength=self.n_pages)
                wr = np.bincount(pages[writes], minlength=self.n_pages)
                flags[:, p] = wd_rd_classes(acc - wr, wr) == 2
            self._flags = flags
        return self._flags

    def certificate(self) -> dict:
        """Re-measure the property the generator targets."""
        spec = self.spec
        if spec.kind == "wd_bursty":
            frac = wd_gap_fraction(self.wd_flags())
            return {"wd_gap_le1_fraction": round(frac, 6)}
        if spec.kind == "bank_skewed":
            hot = self.schedule[:, 0] == PROFILE_IDS["rd_hot"] if spec.n_passes else np.zeros(0, bool)
            banks = banks_of_colors(self.hints[hot])
            return {"hot_bank_imbalance": round(bank_imbalance(np.bincount(banks, minlength=N_BANKS)), 6)}
        if spec.kind == "phased":
            return {"phases": len(spec.phases)}
        return {"stream_width": spec.stream_width}


def _hints_for(spec: GeneratorSpec, schedule: np.ndarray) -> np.ndarray:
    hints = np.full(spec.n_pages, -1, dtype=np.int64)
    if spec.kind != "bank_skewed" or spec.n_pages == 0:
        return hints
    rng = np.random.default_rng([spec.seed, 2])
    hot = schedule[:, 0] == PROFILE_IDS["rd_hot"] if spec.n_passes else np.zeros(spec.n_pages, bool)
    banks = rng.integers(0, N_BANKS, spec.n_pages)
    skewed = rng.random(spec.n_pages) < spec.skew
    banks = np.where(hot & skewed, 0, banks)
    slabs = rng.integers(0, N_SLABS, spec.n_pages)
    return np.array([compose_color(int(b), int(s)) for b, s in zip(banks, slabs)], dtype=np.int64)


# --- schedules -------------------------------------------------------------------------


def build_schedule(spec: GeneratorSpec) -> np.ndarray:
    """Profile id per ``[page, pass]``."""
    n, T = spec.n_pages, spec.n_passes
    sched = np.full((n, T), PROFILE_IDS["cold"], dtype=np.int8)
    if n == 0 or T == 0:
        return sched
    rng = np.random.default_rng([spec.seed, 0])
    if spec.kind == "wd_bursty":
        return _bursty_schedule(spec, rng)
    if spec.kind == "bank_skewed":
        hot = rng.permutation(n)[: int(round(spec.hot_fraction * n))]
        sched[hot, :] = PROFILE_IDS["rd_hot"]
        return sched
    if spec.kind == "phased":
        sched[:] = PROFILE_IDS["idle"]
        for ph in spec.phases:
            hi = min(ph.last_page, n)
            sched[ph.first_page : hi, ph.start : min(ph.end, T)] = PROFILE_IDS[CLASS_ALIASES[ph.klass]]
        return sched
    # stream: the schedule is unused, pages follow the sweep
    return sched


def _bursty_schedule(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    n, T = spec.n_pages, spec.n_passes
    sched = np.full((n, T), PROFILE_IDS["cold"], dtype=np.int8)
    order = rng.permutation(n)
    n_bursty = int(round(spec.bursty_fraction * n))
    n_hot = int(round(spec.rd_hot_fraction * n))
    n_warm = int(round(spec.rd_warm_fraction * n))
    bursty = order[:n_bursty]
    sched[order[n_bursty : n_bursty + n_hot]] = PROFILE_IDS["rd_hot"]
    sched[order[n_bursty + n_hot : n_bursty + n_hot + n_warm]] = PROFILE_IDS["rd_warm"]
    wd, rd_hot, warm, cold = (PROFILE_IDS[k] for k in ("wd", "rd_hot", "rd_warm", "cold"))
    for page in np.sort(bursty):
        row = np.empty(T, dtype=np.int8)
        t = -int(rng.integers(0, spec.off_max + 1))  # random phase
        in_burst = False
        while t < T:
            if in_burst:
                length = int(rng.integers(spec.burst_min, spec.burst_max + 1))
                hits = rng.random(length) < spec.burst_wd_prob
                seg = np.where(hits, wd, rd_hot)
            else:
                length = max(int(rng.integers(spec.off_min, spec.off_max + 1)), 1)
                seg = np.where(rng.random(length) < 0.3, warm, cold)
            lo, hi = max(t, 0), min(t + length, T)
            if hi > lo:
                row[lo:hi] = seg[lo - t : hi - t]
            t += length
            in_burst = not in_burst
        sched[page] = row
    return sched


def wd_gap_fraction(flags: np.ndarray) -> float:
    """Share of gaps between consecutive WD passes of a page that are 0 or 1.

    A gap counts the non-WD passes in between, so back-to-back WD passes
    have gap 0.
    """
    flags = np.atleast_2d(np.asarray(flags, dtype=bool))
    total = small = 0
    for row in flags:
        idx = np.flatnonzero(row)
        if len(idx) < 2:
            continue
        gaps = np.diff(idx) - 1
        total += len(gaps)
        small += int(np.count_nonzero(gaps <= 1))
    return small / total if total else 1.0


# --- rendering -------------------------------------------------------------------------


def _render_pass(spec: GeneratorSpec, profile: np.ndarray, p: int, rng: np.random.Generator) -> Chunk:
    n, S, win = spec.n_pages, spec.samplings_per_pass, spec.window_ns
    base = p * spec.pass_ns
    if spec.kind == "stream":
        width = min(spec.stream_width, n)
        k = np.arange(S, dtype=np.int64)
        start = ((p * S + k) * width) % max(n, 1)
        win_idx = np.repeat(k, width)
        pages = (np.repeat(start, width) + np.tile(np.arange(width), S)) % max(n, 1)
        writes = rng.random(len(pages)) < spec.stream_write_prob
    else:
        active = _ACTIVE[profile]
        hit = rng.random((S, n)) < active[None, :]
        win_idx, pages = np.nonzero(hit)
        writes = rng.random(len(pages)) < _WRITE[profile[pages]]
    m = len(pages)
    lines = rng.integers(0, LINES_PER_PAGE, m)
    jitter = rng.integers(0, win, m)
    times = base + win_idx.astype(np.int64) * win + jitter
    # a packed (time, index) key sorts much faster than a stable argsort
    idx_bits = max(int(m).bit_length(), 1)
    if m and int(times.max()) < 1 << (62 - idx_bits):
        order = np.sort((times << idx_bits) | np.arange(m, dtype=np.int64)) & ((1 << idx_bits) - 1)
    else:
        order = np.argsort(times, kind="stable")
    return (times[order], pages[order].astype(np.int64), (lines[order] * LINE_SIZE).astype(np.int64),
            writes[order])


# --- generator entry points --------------------------------------------------------------


def gen_wd_bursty(spec: GeneratorSpec) -> SyntheticTrace:
    """Bursty write-domain pages over a read-domain and cold background.

    Warns when the schedule itself cannot give 80% of WD gaps at 0 or 1;
    the rendered trace's measured value lands in the certificate.
    """
    trace = SyntheticTrace(_with_kind(spec, "wd_bursty"))
    frac = wd_gap_fraction(trace.schedule == PROFILE_IDS["wd"])
    if frac < 0.8:
        warnings.warn(f"WD gap property not met: only {frac:.1%} of gaps are 0 or 1", stacklevel=2)
    return trace


def gen_bank_skewed(spec: GeneratorSpec) -> SyntheticTrace:
    return SyntheticTrace(_with_kind(spec, "bank_skewed"))


def gen_phased(spec: GeneratorSpec) -> SyntheticTrace:
    return SyntheticTrace(_with_kind(spec, "phased"))


def gen_stream(spec: GeneratorSpec) -> SyntheticTrace:
    return SyntheticTrace(_with_kind(spec, "stream"))


GENERATORS = {
    "wd_bursty": gen_wd_bursty,
    "bank_skewed": gen_bank_skewed,
    "phased": gen_phased,
    "stream": gen_stream,
}


def generate(spec: GeneratorSpec) -> SyntheticTrace:
    return GENERATORS[spec.kind](spec)


def _with_kind(spec: GeneratorSpec, kind: str) -> GeneratorSpec:
    if spec.kind != kind:
        raise SpecError(f"spec kind {spec.kind!r} passed to the {kind} generator")
    return spec


# --- text format -------------------------------------------------------------------------


def write_trace(trace: Trace, out: IO[str], certify: bool = True) -> None:
    """Serialise ``trace``: metadata, hints, then one record per line."""
    meta = dict(trace.meta)
    if certify and isinstance(trace, SyntheticTrace):
        meta["certificate"] = trace.certificate()
        meta["spec"] = trace.spec.to_dict()
    out.write(f"# format: hybridmem-trace v{FORMAT_VERSION}\n")
    for key in sorted(meta):
        if key == "format_version":
            continue
        out.write(f"# {key}: {json.dumps(meta[key], sort_keys=True)}\n")
    for page in np.flatnonzero(trace.hints >= 0):
        out.write(f"# hint {page} {trace.hints[page]}\n")
    for times, pages, offsets, writes in trace.chunks():
        ops = np.where(writes, "W", "R")
        buf = io.StringIO()
        np.savetxt(buf, np.column_stack([times, pages, offsets, ops]).astype(str), fmt="%s", delimiter=",")
        out.write(buf.getvalue())


def parse_trace(stream) -> ArrayTrace:
    """Parse the text format from a text or byte stream.

    Raises :class:`TraceError` naming the line for malformed records and
    for timestamps that go backwards.
    """
    meta: dict = {}
    hints: dict[int, int] = {}
    times, pages, offsets, writes = [], [], [], []
    last = -1
    for lineno, raw in enumerate(stream, start=1):
        line = raw.decode() if isinstance(raw, bytes) else raw
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            _parse_header(line[1:].strip(), lineno, meta, hints)
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise TraceError(f"expected 4 comma-separated fields, got {len(parts)}", lineno)
        try:
            t, page, off = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise TraceError(f"non-integer field ({exc})", lineno) from None
        op = parts[3].strip().upper()
        try:
            TraceRecord(t, page, off, op)
        except TraceError as exc:
            raise TraceError(str(exc), lineno) from None
        if t < last:
            raise TraceError(f"time {t} precedes previous record time {last}", lineno)
        last = t
        times.append(t)
        pages.append(page)
        offsets.append(off)
        writes.append(op == "W")
    n_pages = max(
        max(pages, default=-1) + 1,
        max(hints, default=-1) + 1,
        int(meta.get("n_pages", 0)),
    )
    hint_arr = np.full(n_pages, -1, dtype=np.int64)
    for page, color in hints.items():
        hint_arr[page] = color
    return ArrayTrace(times, pages, offsets, writes, meta, hint_arr, n_pages)


def _parse_header(body: str, lineno: int, meta: dict, hints: dict) -> None:
    if body.startswith("hint "):
        fields = body.split()
        try:
            page, color = int(fields[1]), int(fields[2])
        except (IndexError, ValueError):
            raise TraceError("hint lines need '# hint <page> <color>'", lineno) from None
        if page < 0 or not 0 <= color < N_COLORS:
            raise TraceError(f"hint out of range: page {page} color {color}", lineno)
        hints[page] = color
        return
    if ":" not in body:
        return  # free-form comment
    key, _, value = body.partition(":")
    value = value.strip()
    try:
        meta[key.strip()] = json.loads(value)
    except json.JSONDecodeError:
        meta[key.strip()] = value


def read_trace(path) -> ArrayTrace:
    with open(path, "rb") as fh:
        return parse_trace(fh)
