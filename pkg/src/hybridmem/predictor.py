"""Write-domain history window and future-state prediction.

Each page keeps its last ``window_len`` per-pass WD flags (1 = the page was
write-domain in that pass).  The whole-window popcount gives a base class;
a uniform ``k_len`` suffix that contradicts the base class overrides it
(the *reverse* case).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

MAX_WINDOW = 16


class WdState(enum.IntEnum):
    UN_WD = 0
    WD_FREQ_L = 1
    WD_FREQ_H = 2


@dataclass(frozen=True)
class PredictorConfig:
    window_len: int = 8
    k_len: int = 3
    high_threshold: int = 6
    low_threshold: int = 4
    validity_horizon: int = 10

    def __post_init__(self):
        if not 1 <= self.window_len <= MAX_WINDOW:
            raise ValueError(f"window_len must be in [1, {MAX_WINDOW}]")
        if not 1 <= self.k_len < self.window_len:
            raise ValueError("k_len must satisfy 1 <= k_len < window_len")
        if not self.low_threshold <= self.high_threshold <= self.window_len:
            raise ValueError("need low_threshold <= high_threshold <= window_len")
        if self.validity_horizon < 1:
            raise ValueError("validity_horizon must be >= 1")


@dataclass(frozen=True)
class FutureState:
    state: WdState
    is_reverse: bool = False


@dataclass(frozen=True)
class WdHistory:
    """Oldest flag first."""

    bits: tuple[int, ...] = ()
    window_len: int = 8

    def __len__(self):
        return len(self.bits)

    @property
    def full(self) -> bool:
        return len(self.bits) >= self.window_len


def push_history(h: WdHistory, wd_bit: int) -> WdHistory:
    if wd_bit not in (0, 1):
        raise ValueError(f"wd_bit must be 0 or 1, got {wd_bit!r}")
    bits = (h.bits + (int(wd_bit),))[-h.window_len :]
    return WdHistory(bits, h.window_len)


def base_class(ones: int, cfg: PredictorConfig) -> WdState:
    if ones >= cfg.high_threshold:
        return WdState.WD_FREQ_H
    if ones >= cfg.low_threshold:
        return WdState.WD_FREQ_L
    return WdState.UN_WD


def predict(h: WdHistory, cfg: PredictorConfig = PredictorConfig()) -> FutureState:
    if len(h.bits) < cfg.window_len:
        return FutureState(WdState.UN_WD, False)
    window = h.bits[-cfg.window_len :]
    base = base_class(sum(window), cfg)
    suffix = window[-cfg.k_len :]
    if base == WdState.UN_WD and all(suffix):
        return FutureState(WdState.WD_FREQ_H, True)
    if base != WdState.UN_WD and not any(suffix):
        return FutureState(WdState.UN_WD, True)
    return FutureState(base, False)


# --- vectorised form used by the simulator -----------------------------------

_POPCOUNT16 = np.array([bin(i).count("1") for i in range(1 << MAX_WINDOW)], dtype=np.int8)


class HistoryTable:
    """Per-page WD histories packed as bit fields (bit 0 = newest)."""

    def __init__(self, n_pages: int, window_len: int = 8):
        if not 1 <= window_len <= MAX_WINDOW:
            raise ValueError(f"window_len must be in [1, {MAX_WINDOW}]")
        self.window_len = window_len
        self._mask = (1 << window_len) - 1
        self.bits = np.zeros(n_pages, dtype=np.uint16)
        self.length = np.zeros(n_pages, dtype=np.int8)

    def push(self, pages: np.ndarray, wd_bits: np.ndarray) -> None:
        pages = np.asarray(pages, dtype=np.int64)
        wd = np.asarray(wd_bits).astype(np.uint16)
        shifted = (self.bits[pages].astype(np.uint32) << 1) | wd
        self.bits[pages] = (shifted & self._mask).astype(np.uint16)
        self.length[pages] = np.minimum(self.length[pages] + 1, self.window_len)

    def history(self, page: int) -> WdHistory:
        n = int(self.length[page])
        b = int(self.bits[page])
        return WdHistory(tuple((b >> i) & 1 for i in reversed(range(n))), self.window_len)

    def predict(self, cfg: PredictorConfig) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(state, is_reverse)`` arrays for every page."""
        if cfg.window_len != self.window_len:
            raise ValueError("predictor window_len does not match the history table")
        return predict_packed(self.bits, self.length, cfg)


def predict_packed(
    bits: np.ndarray, length: np.ndarray, cfg: PredictorConfig
) -> tuple[np.ndarray, np.ndarray]:
    ones = _POPCOUNT16[bits]
    base = np.where(
        ones >= cfg.high_threshold,
        WdState.WD_FREQ_H,
        np.where(ones >= cfg.low_threshold, WdState.WD_FREQ_L, WdState.UN_WD),
    ).astype(np.int8)
    k_mask = (1 << cfg.k_len) - 1
    suffix = bits & k_mask
    rev_up = (base == WdState.UN_WD) & (suffix == k_mask)
    rev_down = (base != WdState.UN_WD) & (suffix == 0)
    state = np.where(rev_up, WdState.WD_FREQ_H, np.where(rev_down, WdState.UN_WD, base))
    reverse = rev_up | rev_down
    cold = length < cfg.window_len
    state = np.where(cold, WdState.UN_WD, state).astype(np.int8)
    reverse = reverse & ~cold
    return state, reverse


def evaluate_predictor(flags, cfg: PredictorConfig = PredictorConfig()) -> dict[int, float]:
    """Accuracy of predictions against the class realised ``d`` passes later.

    ``flags`` is a per-pass WD flag sequence, or a 2-D array with one row per
    page.  At every position ``t`` with a full window, the prediction made from
    the window ending at ``t`` is compared with the base class of the window
    ending at ``t + d``.
    """
    arr = np.atleast_2d(np.asarray(flags, dtype=np.int64))
    n_pass = arr.shape[1]
    w, horizon = cfg.window_len, cfg.validity_horizon
    if n_pass <= w + horizon:
        raise ValueError(
            f"trace of {n_pass} passes too short for window {w} and horizon {horizon}"
        )
    # windows[:, t] = window ending at pass t (valid for t >= w - 1)
    weights = (1 << np.arange(w - 1, -1, -1)).astype(np.int64)
    win = sliding_window_view(arr, w, axis=1)  # [page, t - w + 1, w]
    packed = (win * weights).sum(axis=2).astype(np.uint16)
    ones = win.sum(axis=2)
    full = np.full(packed.shape, w, dtype=np.int8)
    predicted, _ = predict_packed(packed, full, cfg)
    realised = np.where(
        ones >= cfg.high_threshold,
        WdState.WD_FREQ_H,
        np.where(ones >= cfg.low_threshold, WdState.WD_FREQ_L, WdState.UN_WD),
    )
    n_win = packed.shape[1]
    result = {}
    for d in range(1, horizon + 1):
        pred = predicted[:, : n_win - d]
        real = realised[:, d:]
        result[d] = float(np.mean(pred == real))
    return result
