"""STDP learning: the hardware fixed-increment rule, the trace-based
reference rule, adaptive thresholds and weight normalization.

The hardware rule watches pre-synaptic spikes in a window around each
calculated time step: neurons that fired up to ``w_before`` steps before
(or at) a post-synaptic spike are potentiated by a constant ``delta``;
neurons that fired only within the ``w_after`` steps after it are
depressed by the same constant.  The calculation runs one step behind
the neuron pipeline because the after-window must be known.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .fixedpoint import FixedPoint
from .snpc import SpikeArray, WeightMemory

__all__ = [
    "StdpMode",
    "StdpParams",
    "SpikeHistory",
    "HistoryError",
    "stdp_step_fixed",
    "stdp_step_adaptive",
    "adapt_threshold",
    "normalize_weights",
]


class HistoryError(LookupError):
    """Requested spike-history step is not retained."""


class StdpMode(enum.Enum):
    FIXED_DELTA = "fixed_delta"
    ADAPTIVE_DELTA = "adaptive_delta"


@dataclass(frozen=True)
class StdpParams:
    """Learning constants.

    ``delta`` is the raw-LSB weight increment of the hardware rule.
    ``eta_pre``/``eta_post``/``tau_trace`` drive the software trace rule.
    ``theta_decay`` is quantized to Q16 when applied (truncating
    multiply, rounding toward zero).  ``norm_sum`` defaults to
    n_pre/10 in value units when left None.
    """

    mode: StdpMode = StdpMode.FIXED_DELTA
    delta: int = 1
    eta_pre: float = 1e-4
    eta_post: float = 1e-2
    tau_trace: float = 20.0
    w_before: int = 1
    w_after: int = 1
    w_min_raw: int = 0
    w_max_raw: int = 127
    theta_plus: FixedPoint = field(default_factory=lambda: FixedPoint(6, 7, 24))
    theta_decay: float = 1.0
    norm_sum: FixedPoint | None = None

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        if not 0.0 < self.theta_decay <= 1.0:
            raise ValueError("theta_decay must be in (0, 1]")
        if self.w_min_raw >= self.w_max_raw:
            raise ValueError("w_min_raw must be < w_max_raw")
        if self.w_before < 0 or self.w_after < 0:
            raise ValueError("window lengths must be >= 0")

    @property
    def theta_decay_q16(self) -> int:
        return min(int(round(self.theta_decay * 65536)), 65536)


class SpikeHistory:
    """Ring buffers of pre- and post-synaptic spike arrays, indexed by
    absolute time step.

    Steps before 0 read as silent (the history SRAM is cleared between
    samples); steps that were never pushed or have been evicted raise
    :class:`HistoryError`.
    """

    def __init__(self, pre_width: int, post_width: int, depth: int):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self._pre = np.zeros((depth, pre_width), dtype=np.uint8)
        self._post = np.zeros((depth, post_width), dtype=np.uint8)
        self.next_step = 0

    def push(self, pre, post):
        pre = pre.bits if isinstance(pre, SpikeArray) else np.asarray(pre, dtype=np.uint8)
        post = post.bits if isinstance(post, SpikeArray) else np.asarray(post, dtype=np.uint8)
        slot = self.next_step % self.depth
        self._pre[slot] = pre
        self._post[slot] = post
        self.next_step += 1

    def _check(self, step: int):
        if step >= self.next_step:
            raise HistoryError(f"step {step} not yet recorded (next={self.next_step})")
        if step < self.next_step - self.depth:
            raise HistoryError(f"step {step} evicted (window starts at "
                               f"{self.next_step - self.depth})")

    def pre_at(self, step: int) -> np.ndarray:
        if step < 0:
            return np.zeros(self._pre.shape[1], dtype=np.uint8)
        self._check(step)
        return self._pre[step % self.depth]

    def post_at(self, step: int) -> np.ndarray:
        if step < 0:
            return np.zeros(self._post.shape[1], dtype=np.uint8)
        self._check(step)
        return self._post[step % self.depth]


def stdp_step_fixed(weights: WeightMemory, history: SpikeHistory, t: int,
                    params: StdpParams) -> WeightMemory:
    """Apply the hardware fixed-increment rule for calculated step t.

    Mutates and returns ``weights``.  Requires history for steps
    [t - w_before, t + w_after]; silent post array at t skips the whole
    calculation (the hardware checks the post SRAM first).
    """
    post = history.post_at(t)
    for s in range(t - params.w_before, t + params.w_after + 1):
        history.pre_at(s)  # contract: the full window must be present
    post_idx = np.nonzero(post)[0]
    if post_idx.size == 0:
        return weights
    before = np.zeros(weights.n_pre, dtype=bool)
    for s in range(t - params.w_before, t + 1):
        before |= history.pre_at(s) != 0
    after = np.zeros(weights.n_pre, dtype=bool)
    for s in range(t + 1, t + params.w_after + 1):
        after |= history.pre_at(s) != 0
    dep = after & ~before
    raw = weights.raw
    bi = np.nonzero(before)[0]
    if bi.size:
        block = raw[np.ix_(bi, post_idx)]
        raw[np.ix_(bi, post_idx)] = np.minimum(block + params.delta, params.w_max_raw)
    di = np.nonzero(dep)[0]
    if di.size:
        block = raw[np.ix_(di, post_idx)]
        raw[np.ix_(di, post_idx)] = np.maximum(block - params.delta, params.w_min_raw)
    return weights


def stdp_step_adaptive(weights: np.ndarray, chi_pre: np.ndarray, chi_post: np.ndarray,
                       pre_spikes: np.ndarray, post_spikes: np.ndarray,
                       params: StdpParams, w_max: float = 1.0):
    """One step of the software trace rule (real-valued training).

    Traces decay by exp(-1/tau_trace) each step, then snap to 1 on their
    own spike; a post spike at j potentiates w[:, j] by eta_post * chi_pre
    and a pre spike at i depresses w[i, :] by eta_pre * chi_post.  Weights
    clamp to [0, w_max].  Mutates all three arrays in place.
    """
    decay = math.exp(-1.0 / params.tau_trace)
    chi_pre *= decay
    chi_post *= decay
    pre_idx = np.nonzero(pre_spikes)[0]
    post_idx = np.nonzero(post_spikes)[0]
    chi_pre[pre_idx] = 1.0
    chi_post[post_idx] = 1.0
    if post_idx.size:
        weights[:, post_idx] += params.eta_post * chi_pre[:, None]
    if pre_idx.size:
        weights[pre_idx, :] -= params.eta_pre * chi_post[None, :]
    np.clip(weights, 0.0, w_max, out=weights)
    return weights


def adapt_threshold(theta: np.ndarray, fired: np.ndarray, params: StdpParams) -> np.ndarray:
    """Adaptive threshold: bump fired neurons by theta_plus, then decay all
    thetas multiplicatively (Q16, truncated toward zero).

    Learning-mode only; theta is frozen at inference.  Mutates ``theta``
    (int64 raw codes) in place.
    """
    fired = fired.bits if isinstance(fired, SpikeArray) else np.asarray(fired)
    theta += np.where(fired != 0, params.theta_plus.raw, 0)
    theta[:] = (theta * params.theta_decay_q16) >> 16
    return theta


def normalize_weights(weights: WeightMemory, norm_sum: FixedPoint) -> WeightMemory:
    """Rescale each post-neuron's column so its raw sum hits norm_sum.

    Columns with non-positive sums are left alone.  Re-quantization is
    round-half-away-from-zero, so the post-condition sum error is at most
    n_pre/2 raw LSBs.  Runs once per training sample, between samples.
    """
    if norm_sum.frac_bits != weights.frac_bits:
        raise ValueError("norm_sum frac_bits must match the weight memory")
    raw = weights.raw
    sums = raw.sum(axis=0, dtype=np.int64)
    scale = np.where(sums > 0, norm_sum.raw / np.maximum(sums, 1), 1.0)
    scaled = raw * scale
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    raw[:, :] = np.clip(rounded, weights.w_min, weights.w_max).astype(np.int32)
    return weights
