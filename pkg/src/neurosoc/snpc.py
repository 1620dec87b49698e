"""Spiking neuro-processing core: spike-array decode, weight-memory read,
per-neuron accumulation, recurrent inhibition and output collection.

The physical core holds 256 neurons with a 256-bit input spike array
(65,536 learnable synapses plus an equally sized fixed-weight recurrent
crossbar); the model keeps both dimensions configurable.  Recurrent
lateral inhibition is one step delayed: the outputs of step t are read
back from storage and inhibit step t+1.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .fixedpoint import FixedPoint
from .neuron import NeuronParams, ResetMode

__all__ = [
    "SpikeArray",
    "decode_next",
    "WeightMemory",
    "RecurrentConfig",
    "CoreConfig",
    "SnpcCore",
    "save_weight_file",
    "load_weight_file",
    "WeightFileError",
]

_MAGIC = b"SNPW"
_THETA_MAGIC = b"THTA"


class WeightFileError(ValueError):
    """Malformed weight file."""


class SpikeArray:
    """Fixed-width bit vector, one bit per neuron; LSB is index 0."""

    __slots__ = ("bits",)

    def __init__(self, bits: np.ndarray):
        bits = np.ascontiguousarray(bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.size == 0:
            raise ValueError("spike array must be a non-empty 1-d bit vector")
        self.bits = (bits != 0).astype(np.uint8)

    @classmethod
    def zeros(cls, width: int) -> "SpikeArray":
        if width <= 0:
            raise ValueError("width must be > 0")
        return cls.__new__(cls)._init_raw(np.zeros(width, dtype=np.uint8))

    def _init_raw(self, bits):
        self.bits = bits
        return self

    @classmethod
    def from_indices(cls, width: int, indices) -> "SpikeArray":
        arr = cls.zeros(width)
        arr.bits[list(indices)] = 1
        return arr

    @classmethod
    def from_int(cls, width: int, mask: int) -> "SpikeArray":
        arr = cls.zeros(width)
        for i in range(width):
            if (mask >> i) & 1:
                arr.bits[i] = 1
        return arr

    @property
    def width(self) -> int:
        return self.bits.size

    def to_int(self) -> int:
        mask = 0
        for i in self.indices():
            mask |= 1 << int(i)
        return mask

    def indices(self) -> np.ndarray:
        return np.nonzero(self.bits)[0]

    def count(self) -> int:
        return int(self.bits.sum())

    def any(self) -> bool:
        return bool(self.bits.any())

    def copy(self) -> "SpikeArray":
        return SpikeArray.__new__(SpikeArray)._init_raw(self.bits.copy())

    def set(self, index: int):
        self.bits[index] = 1

    def __or__(self, other: "SpikeArray") -> "SpikeArray":
        return SpikeArray(self.bits | other.bits)

    def __eq__(self, other):
        return isinstance(other, SpikeArray) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.width, self.to_int()))

    def __repr__(self):
        return f"SpikeArray(width={self.width}, set={self.indices().tolist()})"


def decode_next(spikes: SpikeArray):
    """Extract the lowest set-bit index; returns (index, remaining) where
    the remaining array has that one-hot bit cleared (XOR erase), or None
    when the array is empty."""
    idx = spikes.indices()
    if idx.size == 0:
        return None
    first = int(idx[0])
    remaining = spikes.copy()
    remaining.bits[first] ^= 1
    return first, remaining


class WeightMemory:
    """Per-core synapse storage: n_pre rows of n_post signed weights.

    ``weights_per_word`` is the SRAM banking merge factor (e.g. 8 8-bit
    weights per 64-bit word); it affects only the word-count accounting,
    never the step results.
    """

    def __init__(self, n_pre: int, n_post: int, w_bits: int = 8,
                 frac_bits: int = 7, weights_per_word: int = 8):
        if n_pre <= 0 or n_post <= 0:
            raise ValueError("weight memory dimensions must be positive")
        if not 2 <= w_bits <= 32:
            raise ValueError("w_bits must be in [2, 32]")
        if weights_per_word < 1:
            raise ValueError("weights_per_word must be >= 1")
        self.n_pre = n_pre
        self.n_post = n_post
        self.w_bits = w_bits
        self.frac_bits = frac_bits
        self.weights_per_word = weights_per_word
        self.raw = np.zeros((n_pre, n_post), dtype=np.int32)

    @property
    def w_min(self) -> int:
        return -(1 << (self.w_bits - 1))

    @property
    def w_max(self) -> int:
        return (1 << (self.w_bits - 1)) - 1

    def word_count(self) -> int:
        # each row is banked into ceil(n_post / merge) words
        per_row = -(-self.n_post // self.weights_per_word)
        return self.n_pre * per_row

    def load(self, table: np.ndarray):
        """Burst write, row-major by pre-synaptic index."""
        table = np.asarray(table)
        if table.shape != (self.n_pre, self.n_post):
            raise ValueError(
                f"weight table shape {table.shape} != ({self.n_pre}, {self.n_post})"
            )
        if table.min() < self.w_min or table.max() > self.w_max:
            raise ValueError(f"weight values outside signed {self.w_bits}-bit range")
        self.raw[:, :] = table

    def read(self) -> np.ndarray:
        """Burst read; exact round-trip of :meth:`load`."""
        return self.raw.copy()

    def copy(self) -> "WeightMemory":
        dup = WeightMemory(self.n_pre, self.n_post, self.w_bits,
                           self.frac_bits, self.weights_per_word)
        dup.raw[:, :] = self.raw
        return dup


@dataclass(frozen=True)
class RecurrentConfig:
    """Fixed negative-weight all-to-all feedback (lateral inhibition).

    No RAM backs this crossbar; the weight is a single constant.  Self
    connections are excluded by default (a neuron does not inhibit
    itself).
    """

    enabled: bool = False
    w_inh: FixedPoint = field(default_factory=lambda: FixedPoint(-64, 7, 16))
    self_connect: bool = False

    def __post_init__(self):
        if self.enabled and self.w_inh.raw > 0:
            raise ValueError("recurrent weight must be <= 0")


@dataclass(frozen=True)
class CoreConfig:
    n_pre: int = 256
    n_post: int = 256
    w_bits: int = 8
    frac_bits: int = 7
    acc_bits: int = 24
    neuron: NeuronParams = None
    recurrent: RecurrentConfig = field(default_factory=RecurrentConfig)
    weights_per_word: int = 8

    def __post_init__(self):
        if self.neuron is None:
            object.__setattr__(self, "neuron", NeuronParams.default(self.frac_bits, self.acc_bits))

    @property
    def acc_min(self) -> int:
        return -(1 << (self.acc_bits - 1))

    @property
    def acc_max(self) -> int:
        return (1 << (self.acc_bits - 1)) - 1


class SnpcCore:
    """One neuro-processing core; a unit of exclusive ownership.

    State arrays are int64 raw codes at the core's frac_bits scale.  The
    accumulator must be wide enough that a whole step's worth of weighted
    inputs cannot saturate it mid-step (this makes the adder-tree model
    exactly equal to per-add saturation); the constructor enforces a
    conservative headroom bound.
    """

    def __init__(self, config: CoreConfig):
        self.config = config
        self.weights = WeightMemory(config.n_pre, config.n_post, config.w_bits,
                                    config.frac_bits, config.weights_per_word)
        w_peak = 1 << (config.w_bits - 1)
        inh_peak = abs(config.recurrent.w_inh.raw) if config.recurrent.enabled else 0
        step_peak = config.n_pre * w_peak + config.n_post * inh_peak
        if step_peak > (config.acc_max - config.neuron.threshold_base.raw) // 8:
            raise ValueError(
                f"accumulator too narrow: {config.acc_bits} bits cannot absorb a "
                f"full step of {step_peak} raw units without saturation risk"
            )
        self.v = np.zeros(config.n_post, dtype=np.int64)
        self.theta = np.zeros(config.n_post, dtype=np.int64)
        self.refrac = np.zeros(config.n_post, dtype=np.int64)
        self.prev_out = np.zeros(config.n_post, dtype=np.uint8)
        self.fired = np.zeros(config.n_post, dtype=np.uint8)
        self.model_cycles = 0
        self.reset_state()

    def reset_state(self):
        """Clear membrane, refractory and output storage; theta persists."""
        self.v[:] = self.config.neuron.v_rest.raw
        self.refrac[:] = 0
        self.prev_out[:] = 0
        self.fired[:] = 0

    def reset_theta(self):
        self.theta[:] = 0

    def load_weights(self, table: np.ndarray):
        self.weights.load(table)

    def read_weights(self) -> np.ndarray:
        return self.weights.read()

    def _neuron_args(self):
        p = self.config.neuron
        r = self.config.recurrent
        return dict(
            threshold=p.threshold_base.raw,
            leak=p.leak.raw,
            v_rest=p.v_rest.raw,
            v_min=p.v_min.raw,
            refrac_len=p.refrac_len,
            reset_by_sub=p.reset_mode is ResetMode.BY_SUBTRACTION,
            acc_min=self.config.acc_min,
            acc_max=self.config.acc_max,
            w_inh=r.w_inh.raw if r.enabled else 0,
            recurrent=r.enabled,
            self_connect=r.self_connect,
        )

    def step(self, input_spikes: SpikeArray) -> SpikeArray:
        """Advance one time step; returns the output spike array.

        Decode + weight read cost one model cycle per set input bit
        (recurrent feedback decodes the stored previous outputs the same
        way).
        """
        if input_spikes.width != self.config.n_pre:
            raise ValueError(
                f"input width {input_spikes.width} != core n_pre {self.config.n_pre}"
            )
        self.model_cycles += input_spikes.count()
        if self.config.recurrent.enabled:
            self.model_cycles += int(self.prev_out.sum())
        out = np.zeros((1, self.config.n_post), dtype=np.uint8)
        kernels.lif_run(input_spikes.bits.reshape(1, -1), self.weights.raw,
                        self.v, self.theta, self.refrac, self.prev_out, out,
                        **self._neuron_args())
        self.fired[:] = out[0]
        return SpikeArray(out[0])

    def run(self, in_spikes: np.ndarray) -> np.ndarray:
        """Bulk variant of :meth:`step` over a [T, n_pre] spike raster."""
        in_spikes = np.ascontiguousarray(in_spikes, dtype=np.uint8)
        if in_spikes.ndim != 2 or in_spikes.shape[1] != self.config.n_pre:
            raise ValueError("spike raster must be [T, n_pre]")
        self.model_cycles += int(in_spikes.sum())
        out = np.zeros((in_spikes.shape[0], self.config.n_post), dtype=np.uint8)
        kernels.lif_run(in_spikes, self.weights.raw, self.v, self.theta,
                        self.refrac, self.prev_out, out, **self._neuron_args())
        if out.shape[0]:
            self.fired[:] = out[-1]
        return out

    def train_run(self, in_spikes: np.ndarray, stdp) -> np.ndarray:
        """Run one sample with the fused fixed-increment STDP pipeline and
        adaptive threshold (see :mod:`neurosoc.learning` for the rules)."""
        in_spikes = np.ascontiguousarray(in_spikes, dtype=np.uint8)
        if in_spikes.ndim != 2 or in_spikes.shape[1] != self.config.n_pre:
            raise ValueError("spike raster must be [T, n_pre]")
        self.model_cycles += int(in_spikes.sum())
        out = np.zeros((in_spikes.shape[0], self.config.n_post), dtype=np.uint8)
        kernels.stdp_lif_run(in_spikes, self.weights.raw, self.v, self.theta,
                             self.refrac, self.prev_out, out,
                             **self._neuron_args(),
                             delta=stdp.delta,
                             w_min=stdp.w_min_raw, w_max=stdp.w_max_raw,
                             w_before=stdp.w_before, w_after=stdp.w_after,
                             theta_plus=stdp.theta_plus.raw,
                             theta_decay_q16=stdp.theta_decay_q16)
        if out.shape[0]:
            self.fired[:] = out[-1]
        return out


def save_weight_file(path, weights: WeightMemory, theta: np.ndarray | None = None,
                     theta_frac_bits: int | None = None):
    """Serialize a weight table (little-endian SNPW format).

    Header: magic "SNPW", u32 n_pre, u32 n_post, u8 w_bits, u8 frac_bits;
    then row-major raw weight values (1, 2 or 4 bytes each depending on
    w_bits).  A trained-parameter file appends a theta section: magic
    "THTA", u32 count, u8 frac_bits, count i32 raw values.
    """
    dtype = _weight_dtype(weights.w_bits)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIBB", weights.n_pre, weights.n_post,
                             weights.w_bits, weights.frac_bits))
        fh.write(np.ascontiguousarray(weights.raw, dtype=dtype).tobytes())
        if theta is not None:
            if theta_frac_bits is None:
                theta_frac_bits = weights.frac_bits
            theta = np.asarray(theta, dtype=np.int32)
            fh.write(_THETA_MAGIC)
            fh.write(struct.pack("<IB", theta.size, theta_frac_bits))
            fh.write(np.ascontiguousarray(theta, dtype="<i4").tobytes())


def load_weight_file(path):
    """Inverse of :func:`save_weight_file`.

    Returns (WeightMemory, theta or None, theta_frac_bits or None).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise WeightFileError(f"bad magic {blob[:4]!r}, expected {_MAGIC!r}")
    if len(blob) < 14:
        raise WeightFileError("truncated header")
    n_pre, n_post, w_bits, frac_bits = struct.unpack("<IIBB", blob[4:14])
    dtype = _weight_dtype(w_bits)
    nbytes = n_pre * n_post * dtype.itemsize
    body = blob[14:14 + nbytes]
    if len(body) != nbytes:
        raise WeightFileError("truncated weight payload")
    mem = WeightMemory(n_pre, n_post, w_bits=w_bits, frac_bits=frac_bits)
    mem.raw[:, :] = np.frombuffer(body, dtype=dtype).reshape(n_pre, n_post)
    rest = blob[14 + nbytes:]
    theta = None
    theta_frac = None
    if rest:
        if rest[:4] != _THETA_MAGIC:
            raise WeightFileError(f"bad theta magic {rest[:4]!r}")
        count, theta_frac = struct.unpack("<IB", rest[4:9])
        tbytes = rest[9:9 + 4 * count]
        if len(tbytes) != 4 * count:
            raise WeightFileError("truncated theta payload")
        theta = np.frombuffer(tbytes, dtype="<i4").copy()
    return mem, theta, theta_frac


def _weight_dtype(w_bits: int) -> np.dtype:
    if w_bits <= 8:
        return np.dtype("<i1")
    if w_bits <= 16:
        return np.dtype("<i2")
    return np.dtype("<i4")
