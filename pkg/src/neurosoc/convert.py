"""ANN-to-SNN conversion: data-based weight normalization, IF spiking
layers with threshold 1, fixed-point/integer variants, and accuracy-vs-
time-step evaluation.

Layers are wired feed-forward with a one-step transport delay (layer l
consumes layer l-1's previous-step outputs), which is exactly what the
on-chip network provides; the direct evaluation here and a NoC-backed
run are therefore spike-for-spike identical when transport is lossless.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoding import EncoderParams, poisson_encode
from .fixedpoint import FixedPoint, quantize_array
from .mlp import MlpModel
from .neuron import NeuronParams, ResetMode
from .snpc import CoreConfig, RecurrentConfig, SnpcCore, load_weight_file, save_weight_file

__all__ = [
    "ConversionError",
    "normalize_for_snn",
    "FloatLayer",
    "CoreLayer",
    "PartitionedLayer",
    "LayeredNet",
    "convert_to_snn",
    "ConversionReport",
    "evaluate",
    "save_snn",
    "load_snn",
]


class ConversionError(ValueError):
    pass


def normalize_for_snn(model: MlpModel, calib_pixels: np.ndarray) -> MlpModel:
    """Scale each layer so every calibration ReLU activation lies in [0, 1].

    Layer l's weights are multiplied by max-activation(l-1)/max-activation(l)
    (the input "layer" max is the largest calibration pixel), after which
    the spiking threshold can be fixed at 1 everywhere.
    """
    acts = model.forward(calib_pixels)
    maxima = [float(calib_pixels.max())]
    for i, a in enumerate(acts):
        a = np.maximum(a, 0.0)  # the last layer normalizes on its ReLU image
        m = float(a.max())
        if m <= 0.0:
            raise ConversionError(f"dead layer {i}: all calibration activations are zero")
        maxima.append(m)
    scaled = [w * (maxima[i] / maxima[i + 1]) for i, w in enumerate(model.weights)]
    return MlpModel(model.layer_sizes, scaled)


class FloatLayer:
    """Float64 IF layer: threshold 1.0, reset to rest, no leak.

    The reference software model for conversion accuracy; the weighted
    per-step input is a single GEMM over the whole sample.
    """

    def __init__(self, weights: np.ndarray,
                 reset_mode: ResetMode = ResetMode.TO_REST):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.threshold = 1.0
        self.reset_mode = reset_mode

    @property
    def n_out(self) -> int:
        return self.weights.shape[1]

    def run(self, in_spikes: np.ndarray) -> np.ndarray:
        contrib = in_spikes.astype(np.float64) @ self.weights
        T = in_spikes.shape[0]
        v = np.zeros(self.n_out)
        out = np.zeros((T, self.n_out), dtype=np.uint8)
        for t in range(T):
            v += contrib[t]
            fire = v >= self.threshold
            if self.reset_mode is ResetMode.TO_REST:
                v[fire] = 0.0
            else:
                v[fire] -= self.threshold
            out[t] = fire
        return out


class CoreLayer:
    """Fixed-point IF layer backed by a neuro-processing core.

    ``frac_bits`` labels the representation; INT mode reuses the 7-bit
    raw codes as plain integers (everything scaled by 2**7), which is
    arithmetically identical.
    """

    def __init__(self, raw_weights: np.ndarray, threshold_raw: int, frac_bits: int,
                 w_bits: int = 8, acc_bits: int = 24,
                 reset_mode: ResetMode = ResetMode.TO_REST):
        n_pre, n_post = raw_weights.shape
        acc_min = -(1 << (acc_bits - 1))
        fb = min(frac_bits, acc_bits - 1)
        neuron = NeuronParams(
            threshold_base=FixedPoint(threshold_raw, fb, acc_bits),
            leak=FixedPoint(0, fb, acc_bits),
            v_rest=FixedPoint(0, fb, acc_bits),
            # rate coding integrates signed evidence: no potential floor
            v_min=FixedPoint(acc_min, fb, acc_bits),
            refrac_len=0,
            reset_mode=reset_mode,
        )
        self.core = SnpcCore(CoreConfig(
            n_pre=n_pre, n_post=n_post, w_bits=w_bits, frac_bits=frac_bits,
            acc_bits=acc_bits, neuron=neuron, recurrent=RecurrentConfig(enabled=False),
        ))
        self.core.load_weights(raw_weights)
        self.frac_bits = frac_bits

    @property
    def n_out(self) -> int:
        return self.core.config.n_post

    def run(self, in_spikes: np.ndarray) -> np.ndarray:
        self.core.reset_state()
        return self.core.run(in_spikes)


class PartitionedLayer:
    """A logical layer sliced over several cores (neuron-space split);
    every core receives the full fan-in via the interconnect."""

    def __init__(self, parts: list):
        self.parts = parts

    @property
    def n_out(self) -> int:
        return sum(p.n_out for p in self.parts)

    def run(self, in_spikes: np.ndarray) -> np.ndarray:
        return np.concatenate([p.run(in_spikes) for p in self.parts], axis=1)


class LayeredNet:
    """Feed-forward stack with the canonical one-step inter-layer delay."""

    def __init__(self, layers: list, name: str = ""):
        self.layers = layers
        self.name = name

    def run_sample(self, in_spikes: np.ndarray) -> np.ndarray:
        cur = np.ascontiguousarray(in_spikes, dtype=np.uint8)
        for i, layer in enumerate(self.layers):
            if i > 0:
                shifted = np.zeros_like(cur)
                shifted[1:] = cur[:-1]
                cur = shifted
            cur = np.ascontiguousarray(layer.run(cur), dtype=np.uint8)
        return cur


def convert_to_snn(model: MlpModel, mode: str = "float", frac_bits: int = 7,
                   w_bits: int = 8, max_neurons_per_core: int | None = None,
                   allow_partition: bool = True) -> LayeredNet:
    """Build the spiking version of a normalized model.

    ``mode``: "float" (exact software reference), "fixed" (fixed-point
    weights/threshold at ``frac_bits``), or "int" (the 7-bit codes taken
    as plain integers).  Layers wider than ``max_neurons_per_core`` are
    partitioned across cores (fan-in delivered to every part) unless
    partitioning is disabled.
    """
    layers = []
    for w in model.weights:
        if mode == "float":
            layers.append(FloatLayer(w))
            continue
        fb = 7 if mode == "int" else frac_bits
        raw = quantize_array(w, fb, w_bits)
        thr = 1 << fb
        label_fb = 0 if mode == "int" else fb
        n_post = raw.shape[1]
        cap = max_neurons_per_core or n_post
        if n_post > cap:
            if not allow_partition:
                raise ConversionError(
                    f"layer of {n_post} neurons exceeds core capacity {cap}"
                )
            parts = [CoreLayer(raw[:, lo:lo + cap], thr, label_fb, w_bits)
                     for lo in range(0, n_post, cap)]
            layers.append(PartitionedLayer(parts))
        else:
            layers.append(CoreLayer(raw, thr, label_fb, w_bits))
    return LayeredNet(layers, name=mode if mode != "fixed" else f"fixed{frac_bits}")


@dataclass
class ConversionReport:
    """Per-variant accuracy curve over time steps."""

    n_steps: int
    n_samples: int
    curves: dict  # variant name -> np.ndarray [n_steps] accuracy

    def final_accuracy(self, variant: str) -> float:
        return float(self.curves[variant][-1])

    def accuracy_at(self, variant: str, step: int) -> float:
        return float(self.curves[variant][step])

    def saturation_step(self, variant: str, window: float = 0.005) -> int:
        """First step from which accuracy stays within ``window`` of final."""
        curve = self.curves[variant]
        final = curve[-1]
        ok = np.abs(curve - final) <= window
        # last violation determines saturation
        bad = np.nonzero(~ok)[0]
        return int(bad[-1] + 1) if bad.size else 0

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("step,variant,accuracy\n")
            for name in sorted(self.curves):
                for t, acc in enumerate(self.curves[name]):
                    fh.write(f"{t},{name},{acc:.6f}\n")


def evaluate(nets: dict, pixels: np.ndarray, labels: np.ndarray,
             params: EncoderParams, collect_spikes: bool = False,
             progress=None) -> ConversionReport | tuple:
    """Run every net on identical Poisson-encoded inputs.

    Classification after step t is the argmax of cumulative output spike
    counts (ties break to the lowest neuron index).  Returns the report;
    with ``collect_spikes`` also returns the raw output rasters keyed by
    (variant, sample) for train-of-spikes comparisons.
    """
    n = pixels.shape[0]
    n_steps = params.n_steps
    correct = {name: np.zeros(n_steps, dtype=np.int64) for name in nets}
    rasters = {}
    for i in range(n):
        spikes = poisson_encode(pixels[i], params, i)
        for name, net in nets.items():
            out = net.run_sample(spikes)
            counts = np.cumsum(out.astype(np.int64), axis=0)
            preds = np.argmax(counts, axis=1)
            correct[name] += preds == labels[i]
            if collect_spikes:
                rasters[(name, i)] = out
        if progress and (i + 1) % 100 == 0:
            progress(i + 1, n)
    report = ConversionReport(
        n_steps=n_steps, n_samples=n,
        curves={name: c / n for name, c in correct.items()},
    )
    if collect_spikes:
        return report, rasters
    return report


def save_snn(out_dir, net: LayeredNet, frac_bits: int, threshold_raw: int,
             layer_sizes: tuple):
    """One SNPW weight file per layer plus a key=value manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cores = []
    for layer in net.layers:
        if isinstance(layer, PartitionedLayer):
            raise ConversionError("saving partitioned layers is not supported")
        if not isinstance(layer, CoreLayer):
            raise ConversionError("only fixed-point nets serialize to SNPW files")
        cores.append(layer.core)
    for i, core in enumerate(cores):
        save_weight_file(out_dir / f"layer{i}.snpw", core.weights)
    with open(out_dir / "manifest.txt", "w") as fh:
        fh.write(f"layers = {':'.join(str(s) for s in layer_sizes)}\n")
        fh.write(f"frac_bits = {frac_bits}\n")
        fh.write(f"threshold_raw = {threshold_raw}\n")
        fh.write(f"n_layers = {len(cores)}\n")


def load_snn(model_dir) -> tuple[LayeredNet, dict]:
    model_dir = Path(model_dir)
    manifest = {}
    for line in (model_dir / "manifest.txt").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            manifest[k.strip()] = v.strip()
    n_layers = int(manifest["n_layers"])
    frac_bits = int(manifest["frac_bits"])
    thr = int(manifest["threshold_raw"])
    layers = []
    for i in range(n_layers):
        mem, _, _ = load_weight_file(model_dir / f"layer{i}.snpw")
        layers.append(CoreLayer(mem.raw, thr, frac_bits, w_bits=mem.w_bits))
    return LayeredNet(layers, name=f"fixed{frac_bits}"), manifest
