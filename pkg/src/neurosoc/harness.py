"""System assembly and experiment orchestration.

Builds PEs (network interface + neuro-processing core) on the 3D mesh,
advances global time steps with a drain barrier between steps, runs the
unsupervised training flow, and carries the memory-footprint model for
sparse-connection sizing.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .convert import LayeredNet
from .encoding import Dataset, EncoderParams, poisson_encode
from .fixedpoint import FixedPoint
from .learning import StdpParams, normalize_weights
from .neuron import NeuronParams, ResetMode
from .noc import Mesh, NetworkInterface, NiTables, PeAddress, RouterConfig
from .snpc import CoreConfig, RecurrentConfig, SnpcCore, SpikeArray, load_weight_file, save_weight_file

__all__ = [
    "FootprintQuery",
    "sparsity_saving_ratio",
    "sparsity_break_even",
    "sparsity_max_ratio",
    "aer_vs_array_footprint",
    "assign_labels",
    "classify_counts",
    "NocSystem",
    "StdpConfig",
    "TrainedStdp",
    "stdp_train",
    "stdp_evaluate",
    "save_trained",
    "load_trained",
    "RunMode",
    "SystemConfig",
]

# ---------------------------------------------------------------------------
# Memory-footprint model (sparse-connection sizing)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FootprintQuery:
    """Sparsity sizing inputs: X true pre-synaptic neurons, n connected,
    m post neurons, w weight bits; s = n/X."""

    X: int
    n: int
    m: int
    w: int

    def __post_init__(self):
        if min(self.X, self.m, self.w) <= 0 or self.n < 0:
            raise ValueError("X, m, w must be positive and n >= 0")
        if self.n > self.X:
            raise ValueError("connected subset n cannot exceed X")

    @property
    def s(self) -> float:
        return self.n / self.X


def sparsity_saving_ratio(q: FootprintQuery) -> float:
    """Fraction of weight-memory bits saved by storing only n of X rows
    at the cost of an X*n-bit lookup structure.

    Computed as exact integer bit accounting ((X-n)mw - Xn) / (Xmw),
    which is algebraically 1 - (mw + X)s/(mw).
    """
    saved = (q.X - q.n) * q.m * q.w - q.X * q.n
    return saved / (q.X * q.m * q.w)


def sparsity_break_even(m: int, w: int) -> float:
    """Largest connected-subset size n that still saves memory: n < m*w/2."""
    if m <= 0 or w <= 0:
        raise ValueError("m and w must be positive")
    return m * w / 2


def sparsity_max_ratio(m: int, X: int, w: int) -> float:
    """Largest sparsity ratio s that still saves memory: s < mw/(mw + X)."""
    if min(m, X, w) <= 0:
        raise ValueError("m, X and w must be positive")
    return m * w / (m * w + X)


@dataclass(frozen=True)
class AerArrayFootprint:
    n: int
    X: int
    aer_bits: int
    array_bits: int
    aer_bits_pipelined: int
    array_bits_pipelined: int
    aer_overflow_at: int  # event count where AER storage overflows
    array_overflow_at: int | None  # dense array never overflows


def aer_vs_array_footprint(n: int, X: int) -> AerArrayFootprint:
    """Storage comparison for buffering one step's input events: keeping
    X AER entries of ceil(log2 n) bits versus one n-bit spike array."""
    if n < 1 or X < 0:
        raise ValueError("need n >= 1 and X >= 0")
    width = math.ceil(math.log2(n)) if n > 1 else 1
    aer = X * width
    return AerArrayFootprint(
        n=n, X=X, aer_bits=aer, array_bits=n,
        aer_bits_pipelined=2 * aer, array_bits_pipelined=2 * n,
        aer_overflow_at=n, array_overflow_at=None,
    )


# ---------------------------------------------------------------------------
# Neuron-to-class assignment (the paper leaves this to the experimenter)
# ---------------------------------------------------------------------------


def assign_labels(counts: np.ndarray, labels: np.ndarray, n_classes: int = 10) -> np.ndarray:
    """Assign each neuron the class with the highest mean response over a
    labeled pass.  counts: [n_samples, n_neurons] spike totals."""
    n_neurons = counts.shape[1]
    means = np.zeros((n_classes, n_neurons))
    for c in range(n_classes):
        mask = labels == c
        if mask.any():
            means[c] = counts[mask].mean(axis=0)
    return np.argmax(means, axis=0)


def classify_counts(counts: np.ndarray, assignments: np.ndarray,
                    n_classes: int = 10) -> int:
    """Predict the class whose assigned neurons spiked most on average;
    ties break to the lowest class index."""
    best_score, best_class = -1.0, 0
    for c in range(n_classes):
        mask = assignments == c
        if not mask.any():
            continue
        score = float(counts[mask].mean())
        if score > best_score:
            best_score, best_class = score, c
    return best_class


# ---------------------------------------------------------------------------
# NoC-backed layered system
# ---------------------------------------------------------------------------

_CHUNK = 256  # neuron_id field is 8 bits: sources are sliced into 256-wide chunks


class _Pe:
    def __init__(self, addr: PeAddress, ni: NetworkInterface, core: SnpcCore):
        self.addr = addr
        self.ni = ni
        self.core = core
        self.pending_out: SpikeArray | None = None


class NocSystem:
    """Feed-forward layers of cores mapped onto mesh PEs.

    Per global time step: outputs of the previous step and fresh input
    events are queued as spike flits, the mesh drains to quiescence (the
    step barrier), every NI closes its spike array, and all cores step.
    With lossless transport this is spike-for-spike identical to the
    direct layered evaluation.
    """

    def __init__(self, mesh_dims: tuple[int, int, int], layers: list[list[SnpcCore]],
                 mapping: list[list[PeAddress]] | None = None,
                 input_width: int | None = None,
                 router_config: RouterConfig | None = None, trace=None):
        self.mesh = Mesh(mesh_dims, router_config or RouterConfig(), trace=trace)
        n_pes = sum(len(parts) for parts in layers) + 1  # +1 host node
        if n_pes > len(self.mesh.routers):
            raise ValueError(f"{n_pes} nodes needed but mesh has {len(self.mesh.routers)}")
        order = [PeAddress(x, y, z) for (x, y, z) in sorted(self.mesh.routers)]
        self.host_addr = order[0]
        if mapping is None:
            it = iter(order[1:])
            mapping = [[next(it) for _ in parts] for parts in layers]
        for parts, addrs in zip(layers, mapping):
            if len(parts) != len(addrs):
                raise ValueError("mapping shape does not match layer partitions")
            for a in addrs:
                if not self.mesh.contains(a):
                    raise ValueError(f"mapped PE {a} outside mesh {mesh_dims}")
        self.mapping = mapping
        input_width = input_width or layers[0][0].config.n_pre
        self.input_width = input_width
        self.input_sources = self._alloc_input_sources(input_width)
        # layer l sources: (source addr, base bit, chunk len) triples
        src_by_layer = [self.input_sources]
        for parts, addrs in zip(layers, mapping):
            triples, base = [], 0
            for core, addr in zip(parts, addrs):
                triples.append((addr, base, core.config.n_post))
                base += core.config.n_post
            src_by_layer.append(triples)
        self.pes: list[list[_Pe]] = []
        for li, (parts, addrs) in enumerate(zip(layers, mapping)):
            row = []
            for core, addr in zip(parts, addrs):
                tables = NiTables.dense_from_sources(core.config.n_pre, src_by_layer[li])
                ni = NetworkInterface(addr, tables, core.config.n_pre, core=core)
                row.append(_Pe(addr, ni, core))
            self.pes.append(row)
        self.host_ni = NetworkInterface(self.host_addr, None, input_width)
        self._by_addr = {pe.addr: pe for row in self.pes for pe in row}
        self.flit_total = 0
        self.step_cycles: list[int] = []

    def _alloc_input_sources(self, width: int):
        """Virtual source addresses for external input, one per 256-neuron
        chunk, drawn from address space outside the mesh."""
        free = []
        for code in range(511, -1, -1):
            a = PeAddress.from_code(code)
            if not self.mesh.contains(a):
                free.append(a)
        chunks = -(-width // _CHUNK)
        if len(free) < chunks:
            raise ValueError("no spare address space for input sources; shrink the mesh")
        return [(free[k], k * _CHUNK, min(_CHUNK, width - k * _CHUNK))
                for k in range(chunks)]

    def reset(self):
        for row in self.pes:
            for pe in row:
                pe.core.reset_state()
                pe.ni.end_of_step()
                pe.ni.tx.clear()
                pe.pending_out = None
        self.host_ni.tx.clear()

    def _queue_input(self, bits: np.ndarray):
        from .noc import Flit, FlitKind
        dests = [pe.addr for pe in self.pes[0]]
        for i in np.nonzero(bits)[0]:
            src, nid = self._input_event(int(i))
            for dest in dests:
                self.host_ni.tx.append(Flit(FlitKind.SPIKE, dest, src, neuron_id=nid))

    def _input_event(self, bit: int):
        chunk, nid = divmod(bit, _CHUNK)
        return self.input_sources[chunk][0], nid

    def _transport(self, max_cycles: int = 1_000_000) -> int:
        nis = [self.host_ni] + [pe.ni for row in self.pes for pe in row]
        start = self.mesh.cycle_count
        while True:
            for ni in nis:
                ni.pump(self.mesh, limit=1)
            self.mesh.cycle()
            for key in sorted(self.mesh.rx):
                q = self.mesh.rx[key]
                while q:
                    flit = q.popleft()
                    pe = self._by_addr.get(PeAddress(*key))
                    if pe is not None:
                        pe.ni.deliver(flit)
                    else:
                        self.host_ni.collected.append(flit)
            if self.mesh.in_flight == 0 and all(not ni.tx for ni in nis):
                break
            if self.mesh.cycle_count - start > max_cycles:
                raise RuntimeError("transport failed to drain (possible livelock)")
        return self.mesh.cycle_count - start

    def step(self, input_bits: np.ndarray) -> np.ndarray:
        """One global time step; returns the final layer's output bits."""
        for li, row in enumerate(self.pes):
            fanout = [pe.addr for pe in self.pes[li + 1]] if li + 1 < len(self.pes) else []
            for pe in row:
                if pe.pending_out is not None and fanout:
                    pe.ni.queue_output_spikes(pe.pending_out, fanout)
                pe.pending_out = None
        self._queue_input(input_bits)
        before = self.mesh.injected
        cycles = self._transport()
        self.step_cycles.append(cycles)
        self.flit_total += self.mesh.injected - before
        for row in self.pes:
            for pe in row:
                arr = pe.ni.end_of_step()
                pe.pending_out = pe.core.step(arr)
        final = np.concatenate([pe.core.fired for pe in self.pes[-1]])
        return final.copy()

    def run_sample(self, in_spikes: np.ndarray) -> np.ndarray:
        self.reset()
        T = in_spikes.shape[0]
        n_out = sum(pe.core.config.n_post for pe in self.pes[-1])
        out = np.zeros((T, n_out), dtype=np.uint8)
        for t in range(T):
            out[t] = self.step(in_spikes[t])
        return out


# ---------------------------------------------------------------------------
# Unsupervised STDP training flow
# ---------------------------------------------------------------------------

_ASSIGN_INDEX_BASE = 10_000_000  # encoder stream offsets per phase
_EVAL_INDEX_BASE = 20_000_000


@dataclass(frozen=True)
class StdpConfig:
    """Hardware-mode unsupervised training configuration (784:N)."""

    n_inputs: int = 784
    n_neurons: int = 100
    frac_bits: int = 7
    w_bits: int = 8
    acc_bits: int = 24
    threshold: float = 22.0
    leak: float = 0.08
    refrac_len: int = 2
    w_inh: float = -6.0
    stdp: StdpParams = field(default_factory=lambda: StdpParams(
        theta_plus=FixedPoint(40, 7, 24), theta_decay=0.99998))
    encoder: EncoderParams = field(default_factory=lambda: EncoderParams(max_rate=160.0))
    init_w_hi: int = 40
    norm_mean_value: float = 0.1  # per-synapse target: norm_sum = n_inputs * this
    n_train: int = 10_000
    n_assign: int = 2_500
    seed: int = 7

    def norm_sum(self) -> FixedPoint:
        raw = int(round(self.n_inputs * self.norm_mean_value * (1 << self.frac_bits)))
        return FixedPoint(raw, self.frac_bits, 32)

    def build_core(self) -> SnpcCore:
        q = lambda x: FixedPoint(int(round(x * (1 << self.frac_bits))), self.frac_bits, self.acc_bits)
        neuron = NeuronParams(
            threshold_base=q(self.threshold), leak=q(self.leak),
            v_rest=q(0.0), v_min=q(0.0), refrac_len=self.refrac_len,
            reset_mode=ResetMode.TO_REST,
        )
        inh_raw = int(round(self.w_inh * (1 << self.frac_bits)))
        rec = RecurrentConfig(enabled=True, w_inh=FixedPoint(inh_raw, self.frac_bits, 24))
        return SnpcCore(CoreConfig(
            n_pre=self.n_inputs, n_post=self.n_neurons, w_bits=self.w_bits,
            frac_bits=self.frac_bits, acc_bits=self.acc_bits,
            neuron=neuron, recurrent=rec,
        ))


@dataclass
class TrainedStdp:
    core: SnpcCore
    assignments: np.ndarray
    config: StdpConfig
    train_spike_total: int = 0


def _inference_counts(core: SnpcCore, pixels: np.ndarray, encoder: EncoderParams,
                      index_base: int) -> np.ndarray:
    counts = np.zeros((pixels.shape[0], core.config.n_post), dtype=np.int64)
    for i in range(pixels.shape[0]):
        spikes = poisson_encode(pixels[i], encoder, index_base + i)
        core.reset_state()
        out = core.run(spikes)
        counts[i] = out.sum(axis=0)
    return counts


def stdp_train(cfg: StdpConfig, train: Dataset, log=None) -> TrainedStdp:
    """One-epoch unsupervised pass, then a labeled assignment pass.

    Weights start as normalized random columns; between samples each
    neuron's weight column is renormalized to the configured sum.  The
    assignment pass runs with learning off and theta frozen.
    """
    core = cfg.build_core()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    init = rng.integers(1, cfg.init_w_hi + 1, size=(cfg.n_inputs, cfg.n_neurons))
    core.load_weights(init.astype(np.int32))
    norm = cfg.norm_sum()
    normalize_weights(core.weights, norm)
    enc = cfg.encoder
    spike_total = 0
    n = min(cfg.n_train, len(train))
    for i in range(n):
        spikes = poisson_encode(train.pixels[i], enc, i)
        core.reset_state()
        out = core.train_run(spikes, cfg.stdp)
        spike_total += int(out.sum())
        normalize_weights(core.weights, norm)
        if log and (i + 1) % 1000 == 0:
            log(f"trained {i + 1}/{n} samples, output spikes so far {spike_total}")
    n_assign = min(cfg.n_assign, len(train))
    counts = _inference_counts(core, train.pixels[:n_assign], enc, _ASSIGN_INDEX_BASE)
    if counts.sum() == 0:
        raise RuntimeError(
            "network is silent after training: no spikes in the assignment pass "
            f"(threshold {cfg.threshold}, max_rate {enc.max_rate})"
        )
    assignments = assign_labels(counts, train.labels[:n_assign])
    return TrainedStdp(core, assignments, cfg, spike_total)


def stdp_evaluate(trained: TrainedStdp, test: Dataset, n_test: int | None = None):
    """Classify test samples by mean spike count of assigned neurons.

    Returns (accuracy, per-sample predicted labels, per-sample counts).
    """
    cfg = trained.config
    n = min(n_test or len(test), len(test))
    counts = _inference_counts(trained.core, test.pixels[:n], cfg.encoder,
                               _EVAL_INDEX_BASE)
    preds = np.array([classify_counts(counts[i], trained.assignments)
                      for i in range(n)], dtype=np.int64)
    acc = float((preds == test.labels[:n]).mean())
    return acc, preds, counts


def save_trained(out_dir, trained: TrainedStdp):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_weight_file(out_dir / "stdp.snpw", trained.core.weights,
                     theta=trained.core.theta.astype(np.int32),
                     theta_frac_bits=trained.config.frac_bits)
    with open(out_dir / "assignments.csv", "w") as fh:
        fh.write("neuron,class\n")
        for j, c in enumerate(trained.assignments):
            fh.write(f"{j},{int(c)}\n")
    cfg = trained.config
    with open(out_dir / "manifest.txt", "w") as fh:
        fh.write(f"n_inputs = {cfg.n_inputs}\n")
        fh.write(f"n_neurons = {cfg.n_neurons}\n")
        fh.write(f"frac_bits = {cfg.frac_bits}\n")
        fh.write(f"threshold = {cfg.threshold}\n")
        fh.write(f"leak = {cfg.leak}\n")
        fh.write(f"w_inh = {cfg.w_inh}\n")
        fh.write(f"refrac_len = {cfg.refrac_len}\n")
        fh.write(f"max_rate = {cfg.encoder.max_rate}\n")
        fh.write(f"n_steps = {cfg.encoder.n_steps}\n")
        fh.write(f"dt = {cfg.encoder.dt}\n")
        fh.write(f"seed = {cfg.seed}\n")


def load_trained(model_dir, encoder: EncoderParams | None = None) -> TrainedStdp:
    model_dir = Path(model_dir)
    manifest = {}
    for line in (model_dir / "manifest.txt").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            manifest[k.strip()] = v.strip()
    cfg = StdpConfig(
        n_inputs=int(manifest["n_inputs"]), n_neurons=int(manifest["n_neurons"]),
        frac_bits=int(manifest["frac_bits"]), threshold=float(manifest["threshold"]),
        leak=float(manifest["leak"]), w_inh=float(manifest["w_inh"]),
        refrac_len=int(manifest["refrac_len"]),
        encoder=encoder or EncoderParams(
            dt=float(manifest["dt"]), n_steps=int(manifest["n_steps"]),
            max_rate=float(manifest["max_rate"]), rng_seed=int(manifest["seed"])),
        seed=int(manifest["seed"]),
    )
    core = cfg.build_core()
    mem, theta, _ = load_weight_file(model_dir / "stdp.snpw")
    core.load_weights(mem.raw)
    if theta is not None:
        core.theta[:] = theta
    assignments = np.loadtxt(model_dir / "assignments.csv", delimiter=",",
                             skiprows=1, dtype=np.int64)[:, 1]
    return TrainedStdp(core, assignments, cfg)


# ---------------------------------------------------------------------------
# Experiment-level configuration
# ---------------------------------------------------------------------------


class RunMode(enum.Enum):
    ANN_CONVERSION = "ann_conversion"
    STDP_TRAINING = "stdp_training"
    STDP_INFERENCE = "stdp_inference"


@dataclass(frozen=True)
class SystemConfig:
    """Top-level experiment description (normally parsed from a config file)."""

    mode: RunMode
    mesh_dims: tuple[int, int, int] = (2, 2, 1)
    layer_sizes: tuple = (784, 48, 10)
    frac_bits: int = 7
    transport: str = "direct"  # or "noc"
    encoder: EncoderParams = field(default_factory=EncoderParams)
    stdp: StdpConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if self.transport not in ("direct", "noc"):
            raise ValueError("transport must be 'direct' or 'noc'")
        nx, ny, nz = self.mesh_dims
        if not (1 <= nx <= 8 and 1 <= ny <= 8 and 1 <= nz <= 8):
            raise ValueError("mesh dimensions must be within 1..8")


def noc_system_for_net(net: LayeredNet, mesh_dims: tuple[int, int, int],
                       mapping: list[list[PeAddress]] | None = None,
                       trace=None) -> NocSystem:
    """Wrap an already-built fixed-point layered net in mesh transport."""
    from .convert import CoreLayer, PartitionedLayer

    layers = []
    for layer in net.layers:
        if isinstance(layer, PartitionedLayer):
            layers.append([p.core for p in layer.parts])
        elif isinstance(layer, CoreLayer):
            layers.append([layer.core])
        else:
            raise TypeError("NoC transport needs fixed-point core layers")
    return NocSystem(mesh_dims, layers, mapping=mapping, trace=trace)
