"""Packet-switched on-chip interconnect.

Every packet is a single 32-bit flit carrying either a spike event or a
memory access, protected by one even-parity bit.  Routers have seven
ports (N/S/E/W/Up/Down/Local) on a 3D mesh and use deterministic
dimension-order routing (X, then Y, then Z) with per-output round-robin
arbitration and backpressure.  Memory streams carry no address field:
the data is written and read in bursts through per-kind address
generators in the network interface.

Canonical flit layout (bit 0 = LSB; normative for the binary flit file
and traces):

    kind[1:0]                   0 spike, 1 mem-write, 2 mem-read
    dest[10:2]                  x | y<<3 | z<<6, 3 bits per axis
    spike payload:  src[19:11], neuron_id[27:20], spare[29:28]
    mem payload:    mem_kind[12:11], data[20:13], src[29:21]
    bit 30                      spare (0)
    parity[31]                  even parity over bits 0..30
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np

from .snpc import SpikeArray, decode_next

__all__ = [
    "FlitKind",
    "MemKind",
    "Port",
    "PeAddress",
    "Flit",
    "ParityError",
    "encode_flit",
    "decode_flit",
    "route",
    "RouterConfig",
    "Router",
    "Mesh",
    "NiTables",
    "NetworkInterface",
    "aer_to_spike_array",
    "spike_array_to_aer",
    "FlitTraceWriter",
    "save_flit_words",
    "load_flit_words",
]


class FlitKind(enum.IntEnum):
    SPIKE = 0
    MEM_WRITE = 1
    MEM_READ = 2


class MemKind(enum.IntEnum):
    WEIGHT = 0
    SPARSE = 1
    OTHER = 2


class Port(enum.IntEnum):
    LOCAL = 0
    EAST = 1   # +x
    WEST = 2   # -x
    NORTH = 3  # +y
    SOUTH = 4  # -y
    UP = 5     # +z
    DOWN = 6   # -z


class ParityError(ValueError):
    """Flit failed the even-parity integrity check."""


@dataclass(frozen=True, order=True)
class PeAddress:
    """9-bit X-Y-Z address; 3 bits per axis allows an 8x8x8 mesh."""

    x: int
    y: int
    z: int

    def __post_init__(self):
        for c in (self.x, self.y, self.z):
            if not 0 <= c <= 7:
                raise ValueError(f"PE coordinate {c} outside [0, 7]")

    def code(self) -> int:
        return self.x | (self.y << 3) | (self.z << 6)

    @classmethod
    def from_code(cls, code: int) -> "PeAddress":
        return cls(code & 7, (code >> 3) & 7, (code >> 6) & 7)

    def __str__(self):
        return f"{self.x}.{self.y}.{self.z}"


@dataclass(frozen=True)
class Flit:
    kind: FlitKind
    dest: PeAddress
    src: PeAddress
    neuron_id: int = 0
    mem_kind: MemKind = MemKind.WEIGHT
    data: int = 0

    def __post_init__(self):
        if not 0 <= self.neuron_id <= 255:
            raise ValueError("neuron_id must fit 8 bits")
        if not 0 <= self.data <= 255:
            raise ValueError("data must fit 8 bits")


def _parity(word: int) -> int:
    return bin(word & 0x7FFF_FFFF).count("1") & 1


def encode_flit(f: Flit) -> int:
    """Pack a flit into its 32-bit wire word, computing the parity bit."""
    word = int(f.kind) & 3
    word |= f.dest.code() << 2
    if f.kind == FlitKind.SPIKE:
        word |= f.src.code() << 11
        word |= f.neuron_id << 20
    else:
        word |= int(f.mem_kind) << 11
        word |= f.data << 13
        word |= f.src.code() << 21
    word |= _parity(word) << 31
    return word


def decode_flit(word: int) -> Flit:
    """Unpack a 32-bit word; raises :class:`ParityError` on corruption."""
    if not 0 <= word < (1 << 32):
        raise ValueError("flit word must be an unsigned 32-bit value")
    if _parity(word) != (word >> 31):
        raise ParityError(f"parity mismatch in flit word 0x{word:08x}")
    kind_code = word & 3
    if kind_code > 2:
        raise ParityError(f"invalid flit kind {kind_code}")
    kind = FlitKind(kind_code)
    dest = PeAddress.from_code((word >> 2) & 0x1FF)
    if kind == FlitKind.SPIKE:
        return Flit(kind, dest, PeAddress.from_code((word >> 11) & 0x1FF),
                    neuron_id=(word >> 20) & 0xFF)
    return Flit(kind, dest, PeAddress.from_code((word >> 21) & 0x1FF),
                mem_kind=MemKind((word >> 11) & 3), data=(word >> 13) & 0xFF)


def route(current: PeAddress, dest: PeAddress) -> Port:
    """Dimension-order (X then Y then Z) output-port decision."""
    if dest.x != current.x:
        return Port.EAST if dest.x > current.x else Port.WEST
    if dest.y != current.y:
        return Port.NORTH if dest.y > current.y else Port.SOUTH
    if dest.z != current.z:
        return Port.UP if dest.z > current.z else Port.DOWN
    return Port.LOCAL


_PORT_STEP = {
    Port.EAST: (1, 0, 0), Port.WEST: (-1, 0, 0),
    Port.NORTH: (0, 1, 0), Port.SOUTH: (0, -1, 0),
    Port.UP: (0, 0, 1), Port.DOWN: (0, 0, -1),
}
_OPPOSITE = {
    Port.EAST: Port.WEST, Port.WEST: Port.EAST,
    Port.NORTH: Port.SOUTH, Port.SOUTH: Port.NORTH,
    Port.UP: Port.DOWN, Port.DOWN: Port.UP,
}


@dataclass(frozen=True)
class RouterConfig:
    buffer_depth: int = 4

    def __post_init__(self):
        if self.buffer_depth < 1:
            raise ValueError("buffer_depth must be >= 1")


class Router:
    __slots__ = ("addr", "depth", "fifos", "rr", "occupancy")

    def __init__(self, addr: PeAddress, config: RouterConfig):
        self.addr = addr
        self.depth = config.buffer_depth
        self.fifos = [deque() for _ in range(7)]
        self.rr = [0] * 7
        self.occupancy = 0


class Mesh:
    """Synchronous-cycle 3D mesh of 7-port routers.

    One cycle moves at most one flit per output port per router; a flit
    advances only when the downstream input FIFO had space at the start
    of the cycle.  Local-port winners are delivered to the node's rx
    queue.  Conservation holds every cycle:

        injected == delivered + in_flight + dropped
    """

    def __init__(self, dims: tuple[int, int, int],
                 config: RouterConfig | None = None, trace=None):
        nx, ny, nz = dims
        if not (1 <= nx <= 8 and 1 <= ny <= 8 and 1 <= nz <= 8):
            raise ValueError("mesh dimensions must be within 1..8 per axis")
        self.dims = dims
        config = config or RouterConfig()
        self.routers: dict[tuple[int, int, int], Router] = {}
        for z in range(nz):
            for y in range(ny):
                for x in range(nx):
                    addr = PeAddress(x, y, z)
                    self.routers[(x, y, z)] = Router(addr, config)
        self._order = [self.routers[k] for k in sorted(self.routers)]
        self.rx: dict[tuple[int, int, int], deque] = {k: deque() for k in self.routers}
        self.cycle_count = 0
        self.injected = 0
        self.delivered = 0
        self.dropped = 0
        self.in_flight = 0
        self.trace = trace

    def contains(self, addr: PeAddress) -> bool:
        return addr.x < self.dims[0] and addr.y < self.dims[1] and addr.z < self.dims[2]

    def offer_local(self, addr: PeAddress, flit: Flit) -> bool:
        """Inject one flit at a node's local input FIFO; False when full."""
        if not self.contains(addr) or not self.contains(flit.dest):
            raise ValueError(f"address outside {self.dims} mesh")
        r = self.routers[(addr.x, addr.y, addr.z)]
        fifo = r.fifos[Port.LOCAL]
        if len(fifo) >= r.depth:
            return False
        fifo.append(flit)
        r.occupancy += 1
        self.injected += 1
        self.in_flight += 1
        if self.trace:
            self.trace(self.cycle_count, "inject", flit)
        return True

    def _neighbor(self, router: Router, port: Port) -> Router:
        dx, dy, dz = _PORT_STEP[port]
        return self.routers[(router.addr.x + dx, router.addr.y + dy, router.addr.z + dz)]

    def cycle(self):
        """Advance one synchronous cycle (read-then-commit)."""
        moves = []
        free: dict[tuple[int, int], int] = {}
        for r in self._order:
            if r.occupancy == 0:
                continue
            reqs: list[list[int]] = [[] for _ in range(7)]
            for p in range(7):
                fifo = r.fifos[p]
                if fifo:
                    reqs[route(r.addr, fifo[0].dest)].append(p)
            for out in range(7):
                inps = reqs[out]
                if not inps:
                    continue
                start = r.rr[out]
                winner = min(inps, key=lambda p: (p - start) % 7)
                if out == Port.LOCAL:
                    moves.append((r, winner, out, None))
                    continue
                nbr = self._neighbor(r, Port(out))
                in_port = _OPPOSITE[Port(out)]
                key = (id(nbr), in_port)
                space = free.get(key)
                if space is None:
                    space = nbr.depth - len(nbr.fifos[in_port])
                if space > 0:
                    free[key] = space - 1
                    moves.append((r, winner, out, (nbr, in_port)))
        for r, p, out, target in moves:
            flit = r.fifos[p].popleft()
            r.occupancy -= 1
            r.rr[out] = (p + 1) % 7
            if target is None:
                self.delivered += 1
                self.in_flight -= 1
                self.rx[(r.addr.x, r.addr.y, r.addr.z)].append(flit)
                if self.trace:
                    self.trace(self.cycle_count, "deliver", flit)
            else:
                nbr, in_port = target
                nbr.fifos[in_port].append(flit)
                nbr.occupancy += 1
                if self.trace:
                    self.trace(self.cycle_count, "hop", flit)
        self.cycle_count += 1

    def conservation_ok(self) -> bool:
        return self.injected == self.delivered + self.in_flight + self.dropped

    def quiesce(self, max_cycles: int = 100_000) -> int:
        """Cycle until no flit is in flight (the time-step barrier)."""
        start = self.cycle_count
        while self.in_flight > 0:
            if self.cycle_count - start >= max_cycles:
                raise RuntimeError(f"mesh failed to drain within {max_cycles} cycles")
            self.cycle()
        return self.cycle_count - start


class NiTables:
    """Source-address translation of the network interface.

    Dense mode: two LUTs — source-PE address to connected-PE index, then
    (index, neuron_id) to pre-synaptic bit via a per-index base offset.
    Sparse mode: a CAM keyed by (source PE, neuron_id) returning the
    weight-row address directly; misses mean a non-connected source.
    """

    def __init__(self, width: int, mode: str = "dense"):
        if mode not in ("dense", "sparse"):
            raise ValueError("mode must be 'dense' or 'sparse'")
        self.width = width
        self.mode = mode
        self.pe_lut: dict[int, int] = {}
        self.neuron_lut: dict[tuple[int, int], int] = {}
        self.cam: dict[tuple[int, int], int] = {}

    @classmethod
    def dense_from_sources(cls, width: int, sources) -> "NiTables":
        """Build dense tables from (PeAddress, base, count) triples; the
        mapping base+neuron_id must be injective into [0, width)."""
        t = cls(width, "dense")
        seen = set()
        for idx, (addr, base, count) in enumerate(sources):
            t.pe_lut[addr.code()] = idx
            for nid in range(count):
                bit = base + nid
                if not 0 <= bit < width:
                    raise ValueError(f"mapped bit {bit} outside [0, {width})")
                if bit in seen:
                    raise ValueError(f"mapping not injective at bit {bit}")
                seen.add(bit)
                t.neuron_lut[(idx, nid)] = bit
        return t

    @classmethod
    def sparse_from_entries(cls, width: int, entries) -> "NiTables":
        """Build a CAM from ((PeAddress, neuron_id), row) pairs."""
        t = cls(width, "sparse")
        for (addr, nid), row in entries:
            if not 0 <= row < width:
                raise ValueError(f"CAM row {row} outside [0, {width})")
            t.cam[(addr.code(), nid)] = row
        return t

    def lookup(self, src_code: int, neuron_id: int) -> int | None:
        if self.mode == "sparse":
            return self.cam.get((src_code, neuron_id))
        idx = self.pe_lut.get(src_code)
        if idx is None:
            return None
        return self.neuron_lut.get((idx, neuron_id))


def aer_to_spike_array(events, tables: NiTables, width: int | None = None):
    """OR a time step's AER events into a spike array.

    ``events`` are (PeAddress | code, neuron_id) pairs belonging to one
    step.  Duplicate events are idempotent; lookup misses (CAM miss or
    unmapped dense source) drop the event.  Returns (array, dropped).
    """
    width = width or tables.width
    arr = SpikeArray.zeros(width)
    dropped = 0
    for src, nid in events:
        code = src.code() if isinstance(src, PeAddress) else int(src)
        bit = tables.lookup(code, nid)
        if bit is None:
            dropped += 1
        else:
            arr.bits[bit] = 1
    return arr, dropped


def spike_array_to_aer(out: SpikeArray, src: PeAddress, fanout) -> list[Flit]:
    """Convert output spikes to AER flits, one per (set bit, destination).

    Bits are read out in ascending index order via the one-hot decoder;
    emission is first-come-first-serve per bit.
    """
    flits = []
    rest = out
    while True:
        step = decode_next(rest)
        if step is None:
            break
        idx, rest = step
        for dest in fanout:
            flits.append(Flit(FlitKind.SPIKE, dest, src, neuron_id=idx))
    return flits


class _ByteMemory:
    """Serial-access byte memory behind the NI address generators."""

    def __init__(self, size: int, init: int = 0):
        self.data = np.full(size, init, dtype=np.uint8)

    def __len__(self):
        return self.data.size

    def write(self, addr: int, byte: int):
        self.data[addr] = byte & 0xFF

    def read(self, addr: int) -> int:
        return int(self.data[addr])


class _WeightByteView:
    """Byte-level adapter over a core's weight memory (w_bits == 8),
    burst-ordered row-major by pre-synaptic index."""

    def __init__(self, weights):
        if weights.w_bits != 8:
            raise ValueError("NoC weight streaming supports w_bits == 8")
        self._w = weights

    def __len__(self):
        return self._w.n_pre * self._w.n_post

    def write(self, addr: int, byte: int):
        row, col = divmod(addr, self._w.n_post)
        value = byte & 0xFF
        if value >= 128:
            value -= 256
        self._w.raw[row, col] = value

    def read(self, addr: int) -> int:
        row, col = divmod(addr, self._w.n_post)
        return int(self._w.raw[row, col]) & 0xFF


class NetworkInterface:
    """Translates between flits and core-local spike arrays / memories.

    Incoming spike flits accumulate into the current step's spike array;
    :meth:`end_of_step` hands it to the core and clears it (the
    new-timestep boundary).  Memory flits go through per-kind write
    cursors; a read request streams the whole memory back to the
    requester as data-bearing flits.
    """

    def __init__(self, addr: PeAddress, tables: NiTables | None, n_pre: int,
                 core=None, sparse_mem_size: int = 256, other_mem_size: int = 256):
        self.addr = addr
        self.tables = tables
        self.n_pre = n_pre
        self._acc = np.zeros(n_pre, dtype=np.uint8)
        self.tx: deque[Flit] = deque()
        self.counters = {
            "spikes_in": 0, "spikes_out": 0, "dropped_lookup": 0,
            "mem_writes": 0, "mem_reads": 0, "dropped_mem": 0,
            "parity_errors": 0,
        }
        self.memories = {
            MemKind.SPARSE: _ByteMemory(sparse_mem_size),
            MemKind.OTHER: _ByteMemory(other_mem_size),
        }
        if core is not None:
            self.memories[MemKind.WEIGHT] = _WeightByteView(core.weights)
        else:
            self.memories[MemKind.WEIGHT] = _ByteMemory(n_pre)
        self.write_cursor = {k: 0 for k in MemKind}
        self.collected: list[Flit] = []  # read-reply data landing here when host

    def deliver(self, flit: Flit):
        if flit.kind == FlitKind.SPIKE:
            bit = self.tables.lookup(flit.src.code(), flit.neuron_id) if self.tables else None
            if bit is None:
                self.counters["dropped_lookup"] += 1
            else:
                self._acc[bit] = 1
                self.counters["spikes_in"] += 1
        elif flit.kind == FlitKind.MEM_WRITE:
            mem = self.memories[flit.mem_kind]
            cur = self.write_cursor[flit.mem_kind]
            if cur >= len(mem):
                self.counters["dropped_mem"] += 1
            else:
                mem.write(cur, flit.data)
                self.write_cursor[flit.mem_kind] = cur + 1
                self.counters["mem_writes"] += 1
            self.collected.append(flit)
        else:  # MEM_READ: stream the addressed memory back to the requester
            mem = self.memories[flit.mem_kind]
            self.counters["mem_reads"] += 1
            for a in range(len(mem)):
                self.tx.append(Flit(FlitKind.MEM_WRITE, dest=flit.src, src=self.addr,
                                    mem_kind=flit.mem_kind, data=mem.read(a)))

    def deliver_word(self, word: int):
        """Deliver an encoded 32-bit flit; parity failures drop + count."""
        try:
            flit = decode_flit(word)
        except ParityError:
            self.counters["parity_errors"] += 1
            return
        self.deliver(flit)

    def end_of_step(self) -> SpikeArray:
        arr = SpikeArray(self._acc.copy())
        self._acc[:] = 0
        return arr

    def queue_output_spikes(self, out: SpikeArray, fanout):
        flits = spike_array_to_aer(out, self.addr, fanout)
        self.counters["spikes_out"] += len(flits)
        self.tx.extend(flits)

    def pump(self, mesh: Mesh, limit: int = 1) -> int:
        """Inject up to ``limit`` queued flits into the local router port."""
        sent = 0
        while self.tx and sent < limit:
            if not mesh.offer_local(self.addr, self.tx[0]):
                break
            self.tx.popleft()
            sent += 1
        return sent


class FlitTraceWriter:
    """CSV trace sink: cycle, event, kind, src, dest, neuron_id."""

    def __init__(self, fh):
        self._fh = fh
        self._fh.write("cycle,event,kind,src,dest,neuron_id\n")

    def __call__(self, cycle: int, event: str, flit: Flit):
        self._fh.write(f"{cycle},{event},{flit.kind.name.lower()},"
                       f"{flit.src},{flit.dest},{flit.neuron_id}\n")


def save_flit_words(path, flits) -> None:
    """Binary flit file: little-endian 32-bit encoded words."""
    words = np.array([encode_flit(f) for f in flits], dtype="<u4")
    with open(path, "wb") as fh:
        fh.write(words.tobytes())


def load_flit_words(path) -> list[Flit]:
    words = np.fromfile(path, dtype="<u4")
    return [decode_flit(int(w)) for w in words]
