"""Lossless intra encoder and decoder.

Encoding walks CTUs in raster order and searches each CTU's quadtree
exhaustively. For every candidate PU the mode search runs in three steps:

1. rank all 35 modes by SAD of the active predictor and keep the ``N``
   best for the PU size, then add the most probable modes;
2. for the adaptive 3-tap method on PUs of 16x16 and larger, expand each
   kept mode into its eight candidate weight sets and keep the lowest-SAD
   (mode, candidate) pairs;
3. charge every surviving pair its exact bit cost and keep the cheapest.

In lossless coding distortion is zero, so "RD cost" is the bit count.
The decoder replays the same split bits, mode codes and candidate flags,
rebuilding each PU's candidate weights from the shared per-PU PRNG seed.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import (
    NUM_MODES, PLANAR, DC, Plane, WeightSet, WeightTable, prng_for_pu, Prng64,
)
from .entropy import (
    BitSink, BitSource, MalformedStream, RiceContext, _rice_cost,
    decode_residual_block, encode_residual_block,
)
from .prediction import (
    PU, _block_from_line, _block_kernel, _pixelwise_core, _pixelwise_kernel,
    _primary_window, _reference_line, mode_group,
)

MAGIC = b"L3TF"
VERSION = 1
HEADER = struct.Struct(">4sBBBBIII")
FLAG_BITS = 3
ADAPTIVE_MIN_SIZE = 16
N_SCHEDULE = {4: 8, 8: 8, 16: 3, 32: 3, 64: 3}
SIZE_CLASSES = (4, 8, 16, 32, 64)
NUM_CONTEXTS = 5 * len(SIZE_CLASSES)
BLOCK_GROUP = 4
# fixed weight perturbations for candidates 1-6, in order
PERTURBATIONS = ((1, -1, 0), (-1, 1, 0), (1, 0, -1), (-1, 0, 1), (0, 1, -1), (0, -1, 1))
# ordered (i, j) component pairs for the pseudo-random candidate
RANDOM_PAIRS = ((0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1))
TABLE_BYTE_MIN, TABLE_BYTE_MAX = -128, 127


class BadMagic(MalformedStream):
    pass


class UnsupportedVersion(MalformedStream):
    pass


class Method(enum.IntEnum):
    BLOCK_HEVC = 0
    SAP = 1
    THREE_TAP_OFFLINE = 2
    THREE_TAP_ADAPTIVE = 3

    @property
    def uses_weights(self) -> bool:
        return self >= Method.THREE_TAP_OFFLINE


@dataclass(frozen=True)
class EncoderConfig:
    method: Method
    weights: WeightTable
    ctu_size: int = 64
    min_pu: int = 4
    frame_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        for name in ("ctu_size", "min_pu"):
            v = getattr(self, name)
            if v <= 0 or v & (v - 1):
                raise ValueError(f"{name} must be a power of two, got {v}")
        if not 4 <= self.min_pu <= self.ctu_size <= 64:
            raise ValueError("need 4 <= min_pu <= ctu_size <= 64")
        if not 0 <= self.frame_index < 2 ** 32:
            raise ValueError("frame_index must fit in 32 bits")
        for ws in self.weights:
            if not all(TABLE_BYTE_MIN <= v <= TABLE_BYTE_MAX for v in ws):
                raise ValueError(f"weight set {tuple(ws)} does not fit the stream header")


@dataclass
class PuDecision:
    pu: PU
    mode: int
    candidate_index: int
    weights: WeightSet | None
    bits: int
    mpms: tuple[int, int, int]
    context: int
    context_after: tuple[int, int] = (1, 0)


@dataclass
class PuRecord:
    """What the encoder committed for one PU (test instrumentation)."""

    decision: PuDecision
    bits_written: int
    flag_written: bool
    candidates: tuple[WeightSet, ...] | None = None


@dataclass
class EncodeResult:
    data: bytes
    payload_bits: int
    records: list[PuRecord] = field(default_factory=list)
    screen_log: list[tuple[int, int, list[int]]] = field(default_factory=list)


def size_class(size: int) -> int:
    return SIZE_CLASSES.index(size)


def context_index(method: Method, mode: int, size: int) -> int:
    if method == Method.BLOCK_HEVC or (method == Method.SAP and mode in (PLANAR, DC)):
        group = BLOCK_GROUP
    else:
        group = mode_group(mode)
    return group * len(SIZE_CLASSES) + size_class(size)


def candidate_set(offline: WeightSet, rng: Prng64) -> tuple[WeightSet, ...]:
    """Eight weight sets for one mode: offline, six fixed perturbations, one random.

    The random member moves ``d`` in {2, 3} units from one component to
    another. A perturbation that would leave the valid weight range falls
    back to the offline set so the index stays decodable.
    """
    def perturb(delta):
        try:
            return offline.shifted(*delta)
        except ValueError:
            return offline

    out = [offline] + [perturb(d) for d in PERTURBATIONS]
    i, j = RANDOM_PAIRS[rng.below(6)]
    d = 2 + rng.below(2)
    delta = [0, 0, 0]
    delta[i] += d
    delta[j] -= d
    out.append(perturb(delta))
    return tuple(out)


def derive_mpms(left: int | None, above: int | None) -> tuple[int, int, int]:
    """Three most probable modes from the left and above PU modes.

    A missing neighbour counts as DC, as in HEVC.
    """
    left = DC if left is None else left
    above = DC if above is None else above
    if left == above:
        if left >= 2:
            prev = 34 if left == 2 else left - 1
            nxt = 2 if left == 34 else left + 1
            return (left, prev, nxt)
        return (PLANAR, DC, 26)
    extra = next(m for m in (PLANAR, DC, 26) if m not in (left, above))
    return (left, above, extra)


def mode_code(mode: int, mpms) -> tuple[int, int]:
    """``(value, length)`` of the mode signalling codeword."""
    if mode in mpms:
        idx = mpms.index(mode)
        return ((0b10, 2), (0b110, 3), (0b111, 3))[idx]
    rank = sum(1 for m in range(mode) if m not in mpms)
    return rank, 6


def signal_mode(sink: BitSink, mode: int, mpms) -> int:
    value, length = mode_code(mode, mpms)
    sink.write(value, length)
    return length


def parse_mode(source: BitSource, mpms) -> int:
    if source.read_bit():
        if not source.read_bit():
            return mpms[0]
        return mpms[2] if source.read_bit() else mpms[1]
    rank = source.read(5)
    rest = [m for m in range(NUM_MODES) if m not in mpms]
    return rest[rank]


def order_map(width: int, height: int, ctu_size: int) -> np.ndarray:
    """Coding order of every pixel at 4x4 granularity.

    CTUs are numbered in raster order and 4x4 units inside a CTU in
    z-order, so every CU of the quadtree covers a contiguous range.
    """
    units = ctu_size // 4
    uw, uh = -(-width // 4), -(-height // 4)
    uy, ux = np.mgrid[0:uh, 0:uw]
    ctus_per_row = -(-width // ctu_size)
    ctu = (uy // units) * ctus_per_row + (ux // units)
    lx, ly = ux % units, uy % units
    morton = np.zeros_like(lx)
    for b in range(4):
        morton |= ((lx >> b) & 1) << (2 * b)
        morton |= ((ly >> b) & 1) << (2 * b + 1)
    unit_order = (ctu * units * units + morton).astype(np.int32)
    return np.ascontiguousarray(
        np.repeat(np.repeat(unit_order, 4, axis=0), 4, axis=1)[:height, :width])


class FrameCoder:
    """Per-frame state shared by the encoder search and the decoder."""

    def __init__(self, width: int, height: int, config: EncoderConfig, samples=None):
        if width < config.min_pu or height < config.min_pu:
            raise ValueError(
                f"frame {width}x{height} is smaller than the minimum PU {config.min_pu}")
        self.width = width
        self.height = height
        self.config = config
        self.method = config.method
        self.table = config.weights
        self.order = order_map(width, height, config.ctu_size)
        if samples is None:
            samples = np.zeros((height, width), dtype=np.uint8)
        self.img = np.array(samples, dtype=np.uint8, order="C")
        self.table_array = np.array(self.table.array)
        self.modes = np.full((-(-height // 4), -(-width // 4)), -1, dtype=np.int8)
        self.contexts = np.zeros((NUM_CONTEXTS, 2), dtype=np.int64)
        self.contexts[:, 0] = 1
        self.groups = np.array([context_index(self.method, m, 4) // len(SIZE_CLASSES)
                                for m in range(NUM_MODES)], dtype=np.int64)
        self._candidates: dict = {}

    def make_pu(self, x: int, y: int, size: int) -> PU:
        return PU(x, y, size, min(size, self.width - x), min(size, self.height - y))

    def threshold(self, pu: PU) -> int:
        return int(self.order[pu.y, pu.x])

    def mode_at(self, x: int, y: int) -> int | None:
        if x < 0 or y < 0:
            return None
        m = int(self.modes[y >> 2, x >> 2])
        return None if m < 0 else m

    def mpms_for(self, pu: PU) -> tuple[int, int, int]:
        return derive_mpms(self.mode_at(pu.x - 1, pu.y), self.mode_at(pu.x, pu.y - 1))

    def paint(self, pu: PU, mode: int) -> None:
        self.modes[pu.y >> 2:(pu.y + pu.height + 3) >> 2,
                   pu.x >> 2:(pu.x + pu.width + 3) >> 2] = mode

    def candidates(self, pu: PU, mode: int) -> tuple[WeightSet, ...]:
        key = (pu.x, pu.y, mode)
        cands = self._candidates.get(key)
        if cands is None:
            rng = prng_for_pu(self.config.frame_index, pu.x, pu.y, mode)
            cands = self._candidates[key] = candidate_set(self.table[mode], rng)
        return cands

    def weights_for(self, pu: PU, mode: int, index: int) -> WeightSet | None:
        if not self.method.uses_weights:
            return None
        if index == 0:
            return self.table[mode]
        return self.candidates(pu, mode)[index]

    def flag_applies(self, pu: PU) -> bool:
        return self.method == Method.THREE_TAP_ADAPTIVE and pu.size >= ADAPTIVE_MIN_SIZE

    def prediction(self, pu: PU, mode: int, weights: WeightSet | None):
        """Prediction and scan-order residual of ``pu`` against ``self.img``."""
        wts = _weights_array(weights)
        resid = np.empty(pu.width * pu.height, dtype=np.int32)
        pred = np.empty((pu.height, pu.width), dtype=np.int32)
        _pu_residual(self.img, self.order, self.threshold(pu), pu.x, pu.y, pu.size,
                     pu.width, pu.height, int(self.method), mode, wts, resid, pred)
        return pred, resid


def _weights_array(weights: WeightSet | None) -> np.ndarray:
    if weights is None:
        return np.array((64, 0, 0), dtype=np.int64)
    return np.array((weights.rho1, weights.rho2, weights.rho3), dtype=np.int64)


def screen_modes_sad(frame: FrameCoder, pu: PU, mpms=None, log=None) -> list[int]:
    """N best modes by SAD (ties to the smaller id), then missing MPMs."""
    if mpms is None:
        mpms = frame.mpms_for(pu)
    sads = _sad_all_modes(frame.img, frame.order, frame.threshold(pu), pu.x, pu.y,
                          pu.size, pu.width, pu.height, int(frame.method),
                          frame.table_array)
    n = N_SCHEDULE[pu.size]
    ranked = np.argsort(sads, kind="stable")[:n].tolist()
    if log is not None:
        log.append((pu.size, len(ranked), list(ranked)))
    return ranked + [m for m in mpms if m not in ranked]


def adaptive_weight_search(frame: FrameCoder, pu: PU, modes: list[int]):
    """Pool 8 candidate weight sets per mode and keep the ``len(modes)`` best by SAD.

    Returns ``[(mode, candidate_index, sad), ...]`` sorted by
    ``(sad, mode, candidate_index)``.
    """
    pool = []
    thr = frame.threshold(pu)
    for mode in modes:
        cands = frame.candidates(pu, mode)
        warr = np.array([tuple(c) for c in cands], dtype=np.int64)
        sads = _sad_weights(frame.img, frame.order, thr, pu.x, pu.y, pu.width,
                            pu.height, mode, warr)
        pool.extend((int(s), mode, i) for i, s in enumerate(sads))
    pool.sort()
    return [(mode, idx, sad) for sad, mode, idx in pool[:len(modes)]]


def mode_bits(mode: int, mpms) -> int:
    if mode == mpms[0]:
        return 2
    return 3 if mode in mpms else 6


def rdo_select(frame: FrameCoder, pu: PU, refined, mpms) -> PuDecision:
    """Exact-bit choice among ``refined`` ``(mode, candidate_index)`` pairs.

    Context state is read from ``frame.contexts`` and not modified. Ties go
    to the smaller mode id, then the smaller candidate index.
    """
    if not refined:
        raise ValueError("empty candidate list")
    sc = size_class(pu.size)
    modes = np.array([m for m, _ in refined], dtype=np.int64)
    indices = np.array([i for _, i in refined], dtype=np.int64)
    ctxs = frame.groups[modes] * len(SIZE_CLASSES) + sc
    if indices.any():
        warr = np.array([tuple(frame.weights_for(pu, m, i)) for m, i in refined],
                        dtype=np.int64)
    else:
        warr = frame.table_array[modes]
    flag = FLAG_BITS if frame.flag_applies(pu) else 0
    j, bits, n2, a2 = _rdo_select(frame.img, frame.order, frame.threshold(pu), pu.x, pu.y,
                                  pu.size, pu.width, pu.height, int(frame.method), modes,
                                  indices, warr, ctxs, frame.contexts, mpms[0], mpms[1],
                                  mpms[2], flag)
    mode, idx = refined[j]
    return PuDecision(pu, mode, idx, frame.weights_for(pu, mode, idx), int(bits), mpms,
                      int(ctxs[j]), (int(n2), int(a2)))


def decide_pu(frame: FrameCoder, pu: PU, screen_log=None) -> PuDecision:
    mpms = frame.mpms_for(pu)
    modes = screen_modes_sad(frame, pu, mpms, screen_log)
    if frame.flag_applies(pu):
        refined = [(m, i) for m, i, _ in adaptive_weight_search(frame, pu, modes)]
    else:
        refined = [(m, 0) for m in modes]
    return rdo_select(frame, pu, refined, mpms)


class _Leaf:
    __slots__ = ("decision",)

    def __init__(self, decision):
        self.decision = decision


class _Split:
    __slots__ = ("children", "signalled")

    def __init__(self, children, signalled):
        self.children = children
        self.signalled = signalled


class Encoder:
    """Quadtree search and bitstream emission for one frame."""

    def __init__(self, original: Plane, config: EncoderConfig, record: bool = False):
        self.config = config
        self.frame = FrameCoder(original.width, original.height, config, original.samples)
        self.record = record
        self.records: list[PuRecord] = []
        self.screen_log: list | None = [] if record else None

    def _inside(self, x, y, size):
        return x + size <= self.frame.width and y + size <= self.frame.height

    def search_cu(self, x: int, y: int, size: int):
        """Return ``(bits, node)`` for the cheapest coding of this CU.

        On return ``frame.contexts`` and ``frame.modes`` hold the state after
        the chosen branch.
        """
        frame = self.frame
        if x >= frame.width or y >= frame.height:
            return 0, None
        inside = self._inside(x, y, size)
        half = size // 2
        if size > self.config.min_pu and not inside:
            total, children = 0, []
            for cy, cx in ((y, x), (y, x + half), (y + half, x), (y + half, x + half)):
                b, node = self.search_cu(cx, cy, half)
                total += b
                children.append(node)
            return total, _Split(children, False)
        can_split = size > self.config.min_pu
        before = frame.contexts.copy()
        pu = frame.make_pu(x, y, size)
        decision = decide_pu(frame, pu, self.screen_log)
        leaf_bits = decision.bits + (1 if can_split else 0)
        frame.contexts[decision.context] = decision.context_after
        if not can_split:
            frame.paint(pu, decision.mode)
            return leaf_bits, _Leaf(decision)
        leaf_ctx = frame.contexts
        frame.paint(pu, decision.mode)
        frame.contexts = before
        split_bits, children = 1, []
        for cy, cx in ((y, x), (y, x + half), (y + half, x), (y + half, x + half)):
            b, node = self.search_cu(cx, cy, half)
            split_bits += b
            children.append(node)
        if split_bits < leaf_bits:
            return split_bits, _Split(children, True)
        frame.contexts = leaf_ctx
        frame.paint(pu, decision.mode)
        return leaf_bits, _Leaf(decision)

    def emit(self, node, sink: BitSink, live: list[RiceContext], recon: np.ndarray):
        if node is None:
            return
        if isinstance(node, _Split):
            if node.signalled:
                sink.write_bit(1)
            for child in node.children:
                self.emit(child, sink, live, recon)
            return
        d = node.decision
        pu = d.pu
        frame = self.frame
        if pu.size > self.config.min_pu:
            sink.write_bit(0)
        start = sink.bit_count
        signal_mode(sink, d.mode, d.mpms)
        flag = frame.flag_applies(pu)
        if flag:
            sink.write(d.candidate_index, FLAG_BITS)
        pred, resid = frame.prediction(pu, d.mode, d.weights)
        encode_residual_block(sink, live[d.context], resid)
        recon[pu.y:pu.y + pu.height, pu.x:pu.x + pu.width] = _add_scan(pred, resid, frame, pu, d.mode)
        if self.record:
            cands = None
            if flag:
                cands = candidate_set(frame.table[d.mode],
                                      prng_for_pu(self.config.frame_index, pu.x, pu.y, d.mode))
            self.records.append(PuRecord(d, sink.bit_count - start, flag, cands))

    def run(self) -> EncodeResult:
        frame = self.frame
        cfg = self.config
        sink = BitSink()
        live = [RiceContext() for _ in range(NUM_CONTEXTS)]
        recon = np.zeros_like(frame.img)
        for y in range(0, frame.height, cfg.ctu_size):
            for x in range(0, frame.width, cfg.ctu_size):
                _, node = self.search_cu(x, y, cfg.ctu_size)
                self.emit(node, sink, live, recon)
        if not np.array_equal(recon, frame.img):
            raise AssertionError("encoder reconstruction diverged from the source")
        header = _header(frame.width, frame.height, cfg)
        return EncodeResult(header + sink.getvalue(), sink.bit_count, self.records,
                            self.screen_log or [])


def _scan_to_block(resid: np.ndarray, pu: PU, column_major: bool) -> np.ndarray:
    if column_major:
        return resid.reshape(pu.width, pu.height).T
    return resid.reshape(pu.height, pu.width)


def _column_major(method: Method, mode: int) -> bool:
    if method == Method.SAP:
        return 2 <= mode <= 17
    if method.uses_weights:
        return mode_group(mode) == 0
    return False


def _add_scan(pred, resid, frame: FrameCoder, pu: PU, mode: int) -> np.ndarray:
    return pred + _scan_to_block(resid, pu, _column_major(frame.method, mode))


def _header(width: int, height: int, cfg: EncoderConfig) -> bytes:
    head = HEADER.pack(MAGIC, VERSION, int(cfg.method), cfg.ctu_size, cfg.min_pu,
                       width, height, cfg.frame_index)
    table = bytes(v + 128 for ws in cfg.weights for v in ws)
    return head + table


def encode_frame_detailed(original: Plane, config: EncoderConfig,
                          record: bool = False) -> EncodeResult:
    return Encoder(original, config, record).run()


def encode_frame(original: Plane, config: EncoderConfig) -> bytes:
    return encode_frame_detailed(original, config).data


@dataclass
class StreamInfo:
    method: Method
    ctu_size: int
    min_pu: int
    width: int
    height: int
    frame_index: int
    weights: WeightTable
    payload_offset: int


def parse_header(data: bytes) -> StreamInfo:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic("not an L3TF stream")
    if len(data) < HEADER.size + 3 * NUM_MODES:
        raise MalformedStream("truncated header")
    magic, version, method, ctu, min_pu, width, height, frame_index = HEADER.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported stream version {version}")
    try:
        method = Method(method)
    except ValueError:
        raise MalformedStream(f"unknown method {method}") from None
    raw = data[HEADER.size:HEADER.size + 3 * NUM_MODES]
    rows = [tuple(b - 128 for b in raw[3 * m:3 * m + 3]) for m in range(NUM_MODES)]
    try:
        table = WeightTable.from_rows(rows)
        EncoderConfig(method, table, ctu, min_pu, frame_index)
    except ValueError as exc:
        raise MalformedStream(f"bad header: {exc}") from None
    if width < min_pu or height < min_pu:
        raise MalformedStream("frame smaller than the minimum PU")
    return StreamInfo(method, ctu, min_pu, width, height, frame_index, table,
                      HEADER.size + 3 * NUM_MODES)


class Decoder:
    def __init__(self, data: bytes):
        info = parse_header(data)
        self.info = info
        cfg = EncoderConfig(info.method, info.weights, info.ctu_size, info.min_pu,
                            info.frame_index)
        self.config = cfg
        self.frame = FrameCoder(info.width, info.height, cfg)
        self.source = BitSource(data, 8 * info.payload_offset)
        self.contexts = [RiceContext() for _ in range(NUM_CONTEXTS)]
        self.decisions: list[tuple[PU, int, int, WeightSet | None]] = []

    def decode_cu(self, x: int, y: int, size: int) -> None:
        frame = self.frame
        if x >= frame.width or y >= frame.height:
            return
        if size > self.config.min_pu:
            inside = x + size <= frame.width and y + size <= frame.height
            if not inside or self.source.read_bit():
                half = size // 2
                for cy, cx in ((y, x), (y, x + half), (y + half, x), (y + half, x + half)):
                    self.decode_cu(cx, cy, half)
                return
        pu = frame.make_pu(x, y, size)
        mpms = frame.mpms_for(pu)
        mode = parse_mode(self.source, mpms)
        index = self.source.read(FLAG_BITS) if frame.flag_applies(pu) else 0
        weights = frame.weights_for(pu, mode, index)
        ctx = self.contexts[context_index(frame.method, mode, size)]
        resid = decode_residual_block(self.source, ctx, pu.width * pu.height)
        if not _reconstruct(frame, pu, mode, weights, resid):
            raise MalformedStream(f"reconstruction out of range at {pu}")
        frame.paint(pu, mode)
        self.decisions.append((pu, mode, index, weights))

    def run(self) -> Plane:
        cfg = self.config
        for y in range(0, self.frame.height, cfg.ctu_size):
            for x in range(0, self.frame.width, cfg.ctu_size):
                self.decode_cu(x, y, cfg.ctu_size)
        if self.source.remaining >= 8:
            raise MalformedStream("trailing data after the last CTU")
        return Plane.from_array(self.frame.img)


def _reconstruct(frame: FrameCoder, pu: PU, mode: int, weights, resid) -> bool:
    return _reconstruct_pu(frame.img, frame.order, frame.threshold(pu), pu.x, pu.y,
                           pu.size, pu.width, pu.height, int(frame.method), mode,
                           _weights_array(weights), resid)


def decode_frame(data: bytes) -> Plane:
    return Decoder(bytes(data)).run()


# ---------------------------------------------------------------------------
# numba kernels; ``method`` is the integer Method value


@njit(cache=True)
def _is_block(method, mode):
    return method == 0 or (method == 1 and mode < 2)


@njit(cache=True)
def _predict_into(img, order, thr, x0, y0, size, pw, ph, method, mode, wts, resid, pred):
    """Fill ``pred`` and scan-order ``resid`` for one PU (encoder side)."""
    if _is_block(method, mode):
        full = _block_kernel(img, order, thr, x0, y0, size, mode)
        for y in range(ph):
            for x in range(pw):
                p = full[y, x]
                pred[y, x] = p
                resid[y * pw + x] = np.int32(img[y0 + y, x0 + x]) - p
        return True
    kind = 1 if method == 1 else 2
    return _pixelwise_kernel(img, order, thr, x0, y0, pw, ph, kind, mode, wts, resid,
                             False, pred)


@njit(cache=True)
def _pu_residual(img, order, thr, x0, y0, size, pw, ph, method, mode, wts, resid, pred):
    _predict_into(img, order, thr, x0, y0, size, pw, ph, method, mode, wts, resid, pred)


@njit(cache=True)
def _rdo_select(img, order, thr, x0, y0, size, pw, ph, method, modes, indices, warr, ctxs,
                contexts, mpm0, mpm1, mpm2, flag):
    """Index of the cheapest candidate with its bits and resulting context state."""
    resid = np.empty(pw * ph, dtype=np.int32)
    pred = np.empty((ph, pw), dtype=np.int32)
    line = _reference_line(img, order, thr, x0, y0, size)
    win = _primary_window(order, thr, x0, y0, pw, ph)
    kind = 1 if method == 1 else 2
    best = -1
    best_bits = 0
    best_n = 0
    best_a = 0
    for j in range(modes.shape[0]):
        mode = modes[j]
        if _is_block(method, mode):
            full = _block_from_line(line, size, mode)
            for y in range(ph):
                for x in range(pw):
                    resid[y * pw + x] = np.int32(img[y0 + y, x0 + x]) - full[y, x]
        else:
            _pixelwise_core(img, order, thr, win, x0, y0, pw, ph, kind, mode, warr[j],
                            resid, False, pred)
        c = ctxs[j]
        bits, n2, a2 = _rice_cost(resid, contexts[c, 0], contexts[c, 1])
        if mode == mpm0:
            bits += 2
        elif mode == mpm1 or mode == mpm2:
            bits += 3
        else:
            bits += 6
        bits += flag
        if (best < 0 or bits < best_bits
                or (bits == best_bits and (mode < modes[best]
                                           or (mode == modes[best]
                                               and indices[j] < indices[best])))):
            best = j
            best_bits = bits
            best_n = n2
            best_a = a2
    return best, best_bits, best_n, best_a


@njit(cache=True)
def _sad_all_modes(img, order, thr, x0, y0, size, pw, ph, method, table):
    out = np.zeros(35, dtype=np.int64)
    resid = np.empty(pw * ph, dtype=np.int32)
    pred = np.empty((ph, pw), dtype=np.int32)
    line = _reference_line(img, order, thr, x0, y0, size)
    win = _primary_window(order, thr, x0, y0, pw, ph)
    kind = 1 if method == 1 else 2
    for mode in range(35):
        s = 0
        if _is_block(method, mode):
            full = _block_from_line(line, size, mode)
            for y in range(ph):
                for x in range(pw):
                    s += abs(np.int64(img[y0 + y, x0 + x]) - full[y, x])
        else:
            _pixelwise_core(img, order, thr, win, x0, y0, pw, ph, kind, mode, table[mode],
                            resid, False, pred)
            for i in range(pw * ph):
                s += abs(resid[i])
        out[mode] = s
    return out


@njit(cache=True)
def _sad_weights(img, order, thr, x0, y0, pw, ph, mode, warr):
    out = np.zeros(warr.shape[0], dtype=np.int64)
    resid = np.empty(pw * ph, dtype=np.int32)
    pred = np.empty((ph, pw), dtype=np.int32)
    win = _primary_window(order, thr, x0, y0, pw, ph)
    for c in range(warr.shape[0]):
        _pixelwise_core(img, order, thr, win, x0, y0, pw, ph, 2, mode, warr[c], resid,
                        False, pred)
        s = 0
        for i in range(pw * ph):
            s += abs(resid[i])
        out[c] = s
    return out


@njit(cache=True)
def _reconstruct_pu(img, order, thr, x0, y0, size, pw, ph, method, mode, wts, resid):
    if _is_block(method, mode):
        full = _block_kernel(img, order, thr, x0, y0, size, mode)
        for y in range(ph):
            for x in range(pw):
                v = full[y, x] + resid[y * pw + x]
                if v < 0 or v > 255:
                    return False
                img[y0 + y, x0 + x] = v
        return True
    kind = 1 if method == 1 else 2
    pred = np.empty((ph, pw), dtype=np.int32)
    return _pixelwise_kernel(img, order, thr, x0, y0, pw, ph, kind, mode, wts, resid,
                             True, pred)
