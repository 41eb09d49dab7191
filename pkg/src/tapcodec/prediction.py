"""Intra predictors: HEVC block-based, SAP and 3-tap pixel-wise.

All predictors read a sample raster together with an availability rule.
Availability is expressed as an integer ``order`` map and a threshold: a
pixel outside the current PU is available iff ``order[y, x] < threshold``.
The codec passes the static coding-order map (CTU raster, z-order inside
a CTU) with the PU's own start order as threshold; :class:`Canvas` passes
``0`` for reconstructed and ``1`` for missing pixels with threshold ``1``.
Pixels inside the PU are available iff they precede the current pixel in
the PU's scan order.

The scalar functions (:func:`predict_pixel_sap`, :func:`predict_pixel_3tap`,
:func:`reference_samples`) are straightforward Python. The ``_*_kernel``
functions are numba versions of the same rules used on the hot path.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .core import ANGLES, DC, NUM_MODES, PLANAR, Plane, WeightSet, check_mode

SAP = "SAP"
THREE_TAP = "THREE_TAP"


class Scan(enum.Enum):
    ROW_MAJOR = "row-major"
    COLUMN_MAJOR = "column-major"


class PU(NamedTuple):
    """Prediction unit: nominal square ``size`` clipped to ``width`` x ``height``."""

    x: int
    y: int
    size: int
    width: int
    height: int

    @classmethod
    def square(cls, x: int, y: int, size: int) -> PU:
        return cls(x, y, size, size, size)

    def contains(self, x: int, y: int) -> bool:
        return self.x <= x < self.x + self.width and self.y <= y < self.y + self.height


@dataclass(frozen=True)
class NeighborConfig:
    """Tap offsets ``(dx, dy)`` for a, b, c and the pixel scan order."""

    group: int
    taps: tuple[tuple[int, int], tuple[int, int], tuple[int, int]]
    scan: Scan


# groups: 0 = modes 2-9, 1 = planar/DC/10-18, 2 = 19-26, 3 = 27-34
_CONFIGS = (
    NeighborConfig(0, ((-1, 1), (-1, 0), (0, -1)), Scan.COLUMN_MAJOR),
    NeighborConfig(1, ((-1, 0), (-1, -1), (0, -1)), Scan.ROW_MAJOR),
    NeighborConfig(2, ((0, -1), (-1, -1), (1, -1)), Scan.ROW_MAJOR),
    NeighborConfig(3, ((0, -1), (1, -1), (2, -1)), Scan.ROW_MAJOR),
)

# Substitutes for an unavailable tap, relative to the current pixel. Away
# from the frame origin at least one of the first two is always available.
FALLBACK_OFFSETS = ((-1, 0), (0, -1), (-1, -1), (1, -1), (-1, 1), (2, -1))
MISSING_SAMPLE = 128


def mode_group(mode: int) -> int:
    if 2 <= mode <= 9:
        return 0
    if mode <= 18:
        return 1
    if mode <= 26:
        return 2
    return 3


def neighbor_config(mode: int) -> NeighborConfig:
    return _CONFIGS[mode_group(check_mode(mode))]


def sap_scan(mode: int) -> Scan:
    return Scan.COLUMN_MAJOR if 2 <= mode <= 17 else Scan.ROW_MAJOR


def interpolate_2tap(a: int, b: int, w: int) -> int:
    a, b, w = int(a), int(b), int(w)
    return ((32 - w) * a + w * b + 16) >> 5


class Canvas:
    """Reconstruction buffer with a per-pixel availability flag."""

    def __init__(self, samples, available=None):
        self.samples = np.array(samples, dtype=np.uint8)
        if available is None:
            available = np.zeros(self.samples.shape, dtype=bool)
        self.available = np.array(available, dtype=bool)
        if self.available.shape != self.samples.shape:
            raise ValueError("availability map must match the sample raster")

    @classmethod
    def empty(cls, width: int, height: int) -> Canvas:
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def from_plane(cls, plane: Plane, available=None) -> Canvas:
        if available is None:
            available = np.ones((plane.height, plane.width), dtype=bool)
        return cls(plane.samples, available)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    def is_available(self, x: int, y: int) -> bool:
        return (0 <= x < self.width and 0 <= y < self.height
                and bool(self.available[y, x]))

    def commit(self, x: int, y: int, value: int) -> None:
        self.samples[y, x] = value
        self.available[y, x] = True

    def copy(self) -> Canvas:
        return Canvas(self.samples, self.available)

    def order_map(self) -> np.ndarray:
        """Availability as an order map for the kernels (threshold 1)."""
        return (~self.available).astype(np.int32)

    def tap(self, x: int, y: int, dx: int, dy: int) -> int:
        """Sample at ``(x+dx, y+dy)`` after the padding rule.

        An unavailable position is replaced by the available fallback
        neighbour of ``(x, y)`` closest to it; with no candidate at all the
        result is :data:`MISSING_SAMPLE`.
        """
        if self.is_available(x + dx, y + dy):
            return int(self.samples[y + dy, x + dx])
        best = None
        for fx, fy in FALLBACK_OFFSETS:
            if self.is_available(x + fx, y + fy):
                d = (fx - dx) ** 2 + (fy - dy) ** 2
                if best is None or d < best[0]:
                    best = (d, int(self.samples[y + fy, x + fx]))
        return MISSING_SAMPLE if best is None else best[1]


def sap_taps(x: int, y: int, mode: int) -> tuple[tuple[int, int], tuple[int, int], int]:
    """Straddling neighbour positions and 5-bit weight for SAP mode ``mode``."""
    angle = ANGLES[mode]
    if mode >= 18:
        pos = x * 32 + angle
        ix, w = pos >> 5, pos & 31
        return (ix, y - 1), (ix + 1, y - 1), w
    pos = y * 32 + angle
    iy, w = pos >> 5, pos & 31
    return (x - 1, iy), (x - 1, iy + 1), w


def predict_pixel_sap(canvas: Canvas, x: int, y: int, mode: int) -> int:
    if not 2 <= mode <= 34:
        raise ValueError("SAP pixel prediction is defined for angular modes only")
    (ax, ay), (bx, by), w = sap_taps(x, y, mode)
    a = canvas.tap(x, y, ax - x, ay - y)
    if w == 0:
        return a
    b = canvas.tap(x, y, bx - x, by - y)
    return interpolate_2tap(a, b, w)


def predict_pixel_3tap(canvas: Canvas, x: int, y: int, cfg: NeighborConfig,
                       w: WeightSet) -> int:
    a, b, c = (canvas.tap(x, y, dx, dy) for dx, dy in cfg.taps)
    p = (w.rho1 * a + w.rho2 * b + w.rho3 * c + 32) >> 6
    return min(max(p, 0), 255)


def scan_positions(pu: PU, scan: Scan):
    """Pixel coordinates of ``pu`` in the given scan order."""
    if scan is Scan.ROW_MAJOR:
        return [(x, y) for y in range(pu.y, pu.y + pu.height)
                for x in range(pu.x, pu.x + pu.width)]
    return [(x, y) for x in range(pu.x, pu.x + pu.width)
            for y in range(pu.y, pu.y + pu.height)]


def pixelwise_scan(mode: int, method: str) -> Scan:
    if method == SAP:
        return sap_scan(mode)
    return neighbor_config(mode).scan


def reference_samples(canvas: Canvas, pu: PU) -> np.ndarray:
    """HEVC reference line for ``pu``: ``4*size + 1`` samples.

    Layout runs from the bottom-most left sample up to the corner and then
    along the top row to the right: ``ref[2N - 1 - i]`` is left sample ``i``,
    ``ref[2N]`` the corner and ``ref[2N + 1 + i]`` top sample ``i``.
    """
    n = pu.size
    order = canvas.order_map()
    return _reference_line(canvas.samples, order, 1, pu.x, pu.y, n)


def predict_block_hevc(canvas: Canvas, pu: PU, mode: int) -> np.ndarray:
    """Block prediction (planar, DC or angular), cropped to the PU's clip."""
    check_mode(mode)
    pred = _block_kernel(canvas.samples, canvas.order_map(), 1, pu.x, pu.y, pu.size, mode)
    return pred[:pu.height, :pu.width]


def predict_pu_pixelwise(canvas: Canvas, original: Plane, pu: PU, mode: int,
                         w: WeightSet | None, method: str):
    """Closed-loop pixel-wise prediction of one PU.

    Pixels outside the PU come from ``canvas``; pixels of the PU already
    visited in scan order come from ``original`` (lossless reconstruction).
    Returns ``(prediction, residual)`` as ``(height, width)`` int arrays.
    """
    check_mode(mode)
    if method == SAP and mode in (PLANAR, DC):
        pred = predict_block_hevc(canvas, pu, mode).astype(np.int32)
        orig = original.samples[pu.y:pu.y + pu.height, pu.x:pu.x + pu.width]
        return pred, orig.astype(np.int32) - pred
    img = canvas.samples.copy()
    region = (slice(pu.y, pu.y + pu.height), slice(pu.x, pu.x + pu.width))
    img[region] = original.samples[region]
    kind = 1 if method == SAP else 2
    wts = np.array(tuple(w) if w is not None else (64, 0, 0), dtype=np.int64)
    pred = np.empty((pu.height, pu.width), dtype=np.int32)
    resid = np.empty(pu.width * pu.height, dtype=np.int32)
    _pixelwise_kernel(img, canvas.order_map(), 1, pu.x, pu.y, pu.width, pu.height,
                      kind, mode, wts, resid, False, pred)
    return pred, img[region].astype(np.int32) - pred


def predict_pu_pixelwise_reference(canvas: Canvas, original: Plane, pu: PU, mode: int,
                                   w: WeightSet | None, method: str):
    """Pure-Python twin of :func:`predict_pu_pixelwise` (marks pixels as it goes)."""
    if method == SAP and mode in (PLANAR, DC):
        return predict_pu_pixelwise(canvas, original, pu, mode, w, method)
    work = canvas.copy()
    pred = np.empty((pu.height, pu.width), dtype=np.int32)
    cfg = neighbor_config(mode)
    for x, y in scan_positions(pu, pixelwise_scan(mode, method)):
        if method == SAP:
            p = predict_pixel_sap(work, x, y, mode)
        else:
            p = predict_pixel_3tap(work, x, y, cfg, w)
        pred[y - pu.y, x - pu.x] = p
        work.commit(x, y, original.samples[y, x])
    orig = original.samples[pu.y:pu.y + pu.height, pu.x:pu.x + pu.width]
    return pred, orig.astype(np.int32) - pred


# ---------------------------------------------------------------------------
# numba kernels

_TAPS = np.array([c.taps for c in _CONFIGS], dtype=np.int64)
_FALLBACK = np.array(FALLBACK_OFFSETS, dtype=np.int64)
_ANGLES = np.array(ANGLES, dtype=np.int64)
_INV_ANGLE = {-2: -4096, -5: -1638, -9: -910, -13: -630,
              -17: -482, -21: -390, -26: -315, -32: -256}
_INV_ANGLES = np.array([_INV_ANGLE.get(a, 0) for a in ANGLES], dtype=np.int64)


@njit(cache=True)
def _group_of(mode):
    if 2 <= mode <= 9:
        return 0
    if mode <= 18:
        return 1
    if mode <= 26:
        return 2
    return 3


@njit(cache=True)
def _scan_is_column(kind, mode):
    if kind == 1:
        return 2 <= mode <= 17
    return _group_of(mode) == 0


@njit(cache=True)
def _avail(order, thr, x0, y0, pw, ph, colmaj, cur, tx, ty):
    h, w = order.shape
    if tx < 0 or ty < 0 or tx >= w or ty >= h:
        return False
    if x0 <= tx < x0 + pw and y0 <= ty < y0 + ph:
        if colmaj:
            return (tx - x0) * ph + (ty - y0) < cur
        return (ty - y0) * pw + (tx - x0) < cur
    return order[ty, tx] < thr


@njit(cache=True)
def _fetch(img, order, thr, x0, y0, pw, ph, colmaj, cur, x, y, dx, dy):
    if _avail(order, thr, x0, y0, pw, ph, colmaj, cur, x + dx, y + dy):
        return np.int64(img[y + dy, x + dx])
    best_d = -1
    best_v = np.int64(128)
    for i in range(_FALLBACK.shape[0]):
        fx = _FALLBACK[i, 0]
        fy = _FALLBACK[i, 1]
        if _avail(order, thr, x0, y0, pw, ph, colmaj, cur, x + fx, y + fy):
            d = (fx - dx) * (fx - dx) + (fy - dy) * (fy - dy)
            if best_d < 0 or d < best_d:
                best_d = d
                best_v = np.int64(img[y + fy, x + fx])
    return best_v


@njit(cache=True)
def _primary_window(order, thr, x0, y0, pw, ph):
    """Availability of every position a primary tap can reach.

    Covers columns ``x0-1 .. x0+pw+1`` and rows ``y0-1 .. y0+ph``. PU pixels
    are marked available: primary taps are causal under their scan order.
    """
    h, w = order.shape
    win = np.zeros((ph + 2, pw + 3), dtype=np.bool_)
    for wy in range(ph + 2):
        ty = y0 - 1 + wy
        if ty < 0 or ty >= h:
            continue
        for wx in range(pw + 3):
            tx = x0 - 1 + wx
            if tx < 0 or tx >= w:
                continue
            if x0 <= tx < x0 + pw and y0 <= ty < y0 + ph:
                win[wy, wx] = True
            else:
                win[wy, wx] = order[ty, tx] < thr
    return win


@njit(cache=True)
def _pixelwise_kernel(img, order, thr, x0, y0, pw, ph, kind, mode, wts, resid, decode, pred):
    """Predict a PU pixel by pixel (kind 1 = SAP, 2 = 3-tap).

    Encoding (``decode=False``) fills ``resid`` in scan order from ``img``.
    Decoding writes ``pred + resid`` back into ``img`` as it goes and
    returns False if a reconstructed sample leaves [0, 255].
    """
    win = _primary_window(order, thr, x0, y0, pw, ph)
    return _pixelwise_core(img, order, thr, win, x0, y0, pw, ph, kind, mode, wts, resid,
                           decode, pred)


@njit(cache=True)
def _pixelwise_core(img, order, thr, win, x0, y0, pw, ph, kind, mode, wts, resid, decode,
                    pred):
    colmaj = _scan_is_column(kind, mode)
    if colmaj:
        outer, inner = pw, ph
    else:
        outer, inner = ph, pw
    if kind == 1:
        angle = _ANGLES[mode]
        vertical = mode >= 18
        # projection is the same for every pixel up to translation
        da = angle >> 5
        wf = angle & 31
    else:
        g = _group_of(mode)
        ax, ay = _TAPS[g, 0, 0], _TAPS[g, 0, 1]
        bx, by = _TAPS[g, 1, 0], _TAPS[g, 1, 1]
        cx, cy = _TAPS[g, 2, 0], _TAPS[g, 2, 1]
        w1, w2, w3 = wts[0], wts[1], wts[2]
    s = 0
    for o in range(outer):
        for i in range(inner):
            if colmaj:
                lx, ly = o, i
            else:
                lx, ly = i, o
            x = x0 + lx
            y = y0 + ly
            if kind == 1:
                if vertical:
                    tax, tay, tbx, tby = da, -1, da + 1, -1
                else:
                    tax, tay, tbx, tby = -1, da, -1, da + 1
                if win[ly + tay + 1, lx + tax + 1]:
                    a = np.int64(img[y + tay, x + tax])
                else:
                    a = _fetch(img, order, thr, x0, y0, pw, ph, colmaj, s, x, y, tax, tay)
                if wf == 0:
                    p = a
                else:
                    if win[ly + tby + 1, lx + tbx + 1]:
                        b = np.int64(img[y + tby, x + tbx])
                    else:
                        b = _fetch(img, order, thr, x0, y0, pw, ph, colmaj, s, x, y, tbx, tby)
                    p = ((32 - wf) * a + wf * b + 16) >> 5
            else:
                if win[ly + ay + 1, lx + ax + 1]:
                    va = np.int64(img[y + ay, x + ax])
                else:
                    va = _fetch(img, order, thr, x0, y0, pw, ph, colmaj, s, x, y, ax, ay)
                if win[ly + by + 1, lx + bx + 1]:
                    vb = np.int64(img[y + by, x + bx])
                else:
                    vb = _fetch(img, order, thr, x0, y0, pw, ph, colmaj, s, x, y, bx, by)
                if win[ly + cy + 1, lx + cx + 1]:
                    vc = np.int64(img[y + cy, x + cx])
                else:
                    vc = _fetch(img, order, thr, x0, y0, pw, ph, colmaj, s, x, y, cx, cy)
                p = (w1 * va + w2 * vb + w3 * vc + 32) >> 6
                if p < 0:
                    p = 0
                elif p > 255:
                    p = 255
            pred[ly, lx] = p
            if decode:
                v = p + resid[s]
                if v < 0 or v > 255:
                    return False
                img[y, x] = v
            else:
                resid[s] = np.int64(img[y, x]) - p
            s += 1
    return True


@njit(cache=True)
def _reference_line(img, order, thr, x0, y0, n):
    h, w = img.shape
    total = 4 * n + 1
    ref = np.empty(total, dtype=np.int64)
    ok = np.zeros(total, dtype=np.bool_)
    for i in range(total):
        if i < 2 * n:
            px = x0 - 1
            py = y0 + 2 * n - 1 - i
        elif i == 2 * n:
            px = x0 - 1
            py = y0 - 1
        else:
            px = x0 + i - 2 * n - 1
            py = y0 - 1
        if 0 <= px < w and 0 <= py < h and order[py, px] < thr:
            ok[i] = True
            ref[i] = img[py, px]
    first = -1
    for i in range(total):
        if ok[i]:
            first = i
            break
    if first < 0:
        ref[:] = 128
        return ref
    if not ok[0]:
        ref[0] = ref[first]
    for i in range(1, total):
        if not ok[i]:
            ref[i] = ref[i - 1]
    return ref


@njit(cache=True)
def _block_kernel(img, order, thr, x0, y0, n, mode):
    return _block_from_line(_reference_line(img, order, thr, x0, y0, n), n, mode)


@njit(cache=True)
def _block_from_line(line, n, mode):
    # left[i] = line[2n-1-i], corner = line[2n], top[i] = line[2n+1+i]
    pred = np.empty((n, n), dtype=np.int32)
    log2n = 0
    while (1 << log2n) < n:
        log2n += 1
    if mode == 0:
        tr = line[2 * n + 1 + n]
        bl = line[2 * n - 1 - n]
        for y in range(n):
            for x in range(n):
                pred[y, x] = ((n - 1 - x) * line[2 * n - 1 - y] + (x + 1) * tr
                              + (n - 1 - y) * line[2 * n + 1 + x] + (y + 1) * bl
                              + n) >> (log2n + 1)
        return pred
    if mode == 1:
        s = 0
        for i in range(n):
            s += line[2 * n - 1 - i] + line[2 * n + 1 + i]
        pred[:, :] = (s + n) >> (log2n + 1)
        return pred
    angle = _ANGLES[mode]
    vertical = mode >= 18
    # ref[k + n] holds HEVC's ref[k] for k in [-n, 2n]
    ref = np.zeros(3 * n + 1, dtype=np.int64)
    for k in range(0, 2 * n + 1):
        if k == 0:
            ref[n] = line[2 * n]
        elif vertical:
            ref[n + k] = line[2 * n + k]
        else:
            ref[n + k] = line[2 * n - k]
    if angle < 0:
        inv = _INV_ANGLES[mode]
        last = (n * angle) >> 5
        if last < -1:
            for k in range(last, 0):
                j = -1 + ((k * inv + 128) >> 8)
                # j indexes the opposite side: left (vertical) or top (horizontal)
                if vertical:
                    ref[n + k] = line[2 * n - 1 - j]
                else:
                    ref[n + k] = line[2 * n + 1 + j]
    for y in range(n):
        for x in range(n):
            if vertical:
                main, cross = x, y
            else:
                main, cross = y, x
            idx = ((cross + 1) * angle) >> 5
            fact = ((cross + 1) * angle) & 31
            r0 = ref[n + main + idx + 1]
            if fact:
                r1 = ref[n + main + idx + 2]
                pred[y, x] = ((32 - fact) * r0 + fact * r1 + 16) >> 5
            else:
                pred[y, x] = r0
    return pred


def predict_block_kernel(img, order, thr, pu: PU, mode: int) -> np.ndarray:
    return _block_kernel(img, order, thr, pu.x, pu.y, pu.size, mode)[:pu.height, :pu.width]


__all__ = [
    "Canvas", "FALLBACK_OFFSETS", "MISSING_SAMPLE", "NUM_MODES", "NeighborConfig", "PU",
    "SAP", "Scan", "THREE_TAP", "interpolate_2tap", "mode_group", "neighbor_config",
    "predict_block_hevc", "predict_pixel_3tap", "predict_pixel_sap",
    "predict_pu_pixelwise", "predict_pu_pixelwise_reference", "reference_samples",
    "sap_scan", "sap_taps", "scan_positions",
]
