"""Offline weight training.

Stage 1 alternates between encoding the corpus with the current table,
collecting (A, B, C, x) samples under the modes the encoder actually chose,
and refitting each mode's weights by constrained least squares. Stage 2 is
a greedy search over the fixed perturbation table, scored by re-encoding
the whole corpus.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .codec import (
    TABLE_BYTE_MAX, TABLE_BYTE_MIN, PERTURBATIONS, EncoderConfig, FrameCoder, Method,
    encode_frame_detailed,
)
from .core import ANGLES, DC, NUM_MODES, PLANAR, WEIGHT_SCALE, Plane, WeightSet, WeightTable
from .prediction import neighbor_config

# unit weight sets that make the 3-tap predictor return one tap verbatim
_UNIT = (WeightSet(64, 0, 0), WeightSet(0, 64, 0), WeightSet(0, 0, 64))
MIN_FIT_RECORDS = 3


class EmptyCorpus(ValueError):
    pass


@dataclass
class SampleLog:
    """Training samples grouped by mode; each row is ``(A, B, C, x)``."""

    by_mode: dict[int, np.ndarray] = field(default_factory=dict)

    def __len__(self):
        return sum(len(v) for v in self.by_mode.values())

    def records(self, mode: int) -> np.ndarray:
        return self.by_mode.get(mode, np.empty((0, 4), dtype=np.int64))

    def modes(self) -> list[int]:
        return sorted(m for m, v in self.by_mode.items() if len(v))


@dataclass
class TrainReport:
    stage1_bits: list[int] = field(default_factory=list)
    stage1_best: int | None = None
    # (pass, mode, candidate, bits) for every accepted stage-2 move
    stage2_trace: list[tuple[int, int, int, int]] = field(default_factory=list)
    stage2_start: int | None = None
    stage2_passes: int = 0
    final_bits: int | None = None

    def to_text(self) -> str:
        lines = ["# stage iteration bits accepted"]
        for i, b in enumerate(self.stage1_bits):
            mark = "best" if i == self.stage1_best else "-"
            lines.append(f"stage1 {i} {b} {mark}")
        if self.stage2_start is not None:
            lines.append(f"stage2 start {self.stage2_start} -")
            for p, mode, cand, bits in self.stage2_trace:
                lines.append(f"stage2 pass{p} {bits} mode={mode},candidate={cand}")
            lines.append(f"stage2 passes {self.stage2_passes} -")
        if self.final_bits is not None:
            lines.append(f"final - {self.final_bits} -")
        return "\n".join(lines) + "\n"


def _check_corpus(corpus: Sequence[Plane]) -> None:
    if not corpus:
        raise EmptyCorpus("training corpus is empty")


def _config(weights: WeightTable) -> EncoderConfig:
    return EncoderConfig(Method.THREE_TAP_OFFLINE, weights)


def corpus_bits(corpus: Sequence[Plane], weights: WeightTable) -> int:
    """Total payload bits of the corpus under the offline 3-tap method."""
    _check_corpus(corpus)
    cfg = _config(weights)
    return sum(encode_frame_detailed(p, cfg).payload_bits for p in corpus)


def _encode_and_sample(corpus, weights) -> tuple[int, SampleLog]:
    _check_corpus(corpus)
    cfg = _config(weights)
    parts: dict[int, list[np.ndarray]] = {}
    total = 0
    for plane in corpus:
        result = encode_frame_detailed(plane, cfg, record=True)
        total += result.payload_bits
        frame = FrameCoder(plane.width, plane.height, cfg, plane.samples)
        for rec in result.records:
            pu, mode = rec.decision.pu, rec.decision.mode
            taps = [frame.prediction(pu, mode, w)[0].ravel() for w in _UNIT]
            x = frame.img[pu.y:pu.y + pu.height, pu.x:pu.x + pu.width].ravel()
            parts.setdefault(mode, []).append(np.stack(taps + [x], axis=1).astype(np.int64))
    log = SampleLog({m: np.concatenate(v) for m, v in sorted(parts.items())})
    return total, log


def collect_samples(corpus: Sequence[Plane], weights: WeightTable) -> SampleLog:
    """Encode every plane and record one ``(A, B, C, x)`` row per coded pixel.

    Taps are read with the same causal padding rule as the predictor, under
    the mode the encoder committed for the pixel's PU.
    """
    return _encode_and_sample(corpus, weights)[1]


def _round_half_up(q: Fraction) -> int:
    return int((q + Fraction(1, 2)).__floor__())


def ls_fit_mode(records, previous: WeightSet) -> WeightSet:
    """Least-squares weights with ``rho1 + rho2 + rho3 == 64``.

    Substituting ``rho3 = 1 - rho1 - rho2`` turns the problem into ordinary
    least squares on ``A - C`` and ``B - C`` against ``x - C``, solved here
    in exact rational arithmetic. Too few records, a singular system or a
    result that does not fit the stream header keep ``previous``.
    """
    rec = np.asarray(records, dtype=np.int64).reshape(-1, 4)
    if len(rec) < MIN_FIT_RECORDS:
        return previous
    a, b, c, x = rec.T
    u, v, t = a - c, b - c, x - c
    suu, suv, svv = int(u @ u), int(u @ v), int(v @ v)
    sut, svt = int(u @ t), int(v @ t)
    det = suu * svv - suv * suv
    if det == 0:
        return previous
    r1 = _round_half_up(Fraction(WEIGHT_SCALE * (svv * sut - suv * svt), det))
    r2 = _round_half_up(Fraction(WEIGHT_SCALE * (suu * svt - suv * sut), det))
    r3 = WEIGHT_SCALE - r1 - r2
    if not all(TABLE_BYTE_MIN <= r <= TABLE_BYTE_MAX for r in (r1, r2, r3)):
        return previous
    return WeightSet(r1, r2, r3)


def fit_table(log: SampleLog, previous: WeightTable) -> WeightTable:
    return WeightTable(ls_fit_mode(log.records(m), previous[m]) for m in range(NUM_MODES))


def stage1_train(corpus: Sequence[Plane], init: WeightTable, max_iters: int = 10,
                 report: TrainReport | None = None) -> tuple[WeightTable, TrainReport]:
    """Iterate encode, sample and refit; return the lowest-bitrate table seen.

    Iterate 0 is ``init`` itself. Each later iterate is fitted on the samples
    of the one before it. The loop stops at the first iterate that does not
    lower the bitrate, or after ``max_iters`` refits.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    report = report or TrainReport()
    bits, log = _encode_and_sample(corpus, init)
    report.stage1_bits.append(bits)
    best, best_bits, report.stage1_best = init, bits, 0
    current = init
    for it in range(1, max_iters + 1):
        nxt = fit_table(log, current)
        if nxt == current:
            break
        bits, log = _encode_and_sample(corpus, nxt)
        report.stage1_bits.append(bits)
        if bits >= best_bits:
            break
        best, best_bits, report.stage1_best = nxt, bits, it
        current = nxt
    report.final_bits = best_bits
    return best, report


def _serializable(ws: WeightSet) -> bool:
    return all(TABLE_BYTE_MIN <= v <= TABLE_BYTE_MAX for v in ws)


def stage2_search(corpus: Sequence[Plane], weights: WeightTable,
                  report: TrainReport | None = None) -> tuple[WeightTable, TrainReport]:
    """Greedy per-mode descent over the six fixed perturbations.

    For each mode in turn, every perturbation of that mode's weights is
    scored by re-encoding the corpus; the best one is kept only if it
    strictly lowers the bitrate. Passes over all modes repeat while a pass
    makes progress.
    """
    report = report or TrainReport()
    b_opt = corpus_bits(corpus, weights)
    report.stage2_start = b_opt
    passes = 0
    while True:
        passes += 1
        b_best = b_opt
        for k in range(NUM_MODES):
            best_i, best_b, best_w = -1, None, None
            for i, delta in enumerate(PERTURBATIONS):
                try:
                    cand = weights[k].shifted(*delta)
                except ValueError:
                    continue
                if not _serializable(cand):
                    continue
                trial = weights.replace(k, cand)
                b = corpus_bits(corpus, trial)
                if best_b is None or b < best_b:
                    best_i, best_b, best_w = i, b, trial
            if best_b is not None and best_b < b_opt:
                weights, b_opt = best_w, best_b
                report.stage2_trace.append((passes, k, best_i, b_opt))
        if b_opt >= b_best:
            break
    report.stage2_passes = passes
    report.final_bits = b_opt
    return weights, report


def default_init_weights() -> WeightTable:
    """Starting table: each angular mode's two-tap projection moved onto the 3-tap layout.

    An angular mode's projection hits two neighbours with weights
    ``32 - f`` and ``f`` (``f`` the fractional displacement in 1/32 pel).
    Doubling gives 1/64 units; each neighbour coincides with one of the
    mode's taps, and the remaining tap gets 0. Planar and DC share
    ``(22, 21, 21)``.
    """
    sets = []
    for mode in range(NUM_MODES):
        if mode in (PLANAR, DC):
            sets.append(WeightSet(22, 21, 21))
            continue
        angle = ANGLES[mode]
        whole, frac = angle >> 5, angle & 31
        if mode >= 18:
            near, far = (whole, -1), (whole + 1, -1)
        else:
            near, far = (-1, whole), (-1, whole + 1)
        taps = neighbor_config(mode).taps
        w = [0, 0, 0]
        w[taps.index(near)] += 2 * (32 - frac)
        if frac:
            w[taps.index(far)] += 2 * frac
        sets.append(WeightSet(*w))
    return WeightTable(sets)
