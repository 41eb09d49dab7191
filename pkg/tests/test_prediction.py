import numpy as np
import pytest
from hypothesis import given, strategies as st

from tapcodec.core import ANGLES, Plane, WeightSet
from tapcodec.prediction import (
    MISSING_SAMPLE, PU, SAP, THREE_TAP, Canvas, Scan, interpolate_2tap, mode_group,
    neighbor_config, pixelwise_scan, predict_block_hevc, predict_pixel_3tap,
    predict_pixel_sap, predict_pu_pixelwise, predict_pu_pixelwise_reference,
    reference_samples, sap_scan, scan_positions,
)

UNIT = [WeightSet(64, 0, 0), WeightSet(0, 64, 0), WeightSet(0, 0, 64)]


# ---------------------------------------------------------------------------
# oracles


def substitute_oracle(canvas, pu):
    """Reference line by explicit HEVC substitution, bottom-left to top-right."""
    n = pu.size
    pos = [(pu.x - 1, pu.y + 2 * n - 1 - i) for i in range(2 * n)]
    pos += [(pu.x - 1, pu.y - 1)]
    pos += [(pu.x + i, pu.y - 1) for i in range(2 * n)]
    vals = [int(canvas.samples[y, x]) if canvas.is_available(x, y) else None for x, y in pos]
    if all(v is None for v in vals):
        return [128] * len(vals)
    if vals[0] is None:
        vals[0] = next(v for v in vals if v is not None)
    for i in range(1, len(vals)):
        if vals[i] is None:
            vals[i] = vals[i - 1]
    return vals


def hevc_block_oracle(line, n, mode):
    """Planar, DC and angular prediction written from the standard's formulas."""
    left = {y: line[2 * n - 1 - y] for y in range(2 * n)}   # p[-1][y]
    top = {x: line[2 * n + 1 + x] for x in range(2 * n)}    # p[x][-1]
    left[-1] = top[-1] = line[2 * n]
    log2n = n.bit_length() - 1
    out = np.zeros((n, n), dtype=np.int64)
    if mode == 0:
        for y in range(n):
            for x in range(n):
                out[y, x] = ((n - 1 - x) * left[y] + (x + 1) * top[n]
                             + (n - 1 - y) * top[x] + (y + 1) * left[n] + n) >> (log2n + 1)
        return out
    if mode == 1:
        dc = (sum(top[i] for i in range(n)) + sum(left[i] for i in range(n)) + n) >> (log2n + 1)
        return np.full((n, n), dc)
    angle = ANGLES[mode]
    main, side = (top, left) if mode >= 18 else (left, top)
    ref = {k: main[k - 1] for k in range(0, 2 * n + 1)}
    if (n * angle) >> 5 < -1:
        inv = round(256 * 32 / angle)
        for k in range((n * angle) >> 5, 0):
            ref[k] = side[-1 + ((k * inv + 128) >> 8)]
    for y in range(n):
        for x in range(n):
            a, c = (x, y) if mode >= 18 else (y, x)
            idx, fact = ((c + 1) * angle) >> 5, ((c + 1) * angle) & 31
            if fact:
                v = ((32 - fact) * ref[a + idx + 1] + fact * ref[a + idx + 2] + 16) >> 5
            else:
                v = ref[a + idx + 1]
            out[y, x] = v
    return out


def random_canvas(rng, w, h, p_avail=0.7):
    samples = rng.integers(0, 256, (h, w))
    return Canvas(samples, rng.random((h, w)) < p_avail)


# ---------------------------------------------------------------------------
# two-tap interpolation


@pytest.mark.parametrize("a, b, w, expected", [
    (100, 200, 0, 100), (100, 100, 16, 100), (0, 255, 16, 128), (0, 255, 32, 255),
])
def test_interpolate_examples(a, b, w, expected):
    assert interpolate_2tap(a, b, w) == expected


@given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 32))
def test_interpolate_symmetry(a, b, w):
    assert interpolate_2tap(a, b, w) == interpolate_2tap(b, a, 32 - w)
    assert min(a, b) <= interpolate_2tap(a, b, w) <= max(a, b)


# ---------------------------------------------------------------------------
# neighbour configurations


@pytest.mark.parametrize("mode, group", [
    (0, 1), (1, 1), (2, 0), (9, 0), (10, 1), (18, 1), (19, 2), (26, 2), (27, 3), (34, 3)])
def test_group_boundaries(mode, group):
    assert mode_group(mode) == group


def test_four_configs():
    cfgs = {neighbor_config(m) for m in range(35)}
    assert len(cfgs) == 4
    assert len({c.taps for c in cfgs}) == 4


def test_config_examples():
    assert neighbor_config(0).taps == ((-1, 0), (-1, -1), (0, -1))
    assert neighbor_config(0).scan is Scan.ROW_MAJOR
    assert neighbor_config(5).scan is Scan.COLUMN_MAJOR
    assert (-1, 1) in neighbor_config(5).taps
    assert all(dy == -1 for _, dy in neighbor_config(30).taps)
    assert set(neighbor_config(22).taps) == {(-1, -1), (0, -1), (1, -1)}


@pytest.mark.parametrize("mode", range(35))
@pytest.mark.parametrize("size", [4, 8, 16])
def test_taps_inside_pu_are_earlier_in_scan(mode, size):
    cfg = neighbor_config(mode)
    pu = PU.square(0, 0, size)
    index = {p: i for i, p in enumerate(scan_positions(pu, cfg.scan))}
    for (x, y), i in index.items():
        for dx, dy in cfg.taps:
            j = index.get((x + dx, y + dy))
            assert j is None or j < i


@pytest.mark.parametrize("mode", range(2, 35))
def test_sap_scan(mode):
    expected = Scan.COLUMN_MAJOR if mode <= 17 else Scan.ROW_MAJOR
    assert sap_scan(mode) is expected


# ---------------------------------------------------------------------------
# single-pixel predictors


def test_3tap_examples():
    c = Canvas(np.array([[100, 100], [100, 0]]), np.array([[1, 1], [1, 0]], dtype=bool))
    cfg = neighbor_config(0)
    assert predict_pixel_3tap(c, 1, 1, cfg, WeightSet(21, 21, 22)) == 100
    c = Canvas(np.array([[20, 0], [10, 0]]), np.array([[1, 1], [1, 0]], dtype=bool))
    # a = left = 10, b = above-left = 20
    assert predict_pixel_3tap(c, 1, 1, cfg, WeightSet(32, 32, 0)) == 15


def test_3tap_clips():
    c = Canvas(np.array([[0, 255], [255, 0]]), np.array([[1, 1], [1, 0]], dtype=bool))
    cfg = neighbor_config(0)
    assert predict_pixel_3tap(c, 1, 1, cfg, WeightSet(128, -128, 64)) == 255
    assert predict_pixel_3tap(c, 1, 1, cfg, WeightSet(-128, 192, 0)) == 0


@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 34))
def test_3tap_unit_weights(seed, mode):
    rng = np.random.default_rng(seed)
    canvas = random_canvas(rng, 8, 8)
    cfg = neighbor_config(mode)
    x, y = rng.integers(0, 8, 2)
    for w, (dx, dy) in zip(UNIT, cfg.taps):
        assert predict_pixel_3tap(canvas, x, y, cfg, w) == canvas.tap(x, y, dx, dy)


def test_sap_examples():
    rng = np.random.default_rng(3)
    canvas = Canvas(rng.integers(0, 256, (8, 8)), np.ones((8, 8), dtype=bool))
    s = canvas.samples
    assert predict_pixel_sap(canvas, 3, 4, 26) == s[3, 3]
    assert predict_pixel_sap(canvas, 3, 4, 10) == s[4, 2]
    assert predict_pixel_sap(canvas, 3, 4, 34) == s[3, 4]
    assert predict_pixel_sap(canvas, 3, 4, 2) == s[5, 2]
    # mode 30: angle 13 onto row y-1 between x and x+1 with w = 13
    assert predict_pixel_sap(canvas, 3, 4, 30) == interpolate_2tap(s[3, 3], s[3, 4], 13)


def test_sap_rejects_nonangular():
    with pytest.raises(ValueError):
        predict_pixel_sap(Canvas.empty(4, 4), 1, 1, 0)


def test_padding_rule():
    samples = np.arange(16).reshape(4, 4)
    avail = np.zeros((4, 4), dtype=bool)
    c = Canvas(samples, avail)
    assert c.tap(0, 0, -1, 0) == MISSING_SAMPLE
    avail[0, :] = True
    c = Canvas(samples, avail)
    # (2, 1) asks for its below-left (1, 2): nearest available fallback is (1, 0)
    assert c.tap(2, 1, -1, 1) == samples[0, 1]
    # a left tap at the frame edge falls back to the pixel above
    assert c.tap(0, 1, -1, 0) == samples[0, 0]


# ---------------------------------------------------------------------------
# block prediction


def test_reference_nothing_available():
    assert reference_samples(Canvas.empty(8, 8), PU.square(0, 0, 4)).tolist() == [128] * 17


def test_reference_left_replicates_corner():
    samples = np.arange(64).reshape(8, 8)
    avail = np.zeros((8, 8), dtype=bool)
    avail[3, :] = True
    ref = reference_samples(Canvas(samples, avail), PU.square(4, 4, 4))
    assert ref[:8].tolist() == [samples[3, 3]] * 8
    assert ref[8] == samples[3, 3]


def test_reference_exact_copies():
    rng = np.random.default_rng(0)
    samples = rng.integers(0, 256, (16, 16))
    ref = reference_samples(Canvas(samples, np.ones((16, 16), dtype=bool)),
                            PU.square(4, 4, 4))
    assert ref[8] == samples[3, 3]
    assert ref[9:].tolist() == samples[3, 4:12].tolist()
    assert ref[:8][::-1].tolist() == samples[4:12, 3].tolist()


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([4, 8, 16]), st.floats(0, 1))
def test_reference_matches_oracle(seed, size, p):
    rng = np.random.default_rng(seed)
    canvas = random_canvas(rng, 40, 40, p)
    x, y = rng.integers(0, 40 - size, 2)
    pu = PU.square(int(x), int(y), size)
    assert reference_samples(canvas, pu).tolist() == substitute_oracle(canvas, pu)


@pytest.mark.parametrize("size", [4, 8, 16, 32])
@pytest.mark.parametrize("mode", range(35))
def test_block_matches_oracle(size, mode):
    rng = np.random.default_rng(size * 100 + mode)
    canvas = random_canvas(rng, 3 * size, 3 * size, 0.8)
    pu = PU.square(size, size, size)
    line = substitute_oracle(canvas, pu)
    np.testing.assert_array_equal(predict_block_hevc(canvas, pu, mode),
                                  hevc_block_oracle(line, size, mode))


def test_block_copy_modes():
    rng = np.random.default_rng(1)
    canvas = Canvas(rng.integers(0, 256, (16, 16)), np.ones((16, 16), dtype=bool))
    pu = PU.square(4, 4, 8)
    s = canvas.samples
    vert = predict_block_hevc(canvas, pu, 26)
    horiz = predict_block_hevc(canvas, pu, 10)
    assert all((vert[:, i] == s[3, 4 + i]).all() for i in range(8))
    assert all((horiz[i, :] == s[4 + i, 3]).all() for i in range(8))
    assert (predict_block_hevc(Canvas.empty(8, 8), PU.square(0, 0, 8), 1) == 128).all()


def test_block_clipped_pu():
    rng = np.random.default_rng(2)
    canvas = Canvas(rng.integers(0, 256, (10, 10)), np.ones((10, 10), dtype=bool))
    full = predict_block_hevc(canvas, PU.square(4, 4, 8), 18)
    assert (predict_block_hevc(canvas, PU(4, 4, 8, 6, 5), 18) == full[:5, :6]).all()


# ---------------------------------------------------------------------------
# closed-loop PU prediction


pu_cases = st.tuples(
    st.integers(0, 2 ** 32 - 1), st.sampled_from([4, 8, 16]), st.integers(0, 34),
    st.sampled_from([SAP, THREE_TAP]), st.floats(0, 1))


@given(pu_cases)
def test_kernel_matches_reference(case):
    seed, size, mode, method, p = case
    if method == SAP and mode < 2:
        mode += 2
    rng = np.random.default_rng(seed)
    w, h = 2 * size + 3, 2 * size + 2
    canvas = random_canvas(rng, w, h, p)
    original = Plane.from_array(rng.integers(0, 256, (h, w)))
    x, y = int(rng.integers(0, w - size + 1)), int(rng.integers(0, h - size + 1))
    pw, ph = min(size, w - x), min(size, h - y)
    pu = PU(x, y, size, pw, ph)
    r1, r2 = rng.integers(-40, 80, 2)
    ws = WeightSet(int(r1), int(r2), int(64 - r1 - r2))
    fast = predict_pu_pixelwise(canvas, original, pu, mode, ws, method)
    slow = predict_pu_pixelwise_reference(canvas, original, pu, mode, ws, method)
    np.testing.assert_array_equal(fast[0], slow[0])
    np.testing.assert_array_equal(fast[1], slow[1])


@given(pu_cases)
def test_causality_simulator(case):
    """Predictions never depend on pixels not yet reconstructed."""
    seed, size, mode, method, p = case
    rng = np.random.default_rng(seed)
    w = h = 2 * size + 2
    avail = rng.random((h, w)) < p
    samples = rng.integers(0, 256, (h, w))
    x, y = int(rng.integers(0, w - size + 1)), int(rng.integers(0, h - size + 1))
    pu = PU.square(x, y, size)
    avail[y:y + size, x:x + size] = False
    original = Plane.from_array(rng.integers(0, 256, (h, w)))
    base = predict_pu_pixelwise(Canvas(samples, avail), original, pu, mode, UNIT[0], method)

    poisoned = np.where(avail, samples, rng.integers(0, 256, (h, w)))
    again = predict_pu_pixelwise(Canvas(poisoned, avail), original, pu, mode, UNIT[0], method)
    np.testing.assert_array_equal(base[0], again[0])

    # changing an original pixel only affects predictions later in scan order
    order = scan_positions(pu, pixelwise_scan(mode, method))
    k = int(rng.integers(0, len(order)))
    px, py = order[k]
    arr = original.samples.copy()
    arr[py, px] ^= 0x55
    changed = predict_pu_pixelwise(Canvas(samples, avail), Plane.from_array(arr), pu, mode,
                                   UNIT[0], method)
    if method == SAP and mode < 2:
        np.testing.assert_array_equal(base[0], changed[0])
    else:
        for qx, qy in order[:k + 1]:
            assert base[0][qy - y, qx - x] == changed[0][qy - y, qx - x]


@pytest.mark.parametrize("mode", range(35))
@pytest.mark.parametrize("method", [SAP, THREE_TAP])
def test_constant_image(mode, method):
    original = Plane.from_array(np.full((4, 4), 77))
    pred, resid = predict_pu_pixelwise(Canvas.empty(4, 4), original, PU.square(0, 0, 4),
                                       mode, WeightSet(22, 21, 21), method)
    if method == SAP and mode < 2:
        assert (resid == 77 - 128).all()
        return
    assert resid[0, 0] == 77 - 128
    flat = resid.ravel().tolist()
    assert flat.count(0) == 15


@pytest.mark.parametrize("seed", range(5))
def test_copy_modes_agree(seed):
    rng = np.random.default_rng(seed)
    canvas = random_canvas(rng, 12, 12, 1.0)
    original = Plane.from_array(rng.integers(0, 256, (12, 12)))
    pu = PU.square(4, 4, 8)
    tap = predict_pu_pixelwise(canvas, original, pu, 10, WeightSet(64, 0, 0), THREE_TAP)
    sap = predict_pu_pixelwise(canvas, original, pu, 10, None, SAP)
    np.testing.assert_array_equal(tap[0], sap[0])
    # SAP copy modes against a per-pixel oracle
    s = canvas.samples.astype(int).copy()
    s[4:12, 4:12] = original.samples[4:12, 4:12]
    np.testing.assert_array_equal(sap[0], s[4:12, 3:11])
    vert = predict_pu_pixelwise(canvas, original, pu, 26, None, SAP)
    np.testing.assert_array_equal(vert[0], s[3:11, 4:12])


@given(pu_cases)
def test_residual_range_and_determinism(case):
    seed, size, mode, method, _ = case
    rng = np.random.default_rng(seed)
    canvas = random_canvas(rng, 20, 20)
    original = Plane.from_array(rng.integers(0, 256, (20, 20)))
    pu = PU.square(2, 2, min(size, 16))
    a = predict_pu_pixelwise(canvas, original, pu, mode, WeightSet(192, -128, 0), method)
    b = predict_pu_pixelwise(canvas, original, pu, mode, WeightSet(192, -128, 0), method)
    assert (np.abs(a[1]) <= 255).all()
    np.testing.assert_array_equal(a[0], b[0])
