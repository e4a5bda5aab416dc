import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from sigvlm.errors import ConfigInvalid, EncodeFailure, SizeMismatch
from sigvlm.render import (
    PairMode,
    RenderConfig,
    RenderedImage,
    compose_pair,
    encode_png,
    ink_value,
    render_signature,
)
from sigvlm.signal_model import InputKind, NormalizedRecord, normalize
from sigvlm.svc_ingest import synth_dataset


def decode(png: bytes) -> np.ndarray:
    im = Image.open(io.BytesIO(png))
    assert im.mode == "L"
    return np.asarray(im)


def stroke(p_values, kind=InputKind.STYLUS, xs=None, ys=None):
    n = len(p_values)
    xs = np.linspace(0, 1, n) if xs is None else np.asarray(xs, float)
    ys = np.linspace(0, 0.6, n) ** 2 if ys is None else np.asarray(ys, float)
    return NormalizedRecord(xs, ys, np.arange(n) * 10.0, np.asarray(p_values, float),
                            [(0, n - 1)], kind, "stroke")


def ink(img):
    return img.pixels[img.pixels < 255]


def test_finger_is_binary():
    rec = synth_dataset(3, 2, 2, 1, kinds=[InputKind.FINGER]).records["finger/u000_g00.txt"]
    img = render_signature(normalize(rec))
    assert set(np.unique(img.pixels).tolist()) <= {0, 255}
    assert (img.pixels == 0).any()


def test_full_pressure_is_black():
    img = render_signature(stroke([1.0] * 5))
    assert set(ink(img).tolist()) == {0}


def test_zero_pressure_uses_floor():
    img = render_signature(stroke([0.0] * 5))
    assert set(ink(img).tolist()) == {191}
    assert ink_value(0.0, 0.25) == 191


def test_ink_value_endpoints():
    assert ink_value(1.0, 0.25) == 0
    assert ink_value(0.5, 0.0) == 128  # 127.5 rounds half up
    assert ink_value(0.0, 1.0) == 0


def test_overlap_keeps_darker():
    xs = [0, 1, 0, 1]
    ys = [0, 1, 1, 0]
    rec = NormalizedRecord(np.array(xs, float), np.array(ys, float), np.arange(4.0),
                           np.array([1.0, 1.0, 0.0, 0.0]), [(0, 1), (2, 3)], InputKind.STYLUS)
    img = render_signature(rec, cfg=RenderConfig(canvas_px=64, stroke_width_px=1))
    centre = img.pixels[28:36, 28:36]
    assert centre.min() == 0  # black diagonal wins at the crossing
    assert set(ink(img).tolist()) == {0, 191}


@pytest.mark.parametrize("bad", [
    dict(canvas_px=16), dict(margin_fraction=0.5), dict(stroke_width_px=0),
    dict(ink_floor=1.5), dict(background_value=0),
])
def test_config_invalid(bad):
    with pytest.raises(ConfigInvalid):
        render_signature(stroke([1, 1]), cfg=RenderConfig(**bad))


def test_coverage_and_margin():
    cfg = RenderConfig(canvas_px=100, margin_fraction=0.1, stroke_width_px=3)
    rec = synth_dataset(8, 2, 2, 1).records["stylus/u001_g01.txt"]
    norm = normalize(rec)
    img = render_signature(norm, cfg=cfg)
    rows, cols = np.nonzero(img.pixels < 255)
    assert rows.min() >= 10 and cols.min() >= 10
    assert rows.max() <= 89 and cols.max() <= 89


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=12),
       st.integers(1, 4))
def test_every_pen_down_sample_is_inked(points, width):
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    n = len(points)
    rec = NormalizedRecord(xs, ys, np.arange(n) * 10.0, np.ones(n), [(0, n - 1)], InputKind.STYLUS)
    cfg = RenderConfig(canvas_px=64, stroke_width_px=width)
    img = render_signature(rec, cfg=cfg)
    # recompute each sample's pixel independently of the renderer
    margin = int(np.ceil(0.05 * 64))
    lo, hi = margin + (width - 1) // 2, 63 - margin - width // 2
    cx = xs + ((1 - (xs.max() + xs.min())) / 2 if xs.max() - xs.min() < 1 else 0)
    cy = ys + ((1 - (ys.max() + ys.min())) / 2 if ys.max() - ys.min() < 1 else 0)
    for x, y in zip(cx, cy):
        c = int(np.floor(lo + x * (hi - lo) + 0.5))
        r = int(np.floor(lo + y * (hi - lo) + 0.5))
        assert img.pixels[r, c] < 255


def test_pressure_monotonicity_seeded():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        n = int(rng.integers(2, 12))
        xs, ys = rng.random(n), rng.random(n)
        pb = rng.random(n)
        pa = np.minimum(1.0, pb + rng.random(n) * 0.5 + 1e-3)
        img_a = render_signature(stroke(pa, xs=xs, ys=ys))
        img_b = render_signature(stroke(pb, xs=xs, ys=ys))
        mask_a, mask_b = img_a.pixels < 255, img_b.pixels < 255
        assert np.array_equal(mask_a, mask_b)
        assert (img_a.pixels[mask_a] <= img_b.pixels[mask_b]).all()


def test_antialias_stays_in_range_and_deterministic():
    cfg = RenderConfig(canvas_px=64, antialias=True)
    a = render_signature(stroke([0.3, 0.9, 0.5]), cfg=cfg)
    b = render_signature(stroke([0.3, 0.9, 0.5]), cfg=cfg)
    assert a == b and a.pixels.shape == (64, 64)
    assert len(np.unique(a.pixels)) > 2


# --- PNG --------------------------------------------------------------------

def test_png_blank_round_trip():
    img = RenderedImage(np.full((32, 32), 255, np.uint8))
    png = encode_png(img)
    assert (decode(png) == 255).all()
    assert encode_png(img) == png


def test_png_round_trip_signature():
    rec = synth_dataset(42, 2, 2, 1).records["stylus/u000_g00.txt"]
    img = render_signature(normalize(rec))
    assert np.array_equal(decode(encode_png(img)), img.pixels)


def test_png_non_square_round_trip():
    px = (np.arange(7 * 13) % 256).astype(np.uint8).reshape(7, 13)
    assert np.array_equal(decode(encode_png(RenderedImage(px))), px)


def test_png_rejects_bad_buffer():
    with pytest.raises(EncodeFailure):
        encode_png(RenderedImage(np.zeros((4, 4), np.float32)))
    with pytest.raises(EncodeFailure):
        encode_png(RenderedImage(np.zeros((4, 4, 3), np.uint8)))


# --- pairs ------------------------------------------------------------------

def test_two_attachments_identity():
    a = render_signature(stroke([1, 1]), cfg=RenderConfig(canvas_px=64))
    b = render_signature(stroke([0, 0]), cfg=RenderConfig(canvas_px=64))
    out = compose_pair(a, b)
    assert len(out) == 2 and out[0] is a and out[1] is b


def test_side_by_side_layout():
    a = render_signature(stroke([1, 1]))
    b = render_signature(stroke([0, 0]))
    (joined,) = compose_pair(a, b, PairMode.SIDE_BY_SIDE)
    assert (joined.width, joined.height) == (1028, 512)
    assert (joined.pixels[:, 512:516] == 255).all()
    assert np.array_equal(joined.pixels[:, :512], a.pixels)
    assert np.array_equal(joined.pixels[:, 516:], b.pixels)


def test_side_by_side_size_mismatch():
    a = render_signature(stroke([1, 1]), cfg=RenderConfig(canvas_px=64))
    b = render_signature(stroke([1, 1]), cfg=RenderConfig(canvas_px=128))
    with pytest.raises(SizeMismatch):
        compose_pair(a, b, PairMode.SIDE_BY_SIDE)
