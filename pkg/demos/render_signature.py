"""
Rendering an online signature
=============================

Synthesize a few signatures, normalize them and rasterize them to PNG.
Run from the repository root; images land in demo_out/.
"""

from pathlib import Path

import numpy as np

from sigvlm import RenderConfig, StrokeGapPolicy, encode_png, normalize, render_signature, synth_dataset

out = Path("demo_out")
out.mkdir(exist_ok=True)

# two subjects, stylus and finger capture
ds = synth_dataset(seed=42, n_subjects=2, kinds=("stylus", "finger"))
rec = ds.records["stylus/u000_g00.txt"]
print(len(rec.sample_points), "samples,", rec.input_kind.value)

# unit-square coordinates, pressure in [0, 1], strokes split at 150 ms gaps
norm = normalize(rec, StrokeGapPolicy(max_gap_ms=150))
print("strokes:", norm.strokes)
print("pressure range:", norm.p.min(), norm.p.max())

# stylus ink gets darker with pressure
img = render_signature(norm, rec.input_kind, RenderConfig())
(out / "stylus.png").write_bytes(encode_png(img))
print("gray levels used:", len(np.unique(img.pixels)))

# finger input has no pressure, so ink is plain black
finger = ds.records["finger/u000_g00.txt"]
img = render_signature(normalize(finger, StrokeGapPolicy()), finger.input_kind, RenderConfig())
(out / "finger.png").write_bytes(encode_png(img))
print("finger pixel values:", np.unique(img.pixels))

# thicker strokes and supersampled edges
img = render_signature(norm, rec.input_kind, RenderConfig(stroke_width_px=4, antialias=True))
(out / "stylus_aa.png").write_bytes(encode_png(img))
