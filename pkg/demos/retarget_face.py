#!/usr/bin/env python3
# Expression retargeting: 100-dim face coefficients -> 52 named blendshapes.
#
# The bridge is a single matrix (the "GL" table) built from a hand-written
# mapping file. Two build modes exist: "difference" splits each input axis
# into +/- halves, "positive_only" keeps negative activations at zero.

import numpy as np

from relisten.arkit import ARKIT_BLENDSHAPE_NAMES
from relisten.cli import default_mapping_path
from relisten.features import synth_flame
from relisten.mapper import GLMode, build_gl, flame_to_arkit, parse_mapping_table

np.set_printoptions(precision=3, suppress=True)

mapping = parse_mapping_table(default_mapping_path())
print(f"mapping covers input indices 0..{mapping.max_index()}")

gl_diff = build_gl(mapping, GLMode.DIFFERENCE, expr_dim=100)
gl_pos = build_gl(mapping, GLMode.POSITIVE_ONLY, expr_dim=100)
print("gl matrix shape:", gl_diff.values.shape, "mode:", gl_diff.mode.value)
print()

# one second of synthetic face motion, 30 fps
flame = synth_flame(1.0, fps=30, seed=7, expr_dim=100)
expr = np.stack([f.expr for f in flame.frames])

weights = flame_to_arkit(expr, gl_diff)
assert weights.shape == (30, 52)
assert weights.min() >= 0.0 and weights.max() <= 1.0

# strongest channels in the middle frame
mid = weights[15]
order = np.argsort(mid)[::-1]
print("top blendshapes, frame 15 (difference mode):")
for k in order[:6]:
    bar = "#" * int(mid[k] * 40)
    print(f"  {ARKIT_BLENDSHAPE_NAMES[k]:28s} {mid[k]:.3f} {bar}")

print()
weights_pos = flame_to_arkit(expr, gl_pos)
moved = np.abs(weights - weights_pos).max(axis=0)
print("channels where the two modes disagree most:")
for k in np.argsort(moved)[::-1][:4]:
    print(f"  {ARKIT_BLENDSHAPE_NAMES[k]:28s} delta {moved[k]:.3f}")

# negative activations are the whole story: positive_only discards them,
# difference routes them to the paired "-" row of the mapping
print()
probe = np.zeros((1, 100))
probe[0, 0] = -1.0
print("probe expr[0] = -1.0:")
print("  difference   :", flame_to_arkit(probe, gl_diff)[0].max())
print("  positive_only:", flame_to_arkit(probe, gl_pos)[0].max())
