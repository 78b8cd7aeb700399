"""Procedural cargo-hold scene renderer.

Generates square rear-view scenes of a truck cargo hold: a dark structural
frame, textured wall and floor, and stacked cardboard boxes.  Three looks:

  SAFE      boxes flush against the left wall and each other, upright,
            with visible strap lines over the cargo
  UNSAFE    no straps, plus at least one of: an inter-box gap wider than
            15% of the hold, a box tilted more than 8 degrees, or a
            toppled (on-its-side) box
  UNUSABLE  a safe or unsafe scene degraded by heavy blur, extreme
            darkness, or a crop that shifts much of the hold out of view

Every draw comes from a generator keyed by (seed, class, index), so a
scene is a pure function of those three values.  The returned metadata
records box geometry and the applied degradation so tests can assert the
class cues without looking at pixels.
"""

from __future__ import annotations

import numpy as np

from .imaging import Image

MIN_SIZE = 64

GAP_FRACTION_THRESHOLD = 0.15
TILT_DEGREES_THRESHOLD = 8.0
BLUR_SIGMA_THRESHOLD = 4.0
DARK_FACTOR_THRESHOLD = 0.15
CROP_SHIFT_THRESHOLD = 0.40

_CLASS_CODES = {"SAFE": 0, "UNSAFE": 1, "UNUSABLE": 2}


def _scene_rng(label, seed, index):
    code = _CLASS_CODES[label]
    return np.random.Generator(np.random.Philox(key=[seed, (code << 48) | index]))


def _fill(canvas, x0, y0, x1, y1, color):
    h, w = canvas.shape[:2]
    x0, x1 = max(0, int(x0)), min(w, int(x1))
    y0, y1 = max(0, int(y0)), min(h, int(y1))
    if x0 < x1 and y0 < y1:
        canvas[y0:y1, x0:x1] = color


def _draw_box(canvas, box):
    """Rasterize one (possibly tilted) box with a darker border and lid line."""
    cx = box["x"] + box["w"] / 2.0
    cy = box["y"] + box["h"] / 2.0
    hw, hh = box["w"] / 2.0, box["h"] / 2.0
    color = np.asarray(box["color"], dtype=np.float32)
    theta = np.deg2rad(box["tilt_deg"])
    cos_t, sin_t = np.cos(theta), np.sin(theta)

    size = canvas.shape[0]
    reach = int(np.ceil(max(hw, hh) * 1.5)) + 2
    y0, y1 = max(0, int(cy) - reach), min(size, int(cy) + reach)
    x0, x1 = max(0, int(cx) - reach), min(size, int(cx) + reach)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    dx = xs - cx
    dy = ys - cy
    u = cos_t * dx + sin_t * dy
    v = -sin_t * dx + cos_t * dy
    inside = (np.abs(u) <= hw) & (np.abs(v) <= hh)
    border = inside & ((np.abs(u) > hw - 1.5) | (np.abs(v) > hh - 1.5))
    lid = inside & (np.abs(v - (-hh + box["h"] * 0.25)) < 0.8)

    region = canvas[y0:y1, x0:x1]
    region[inside] = color
    region[lid] = color * 0.72
    region[border] = color * 0.5


def _draw_straps(canvas, rng, boxes, frame, size):
    xs_min = min(b["x"] for b in boxes)
    xs_max = max(b["x"] + b["w"] for b in boxes)
    top = min(b["y"] for b in boxes)
    bottom = max(b["y"] + b["h"] for b in boxes)
    n = int(rng.integers(2, 4))
    width = max(1, size // 64)
    span = xs_max - xs_min
    for i in range(n):
        x = int(xs_min + span * (i + 1) / (n + 1))
        y0 = max(frame, int(top - 2))
        canvas[y0:int(bottom), x:x + width] *= 0.35


def _layout_boxes(rng, interior, unsafe_cue=None):
    """Place a bottom row of boxes (plus an optional stacked one).

    SAFE layouts pack flush from the left wall.  An unsafe_cue of 'gap',
    'tilt', or 'toppled' perturbs the layout accordingly; geometry lands
    in the returned metadata.
    """
    ix0, iy0, ix1, iy1 = interior
    iw = ix1 - ix0
    ih = iy1 - iy0
    bottom = iy1 - max(2, ih // 10)

    n = 2 if unsafe_cue == "gap" else int(rng.integers(2, 5))
    widths = rng.uniform(0.16, 0.26, n) * iw
    heights = rng.uniform(0.30, 0.48, n) * ih
    gap_after = int(rng.integers(0, n - 1)) if unsafe_cue == "gap" else -1
    gap = rng.uniform(0.18, 0.30) * iw if unsafe_cue == "gap" else 0.0

    boxes = []
    x = float(ix0 + 1)
    for i in range(n):
        w, h = float(widths[i]), float(heights[i])
        if x + w > ix1 - 1:
            break
        shade = rng.uniform(0.75, 1.1)
        jitter = rng.uniform(-0.04, 0.04, 3)
        color = np.clip(np.array([0.66, 0.52, 0.34]) * shade + jitter, 0.05, 1.0)
        boxes.append({
            "x": x, "y": bottom - h, "w": w, "h": h,
            "tilt_deg": 0.0, "toppled": False,
            "color": [round(float(c), 4) for c in color],
        })
        x += w
        if i == gap_after:
            x += gap

    if unsafe_cue == "tilt":
        victim = boxes[int(rng.integers(0, len(boxes)))]
        angle = float(rng.uniform(10.0, 20.0)) * (1 if rng.random() < 0.5 else -1)
        victim["tilt_deg"] = angle
    elif unsafe_cue == "toppled":
        victim = boxes[int(rng.integers(0, len(boxes)))]
        w, h = victim["w"], victim["h"]
        victim["w"], victim["h"] = h, w
        victim["y"] = bottom - w
        victim["tilt_deg"] = float(rng.uniform(-6.0, 6.0))
        victim["toppled"] = True
        if victim["x"] + victim["w"] > ix1 - 1:
            victim["x"] = float(ix1 - 1 - victim["w"])
    elif rng.random() < 0.5 and boxes:
        # safe scenes sometimes stack a second, smaller box on the first
        base = boxes[0]
        w = base["w"] * float(rng.uniform(0.6, 0.9))
        h = float(rng.uniform(0.2, 0.35)) * ih
        shade = rng.uniform(0.75, 1.1)
        color = np.clip(np.array([0.66, 0.52, 0.34]) * shade, 0.05, 1.0)
        boxes.append({
            "x": base["x"] + (base["w"] - w) / 2.0, "y": base["y"] - h,
            "w": w, "h": h, "tilt_deg": 0.0, "toppled": False,
            "color": [round(float(c), 4) for c in color],
        })

    return boxes, gap / iw if unsafe_cue == "gap" else 0.0


def _render_hold(rng, size, unsafe_cue):
    canvas = np.zeros((size, size, 3), dtype=np.float32)

    frame = max(3, size // 16)
    frame_shade = float(rng.uniform(0.07, 0.13))
    canvas[:] = frame_shade

    ix0 = iy0 = frame
    ix1 = iy1 = size - frame
    interior = (ix0, iy0, ix1, iy1)
    ih = iy1 - iy0

    # wall with faint horizontal streaks
    wall_shade = float(rng.uniform(0.5, 0.62))
    rows = rng.uniform(-0.035, 0.035, ih).astype(np.float32)
    canvas[iy0:iy1, ix0:ix1] = (wall_shade + rows[:, None])[:, :, None]

    # floor planks
    floor_h = max(4, int(0.22 * ih))
    floor_color = np.array([0.37, 0.28, 0.19], dtype=np.float32) * float(rng.uniform(0.85, 1.1))
    _fill(canvas, ix0, iy1 - floor_h, ix1, iy1, floor_color)
    plank = max(4, size // 12)
    for x in range(ix0 + plank, ix1, plank):
        canvas[iy1 - floor_h:iy1, x:x + 1] *= 0.8

    boxes, gap_frac = _layout_boxes(rng, interior, unsafe_cue)
    for box in boxes:
        _draw_box(canvas, box)

    straps = unsafe_cue is None
    if straps:
        _draw_straps(canvas, rng, boxes, frame, size)

    np.clip(canvas, 0.0, 1.0, out=canvas)
    meta_boxes = [
        {k: (round(v, 3) if isinstance(v, float) else v) for k, v in b.items()}
        for b in boxes
    ]
    return canvas, {
        "boxes": meta_boxes,
        "straps": straps,
        "cues": {
            "max_gap_frac": round(gap_frac, 4),
            "max_tilt_deg": round(max(abs(b["tilt_deg"]) for b in boxes), 2),
            "toppled": any(b["toppled"] for b in boxes),
        },
    }


def gaussian_blur(pixels: np.ndarray, sigma: float) -> np.ndarray:
    """Separable gaussian with edge-replicated borders."""
    radius = max(1, int(np.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (xs / sigma) ** 2)
    kernel = (kernel / kernel.sum()).astype(np.float32)

    def convolve(axis, arr):
        padded = np.pad(arr, [(radius, radius) if a == axis else (0, 0)
                              for a in range(arr.ndim)], mode="edge")
        windows = np.lib.stride_tricks.sliding_window_view(
            padded, kernel.size, axis=axis)
        return np.tensordot(windows, kernel, axes=([-1], [0])).astype(np.float32)

    return convolve(1, convolve(0, pixels))


def _degrade(rng, pixels):
    kind = ("blur", "dark", "crop")[int(rng.integers(0, 3))]
    size = pixels.shape[0]
    if kind == "blur":
        sigma = float(rng.uniform(BLUR_SIGMA_THRESHOLD, 6.0))
        return gaussian_blur(pixels, sigma), {"kind": "blur", "sigma": round(sigma, 3)}
    if kind == "dark":
        factor = float(rng.uniform(0.03, 0.12))
        return np.clip(pixels * np.float32(factor), 0, 1), {
            "kind": "dark", "factor": round(factor, 4)}
    shift_frac = float(rng.uniform(CROP_SHIFT_THRESHOLD, 0.6))
    d = int(shift_frac * size)
    direction = ("left", "right", "up", "down")[int(rng.integers(0, 4))]
    if direction == "left":
        out = np.concatenate([pixels[:, d:], np.repeat(pixels[:, -1:], d, axis=1)], axis=1)
    elif direction == "right":
        out = np.concatenate([np.repeat(pixels[:, :1], d, axis=1), pixels[:, :-d]], axis=1)
    elif direction == "up":
        out = np.concatenate([pixels[d:], np.repeat(pixels[-1:], d, axis=0)], axis=0)
    else:
        out = np.concatenate([np.repeat(pixels[:1], d, axis=0), pixels[:-d]], axis=0)
    return out, {"kind": "crop", "shift_frac": round(shift_frac, 4),
                 "direction": direction}


def render_scene(label: str, seed: int, index: int, size: int = 128):
    """Render one scene; returns (Image, metadata dict).

    Deterministic per (label, seed, index, size).
    """
    if label not in _CLASS_CODES:
        raise ValueError(f"unknown class {label!r}")
    if size < MIN_SIZE:
        raise ValueError(
            f"size {size} too small to render the hold frame (minimum {MIN_SIZE})"
        )
    rng = _scene_rng(label, seed, index)

    if label == "SAFE":
        pixels, meta = _render_hold(rng, size, unsafe_cue=None)
        degradation = None
        base_label = "SAFE"
    elif label == "UNSAFE":
        cue = ("gap", "tilt", "toppled")[int(rng.integers(0, 3))]
        pixels, meta = _render_hold(rng, size, unsafe_cue=cue)
        degradation = None
        base_label = "UNSAFE"
    else:
        base_label = "SAFE" if rng.random() < 0.5 else "UNSAFE"
        cue = None
        if base_label == "UNSAFE":
            cue = ("gap", "tilt", "toppled")[int(rng.integers(0, 3))]
        pixels, meta = _render_hold(rng, size, unsafe_cue=cue)
        pixels, degradation = _degrade(rng, pixels)

    meta.update({
        "label": label,
        "base_label": base_label,
        "size": size,
        "degradation": degradation,
    })
    return Image(pixels), meta
