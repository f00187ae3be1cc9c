"""Synthetic leaf corpus: dark elliptical leaves on a near-white belt with
class-distinguishing lesion patterns.

Class pairs are deliberately matched in total lesion area (few large spots
vs many small ones, rings vs speckle) so coarse statistics confuse them
while local shape remains decisive. Every image derives from its own child
stream keyed by (class, index), so generation order never matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .imaging import BoundingBox, Raster, write_raster
from .manifest import ClassEntry, DatasetManifest
from .rng import Rng


@dataclass
class ClassPattern:
    """Lesion recipe for one synthetic class."""

    name: str
    spots: int = 0  # filled discs
    spot_radius: float = 0.0
    rings: int = 0  # annuli (dark rim, leaf-toned center)
    ring_radius: float = 0.0
    stripes: int = 0  # bars across the minor axis
    stripe_width: float = 0.0
    blobs: int = 0  # overlapping-disc blotches
    blob_radius: float = 0.0
    speckles: int = 0  # tiny dots
    speckle_radius: float = 0.0


DEFAULT_PATTERNS = (
    ClassPattern("healthy"),
    ClassPattern("large_spot", spots=2, spot_radius=11.0),
    ClassPattern("small_spot", spots=8, spot_radius=5.5),
    ClassPattern("ring_spot", rings=3, ring_radius=9.0),
    ClassPattern("stripe", stripes=4, stripe_width=4.0),
    ClassPattern("blotch", blobs=1, blob_radius=13.0),
    ClassPattern("speckle", speckles=30, speckle_radius=2.0),
)

BELT_LEVEL = 246.0
LEAF_LEVEL = 95.0
LESION_LEVEL = 45.0


def _u(rng: Rng, lo: float, hi: float, n: int = 1):
    v = lo + (hi - lo) * rng.uniform(n)
    return float(v[0]) if n == 1 else v


def make_leaf_image(
    rng: Rng,
    pattern: ClassPattern,
    height: int = 188,
    width: int = 188,
) -> tuple[Raster, BoundingBox]:
    """One leaf image plus the exact bounding box of its foreground mask."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cy = height / 2 + _u(rng, -0.025, 0.025) * height
    cx = width / 2 + _u(rng, -0.025, 0.025) * width
    scale = min(height, width)
    a = _u(rng, 0.34, 0.40) * scale
    b = a * _u(rng, 0.65, 0.80)
    theta = _u(rng, 0.0, math.pi)
    ct, st = math.cos(theta), math.sin(theta)
    u = (xx - cx) * ct + (yy - cy) * st
    v = -(xx - cx) * st + (yy - cy) * ct
    leaf = (u / a) ** 2 + (v / b) ** 2 <= 1.0

    plane = np.full((height, width), BELT_LEVEL)
    leaf_tone = LEAF_LEVEL + _u(rng, -8.0, 8.0)
    plane[leaf] = leaf_tone

    def ellipse_point(margin: float) -> tuple[float, float]:
        rho = math.sqrt(_u(rng, 0.0, 1.0)) * margin
        phi = _u(rng, 0.0, 2 * math.pi)
        du, dv = a * rho * math.cos(phi), b * rho * math.sin(phi)
        return cx + du * ct - dv * st, cy + du * st + dv * ct

    def paint_disc(px, py, r, tone):
        d2 = (xx - px) ** 2 + (yy - py) ** 2
        plane[(d2 <= r * r) & leaf] = tone

    def lesion_tone() -> float:
        return LESION_LEVEL + _u(rng, -8.0, 8.0)

    for _ in range(pattern.spots):
        px, py = ellipse_point(0.72)
        r = pattern.spot_radius * _u(rng, 0.85, 1.15)
        paint_disc(px, py, r, lesion_tone())
    for _ in range(pattern.rings):
        px, py = ellipse_point(0.68)
        r = pattern.ring_radius * _u(rng, 0.85, 1.15)
        tone = lesion_tone()
        paint_disc(px, py, r, tone)
        paint_disc(px, py, r * 0.55, leaf_tone)
    for i in range(pattern.stripes):
        offset = _u(rng, -0.75, 0.75) * b
        half = pattern.stripe_width * _u(rng, 0.8, 1.2) / 2
        band = (np.abs(v - offset) <= half) & leaf
        plane[band] = lesion_tone()
    for _ in range(pattern.blobs):
        px, py = ellipse_point(0.55)
        tone = lesion_tone()
        for _ in range(4):
            r = pattern.blob_radius * _u(rng, 0.6, 1.0)
            jx, jy = _u(rng, -6, 6), _u(rng, -6, 6)
            paint_disc(px + jx, py + jy, r, tone)
    for _ in range(pattern.speckles):
        px, py = ellipse_point(0.8)
        r = pattern.speckle_radius * _u(rng, 0.7, 1.3)
        paint_disc(px, py, r, lesion_tone())

    noise = (rng.uniform(height * width).reshape(height, width) - 0.5) * 10.0
    img = np.clip(np.floor(plane + noise + 0.5), 0, 255).astype(np.uint8)

    rows = np.nonzero(leaf.any(axis=1))[0]
    cols = np.nonzero(leaf.any(axis=0))[0]
    box = BoundingBox(x0=int(cols[0]), y0=int(rows[0]), x1=int(cols[-1]), y1=int(rows[-1]))
    return img, box


def blank_frame(height: int = 188, width: int = 188, level: int = 255) -> Raster:
    """An empty belt frame (uniform background, no target)."""
    return np.full((height, width), level, dtype=np.uint8)


def make_synthetic_corpus(
    classes: int,
    per_class: int,
    rng: Rng,
    out_dir: str | Path | None = None,
    height: int = 188,
    width: int = 188,
    patterns: tuple[ClassPattern, ...] = DEFAULT_PATTERNS,
) -> tuple[DatasetManifest, dict[str, Raster], dict[str, BoundingBox]]:
    """Generate the corpus; returns (manifest, images by relpath, truth boxes).

    With ``out_dir`` set, also writes PNGs in per-class directories plus
    ``manifest.json`` and ``truth.json`` (ground-truth boxes).
    """
    if per_class < 2:
        raise ParameterError(f"per_class must be >= 2, got {per_class}")
    if not 2 <= classes <= len(patterns):
        raise ParameterError(f"classes must be in [2, {len(patterns)}], got {classes}")
    images: dict[str, Raster] = {}
    boxes: dict[str, BoundingBox] = {}
    entries = []
    for ci in range(classes):
        pattern = patterns[ci]
        files = []
        for i in range(per_class):
            child = rng.child((ci << 20) | i)
            img, box = make_leaf_image(child, pattern, height, width)
            rel = f"{pattern.name}/{pattern.name}_{i:04d}.png"
            images[rel] = img
            boxes[rel] = box
            files.append(rel)
        entries.append(ClassEntry(name=pattern.name, count=per_class, files=files))
    manifest = DatasetManifest(classes=entries).recompute_proportions()
    if out_dir is not None:
        out_dir = Path(out_dir)
        for rel, img in images.items():
            path = out_dir / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            write_raster(path, img)
        manifest.save(out_dir / "manifest.json")
        truth = {rel: [b.x0, b.y0, b.x1, b.y1] for rel, b in boxes.items()}
        import json

        (out_dir / "truth.json").write_text(json.dumps(truth, indent=1), encoding="utf-8")
    return manifest, images, boxes
