"""Dataset expansion: right-angle rotations, vertical flip, salt-and-pepper noise."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestionError, ParameterError
from .imaging import Raster, raster_dims, read_raster, write_raster
from .manifest import AUGMENTED_CLASS_COUNTS, ClassEntry, DatasetManifest
from .rng import Rng

ALLOWED_ANGLES = (90, 180, 270)


@dataclass
class AugmentPlan:
    """Which operators to apply; one output image per enabled operator."""

    rotations: tuple[int, ...] = (90, 180, 270)
    flip: bool = True
    noise: bool = True
    noise_rate: float = 0.05

    def __post_init__(self):
        for a in self.rotations:
            if a not in ALLOWED_ANGLES:
                raise ParameterError(f"rotation angle must be one of {ALLOWED_ANGLES}, got {a}")
        if not 0 <= self.noise_rate < 1:
            raise ParameterError(f"noise rate must be in [0,1), got {self.noise_rate}")

    def operator_count(self) -> int:
        return len(self.rotations) + int(self.flip) + int(self.noise)


def rotate(img: Raster, angle: int) -> Raster:
    """Lossless counterclockwise rotation by 90, 180 or 270 degrees."""
    if angle not in ALLOWED_ANGLES:
        raise ParameterError(f"rotation angle must be one of {ALLOWED_ANGLES}, got {angle}")
    return np.rot90(img, k=angle // 90).copy()


def flip_vertical(img: Raster) -> Raster:
    """Rows reversed (the image turned upside down)."""
    return np.flipud(img).copy()


def salt_pepper(img: Raster, rate: float, rng: Rng) -> Raster:
    """Replace each pixel with probability ``rate`` by pure black or pure
    white (equal odds); all channels of a corrupted pixel change together."""
    if not 0 <= rate < 1:
        raise ParameterError(f"noise rate must be in [0,1), got {rate}")
    h, w, c = raster_dims(img)
    out = img.copy()
    if rate == 0:
        return out
    n = h * w
    hit = (rng.uniform(n) < rate).reshape(h, w)
    value = np.where(rng.uniform(n) < 0.5, 255, 0).astype(np.uint8).reshape(h, w)
    flat = out.reshape(h, w, c)
    flat[hit] = value[hit][:, None]
    return out


def _variants(img: Raster, plan: AugmentPlan, rng: Rng):
    """(suffix, image) pairs for every enabled operator, in a fixed order."""
    for angle in plan.rotations:
        yield f"rot{angle}", rotate(img, angle)
    if plan.flip:
        yield "flip", flip_vertical(img)
    if plan.noise:
        child = rng.child(0)
        yield f"noise{child.seed & 0xFFFF:04x}", salt_pepper(img, plan.noise_rate, child)


def expanded_counts(
    manifest: DatasetManifest,
    plan: AugmentPlan,
    targets: dict[str, int] | None = None,
) -> DatasetManifest:
    """Post-expansion per-class counts without touching any files.

    Without targets each class grows by a factor of 1 + enabled operators;
    with targets each class is capped (or uncapped) at its target count.
    """
    k = plan.operator_count()
    out = []
    for e in manifest.classes:
        full = e.count * (1 + k)
        target = targets.get(e.name, full) if targets else full
        if target < e.count or target > full:
            raise ParameterError(
                f"class {e.name}: target {target} outside [{e.count}, {full}]"
            )
        out.append(ClassEntry(name=e.name, count=target))
    return DatasetManifest(classes=out).recompute_proportions()


def paper_target_counts() -> dict[str, int]:
    """Per-class targets reproducing the printed post-augmentation counts."""
    return dict(AUGMENTED_CLASS_COUNTS)


def expand_dataset(
    manifest: DatasetManifest,
    plan: AugmentPlan,
    rng: Rng,
    src_dir: str | Path,
    out_dir: str | Path,
    targets: dict[str, int] | None = None,
) -> DatasetManifest:
    """Write originals plus operator outputs under ``out_dir``; returns the
    new manifest. With per-class targets, originals are always kept and the
    operator outputs are subsampled by a seeded per-class shuffle."""
    src_dir = Path(src_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    planned = expanded_counts(manifest, plan, targets)
    new_classes = []
    for ci, entry in enumerate(manifest.classes):
        target = planned.entry(entry.name).count
        class_rng = rng.child(ci)
        class_dir = out_dir / entry.name
        class_dir.mkdir(parents=True, exist_ok=True)
        kept: list[str] = []
        augmented: list[str] = []
        for fi, rel in enumerate(sorted(entry.files)):
            src = src_dir / rel
            if not src.exists():
                raise IngestionError(f"missing source file: {src}")
            img = read_raster(src)
            stem = Path(rel).stem
            write_raster(class_dir / f"{stem}.png", img)
            kept.append(f"{entry.name}/{stem}.png")
            for suffix, variant in _variants(img, plan, class_rng.child(fi)):
                name = f"{stem}__{suffix}.png"
                write_raster(class_dir / name, variant)
                augmented.append(f"{entry.name}/{name}")
        need = target - len(kept)
        if need < len(augmented):
            order = class_rng.child(0xA5).permutation(len(augmented))
            chosen = set(augmented[i] for i in order[:need])
            for rel in augmented:
                if rel not in chosen:
                    (out_dir / rel).unlink()
            augmented = sorted(chosen)
        new_classes.append(
            ClassEntry(name=entry.name, count=len(kept) + len(augmented), files=kept + augmented)
        )
    return DatasetManifest(classes=new_classes).recompute_proportions()
