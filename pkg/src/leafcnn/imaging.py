"""Leaf segmentation chain: smooth, grayscale, Sobel, binarize, locate, crop.

A raster is a uint8 numpy array, shape (H, W) for single channel or
(H, W, 3) for color, row-major. All convolutions mirror the border
(numpy ``reflect``: edge pixel not repeated).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import EmptyTargetError, ParameterError, ShapeError

Raster = np.ndarray

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


def raster_dims(img: Raster) -> tuple[int, int, int]:
    """(height, width, channels) of a raster; rejects malformed arrays."""
    if img.ndim == 2:
        h, w = img.shape
        c = 1
    elif img.ndim == 3 and img.shape[2] in (1, 3):
        h, w, c = img.shape
    else:
        raise ShapeError(f"raster must be (H,W) or (H,W,1|3), got {img.shape}")
    if h < 1 or w < 1:
        raise ShapeError(f"raster extents must be >= 1, got {img.shape}")
    return h, w, c


@dataclass
class GradientField:
    """Sobel responses: x/y components, magnitude, and orientation planes."""

    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    orientation: np.ndarray


@dataclass
class BoundingBox:
    """Inclusive pixel box; (x0, y0) top-left, (x1, y1) bottom-right."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 <= self.x1 and 0 <= self.y0 <= self.y1):
            raise ShapeError(f"degenerate bounding box {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1

    def area(self) -> int:
        return self.width * self.height

    def iou(self, other: "BoundingBox") -> float:
        """Intersection-over-union with another box."""
        ix0 = max(self.x0, other.x0)
        iy0 = max(self.y0, other.y0)
        ix1 = min(self.x1, other.x1)
        iy1 = min(self.y1, other.y1)
        if ix0 > ix1 or iy0 > iy1:
            return 0.0
        inter = (ix1 - ix0 + 1) * (iy1 - iy0 + 1)
        return inter / (self.area() + other.area() - inter)


@dataclass
class SegmentConfig:
    """Parameters of the segmentation pipeline."""

    sigma: float = 1.0
    radius: int | None = None  # defaults to ceil(3 * sigma)
    min_run_fraction: float = 0.01
    margin: int = 2
    side: int = 188
    approx_magnitude: bool = False  # |gx|+|gy| instead of sqrt(gx^2+gy^2)
    vertical_edges_only: bool = False  # use |gx| alone as the edge response
    literal_orientation: bool = False  # arctan(gx/gy) instead of arctan(gy/gx)
    debug_dir: Path | None = None


def gaussian_kernel_1d(sigma: float, radius: int | None = None) -> np.ndarray:
    """Discretized 1-D Gaussian, normalized to sum 1."""
    if sigma <= 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    if radius is None:
        radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _convolve2d_mirror(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate a single float plane with a 2-D kernel, mirrored border."""
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    padded = np.pad(plane, ((ry, ry), (rx, rx)), mode="reflect")
    out = np.zeros_like(plane, dtype=np.float64)
    h, w = plane.shape
    for u in range(kh):
        for v in range(kw):
            if kernel[u, v] != 0.0:
                out += kernel[u, v] * padded[u : u + h, v : v + w]
    return out


def gaussian_smooth(img: Raster, sigma: float = 1.0, radius: int | None = None) -> Raster:
    """Smooth each channel with the normalized Gaussian of the given sigma."""
    h, w, c = raster_dims(img)
    k1 = gaussian_kernel_1d(sigma, radius)
    r = len(k1) // 2
    planes = img.reshape(h, w, c).astype(np.float64)
    out = np.empty_like(planes)
    for ch in range(c):
        p = np.pad(planes[:, :, ch], r, mode="reflect")
        # separable: rows then columns, slice-accumulated per tap
        rows = np.zeros((h + 2 * r, w), dtype=np.float64)
        for u, kv in enumerate(k1):
            rows += kv * p[:, u : u + w]
        full = np.zeros((h, w), dtype=np.float64)
        for u, kv in enumerate(k1):
            full += kv * rows[u : u + h, :]
        out[:, :, ch] = full
    out = np.floor(out + 0.5).clip(0, 255).astype(np.uint8)
    return out.reshape(img.shape)


def to_grayscale(img: Raster) -> Raster:
    """BT.601 luminance (0.299 R + 0.587 G + 0.114 B), rounded to uint8."""
    h, w, c = raster_dims(img)
    if c == 1:
        return img.reshape(h, w).copy()
    lum = (
        0.299 * img[:, :, 0].astype(np.float64)
        + 0.587 * img[:, :, 1]
        + 0.114 * img[:, :, 2]
    )
    return np.floor(lum + 0.5).clip(0, 255).astype(np.uint8)


def sobel(
    img: Raster,
    approx_magnitude: bool = False,
    literal_orientation: bool = False,
) -> GradientField:
    """Sobel gradients of a single-channel raster, mirrored border.

    Magnitude is sqrt(gx^2 + gy^2) by default; ``approx_magnitude`` selects
    the faster |gx| + |gy| form. Orientation is arctan2(gy, gx) by default;
    ``literal_orientation`` selects arctan2(gx, gy).
    """
    h, w, c = raster_dims(img)
    if c != 1:
        raise ShapeError("sobel expects a single-channel raster")
    plane = img.reshape(h, w).astype(np.float64)
    gx = _convolve2d_mirror(plane, SOBEL_X)
    gy = _convolve2d_mirror(plane, SOBEL_Y)
    if approx_magnitude:
        magnitude = np.abs(gx) + np.abs(gy)
    else:
        magnitude = np.sqrt(gx * gx + gy * gy)
    if literal_orientation:
        orientation = np.arctan2(gx, gy)
    else:
        orientation = np.arctan2(gy, gx)
    orientation[orientation == -math.pi] = math.pi
    return GradientField(gx=gx, gy=gy, magnitude=magnitude, orientation=orientation)


def otsu_threshold(img: Raster) -> int:
    """Otsu's threshold over the 256-bin histogram.

    Classes are {intensity <= t} and {intensity > t}; among maximizers of the
    between-class variance the midpoint is returned. A constant image yields
    its own intensity (empty foreground either polarity).
    """
    hist = np.bincount(img.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    omega0 = np.cumsum(hist) / total
    mu = np.cumsum(hist * np.arange(256)) / total
    mu_total = mu[-1]
    omega1 = 1.0 - omega0
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_total * omega0 - mu) ** 2 / (omega0 * omega1)
    sigma_b[~np.isfinite(sigma_b)] = 0.0
    best = sigma_b.max()
    if best <= 0.0:
        return int(np.nonzero(hist)[0][0])
    winners = np.nonzero(sigma_b == best)[0]
    return int((winners[0] + winners[-1]) // 2)


def binarize(img: Raster, foreground: str = "dark") -> Raster:
    """Otsu-thresholded binary raster; foreground pixels become 255.

    ``foreground='dark'`` marks intensities strictly below the threshold
    (dark leaf on a white belt); ``'bright'`` marks strictly above.
    """
    h, w, c = raster_dims(img)
    if c != 1:
        raise ShapeError("binarize expects a single-channel raster")
    if foreground not in ("dark", "bright"):
        raise ParameterError(f"foreground must be 'dark' or 'bright', got {foreground!r}")
    plane = img.reshape(h, w)
    t = otsu_threshold(plane)
    mask = plane < t if foreground == "dark" else plane > t
    return np.where(mask, 255, 0).astype(np.uint8)


def locate_target(binary: Raster, min_run_fraction: float = 0.01, margin: int = 2) -> BoundingBox:
    """Smallest box spanning rows/columns whose foreground count exceeds
    ``min_run_fraction`` of the scanline, expanded by ``margin`` pixels."""
    h, w, c = raster_dims(binary)
    if c != 1:
        raise ShapeError("locate_target expects a single-channel raster")
    if not 0 <= min_run_fraction < 1:
        raise ParameterError(f"min_run_fraction must be in [0,1), got {min_run_fraction}")
    fg = binary.reshape(h, w) != 0
    row_counts = fg.sum(axis=1)
    col_counts = fg.sum(axis=0)
    rows = np.nonzero(row_counts > min_run_fraction * w)[0]
    cols = np.nonzero(col_counts > min_run_fraction * h)[0]
    if len(rows) == 0 or len(cols) == 0:
        raise EmptyTargetError("no scanline exceeds the foreground fraction")
    return BoundingBox(
        x0=max(0, int(cols[0]) - margin),
        y0=max(0, int(rows[0]) - margin),
        x1=min(w - 1, int(cols[-1]) + margin),
        y1=min(h - 1, int(rows[-1]) + margin),
    )


def crop_resize(img: Raster, box: BoundingBox, side: int = 188) -> Raster:
    """Crop the (inclusive) box and bilinearly resample to side x side."""
    h, w, c = raster_dims(img)
    if side < 1:
        raise ParameterError(f"side must be >= 1, got {side}")
    if box.x1 >= w or box.y1 >= h:
        raise ShapeError(f"box {box} exceeds raster {img.shape}")
    region = img.reshape(h, w, c)[box.y0 : box.y1 + 1, box.x0 : box.x1 + 1, :]
    rh, rw = region.shape[:2]
    # half-pixel-center mapping: an identity when the crop is already side x side
    ys = np.clip((np.arange(side) + 0.5) * (rh / side) - 0.5, 0, rh - 1)
    xs = np.clip((np.arange(side) + 0.5) * (rw / side) - 0.5, 0, rw - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, rh - 1)
    x1 = np.minimum(x0 + 1, rw - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    p = region.astype(np.float64)
    top = p[y0][:, x0] * (1 - fx) + p[y0][:, x1] * fx
    bot = p[y1][:, x0] * (1 - fx) + p[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    out = np.floor(out + 0.5).clip(0, 255).astype(np.uint8)
    return out.reshape((side, side) if img.ndim == 2 else (side, side, c))


def normalize_to_uint8(plane: np.ndarray) -> Raster:
    """Scale a non-negative float plane so its max maps to 255."""
    peak = plane.max()
    if peak <= 0:
        return np.zeros(plane.shape, dtype=np.uint8)
    return np.floor(plane * (255.0 / peak) + 0.5).clip(0, 255).astype(np.uint8)


def segment_pipeline(img: Raster, cfg: SegmentConfig | None = None) -> Raster:
    """Full chain: smooth, grayscale, Sobel, binarize the edge magnitude,
    locate by scanlines, crop the grayscale and resize to cfg.side.

    Raises EmptyTargetError on blank frames. With ``cfg.debug_dir`` set,
    writes the intermediate planes as PNGs.
    """
    cfg = cfg or SegmentConfig()
    smoothed = gaussian_smooth(img, cfg.sigma, cfg.radius)
    gray_smoothed = to_grayscale(smoothed)
    grad = sobel(
        gray_smoothed,
        approx_magnitude=cfg.approx_magnitude,
        literal_orientation=cfg.literal_orientation,
    )
    response = np.abs(grad.gx) if cfg.vertical_edges_only else grad.magnitude
    edges = normalize_to_uint8(response)
    # edges are the bright structure on the magnitude plane
    binary = binarize(edges, foreground="bright")
    if cfg.debug_dir is not None:
        dbg = Path(cfg.debug_dir)
        dbg.mkdir(parents=True, exist_ok=True)
        write_raster(dbg / "smoothed.png", smoothed)
        write_raster(dbg / "gray.png", gray_smoothed)
        write_raster(dbg / "magnitude.png", edges)
        write_raster(dbg / "binary.png", binary)
    box = locate_target(binary, cfg.min_run_fraction, cfg.margin)
    gray = to_grayscale(img)
    out = crop_resize(gray, box, cfg.side)
    if cfg.debug_dir is not None:
        write_raster(Path(cfg.debug_dir) / "segmented.png", out)
    return out


def read_raster(path: str | Path) -> Raster:
    """Decode a PNG or JPEG to a uint8 raster (grayscale stays 2-D)."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("P", "RGBA", "CMYK") else "L")
        arr = np.asarray(im, dtype=np.uint8)
    return arr


def write_raster(path: str | Path, img: Raster) -> None:
    """Write a raster as PNG (or JPEG, by extension)."""
    h, w, c = raster_dims(img)
    data = img.reshape(h, w) if c == 1 else img
    Image.fromarray(data).save(path)
