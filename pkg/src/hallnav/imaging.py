"""From-scratch grayscale image operations.

Everything here works on 8-bit single-channel rasters. Rounding is
round-half-up throughout so outputs are portable across platforms, and
Gaussian borders are clamped (no dark halos on corridor frames).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

# Default Canny parameters for the dataset pipeline. Thresholds live on an
# 8-bit magnitude scale: gradient magnitude divided by the largest value a
# Sobel pair can produce on 8-bit input, times 255.
CANNY_SIGMA = 1.4
CANNY_LOW = 30.0
CANNY_HIGH = 90.0

_SOBEL_MAG_MAX = 4.0 * 255.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class GrayImage:
    """8-bit single-channel raster, row-major."""

    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad dimensions {self.width}x{self.height}")
        if len(self.pixels) != self.width * self.height:
            raise ValueError(
                f"pixel buffer has {len(self.pixels)} bytes, "
                f"expected {self.width * self.height}"
            )

    def to_array(self) -> np.ndarray:
        """Pixels as a (height, width) uint8 array."""
        a = np.frombuffer(self.pixels, dtype=np.uint8)
        return a.reshape(self.height, self.width)

    @classmethod
    def from_array(cls, a: np.ndarray) -> "GrayImage":
        a = np.asarray(a, dtype=np.uint8)
        if a.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {a.shape}")
        return cls(width=a.shape[1], height=a.shape[0], pixels=a.tobytes())


def round_half_up(x):
    """Round with .5 always going up; works elementwise on arrays."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def _to_u8(x) -> np.ndarray:
    return np.clip(round_half_up(x), 0, 255).astype(np.uint8)


def to_gray(rgb: bytes, width: int, height: int) -> GrayImage:
    """Convert an interleaved 8-bit RGB raster to grayscale.

    Per pixel: gray = round(0.299 R + 0.587 G + 0.114 B).
    """
    if len(rgb) != 3 * width * height:
        raise ValueError(
            f"RGB buffer has {len(rgb)} bytes, expected {3 * width * height}"
        )
    a = np.frombuffer(rgb, dtype=np.uint8).reshape(height, width, 3).astype(np.float64)
    gray = 0.299 * a[:, :, 0] + 0.587 * a[:, :, 1] + 0.114 * a[:, :, 2]
    return GrayImage.from_array(_to_u8(gray))


def equalize_hist(img: GrayImage) -> GrayImage:
    """Histogram equalization via the standard CDF remap.

    h(v) = round(255 * (cdf(v) - cdf_min) / (N - cdf_min)) with cdf_min the
    CDF at the lowest occupied intensity. Constant images come back
    unchanged; the remap would divide by zero there.
    """
    a = img.to_array()
    hist = np.bincount(a.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    n = a.size
    cdf_min = cdf[np.nonzero(hist)[0][0]]
    if n == cdf_min:
        return img
    table = _to_u8(255.0 * (cdf - cdf_min) / (n - cdf_min))
    return GrayImage.from_array(table[a])


def flip_y(img: GrayImage) -> GrayImage:
    """Mirror horizontally (reverse columns)."""
    return GrayImage.from_array(img.to_array()[:, ::-1])


def resize(img: GrayImage, w: int, h: int) -> GrayImage:
    """Bilinear resize with pixel-center alignment."""
    if w < 1 or h < 1:
        raise ValueError(f"bad target size {w}x{h}")
    if w == img.width and h == img.height:
        return img
    src = img.to_array().astype(np.float64)
    sx = img.width / w
    sy = img.height / h
    # Source sample positions for each output pixel center, clamped inside.
    xs = np.clip((np.arange(w) + 0.5) * sx - 0.5, 0.0, img.width - 1.0)
    ys = np.clip((np.arange(h) + 0.5) * sy - 0.5, 0.0, img.height - 1.0)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx = xs - x0
    fy = ys - y0
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy)[:, None] + bot * fy[:, None]
    return GrayImage.from_array(_to_u8(out))


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return k / k.sum()


def _blur(a: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, clamp-to-border."""
    k = _gaussian_kernel(sigma)
    r = (len(k) - 1) // 2
    padded = np.pad(a, ((0, 0), (r, r)), mode="edge")
    cols = np.lib.stride_tricks.sliding_window_view(padded, len(k), axis=1)
    a = cols @ k
    padded = np.pad(a, ((r, r), (0, 0)), mode="edge")
    rows = np.lib.stride_tricks.sliding_window_view(padded, len(k), axis=0)
    return rows @ k


def _sobel(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel gradients, clamp-to-border. Returns (gx, gy)."""
    p = np.pad(a, 1, mode="edge")
    gx = (
        (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return gx, gy


# Neighbor offsets (dy, dx) per quantized gradient direction bin. Bin 0 is a
# horizontal gradient (vertical edge): compare against left/right pixels.
_NMS_NEIGHBORS = {
    0: (0, 1),    # 0 deg
    1: (1, 1),    # 45 deg
    2: (1, 0),    # 90 deg
    3: (1, -1),   # 135 deg
}


def _quantize_direction(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Quantize gradient direction to 4 bins (0/45/90/135 degrees)."""
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.zeros(angle.shape, dtype=np.int8)
    bins[(angle >= 22.5) & (angle < 67.5)] = 1
    bins[(angle >= 67.5) & (angle < 112.5)] = 2
    bins[(angle >= 112.5) & (angle < 157.5)] = 3
    return bins


def _nms(mag: np.ndarray, bins: np.ndarray) -> np.ndarray:
    """Non-maximum suppression along the quantized gradient direction.

    The comparison is strict against the neighbor in the canonical direction
    and non-strict against the opposite one, so a two-pixel plateau (a
    perfectly symmetric step) keeps exactly one pixel.
    """
    h, w = mag.shape
    padded = np.full((h + 2, w + 2), -1.0)
    padded[1:-1, 1:-1] = mag
    keep = np.zeros(mag.shape, dtype=bool)
    for b, (dy, dx) in _NMS_NEIGHBORS.items():
        ahead = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        behind = padded[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        keep |= (bins == b) & (mag > ahead) & (mag >= behind)
    keep &= mag > 0
    return keep


def _hysteresis(mag: np.ndarray, keep: np.ndarray, low: float, high: float) -> np.ndarray:
    """Keep strong pixels and weak pixels 8-connected to a strong one."""
    strong = keep & (mag >= high)
    weak = keep & (mag >= low) & (mag < high)
    out = strong.copy()
    frontier = deque(zip(*np.nonzero(strong)))
    h, w = mag.shape
    while frontier:
        y, x = frontier.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and weak[ny, nx] and not out[ny, nx]:
                    out[ny, nx] = True
                    frontier.append((ny, nx))
    return out


def canny(
    img: GrayImage,
    sigma: float = CANNY_SIGMA,
    low: float = CANNY_LOW,
    high: float = CANNY_HIGH,
) -> GrayImage:
    """Canny edge detection; returns a binary image (0 or 255).

    Stages: Gaussian blur (radius ceil(3*sigma), clamped borders), 3x3 Sobel
    gradients, non-maximum suppression against the two neighbors along the
    quantized direction, then two-threshold hysteresis with 8-connectivity.
    Thresholds are on the normalized 0..255 magnitude scale.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not 0 <= low <= high:
        raise ValueError(f"need 0 <= low <= high, got low={low} high={high}")
    blurred = _blur(img.to_array().astype(np.float64), sigma)
    gx, gy = _sobel(blurred)
    mag = np.hypot(gx, gy) * (255.0 / _SOBEL_MAG_MAX)
    bins = _quantize_direction(gx, gy)
    keep = _nms(mag, bins)
    edges = _hysteresis(mag, keep, low, high)
    return GrayImage.from_array(edges.astype(np.uint8) * 255)


def write_pgm(img: GrayImage) -> bytes:
    """Serialize as binary PGM (P5, maxval 255)."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels


def _parse_pgm(data: bytes, pos: int) -> tuple[GrayImage, int]:
    if data[pos : pos + 2] != b"P5":
        raise ValueError("not a binary PGM (missing P5 magic)")
    fields: list[int] = []
    pos += 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # comment line
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        try:
            fields.append(int(data[start:pos]))
        except ValueError:
            raise ValueError(f"bad PGM header token {data[start:pos]!r}") from None
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    pixels = data[pos : pos + width * height]
    if len(pixels) != width * height:
        raise ValueError("truncated PGM pixel data")
    return GrayImage(width=width, height=height, pixels=pixels), pos + width * height


def read_pgm(data: bytes) -> GrayImage:
    """Parse a binary PGM (P5) produced by write_pgm or compatible tools."""
    img, _ = _parse_pgm(data, 0)
    return img


def read_pgm_stream(data: bytes) -> list[GrayImage]:
    """Parse a concatenation of binary PGMs, in order."""
    frames = []
    pos = 0
    while pos < len(data):
        img, pos = _parse_pgm(data, pos)
        frames.append(img)
    return frames
