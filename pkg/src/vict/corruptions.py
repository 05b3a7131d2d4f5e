"""Fifteen procedural image corruptions at five severity levels.

Four categories: noise (gaussian, shot, impulse), blur (defocus, glass,
motion, zoom), weather (fog, frost, snow), and digital (brightness,
contrast, elastic transform, jpeg compression, pixelate). Severity
parameters live in a versioned config file shipped with the package and
are chosen so the mean squared distortion grows with severity; nothing
here depends on external assets. ``apply`` is a pure function of
(image, kind, severity, seed) thanks to counter-based random streams.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.fft import dctn, idctn
from scipy.ndimage import convolve, gaussian_filter

from .seeding import rng_for

TABLE_VERSION = 1


class CorruptionKind(Enum):
    GAUSSIAN_NOISE = "gaussian_noise"
    SHOT_NOISE = "shot_noise"
    IMPULSE_NOISE = "impulse_noise"
    DEFOCUS_BLUR = "defocus_blur"
    GLASS_BLUR = "glass_blur"
    MOTION_BLUR = "motion_blur"
    ZOOM_BLUR = "zoom_blur"
    FOG = "fog"
    FROST = "frost"
    SNOW = "snow"
    BRIGHTNESS = "brightness"
    CONTRAST = "contrast"
    ELASTIC_TRANSFORM = "elastic_transform"
    JPEG_COMPRESSION = "jpeg_compression"
    PIXELATE = "pixelate"


ALL_KINDS = tuple(CorruptionKind)

CATEGORIES: dict[str, tuple[CorruptionKind, ...]] = {
    "noise": (CorruptionKind.GAUSSIAN_NOISE, CorruptionKind.SHOT_NOISE, CorruptionKind.IMPULSE_NOISE),
    "blur": (CorruptionKind.DEFOCUS_BLUR, CorruptionKind.GLASS_BLUR, CorruptionKind.MOTION_BLUR, CorruptionKind.ZOOM_BLUR),
    "weather": (CorruptionKind.FOG, CorruptionKind.FROST, CorruptionKind.SNOW),
    "digital": (
        CorruptionKind.BRIGHTNESS,
        CorruptionKind.CONTRAST,
        CorruptionKind.ELASTIC_TRANSFORM,
        CorruptionKind.JPEG_COMPRESSION,
        CorruptionKind.PIXELATE,
    ),
}


@dataclass(frozen=True)
class CorruptionSpec:
    kind: CorruptionKind
    severity: int
    seed: int

    def __post_init__(self):
        if not isinstance(self.kind, CorruptionKind):
            raise ValueError(f"CorruptionSpec: unknown kind {self.kind!r}")
        if self.severity not in (1, 2, 3, 4, 5):
            raise ValueError(f"CorruptionSpec: severity must be in [1, 5], got {self.severity}")


SeverityTable = dict[CorruptionKind, tuple[tuple[float, ...], ...]]


# ---------------------------------------------------------------------------
# severity table config file
# ---------------------------------------------------------------------------


def save_severity_table(path: str | Path, table: SeverityTable, version: int = TABLE_VERSION) -> None:
    lines = ["# corruption severity table", f"table_version = {version}"]
    for kind in ALL_KINDS:
        for sev in range(1, 6):
            row = ",".join(repr(float(v)) for v in table[kind][sev - 1])
            lines.append(f"{kind.value}.{sev} = {row}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _parse_table(text: str) -> SeverityTable:
    rows: dict[CorruptionKind, dict[int, tuple[float, ...]]] = {k: {} for k in ALL_KINDS}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        if key == "table_version":
            if int(value) != TABLE_VERSION:
                raise ValueError(f"severity table version {value.strip()} != supported {TABLE_VERSION}")
            continue
        name, _, sev = key.partition(".")
        kind = CorruptionKind(name)
        rows[kind][int(sev)] = tuple(float(v) for v in value.split(","))
    table: SeverityTable = {}
    for kind, entries in rows.items():
        if sorted(entries) != [1, 2, 3, 4, 5]:
            raise ValueError(f"severity table: incomplete rows for {kind.value}")
        table[kind] = tuple(entries[s] for s in range(1, 6))
    return table


def load_severity_table(path: str | Path) -> SeverityTable:
    return _parse_table(Path(path).read_text(encoding="ascii"))


_DEFAULT_TABLE: SeverityTable | None = None


def default_severity_table() -> SeverityTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        text = resources.files("vict").joinpath("data/severity_table.cfg").read_text(encoding="ascii")
        _DEFAULT_TABLE = _parse_table(text)
    return _DEFAULT_TABLE


def severity_params(kind: CorruptionKind, severity: int, table: SeverityTable | None = None) -> tuple[float, ...]:
    if not isinstance(kind, CorruptionKind):
        raise ValueError(f"severity_params: unknown kind {kind!r}")
    if severity not in (1, 2, 3, 4, 5):
        raise ValueError(f"severity_params: severity must be in [1, 5], got {severity}")
    table = table if table is not None else default_severity_table()
    return table[kind][severity - 1]


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _disk_kernel(radius: float) -> np.ndarray:
    half = int(np.ceil(radius))
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    kernel = np.clip(radius - np.sqrt(xs * xs + ys * ys) + 0.5, 0.0, 1.0)
    return kernel / kernel.sum()


def _line_kernel(length: float, angle: float) -> np.ndarray:
    size = int(np.ceil(length)) | 1
    kernel = np.zeros((size, size))
    center = size // 2
    steps = max(int(4 * length), 8)
    for s in np.linspace(-length / 2, length / 2, steps):
        px, py = center + s * np.cos(angle), center + s * np.sin(angle)
        i0, j0 = int(np.floor(py)), int(np.floor(px))
        fi, fj = py - i0, px - j0
        for di, dj, w in ((0, 0, (1 - fi) * (1 - fj)), (0, 1, (1 - fi) * fj), (1, 0, fi * (1 - fj)), (1, 1, fi * fj)):
            ii, jj = i0 + di, j0 + dj
            if 0 <= ii < size and 0 <= jj < size:
                kernel[ii, jj] += w
    return kernel / kernel.sum()


def _conv_rgb(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return np.stack([convolve(image[c], kernel, mode="reflect") for c in range(3)])


def _plasma(n: int, rng: np.random.Generator, roughness: float) -> np.ndarray:
    """Diamond-square fractal field on an n x n crop, normalized to [0, 1]."""
    k = 1
    while (1 << k) + 1 < n:
        k += 1
    size = (1 << k) + 1
    field = np.zeros((size, size))
    corners = rng.random((2, 2))
    field[0, 0], field[0, -1], field[-1, 0], field[-1, -1] = corners.ravel()
    step = size - 1
    amplitude = 1.0
    while step > 1:
        half = step // 2
        # diamond: centers of squares
        for i in range(half, size, step):
            for j in range(half, size, step):
                avg = (
                    field[i - half, j - half]
                    + field[i - half, j + half]
                    + field[i + half, j - half]
                    + field[i + half, j + half]
                ) / 4.0
                field[i, j] = avg + amplitude * (rng.random() - 0.5)
        # square: edge midpoints
        for i in range(0, size, half):
            start = half if (i // half) % 2 == 0 else 0
            for j in range(start, size, step):
                total, count = 0.0, 0
                for di, dj in ((-half, 0), (half, 0), (0, -half), (0, half)):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < size and 0 <= jj < size:
                        total += field[ii, jj]
                        count += 1
                field[i, j] = total / count + amplitude * (rng.random() - 0.5)
        step = half
        amplitude *= roughness
    crop = field[:n, :n]
    lo, hi = crop.min(), crop.max()
    return (crop - lo) / max(hi - lo, 1e-9)


def _bilinear_sample(image: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample [3, H, W] at float coordinates with edge clamping."""
    h, w = image.shape[1], image.shape[2]
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    out = (
        image[:, y0, x0] * ((1 - fy) * (1 - fx))[None]
        + image[:, y0, x1] * ((1 - fy) * fx)[None]
        + image[:, y1, x0] * (fy * (1 - fx))[None]
        + image[:, y1, x1] * (fy * fx)[None]
    )
    return out


def _resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = image.shape[1], image.shape[2]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    grid_y = np.repeat(ys[:, None], out_w, axis=1)
    grid_x = np.repeat(xs[None, :], out_h, axis=0)
    return _bilinear_sample(image, grid_y, grid_x)


# ---------------------------------------------------------------------------
# per-kind definitions
# ---------------------------------------------------------------------------


def _gaussian_noise(img, rng, params):
    (sigma,) = params
    return img + rng.normal(0.0, sigma, size=img.shape) if sigma > 0 else img


def _shot_noise(img, rng, params):
    (counts,) = params
    return rng.poisson(np.clip(img, 0.0, 1.0) * counts).astype(np.float64) / counts


def _impulse_noise(img, rng, params):
    (p,) = params
    hit = rng.random(img.shape[1:]) < p
    salt = (rng.random(img.shape[1:]) < 0.5).astype(np.float64)
    out = img.copy()
    out[:, hit] = salt[hit][None]
    return out


def _defocus_blur(img, rng, params):
    (radius,) = params
    return _conv_rgb(img, _disk_kernel(radius))


def _glass_blur(img, rng, params):
    shift, iters, sigma = int(params[0]), int(params[1]), params[2]
    out = gaussian_filter(img, sigma=(0, sigma, sigma), mode="reflect")
    c = out.shape[1]
    for _ in range(iters):
        dy = rng.integers(-shift, shift + 1, size=(c, c))
        dx = rng.integers(-shift, shift + 1, size=(c, c))
        for i in range(c):
            for j in range(c):
                ii = min(max(i + dy[i, j], 0), c - 1)
                jj = min(max(j + dx[i, j], 0), c - 1)
                tmp = out[:, i, j].copy()
                out[:, i, j] = out[:, ii, jj]
                out[:, ii, jj] = tmp
    return gaussian_filter(out, sigma=(0, sigma, sigma), mode="reflect")


def _motion_blur(img, rng, params):
    (length,) = params
    angle = rng.uniform(0.0, np.pi)
    return _conv_rgb(img, _line_kernel(length, angle))


def _zoom_blur(img, rng, params):
    zmax, step = params
    c = img.shape[1]
    layers = [img]
    factor = 1.0 + step
    while factor <= zmax + 1e-9:
        crop = max(int(round(c / factor)), 2)
        lo = (c - crop) // 2
        layers.append(_resize_bilinear(img[:, lo : lo + crop, lo : lo + crop], c, c))
        factor += step
    return np.mean(layers, axis=0)


def _fog(img, rng, params):
    t, roughness = params
    field = _plasma(img.shape[1], rng, roughness)
    weight = t * field[None]
    return img * (1.0 - weight) + weight


def _frost(img, rng, params):
    opacity, coverage = params
    field = _plasma(img.shape[1], rng, 0.85)  # slow decay keeps high-frequency energy
    threshold = np.quantile(field, 1.0 - coverage)
    crystals = np.clip((field - threshold) / max(1.0 - threshold, 1e-9), 0.0, 1.0)
    weight = opacity * crystals[None]
    return img * (1.0 - weight) + weight * 0.95


def _snow(img, rng, params):
    density, length, lift = params
    points = (rng.random(img.shape[1:]) < density).astype(np.float64)
    angle = np.pi / 2 + rng.uniform(-0.35, 0.35)
    flakes = convolve(points, _line_kernel(length, angle), mode="constant", cval=0.0)
    peak = flakes.max()
    if peak > 0:
        flakes = flakes / peak
    return img + 0.8 * flakes[None] + lift


def _brightness(img, rng, params):
    (b,) = params
    return img + b


def _contrast(img, rng, params):
    (c,) = params
    mean = img.mean()
    return (img - mean) * c + mean


def _elastic_transform(img, rng, params):
    alpha, sigma = params
    c = img.shape[1]
    raw = rng.uniform(-1.0, 1.0, size=(2, c, c))
    dy = gaussian_filter(raw[0], sigma, mode="reflect")
    dx = gaussian_filter(raw[1], sigma, mode="reflect")
    dy = dy / max(np.abs(dy).max(), 1e-9) * alpha
    dx = dx / max(np.abs(dx).max(), 1e-9) * alpha
    ys, xs = np.mgrid[0:c, 0:c].astype(np.float64)
    return _bilinear_sample(img, ys + dy, xs + dx)


# standard quantization matrices (luminance, chrominance)
_JPEG_Q_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)
_JPEG_Q_CHROMA = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)


def _quality_scaled(table: np.ndarray, quality: float) -> np.ndarray:
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((table * scale + 50.0) / 100.0), 1.0, None)


def _blockwise(channel: np.ndarray, q: np.ndarray) -> np.ndarray:
    h, w = channel.shape
    blocks = channel.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
    coeffs = dctn(blocks, axes=(2, 3), norm="ortho")
    coeffs = np.round(coeffs / q) * q
    out = idctn(coeffs, axes=(2, 3), norm="ortho")
    return out.transpose(0, 2, 1, 3).reshape(h, w)


def _jpeg_compression(img, rng, params):
    (quality,) = params
    c = img.shape[1]
    if c % 8 != 0:
        raise ValueError(f"jpeg_compression: image side {c} must be a multiple of 8")
    r, g, b = img[0] * 255.0, img[1] * 255.0, img[2] * 255.0
    y = 0.299 * r + 0.587 * g + 0.114 * b - 128.0
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b
    y = _blockwise(y, _quality_scaled(_JPEG_Q_LUMA, quality))
    cb = _blockwise(cb, _quality_scaled(_JPEG_Q_CHROMA, quality))
    cr = _blockwise(cr, _quality_scaled(_JPEG_Q_CHROMA, quality))
    y = y + 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b]) / 255.0


def _pixelate(img, rng, params):
    (factor,) = params
    f = int(factor)
    c = img.shape[1]
    m = (c + f - 1) // f
    idx = np.minimum(np.arange(m) * f + f // 2, c - 1)
    small = img[:, idx[:, None], idx[None, :]]
    up = np.repeat(np.repeat(small, f, axis=1), f, axis=2)
    return up[:, :c, :c]


_IMPLEMENTATIONS = {
    CorruptionKind.GAUSSIAN_NOISE: _gaussian_noise,
    CorruptionKind.SHOT_NOISE: _shot_noise,
    CorruptionKind.IMPULSE_NOISE: _impulse_noise,
    CorruptionKind.DEFOCUS_BLUR: _defocus_blur,
    CorruptionKind.GLASS_BLUR: _glass_blur,
    CorruptionKind.MOTION_BLUR: _motion_blur,
    CorruptionKind.ZOOM_BLUR: _zoom_blur,
    CorruptionKind.FOG: _fog,
    CorruptionKind.FROST: _frost,
    CorruptionKind.SNOW: _snow,
    CorruptionKind.BRIGHTNESS: _brightness,
    CorruptionKind.CONTRAST: _contrast,
    CorruptionKind.ELASTIC_TRANSFORM: _elastic_transform,
    CorruptionKind.JPEG_COMPRESSION: _jpeg_compression,
    CorruptionKind.PIXELATE: _pixelate,
}


def apply(image: np.ndarray, spec: CorruptionSpec, table: SeverityTable | None = None) -> np.ndarray:
    """Corrupt a [3, C, C] image in [0, 1]; output is clipped back to [0, 1]."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"apply: expected [3, C, C] image, got {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("apply: input pixel values outside [0, 1]")
    params = severity_params(spec.kind, spec.severity, table)
    rng = rng_for("corrupt", spec.kind.value, spec.severity, spec.seed)
    out = _IMPLEMENTATIONS[spec.kind](arr.astype(np.float64), rng, params)
    out = np.clip(out, 0.0, 1.0)
    if not np.isfinite(out).all():
        raise FloatingPointError(f"apply: non-finite output for {spec.kind.value}")
    return out.astype(arr.dtype if np.issubdtype(arr.dtype, np.floating) else np.float32)


def monotonicity_report(
    images: list[np.ndarray], table: SeverityTable | None = None, seed: int = 0
) -> list[tuple[str, int, float]]:
    """Mean MSE-to-clean per (kind, severity) over a probe set."""
    rows = []
    for kind in ALL_KINDS:
        for sev in range(1, 6):
            total = 0.0
            for i, img in enumerate(images):
                out = apply(img, CorruptionSpec(kind, sev, seed + i), table)
                total += float(np.mean((out.astype(np.float64) - np.asarray(img, dtype=np.float64)) ** 2))
            rows.append((kind.value, sev, total / len(images)))
    return rows


def write_monotonicity_csv(path: str | Path, rows: list[tuple[str, int, float]]) -> None:
    lines = ["kind,severity,mean_mse"]
    lines += [f"{kind},{sev},{mse:.8f}" for kind, sev, mse in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
