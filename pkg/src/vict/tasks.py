"""Procedural toy image-to-image tasks and their evaluation metrics.

Every task shares one scene generator: 2-5 anti-aliased shapes (disks,
rectangles, triangles) on a smooth gradient background. The task then
derives an input/target pair from the scene. Restoration tasks score
PSNR, segmentation scores mIoU over a fixed color palette, and depth
scores mean absolute relative error (A.Rel).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.ndimage import convolve

from .seeding import rng_for

DEFAULT_CELL_SIZE = 32

PSNR_CAP_DB = 99.0
AREL_MIN_DEPTH = 0.01
BACKGROUND_DEPTH = 0.05


class TaskKind(Enum):
    DENOISE = "denoise"
    DERAIN = "derain"
    LOWLIGHT = "lowlight"
    SEGMENTATION = "segmentation"
    DEPTH = "depth"


ALL_TASKS = tuple(TaskKind)

# index 0 is background; pairwise L2 distances all exceed 0.5
PALETTE = np.array(
    [
        [0.0, 0.0, 0.0],
        [0.9, 0.1, 0.1],
        [0.1, 0.9, 0.1],
        [0.1, 0.1, 0.9],
    ],
    dtype=np.float32,
)


@dataclass(frozen=True)
class TaskSample:
    input: np.ndarray
    target: np.ndarray
    task: TaskKind
    seed: int


@dataclass(frozen=True)
class Metric:
    name: str
    value: float
    higher_is_better: bool


def metric_name_for(task: TaskKind) -> str:
    return {
        TaskKind.DENOISE: "PSNR",
        TaskKind.DERAIN: "PSNR",
        TaskKind.LOWLIGHT: "PSNR",
        TaskKind.SEGMENTATION: "mIoU",
        TaskKind.DEPTH: "A.Rel",
    }[task]


def evaluate(task: TaskKind, pred: np.ndarray, target: np.ndarray) -> Metric:
    if task is TaskKind.SEGMENTATION:
        return miou(pred, target, PALETTE)
    if task is TaskKind.DEPTH:
        return a_rel(pred, target)
    return psnr(pred, target)


# ---------------------------------------------------------------------------
# scene construction
# ---------------------------------------------------------------------------


def _render_scene(rng: np.random.Generator, c: int):
    """Scene plus per-pixel class indices and inverse-depth values."""
    ys, xs = np.mgrid[0:c, 0:c].astype(np.float64) + 0.5
    theta = rng.uniform(0.0, 2.0 * np.pi)
    proj = xs * np.cos(theta) + ys * np.sin(theta)
    proj = (proj - proj.min()) / max(proj.max() - proj.min(), 1e-9)
    c0, c1 = rng.uniform(0.1, 0.9, size=(2, 3))
    scene = c0[:, None, None] + proj[None] * (c1 - c0)[:, None, None]
    class_map = np.zeros((c, c), dtype=np.int64)
    inv_depth = np.full((c, c), BACKGROUND_DEPTH, dtype=np.float64)

    shapes = []
    for _ in range(int(rng.integers(2, 6))):
        kind = int(rng.integers(0, 3))
        color = rng.uniform(0.05, 0.95, size=3)
        cx, cy = rng.uniform(0.2 * c, 0.8 * c, size=2)
        if kind == 0:  # disk
            r = rng.uniform(0.10 * c, 0.28 * c)
            geom = (cx, cy, r)
            r_eff = r
        elif kind == 1:  # axis-aligned rectangle
            hw, hh = rng.uniform(0.08 * c, 0.25 * c, size=2)
            geom = (cx, cy, hw, hh)
            r_eff = np.sqrt(hw * hh)
        else:  # triangle around the center
            angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=3))
            radii = rng.uniform(0.12 * c, 0.30 * c, size=3)
            geom = (cx + radii * np.cos(angles), cy + radii * np.sin(angles))
            r_eff = 0.7 * radii.mean()
        # inverse depth follows visible cues (bigger and lower means nearer)
        z = float(np.clip(0.3 + 2.2 * (r_eff / c - 0.08) + 0.35 * (cy / c - 0.5), 0.25, 1.0))
        shapes.append((z, kind, color, geom))

    # far shapes first so nearer ones paint over them
    for z, kind, color, geom in sorted(shapes, key=lambda s: s[0]):
        if kind == 0:
            cx, cy, r = geom
            dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
            alpha = np.clip(r - dist + 0.5, 0.0, 1.0)
        elif kind == 1:
            cx, cy, hw, hh = geom
            ax = np.clip(hw - np.abs(xs - cx) + 0.5, 0.0, 1.0)
            ay = np.clip(hh - np.abs(ys - cy) + 0.5, 0.0, 1.0)
            alpha = ax * ay
        else:
            vx, vy = geom
            sd = np.full((c, c), -np.inf)
            for i in range(3):
                x0, y0 = vx[i], vy[i]
                x1, y1 = vx[(i + 1) % 3], vy[(i + 1) % 3]
                ex, ey = x1 - x0, y1 - y0
                norm = max(np.hypot(ex, ey), 1e-9)
                # vertices are angle-sorted around the centroid, so edges wind CCW
                # and the outward normal is (ey, -ex) / norm
                sd = np.maximum(sd, ((xs - x0) * ey - (ys - y0) * ex) / norm)
            alpha = np.clip(0.5 - sd, 0.0, 1.0)
        scene = alpha[None] * color[:, None, None] + (1.0 - alpha[None]) * scene
        hard = alpha >= 0.5
        class_map[hard] = kind + 1
        inv_depth[hard] = z

    return np.clip(scene, 0.0, 1.0), class_map, inv_depth


def _diagonal_streaks(rng: np.random.Generator, c: int) -> np.ndarray:
    """Bright rain-like streak field in [0, 1]."""
    points = (rng.random((c, c)) < 0.035).astype(np.float64)
    length = max(5, c // 5)
    angle = np.pi / 4 + rng.uniform(-0.25, 0.25)
    size = length | 1
    kernel = np.zeros((size, size))
    center = size // 2
    for s in np.linspace(-length / 2, length / 2, 4 * length):
        px, py = center + s * np.cos(angle), center + s * np.sin(angle)
        i0, j0 = int(np.floor(py)), int(np.floor(px))
        fi, fj = py - i0, px - j0
        for di, dj, w in ((0, 0, (1 - fi) * (1 - fj)), (0, 1, (1 - fi) * fj), (1, 0, fi * (1 - fj)), (1, 1, fi * fj)):
            ii, jj = i0 + di, j0 + dj
            if 0 <= ii < size and 0 <= jj < size:
                kernel[ii, jj] += w
    kernel /= kernel.sum()
    field = convolve(points, kernel, mode="constant", cval=0.0)
    peak = field.max()
    if peak > 0:
        field = field / peak
    return 0.7 * field


def generate(task: TaskKind, seed: int, cell_size: int = DEFAULT_CELL_SIZE) -> TaskSample:
    """Deterministic input/target pair for one task instance."""
    if not isinstance(task, TaskKind):
        raise ValueError(f"generate: unknown task {task!r}")
    rng = rng_for("task", task.value, seed)
    scene, class_map, inv_depth = _render_scene(rng, cell_size)

    if task is TaskKind.DENOISE:
        image = np.clip(scene + rng.normal(0.0, 0.1, size=scene.shape), 0.0, 1.0)
        target = scene
    elif task is TaskKind.DERAIN:
        streaks = _diagonal_streaks(rng, cell_size)
        image = np.clip(scene + streaks[None], 0.0, 1.0)
        target = scene
    elif task is TaskKind.LOWLIGHT:
        image = np.clip((scene ** 2.2) * 0.4, 0.0, 1.0)
        target = scene
    elif task is TaskKind.SEGMENTATION:
        image = scene
        target = PALETTE[class_map].transpose(2, 0, 1).astype(np.float64)
    else:  # depth
        image = scene
        target = np.repeat(inv_depth[None], 3, axis=0)

    return TaskSample(
        input=image.astype(np.float32),
        target=target.astype(np.float32),
        task=task,
        seed=int(seed),
    )


def probe_images(count: int = 16, cell_size: int = DEFAULT_CELL_SIZE, seed: int = 1000) -> list[np.ndarray]:
    """Fixed clean scenes, used as the corruption monotonicity probe set."""
    return [generate(TaskKind.SEGMENTATION, seed + i, cell_size).input for i in range(count)]


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def psnr(pred: np.ndarray, target: np.ndarray) -> Metric:
    """Peak signal-to-noise ratio in dB against a unit dynamic range."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"psnr: shape mismatch {pred.shape} vs {target.shape}")
    mse = float(np.mean((pred - target) ** 2))
    if mse < 1e-10:
        return Metric("PSNR", PSNR_CAP_DB, True)
    return Metric("PSNR", min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB), True)


def decode_classes(image: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Nearest-palette-color (L2) class index per pixel."""
    palette = np.asarray(palette, dtype=np.float64)
    if palette.ndim != 2 or palette.shape[1] != 3 or palette.shape[0] == 0:
        raise ValueError(f"decode_classes: palette must be [K, 3] with K >= 1, got {palette.shape}")
    flat = np.asarray(image, dtype=np.float64).reshape(3, -1).T  # pixels x 3
    dists = ((flat[:, None, :] - palette[None, :, :]) ** 2).sum(axis=2)
    return dists.argmin(axis=1).reshape(image.shape[1], image.shape[2])


def miou(pred: np.ndarray, target: np.ndarray, palette: np.ndarray) -> Metric:
    """Mean IoU over the classes present in the target."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"miou: shape mismatch {pred.shape} vs {target.shape}")
    pred_cls = decode_classes(pred, palette)
    target_cls = decode_classes(target, palette)
    ious = []
    for cls in np.unique(target_cls):
        p = pred_cls == cls
        t = target_cls == cls
        union = np.logical_or(p, t).sum()
        inter = np.logical_and(p, t).sum()
        ious.append(inter / union if union > 0 else 0.0)
    return Metric("mIoU", float(np.mean(ious)), True)


def luminance(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    return 0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2]


def a_rel(pred_depth: np.ndarray, target_depth: np.ndarray) -> Metric:
    """Mean absolute relative depth error over pixels deeper than a floor."""
    p = luminance(pred_depth)
    t = luminance(target_depth)
    if p.shape != t.shape:
        raise ValueError(f"a_rel: shape mismatch {p.shape} vs {t.shape}")
    valid = t > AREL_MIN_DEPTH
    if not valid.any():
        raise ValueError("a_rel: target has no pixels above the depth floor")
    return Metric("A.Rel", float(np.mean(np.abs(p[valid] - t[valid]) / t[valid])), False)


def dump_sample(sample: TaskSample, directory: str | Path) -> None:
    """Write a sample's input and target as P6 pixmaps."""
    from .canvas import write_ppm

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"{sample.task.value}_{sample.seed}"
    write_ppm(directory / f"{stem}_input.ppm", sample.input)
    write_ppm(directory / f"{stem}_target.ppm", sample.target)
