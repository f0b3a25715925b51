"""Depth-image degradation and normalization pipeline.

Rendered depth is too clean to transfer to a real sensor, so training
images are degraded in seven stages: clip, contour dropout, crop, artifact
rectangles, Gaussian blur, bilinear downsample, normalize. Deploy mode
skips the contour and artifact stages (the real sensor already has them).

All stages take meters in and, until normalization, produce meters out.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .tensor_core import Rng

RAW_WIDTH, RAW_HEIGHT = 160, 120
OUT_WIDTH, OUT_HEIGHT = 87, 58


@dataclass
class PipelineConfig:
    clip_min: float = 0.15
    clip_max: float = 3.0
    contour_grad_threshold: float = 1.0
    contour_drop_prob: float = 0.1
    crop_left: int = 20
    crop_right: int = 5
    crop_bottom: int = 16
    crop_top: int = 0
    artifact_prob: float = 0.001
    artifact_mean: float = 3.0
    artifact_sigma: float = 3.0
    blur_kernel: int = 3
    blur_sigma_low: float = 0.1
    blur_sigma_high: float = 2.0
    blur_sigma_pinned: float | None = None  # fix the per-image sigma (reproducibility)
    target_width: int = OUT_WIDTH
    target_height: int = OUT_HEIGHT
    mode: str = "train"  # "train" | "deploy"

    def __post_init__(self):
        if self.mode not in ("train", "deploy"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.clip_min >= self.clip_max:
            raise ValueError("clip_min must be below clip_max")


def clip(img: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    return np.clip(img, cfg.clip_min, cfg.clip_max)


def contour_drop(img: np.ndarray, cfg: PipelineConfig, rng: Rng) -> np.ndarray:
    """Drop pixels on depth discontinuities to max depth.

    A pixel is a contour pixel when its forward difference in x or y
    exceeds the gradient threshold; each such pixel is independently set to
    clip_max with the configured probability.
    """
    dx = np.zeros_like(img)
    dy = np.zeros_like(img)
    dx[:, :-1] = np.abs(np.diff(img, axis=1))
    dy[:-1, :] = np.abs(np.diff(img, axis=0))
    contour = np.maximum(dx, dy) > cfg.contour_grad_threshold
    drop = rng.random(img.shape) < cfg.contour_drop_prob
    out = img.copy()
    out[contour & drop] = cfg.clip_max
    return out


def crop(img: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    h, w = img.shape
    if cfg.crop_left + cfg.crop_right >= w or cfg.crop_top + cfg.crop_bottom >= h:
        raise ValueError(f"crop margins exceed image size {w}x{h}")
    return img[cfg.crop_top: h - cfg.crop_bottom, cfg.crop_left: w - cfg.crop_right]


def add_artifacts(img: np.ndarray, cfg: PipelineConfig, rng: Rng) -> np.ndarray:
    """Paint max-depth rectangles at randomly selected centers.

    Each pixel seeds an artifact with probability artifact_prob; rectangle
    width/height are Gaussian draws clamped to >= 1 px and image bounds.
    """
    out = img.copy()
    h, w = img.shape
    mask = rng.random(img.shape) < cfg.artifact_prob
    rows, cols = np.nonzero(mask)
    for r, c in zip(rows, cols):
        aw = max(1, int(round(rng.standard_normal() * cfg.artifact_sigma + cfg.artifact_mean)))
        ah = max(1, int(round(rng.standard_normal() * cfg.artifact_sigma + cfg.artifact_mean)))
        r0, r1 = max(0, r - ah // 2), min(h, r - ah // 2 + ah)
        c0, c1 = max(0, c - aw // 2), min(w, c - aw // 2 + aw)
        out[r0:r1, c0:c1] = cfg.clip_max
    return out


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    k1 = np.exp(-coords ** 2 / (2.0 * sigma ** 2))
    k2 = np.outer(k1, k1)
    return k2 / k2.sum()


def blur(img: np.ndarray, cfg: PipelineConfig, rng: Rng | None = None) -> np.ndarray:
    """Gaussian blur with a per-image sigma drawn uniformly (or pinned);
    borders use reflect padding so a constant image stays constant."""
    if cfg.blur_sigma_pinned is not None:
        sigma = cfg.blur_sigma_pinned
    else:
        if rng is None:
            raise ValueError("blur needs an rng unless blur_sigma_pinned is set")
        sigma = float(rng.uniform(cfg.blur_sigma_low, cfg.blur_sigma_high))
    k = gaussian_kernel(cfg.blur_kernel, sigma)
    pad = cfg.blur_kernel // 2
    padded = np.pad(img, pad, mode="reflect")
    out = np.zeros_like(img)
    for i in range(cfg.blur_kernel):
        for j in range(cfg.blur_kernel):
            out += k[i, j] * padded[i:i + img.shape[0], j:j + img.shape[1]]
    return out


def resize(img: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Bilinear downsample to the target size; upscaling is rejected."""
    h, w = img.shape
    th, tw = cfg.target_height, cfg.target_width
    if th > h or tw > w:
        raise ValueError(f"refusing to upscale {w}x{h} to {tw}x{th}")
    ys = (np.arange(th) + 0.5) * h / th - 0.5
    xs = (np.arange(tw) + 0.5) * w / tw - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    tl = img[np.ix_(y0, x0)]
    tr = img[np.ix_(y0, x1)]
    bl = img[np.ix_(y1, x0)]
    br = img[np.ix_(y1, x1)]
    top = tl * (1 - wx) + tr * wx
    bot = bl * (1 - wx) + br * wx
    return top * (1 - wy) + bot * wy


def normalize(img: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Affine map [clip_min, clip_max] -> [-0.5, +0.5]."""
    eps = 1e-9
    if img.min() < cfg.clip_min - eps or img.max() > cfg.clip_max + eps:
        raise ValueError("normalize expects values inside the clip range")
    return (img - cfg.clip_min) / (cfg.clip_max - cfg.clip_min) - 0.5


def run_pipeline(img: np.ndarray, cfg: PipelineConfig, rng: Rng | None = None) -> np.ndarray:
    """Apply all stages in order; deploy mode skips contour and artifacts."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (RAW_HEIGHT, RAW_WIDTH):
        raise ValueError(f"raw input must be {RAW_WIDTH}x{RAW_HEIGHT}, got "
                         f"{img.shape[1]}x{img.shape[0]}")
    train = cfg.mode == "train"
    if train and rng is None:
        raise ValueError("train mode needs an rng")
    img = clip(img, cfg)
    if train:
        img = contour_drop(img, cfg, rng)
    img = crop(img, cfg)
    if train:
        img = add_artifacts(img, cfg, rng)
    img = blur(img, cfg, rng)
    # Blur can only interpolate within the clipped range, but guard against
    # float round-off before normalize's range check.
    img = np.clip(img, cfg.clip_min, cfg.clip_max)
    img = resize(img, cfg)
    return normalize(img, cfg)


def deploy_config(**overrides) -> PipelineConfig:
    return replace(PipelineConfig(mode="deploy"), **overrides)
