"""Static figures: raster previews and prediction overlays.

Plots work in raster pixel space so map and trajectories align exactly:
column = ANCHOR_COL + x_local, row = ANCHOR_ROW - y_local.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .semantic_map import ANCHOR_COL, ANCHOR_ROW, RasterMap, local_to_pixel
from .vae import PredictionSet
from .windows import FutureTruth, ObservationWindow


def raster_to_rgb(raster: RasterMap) -> np.ndarray:
    """Documented channel-color mapping: R = road dividers, G = lane dividers,
    B = drivable areas and crosswalks."""
    rgb = (np.asarray(raster.channels, dtype=np.float64) * 255).astype(np.uint8)
    return np.transpose(rgb, (1, 2, 0))


def save_raster_preview(path, raster: RasterMap, mark_anchor: bool = False) -> None:
    rgb = raster_to_rgb(raster).copy()
    if mark_anchor:
        r0, r1 = max(ANCHOR_ROW - 2, 0), ANCHOR_ROW + 3
        c0, c1 = max(ANCHOR_COL - 2, 0), ANCHOR_COL + 3
        rgb[r0:r1, ANCHOR_COL] = 255
        rgb[ANCHOR_ROW, c0:c1] = 255
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def _world_to_pixels(points_world: np.ndarray, window: ObservationWindow) -> np.ndarray:
    return local_to_pixel(window.frame.to_local(points_world))


def save_prediction_figure(path, window: ObservationWindow,
                           prediction: PredictionSet,
                           truth: FutureTruth | None = None,
                           attention: dict | None = None,
                           saliency: np.ndarray | None = None) -> None:
    """Observed (blue) / ground truth (red) / sampled predictions (orange) over
    the raster, with optional social-attention markers and a saliency overlay."""
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(raster_to_rgb(window.raster), origin="upper")
    if saliency is not None:
        ax.imshow(saliency, cmap="jet", alpha=0.35, origin="upper")

    obs = _world_to_pixels(window.observed_world, window)
    ax.plot(obs[:, 1], obs[:, 0], "-o", color="tab:blue", markersize=3, label="observed")
    for k in range(prediction.k):
        pred = _world_to_pixels(prediction.trajectories[k], window)
        ax.plot(pred[:, 1], pred[:, 0], "-", color="orange", alpha=0.8,
                label="prediction" if k == 0 else None)
    if truth is not None:
        gt = _world_to_pixels(truth.world_positions, window)
        ax.plot(gt[:, 1], gt[:, 0], "-o", color="tab:red", markersize=3, label="truth")

    if attention is not None and attention.get("social"):
        last = attention["social"][-1]
        if last is not None:
            weights = np.asarray(last)[0]
            nbrs = window.neighbors[-1]
            n = len(nbrs)
            if n:
                pix = local_to_pixel(window.observed_local[-1] + nbrs.rel_states[:, :2])
                sizes = 30 + 300 * weights[:n]
                ax.scatter(pix[:, 1], pix[:, 0], s=sizes, facecolors="none",
                           edgecolors="lime", label="attention")

    ax.set_xlim(-0.5, window.raster.channels.shape[2] - 0.5)
    ax.set_ylim(window.raster.channels.shape[1] - 0.5, -0.5)
    ax.set_xlabel("column (px)")
    ax.set_ylabel("row (px)")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
