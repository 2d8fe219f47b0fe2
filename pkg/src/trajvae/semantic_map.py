"""Local semantic map rasterization and the convolutional map feature extractor.

Raster layout (one binary channel each, 1 m/pixel, 224x224):
  channel 0 - road dividers (1 px polylines)
  channel 1 - lane dividers (1 px polylines)
  channel 2 - drivable areas and crosswalks (filled polygons)
The anchor agent sits at pixel (ANCHOR_ROW, ANCHOR_COL), 0-indexed, heading along
increasing column; +y in the local frame is decreasing row. Lane centerlines are
kept in the vector map for path generation but are not rasterized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import cv2
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DataError
from .geometry import LocalFrame

RASTER_SIZE = 224
RASTER_RESOLUTION = 1.0  # meters per pixel
# Pixel of the anchor agent in the rasterized local map, 0-indexed (row, col).
ANCHOR_ROW = 122
ANCHOR_COL = 51

_LAYERS = ("drivable_areas", "crosswalks", "lane_dividers", "road_dividers", "lane_centerlines")


def _as_coord_arrays(items, name: str) -> list[np.ndarray]:
    out = []
    for i, item in enumerate(items):
        arr = np.asarray(item, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[-1] != 2:
            raise ValueError(f"{name}[{i}] must be an (N, 2) coordinate array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name}[{i}] contains non-finite coordinates")
        out.append(arr)
    return out


@dataclass
class VectorMap:
    """Vector map geometry in world coordinates (meters).

    Polygons are treated as implicitly closed (the last vertex connects back to
    the first); polylines are open chains.
    """

    drivable_areas: list[np.ndarray] = field(default_factory=list)
    crosswalks: list[np.ndarray] = field(default_factory=list)
    lane_dividers: list[np.ndarray] = field(default_factory=list)
    road_dividers: list[np.ndarray] = field(default_factory=list)
    lane_centerlines: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        for name in _LAYERS:
            setattr(self, name, _as_coord_arrays(getattr(self, name), name))

    def transformed(self, offset=(0.0, 0.0), rotation: float = 0.0) -> "VectorMap":
        """Rigidly transformed copy: rotate about the world origin, then translate."""
        c, s = np.cos(rotation), np.sin(rotation)
        rot = np.array([[c, -s], [s, c]])
        off = np.asarray(offset, dtype=np.float64)
        return VectorMap(**{
            name: [pts @ rot.T + off for pts in getattr(self, name)] for name in _LAYERS
        })

    def to_json_dict(self) -> dict:
        return {name: [pts.tolist() for pts in getattr(self, name)] for name in _LAYERS}

    @classmethod
    def from_json_dict(cls, data: dict) -> "VectorMap":
        if not isinstance(data, dict):
            raise DataError(f"vector map must be an object, got {type(data).__name__}")
        unknown = set(data) - set(_LAYERS)
        if unknown:
            raise DataError(f"vector map has unknown layers: {sorted(unknown)}")
        try:
            return cls(**{name: data.get(name, []) for name in _LAYERS})
        except ValueError as exc:
            raise DataError(f"vector map: {exc}") from exc


@dataclass
class RasterMap:
    """Binary 3x224x224 local semantic map plus the frame it was drawn in."""

    channels: np.ndarray
    frame: LocalFrame
    resolution: float = RASTER_RESOLUTION

    def __post_init__(self):
        self.channels = np.asarray(self.channels)
        if self.channels.shape != (3, RASTER_SIZE, RASTER_SIZE):
            raise ValueError(
                f"raster must have shape (3, {RASTER_SIZE}, {RASTER_SIZE}), got {self.channels.shape}")
        cmin, cmax = self.channels.min(), self.channels.max()
        if cmin < 0 or cmax > 1:
            raise ValueError(f"raster values must lie in [0, 1], got range [{cmin}, {cmax}]")

    def as_tensor(self, dtype=torch.float32) -> torch.Tensor:
        return torch.as_tensor(self.channels, dtype=dtype)


def local_to_pixel(points_local) -> np.ndarray:
    """Local-frame meters to fractional (row, col) pixel coordinates."""
    p = np.asarray(points_local, dtype=np.float64)
    col = ANCHOR_COL + p[..., 0] / RASTER_RESOLUTION
    row = ANCHOR_ROW - p[..., 1] / RASTER_RESOLUTION
    return np.stack([row, col], axis=-1)


def _to_cv_points(points_world, frame: LocalFrame) -> np.ndarray:
    rc = local_to_pixel(frame.to_local(points_world))
    # cv2 expects (x=col, y=row) int points
    return np.rint(rc[:, ::-1]).astype(np.int32)


def _draw_polylines(layer: np.ndarray, polylines, frame: LocalFrame) -> None:
    for pts in polylines:
        cv = _to_cv_points(pts, frame)
        if len(cv) == 1:
            x, y = int(cv[0, 0]), int(cv[0, 1])
            if 0 <= y < RASTER_SIZE and 0 <= x < RASTER_SIZE:
                layer[y, x] = 1
        else:
            cv2.polylines(layer, [cv.reshape(-1, 1, 2)], False, 1, 1)


def _draw_polygons(layer: np.ndarray, polygons, frame: LocalFrame) -> None:
    for pts in polygons:
        cv = _to_cv_points(pts, frame)
        cv2.fillPoly(layer, [cv.reshape(-1, 1, 2)], 1)


def rasterize(vector_map: VectorMap, frame: LocalFrame) -> RasterMap:
    """Draw the vector map into the binary local raster anchored at ``frame``."""
    channels = np.zeros((3, RASTER_SIZE, RASTER_SIZE), dtype=np.uint8)
    _draw_polylines(channels[0], vector_map.road_dividers, frame)
    _draw_polylines(channels[1], vector_map.lane_dividers, frame)
    _draw_polygons(channels[2], vector_map.drivable_areas, frame)
    _draw_polygons(channels[2], vector_map.crosswalks, frame)
    return RasterMap(channels=channels, frame=frame)


@dataclass(frozen=True)
class MapFeatures:
    """Feature vector extracted from one local raster."""

    vector: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise ValueError("map features must be finite")
        object.__setattr__(self, "vector", arr)

    def __len__(self) -> int:
        return self.vector.shape[0]


class MapEncoder(nn.Module):
    """Small strided conv stack with global average pooling and a linear output.

    The default four stages halve the resolution each; ``first_stride``/
    ``first_kernel`` let the first stage downsample more aggressively when
    running on weak CPUs. ``last_conv`` is exposed for activation-map saliency.
    """

    def __init__(self, feature_dim: int = 256, channels: Sequence[int] = (16, 32, 64, 128),
                 first_kernel: int = 3, first_stride: int = 2):
        super().__init__()
        blocks: list[nn.Module] = []
        in_ch = 3
        for i, out_ch in enumerate(channels):
            kernel = first_kernel if i == 0 else 3
            stride = first_stride if i == 0 else 2
            conv = nn.Conv2d(in_ch, out_ch, kernel, stride, kernel // 2)
            # He init plus group normalization keep responses to sparse binary
            # rasters from decaying through the stack (the default torch gain
            # attenuates a 1 px line to ~1e-5 by the last stage)
            nn.init.kaiming_normal_(conv.weight, nonlinearity="relu")
            nn.init.zeros_(conv.bias)
            blocks.append(conv)
            blocks.append(nn.GroupNorm(math.gcd(out_ch, 8), out_ch))
            blocks.append(nn.Softplus())
            in_ch = out_ch
        self.stages = nn.Sequential(*blocks)
        self.last_conv = blocks[-3]
        # saliency hooks the normalized activations of the last stage: the
        # normalization strips the constant background that otherwise dominates
        # gradient-weighted maps of sparse rasters
        self.saliency_target = blocks[-2]
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(in_ch, feature_dim)
        self.feature_dim = feature_dim

    def forward(self, raster: torch.Tensor) -> torch.Tensor:
        if raster.dim() != 4 or raster.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) raster batch, got {tuple(raster.shape)}")
        x = self.stages(raster)
        x = self.pool(x).flatten(1)
        return self.head(x)


def extract_map_features(raster: RasterMap, encoder: MapEncoder) -> MapFeatures:
    """Run the map encoder on one raster. Deterministic given the parameters."""
    with torch.no_grad():
        dtype = next(encoder.parameters()).dtype
        feats = encoder(raster.as_tensor(dtype).unsqueeze(0))
    return MapFeatures(vector=feats.squeeze(0).cpu().numpy())


def map_saliency(raster: RasterMap, encoder: MapEncoder,
                 scalar_head: Callable[[torch.Tensor], torch.Tensor],
                 *, normalize: bool = True) -> np.ndarray:
    """Gradient-weighted activation map of the encoder's last convolutional stage.

    ``scalar_head`` maps the (1, F) feature batch to the scalar whose gradient
    drives the channel weights. The rectified map is normalized to [0, 1] (an
    all-zero map stays zero) and upsampled to the raster size.
    """
    if not isinstance(getattr(encoder, "last_conv", None), nn.Conv2d):
        raise TypeError("encoder does not expose a convolutional stage for saliency")
    target = getattr(encoder, "saliency_target", None) or encoder.last_conv

    captured: dict[str, torch.Tensor] = {}

    def hook(_module, _inputs, output):
        output.retain_grad()
        captured["acts"] = output

    handle = target.register_forward_hook(hook)
    try:
        dtype = next(encoder.parameters()).dtype
        x = raster.as_tensor(dtype).unsqueeze(0)
        feats = encoder(x)
        scalar = scalar_head(feats)
        if scalar.dim() != 0:
            scalar = scalar.sum()
        encoder.zero_grad(set_to_none=True)
        scalar.backward()
    finally:
        handle.remove()

    acts = captured["acts"].detach()[0]          # (C, h, w)
    grads = captured["acts"].grad
    grads = torch.zeros_like(acts) if grads is None else grads.detach()[0]
    weights = grads.mean(dim=(1, 2))
    cam = torch.relu((weights[:, None, None] * acts).sum(0))
    if normalize and float(cam.max()) > 0:
        cam = cam / cam.max()
    cam = F.interpolate(cam[None, None], size=(RASTER_SIZE, RASTER_SIZE),
                        mode="bilinear", align_corners=False)
    return cam[0, 0].cpu().numpy()
