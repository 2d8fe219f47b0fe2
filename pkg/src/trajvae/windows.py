"""Observation windows: the localized per-target inputs consumed by the model.

A window carries T frames of self states (velocity + acceleration) and neighbor
views, all expressed in one local frame anchored at the target's first observed
pose, plus the local raster map. Ground-truth futures carry the H displacement
frames and the future neighbor context used by the training-time backward pass.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .geometry import NeighborView
from .semantic_map import MapFeatures, RasterMap


@dataclass
class NeighborSet:
    """Per-frame neighbor arrays: relative states (N, 4) and social features (N, 3).

    Relative state columns are (dx, dy, dvx, dvy); social columns are
    (distance, bearing, min predicted distance).
    """

    rel_states: np.ndarray
    social: np.ndarray
    agent_ids: tuple[str, ...] = ()

    def __post_init__(self):
        self.rel_states = np.asarray(self.rel_states, dtype=np.float64).reshape(-1, 4)
        self.social = np.asarray(self.social, dtype=np.float64).reshape(-1, 3)
        if self.rel_states.shape[0] != self.social.shape[0]:
            raise ValueError("rel_states and social must have matching lengths")

    def __len__(self) -> int:
        return self.rel_states.shape[0]

    @classmethod
    def empty(cls) -> "NeighborSet":
        return cls(rel_states=np.zeros((0, 4)), social=np.zeros((0, 3)))

    @classmethod
    def from_views(cls, views: Sequence[NeighborView]) -> "NeighborSet":
        if not views:
            return cls.empty()
        rel = np.stack([np.concatenate([v.rel_position, v.rel_velocity]) for v in views])
        soc = np.stack([
            [v.social.distance, v.social.bearing, v.social.min_predicted_distance]
            for v in views
        ])
        return cls(rel_states=rel, social=soc, agent_ids=tuple(v.agent_id for v in views))


def as_neighbor_set(neighbors) -> NeighborSet:
    """Coerce a NeighborSet or a sequence of NeighborView into a NeighborSet."""
    if isinstance(neighbors, NeighborSet):
        return neighbors
    return NeighborSet.from_views(list(neighbors))


@dataclass
class ObservationWindow:
    """T localized observation frames for one target agent.

    ``map_features`` is an optional cache for inference paths with fixed
    parameters; training always re-extracts features from ``raster`` so
    gradients reach the map encoder.
    """

    self_states: np.ndarray            # (T, 4) velocity + acceleration, local frame
    neighbors: list[NeighborSet]       # length T
    raster: RasterMap
    dt: float
    observed_local: np.ndarray         # (T, 2) positions, local frame
    observed_world: np.ndarray         # (T, 2) positions, world frame
    scene_id: str = ""
    target_id: str = ""
    start_index: int = 0
    map_features: MapFeatures | None = None

    def __post_init__(self):
        self.self_states = np.asarray(self.self_states, dtype=np.float64)
        self.observed_local = np.asarray(self.observed_local, dtype=np.float64)
        self.observed_world = np.asarray(self.observed_world, dtype=np.float64)
        if self.self_states.ndim != 2 or self.self_states.shape[1] != 4:
            raise ValueError(f"self_states must be (T, 4), got {self.self_states.shape}")
        t = self.self_states.shape[0]
        if t < 2:
            raise ValueError(f"a window needs at least 2 frames, got {t}")
        if len(self.neighbors) != t:
            raise ValueError("neighbors must hold one set per observed frame")
        if self.observed_local.shape != (t, 2) or self.observed_world.shape != (t, 2):
            raise ValueError("observed positions must be (T, 2)")

    @property
    def T(self) -> int:
        return self.self_states.shape[0]

    @property
    def frame(self):
        return self.raster.frame


@dataclass
class FutureTruth:
    """Ground-truth future for one window: displacements plus backward context."""

    displacements: np.ndarray          # (H, 2) local frame
    self_states: np.ndarray            # (H, 4) velocity + acceleration, local frame
    neighbors: list[NeighborSet]       # length H
    world_positions: np.ndarray        # (H, 2)

    def __post_init__(self):
        self.displacements = np.asarray(self.displacements, dtype=np.float64)
        self.self_states = np.asarray(self.self_states, dtype=np.float64)
        self.world_positions = np.asarray(self.world_positions, dtype=np.float64)
        h = self.displacements.shape[0]
        if h < 1 or self.displacements.shape != (h, 2):
            raise ValueError(f"displacements must be (H, 2) with H >= 1, got {self.displacements.shape}")
        if self.self_states.shape != (h, 4) or len(self.neighbors) != h:
            raise ValueError("future self states and neighbors must cover all H frames")
        if self.world_positions.shape != (h, 2):
            raise ValueError("world_positions must be (H, 2)")

    @property
    def H(self) -> int:
        return self.displacements.shape[0]


def _pad_neighbor_frames(frames: list[list[NeighborSet]], dtype) -> tuple[torch.Tensor, ...]:
    """Stack per-window, per-frame neighbor sets into padded tensors with a mask."""
    b = len(frames)
    t = len(frames[0])
    n_max = max((len(ns) for row in frames for ns in row), default=0)
    n_max = max(n_max, 1)  # keep a usable (all-masked) slot when no neighbors exist
    rel = torch.zeros((b, t, n_max, 4), dtype=dtype)
    soc = torch.zeros((b, t, n_max, 3), dtype=dtype)
    mask = torch.zeros((b, t, n_max), dtype=torch.bool)
    for i, row in enumerate(frames):
        for j, ns in enumerate(row):
            n = len(ns)
            if n:
                rel[i, j, :n] = torch.as_tensor(ns.rel_states, dtype=dtype)
                soc[i, j, :n] = torch.as_tensor(ns.social, dtype=dtype)
                mask[i, j, :n] = True
    return rel, soc, mask


@dataclass
class WindowBatch:
    """Tensor view of same-length windows, ready for the model."""

    obs_self: torch.Tensor             # (B, T, 4)
    obs_rel: torch.Tensor              # (B, T, N, 4)
    obs_social: torch.Tensor           # (B, T, N, 3)
    obs_mask: torch.Tensor             # (B, T, N) bool
    raster: torch.Tensor               # (B, 3, S, S)
    last_local: torch.Tensor           # (B, 2)
    windows: list[ObservationWindow]
    fut_disp: torch.Tensor | None = None       # (B, H, 2)
    fut_self: torch.Tensor | None = None       # (B, H, 4)
    fut_rel: torch.Tensor | None = None        # (B, H, M, 4)
    fut_social: torch.Tensor | None = None     # (B, H, M, 3)
    fut_mask: torch.Tensor | None = None       # (B, H, M) bool

    @property
    def size(self) -> int:
        return self.obs_self.shape[0]

    @property
    def T(self) -> int:
        return self.obs_self.shape[1]

    @property
    def H(self) -> int:
        if self.fut_disp is None:
            raise ValueError("batch has no ground-truth future")
        return self.fut_disp.shape[1]


def collate(items, dtype=torch.float32) -> WindowBatch:
    """Build a WindowBatch from windows or (window, future) pairs.

    All windows must share T (and futures H); mixed lengths belong in separate
    batches since the recurrence is length-agnostic but tensors are not.
    """
    if not items:
        raise ValueError("cannot collate an empty batch")
    if isinstance(items[0], tuple):
        windows = [w for w, _ in items]
        futures = [f for _, f in items]
    else:
        windows = list(items)
        futures = None

    t = windows[0].T
    if any(w.T != t for w in windows):
        raise ValueError("all windows in a batch must share the same T")

    obs_self = torch.stack([torch.as_tensor(w.self_states, dtype=dtype) for w in windows])
    rel, soc, mask = _pad_neighbor_frames([w.neighbors for w in windows], dtype)
    raster = torch.stack([w.raster.as_tensor(dtype) for w in windows])
    last_local = torch.stack([torch.as_tensor(w.observed_local[-1], dtype=dtype) for w in windows])

    batch = WindowBatch(obs_self=obs_self, obs_rel=rel, obs_social=soc, obs_mask=mask,
                        raster=raster, last_local=last_local, windows=windows)
    if futures is not None:
        h = futures[0].H
        if any(f.H != h for f in futures):
            raise ValueError("all futures in a batch must share the same H")
        batch.fut_disp = torch.stack([torch.as_tensor(f.displacements, dtype=dtype) for f in futures])
        batch.fut_self = torch.stack([torch.as_tensor(f.self_states, dtype=dtype) for f in futures])
        frel, fsoc, fmask = _pad_neighbor_frames([f.neighbors for f in futures], dtype)
        batch.fut_rel, batch.fut_social, batch.fut_mask = frel, fsoc, fmask
    return batch
