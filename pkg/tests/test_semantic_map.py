"""Rasterization pinning, map-feature extraction, and saliency tests."""

import math

import numpy as np
import pytest
import torch

from trajvae.geometry import LocalFrame
from trajvae.semantic_map import (ANCHOR_COL, ANCHOR_ROW, RASTER_SIZE, MapEncoder,
                                  RasterMap, VectorMap, extract_map_features,
                                  local_to_pixel, map_saliency, rasterize)

IDENTITY = LocalFrame(origin=np.zeros(2), rotation=0.0)


def divider_map(points):
    return VectorMap(road_dividers=[np.asarray(points, float)])


class TestRasterize:
    def test_anchor_pixel_pinned(self):
        # a road-divider vertex at the anchor's own position
        raster = rasterize(divider_map([(0.0, 0.0)]), IDENTITY)
        assert raster.channels[0, ANCHOR_ROW, ANCHOR_COL] == 1
        assert raster.channels[0].sum() == 1

    def test_affine_pixel_transform(self):
        # oracle: col = ANCHOR_COL + x, row = ANCHOR_ROW - y
        raster = rasterize(divider_map([(10.0, 0.0)]), IDENTITY)
        assert raster.channels[0, 122, 61] == 1
        rc = local_to_pixel(np.array([10.0, 0.0]))
        assert tuple(rc.astype(int)) == (122, 61)

    def test_full_cover_polygon(self):
        poly = np.array([[-300, -300], [300, -300], [300, 300], [-300, 300]], float)
        raster = rasterize(VectorMap(drivable_areas=[poly]), IDENTITY)
        assert raster.channels[2].min() == 1

    def test_empty_map_all_zero(self):
        raster = rasterize(VectorMap(), IDENTITY)
        assert raster.channels.sum() == 0

    def test_channel_layout(self):
        vm = VectorMap(
            road_dividers=[np.array([[-5.0, 5.0], [5.0, 5.0]])],
            lane_dividers=[np.array([[-5.0, -5.0], [5.0, -5.0]])],
            drivable_areas=[np.array([[20.0, -2.0], [24.0, -2.0], [24.0, 2.0], [20.0, 2.0]])],
            crosswalks=[np.array([[30.0, -2.0], [34.0, -2.0], [34.0, 2.0], [30.0, 2.0]])],
            lane_centerlines=[np.array([[-5.0, 0.0], [5.0, 0.0]])],
        )
        raster = rasterize(vm, IDENTITY)
        assert raster.channels[0].sum() > 0 and raster.channels[1].sum() > 0
        assert raster.channels[2].sum() > 0
        # crosswalks share channel 2 with drivable areas
        assert raster.channels[2, ANCHOR_ROW, ANCHOR_COL + 32] == 1
        # centerlines are not rasterized
        assert raster.channels[:, ANCHOR_ROW, ANCHOR_COL + 3] .sum() == 0

    def test_translation_consistency_bit_exact(self):
        vm = VectorMap(
            road_dividers=[np.array([[3.0, 7.25], [40.5, -12.0]])],
            drivable_areas=[np.array([[-10.0, -10.0], [25.0, -10.0], [25.0, 9.5], [-10.0, 9.5]])],
        )
        offset = np.array([137.5, -42.25])
        base = rasterize(vm, LocalFrame(origin=np.array([1.25, -3.5]), rotation=0.0))
        moved = rasterize(vm.transformed(offset=offset),
                          LocalFrame(origin=np.array([1.25, -3.5]) + offset, rotation=0.0))
        assert np.array_equal(base.channels, moved.channels)

    def test_rotation_consistency_iou(self):
        rng = np.random.default_rng(7)
        lines = [rng.uniform(-60, 60, size=(4, 2)) for _ in range(5)]
        vm = VectorMap(road_dividers=lines)
        frame = LocalFrame(origin=np.array([2.0, -1.0]), rotation=0.3)
        base = rasterize(vm, frame)
        angle = 0.7  # not axis-aligned
        rotated = rasterize(vm.transformed(rotation=angle),
                            LocalFrame(origin=_rot(frame.origin, angle), rotation=frame.rotation + angle))
        a = base.channels[0] > 0
        b = rotated.channels[0] > 0
        iou = (a & b).sum() / max((a | b).sum(), 1)
        assert iou >= 0.95

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            RasterMap(channels=np.zeros((3, 100, 100)), frame=IDENTITY)
        with pytest.raises(ValueError):
            RasterMap(channels=np.full((3, RASTER_SIZE, RASTER_SIZE), 2.0), frame=IDENTITY)


def _rot(p, angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * p[0] - s * p[1], s * p[0] + c * p[1]])


class TestMapEncoder:
    def make_raster(self, fill=0.0):
        return RasterMap(channels=np.full((3, RASTER_SIZE, RASTER_SIZE), fill, dtype=np.float32),
                         frame=IDENTITY)

    def test_deterministic(self):
        torch.manual_seed(0)
        enc = MapEncoder(feature_dim=32, channels=(4, 8, 8, 16))
        raster = self.make_raster(1.0)
        a = extract_map_features(raster, enc)
        b = extract_map_features(raster, enc)
        np.testing.assert_array_equal(a.vector, b.vector)

    def test_zero_vs_one_rasters_differ(self):
        torch.manual_seed(1)
        enc = MapEncoder(feature_dim=32, channels=(4, 8, 8, 16))
        zeros = extract_map_features(self.make_raster(0.0), enc)
        ones = extract_map_features(self.make_raster(1.0), enc)
        assert not np.allclose(zeros.vector, ones.vector)

    def test_feature_length(self):
        torch.manual_seed(2)
        enc = MapEncoder(feature_dim=256)
        feats = extract_map_features(self.make_raster(0.0), enc)
        assert len(feats) == 256

    def test_bad_shape_rejected(self):
        enc = MapEncoder(feature_dim=8, channels=(2, 2, 2, 2))
        with pytest.raises(ValueError):
            enc(torch.zeros(1, 1, 64, 64))


class TestSaliency:
    def test_uniform_raster_near_uniform_interior(self):
        torch.manual_seed(3)
        enc = MapEncoder(feature_dim=16, channels=(4, 8, 8, 8))
        raster = RasterMap(channels=np.full((3, RASTER_SIZE, RASTER_SIZE), 1.0, np.float32),
                           frame=IDENTITY)
        cam = map_saliency(raster, enc, lambda f: f.sum())
        interior = cam[64:-64, 64:-64]
        assert interior.std() <= 0.05 * max(interior.mean(), 1e-9) + 1e-9

    def test_zero_gradient_gives_zero_map(self):
        torch.manual_seed(4)
        enc = MapEncoder(feature_dim=16, channels=(4, 8, 8, 8))
        raster = RasterMap(channels=np.ones((3, RASTER_SIZE, RASTER_SIZE), np.float32),
                           frame=IDENTITY)
        cam = map_saliency(raster, enc, lambda f: (f * 0.0).sum(), normalize=False)
        assert np.allclose(cam, 0.0)

    def test_unsupported_encoder_rejected(self):
        raster = RasterMap(channels=np.ones((3, RASTER_SIZE, RASTER_SIZE), np.float32),
                           frame=IDENTITY)
        with pytest.raises(TypeError):
            map_saliency(raster, torch.nn.Linear(4, 4), lambda f: f.sum())

    def test_trained_toy_concentrates_on_edge(self):
        # Detection toy: the score depends on a single vertical road edge, so
        # saliency mass should concentrate within 20 px of that edge.
        torch.manual_seed(5)
        rng = np.random.default_rng(5)
        enc = MapEncoder(feature_dim=8, channels=(4, 8, 8, 8))
        head = torch.nn.Linear(8, 1)
        opt = torch.optim.Adam(list(enc.parameters()) + list(head.parameters()), lr=3e-3)

        def make_batch(n):
            x = torch.zeros(n, 3, RASTER_SIZE, RASTER_SIZE)
            y = torch.full((n, 1), -1.0)
            for i in range(n):
                if rng.uniform() < 0.5:
                    c = int(rng.integers(20, RASTER_SIZE - 20))
                    x[i, 0, :, c] = 1.0
                    y[i] = 1.0
            return x, y

        losses = []
        for _ in range(300):
            x, y = make_batch(16)
            loss = ((head(enc(x)) - y) ** 2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        assert np.mean(losses[-10:]) < 0.1  # the toy actually learned

        col = 160
        channels = np.zeros((3, RASTER_SIZE, RASTER_SIZE), np.float32)
        channels[0, :, col] = 1.0
        raster = RasterMap(channels=channels, frame=IDENTITY)
        cam = map_saliency(raster, enc, lambda f: head(f).sum())
        band = cam[:, max(col - 20, 0):col + 21].sum()
        assert band / max(cam.sum(), 1e-9) >= 0.5
