"""Observation-encoder tests: attention math, initialization modes, recurrence."""

import numpy as np
import pytest
import torch

from trajvae.encoder import EncoderMode, ObservationEncoder
from trajvae.errors import ConfigError
from trajvae.geometry import LocalFrame
from trajvae.semantic_map import RASTER_SIZE, RasterMap
from trajvae.windows import NeighborSet, ObservationWindow, collate

DIMS = dict(hidden_dim=16, map_feature_dim=12, key_dim=8, value_dim=10, embed_hidden=8)


def make_encoder(seed=0, **kw):
    torch.manual_seed(seed)
    return ObservationEncoder(**{**DIMS, **kw})


def neighbor_batch(rng, n, batch=1):
    rel = torch.as_tensor(rng.normal(scale=5, size=(batch, n, 4)), dtype=torch.float32)
    soc = torch.abs(torch.as_tensor(rng.normal(scale=5, size=(batch, n, 3)), dtype=torch.float32))
    mask = torch.ones((batch, n), dtype=torch.bool)
    return rel, soc, mask


def run_mlp(mlp_module, x):
    w0, b0 = mlp_module[0].weight.detach().numpy(), mlp_module[0].bias.detach().numpy()
    w1, b1 = mlp_module[2].weight.detach().numpy(), mlp_module[2].bias.detach().numpy()
    return np.tanh(x @ w0.T + b0) @ w1.T + b1


class TestMapAttention:
    def test_singleton_weight_one(self):
        enc = make_encoder()
        rng = np.random.default_rng(0)
        rel, soc, mask = neighbor_batch(rng, 1)
        m = torch.randn(1, DIMS["map_feature_dim"])
        ctx, weights = enc.map_attention(m, rel, mask)
        assert weights[0, 0].item() == pytest.approx(1.0)
        expected = enc.embed_init_value(rel * enc.feature_scale)[0, 0]
        torch.testing.assert_close(ctx[0], expected)

    def test_duplicated_neighbors_split_weight(self):
        enc = make_encoder()
        rng = np.random.default_rng(1)
        rel, _, mask = neighbor_batch(rng, 1)
        rel = rel.repeat(1, 2, 1)
        mask = torch.ones((1, 2), dtype=torch.bool)
        m = torch.randn(1, DIMS["map_feature_dim"])
        _, weights = enc.map_attention(m, rel, mask)
        np.testing.assert_allclose(weights[0].detach().numpy(), [0.5, 0.5], atol=1e-6)

    def test_matches_explicit_loop_oracle(self):
        enc = make_encoder(seed=2)
        rng = np.random.default_rng(2)
        rel, _, mask = neighbor_batch(rng, 5)
        m = torch.as_tensor(rng.normal(size=(1, DIMS["map_feature_dim"])), dtype=torch.float32)
        ctx, weights = enc.map_attention(m, rel, mask)

        # independent re-implementation with explicit python loops
        scaled = rel[0].numpy() * enc.feature_scale
        q = run_mlp(enc.embed_map_query, m[0].numpy())
        scores = []
        for j in range(5):
            k_j = run_mlp(enc.embed_init_key, scaled[j])
            scores.append(float(np.dot(q, k_j)))
        exp = np.exp(scores - np.max(scores))
        w_oracle = exp / exp.sum()
        ctx_oracle = np.zeros(DIMS["value_dim"])
        for j in range(5):
            ctx_oracle += w_oracle[j] * run_mlp(enc.embed_init_value, scaled[j])
        np.testing.assert_allclose(weights[0].detach().numpy(), w_oracle, rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(ctx[0].detach().numpy(), ctx_oracle, rtol=1e-4, atol=1e-5)


class TestSocialAttention:
    def test_empty_set_yields_zero(self):
        enc = make_encoder()
        q = torch.randn(1, DIMS["hidden_dim"])
        rel = torch.zeros(1, 1, 4)
        soc = torch.zeros(1, 1, 3)
        mask = torch.zeros(1, 1, dtype=torch.bool)
        ctx, weights = enc.social_attention(q, rel, soc, mask)
        assert torch.all(ctx == 0)
        assert torch.all(weights == 0)

    def test_permutation_invariance(self):
        enc = make_encoder(seed=3)
        rng = np.random.default_rng(3)
        rel, soc, mask = neighbor_batch(rng, 6)
        q = torch.randn(1, DIMS["hidden_dim"])
        ctx, _ = enc.social_attention(q, rel, soc, mask)
        perm = torch.randperm(6)
        ctx_p, _ = enc.social_attention(q, rel[:, perm], soc[:, perm], mask)
        torch.testing.assert_close(ctx, ctx_p, rtol=1e-6, atol=1e-6)

    def test_weights_sum_to_one(self):
        enc = make_encoder(seed=4)
        rng = np.random.default_rng(4)
        rel, soc, mask = neighbor_batch(rng, 3)
        q = torch.randn(1, DIMS["hidden_dim"])
        _, weights = enc.social_attention(q, rel, soc, mask)
        assert weights.sum().item() == pytest.approx(1.0, abs=1e-6)
        assert torch.all(weights >= 0)


class TestEncoderMode:
    def test_m_attn_requires_integrated(self):
        with pytest.raises(ConfigError):
            EncoderMode(use_s_attn=True, map_mode="indie", use_m_attn=True)
        with pytest.raises(ConfigError):
            EncoderMode(map_mode="bogus")

    def test_presets(self):
        assert EncoderMode.full().use_m_attn
        assert EncoderMode.no_map().map_mode == "none"
        assert not EncoderMode.indie().use_m_attn


class TestInitHidden:
    def test_no_neighbors_bias_only(self):
        enc = make_encoder(seed=5)
        rel = torch.zeros(1, 1, 4)
        mask = torch.zeros(1, 1, dtype=torch.bool)
        out = enc.init_hidden(None, rel, mask, EncoderMode.no_map())
        zeros = torch.zeros(1, DIMS["map_feature_dim"] + DIMS["value_dim"])
        torch.testing.assert_close(out, enc.init_proj(zeros))

    def test_integrated_differs_from_none_with_map(self):
        enc = make_encoder(seed=6)
        rng = np.random.default_rng(6)
        rel, _, mask = neighbor_batch(rng, 3)
        m = torch.as_tensor(rng.normal(size=(1, DIMS["map_feature_dim"])), dtype=torch.float32)
        a = enc.init_hidden(m, rel, mask, EncoderMode.full())
        b = enc.init_hidden(m, rel, mask, EncoderMode.integrated())
        c = enc.init_hidden(None, rel, mask, EncoderMode.no_map())
        assert not torch.allclose(a, c)
        assert not torch.allclose(b, c)

    def test_deterministic(self):
        enc = make_encoder(seed=7)
        rng = np.random.default_rng(7)
        rel, _, mask = neighbor_batch(rng, 2)
        m = torch.randn(1, DIMS["map_feature_dim"])
        a = enc.init_hidden(m, rel, mask, EncoderMode.full())
        b = enc.init_hidden(m, rel, mask, EncoderMode.full())
        torch.testing.assert_close(a, b)


class TestEncodeStep:
    def test_zero_inputs_follow_cell_bias_path(self):
        enc = make_encoder(seed=8)
        q = torch.zeros(1, DIMS["hidden_dim"])
        s = torch.zeros(1, 4)
        rel = torch.zeros(1, 1, 4)
        soc = torch.zeros(1, 1, 3)
        mask = torch.zeros(1, 1, dtype=torch.bool)
        out = enc.encode_step(q, s, rel, soc, mask, EncoderMode.no_map())
        expected = enc.cell(torch.zeros(1, 4 + DIMS["value_dim"]), q)
        torch.testing.assert_close(out, expected)

    def test_neighbor_permutation(self):
        enc = make_encoder(seed=9)
        rng = np.random.default_rng(9)
        rel, soc, mask = neighbor_batch(rng, 5)
        q = torch.randn(1, DIMS["hidden_dim"])
        s = torch.randn(1, 4)
        out = enc.encode_step(q, s, rel, soc, mask, EncoderMode.full())
        perm = torch.randperm(5)
        out_p = enc.encode_step(q, s, rel[:, perm], soc[:, perm], mask, EncoderMode.full())
        torch.testing.assert_close(out, out_p, rtol=1e-6, atol=1e-6)


def make_window(rng, T=4, n_neighbors=3, seed_raster=0.0):
    channels = np.zeros((3, RASTER_SIZE, RASTER_SIZE), np.float32)
    channels[2, 100:130, 40:200] = seed_raster
    frame = LocalFrame(origin=np.zeros(2), rotation=0.0)
    neighbors = []
    for _ in range(T):
        if n_neighbors:
            neighbors.append(NeighborSet(
                rel_states=rng.normal(scale=5, size=(n_neighbors, 4)),
                social=np.abs(rng.normal(scale=5, size=(n_neighbors, 3)))))
        else:
            neighbors.append(NeighborSet.empty())
    return ObservationWindow(
        self_states=rng.normal(size=(T, 4)), neighbors=neighbors,
        raster=RasterMap(channels=channels, frame=frame), dt=0.2,
        observed_local=rng.normal(size=(T, 2)), observed_world=rng.normal(size=(T, 2)))


class TestEncodeObservation:
    def test_fold_matches_manual_composition(self):
        enc = make_encoder(seed=10)
        rng = np.random.default_rng(10)
        window = make_window(rng, T=2)
        batch = collate([window])
        mode = EncoderMode.no_map()
        out = enc.encode(batch, None, mode)

        q = enc.init_hidden(None, batch.obs_rel[:, 0], batch.obs_mask[:, 0], mode)
        for t in range(2):
            q = enc.encode_step(q, batch.obs_self[:, t], batch.obs_rel[:, t],
                                batch.obs_social[:, t], batch.obs_mask[:, t], mode)
        torch.testing.assert_close(out, q)

    def test_batched_matches_sequential(self):
        enc = make_encoder(seed=11)
        rng = np.random.default_rng(11)
        windows = [make_window(rng, T=5) for _ in range(4)]
        mode = EncoderMode.no_map()
        batched = enc.encode(collate(windows), None, mode)
        rows = [enc.encode(collate([w]), None, mode) for w in windows]
        torch.testing.assert_close(batched, torch.cat(rows, dim=0), rtol=1e-5, atol=1e-6)

    def test_length_sweep(self):
        enc = make_encoder(seed=12)
        rng = np.random.default_rng(12)
        for t in range(2, 6):
            out = enc.encode(collate([make_window(rng, T=t)]), None, EncoderMode.no_map())
            assert out.shape == (1, DIMS["hidden_dim"])
            assert torch.isfinite(out).all()

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            make_window(np.random.default_rng(0), T=1)

    def test_mode_lattice_zero_map_no_neighbors(self):
        # with a zero map slot and no neighbors all map modes share the
        # bias-only path through the same projection weights
        enc = make_encoder(seed=13)
        rng = np.random.default_rng(13)
        window = make_window(rng, T=3, n_neighbors=0)
        batch = collate([window])
        zero_map = torch.zeros(1, DIMS["map_feature_dim"])
        outs = [
            enc.encode(batch, None, EncoderMode.no_map()),
            enc.encode(batch, None, EncoderMode.indie()),
            enc.encode(batch, zero_map, EncoderMode.integrated()),
            enc.encode(batch, zero_map, EncoderMode.full()),
        ]
        for other in outs[1:]:
            torch.testing.assert_close(outs[0], other)

    def test_attention_record_structure(self):
        enc = make_encoder(seed=14)
        rng = np.random.default_rng(14)
        window = make_window(rng, T=3, n_neighbors=2)
        batch = collate([window])
        m = torch.randn(1, DIMS["map_feature_dim"])
        _, record = enc.encode(batch, m, EncoderMode.full(), collect_attention=True)
        assert record["map"].shape == (1, 2)
        assert len(record["social"]) == 3
        for w in record["social"]:
            assert w.shape == (1, 2)
            assert w.sum() == pytest.approx(1.0, abs=1e-6)
