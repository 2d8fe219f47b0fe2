"""Recurrent observation encoding with map- and neighbor-attention pooling.

The encoder folds a gated recurrent cell over the T observed frames. Its hidden
state is initialized from the map feature vector together with a pooled view of
the first-frame neighbors; per-step neighbor context comes from an attention
mechanism keyed on social features (or a plain sum when attention is disabled).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigError
from .windows import NeighborSet, WindowBatch, as_neighbor_set

MAP_MODES = ("none", "indie", "integrated")


@dataclass(frozen=True)
class EncoderMode:
    """Ablation switches for the observation encoder.

    ``map_mode`` selects how map features enter the model: not at all (``none``),
    concatenated to the encoder output (``indie``), or injected into the initial
    hidden state (``integrated``). Map attention requires integrated maps.
    """

    use_s_attn: bool = True
    map_mode: str = "integrated"
    use_m_attn: bool = True

    def __post_init__(self):
        if self.map_mode not in MAP_MODES:
            raise ConfigError(f"map_mode must be one of {MAP_MODES}, got {self.map_mode!r}")
        if self.use_m_attn and self.map_mode != "integrated":
            raise ConfigError("map attention requires map_mode='integrated'")

    @property
    def uses_map(self) -> bool:
        return self.map_mode != "none"

    @classmethod
    def no_map(cls) -> "EncoderMode":
        return cls(use_s_attn=True, map_mode="none", use_m_attn=False)

    @classmethod
    def indie(cls) -> "EncoderMode":
        return cls(use_s_attn=True, map_mode="indie", use_m_attn=False)

    @classmethod
    def integrated(cls) -> "EncoderMode":
        return cls(use_s_attn=True, map_mode="integrated", use_m_attn=False)

    @classmethod
    def full(cls) -> "EncoderMode":
        return cls(use_s_attn=True, map_mode="integrated", use_m_attn=True)

    def tag(self) -> str:
        parts = ["s_attn" if self.use_s_attn else "sum", self.map_mode]
        if self.use_m_attn:
            parts.append("m_attn")
        return "+".join(parts)


def mlp(in_dim: int, hidden: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(in_dim, hidden), nn.Tanh(), nn.Linear(hidden, out_dim))


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Row-wise softmax over valid entries; fully masked rows yield zero weights."""
    filled = scores.masked_fill(~mask, -1e9)
    weights = torch.softmax(filled, dim=-1)
    return weights * mask.to(weights.dtype)


class ObservationEncoder(nn.Module):
    """Fold of a gated recurrent cell over localized observation frames.

    Self states enter the cell raw (scaled); neighbor context is an attention-
    or sum-pooled embedding of relative neighbor states. Separate embedding
    networks serve the first-frame (map attention) and per-step (social
    attention) pooling paths.
    """

    def __init__(self, hidden_dim: int = 256, map_feature_dim: int = 256,
                 key_dim: int = 64, value_dim: int = 128, embed_hidden: int = 64,
                 feature_scale: float = 0.1, scaled_attention: bool = False):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.map_feature_dim = map_feature_dim
        self.key_dim = key_dim
        self.value_dim = value_dim
        self.feature_scale = feature_scale
        self.scaled_attention = scaled_attention

        # first-frame (initialization) path
        self.embed_map_query = mlp(map_feature_dim, embed_hidden, key_dim)
        self.embed_init_key = mlp(4, embed_hidden, key_dim)
        self.embed_init_value = mlp(4, embed_hidden, value_dim)
        # per-step path
        self.embed_state_query = mlp(hidden_dim, embed_hidden, key_dim)
        self.embed_social_key = mlp(3, embed_hidden, key_dim)
        self.embed_value = mlp(4, embed_hidden, value_dim)

        # the map slot of the init projection is zeroed when maps are not integrated
        self.init_proj = nn.Linear(map_feature_dim + value_dim, hidden_dim)
        self.cell = nn.GRUCell(4 + value_dim, hidden_dim)

    def _scale_social(self, social: torch.Tensor) -> torch.Tensor:
        scale = social.new_tensor([self.feature_scale, 1.0, self.feature_scale])
        return social * scale

    def _attend(self, query_emb: torch.Tensor, key_emb: torch.Tensor,
                value_emb: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        scores = torch.einsum("bnk,bk->bn", key_emb, query_emb)
        if self.scaled_attention:
            scores = scores / math.sqrt(self.key_dim)
        weights = masked_softmax(scores, mask)
        context = torch.einsum("bn,bnv->bv", weights, value_emb)
        return context, weights

    def map_attention(self, map_features: torch.Tensor, rel: torch.Tensor,
                      mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Attention over first-frame neighbors with the map features as query.

        Returns the pooled context (B, value_dim) and the weights (B, N); an
        empty neighbor set yields a zero context.
        """
        query = self.embed_map_query(map_features)
        keys = self.embed_init_key(rel * self.feature_scale)
        values = self.embed_init_value(rel * self.feature_scale)
        return self._attend(query, keys, values, mask)

    def social_attention(self, hidden: torch.Tensor, rel: torch.Tensor,
                         social: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Attention over one frame's neighbors, keyed by social features and
        queried by the current hidden state."""
        query = self.embed_state_query(hidden)
        keys = self.embed_social_key(self._scale_social(social))
        values = self.embed_value(rel * self.feature_scale)
        return self._attend(query, keys, values, mask)

    def _init_pool(self, rel: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        values = self.embed_init_value(rel * self.feature_scale)
        return (values * mask.unsqueeze(-1).to(values.dtype)).sum(dim=1)

    def step_pool(self, rel: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        values = self.embed_value(rel * self.feature_scale)
        return (values * mask.unsqueeze(-1).to(values.dtype)).sum(dim=1)

    def init_hidden(self, map_features: torch.Tensor | None, rel: torch.Tensor,
                    mask: torch.Tensor, mode: EncoderMode,
                    collect: dict | None = None) -> torch.Tensor:
        """Initial hidden state from the map features and first-frame neighbors."""
        b = rel.shape[0]
        if mode.map_mode == "integrated":
            if map_features is None:
                raise ValueError("integrated map mode needs map features")
            if mode.use_m_attn:
                context, weights = self.map_attention(map_features, rel, mask)
                if collect is not None:
                    collect["map"] = weights.detach().cpu().numpy()
            else:
                context = self._init_pool(rel, mask)
            map_slot = map_features
        else:
            context = self._init_pool(rel, mask)
            map_slot = rel.new_zeros((b, self.map_feature_dim))
        return self.init_proj(torch.cat([map_slot, context], dim=-1))

    def step_context(self, hidden: torch.Tensor, rel: torch.Tensor, social: torch.Tensor,
                     mask: torch.Tensor, mode: EncoderMode,
                     collect: list | None = None) -> torch.Tensor:
        if mode.use_s_attn:
            context, weights = self.social_attention(hidden, rel, social, mask)
            if collect is not None:
                collect.append(weights.detach().cpu().numpy())
        else:
            context = self.step_pool(rel, mask)
            if collect is not None:
                collect.append(None)
        return context

    def encode_step(self, hidden: torch.Tensor, self_state: torch.Tensor,
                    rel: torch.Tensor, social: torch.Tensor, mask: torch.Tensor,
                    mode: EncoderMode, collect: list | None = None) -> torch.Tensor:
        """One recurrent update: hidden' = g(concat(self state, neighbor context), hidden)."""
        context = self.step_context(hidden, rel, social, mask, mode, collect)
        x = torch.cat([self_state * self.feature_scale, context], dim=-1)
        return self.cell(x, hidden)

    def encode(self, batch: WindowBatch, map_features: torch.Tensor | None,
               mode: EncoderMode, collect_attention: bool = False):
        """Fold over all T frames starting from the initialized hidden state.

        Returns the final hidden state (B, hidden_dim) and, when requested, a
        record dict {"map": (B, N) weights or None, "social": [T x ((B, N) or None)]}.
        """
        if batch.T < 2:
            raise ValueError(f"need at least 2 observed frames, got {batch.T}")
        record: dict | None = {"map": None, "social": []} if collect_attention else None
        social_rec = record["social"] if record is not None else None
        hidden = self.init_hidden(map_features, batch.obs_rel[:, 0], batch.obs_mask[:, 0],
                                  mode, collect=record)
        for t in range(batch.T):
            hidden = self.encode_step(hidden, batch.obs_self[:, t], batch.obs_rel[:, t],
                                      batch.obs_social[:, t], batch.obs_mask[:, t],
                                      mode, collect=social_rec)
        if collect_attention:
            return hidden, record
        return hidden


def neighbor_tensors(neighbors, dtype=torch.float32, device=None):
    """NeighborSet (or views) -> single-row (1, N, ...) tensors plus mask."""
    ns = as_neighbor_set(neighbors)
    n = max(len(ns), 1)
    rel = torch.zeros((1, n, 4), dtype=dtype, device=device)
    soc = torch.zeros((1, n, 3), dtype=dtype, device=device)
    mask = torch.zeros((1, n), dtype=torch.bool, device=device)
    if len(ns):
        rel[0, : len(ns)] = torch.as_tensor(ns.rel_states, dtype=dtype)
        soc[0, : len(ns)] = torch.as_tensor(ns.social, dtype=dtype)
        mask[0, : len(ns)] = True
    return rel, soc, mask
