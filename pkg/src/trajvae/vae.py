"""Sequential latent-variable backbone: conditional prior, backward posterior,
displacement decoder, per-step evidence-bound training objective, and
multi-modal rollout sampling.

Training maximizes, per future frame, the displacement log-likelihood minus a
weighted KL between the posterior (conditioned on a backward recurrence over
the ground-truth future) and the prior (conditioned on the forward decoder
state). The forward chain is teacher-forced with ground-truth displacements
while latents come from the posterior. At inference, latents and displacements
are drawn sequentially from the prior and output heads.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch
import torch.nn as nn

from .encoder import EncoderMode, ObservationEncoder, mlp
from .semantic_map import MapEncoder
from .windows import ObservationWindow, WindowBatch, collate

LOG_STD_MIN = -10.0
LOG_STD_MAX = 5.0
LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass
class DiagonalGaussian:
    """Mean/log-std parameterization of an axis-aligned Gaussian."""

    mean: torch.Tensor
    log_std: torch.Tensor

    def __post_init__(self):
        if self.mean.shape != self.log_std.shape:
            raise ValueError("mean and log_std must have identical shapes")

    @property
    def std(self) -> torch.Tensor:
        return torch.exp(self.log_std)

    def rsample(self, noise: torch.Tensor) -> torch.Tensor:
        """Reparameterized sample mean + std * noise for externally drawn noise."""
        return self.mean + self.std * noise

    def sample(self, generator: torch.Generator | None = None) -> torch.Tensor:
        noise = torch.randn(self.mean.shape, generator=generator,
                            dtype=self.mean.dtype, device=self.mean.device)
        return self.rsample(noise)

    def log_prob(self, x: torch.Tensor) -> torch.Tensor:
        """Log density summed over the last dimension."""
        if x.shape[-1] != self.mean.shape[-1]:
            raise ValueError("sample dimension does not match the distribution")
        z = (x - self.mean) / self.std
        return (-0.5 * z * z - self.log_std - 0.5 * LOG_TWO_PI).sum(dim=-1)


def kl_diagonal_gaussian(q: DiagonalGaussian, p: DiagonalGaussian) -> torch.Tensor:
    """Closed-form KL(q || p) summed over the last dimension (nonnegative)."""
    if q.mean.shape[-1] != p.mean.shape[-1]:
        raise ValueError("KL requires distributions of equal dimension")
    var_q = torch.exp(2.0 * q.log_std)
    var_p = torch.exp(2.0 * p.log_std)
    term = p.log_std - q.log_std + (var_q + (q.mean - p.mean) ** 2) / (2.0 * var_p) - 0.5
    return term.sum(dim=-1)


class GaussianHead(nn.Module):
    """Two-layer head emitting a clamped diagonal Gaussian."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int):
        super().__init__()
        self.body = nn.Sequential(nn.Linear(in_dim, hidden), nn.Tanh())
        self.mean = nn.Linear(hidden, out_dim)
        self.log_std = nn.Linear(hidden, out_dim)
        self.out_dim = out_dim

    def forward(self, x: torch.Tensor) -> DiagonalGaussian:
        h = self.body(x)
        return DiagonalGaussian(
            mean=self.mean(h),
            log_std=torch.clamp(self.log_std(h), LOG_STD_MIN, LOG_STD_MAX),
        )


@dataclass
class ModelConfig:
    hidden_dim: int = 256
    latent_dim: int = 32
    map_feature_dim: int = 256
    key_dim: int = 64
    value_dim: int = 128
    embed_hidden: int = 64
    zd_embed_dim: int = 64
    head_hidden: int = 64
    cnn_channels: tuple[int, ...] = (16, 32, 64, 128)
    cnn_first_kernel: int = 3
    cnn_first_stride: int = 2
    feature_scale: float = 0.1
    scaled_attention: bool = False
    mode: EncoderMode = field(default_factory=EncoderMode)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["cnn_channels"] = list(self.cnn_channels)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        data["cnn_channels"] = tuple(data.get("cnn_channels", (16, 32, 64, 128)))
        mode = data.get("mode", {})
        if isinstance(mode, dict):
            data["mode"] = EncoderMode(**mode)
        return cls(**data)


class TrajectoryVAE(nn.Module):
    """Observation encoder plus the sequential latent decoder."""

    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        cfg = config or ModelConfig()
        self.config = cfg
        self.mode = cfg.mode

        self.map_encoder = MapEncoder(
            feature_dim=cfg.map_feature_dim, channels=cfg.cnn_channels,
            first_kernel=cfg.cnn_first_kernel, first_stride=cfg.cnn_first_stride)
        self.obs_encoder = ObservationEncoder(
            hidden_dim=cfg.hidden_dim, map_feature_dim=cfg.map_feature_dim,
            key_dim=cfg.key_dim, value_dim=cfg.value_dim, embed_hidden=cfg.embed_hidden,
            feature_scale=cfg.feature_scale, scaled_attention=cfg.scaled_attention)
        self.indie_proj = nn.Linear(cfg.hidden_dim + cfg.map_feature_dim, cfg.hidden_dim)

        self.embed_zd = mlp(cfg.latent_dim + 2, cfg.embed_hidden, cfg.zd_embed_dim)
        self.forward_cell = nn.GRUCell(cfg.zd_embed_dim, cfg.hidden_dim)
        self.backward_cell = nn.GRUCell(4 + cfg.value_dim, cfg.hidden_dim)

        self.prior_head = GaussianHead(cfg.hidden_dim, cfg.head_hidden, cfg.latent_dim)
        self.posterior_head = GaussianHead(2 * cfg.hidden_dim, cfg.head_hidden, cfg.latent_dim)
        self.out_head = GaussianHead(cfg.latent_dim + cfg.hidden_dim, cfg.head_hidden, 2)

    # ---- distribution heads -------------------------------------------------

    def prior(self, h: torch.Tensor) -> DiagonalGaussian:
        """Latent prior conditioned on the forward decoder state."""
        return self.prior_head(h)

    def posterior(self, b: torch.Tensor, h: torch.Tensor) -> DiagonalGaussian:
        """Latent posterior conditioned on the backward state and decoder state."""
        return self.posterior_head(torch.cat([b, h], dim=-1))

    def decode(self, z: torch.Tensor, h: torch.Tensor) -> DiagonalGaussian:
        """Output distribution over the next 2-D displacement (meters/frame)."""
        if z.shape[-1] != self.config.latent_dim:
            raise ValueError(f"latent has dimension {z.shape[-1]}, expected {self.config.latent_dim}")
        return self.out_head(torch.cat([z, h], dim=-1))

    def decoder_step(self, h: torch.Tensor, z: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
        """Forward recurrence over the embedded (latent, displacement) pair."""
        x = self.embed_zd(torch.cat([z, d * self.config.feature_scale], dim=-1))
        return self.forward_cell(x, h)

    # ---- observation and future encoding ------------------------------------

    def observe(self, batch: WindowBatch, collect_attention: bool = False):
        """Encode the observation into the initial decoder state (one map pass)."""
        map_features = None
        if self.mode.uses_map:
            map_features = self.map_encoder(batch.raster)
        if self.mode.map_mode == "integrated":
            out = self.obs_encoder.encode(batch, map_features, self.mode, collect_attention)
        else:
            out = self.obs_encoder.encode(batch, None, self.mode, collect_attention)
        hidden, record = out if collect_attention else (out, None)
        if self.mode.map_mode == "indie":
            hidden = self.indie_proj(torch.cat([hidden, map_features], dim=-1))
        if collect_attention:
            return hidden, record
        return hidden

    def backward_encode(self, batch: WindowBatch) -> torch.Tensor:
        """Backward recurrence over the ground-truth future, newest frame first.

        Returns states (H, B, hidden_dim) where entry t conditions the posterior
        at future frame t; the recurrence starts from a zero state.
        """
        if batch.fut_self is None:
            raise ValueError("batch carries no ground-truth future frames")
        h_frames = batch.fut_self.shape[1]
        b = batch.fut_self.new_zeros((batch.size, self.config.hidden_dim))
        states: list[torch.Tensor] = [None] * h_frames  # type: ignore[list-item]
        enc = self.obs_encoder
        for t in range(h_frames - 1, -1, -1):
            context = enc.step_context(b, batch.fut_rel[:, t], batch.fut_social[:, t],
                                       batch.fut_mask[:, t], self.mode)
            x = torch.cat([batch.fut_self[:, t] * self.config.feature_scale, context], dim=-1)
            b = self.backward_cell(x, b)
            states[t] = b
        return torch.stack(states, dim=0)

    # ---- training objective --------------------------------------------------

    def elbo(self, batch: WindowBatch, kl_weight: float = 1.0, *,
             noise: torch.Tensor | None = None,
             generator: torch.Generator | None = None,
             latent_samples: int = 1) -> tuple[torch.Tensor, dict]:
        """Negative per-step evidence bound, averaged over the horizon and batch.

        ``noise`` optionally fixes the reparameterization draws with shape
        (H, B, latent_dim) (or (S, H, B, latent_dim) for several latent samples
        per step); otherwise draws come from ``generator``.
        """
        if batch.fut_disp is None:
            raise ValueError("training batch needs ground-truth futures")
        horizon = batch.H
        z_dim = self.config.latent_dim
        if noise is not None:
            if noise.shape[-3:] != (horizon, batch.size, z_dim):
                raise ValueError(f"noise must end in shape ({horizon}, {batch.size}, {z_dim})")
            noise = noise.reshape(-1, horizon, batch.size, z_dim)
            latent_samples = noise.shape[0]
        else:
            noise = torch.randn((latent_samples, horizon, batch.size, z_dim),
                                generator=generator, dtype=batch.fut_disp.dtype)

        h = self.observe(batch)
        b_states = self.backward_encode(batch)

        recon_total = h.new_zeros(batch.size)
        kl_total = h.new_zeros(batch.size)
        for t in range(horizon):
            d_true = batch.fut_disp[:, t]
            p = self.prior(h)
            q = self.posterior(b_states[t], h)
            kl_total = kl_total + kl_diagonal_gaussian(q, p)
            step_recon = h.new_zeros(batch.size)
            z = None
            for s in range(latent_samples):
                z = q.rsample(noise[s, t])
                step_recon = step_recon + self.decode(z, h).log_prob(d_true)
            recon_total = recon_total + step_recon / latent_samples
            # teacher forcing: the forward chain consumes the ground-truth
            # displacement while the latent comes from the posterior
            h = self.decoder_step(h, z, d_true)

        recon = recon_total / horizon
        kl = kl_total / horizon
        loss = -(recon - kl_weight * kl).mean()
        diagnostics = {
            "loss": float(loss.detach()),
            "recon": float(recon.mean().detach()),
            "kl": float(kl.mean().detach()),
        }
        return loss, diagnostics

    # ---- sampling --------------------------------------------------------------

    @torch.no_grad()
    def sample(self, batch: WindowBatch, k: int, horizon: int,
               generator: torch.Generator | None = None) -> dict[str, torch.Tensor]:
        """Draw k sequential rollouts per window.

        Returns local-frame displacements (B, k, H, 2) together with the
        per-step output Gaussian parameters.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        h = self.observe(batch)
        h = h.repeat_interleave(k, dim=0)
        disp, means, log_stds = [], [], []
        for _ in range(horizon):
            p = self.prior(h)
            z = p.sample(generator)
            out = self.decode(z, h)
            d = out.sample(generator)
            disp.append(d)
            means.append(out.mean)
            log_stds.append(out.log_std)
            h = self.decoder_step(h, z, d)

        def _shape(tensors):
            stacked = torch.stack(tensors, dim=1)  # (B*k, H, 2)
            return stacked.reshape(batch.size, k, horizon, 2)

        return {
            "displacements": _shape(disp),
            "out_mean": _shape(means),
            "out_log_std": _shape(log_stds),
        }


@dataclass
class PredictionSet:
    """k sampled future trajectories for one window, in world coordinates."""

    trajectories: np.ndarray     # (k, H, 2) world frame
    out_mean: np.ndarray         # (k, H, 2) displacement Gaussians, local frame
    out_log_std: np.ndarray      # (k, H, 2)
    seed: int

    def __post_init__(self):
        self.trajectories = np.asarray(self.trajectories, dtype=np.float64)
        if self.trajectories.ndim != 3 or self.trajectories.shape[0] < 1:
            raise ValueError("trajectories must be (k, H, 2) with k >= 1")
        if not np.all(np.isfinite(self.trajectories)):
            raise ValueError("trajectories must be finite")

    @property
    def k(self) -> int:
        return self.trajectories.shape[0]

    @property
    def horizon(self) -> int:
        return self.trajectories.shape[1]

    def to_payload(self) -> dict:
        return {
            "seed": self.seed,
            "k": self.k,
            "horizon": self.horizon,
            "trajectories": self.trajectories.tolist(),
            "out_mean": self.out_mean.tolist(),
            "out_log_std": self.out_log_std.tolist(),
        }


def sample_predictions(window: ObservationWindow, model: TrajectoryVAE, k: int,
                       horizon: int, seed: int) -> PredictionSet:
    """Sample k future trajectories for one window, mapped back to world frame."""
    batch = collate([window], dtype=next(model.parameters()).dtype)
    generator = torch.Generator()
    generator.manual_seed(int(seed))
    out = model.sample(batch, k, horizon, generator)
    disp = out["displacements"][0].cpu().numpy().astype(np.float64)  # (k, H, 2)
    local = window.observed_local[-1] + np.cumsum(disp, axis=1)
    world = window.frame.to_world(local.reshape(-1, 2)).reshape(k, horizon, 2)
    return PredictionSet(
        trajectories=world,
        out_mean=out["out_mean"][0].cpu().numpy(),
        out_log_std=out["out_log_std"][0].cpu().numpy(),
        seed=int(seed),
    )


class ModelPredictor:
    """Adapter exposing the model through the evaluation predictor interface."""

    def __init__(self, model: TrajectoryVAE):
        self.model = model

    def __call__(self, window: ObservationWindow, k: int, horizon: int, seed: int) -> np.ndarray:
        return sample_predictions(window, self.model, k, horizon, seed).trajectories
