"""Stochastic-gradient training loop for the trajectory model.

The loop is reproducible: model initialization, batch shuffling, and the
reparameterization noise are all driven by the config seed, so two runs with
identical config and data produce identical loss curves.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .config import RunConfig
from .errors import NumericalError
from .vae import TrajectoryVAE
from .windows import collate


def _batches(dataset, batch_size: int, rng: np.random.Generator):
    """Shuffled minibatch index lists; windows with different (T, H) never mix."""
    groups: dict[tuple[int, int], list[int]] = {}
    for i, (window, truth) in enumerate(dataset):
        groups.setdefault((window.T, truth.H), []).append(i)
    chunks = []
    for key in sorted(groups):
        idx = np.array(groups[key])
        rng.shuffle(idx)
        chunks.extend(idx[i:i + batch_size].tolist() for i in range(0, len(idx), batch_size))
    order = rng.permutation(len(chunks))
    return [chunks[i] for i in order]


def _dump_batch(batch, path: Path) -> None:
    arrays = {
        "obs_self": batch.obs_self.numpy(), "obs_rel": batch.obs_rel.numpy(),
        "obs_social": batch.obs_social.numpy(), "obs_mask": batch.obs_mask.numpy(),
        "fut_disp": batch.fut_disp.numpy(), "fut_self": batch.fut_self.numpy(),
    }
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def train(dataset, config: RunConfig, model: TrajectoryVAE | None = None, *,
          checkpoint_dir=None, start_step: int = 0,
          log_callback=None) -> tuple[TrajectoryVAE, list[dict]]:
    """Optimize the per-step evidence bound with Adam and gradient clipping.

    Returns the trained model and a per-step log of loss/recon/KL. A non-finite
    loss aborts with a dump of the offending batch next to the checkpoints.
    """
    if not dataset:
        raise ValueError("training dataset must not be empty")
    torch.manual_seed(config.seed)
    if model is None:
        model = TrajectoryVAE(config.model_config())
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    shuffle_rng = np.random.default_rng(config.seed)
    noise_gen = torch.Generator()
    noise_gen.manual_seed(config.seed + 1)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    model.train()
    log: list[dict] = []
    step = start_step
    for epoch in range(config.epochs):
        for idx_chunk in _batches(dataset, config.batch_size, shuffle_rng):
            batch = collate([dataset[i] for i in idx_chunk])
            loss, diag = model.elbo(batch, config.beta, generator=noise_gen,
                                    latent_samples=config.latent_samples)
            if not torch.isfinite(loss):
                dump = (ckpt_dir or Path.cwd()) / "bad_batch.npz"
                _dump_batch(batch, dump)
                raise NumericalError(
                    f"non-finite loss at step {step}; offending batch dumped to {dump}")
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            optimizer.step()
            step += 1
            entry = {"step": step, "epoch": epoch, **diag}
            log.append(entry)
            if log_callback is not None:
                log_callback(entry)
        if ckpt_dir is not None:
            save_checkpoint(ckpt_dir / f"epoch{epoch:03d}.npz", model, step, config.to_dict())
            save_checkpoint(ckpt_dir / "latest.npz", model, step, config.to_dict())
    model.eval()
    return model, log


def write_log(log: list[dict], path) -> None:
    with open(path, "w") as fh:
        for entry in log:
            fh.write(json.dumps(entry) + "\n")
