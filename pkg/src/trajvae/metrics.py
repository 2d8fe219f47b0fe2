"""Displacement-error metrics over multi-modal prediction sets.

All distances are in meters. Best-of-k selects independently for the average and
final errors; nested prediction sets (prefixes of one sample list) make both
metrics non-increasing in k.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .windows import FutureTruth, ObservationWindow

Predictor = Callable[[ObservationWindow, int, int, int], np.ndarray]


def _check_shapes(predictions, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.ndim != 3 or p.shape[-1] != 2:
        raise ValueError(f"predictions must be (k, H, 2), got {p.shape}")
    if t.shape != p.shape[1:]:
        raise ValueError(f"truth shape {t.shape} does not match predictions {p.shape}")
    if p.shape[1] < 1:
        raise ValueError("need at least one horizon step")
    return p, t


def min_ade(predictions, truth) -> float:
    """Minimum over k of the mean per-step Euclidean error."""
    p, t = _check_shapes(predictions, truth)
    err = np.linalg.norm(p - t[None], axis=-1)  # (k, H)
    return float(err.mean(axis=1).min())


def min_fde(predictions, truth) -> float:
    """Minimum over k of the final-step Euclidean error."""
    p, t = _check_shapes(predictions, truth)
    err = np.linalg.norm(p[:, -1] - t[None, -1], axis=-1)
    return float(err.min())


@dataclass
class EvaluationReport:
    model_tag: str
    horizon: int
    count: int
    k_list: tuple[int, ...]
    min_ade_per_sample: dict[int, np.ndarray]
    min_fde_per_sample: dict[int, np.ndarray]
    config_echo: dict | None = None

    @property
    def min_ade(self) -> dict[int, float]:
        return {k: float(v.mean()) for k, v in self.min_ade_per_sample.items()}

    @property
    def min_fde(self) -> dict[int, float]:
        return {k: float(v.mean()) for k, v in self.min_fde_per_sample.items()}

    def to_json_dict(self) -> dict:
        return {
            "model": self.model_tag,
            "horizon": self.horizon,
            "count": self.count,
            "k_list": list(self.k_list),
            "metrics": {
                "min_ade": {str(k): v for k, v in self.min_ade.items()},
                "min_fde": {str(k): v for k, v in self.min_fde.items()},
            },
            "per_sample": {
                "min_ade": {str(k): v.tolist() for k, v in self.min_ade_per_sample.items()},
                "min_fde": {str(k): v.tolist() for k, v in self.min_fde_per_sample.items()},
            },
            "config": self.config_echo,
        }

    def to_text_table(self) -> str:
        lines = [f"model = {self.model_tag}", f"horizon = {self.horizon}",
                 f"count = {self.count}"]
        for k in self.k_list:
            lines.append(f"min_ade_k{k} = {self.min_ade[k]:.6f}")
            lines.append(f"min_fde_k{k} = {self.min_fde[k]:.6f}")
        return "\n".join(lines) + "\n"

    def save(self, json_path, text_path=None) -> None:
        with open(json_path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
        if text_path is not None:
            with open(text_path, "w") as fh:
                fh.write(self.to_text_table())


# JSON Schema for the machine-readable report document.
REPORT_SCHEMA = {
    "type": "object",
    "required": ["model", "horizon", "count", "k_list", "metrics", "per_sample"],
    "properties": {
        "model": {"type": "string"},
        "horizon": {"type": "integer", "minimum": 1},
        "count": {"type": "integer", "minimum": 0},
        "k_list": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "metrics": {
            "type": "object",
            "required": ["min_ade", "min_fde"],
            "properties": {
                "min_ade": {"type": "object", "additionalProperties": {"type": "number"}},
                "min_fde": {"type": "object", "additionalProperties": {"type": "number"}},
            },
        },
        "per_sample": {
            "type": "object",
            "required": ["min_ade", "min_fde"],
            "additionalProperties": {
                "type": "object",
                "additionalProperties": {"type": "array", "items": {"type": "number"}},
            },
        },
        "config": {"type": ["object", "null"]},
    },
}


def window_seed(seed: int, index: int) -> int:
    """Stable per-window sampling seed derived from the evaluation seed."""
    return int(np.random.SeedSequence((int(seed), int(index))).generate_state(1)[0])


def evaluate(predictor: Predictor, dataset: Sequence[tuple[ObservationWindow, FutureTruth]],
             k_list: Sequence[int], seed: int, *, horizon: int | None = None,
             model_tag: str = "model", config_echo: dict | None = None) -> EvaluationReport:
    """Score a predictor over a dataset of (window, truth) pairs.

    The predictor is asked once for max(k_list) samples per window; smaller k
    use prefixes of that sample list, so the same samples serve both metrics and
    the nested-min property holds by construction.
    """
    if not dataset:
        raise ValueError("dataset must not be empty")
    ks = tuple(sorted(set(int(k) for k in k_list)))
    if not ks or ks[0] < 1:
        raise ValueError(f"k values must be >= 1, got {k_list}")
    k_max = ks[-1]

    ade = {k: np.zeros(len(dataset)) for k in ks}
    fde = {k: np.zeros(len(dataset)) for k in ks}
    report_h = None
    for idx, (window, truth) in enumerate(dataset):
        h = horizon if horizon is not None else truth.H
        if h < 1 or h > truth.H:
            raise ValueError(f"horizon {h} not covered by ground truth of length {truth.H}")
        if report_h is None:
            report_h = h
        elif report_h != h:
            raise ValueError("all samples must share the evaluation horizon")
        preds = np.asarray(predictor(window, k_max, h, window_seed(seed, idx)), dtype=np.float64)
        if preds.shape != (k_max, h, 2):
            raise ValueError(f"predictor returned shape {preds.shape}, expected {(k_max, h, 2)}")
        world_truth = truth.world_positions[:h]
        for k in ks:
            ade[k][idx] = min_ade(preds[:k], world_truth)
            fde[k][idx] = min_fde(preds[:k], world_truth)

    return EvaluationReport(model_tag=model_tag, horizon=int(report_h), count=len(dataset),
                            k_list=ks, min_ade_per_sample=ade, min_fde_per_sample=fde,
                            config_echo=config_echo)
