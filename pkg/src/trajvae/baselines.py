"""Deterministic reference predictors: constant velocity and an extended Kalman
filter with a constant-speed, constant-heading motion model."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .windows import ObservationWindow

# Artifact choices, not dictated by any data source: per-step process noise on
# speed/heading and isotropic position measurement noise.
DEFAULT_PROCESS_NOISE = 1e-2
DEFAULT_MEASUREMENT_NOISE = 1e-1
DEFAULT_INITIAL_COVARIANCE = 1.0


def _check_observed(observed) -> np.ndarray:
    p = np.asarray(observed, dtype=np.float64)
    if p.ndim != 2 or p.shape[-1] != 2 or p.shape[0] < 2:
        raise ValueError(f"need at least 2 observed positions of shape (T, 2), got {p.shape}")
    return p


def constant_velocity_predict(observed_positions, horizon: int) -> np.ndarray:
    """Continue at the velocity defined by the last two observed frames."""
    p = _check_observed(observed_positions)
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    step = p[-1] - p[-2]
    taus = np.arange(1, horizon + 1, dtype=np.float64)[:, None]
    return p[-1] + taus * step


def kalman_predict(observed_positions, dt: float, horizon: int, *,
                   process_noise: float = DEFAULT_PROCESS_NOISE,
                   measurement_noise: float = DEFAULT_MEASUREMENT_NOISE,
                   initial_covariance: float = DEFAULT_INITIAL_COVARIANCE) -> np.ndarray:
    """EKF over state (x, y, speed, heading), then an open-loop rollout.

    The filter is initialized from the first two positions (speed and heading by
    finite difference), updated with the remaining position measurements, and the
    motion model is rolled out H steps from the final filtered state.
    """
    p = _check_observed(observed_positions)
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")

    delta = p[1] - p[0]
    state = np.array([p[1, 0], p[1, 1],
                      float(np.linalg.norm(delta)) / dt,
                      math.atan2(delta[1], delta[0])])
    cov = np.eye(4) * initial_covariance
    q_mat = np.diag([0.0, 0.0, process_noise, process_noise])
    r_mat = np.eye(2) * measurement_noise
    h_mat = np.array([[1.0, 0.0, 0.0, 0.0],
                      [0.0, 1.0, 0.0, 0.0]])

    def motion(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x, y, v, psi = s
        nxt = np.array([x + v * math.cos(psi) * dt,
                        y + v * math.sin(psi) * dt, v, psi])
        jac = np.array([
            [1.0, 0.0, math.cos(psi) * dt, -v * math.sin(psi) * dt],
            [0.0, 1.0, math.sin(psi) * dt, v * math.cos(psi) * dt],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        return nxt, jac

    for t in range(2, p.shape[0]):
        state, jac = motion(state)
        cov = jac @ cov @ jac.T + q_mat
        innovation = p[t] - h_mat @ state
        s_mat = h_mat @ cov @ h_mat.T + r_mat
        gain = cov @ h_mat.T @ np.linalg.inv(s_mat)
        state = state + gain @ innovation
        cov = (np.eye(4) - gain @ h_mat) @ cov

    out = np.zeros((horizon, 2))
    for tau in range(horizon):
        state, _ = motion(state)
        out[tau] = state[:2]
    return out


class ConstantVelocityPredictor:
    """Evaluation adapter; the single deterministic rollout is replicated k times."""

    def __call__(self, window: ObservationWindow, k: int, horizon: int, seed: int) -> np.ndarray:
        pred = constant_velocity_predict(window.observed_world, horizon)
        return np.repeat(pred[None], k, axis=0)


@dataclass
class KalmanPredictor:
    process_noise: float = DEFAULT_PROCESS_NOISE
    measurement_noise: float = DEFAULT_MEASUREMENT_NOISE

    def __call__(self, window: ObservationWindow, k: int, horizon: int, seed: int) -> np.ndarray:
        pred = kalman_predict(window.observed_world, window.dt, horizon,
                              process_noise=self.process_noise,
                              measurement_noise=self.measurement_noise)
        return np.repeat(pred[None], k, axis=0)
