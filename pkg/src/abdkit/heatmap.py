"""1D heatmap targets over slice indices: Gaussian / one-hot encoding,
decoding back to indices, and the millimeter localization error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class HeatmapRangeError(ValueError):
    pass


@dataclass(frozen=True)
class LocLabel:
    """Start/end slice indices of the abdominal region on a stated grid."""

    start_idx: int
    end_idx: int

    def __post_init__(self):
        if not (0 <= self.start_idx <= self.end_idx):
            raise HeatmapRangeError(
                f"invalid label ({self.start_idx}, {self.end_idx})")


def encode_gaussian(center: int, length: int, sigma: float = 2.0) -> np.ndarray:
    """Gaussian bump at `center`, truncated to [0, length) and renormalized."""
    if not 0 <= center < length:
        raise HeatmapRangeError(f"center {center} outside [0, {length})")
    if sigma <= 0:
        raise HeatmapRangeError(f"sigma must be > 0, got {sigma}")
    i = np.arange(length, dtype=np.float64)
    probs = np.exp(-((i - center) ** 2) / (2.0 * sigma ** 2))
    return probs / probs.sum()


def encode_onehot(center: int, length: int) -> np.ndarray:
    if not 0 <= center < length:
        raise HeatmapRangeError(f"center {center} outside [0, {length})")
    probs = np.zeros(length, dtype=np.float64)
    probs[center] = 1.0
    return probs


def decode(probs: np.ndarray, mode: str = "argmax") -> float:
    """Index of a heatmap: argmax (lowest-index tie-break) or expectation."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise HeatmapRangeError("heatmap must be a 1D vector")
    if mode == "argmax":
        return int(np.argmax(probs))
    if mode == "expectation":
        return float(np.dot(np.arange(probs.size), probs))
    raise ValueError(f"unknown decode mode {mode!r}")


def l1_error_mm(pred: float, gt: float, s_res: float, s_ori: float) -> float:
    """|pred * s_res - gt * s_ori|: physical-position L1 error in mm."""
    if s_res <= 0 or s_ori <= 0:
        raise ValueError("spacings must be positive")
    return abs(pred * s_res - gt * s_ori)


def to_original_grid(pred_idx: float, s_res: float, s_ori: float) -> int:
    """Map a resampled-grid index to the original grid by physical position."""
    return int(round(pred_idx * s_res / s_ori))
