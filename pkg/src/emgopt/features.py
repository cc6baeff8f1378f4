"""Time-domain descriptor features: six coefficients per channel.

The descriptor family builds three root-squared moments from the signal and
its successive differences, compresses them with a power transform and log,
and derives sparseness, an irregularity factor and waveform length. A window
of C channels maps to a 6*C feature vector (42 for the 7-channel corpus).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .data import MovementClass, Position, Window


class FusionMode(Enum):
    RAW_ONLY = "raw_only"
    NONLINEAR_FUSION = "nonlinear_fusion"


@dataclass
class FeatureConfig:
    power_lambda: float = 0.1
    epsilon: float = 1e-8
    fusion_mode: FusionMode = FusionMode.RAW_ONLY

    def __post_init__(self) -> None:
        if not (0.0 < self.power_lambda <= 1.0):
            raise ValueError(f"power_lambda must be in (0, 1], got {self.power_lambda}")
        if not (self.epsilon > 0.0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass
class FeatureVector:
    values: np.ndarray
    subject_id: int
    position: Position
    class_label: MovementClass
    trial: int
    window_index: int

    @property
    def identity(self) -> tuple:
        return (self.subject_id, self.position.value, self.class_label.value,
                self.trial, self.window_index)


def td_moments(x: np.ndarray, cfg: FeatureConfig) -> tuple[float, float, float]:
    """Power-transformed root-squared moments of order 0, 2 and 4.

    m0 uses the signal itself, m2 its first difference, m4 its second
    difference: m_k = (sqrt(sum d^2))^lambda / lambda.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 3:
        raise ValueError(f"td_moments needs a 1-D signal of length >= 3, got shape {x.shape}")
    lam = cfg.power_lambda
    d1 = np.diff(x)
    d2 = np.diff(d1)
    m0 = math_sqrt_pow(np.dot(x, x), lam)
    m2 = math_sqrt_pow(np.dot(d1, d1), lam)
    m4 = math_sqrt_pow(np.dot(d2, d2), lam)
    return m0, m2, m4


def math_sqrt_pow(sq_sum: float, lam: float) -> float:
    return float(np.sqrt(sq_sum) ** lam / lam)


def tdd_six(x: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """The six descriptor coefficients of one channel, all finite by construction."""
    x = np.asarray(x, dtype=np.float64)
    m0, m2, m4 = td_moments(x, cfg)
    eps = cfg.epsilon
    f1 = np.log(m0 + eps)
    f2 = np.log(abs(m0 - m2) + eps)
    f3 = np.log(abs(m0 - m4) + eps)
    # |.| under the sqrt keeps sparseness real when a difference moment
    # exceeds m0 (oscillatory signals).
    f4 = np.log(m0 / (np.sqrt(abs((m0 - m2) * (m0 - m4))) + eps) + eps)
    f5 = np.log(m2 / (np.sqrt(m0 * m4) + eps) + eps)
    f6 = np.log(np.sum(np.abs(np.diff(x))) + eps)
    return np.array([f1, f2, f3, f4, f5, f6], dtype=np.float64)


def _fuse(a: np.ndarray, b: np.ndarray, eps: float) -> np.ndarray:
    """Bounded similarity between descriptor vectors, in [-1, 1]."""
    return -2.0 * a * b / (a * a + b * b + eps)


def extract(window: Window, cfg: FeatureConfig | None = None) -> FeatureVector:
    """Feature vector of one window: per-channel descriptors, concatenated.

    NONLINEAR_FUSION correlates each channel's descriptors with those of a
    log-squared version of the signal instead of emitting them raw.
    """
    cfg = cfg or FeatureConfig()
    values = _extract_values(window.samples, cfg)
    return FeatureVector(values=values, subject_id=window.subject_id,
                         position=window.position, class_label=window.class_label,
                         trial=window.trial, window_index=window.window_index)


def _extract_values(samples: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    blocks = []
    for ch in range(samples.shape[0]):
        x = samples[ch]
        a = tdd_six(x, cfg)
        if cfg.fusion_mode is FusionMode.NONLINEAR_FUSION:
            b = tdd_six(np.log(x * x + cfg.epsilon), cfg)
            blocks.append(_fuse(a, b, cfg.epsilon))
        else:
            blocks.append(a)
    return np.concatenate(blocks)


def extract_batch(windows: Sequence[Window], cfg: FeatureConfig | None = None) -> list[FeatureVector]:
    """Vectorized extraction over equal-length windows (chunked to bound memory)."""
    cfg = cfg or FeatureConfig()
    if not windows:
        return []
    lengths = {w.length_samples for w in windows}
    channels = {w.samples.shape[0] for w in windows}
    if len(lengths) != 1 or len(channels) != 1:
        return [extract(w, cfg) for w in windows]
    out = []
    chunk = max(1, int(4e6 // (windows[0].samples.size or 1)))
    for lo in range(0, len(windows), chunk):
        part = windows[lo:lo + chunk]
        stack = np.stack([w.samples for w in part])  # [n, ch, L]
        values = _batch_values(stack, cfg)
        for w, v in zip(part, values):
            out.append(FeatureVector(values=v, subject_id=w.subject_id,
                                     position=w.position, class_label=w.class_label,
                                     trial=w.trial, window_index=w.window_index))
    return out


def _batch_six(x: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """tdd_six over the last axis of x [..., L] -> [..., 6]."""
    lam, eps = cfg.power_lambda, cfg.epsilon
    d1 = np.diff(x, axis=-1)
    d2 = np.diff(d1, axis=-1)
    m0 = np.sqrt(np.sum(x * x, axis=-1)) ** lam / lam
    m2 = np.sqrt(np.sum(d1 * d1, axis=-1)) ** lam / lam
    m4 = np.sqrt(np.sum(d2 * d2, axis=-1)) ** lam / lam
    f1 = np.log(m0 + eps)
    f2 = np.log(np.abs(m0 - m2) + eps)
    f3 = np.log(np.abs(m0 - m4) + eps)
    f4 = np.log(m0 / (np.sqrt(np.abs((m0 - m2) * (m0 - m4))) + eps) + eps)
    f5 = np.log(m2 / (np.sqrt(m0 * m4) + eps) + eps)
    f6 = np.log(np.sum(np.abs(d1), axis=-1) + eps)
    return np.stack([f1, f2, f3, f4, f5, f6], axis=-1)


def _batch_values(stack: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    a = _batch_six(stack, cfg)  # [n, ch, 6]
    if cfg.fusion_mode is FusionMode.NONLINEAR_FUSION:
        b = _batch_six(np.log(stack * stack + cfg.epsilon), cfg)
        a = _fuse(a, b, cfg.epsilon)
    n = stack.shape[0]
    return a.reshape(n, -1)


FEATURE_ID_HEADER = ["subject", "position", "class", "trial", "window"]


def write_feature_csv(features: Sequence[FeatureVector], path: str) -> None:
    """Identity tags + one column per feature; bit-stable for fixed inputs."""
    if not features:
        raise ValueError("no feature vectors to write")
    dim = features[0].values.size
    header = FEATURE_ID_HEADER + [f"f{i + 1:02d}" for i in range(dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for fv in features:
            if fv.values.size != dim:
                raise ValueError("inconsistent feature dimensions in batch")
            writer.writerow([fv.subject_id, fv.position.name, fv.class_label.name,
                             fv.trial, fv.window_index]
                            + [repr(float(v)) for v in fv.values])


def read_feature_csv(path: str) -> list[FeatureVector]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:5] != FEATURE_ID_HEADER:
            raise ValueError(f"{path}: not a feature CSV (bad header)")
        for row in reader:
            if not row:
                continue
            out.append(FeatureVector(
                values=np.array([float(v) for v in row[5:]], dtype=np.float64),
                subject_id=int(row[0]),
                position=Position[row[1]],
                class_label=MovementClass[row[2]],
                trial=int(row[3]),
                window_index=int(row[4]),
            ))
    return out
