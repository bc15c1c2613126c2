"""Histogram value codec for negative subtree values in log2(-z) space.

A target z < 0 is mapped to t = log2(-z), a Gaussian of width sigma is
centered at t, and the probability mass falling on each of m_b equal-width
bins spanning [t_min, t_max] becomes the histogram (renormalized to sum 1).
Decoding takes the expectation of -2^center under the histogram. Values
outside [-2^t_max, -2^t_min] are clamped, with a flag reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


_ERF = np.vectorize(math.erf)


def _norm_cdf(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + _ERF(x / math.sqrt(2.0)))


@dataclass(frozen=True)
class HlGaussCodec:
    t_min: float = -1.0
    t_max: float = 16.0
    num_bins: int = 18
    sigma: float = 0.75

    def __post_init__(self):
        if self.t_max <= self.t_min or self.num_bins < 1 or self.sigma <= 0:
            raise ValueError("invalid codec configuration")

    @property
    def bin_width(self) -> float:
        return (self.t_max - self.t_min) / self.num_bins

    @property
    def centers(self) -> np.ndarray:
        eta = self.bin_width
        return self.t_min + eta * (np.arange(1, self.num_bins + 1) - 0.5)

    @property
    def z_lo(self) -> float:
        return -(2.0 ** self.t_max)

    @property
    def z_hi(self) -> float:
        return -(2.0 ** self.t_min)

    def encode(self, z: float) -> tuple[np.ndarray, bool]:
        """Histogram for a negative value z; returns (probs, clamped flag)."""
        if z >= 0.0:
            raise ValueError(f"encode expects z < 0, got {z}")
        clamped = False
        if z < self.z_lo:
            z, clamped = self.z_lo, True
        elif z > self.z_hi:
            z, clamped = self.z_hi, True
        t = math.log2(-z)
        eta = self.bin_width
        cs = self.centers
        p = _norm_cdf((cs + eta / 2.0 - t) / self.sigma) - _norm_cdf((cs - eta / 2.0 - t) / self.sigma)
        total = p.sum()
        if total <= 0.0:
            raise ValueError("no probability mass on the bin range")
        return p / total, clamped

    def decode(self, probs: np.ndarray) -> float:
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (self.num_bins,):
            raise ValueError(f"expected {self.num_bins} probabilities, got shape {probs.shape}")
        if np.any(probs < -1e-12) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("decode expects a normalized histogram")
        return float(np.sum(probs * -(2.0 ** self.centers)))

    def encode_batch(self, zs) -> np.ndarray:
        return np.stack([self.encode(z)[0] for z in zs])
