"""Streaming mean/variance with an associative merge (Chan et al.)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class RunningMoments:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @classmethod
    def from_array(cls, xs):
        xs = np.asarray(xs, dtype=float)
        if xs.size == 0:
            return cls()
        mu = float(xs.mean())
        return cls(int(xs.size), mu, float(np.sum((xs - mu) ** 2)))

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if other.count == 0:
            return RunningMoments(self.count, self.mean, self.m2)
        if self.count == 0:
            return RunningMoments(other.count, other.mean, other.m2)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return RunningMoments(n, mean, m2)

    @property
    def variance(self):
        """Unbiased sample variance."""
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std_error(self):
        return math.sqrt(self.variance / self.count) if self.count > 0 else float("nan")


def merge_all(parts):
    """Merge moments keyed by chunk index in index order, so the result does
    not depend on arrival order."""
    out = RunningMoments()
    for _, m in sorted(parts, key=lambda kv: kv[0]):
        out = out.merge(m)
    return out
