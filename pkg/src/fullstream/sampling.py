"""Pure numeric kernels: duration marginalization, distribution-matching
reweighting, guided logit combination, and token sampling.

All functions are pure given their inputs plus an explicit numpy Generator;
no shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "JointLogits",
    "DurationDistribution",
    "WeightVector",
    "SamplerConfig",
    "GuidanceConfig",
    "marginal_duration",
    "matching_weights",
    "apply_matching",
    "sample_duration",
    "sample_semantic",
    "cfg_combine",
    "sample_acoustic",
]

DIST_SUM_TOL = 1e-9


@dataclass(frozen=True)
class JointLogits:
    """Joint duration x semantic head output as a d_bins x n_vocab matrix of raw logits."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError(f"joint logits must be a 2-D matrix, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            d, n = np.argwhere(~np.isfinite(vals))[0]
            raise ValueError(f"non-finite joint logit at (duration={d}, token={n}): {vals[d, n]}")
        object.__setattr__(self, "values", vals)

    @property
    def d_bins(self) -> int:
        return self.values.shape[0]

    @property
    def n_vocab(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_flat(cls, flat: np.ndarray, d_bins: int) -> "JointLogits":
        """Reshape a flat joint head output of width d_bins*n_vocab into a matrix."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.ndim != 1 or flat.size % d_bins != 0:
            raise ValueError(f"flat joint output of size {flat.size} not divisible by {d_bins}")
        return cls(flat.reshape(d_bins, flat.size // d_bins))


@dataclass(frozen=True)
class DurationDistribution:
    """Probability histogram over duration tokens (one bin per token)."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("duration distribution must be a non-empty vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError(f"invalid probabilities: {p}")
        if abs(float(p.sum()) - 1.0) > DIST_SUM_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, expected 1 within {DIST_SUM_TOL}")
        object.__setattr__(self, "p", p)

    @property
    def d_bins(self) -> int:
        return self.p.size

    def strictly_positive(self) -> bool:
        return bool(np.all(self.p > 0))


@dataclass(frozen=True)
class WeightVector:
    """Positive multiplicative weights over duration bins."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1 or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError(f"weights must be positive and finite, got {w}")
        object.__setattr__(self, "w", w)


@dataclass
class SamplerConfig:
    temperature: float = 0.9
    top_p: float = 0.9
    top_k: int = 5
    beta: float = 5.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


@dataclass
class GuidanceConfig:
    gamma_temp: float = 1.5
    gamma_depth: float = 3.0
    text_cfg_enabled: bool = True
    audio_cfg_enabled: bool = True
    speaker_cfg_enabled: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.gamma_temp) and np.isfinite(self.gamma_depth)):
            raise ValueError("guidance scales must be finite")

    @property
    def temporal_enabled(self) -> bool:
        return self.text_cfg_enabled or self.audio_cfg_enabled


def marginal_duration(joint: JointLogits, temperature: float) -> DurationDistribution:
    """Marginalize the joint head over the token axis into a duration distribution.

    Per duration bin d: logsumexp over tokens, scaled by 1/temperature, then
    softmax across bins.  Max-subtraction keeps both reductions stable.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    a = joint.values
    row_max = a.max(axis=1, keepdims=True)
    lse = row_max[:, 0] + np.log(np.exp(a - row_max).sum(axis=1))
    scaled = lse / temperature
    scaled -= scaled.max()
    e = np.exp(scaled)
    return DurationDistribution(e / e.sum())


def matching_weights(
    target: DurationDistribution, acc: DurationDistribution, beta: float
) -> WeightVector:
    """Per-bin reweighting factors exp(beta * (log10 target - log10 acc)).

    Both histograms must be strictly positive; zero bins signal missing
    smoothing upstream.
    """
    if target.d_bins != acc.d_bins:
        raise ValueError("histogram sizes differ")
    if not target.strictly_positive():
        raise ValueError("target histogram has a zero/negative bin; smooth it first")
    if not acc.strictly_positive():
        raise ValueError("accumulated histogram has a zero/negative bin; smooth it first")
    # Log domain, one exponentiation at the end.
    log_w = beta * (np.log10(target.p) - np.log10(acc.p))
    w = np.exp(log_w)
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError(f"weights overflowed or underflowed: {w}")
    return WeightVector(w)


def apply_matching(current: DurationDistribution, weights: WeightVector) -> DurationDistribution:
    """Elementwise reweighting of the predicted duration distribution, renormalized."""
    if current.d_bins != weights.w.size:
        raise ValueError("distribution/weight sizes differ")
    prod = current.p * weights.w
    denom = prod.sum()
    if denom <= 0 or not np.isfinite(denom):
        raise ValueError(f"reweighted mass degenerate (sum={denom!r}); cannot renormalize")
    return DurationDistribution(prod / denom)


def _nucleus_support(p: np.ndarray, top_p: float) -> np.ndarray:
    """Indices of the smallest set of highest-probability bins with mass >= top_p.

    Ties broken toward lower indices (stable descending sort).
    """
    order = np.argsort(-p, kind="stable")
    cum = np.cumsum(p[order])
    # float-safe threshold: cum may reach top_p only up to rounding
    k = int(np.searchsorted(cum, top_p - 1e-12)) + 1
    k = min(k, p.size)
    return order[:k]


def sample_duration(dist: DurationDistribution, top_p: float, rng: np.random.Generator) -> int:
    """Nucleus-sample a duration bin index."""
    if not (0 < top_p <= 1):
        raise ValueError("top_p must be in (0, 1]")
    support = _nucleus_support(dist.p, top_p)
    probs = dist.p[support]
    probs = probs / probs.sum()
    choice = rng.choice(support.size, p=probs)
    return int(support[choice])


def _top_k_indices(row: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest logits, ties broken by lowest index."""
    order = np.argsort(-row, kind="stable")
    return order[: min(k, row.size)]


def sample_semantic(
    joint: JointLogits, d: int, top_k: int, temperature: float, rng: np.random.Generator
) -> int:
    """Top-k sample a semantic token from the joint head row of the chosen duration."""
    if not (0 <= d < joint.d_bins):
        raise ValueError(f"duration index {d} out of range [0, {joint.d_bins})")
    return sample_semantic_row(joint.values[d], top_k, temperature, rng)


def sample_semantic_row(
    row: np.ndarray, top_k: int, temperature: float, rng: np.random.Generator
) -> int:
    """Top-k sample from a single logit row at the given temperature."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    row = np.asarray(row, dtype=np.float64)
    idx = _top_k_indices(row, top_k)
    if idx.size == 1:
        return int(idx[0])
    logits = row[idx] / temperature
    logits -= logits.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    choice = rng.choice(idx.size, p=probs)
    return int(idx[choice])


def cfg_combine(cond: np.ndarray, uncond: np.ndarray, gamma: float) -> np.ndarray:
    """Classifier-free-guided logits: uncond + gamma * (cond - uncond).

    gamma=1 returns cond exactly and gamma=0 returns uncond exactly, so
    guidance can be switched off without perturbing a single bit.
    """
    cond = np.asarray(cond, dtype=np.float64)
    uncond = np.asarray(uncond, dtype=np.float64)
    if cond.shape != uncond.shape:
        raise ValueError(f"logit shapes differ: {cond.shape} vs {uncond.shape}")
    if gamma == 1.0:
        return cond.copy()
    if gamma == 0.0:
        return uncond.copy()
    return uncond + gamma * (cond - uncond)


def sample_acoustic(codebook_logits: list[np.ndarray]) -> list[int]:
    """Greedy per-codebook token choice; ties broken by lowest index."""
    tokens = []
    for i, logits in enumerate(codebook_logits):
        logits = np.asarray(logits, dtype=np.float64)
        if logits.size == 0:
            raise ValueError(f"codebook {i} has an empty logit vector")
        tokens.append(int(np.argmax(logits)))
    return tokens


def smooth(p: np.ndarray, epsilon: float) -> np.ndarray:
    """Additive smoothing then renormalization; every bin ends >= eps/(1 + d*eps)."""
    p = np.asarray(p, dtype=np.float64)
    return (p + epsilon) / (p.sum() + p.size * epsilon)


def uniform(d_bins: int = 6) -> DurationDistribution:
    return DurationDistribution(np.full(d_bins, 1.0 / d_bins))
