"""Finite evidence spaces, categorical distributions, divergences, and seeded sampling.

Everything downstream (credal sets, licenses, betting, markets) works over a
finite outcome space, so expectations and optimization problems stay exact.

Randomness: all sampling uses numpy's PCG64 generator seeded through
``SeedSequence``; outcome draws go through an explicit inverse-CDF lookup so
sequences are reproducible bit-for-bit at a fixed seed.  Replicate seeds are
derived with :func:`spawn_seeds`.

All types are immutable after construction except the position counter of
:class:`SampleStream`; pure operations are safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EvidenceSpace",
    "Categorical",
    "SampleStream",
    "mixture",
    "kl_divergence",
    "sample",
    "empirical_distribution",
    "spawn_seeds",
]

#: tolerance on probability-vector normalization
PROB_ATOL = 1e-12


@dataclass(frozen=True)
class EvidenceSpace:
    """An ordered finite set of outcome labels."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 1:
            raise ValueError("evidence space needs at least one outcome")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("outcome labels must be unique")

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    @staticmethod
    def of_size(m: int, prefix: str = "z") -> "EvidenceSpace":
        """Anonymous space with labels ``z0 .. z{m-1}``."""
        return EvidenceSpace(tuple(f"{prefix}{i}" for i in range(m)))


def _as_prob_vector(probs, m: int) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.shape != (m,):
        raise ValueError(f"expected {m} probabilities, got shape {p.shape}")
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    if abs(float(p.sum()) - 1.0) > PROB_ATOL:
        raise ValueError(f"probabilities must sum to 1 (got {p.sum()!r})")
    p = p.copy()
    p.flags.writeable = False
    return p


@dataclass(frozen=True, eq=False)
class Categorical:
    """A probability mass function over a finite evidence space."""

    space: EvidenceSpace
    probs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", _as_prob_vector(self.probs, self.space.size))

    def expectation(self, payoff) -> float:
        """E[payoff(Z)] for a per-outcome payoff vector."""
        g = np.asarray(payoff, dtype=float)
        if g.shape != self.probs.shape:
            raise ValueError("payoff length does not match evidence space")
        return float(self.probs @ g)

    def allclose(self, other: "Categorical", atol: float = 1e-12) -> bool:
        return self.space == other.space and bool(
            np.allclose(self.probs, other.probs, rtol=0.0, atol=atol)
        )

    @staticmethod
    def uniform(space: EvidenceSpace) -> "Categorical":
        m = space.size
        return Categorical(space, np.full(m, 1.0 / m))


def require_same_space(*dists: Categorical) -> EvidenceSpace:
    space = dists[0].space
    for d in dists[1:]:
        if d.space != space:
            raise ValueError("distributions are defined on different evidence spaces")
    return space


def mixture(dists: list[Categorical], weights) -> Categorical:
    """Convex combination sum_i w_i * dists[i] of distributions on one space."""
    if not dists:
        raise ValueError("need at least one distribution")
    space = require_same_space(*dists)
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(dists),):
        raise ValueError("one weight per distribution required")
    if np.any(w < 0) or abs(float(w.sum()) - 1.0) > PROB_ATOL:
        raise ValueError("weights must be a point on the probability simplex")
    stacked = np.stack([d.probs for d in dists])
    return Categorical(space, w @ stacked)


def kl_divergence(q: Categorical, p: Categorical) -> float:
    """KL(Q || P) in nats, with 0 * log(0/x) = 0.

    Returns ``math.inf`` (the dedicated sentinel, never an overflow) when Q
    puts mass where P has none.
    """
    require_same_space(q, p)
    qp, pp = q.probs, p.probs
    support = qp > 0.0
    if np.any(pp[support] == 0.0):
        return math.inf
    return float(np.sum(qp[support] * np.log(qp[support] / pp[support])))


@dataclass(eq=False)
class SampleStream:
    """A deterministic i.i.d. outcome stream from a categorical source.

    Identical ``(source, seed)`` pairs reproduce identical sequences.  A
    stream is single-owner sequential state: only ``position`` mutates.
    """

    source: Categorical
    seed: int
    position: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))
        cdf = np.cumsum(self.source.probs)
        cdf[-1] = 1.0  # guard the last bin against rounding
        self._cdf = cdf
        if self.position:
            self._gen.random(self.position)  # fast-forward a restored stream


def sample(stream: SampleStream, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. outcome indices and advance the stream position."""
    if n < 0:
        raise ValueError("sample count must be non-negative")
    u = stream._gen.random(n)
    outcomes = np.searchsorted(stream._cdf, u, side="right")
    stream.position += n
    return outcomes.astype(np.int64)


def empirical_distribution(samples, space: EvidenceSpace) -> Categorical:
    """Normalized outcome counts of a non-empty sample list."""
    z = np.asarray(samples, dtype=np.int64)
    if z.size == 0:
        raise ValueError("cannot build an empirical distribution from no samples")
    if np.any(z < 0) or np.any(z >= space.size):
        raise ValueError("sample contains outcomes outside the evidence space")
    counts = np.bincount(z, minlength=space.size).astype(float)
    return Categorical(space, counts / counts.sum())


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent child seeds from a master seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)]
