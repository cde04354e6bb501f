"""Sequential testing-by-betting licenses and Kelly bet selection.

The wealth process starts at the entry fee and multiplies by 1 + lambda * b(z)
each round, where b(z) = h(z) - tau is the betting score and lambda is chosen
by the provider.  Under any null distribution with E[b] <= 0 and predictable
bets the process is a supermartingale, so the issued license min{wealth, R}
cannot recover the fee in expectation; under a compliant distribution the
Kelly-optimal bet grows wealth exponentially to the cap.

Wealth is tracked in log space and the cap applies only at license issuance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .evidence import Categorical, EvidenceSpace, SampleStream, sample
from .licenses import MechanismParams

__all__ = [
    "BettingScore",
    "KellyConfig",
    "WealthProcess",
    "step",
    "kelly_optimal_bet",
    "adaptive_bet",
    "run_sequential_license",
    "verify_supermartingale",
    "write_trajectory_csv",
]


@dataclass(frozen=True, eq=False)
class BettingScore:
    """Per-outcome betting score b(z) = h(z) - tau for a threshold metric h."""

    space: EvidenceSpace
    score: np.ndarray
    tau: float = 0.0

    def __post_init__(self) -> None:
        s = np.asarray(self.score, dtype=float)
        if s.shape != (self.space.size,):
            raise ValueError("score length does not match the evidence space")
        if not np.all(np.isfinite(s)):
            raise ValueError("betting scores must be finite")
        s = s.copy()
        s.flags.writeable = False
        object.__setattr__(self, "score", s)

    @staticmethod
    def from_metric(space: EvidenceSpace, metric, tau: float) -> "BettingScore":
        h = np.asarray(metric, dtype=float)
        return BettingScore(space, h - tau, tau=tau)


@dataclass(frozen=True)
class KellyConfig:
    """Bet admissibility and optimizer knobs.

    The ceiling rule guarantees 1 + lambda * b(z) >= margin for every outcome,
    keeping log-wealth finite; scores with no losing outcome get the finite
    default ceiling.  Laplace (add-one) smoothing tempers plug-in bets early.
    """

    margin: float = 0.01
    lambda_default_max: float = 10.0
    newton_tol: float = 1e-12
    max_iter: int = 200
    grid_fallback: int = 20001

    def __post_init__(self) -> None:
        if self.margin <= 0.0:
            raise ValueError("admissibility margin must be positive")

    def ceiling(self, score: np.ndarray) -> float:
        worst = float(np.min(score))
        if worst >= 0.0:
            return self.lambda_default_max
        return min(self.lambda_default_max, (1.0 - self.margin) / (-worst))


@dataclass(frozen=True)
class WealthProcess:
    """Sequential betting state: log wealth, cap, and bet history."""

    log_wealth: float
    cap: float
    n: int = 0
    history: tuple[tuple[float, int], ...] = ()

    @staticmethod
    def start(params: MechanismParams) -> "WealthProcess":
        return WealthProcess(log_wealth=math.log(params.C), cap=params.R)

    @property
    def wealth(self) -> float:
        return math.exp(self.log_wealth)

    @property
    def license_value(self) -> float:
        return min(self.wealth, self.cap)


def step(process: WealthProcess, b: BettingScore, lam: float, z: int) -> WealthProcess:
    """Apply one bet: wealth *= 1 + lam * b(z).

    ``lam`` must keep wealth positive on every outcome, not just the realized
    one; inadmissible bets are rejected before the state changes.
    """
    if lam < 0.0:
        raise ValueError("bets are long-only: lambda must be non-negative")
    if 1.0 + lam * float(np.min(b.score)) <= 0.0:
        raise ValueError("inadmissible bet: wealth could hit zero on some outcome")
    factor = 1.0 + lam * float(b.score[z])
    return replace(
        process,
        log_wealth=process.log_wealth + math.log(factor),
        n=process.n + 1,
        history=process.history + ((lam, int(z)),),
    )


def kelly_optimal_bet(dist: Categorical, b: BettingScore, cfg: KellyConfig,
                      init: Optional[float] = None) -> float:
    """argmax over [0, B] of E_dist[ln(1 + lambda * b(Z))].

    The objective is concave, so a safeguarded Newton iteration on its
    derivative converges fast; a dense grid pass backs it up if the iteration
    stalls.  A non-positive edge (E[b] <= 0) means no profitable bet.
    ``init`` is an optional warm-start guess; it changes only the iteration
    path, never the answer.
    """
    if dist.space != b.space:
        raise ValueError("distribution and score live on different spaces")
    probs, score = dist.probs, b.score
    edge = float(probs @ score)
    if edge <= 0.0:
        return 0.0
    ceiling = cfg.ceiling(score)

    def fprime(lam: float) -> float:
        return float(probs @ (score / (1.0 + lam * score)))

    if fprime(ceiling) >= 0.0:
        return ceiling  # objective still increasing at the ceiling

    lo, hi = 0.0, ceiling  # f'(lo) > 0 > f'(hi): bracket the root
    lam = min(edge / float(probs @ score**2), ceiling)  # small-lambda approximation
    if init is not None and 0.0 < init < ceiling:
        lam = init
    for _ in range(cfg.max_iter):
        d1 = fprime(lam)
        if abs(d1) <= cfg.newton_tol:
            return lam
        if d1 > 0:
            lo = lam
        else:
            hi = lam
        d2 = float(probs @ (-(score**2) / (1.0 + lam * score) ** 2))
        lam_next = lam - d1 / d2
        if not (lo < lam_next < hi):
            lam_next = 0.5 * (lo + hi)
        if abs(lam_next - lam) <= cfg.newton_tol * max(1.0, lam):
            return lam_next
        lam = lam_next
    # Bisection stalled inside tolerance of the bracket; fall back to a grid.
    grid = np.linspace(0.0, ceiling, cfg.grid_fallback)
    values = np.log1p(np.outer(grid, score)) @ probs
    return float(grid[int(np.argmax(values))])


def _smoothed_counts(counts: np.ndarray, space: EvidenceSpace) -> Categorical:
    c = counts.astype(float) + 1.0  # Laplace mass keeps early bets off the ceiling
    return Categorical(space, c / c.sum())


def adaptive_bet(history, b: BettingScore, cfg: KellyConfig) -> float:
    """Plug-in Kelly bet from the add-one-smoothed empirical distribution."""
    hist = np.asarray(history, dtype=np.int64)
    if hist.size == 0:
        return 0.0
    counts = np.bincount(hist, minlength=b.space.size)
    return kelly_optimal_bet(_smoothed_counts(counts, b.space), b, cfg)


def run_sequential_license(
    stream: SampleStream,
    b: BettingScore,
    cfg: KellyConfig,
    params: MechanismParams,
    n: int,
) -> np.ndarray:
    """Adaptive betting for n rounds; returns the per-step license values."""
    if n < 1:
        raise ValueError("need at least one betting round")
    outcomes = sample(stream, n)
    counts = np.zeros(b.space.size, dtype=np.int64)
    log_wealth = math.log(params.C)
    log_cap = math.log(params.R)
    values = np.empty(n)
    cache: dict[bytes, float] = {}
    for t, z in enumerate(outcomes):
        key = counts.tobytes()
        lam = cache.get(key)
        if lam is None:
            if counts.sum() == 0:
                lam = 0.0
            else:
                lam = kelly_optimal_bet(_smoothed_counts(counts, b.space), b, cfg)
            cache[key] = lam
        log_wealth += math.log1p(lam * float(b.score[z]))
        counts[z] += 1
        values[t] = params.R if log_wealth >= log_cap else math.exp(log_wealth)
    return values


def verify_supermartingale(
    null_dist: Categorical,
    b: BettingScore,
    cfg: KellyConfig,
    runs: int,
    n: int,
    seed: int,
    params: Optional[MechanismParams] = None,
) -> tuple[float, float]:
    """Monte Carlo check of E_P[final wealth] <= C under a null with E[b] <= 0.

    Simulates ``runs`` independent adaptive-bet trajectories (no cap applied:
    this diagnostic watches raw wealth) and returns the mean and standard
    error of the final wealth.  Obedience holds when mean <= C + 3 * SE.

    Bets are the same plug-in Kelly rule as :func:`adaptive_bet`; since the
    rule depends on history only through outcome counts, identical counts are
    solved once and shared across trajectories.
    """
    if null_dist.space != b.space:
        raise ValueError("distribution and score live on different spaces")
    edge = float(null_dist.probs @ b.score)
    if edge > 0.0:
        raise ValueError("verify_supermartingale needs a null with E[b] <= 0")
    params = params or MechanismParams(C=15.0, R=250.0)
    m = b.space.size
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    cdf = np.cumsum(null_dist.probs)
    cdf[-1] = 1.0
    counts = np.zeros((runs, m), dtype=np.int64)
    log_wealth = np.full(runs, math.log(params.C))
    cache: dict[bytes, float] = {np.zeros(m, dtype=np.int64).tobytes(): 0.0}
    for _ in range(n):
        z = np.searchsorted(cdf, rng.random(runs), side="right")
        uniq, inverse = np.unique(counts, axis=0, return_inverse=True)
        lams = np.empty(uniq.shape[0])
        for i, row in enumerate(uniq):
            key = row.tobytes()
            lam = cache.get(key)
            if lam is None:
                lam = kelly_optimal_bet(_smoothed_counts(row, b.space), b, cfg)
                cache[key] = lam
            lams[i] = lam
        lam_per_run = lams[inverse]
        log_wealth += np.log1p(lam_per_run * b.score[z])
        counts[np.arange(runs), z] += 1
    wealth = np.exp(log_wealth)
    mean = float(wealth.mean())
    se = float(wealth.std(ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0
    return mean, se


def write_trajectory_csv(
    path: str | Path,
    b: BettingScore,
    cfg: KellyConfig,
    params: MechanismParams,
    stream: SampleStream,
    n: int,
    header_comment: str = "",
) -> None:
    """Run one adaptive trajectory and dump step, lambda, outcome, wealth, license_value."""
    outcomes = sample(stream, n)
    counts = np.zeros(b.space.size, dtype=np.int64)
    log_wealth = math.log(params.C)
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["step", "lambda", "outcome", "wealth", "license_value"])
        for t, z in enumerate(outcomes, start=1):
            if counts.sum() == 0:
                lam = 0.0
            else:
                lam = kelly_optimal_bet(_smoothed_counts(counts, b.space), b, cfg)
            log_wealth += math.log1p(lam * float(b.score[z]))
            counts[z] += 1
            wealth = math.exp(log_wealth)
            writer.writerow([t, repr(lam), int(z), repr(wealth), repr(min(wealth, params.R))])
