"""Provider populations, requirement evaluation, and market simulation.

A market is perfect when every provider's participation decision matches its
compliance status.  Providers within the numerical boundary band around
sup_value = C are reported but flagged indeterminate and excluded from the
perfect-market verdict: the definitions place the boundary in exclusion, but
float noise must not flip verdicts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Literal, Optional

import numpy as np

from .betting import BettingScore, KellyConfig, run_sequential_license
from .credal import CredalSet, maximize_over_mixtures, membership, sequential_glr_value
from .evidence import Categorical, SampleStream, spawn_seeds
from .licenses import (
    MechanismParams,
    optimal_risk_averse_license,
    participation_decision,
    sup_value_over_obedient,
)

__all__ = [
    "Requirement",
    "Provider",
    "ProviderRow",
    "MarketReport",
    "evaluate_requirement",
    "simulate_market",
    "strategic_mixture_best_response",
]

#: |sup_value - C| band treated as numerically indeterminate
BOUNDARY_BAND = 1e-9

Classification = Literal["true-in", "true-out", "false-in", "false-out"]


@dataclass(frozen=True, eq=False)
class Requirement:
    """Compliance rule: either E_P[metric] > tau, or exclusion from a credal set."""

    kind: Literal["threshold", "credal"]
    metric: Optional[np.ndarray] = None
    tau: Optional[float] = None
    credal: Optional[CredalSet] = None

    def __post_init__(self) -> None:
        if self.kind == "threshold":
            if self.metric is None or self.tau is None or self.credal is not None:
                raise ValueError("threshold requirement needs metric and tau only")
            m = np.asarray(self.metric, dtype=float)
            if not np.all(np.isfinite(m)):
                raise ValueError("threshold metric must be finite")
            object.__setattr__(self, "metric", m)
        elif self.kind == "credal":
            if self.credal is None or self.metric is not None or self.tau is not None:
                raise ValueError("credal requirement needs a credal set only")
        else:
            raise ValueError(f"unknown requirement kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class Provider:
    """A market participant: an evidence distribution plus a risk attitude."""

    id: str
    q: Categorical
    attitude: Literal["risk-neutral", "risk-averse", "bettor"] = "risk-neutral"
    strategy: Optional[tuple[Categorical, ...]] = None

    def __post_init__(self) -> None:
        if self.strategy is not None and len(self.strategy) < 2:
            raise ValueError("strategic providers need at least two base models")


@dataclass(frozen=True)
class ProviderRow:
    provider_id: str
    compliant: bool
    sup_value: float
    participated: bool
    classification: Classification
    indeterminate: bool


@dataclass(frozen=True)
class MarketReport:
    rows: tuple[ProviderRow, ...]
    perfect: bool

    def counts(self) -> dict[str, int]:
        out = {"true-in": 0, "true-out": 0, "false-in": 0, "false-out": 0}
        for row in self.rows:
            out[row.classification] += 1
        return out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["provider_id", "compliant", "sup_value", "participated", "classification"])
            for r in self.rows:
                writer.writerow(
                    [r.provider_id, int(r.compliant), repr(r.sup_value), int(r.participated), r.classification]
                )

    def summary_json(self) -> dict:
        return {
            "perfect": self.perfect,
            "counts": self.counts(),
            "indeterminate": sum(r.indeterminate for r in self.rows),
        }

    def save_summary(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary_json(), indent=2) + "\n")


def evaluate_requirement(req: Requirement, q: Categorical) -> bool:
    """True iff the type complies: E_Q[h] > tau, or Q outside the credal set."""
    if req.kind == "threshold":
        return q.expectation(req.metric) > req.tau
    return not membership(q, req.credal).is_member


def _classify(compliant: bool, participated: bool) -> Classification:
    """true/false marks whether the participation decision was the right one."""
    if participated:
        return "true-in" if compliant else "false-in"
    return "false-out" if compliant else "true-out"


def _betting_sup_value(
    provider: Provider,
    req: Requirement,
    params: MechanismParams,
    n: int,
    seed: int,
    replicates: int,
    cfg: KellyConfig,
) -> float:
    score = BettingScore.from_metric(provider.q.space, req.metric, req.tau)
    seeds = spawn_seeds(seed, replicates)
    finals = []
    for s in seeds:
        stream = SampleStream(provider.q, seed=s)
        finals.append(run_sequential_license(stream, score, cfg, params, n)[-1])
    return float(np.mean(finals))


def simulate_market(
    providers: list[Provider],
    req: Requirement,
    credal: CredalSet,
    params: MechanismParams,
    mechanism: str = "optimal-LP",
    n: int = 500,
    seed: int = 0,
    betting_replicates: int = 30,
    kelly_cfg: Optional[KellyConfig] = None,
) -> MarketReport:
    """Evaluate each provider's best response, participation, and classification.

    ``mechanism`` is one of "optimal-LP", "risk-averse", or "betting"; the
    betting mechanism needs a threshold requirement (its score must be a
    per-outcome statistic) and decides participation ex ante via the Monte
    Carlo mean final license over seeded replicates.
    """
    if mechanism not in ("optimal-LP", "risk-averse", "betting"):
        raise ValueError(f"unknown mechanism {mechanism!r}")
    if mechanism == "betting" and req.kind != "threshold":
        raise ValueError("the betting mechanism needs a threshold requirement")
    cfg = kelly_cfg or KellyConfig()
    rows = []
    for provider in sorted(providers, key=lambda pr: pr.id):
        if mechanism == "optimal-LP":
            sup_value = sup_value_over_obedient(provider.q, credal, params).value
        elif mechanism == "risk-averse":
            sup_value = optimal_risk_averse_license(provider.q, credal, params).value
        else:
            sup_value = _betting_sup_value(
                provider, req, params, n=n, seed=seed, replicates=betting_replicates, cfg=cfg
            )
        compliant = evaluate_requirement(req, provider.q)
        indeterminate = abs(sup_value - params.C) <= BOUNDARY_BAND
        # Within the band the definitions put the boundary in exclusion; the
        # strict comparison would otherwise flip on float residue.
        participated = False if indeterminate else participation_decision(sup_value, params)
        rows.append(
            ProviderRow(
                provider_id=provider.id,
                compliant=compliant,
                sup_value=sup_value,
                participated=participated,
                classification=_classify(compliant, participated),
                indeterminate=indeterminate,
            )
        )
    perfect = all(r.participated == r.compliant for r in rows if not r.indeterminate)
    return MarketReport(rows=tuple(rows), perfect=perfect)


def strategic_mixture_best_response(
    base_models: list[Categorical],
    params: MechanismParams,
    value_fn: Optional[Callable[[Categorical], float]] = None,
    horizon: int = 500,
    grid_resolution: float = 0.02,
) -> tuple[np.ndarray, float]:
    """Best mixture of base models against a mechanism's value function.

    Defaults to the naive per-point sequential regulator (the gaming target of
    the simplex experiment); pass the credal mechanism's value function, e.g.
    ``lambda q: sup_value_over_obedient(q, credal, params).value``, to confirm
    that no mixture beats an obedient mechanism.
    """
    if len(base_models) < 2:
        raise ValueError("strategic mixing needs at least two base models")
    fn = value_fn or sequential_glr_value(base_models, params.C, params.R, horizon)
    return maximize_over_mixtures(base_models, fn, grid_resolution=grid_resolution)
