"""Desk-scale experiment runners emitting deterministic CSV tables.

Four scenarios:

* ``simplex_gaming`` - a strategic mixture of three prohibited distributions
  games a naive per-point regulator while the credal regulator holds.
* ``fairness`` - demographic-parity regulation run both as an implicit
  betting license on paired subgroup draws and as an explicit cumulative
  likelihood-ratio license against the parity credal set.
* ``chi2_strategic`` - power and participation curves for a likelihood-ratio
  test of effective model dimension, at a fixed fee/cap ratio.
* ``synthetic_spurious`` - cumulative licenses for declared compliant and
  non-compliant surrogate evidence distributions against a hull of a
  spurious-feature model and a random predictor.  The surrogates stand in for
  neural-model outputs that are out of scope here; they are config defaults,
  not measured data.

Every runner is deterministic given (config, seed): rerunning writes
byte-identical CSV, and each CSV carries its config hash and seed in a
leading comment line.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .betting import BettingScore, KellyConfig, kelly_optimal_bet
from .credal import (
    MEAN_SCORE_GE,
    ConstraintCredalSpec,
    CredalSet,
    approximate_constraint_set,
)
from .evidence import Categorical, EvidenceSpace, spawn_seeds
from .licenses import MechanismParams, minimize_kappa

__all__ = [
    "ResultTable",
    "SimplexGamingConfig",
    "FairnessConfig",
    "Chi2Config",
    "SpuriousConfig",
    "run_simplex_gaming",
    "run_fairness",
    "run_chi2_strategic",
    "run_synthetic_spurious",
    "run_scenario",
    "load_config",
    "SCENARIOS",
]


def _config_hash(cfg) -> str:
    payload = json.dumps(asdict(cfg), sort_keys=True, default=list)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class ResultTable:
    """A rectangular result with provenance: scenario, seed, config hash."""

    scenario: str
    seed: int
    config_hash: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    headline: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("result table rows must match the column schema")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# scenario={self.scenario} seed={self.seed} config_hash={self.config_hash}\n")
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([row[j] for row in self.rows])


def _mean_se(x: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=axis)
    if x.shape[axis] > 1:
        se = x.std(axis=axis, ddof=1) / math.sqrt(x.shape[axis])
    else:
        se = np.zeros_like(mean)
    return mean, se


def _draw_outcomes(dist: Categorical, runs: int, n: int, seed: int) -> np.ndarray:
    """(runs, n) outcome matrix, one spawned PCG64 stream per replicate."""
    cdf = np.cumsum(dist.probs)
    cdf[-1] = 1.0
    out = np.empty((runs, n), dtype=np.int64)
    for i, s in enumerate(spawn_seeds(seed, runs)):
        gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(s)))
        out[i] = np.searchsorted(cdf, gen.random(n), side="right")
    return out


def _capped_exp(log_values: np.ndarray, cap: float) -> np.ndarray:
    return np.exp(np.minimum(log_values, math.log(cap)))


# ---------------------------------------------------------------------------
# Simplex gaming (three prohibited points vs their hull)
# ---------------------------------------------------------------------------

SIMPLEX_POINTS = (
    (0.35, 0.35, 0.30),
    (0.35, 0.30, 0.35),
    (0.30, 0.35, 0.35),
)


@dataclass(frozen=True)
class SimplexGamingConfig:
    scenario: str = "simplex_gaming"
    params: MechanismParams = MechanismParams(C=15.0, R=250.0)
    runs: int = 30
    n: int = 500
    seed: int = 7
    provider_q: Optional[tuple[float, ...]] = None  # defaults to the uniform mixture


def _empirical_loglik(z: np.ndarray, m: int) -> np.ndarray:
    """Running maximized log-likelihood sum_z k_z(t) * ln(k_z(t)/t) per run."""
    runs, n = z.shape
    onehot = np.zeros((runs, n, m))
    onehot[np.arange(runs)[:, None], np.arange(n)[None, :], z] = 1.0
    counts = onehot.cumsum(axis=1)
    t = np.arange(1, n + 1, dtype=float)[None, :, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(counts > 0, counts * np.log(np.where(counts > 0, counts / t, 1.0)), 0.0)
    return terms.sum(axis=2)


def run_simplex_gaming(cfg: SimplexGamingConfig) -> ResultTable:
    """Mean license trajectories of a naive and a credal regulator.

    The naive regulator pays the capped generalized likelihood ratio of the
    evidence against the prohibited points tested individually: the maximized
    (empirical) likelihood over the GLR's free alternative divided by the
    best-fitting single P_i, scaled by C and capped at R.  The credal
    regulator pays the cumulative truncated likelihood ratio against the
    capped-KL projection onto the hull of the same points.
    """
    space = EvidenceSpace.of_size(3)
    points = [Categorical(space, p) for p in SIMPLEX_POINTS]
    hull = CredalSet(space, tuple(points))
    q = Categorical(space, cfg.provider_q) if cfg.provider_q else Categorical(
        space, np.mean(SIMPLEX_POINTS, axis=0)
    )
    w_star, _, _ = minimize_kappa(q, hull, cfg.params)
    p_star = w_star @ hull.vertex_matrix

    z = _draw_outcomes(q, cfg.runs, cfg.n, cfg.seed)
    log_num = _empirical_loglik(z, space.size)
    log_points = np.stack([np.log(p.probs)[z].cumsum(axis=1) for p in points])
    naive_log = math.log(cfg.params.C) + log_num - log_points.max(axis=0)

    with np.errstate(divide="ignore"):
        step_ratio = np.where(p_star > 0, np.log(q.probs) - np.log(np.where(p_star > 0, p_star, 1.0)), np.inf)
    credal_log = math.log(cfg.params.C) + step_ratio[z].cumsum(axis=1)

    naive = _capped_exp(naive_log, cfg.params.R)
    credal = _capped_exp(credal_log, cfg.params.R)
    naive_mean, naive_se = _mean_se(naive)
    credal_mean, credal_se = _mean_se(credal)
    rows = tuple(
        (t + 1, float(naive_mean[t]), float(naive_se[t]), float(credal_mean[t]), float(credal_se[t]))
        for t in range(cfg.n)
    )
    return ResultTable(
        scenario=cfg.scenario,
        seed=cfg.seed,
        config_hash=_config_hash(cfg),
        columns=("step", "naive_mean", "naive_se", "credal_mean", "credal_se"),
        rows=rows,
        headline={
            "naive_final_mean": float(naive_mean[-1]) if cfg.n else cfg.params.C,
            "credal_final_mean": float(credal_mean[-1]) if cfg.n else cfg.params.C,
            "credal_final_se": float(credal_se[-1]) if cfg.n else 0.0,
        },
    )


# ---------------------------------------------------------------------------
# Fairness (demographic parity, implicit betting vs explicit credal)
# ---------------------------------------------------------------------------

PAIRED_SPACE = EvidenceSpace(("y0=0,y1=0", "y0=0,y1=1", "y0=1,y1=0", "y0=1,y1=1"))
#: |Y0 - Y1| per paired outcome
PAIRED_GAP_METRIC = (0.0, 1.0, 1.0, 0.0)


def paired_fairness_distribution(gamma: float, base_rate: float = 0.1) -> Categorical:
    """Joint law of one draw from each subgroup, Y0 ~ Bern(0.1), Y1 ~ Bern(gamma+0.1)."""
    p0, p1 = base_rate, gamma + base_rate
    if not (0.0 <= p1 <= 1.0):
        raise ValueError("gamma + base rate must stay inside [0, 1]")
    probs = [(1 - p0) * (1 - p1), (1 - p0) * p1, p0 * (1 - p1), p0 * p1]
    return Categorical(PAIRED_SPACE, probs)


@dataclass(frozen=True)
class FairnessConfig:
    scenario: str = "fairness"
    params: MechanismParams = MechanismParams(C=15.0, R=250.0)
    gammas: tuple[float, ...] = (0.4, 0.6)
    tau: float = 0.6
    runs: int = 30
    n: int = 5000
    seed: int = 11
    burn_in: int = 0
    grid_resolution: int = 10
    kelly_margin: float = 0.01
    bet_zero_control: bool = False  # hold lambda at 0: flat-at-C control curves


def parity_betting_score(tau: float) -> BettingScore:
    """Score tau - |Y0 - Y1| on paired draws; drift <= 0 for gap >= tau."""
    return BettingScore(PAIRED_SPACE, tau - np.asarray(PAIRED_GAP_METRIC), tau=tau)


def parity_credal_set(tau: float, grid_resolution: int) -> CredalSet:
    """Grid approximation of the non-compliant set {P : E_P|Y0-Y1| >= tau}.

    The betting mechanism's implicit credal set is this linear-threshold
    polytope on the paired space; with tau on the grid the approximation is
    exact.
    """
    spec = ConstraintCredalSpec(
        space=PAIRED_SPACE,
        predicate=MEAN_SCORE_GE,
        tau=tau,
        grid_resolution=grid_resolution,
        score=PAIRED_GAP_METRIC,
    )
    return approximate_constraint_set(spec)


def _betting_trajectories(
    z: np.ndarray, score: BettingScore, cfg_kelly: KellyConfig, params: MechanismParams
) -> np.ndarray:
    runs, n = z.shape
    out = np.empty((runs, n))
    log_cap = math.log(params.R)
    for r in range(runs):
        counts = np.zeros(score.space.size, dtype=np.int64)
        log_wealth = math.log(params.C)
        prev_lam = 0.0
        for t in range(n):
            if t == 0:
                lam = 0.0
            else:
                smoothed = Categorical(score.space, (counts + 1.0) / (counts.sum() + score.space.size))
                lam = kelly_optimal_bet(smoothed, score, cfg_kelly, init=prev_lam)
            prev_lam = lam
            log_wealth += math.log1p(lam * float(score.score[z[r, t]]))
            counts[z[r, t]] += 1
            out[r, t] = params.R if log_wealth >= log_cap else math.exp(log_wealth)
    return out


def _cumulative_trajectories(
    z: np.ndarray, q: Categorical, p_star: np.ndarray, params: MechanismParams, burn_in: int
) -> np.ndarray:
    """Cumulative likelihood-ratio licenses, held at C through the burn-in prefix."""
    with np.errstate(divide="ignore"):
        step_log = np.where(
            p_star > 0,
            np.where(q.probs > 0, np.log(np.where(q.probs > 0, q.probs, 1.0)), -np.inf)
            - np.log(np.where(p_star > 0, p_star, 1.0)),
            np.inf,
        )
    runs, n = z.shape
    logs = np.zeros((runs, n))
    active = step_log[z[:, burn_in:]] if burn_in < n else np.zeros((runs, 0))
    logs[:, burn_in:] = np.cumsum(active, axis=1)
    return _capped_exp(math.log(params.C) + logs, params.R)


def run_fairness(cfg: FairnessConfig) -> ResultTable:
    """Mean license trajectories per fairness gap, betting and explicit routes.

    Both routes see the same paired sample paths.  The explicit route uses the
    provider's exact type when burn_in = 0; with a positive burn-in the type
    is re-estimated from the burn-in prefix (add-one smoothed) before the
    cumulative license starts accumulating.
    """
    score = parity_betting_score(cfg.tau)
    credal = parity_credal_set(cfg.tau, cfg.grid_resolution)
    kelly_cfg = KellyConfig(margin=cfg.kelly_margin)
    rows = []
    headline: dict[str, float] = {}
    for g_idx, gamma in enumerate(cfg.gammas):
        q = paired_fairness_distribution(gamma)
        z = _draw_outcomes(q, cfg.runs, cfg.n, cfg.seed + g_idx)
        if cfg.bet_zero_control:
            betting = np.full(z.shape, cfg.params.C)
        else:
            betting = _betting_trajectories(z, score, kelly_cfg, cfg.params)
        if cfg.burn_in == 0:
            q_used = q
        else:
            pooled = z[:, : cfg.burn_in].reshape(-1)
            counts = np.bincount(pooled, minlength=q.space.size) + 1.0
            q_used = Categorical(q.space, counts / counts.sum())
        w_star, _, _ = minimize_kappa(q_used, credal, cfg.params)
        p_star = w_star @ credal.vertex_matrix
        explicit = _cumulative_trajectories(z, q_used, p_star, cfg.params, cfg.burn_in)
        b_mean, b_se = _mean_se(betting)
        e_mean, e_se = _mean_se(explicit)
        for t in range(cfg.n):
            rows.append(
                (gamma, t + 1, float(b_mean[t]), float(b_se[t]), float(e_mean[t]), float(e_se[t]))
            )
        headline[f"betting_final_mean_gamma={gamma}"] = float(b_mean[-1])
        headline[f"explicit_final_mean_gamma={gamma}"] = float(e_mean[-1])
        drift = float(q.probs @ score.score)
        headline[f"analytic_drift_gamma={gamma}"] = drift
    return ResultTable(
        scenario=cfg.scenario,
        seed=cfg.seed,
        config_hash=_config_hash(cfg),
        columns=("gamma", "step", "betting_mean", "betting_se", "explicit_mean", "explicit_se"),
        rows=tuple(rows),
        headline=headline,
    )


# ---------------------------------------------------------------------------
# Chi-squared strategic test (effective model dimension)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Chi2Config:
    scenario: str = "chi2_strategic"
    params: MechanismParams = MechanismParams(C=15.0, R=100.0)  # C/R = 0.15
    d0: int = 50
    alpha_grid: tuple[float, ...] = (
        0.0, 0.01, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2, 0.25, 0.3, 0.4, 0.5,
    )
    # batch size per test; ~1600 draws are needed for power 0.99 at alpha 0.05
    # when separating chi^2_{d0} from chi^2_{d0+1}
    n_per_test: int = 2000
    mc_calibration: int = 100_000
    mc_power: int = 100_000
    seed: int = 23


def _batch_loglik_ratio(d0: int, df: int, batches: int, n: int, seed: int) -> np.ndarray:
    """Log LR of d0 (alternative) vs d0+1 (null) on batches of chi^2_df draws.

    log f_d(x) differs across d only through (d/2 - 1) log x and the
    normalizer, so the batch statistic is affine in sum(log x); the constant
    uses exact log-gamma terms.
    """
    const = 0.5 * math.log(2.0) + math.lgamma((d0 + 1) / 2.0) - math.lgamma(d0 / 2.0)
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    out = np.empty(batches)
    chunk = max(1, int(2_000_000 // max(n, 1)))
    done = 0
    while done < batches:
        take = min(chunk, batches - done)
        draws = 2.0 * gen.standard_gamma(df / 2.0, size=(take, n))
        out[done : done + take] = n * const - 0.5 * np.log(draws).sum(axis=1)
        done += take
    return out


def run_chi2_strategic(cfg: Chi2Config) -> ResultTable:
    """Power and participation curves for the dimension likelihood-ratio test.

    Null: the model uses the sensitive attribute (chi^2 with d0+1 degrees of
    freedom); alternative: it does not (d0).  The test statistic is the exact
    likelihood ratio over a batch of ``n_per_test`` standardized excess-risk
    draws, rejecting the null for large ratios at thresholds Monte Carlo
    calibrated under the null.  Sharing one null sample and one alternative
    sample across the alpha grid makes the power curve exactly monotone.

    Participation is ex ante: null providers enter iff alpha * R >= C,
    compliant providers iff power * R >= C; among null entrants the approved
    fraction is alpha.
    """
    seeds = spawn_seeds(cfg.seed, 2)
    null_stats = _batch_loglik_ratio(cfg.d0, cfg.d0 + 1, cfg.mc_calibration, cfg.n_per_test, seeds[0])
    alt_stats = _batch_loglik_ratio(cfg.d0, cfg.d0, cfg.mc_power, cfg.n_per_test, seeds[1])
    rows = []
    ratio = cfg.params.C / cfg.params.R
    for alpha in cfg.alpha_grid:
        if alpha == 0.0:
            power = 0.0  # a size-0 test never rejects; the MC max is not its threshold
        else:
            threshold = float(np.quantile(null_stats, 1.0 - alpha))
            power = float(np.mean(alt_stats > threshold))
        null_enter = 1.0 if alpha * cfg.params.R >= cfg.params.C else 0.0
        compliant_enter = 1.0 if power * cfg.params.R >= cfg.params.C else 0.0
        null_approved = alpha if null_enter else 0.0
        rows.append((float(alpha), power, null_enter, compliant_enter, float(null_approved)))
    powers = {row[0]: row[1] for row in rows}
    return ResultTable(
        scenario=cfg.scenario,
        seed=cfg.seed,
        config_hash=_config_hash(cfg),
        columns=("alpha", "power", "null_enter", "compliant_enter", "null_approved"),
        rows=tuple(rows),
        headline={
            "fee_cap_ratio": ratio,
            "power_at_0.05": powers.get(0.05, float("nan")),
        },
    )


# ---------------------------------------------------------------------------
# Synthetic spurious-feature surrogate (declared distributions, shape only)
# ---------------------------------------------------------------------------

SPURIOUS_SPACE = EvidenceSpace(("easy_correct", "easy_wrong", "hard_correct", "hard_wrong"))


@dataclass(frozen=True)
class SpuriousConfig:
    """Declared surrogate evidence distributions over group x correctness.

    The defaults are synthetic stand-ins chosen so the compliant surrogate
    differs from the spurious-model hull mainly on hard (minority) outcomes;
    they are not measurements of any trained model.
    """

    scenario: str = "synthetic_spurious"
    params: MechanismParams = MechanismParams(C=15.0, R=250.0)
    q_compliant: tuple[float, ...] = (0.72, 0.08, 0.17, 0.03)
    q_noncompliant: tuple[float, ...] = (0.76, 0.04, 0.06, 0.14)
    p_random: tuple[float, ...] = (0.40, 0.40, 0.10, 0.10)
    burn_in: int = 300
    runs: int = 30
    n: int = 1000
    seed: int = 31


def run_synthetic_spurious(cfg: SpuriousConfig) -> ResultTable:
    """Cumulative licenses for both surrogates plus the per-outcome ratio table.

    Emits a tidy table: series "license" rows hold (agent, step, mean, se)
    trajectories; series "ratio" rows hold the per-outcome and per-group
    compliant/non-compliant license ratios at step 0.
    """
    q_dro = Categorical(SPURIOUS_SPACE, cfg.q_compliant)
    q_erm = Categorical(SPURIOUS_SPACE, cfg.q_noncompliant)
    p_rand = Categorical(SPURIOUS_SPACE, cfg.p_random)
    hull = CredalSet(SPURIOUS_SPACE, (q_erm, p_rand))

    rows = []
    finals = {}
    payouts = {}
    for agent, q in (("compliant", q_dro), ("non_compliant", q_erm)):
        w_star, _, _ = minimize_kappa(q, hull, cfg.params)
        p_star = w_star @ hull.vertex_matrix
        # Same seed for both agents: paired paths, and equal surrogates give
        # identical trajectories.
        z = _draw_outcomes(q, cfg.runs, cfg.n, cfg.seed)
        traj = _cumulative_trajectories(z, q, p_star, cfg.params, cfg.burn_in)
        mean, se = _mean_se(traj)
        for t in range(cfg.n):
            rows.append(("license", agent, t + 1, float(mean[t]), float(se[t])))
        finals[agent] = float(mean[-1])
        payouts[agent] = np.minimum(cfg.params.C * q.probs / p_star, cfg.params.R)

    ratio = payouts["compliant"] / payouts["non_compliant"]
    for j, label in enumerate(SPURIOUS_SPACE.labels):
        rows.append(("ratio", label, 0, float(ratio[j]), 0.0))
    qd = q_dro.probs
    easy = float((qd[:2] @ ratio[:2]) / qd[:2].sum())
    hard = float((qd[2:] @ ratio[2:]) / qd[2:].sum())
    rows.append(("ratio", "easy_group", 0, easy, 0.0))
    rows.append(("ratio", "hard_group", 0, hard, 0.0))

    return ResultTable(
        scenario=cfg.scenario,
        seed=cfg.seed,
        config_hash=_config_hash(cfg),
        columns=("series", "key", "step", "value", "stderr"),
        rows=tuple(rows),
        headline={
            "compliant_final_mean": finals["compliant"],
            "non_compliant_final_mean": finals["non_compliant"],
            "easy_group_ratio": easy,
            "hard_group_ratio": hard,
        },
    )


# ---------------------------------------------------------------------------
# Dispatch and config loading
# ---------------------------------------------------------------------------

SCENARIOS = {
    "simplex_gaming": (SimplexGamingConfig, run_simplex_gaming),
    "fairness": (FairnessConfig, run_fairness),
    "chi2_strategic": (Chi2Config, run_chi2_strategic),
    "synthetic_spurious": (SpuriousConfig, run_synthetic_spurious),
}


def load_config(scenario: str, payload: Optional[dict] = None, seed: Optional[int] = None):
    """Build a scenario config from a JSON payload, applying defaults."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}")
    cls, _ = SCENARIOS[scenario]
    payload = dict(payload or {})
    payload.pop("scenario", None)
    if "params" in payload:
        payload["params"] = MechanismParams(**payload["params"])
    for key in ("gammas", "alpha_grid", "q_compliant", "q_noncompliant", "p_random", "provider_q"):
        if key in payload and payload[key] is not None:
            payload[key] = tuple(payload[key])
    if seed is not None:
        payload["seed"] = seed
    try:
        return cls(**payload)
    except TypeError as err:
        raise ValueError(f"bad {scenario} config: {err}") from err


def run_scenario(cfg) -> ResultTable:
    _, runner = SCENARIOS[cfg.scenario]
    return runner(cfg)
