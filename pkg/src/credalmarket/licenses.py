"""Licenses, obedience audits, and optimal provider responses.

A license is a bounded payout vector over evidence outcomes.  A mechanism is
obedient when no distribution in the credal set earns more than the entry fee
in expectation; the risk-neutral best response is a linear program whose
optimum is an all-or-nothing gamble (equivalently a scaled Neyman-Pearson
test against a singleton), and the risk-averse (log-utility) best response is
a truncated likelihood ratio against the capped-KL projection of the
provider's type onto the credal set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ._linprog import solve_box_lp
from .credal import CredalSet, upper_expectation
from .evidence import Categorical, EvidenceSpace

__all__ = [
    "License",
    "MechanismParams",
    "OptimalLicenseResult",
    "is_obedient",
    "participation_decision",
    "sup_value_over_obedient",
    "neyman_pearson_license",
    "kappa",
    "minimize_kappa",
    "optimal_risk_averse_license",
    "cumulative_license",
    "improvement_incentive_check",
]


@dataclass(frozen=True)
class MechanismParams:
    """Market entry fee C and market cap R, with 0 < C < R."""

    C: float
    R: float

    def __post_init__(self) -> None:
        if not (0.0 < self.C < self.R):
            raise ValueError("mechanism parameters need 0 < C < R")

    @property
    def cap_ratio(self) -> float:
        return self.R / self.C


@dataclass(frozen=True, eq=False)
class License:
    """A payout vector over evidence outcomes, valued in [0, R]."""

    space: EvidenceSpace
    payout: np.ndarray

    def __post_init__(self) -> None:
        pay = np.asarray(self.payout, dtype=float)
        if pay.shape != (self.space.size,):
            raise ValueError("payout length does not match the evidence space")
        if np.any(pay < 0.0) or not np.all(np.isfinite(pay)):
            raise ValueError("payouts must be finite and non-negative")
        pay = pay.copy()
        pay.flags.writeable = False
        object.__setattr__(self, "payout", pay)

    def expected_under(self, dist: Categorical) -> float:
        return dist.expectation(self.payout)

    def to_json(self, params: MechanismParams) -> dict:
        return {
            "space": list(self.space.labels),
            "payout": self.payout.tolist(),
            "params": {"C": params.C, "R": params.R},
        }

    @staticmethod
    def from_json(payload: dict) -> tuple["License", MechanismParams]:
        try:
            space = EvidenceSpace(tuple(payload["space"]))
            lic = License(space, payload["payout"])
            params = MechanismParams(float(payload["params"]["C"]), float(payload["params"]["R"]))
        except KeyError as err:
            raise ValueError(f"license JSON is missing field {err.args[0]!r}") from err
        return lic, params

    def save(self, path: str | Path, params: MechanismParams) -> None:
        Path(path).write_text(json.dumps(self.to_json(params), indent=2) + "\n")


@dataclass(frozen=True, eq=False)
class OptimalLicenseResult:
    """An optimal license with its value and active-constraint diagnostics.

    ``tight_vertex_weights`` holds whatever the optimizer's active-constraint
    analysis yields (normalized LP duals for the risk-neutral program, the
    projection weights for the risk-averse one); no uniqueness is claimed.
    ``projection`` is the credal-set member P* for the risk-averse response
    and None for the risk-neutral one.
    """

    license: License
    value: float
    tight_vertex_weights: np.ndarray
    projection: Optional[Categorical] = None
    converged: bool = True
    kappa_value: Optional[float] = None


def is_obedient(license: License, credal: CredalSet, params: MechanismParams,
                tol: float = 1e-9) -> bool:
    """True iff no distribution in the set earns more than C from the license."""
    if license.space != credal.space:
        raise ValueError("license and credal set live on different spaces")
    return upper_expectation(credal, license.payout) <= params.C + tol


def participation_decision(sup_value: float, params: MechanismParams) -> bool:
    """Enter the market iff the best attainable value strictly exceeds the fee.

    The boundary ``sup_value == C`` belongs to exclusion.
    """
    return sup_value > params.C


def sup_value_over_obedient(q: Categorical, credal: CredalSet,
                            params: MechanismParams) -> OptimalLicenseResult:
    """Risk-neutral best response: max_pi E_Q[pi] over all obedient licenses.

    The feasible region {0 <= pi <= R, E_P[pi] <= C for each vertex P} always
    contains pi = 0, and the optimizer sits at a vertex of the polytope.
    """
    if q.space != credal.space:
        raise ValueError("type and credal set live on different spaces")
    V = credal.vertex_matrix
    k = V.shape[0]
    sol = solve_box_lp(
        c=q.probs,
        A=V,
        b=np.full(k, params.C),
        upper=np.full(q.space.size, params.R),
    )
    duals = sol.duals[:k]
    total = duals.sum()
    weights = duals / total if total > 0 else np.zeros(k)
    return OptimalLicenseResult(
        license=License(q.space, np.clip(sol.x, 0.0, params.R)),
        value=sol.value,
        tight_vertex_weights=weights,
        projection=None,
    )


def neyman_pearson_license(q: Categorical, p: Categorical,
                           params: MechanismParams) -> License:
    """Closed-form risk-neutral optimum against a singleton null P.

    Outcomes are ranked by likelihood ratio Q/P (infinite where P=0 < Q, ties
    broken by ascending index) and paid R greedily until the P-budget C is
    spent; the boundary outcome gets the fractional payout that makes
    E_P[pi] = C exactly.
    """
    if q.space != p.space:
        raise ValueError("distributions live on different spaces")
    qp, pp = q.probs, p.probs
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pp > 0, qp / np.where(pp > 0, pp, 1.0), np.inf)
    ratio = np.where((pp == 0) & (qp == 0), 0.0, ratio)
    order = np.lexsort((np.arange(q.space.size), -ratio))
    payout = np.zeros(q.space.size)
    budget = params.C
    for z in order:
        cost = pp[z] * params.R
        if cost <= budget:
            payout[z] = params.R
            budget -= cost
        else:
            if budget > 0:
                payout[z] = params.R * (budget / cost)
                budget = 0.0
            break
    return License(q.space, payout)


def kappa(q: Categorical, p: Categorical, params: MechanismParams) -> float:
    """Capped-KL functional kappa_Q(P) = E_Q[min{ln(Q/P), ln(R/C)}].

    Algebraically equal to KL(Q||P) minus the tail correction over the region
    where the likelihood ratio exceeds R/C, but stays finite even when P
    vanishes on Q's support.
    """
    if q.space != p.space:
        raise ValueError("distributions live on different spaces")
    return _kappa_raw(q.probs, p.probs, math.log(params.cap_ratio))


def _kappa_raw(qp: np.ndarray, pp: np.ndarray, log_cap: float) -> float:
    support = qp > 0.0
    qs, ps = qp[support], pp[support]
    with np.errstate(divide="ignore"):
        log_ratio = np.where(ps > 0, np.log(qs) - np.log(np.where(ps > 0, ps, 1.0)), np.inf)
    return float(qs @ np.minimum(log_ratio, log_cap))


def _project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u + (1.0 - css) / np.arange(1, v.size + 1) > 0)[0][-1]
    theta = (1.0 - css[rho]) / (rho + 1.0)
    return np.clip(v + theta, 0.0, None)


def minimize_kappa(
    q: Categorical,
    credal: CredalSet,
    params: MechanismParams,
    n_starts: int = 8,
    max_iter: int = 500,
    grad_tol: float = 1e-8,
    seed: int = 0,
) -> tuple[np.ndarray, float, bool]:
    """Minimize kappa_Q over the credal set via multi-start projected gradient.

    The set is parameterized as P_w = sum_i w_i * vertex_i over the weight
    simplex.  kappa is not known to be convex in P, so the starts cover every
    vertex, the barycenter, and seeded random points; ties in the final value
    resolve to the lowest start index so results are deterministic.
    Returns (best weights, kappa value, converged flag).
    """
    V = credal.vertex_matrix
    k = V.shape[0]
    qp = q.probs
    log_cap = math.log(params.cap_ratio)

    def kappa_of(w: np.ndarray) -> float:
        return _kappa_raw(qp, w @ V, log_cap)

    def gradient(w: np.ndarray) -> np.ndarray:
        p = w @ V
        support = qp > 0.0
        with np.errstate(divide="ignore"):
            log_ratio = np.where(
                p > 0, np.log(np.where(qp > 0, qp, 1.0)) - np.log(np.where(p > 0, p, 1.0)), np.inf
            )
        active = support & (log_ratio < log_cap) & (p > 0)
        if not np.any(active):
            return np.zeros(k)
        return -(V[:, active] @ (qp[active] / p[active]))

    if k == 1:
        return np.ones(1), kappa_of(np.ones(1)), True

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    starts = [np.eye(k)[i] for i in range(k)]
    starts.append(np.full(k, 1.0 / k))
    while len(starts) < max(n_starts, k + 1):
        starts.append(rng.dirichlet(np.ones(k)))

    best_w, best_val, best_idx = None, np.inf, -1
    any_converged = False
    for idx, w0 in enumerate(starts):
        w = w0.copy()
        val = kappa_of(w)
        converged = False
        for _ in range(max_iter):
            g = gradient(w)
            # Projected-gradient stationarity on the simplex.
            step_dir = _project_to_simplex(w - g) - w
            if np.linalg.norm(step_dir) <= grad_tol:
                converged = True
                break
            eta = 1.0
            improved = False
            for _ in range(40):
                w_new = _project_to_simplex(w - eta * g)
                val_new = kappa_of(w_new)
                if val_new < val - 1e-14:
                    w, val = w_new, val_new
                    improved = True
                    break
                eta *= 0.5
            if not improved:
                converged = True
                break
        any_converged = any_converged or converged
        if val < best_val - 1e-15 or (abs(val - best_val) <= 1e-15 and best_idx < 0):
            best_w, best_val, best_idx = w, val, idx
    return best_w, best_val, any_converged


def _budget_exact_scale(ratio: np.ndarray, support: np.ndarray, V: np.ndarray,
                        params: MechanismParams) -> float:
    """Largest gamma with max_P E_P[min{gamma * ratio, R} * 1_support] <= C.

    The truncated likelihood-ratio license is only budget-tight when the cap
    never binds; scaling the uncapped branch keeps the mechanism's obedience
    constraint exactly active whenever some supported outcome stays below R.
    With no cap active, gamma equals C and the plain formula is recovered.
    """
    finite = support & np.isfinite(ratio) & (ratio > 0)

    def sup_expectation(gamma: float) -> float:
        payout = np.where(finite, np.minimum(gamma * ratio, params.R), 0.0)
        payout = np.where(support & ~finite, params.R, payout)
        return float(np.max(V @ payout))

    if not np.any(finite):
        return params.C
    gamma_all_capped = params.R / float(np.min(ratio[finite]))
    if sup_expectation(gamma_all_capped) <= params.C:
        return gamma_all_capped  # every supported payout at R and still obedient
    lo, hi = 0.0, gamma_all_capped
    for _ in range(100):  # sup_expectation is monotone piecewise-linear in gamma
        mid = 0.5 * (lo + hi)
        if sup_expectation(mid) <= params.C:
            lo = mid
        else:
            hi = mid
    return lo


def optimal_risk_averse_license(
    q: Categorical,
    credal: CredalSet,
    params: MechanismParams,
    n_starts: int = 8,
    max_iter: int = 500,
    grad_tol: float = 1e-8,
    seed: int = 0,
) -> OptimalLicenseResult:
    """Log-utility best response: truncated likelihood ratio against P*.

    P* minimizes kappa_Q over the credal set and the license is
    pi*(z) = min{gamma * Q(z)/P*(z), R}, with pi* = 0 where Q vanishes and
    pi* = R where P* vanishes on Q's support.  The multiplier gamma keeps the
    obedience budget exactly spent: whenever the cap is inactive everywhere
    on Q's support it equals C, recovering the plain truncated-ratio formula;
    with an active cap the plain formula can leave budget slack or even
    overcharge other credal vertices, and the scaled form restores
    sup_P E_P[pi*] = C.  When the optimizer exhausts its iteration budget the
    best point found is returned with converged=False.
    """
    if q.space != credal.space:
        raise ValueError("type and credal set live on different spaces")
    w, kappa_val, converged = minimize_kappa(
        q, credal, params, n_starts=n_starts, max_iter=max_iter, grad_tol=grad_tol, seed=seed
    )
    p_star = w @ credal.vertex_matrix
    qp = q.probs
    support = qp > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p_star > 0, qp / np.where(p_star > 0, p_star, 1.0), np.inf)
    gamma = _budget_exact_scale(ratio, support, credal.vertex_matrix, params)
    finite = support & np.isfinite(ratio)
    payout = np.where(finite, np.minimum(gamma * ratio, params.R), 0.0)
    payout = np.where(support & ~finite, params.R, payout)
    lic = License(q.space, payout)
    # Renormalize the projection in case of simplex round-off.
    p_star = np.clip(p_star, 0.0, None)
    p_star = p_star / p_star.sum()
    return OptimalLicenseResult(
        license=lic,
        value=lic.expected_under(q),
        tight_vertex_weights=w,
        projection=Categorical(q.space, p_star),
        converged=converged,
        kappa_value=kappa_val,
    )


def cumulative_license(z_seq, q: Categorical, p_star: Categorical,
                       params: MechanismParams) -> float:
    """Sequential license min{C * prod_i Q(z_i)/P*(z_i), R}, in log space.

    An observation with P*(z) = 0 < Q(z) caps the product at R immediately;
    an observation with Q(z) = 0 sends the license to zero.
    """
    if q.space != p_star.space:
        raise ValueError("distributions live on different spaces")
    z = np.asarray(z_seq, dtype=np.int64)
    if z.size == 0:
        return params.C
    qz = q.probs[z]
    pz = p_star.probs[z]
    if np.any((pz == 0.0) & (qz > 0.0)):
        return params.R
    if np.any(qz == 0.0):
        return 0.0
    log_value = math.log(params.C) + float(np.sum(np.log(qz) - np.log(pz)))
    if log_value >= math.log(params.R):
        return params.R
    return math.exp(log_value)


def improvement_incentive_check(license: License, order) -> bool:
    """True iff the payout is weakly decreasing along a best-to-worst order."""
    idx = np.asarray(order, dtype=np.int64)
    if sorted(idx.tolist()) != list(range(license.space.size)):
        raise ValueError("order must be a permutation of the outcomes")
    along = license.payout[idx]
    return bool(np.all(np.diff(along) <= 1e-12))
