"""Credal sets: convex hulls of categorical distributions and their envelopes.

A credal set is stored by its generating vertices; the represented set is
their convex hull, which is closed and convex by construction.  Envelope
queries reduce to finite maxima over vertices, hull membership to a small
feasibility linear program, and constraint-defined sets (like the demographic
parity family) to grid enumeration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.optimize import linprog, minimize

from .evidence import Categorical, EvidenceSpace, kl_divergence, mixture

__all__ = [
    "CredalSet",
    "ConstraintCredalSpec",
    "MembershipWitness",
    "GamingWitness",
    "upper_expectation",
    "lower_expectation",
    "membership",
    "gaming_witness",
    "approximate_constraint_set",
    "sequential_glr_value",
    "maximize_over_mixtures",
]

#: default infinity-norm tolerance for hull membership (LP solver round-off)
MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CredalSet:
    """A closed convex set of distributions, represented by its generators."""

    space: EvidenceSpace
    vertices: tuple[Categorical, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", tuple(self.vertices))
        if not self.vertices:
            raise ValueError("a credal set needs at least one vertex")
        for v in self.vertices:
            if v.space != self.space:
                raise ValueError("all vertices must share the credal set's space")

    @property
    def vertex_matrix(self) -> np.ndarray:
        """Vertices stacked as a (k, m) array."""
        return np.stack([v.probs for v in self.vertices])

    def mix(self, weights) -> Categorical:
        return mixture(list(self.vertices), weights)

    def with_extra_vertices(self, extra: list[Categorical]) -> "CredalSet":
        return CredalSet(self.space, self.vertices + tuple(extra))

    @staticmethod
    def singleton(p: Categorical) -> "CredalSet":
        return CredalSet(p.space, (p,))

    def to_json(self) -> dict:
        return {
            "space": list(self.space.labels),
            "vertices": [v.probs.tolist() for v in self.vertices],
        }

    @staticmethod
    def from_json(payload: dict) -> "CredalSet":
        try:
            space = EvidenceSpace(tuple(payload["space"]))
            vertices = tuple(Categorical(space, v) for v in payload["vertices"])
        except KeyError as err:
            raise ValueError(f"credal JSON is missing field {err.args[0]!r}") from err
        return CredalSet(space, vertices)

    @staticmethod
    def load(path: str | Path) -> "CredalSet":
        return CredalSet.from_json(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def upper_expectation(credal: CredalSet, payoff) -> float:
    """sup_{P in set} E_P[payoff]; a linear functional attains it at a vertex."""
    g = np.asarray(payoff, dtype=float)
    if g.shape != (credal.space.size,):
        raise ValueError("payoff length does not match the credal set's space")
    return float(np.max(credal.vertex_matrix @ g))


def lower_expectation(credal: CredalSet, payoff) -> float:
    """inf_{P in set} E_P[payoff], the conjugate of the upper envelope."""
    return -upper_expectation(credal, -np.asarray(payoff, dtype=float))


class MembershipWitness(NamedTuple):
    is_member: bool
    weights: Optional[np.ndarray]
    max_deviation: float


def membership(q: Categorical, credal: CredalSet, tol: float = MEMBERSHIP_TOL) -> MembershipWitness:
    """Test whether q lies in the convex hull of the vertices.

    Solves  min t  s.t.  |V^T w - q| <= t,  sum w = 1,  w >= 0  and accepts
    when the optimal infinity-norm deviation is at most ``tol``.
    """
    if q.space != credal.space:
        raise ValueError("distribution and credal set live on different spaces")
    V = credal.vertex_matrix  # (k, m)
    k, m = V.shape
    # Variables: w (k entries), t.  Objective: minimize t.
    c = np.zeros(k + 1)
    c[-1] = 1.0
    ones_t = -np.ones((m, 1))
    A_ub = np.block([[V.T, ones_t], [-V.T, ones_t]])
    b_ub = np.concatenate([q.probs, -q.probs])
    A_eq = np.zeros((1, k + 1))
    A_eq[0, :k] = 1.0
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=[1.0],
        bounds=[(0, None)] * k + [(0, None)],
        method="highs",
    )
    if not res.success:  # pragma: no cover - highs solves this class reliably
        raise RuntimeError(f"membership LP failed: {res.message}")
    deviation = float(res.x[-1])
    if deviation <= tol:
        w = np.clip(res.x[:k], 0.0, None)
        return MembershipWitness(True, w / w.sum(), deviation)
    return MembershipWitness(False, None, deviation)


# ---------------------------------------------------------------------------
# Constraint-defined credal sets (grid inner approximation)
# ---------------------------------------------------------------------------

#: predicate names understood by :func:`approximate_constraint_set`
PARITY_GAP_LT = "parity_gap_lt"
PARITY_GAP_GE = "parity_gap_ge"
MEAN_SCORE_GE = "mean_score_ge"


@dataclass(frozen=True)
class ConstraintCredalSpec:
    """Grid specification of a predicate-defined set of joint distributions.

    ``parity_gap_lt`` / ``parity_gap_ge`` apply to a 4-outcome Y x A space in
    the order (Y=0,A=0), (Y=0,A=1), (Y=1,A=0), (Y=1,A=1) and compare the
    demographic-parity gap |P(Y=1|A=0) - P(Y=1|A=1)| against ``tau``;
    ``mean_score_ge`` keeps grid points with ``E[score] >= tau`` for a given
    per-outcome score vector.
    """

    space: EvidenceSpace
    predicate: str = PARITY_GAP_LT
    tau: float = 0.6
    grid_resolution: int = 10
    score: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.predicate not in (PARITY_GAP_LT, PARITY_GAP_GE, MEAN_SCORE_GE):
            raise ValueError(f"unknown predicate {self.predicate!r}")
        if self.grid_resolution < 2:
            raise ValueError("grid resolution must be at least 2")
        if self.predicate in (PARITY_GAP_LT, PARITY_GAP_GE):
            if self.space.size != 4:
                raise ValueError("parity predicates need the 4-outcome Y x A space")
            if not (0.0 < self.tau < 1.0):
                raise ValueError("parity threshold must lie in (0, 1)")
        if self.predicate == MEAN_SCORE_GE:
            if self.score is None or len(self.score) != self.space.size:
                raise ValueError("mean_score_ge needs one score per outcome")


def _grid_compositions(total: int, parts: int):
    """All integer vectors of the given length summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _grid_compositions(total - head, parts - 1):
            yield (head,) + tail


def _parity_gap_exact(counts: tuple[int, ...]) -> Optional[Fraction]:
    """Demographic-parity gap of a grid point, as an exact rational.

    ``counts`` are grid multiplicities of (Y=0,A=0), (Y=0,A=1), (Y=1,A=0),
    (Y=1,A=1).  Returns None when some group has zero mass (the conditional
    rate is undefined there, so the point cannot certify the predicate).
    """
    k00, k01, k10, k11 = counts
    g0, g1 = k00 + k10, k01 + k11
    if g0 == 0 or g1 == 0:
        return None
    return abs(Fraction(k10, g0) - Fraction(k11, g1))


def approximate_constraint_set(spec: ConstraintCredalSpec) -> CredalSet:
    """Enumerate the probability grid and keep predicate-satisfying points.

    The result is an inner approximation: the hull of the kept grid points may
    differ from the true constraint set (which need not even be convex).
    Predicates are evaluated in exact rational arithmetic on the grid.
    """
    g = spec.grid_resolution
    m = spec.space.size
    tau = Fraction(spec.tau).limit_denominator(10**9)
    score = np.asarray(spec.score, dtype=float) if spec.score is not None else None
    kept: list[Categorical] = []
    for counts in _grid_compositions(g, m):
        if spec.predicate in (PARITY_GAP_LT, PARITY_GAP_GE):
            gap = _parity_gap_exact(counts)
            if gap is None:
                keep = False
            elif spec.predicate == PARITY_GAP_LT:
                keep = gap < tau
            else:
                keep = gap >= tau
        else:
            keep = float(np.array(counts) @ score) / g >= spec.tau - 1e-12
        if keep:
            kept.append(Categorical(spec.space, np.array(counts, dtype=float) / g))
    if not kept:
        raise ValueError("no grid point satisfies the predicate at this resolution")
    return CredalSet(spec.space, tuple(kept))


# ---------------------------------------------------------------------------
# Gaming witness: mixtures that escape a non-convex regulator
# ---------------------------------------------------------------------------


class GamingWitness(NamedTuple):
    weights: np.ndarray
    payoff_gap: float


def sequential_glr_value(
    points: list[Categorical], C: float, R: float, horizon: int
) -> Callable[[Categorical], float]:
    """Value function of a regulator that tests each point individually.

    The naive mechanism pays the capped generalized-likelihood-ratio license
    min{C * prod_t Q(z_t) / max_i prod_t P_i(z_t), R}.  Against an i.i.d.
    type Q its log grows at rate min_i KL(Q || P_i) per sample, so the
    horizon-n value is certified as min{C * exp(n * min_i KL(Q||P_i)), R}.
    It is obedient at each P_i (the rate is 0 there) but not on mixtures.
    """

    def value(q: Categorical) -> float:
        drift = min(kl_divergence(q, p) for p in points)
        if not np.isfinite(drift):
            return R
        return float(min(C * np.exp(min(horizon * drift, 700.0)), R))

    return value


def _weight_grid(k: int, resolution: float) -> np.ndarray:
    steps = max(1, round(1.0 / resolution))
    grid = np.array(list(_grid_compositions(steps, k)), dtype=float) / steps
    return grid


def maximize_over_mixtures(
    points: list[Categorical],
    value_fn: Callable[[Categorical], float],
    grid_resolution: float = 0.02,
    refine: bool = True,
) -> tuple[np.ndarray, float]:
    """Grid-plus-local-refinement search of a value function over mixtures."""
    space = points[0].space
    grid = _weight_grid(len(points), grid_resolution)
    best_w, best_v = None, -np.inf
    for w in grid:
        v = value_fn(mixture(points, w))
        if v > best_v:
            best_w, best_v = w, v
    if refine:
        # Nelder-Mead on softmax logits keeps iterates on the simplex.
        def neg_value(logits: np.ndarray) -> float:
            e = np.exp(logits - logits.max())
            w = e / e.sum()
            return -value_fn(Categorical(space, w @ np.stack([p.probs for p in points])))

        start = np.log(np.clip(best_w, 1e-9, None))
        res = minimize(neg_value, start, method="Nelder-Mead",
                       options={"maxiter": 400, "xatol": 1e-8, "fatol": 1e-12})
        e = np.exp(res.x - res.x.max())
        w_ref = e / e.sum()
        v_ref = value_fn(mixture(points, w_ref))
        if v_ref > best_v:
            best_w, best_v = w_ref, v_ref
    return np.asarray(best_w), float(best_v)


def gaming_witness(
    points: list[Categorical],
    params,
    naive_license_builder: Optional[Callable[..., Callable[[Categorical], float]]] = None,
    horizon: int = 500,
    grid_resolution: float = 0.02,
) -> Optional[GamingWitness]:
    """Search for a mixture of the points that beats a naive per-point regulator.

    Returns the best weights and the payoff excess over the entry fee when a
    profitable mixture exists, otherwise None (absence is a valid answer: for
    a single point, or coincident points, the hull adds nothing to game with).
    """
    if len(points) < 2:
        return None
    builder = naive_license_builder or sequential_glr_value
    value_fn = builder(points, params.C, params.R, horizon)
    w, v = maximize_over_mixtures(points, value_fn, grid_resolution=grid_resolution)
    if v > params.C + 1e-9 * (1.0 + params.C):  # strict gain, above float residue
        return GamingWitness(weights=w, payoff_gap=v - params.C)
    return None
