import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from credalmarket.betting import (
    BettingScore,
    KellyConfig,
    WealthProcess,
    adaptive_bet,
    kelly_optimal_bet,
    run_sequential_license,
    step,
    verify_supermartingale,
    write_trajectory_csv,
)
from credalmarket.evidence import Categorical, EvidenceSpace, SampleStream
from credalmarket.licenses import MechanismParams

PARAMS = MechanismParams(C=15.0, R=250.0)


def binary_score(space):
    return BettingScore(space, [1.0, -1.0])


def binary_dist(space, p):
    return Categorical(space, [p, 1.0 - p])


@pytest.fixture
def bspace():
    return EvidenceSpace.of_size(2, prefix="o")


class TestWealthProcess:
    def test_no_bet_leaves_wealth_unchanged(self, bspace):
        proc = WealthProcess.start(PARAMS)
        after = step(proc, binary_score(bspace), 0.0, 1)
        assert after.wealth == pytest.approx(PARAMS.C)
        assert after.n == 1 and after.history == ((0.0, 1),)

    def test_win_arithmetic(self, bspace):
        score = BettingScore(bspace, [0.5, -0.5])
        proc = WealthProcess.start(PARAMS)
        after = step(proc, score, 1.0, 0)
        assert after.wealth == pytest.approx(22.5)

    def test_license_is_capped(self, bspace):
        score = BettingScore(bspace, [2.0, -0.5])
        proc = WealthProcess.start(PARAMS)
        for _ in range(4):  # 15 * 3^4 = 1215 raw wealth
            proc = step(proc, score, 1.0, 0)
        assert proc.wealth > PARAMS.R
        assert proc.license_value == PARAMS.R

    def test_inadmissible_bet_rejected(self, bspace):
        proc = WealthProcess.start(PARAMS)
        with pytest.raises(ValueError):
            step(proc, binary_score(bspace), 1.0, 0)  # a loss would zero the wealth
        with pytest.raises(ValueError):
            step(proc, binary_score(bspace), -0.1, 0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_admissible_bets_keep_wealth_positive(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 6))
        space = EvidenceSpace.of_size(m)
        score = BettingScore(space, rng.uniform(-2.0, 2.0, size=m))
        cfg = KellyConfig()
        lam = float(rng.uniform(0.0, 1.0)) * cfg.ceiling(score.score)
        proc = WealthProcess.start(PARAMS)
        for _ in range(5):
            z = int(rng.integers(0, m))
            proc = step(proc, score, lam, z)
            assert proc.wealth > 0.0
            assert proc.license_value <= PARAMS.R


class TestKellyBet:
    @pytest.mark.parametrize("p", [0.6, 0.75, 0.9])
    def test_even_money_closed_form(self, bspace, p):
        cfg = KellyConfig()
        lam = kelly_optimal_bet(binary_dist(bspace, p), binary_score(bspace), cfg)
        assert lam == pytest.approx(2 * p - 1, abs=1e-9)

    def test_zero_edge_means_no_bet(self, bspace):
        assert kelly_optimal_bet(binary_dist(bspace, 0.5), binary_score(bspace), KellyConfig()) == 0.0

    def test_negative_edge_means_no_bet(self, bspace):
        assert kelly_optimal_bet(binary_dist(bspace, 0.3), binary_score(bspace), KellyConfig()) == 0.0

    def test_sure_win_bets_the_ceiling(self, bspace):
        score = BettingScore(bspace, [0.4, 0.4])
        cfg = KellyConfig()
        lam = kelly_optimal_bet(binary_dist(bspace, 0.5), score, cfg)
        assert lam == cfg.lambda_default_max

    def test_warm_start_does_not_change_answer(self, bspace):
        cfg = KellyConfig()
        dist = binary_dist(bspace, 0.7)
        base = kelly_optimal_bet(dist, binary_score(bspace), cfg)
        for init in (0.01, 0.3, 0.9):
            assert kelly_optimal_bet(dist, binary_score(bspace), cfg, init=init) == pytest.approx(
                base, abs=1e-9
            )

    def test_beats_every_grid_point(self):
        rng = np.random.default_rng(31)
        cfg = KellyConfig()
        for _ in range(25):
            m = int(rng.integers(2, 5))
            space = EvidenceSpace.of_size(m)
            score = BettingScore(space, rng.uniform(-1.5, 1.5, size=m))
            dist = Categorical(space, rng.dirichlet(np.ones(m)))
            lam = kelly_optimal_bet(dist, score, cfg)
            ceiling = cfg.ceiling(score.score)
            grid = np.linspace(0.0, ceiling, 10001)
            f_grid = np.log1p(np.outer(grid, score.score)) @ dist.probs
            f_opt = float(dist.probs @ np.log1p(lam * score.score))
            assert f_opt >= float(f_grid.max()) - 1e-10


class TestAdaptiveBet:
    def test_empty_history_bets_nothing(self, bspace):
        assert adaptive_bet([], binary_score(bspace), KellyConfig()) == 0.0

    def test_all_wins_stays_under_ceiling(self, bspace):
        cfg = KellyConfig()
        lam = adaptive_bet([0] * 20, binary_score(bspace), cfg)
        # smoothed estimate (21/22) keeps the plug-in bet off the ceiling
        expected = 2 * (21 / 22) - 1
        assert lam == pytest.approx(expected, abs=1e-9)
        assert lam < cfg.ceiling(binary_score(bspace).score)

    def test_consistency_at_large_samples(self, bspace):
        cfg = KellyConfig()
        true = binary_dist(bspace, 0.75)
        stream = SampleStream(true, seed=4)
        from credalmarket.evidence import sample

        history = sample(stream, 10_000)
        lam = adaptive_bet(history, binary_score(bspace), cfg)
        assert abs(lam - 0.5) <= 0.02


class TestSequentialLicense:
    def test_compliant_score_reaches_cap(self, bspace):
        stream = SampleStream(binary_dist(bspace, 0.75), seed=8)
        values = run_sequential_license(stream, binary_score(bspace), KellyConfig(), PARAMS, 500)
        assert values[-1] == PARAMS.R
        assert np.all(values <= PARAMS.R)

    def test_nonpositive_edge_never_bets(self, bspace):
        # score never positive: the plug-in edge stays <= 0, so lambda = 0 throughout
        score = BettingScore(bspace, [0.0, -1.0])
        stream = SampleStream(binary_dist(bspace, 0.6), seed=3)
        values = run_sequential_license(stream, score, KellyConfig(), PARAMS, 200)
        assert np.allclose(values, PARAMS.C)

    def test_needs_at_least_one_round(self, bspace):
        stream = SampleStream(binary_dist(bspace, 0.5), seed=0)
        with pytest.raises(ValueError):
            run_sequential_license(stream, binary_score(bspace), KellyConfig(), PARAMS, 0)


class TestSupermartingale:
    def test_never_betting_preserves_the_fee_exactly(self, bspace):
        score = BettingScore(bspace, [0.0, -1.0])  # edge never positive
        mean, se = verify_supermartingale(
            binary_dist(bspace, 0.5), score, KellyConfig(), runs=200, n=50, seed=1
        )
        assert mean == PARAMS.C and se == 0.0

    def test_positive_edge_rejected(self, bspace):
        with pytest.raises(ValueError):
            verify_supermartingale(
                binary_dist(bspace, 0.6), binary_score(bspace), KellyConfig(), runs=10, n=5, seed=0
            )

    def test_zero_drift_checkpoints_respect_obedience(self, bspace):
        # mean wealth never exceeds C + 3 SE at any checkpoint
        for n in (10, 100, 500):
            mean, se = verify_supermartingale(
                binary_dist(bspace, 0.5), binary_score(bspace), KellyConfig(),
                runs=2000, n=n, seed=14,
            )
            assert mean <= PARAMS.C + 3.0 * se

    def test_strictly_negative_drift_loses_money(self, bspace):
        mean, se = verify_supermartingale(
            binary_dist(bspace, 0.475), binary_score(bspace), KellyConfig(),
            runs=2000, n=200, seed=15,
        )
        assert mean < PARAMS.C


def test_trajectory_csv(tmp_path, bspace):
    path = tmp_path / "trajectory.csv"
    stream = SampleStream(binary_dist(bspace, 0.7), seed=2)
    write_trajectory_csv(path, binary_score(bspace), KellyConfig(), PARAMS, stream, 25,
                         header_comment="test run")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    assert lines[1] == "step,lambda,outcome,wealth,license_value"
    assert len(lines) == 2 + 25
    last = lines[-1].split(",")
    assert int(last[0]) == 25
    assert float(last[4]) <= PARAMS.R
