import numpy as np
import pytest

from credalmarket.experiments import (
    Chi2Config,
    FairnessConfig,
    ResultTable,
    SimplexGamingConfig,
    SpuriousConfig,
    load_config,
    paired_fairness_distribution,
    parity_betting_score,
    parity_credal_set,
    run_chi2_strategic,
    run_fairness,
    run_scenario,
    run_simplex_gaming,
    run_synthetic_spurious,
)
from credalmarket.licenses import MechanismParams


def table_bytes(table: ResultTable, tmp_path, name: str) -> bytes:
    path = tmp_path / name
    table.to_csv(path)
    return path.read_bytes()


class TestDeterminism:
    @pytest.mark.parametrize(
        "cfg",
        [
            SimplexGamingConfig(runs=3, n=40, seed=7),
            FairnessConfig(runs=2, n=60, seed=7),
            Chi2Config(n_per_test=50, mc_calibration=2000, mc_power=2000, seed=7),
            SpuriousConfig(runs=3, n=120, burn_in=20, seed=7),
        ],
        ids=["simplex", "fairness", "chi2", "spurious"],
    )
    def test_reruns_are_byte_identical(self, cfg, tmp_path):
        a = table_bytes(run_scenario(cfg), tmp_path, "a.csv")
        b = table_bytes(run_scenario(cfg), tmp_path, "b.csv")
        assert a == b
        header = a.decode().splitlines()[0]
        assert header.startswith(f"# scenario={cfg.scenario} seed={cfg.seed} config_hash=")

    def test_seed_changes_the_table(self, tmp_path):
        a = table_bytes(run_simplex_gaming(SimplexGamingConfig(runs=3, n=40, seed=1)), tmp_path, "a.csv")
        b = table_bytes(run_simplex_gaming(SimplexGamingConfig(runs=3, n=40, seed=2)), tmp_path, "b.csv")
        assert a != b


class TestSimplexGaming:
    def test_values_stay_in_range(self):
        cfg = SimplexGamingConfig(runs=4, n=80)
        table = run_simplex_gaming(cfg)
        for col in ("naive_mean", "credal_mean"):
            vals = table.column(col)
            assert np.all(vals >= 0.0) and np.all(vals <= cfg.params.R)

    def test_zero_steps_stay_at_the_fee(self):
        cfg = SimplexGamingConfig(runs=1, n=0)
        table = run_simplex_gaming(cfg)
        assert table.rows == ()
        assert table.headline["naive_final_mean"] == cfg.params.C
        assert table.headline["credal_final_mean"] == cfg.params.C

    def test_far_outside_provider_grows_under_both_regulators(self):
        cfg = SimplexGamingConfig(runs=5, n=200, seed=13, provider_q=(0.9, 0.05, 0.05))
        h = run_simplex_gaming(cfg).headline
        assert h["naive_final_mean"] > cfg.params.C
        assert h["credal_final_mean"] > cfg.params.C


class TestFairness:
    def test_paired_distribution(self):
        q = paired_fairness_distribution(0.4)
        assert np.allclose(q.probs, [0.45, 0.45, 0.05, 0.05])
        q6 = paired_fairness_distribution(0.6)
        assert np.allclose(q6.probs, [0.27, 0.63, 0.03, 0.07])
        with pytest.raises(ValueError):
            paired_fairness_distribution(0.95)

    def test_analytic_drifts(self):
        score = parity_betting_score(0.6)
        assert paired_fairness_distribution(0.4).expectation(score.score) == pytest.approx(0.1)
        assert paired_fairness_distribution(0.6).expectation(score.score) == pytest.approx(-0.06)

    def test_drift_signs_match_simulation(self):
        # empirical mean of the betting score over 1e5 draws within 3 SE of analytic
        from credalmarket.evidence import SampleStream, sample

        score = parity_betting_score(0.6)
        for gamma, drift in ((0.4, 0.1), (0.6, -0.06)):
            q = paired_fairness_distribution(gamma)
            z = sample(SampleStream(q, seed=101), 100_000)
            values = score.score[z]
            se = values.std(ddof=1) / np.sqrt(values.size)
            assert abs(values.mean() - drift) <= 3.0 * se

    def test_parity_credal_set_is_the_threshold_polytope(self):
        cs = parity_credal_set(0.6, 10)
        h = np.array([0.0, 1.0, 1.0, 0.0])
        assert all(v.expectation(h) >= 0.6 - 1e-12 for v in cs.vertices)

    def test_bet_zero_control_is_flat(self):
        cfg = FairnessConfig(runs=2, n=50, bet_zero_control=True)
        table = run_fairness(cfg)
        assert np.allclose(table.column("betting_mean"), cfg.params.C)

    def test_small_run_headlines(self):
        cfg = FairnessConfig(runs=4, n=800, seed=11)
        h = run_fairness(cfg).headline
        assert h["betting_final_mean_gamma=0.4"] > cfg.params.C
        assert h["betting_final_mean_gamma=0.6"] < cfg.params.C
        assert h["analytic_drift_gamma=0.4"] == pytest.approx(0.1)
        assert h["analytic_drift_gamma=0.6"] == pytest.approx(-0.06)

    def test_burn_in_estimates_the_type(self):
        cfg = FairnessConfig(runs=2, n=400, burn_in=100, seed=11, gammas=(0.4,))
        table = run_fairness(cfg)
        explicit = table.column("explicit_mean")
        assert np.allclose(explicit[:100], cfg.params.C)  # flat during calibration
        assert explicit[-1] > cfg.params.C  # grows afterwards

    def test_explicit_route_caps_no_later_than_betting(self):
        # seeded regression: both routes share sample paths and the same
        # asymptotic growth rate; the explicit route skips the learning cost
        cfg = FairnessConfig(runs=15, n=2500, seed=11, gammas=(0.4,))
        table = run_fairness(cfg)
        betting = table.column("betting_mean")
        explicit = table.column("explicit_mean")
        cap = cfg.params.R - 1e-9
        bet_step = int(np.argmax(betting >= cap))
        exp_step = int(np.argmax(explicit >= cap))
        assert betting[bet_step] >= cap and explicit[exp_step] >= cap
        assert exp_step <= bet_step


@pytest.fixture(scope="module")
def small_table():
    cfg = Chi2Config(n_per_test=400, mc_calibration=20_000, mc_power=20_000, seed=3)
    return cfg, run_chi2_strategic(cfg)


class TestChi2:
    def test_alpha_zero_never_rejects(self, small_table):
        _, table = small_table
        first = table.rows[0]
        assert first[0] == 0.0 and first[1] == 0.0 and first[2] == 0.0 and first[3] == 0.0

    def test_power_curve_monotone(self, small_table):
        _, table = small_table
        powers = table.column("power")
        assert np.all(np.diff(powers) >= 0.0)

    def test_null_participation_flips_at_fee_cap_ratio(self, small_table):
        cfg, table = small_table
        ratio = cfg.params.C / cfg.params.R
        for row in table.rows:
            alpha, _, null_enter, _, null_approved = row
            assert null_enter == (1.0 if alpha >= ratio else 0.0)
            assert null_approved == (alpha if null_enter else 0.0)

    def test_compliant_participation_non_decreasing(self, small_table):
        _, table = small_table
        enter = table.column("compliant_enter")
        assert np.all(np.diff(enter) >= 0.0)

    def test_rates_stay_in_unit_interval(self, small_table):
        _, table = small_table
        for col in ("power", "null_enter", "compliant_enter", "null_approved"):
            vals = table.column(col)
            assert np.all(vals >= 0.0) and np.all(vals <= 1.0)


class TestSpurious:
    def test_equal_surrogates_give_identical_trajectories(self):
        q = (0.7, 0.1, 0.15, 0.05)
        cfg = SpuriousConfig(q_compliant=q, q_noncompliant=q, runs=3, n=100, burn_in=10)
        table = run_synthetic_spurious(cfg)
        lic = [r for r in table.rows if r[0] == "license"]
        compliant = [r[3] for r in lic if r[1] == "compliant"]
        non = [r[3] for r in lic if r[1] == "non_compliant"]
        assert compliant == non

    def test_default_story(self):
        cfg = SpuriousConfig(runs=4, n=500)
        h = run_synthetic_spurious(cfg).headline
        assert h["compliant_final_mean"] == pytest.approx(cfg.params.R)
        assert h["non_compliant_final_mean"] <= cfg.params.C + 1e-9
        assert abs(h["easy_group_ratio"] - 1.0) <= 0.15
        assert h["hard_group_ratio"] > 1.0

    def test_ratio_rows_present(self):
        cfg = SpuriousConfig(runs=2, n=50, burn_in=10)
        table = run_synthetic_spurious(cfg)
        ratio_keys = {r[1] for r in table.rows if r[0] == "ratio"}
        assert {"easy_group", "hard_group"} <= ratio_keys
        assert len(ratio_keys) == 6


class TestConfigLoading:
    def test_defaults(self):
        cfg = load_config("simplex_gaming")
        assert cfg == SimplexGamingConfig()

    def test_overrides_and_seed(self):
        cfg = load_config("fairness", {"runs": 5, "params": {"C": 10.0, "R": 100.0}}, seed=99)
        assert cfg.runs == 5 and cfg.seed == 99
        assert cfg.params == MechanismParams(10.0, 100.0)

    def test_unknown_scenario(self):
        with pytest.raises(ValueError):
            load_config("nope")

    def test_unknown_field(self):
        with pytest.raises(ValueError):
            load_config("fairness", {"bogus": 1})

    def test_result_table_shape_checked(self):
        with pytest.raises(ValueError):
            ResultTable("s", 0, "h", ("a", "b"), ((1,),))
