import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mesm.baselines import (KrigingMarginals, MetricReport, QlrMarginals,
                            evaluate_models, fit_qlr, fit_qsk, fit_sk, l1_score,
                            pinball_loss, pmd, wasserstein_1d)
from mesm.errors import DataValidationError
from mesm.marginal import DesignMatrix
from mesm.synth import maximin_lhd


class TestWasserstein:
    def test_identity(self):
        a = np.array([3.0, 1.0, 2.0])
        assert wasserstein_1d(a, a) == 0.0

    def test_shift(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=200)
        assert wasserstein_1d(a, a + 0.7) == pytest.approx(0.7, abs=1e-12)

    def test_hand_computed(self):
        assert wasserstein_1d([0.0, 1.0], [1.0, 3.0]) == pytest.approx(1.5)

    def test_symmetry_and_length_check(self):
        a = np.array([0.0, 2.0, 5.0])
        b = np.array([1.0, 1.0, 4.0])
        assert wasserstein_1d(a, b) == wasserstein_1d(b, a)
        with pytest.raises(DataValidationError):
            wasserstein_1d(a, b[:2])

    @settings(max_examples=100, deadline=None)
    @given(arrays(float, (3, 20), elements=st.floats(-100, 100)))
    def test_metric_properties(self, triple):
        a, b, c = triple
        dab = wasserstein_1d(a, b)
        dbc = wasserstein_1d(b, c)
        dac = wasserstein_1d(a, c)
        assert dab >= 0
        assert dab == pytest.approx(wasserstein_1d(b, a), rel=1e-12)
        assert dac <= dab + dbc + 1e-9


class TestPmd:
    def test_basic(self):
        assert pmd(np.full(10, 10.0), np.full(10, 9.0)) == pytest.approx(0.1)

    def test_identity(self):
        a = np.array([1.0, 2.0, 3.0])
        assert pmd(a, a) == 0.0

    def test_sign_flip(self):
        assert pmd(np.full(4, -10.0), np.full(4, -9.0)) == pytest.approx(0.1)

    def test_zero_mean_rejected(self):
        with pytest.raises(DataValidationError):
            pmd(np.array([-1.0, 1.0]), np.array([1.0, 2.0]))


class TestL1Score:
    def test_examples(self):
        assert l1_score((0.5, 0.02), (0.5, 0.02)) == 0.0
        assert l1_score((0.6, 0.12), (0.5, 0.02)) == pytest.approx(0.2)

    def test_random_pairs(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a, b = rng.uniform(size=(2, 3))
            assert l1_score(a, b) == pytest.approx(sum(abs(x - y) for x, y in zip(a, b)))


class TestQlr:
    def test_noiseless_line_any_quantile(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(size=(200, 2))
        y = 2.0 * x[:, 0] + 1.0
        for q in (0.1, 0.5, 0.9):
            model = fit_qlr(x, y, q)
            assert model.coef[0] == pytest.approx(2.0, abs=1e-4)
            assert model.coef[1] == pytest.approx(0.0, abs=1e-4)
            assert model.intercept == pytest.approx(1.0, abs=1e-4)

    def test_known_conditional_quantile(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(size=(10_000, 1))
        y = 2.0 * x[:, 0] + 1.0 + rng.uniform(size=10_000)
        for q in (0.5, 0.9):
            model = fit_qlr(x, y, q)
            # uniform noise: conditional q-quantile line is 2x + 1 + q
            assert model.coef[0] == pytest.approx(2.0, abs=0.05)
            assert model.intercept == pytest.approx(1.0 + q, abs=0.05)

    def test_median_equals_lad_objective(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(300, 2))
        y = x[:, 0] - 0.5 * x[:, 1] + rng.standard_t(3, size=300)
        model = fit_qlr(x, y, 0.5)
        resid = y - model.predict(x)
        assert model.objective == pytest.approx(0.5 * np.abs(resid).sum(), rel=1e-9)
        # pinball objective no worse than at the least-squares coefficients
        design = np.column_stack([x, np.ones(300)])
        ls, *_ = np.linalg.lstsq(design, y, rcond=None)
        ls_obj = pinball_loss(y - design @ ls, 0.5)
        assert model.objective <= ls_obj + 1e-9

    def test_rank_deficiency_flagged(self):
        x = np.column_stack([np.arange(50.0), np.arange(50.0)])
        model = fit_qlr(x, np.arange(50.0), 0.5)
        assert model.rank_deficient

    def test_bad_quantile(self):
        with pytest.raises(DataValidationError):
            fit_qlr(np.ones((10, 1)) * np.arange(10)[:, None], np.ones(10), 1.5)


@pytest.fixture
def designs_1d():
    return DesignMatrix(np.linspace(0.0, 1.0, 12)[:, None])


class TestStochasticKriging:
    def test_zero_variance_interpolates(self, designs_1d):
        means = np.sin(3 * designs_1d.values[:, 0])
        replicates = np.tile(means[:, None], (1, 5))
        model = fit_sk(designs_1d, replicates, seed=0)
        pred, _ = model.predict(designs_1d.values)
        assert np.max(np.abs(pred - means)) < 1e-6
        assert model.noise_mean < 1e-20

    def test_gp_draw_recovery(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(size=(40, 1))
        diff = (x[:, None, :] - x[None, :, :]) / 0.3
        cov = np.exp(-0.5 * (diff**2).sum(-1)) + 1e-10 * np.eye(40)
        latent = np.linalg.cholesky(cov) @ rng.standard_normal(40)
        replicates = latent[:, None] + rng.normal(scale=0.1, size=(40, 30))
        model = fit_sk(DesignMatrix(x), replicates, seed=1)
        ls = model.surface.hyperparams.length_scales[0]
        assert 0.15 < ls < 0.6

    def test_variance_smaller_at_design_points(self, designs_1d):
        # information ordering on average: observed inputs are better known
        # than gaps (per-point ordering can flip where a midpoint borrows
        # strength from both neighbors while a design point carries noise)
        x = designs_1d.values
        rng = np.random.default_rng(6)
        diff = (x[:, None, :] - x[None, :, :]) / 0.15
        cov = np.exp(-0.5 * (diff**2).sum(-1)) + 1e-10 * np.eye(12)
        latent = np.linalg.cholesky(cov) @ rng.standard_normal(12)
        base_noise = rng.normal(scale=0.1, size=500)
        replicates = latent[:, None] + np.vstack(
            [rng.permutation(base_noise) for _ in range(12)])
        model = fit_sk(designs_1d, replicates, seed=2)
        midpoints = ((x[:-1, 0] + x[1:, 0]) / 2)[:, None]
        _, var_design = model.predict(x)
        _, var_mid = model.predict(midpoints)
        assert var_design.mean() < var_mid.mean()


class TestQuantileStochasticKriging:
    def test_zero_quantile_equals_sk_bitwise(self, designs_1d):
        rng = np.random.default_rng(7)
        replicates = rng.gumbel(size=(12, 40))
        sk = fit_sk(designs_1d, replicates, seed=3)
        qsk = fit_qsk(designs_1d, replicates, 0.0, seed=3)
        grid = np.linspace(0, 1, 25)[:, None]
        m1, v1 = sk.predict(grid)
        m2, v2 = qsk.predict(grid)
        assert np.array_equal(m1, m2)
        assert np.array_equal(v1, v2)

    def test_retention_count(self, designs_1d):
        # q=0.99 on 500 replicates keeps the top ceil(5) = 5 values
        replicates = np.tile(np.arange(500.0), (12, 1))
        model = fit_qsk(designs_1d, replicates, 0.99, seed=4)
        pred, _ = model.predict(designs_1d.values)
        assert np.allclose(pred, np.mean([495, 496, 497, 498, 499]), atol=1e-6)

    def test_tail_mean_exponential(self, designs_1d):
        # memoryless tail: E[X | X > q-quantile] = -log(1-q) + 1
        rng = np.random.default_rng(8)
        replicates = rng.exponential(size=(12, 20_000))
        q = 0.9
        model = fit_qsk(designs_1d, replicates, q, seed=5)
        pred, _ = model.predict(designs_1d.values)
        expected = -np.log(1 - q) + 1.0
        assert np.max(np.abs(pred - expected)) < 0.1

    def test_bad_quantile(self, designs_1d):
        with pytest.raises(DataValidationError):
            fit_qsk(designs_1d, np.ones((12, 5)), 1.0)


class _FixedSampler:
    """Test double: marginal draws from a fixed generator per cell."""

    parameter = "-"
    train_seconds = 0.0

    def __init__(self, draw):
        self._draw = draw

    def prepare(self, s):
        return s

    def sample_marginal(self, state, j, n, rng):
        return self._draw(n, rng)


class TestEvaluateModels:
    def test_truth_sampler_hits_noise_floor(self):
        rng = np.random.default_rng(9)
        test_maxima = rng.normal(10.0, 1.0, size=(4, 30, 3))
        truth = _FixedSampler(lambda n, r: r.normal(10.0, 1.0, size=n))
        shifted = _FixedSampler(lambda n, r: r.normal(14.0, 1.0, size=n))
        rows = evaluate_models({"truth": truth, "shifted": shifted},
                               np.zeros((4, 2)), test_maxima, seed=0)
        by_name = {r.model: r for r in rows}
        # two draws from the same law: WD stays near the sampling floor
        assert by_name["truth"].wd.mean < 0.5
        assert by_name["shifted"].wd.mean > 3.0
        assert by_name["truth"].pmd.mean < by_name["shifted"].pmd.mean

    def test_degenerate_constant_model_flagged_large(self):
        rng = np.random.default_rng(10)
        test_maxima = rng.normal(10.0, 2.0, size=(3, 25, 2))
        constant = _FixedSampler(lambda n, r: np.full(n, 10.0))
        rows = evaluate_models({"const": constant}, np.zeros((3, 1)), test_maxima,
                               seed=0)
        # a point mass cannot match the spread; WD is bounded away from zero
        assert rows[0].wd.mean > 1.0

    def test_qlr_adapter_has_no_wd(self, designs_1d):
        model = fit_qlr(np.linspace(0, 1, 50)[:, None],
                        np.linspace(0, 1, 50) * 2 + 1, 0.5)
        adapter = QlrMarginals([model, model], "q=0.5", 0.0)
        test_maxima = np.random.default_rng(11).normal(2.0, 0.5, size=(2, 20, 2))
        rows = evaluate_models({"QLR": adapter}, np.array([[0.2], [0.8]]),
                               test_maxima, seed=0)
        assert rows[0].wd is None
        assert rows[0].pmd.mean >= 0

    def test_metric_report_validation(self):
        with pytest.raises(DataValidationError):
            MetricReport(metric="WD", per_point=np.array([-1.0]), mean=-1.0, sd=0.0)
