import itertools
import math

import numpy as np
import pytest
from scipy.stats import norm

from mesm.brownresnick import BrownResnickModel, hr_log_pairwise_density
from mesm.errors import DataValidationError
from mesm.likelihood import (CompositeLikelihoodSpec, composite_loglik, fit_tau,
                             qg_sweep)
from mesm.space import CliqueGraph, CriticalPointSpace, generate_graph


def oracle_log_density(tau, u1, u2, z1, z2):
    """Independent pairwise log density: scipy.stats.norm, explicit algebra."""
    h = np.asarray(u1, dtype=float) - np.asarray(u2, dtype=float)
    corr = math.exp(-float(np.sum(h**2 / (2.0 * np.asarray(tau) ** 2))))
    a = math.sqrt(2.0 * (1.0 - corr))
    w = a / 2.0 + math.log(z2 / z1) / a
    v = a / 2.0 + math.log(z1 / z2) / a
    V = norm.cdf(w) / z1 + norm.cdf(v) / z2
    dV1 = -norm.cdf(w) / z1**2
    dV2 = -norm.cdf(v) / z2**2
    dV12 = -norm.pdf(w) / (a * z1**2 * z2)
    return -V + math.log(dV1 * dV2 - dV12)


def oracle_composite(tau, coords, data, cliques):
    total = 0.0
    for row in data:
        for i, k in cliques:
            total += oracle_log_density(tau, coords[i], coords[k], row[i], row[k])
    return total


@pytest.fixture
def toy():
    coords = np.array([[0.0, 0.0], [0.4, 0.1], [1.0, 0.7]])
    space = CriticalPointSpace(coordinates=coords)
    rng = np.random.default_rng(0)
    data = 1.0 / -np.log(rng.uniform(size=(6, 3)))
    return space, data


class TestCompositeLoglik:
    def test_single_block_single_clique(self, toy):
        space, data = toy
        graph = CliqueGraph(order=2, cliques=np.array([[0, 2]]),
                            deltas=np.array([1.1]), quantile=0.1, n_points=3)
        model = BrownResnickModel(tau=np.array([0.7, 0.9]), space=space)
        result = composite_loglik(model, data[:1], CompositeLikelihoodSpec(graph))
        expected = hr_log_pairwise_density(
            float(np.sqrt(2 * (1 - np.exp(-((1.0**2) / (2 * 0.7**2)
                                            + (0.7**2) / (2 * 0.9**2)))))),
            data[0, 0], data[0, 2])
        assert result.value == pytest.approx(expected, rel=1e-12)
        assert result.n_terms == 1

    def test_full_graph_is_all_pairs(self, toy):
        space, data = toy
        model = BrownResnickModel(tau=np.array([0.7, 0.9]), space=space)
        full = generate_graph(space, 2, 1.0)
        result = composite_loglik(model, data, CompositeLikelihoodSpec(full))
        by_hand = sum(
            hr_log_pairwise_density(
                float(np.sqrt(2 * (1 - np.exp(
                    -np.sum((space.coordinates[i] - space.coordinates[k]) ** 2
                            / (2 * np.array([0.7, 0.9]) ** 2)))))),
                data[b, i], data[b, k])
            for b in range(6) for i, k in itertools.combinations(range(3), 2))
        assert result.value == pytest.approx(by_hand, rel=1e-12)
        assert result.n_terms == 6 * 3

    def test_matches_independent_oracle(self, toy):
        space, data = toy
        tau = np.array([0.6, 1.2])
        model = BrownResnickModel(tau=tau, space=space)
        graph = generate_graph(space, 2, 1.0)
        result = composite_loglik(model, data, CompositeLikelihoodSpec(graph))
        expected = oracle_composite(tau, space.coordinates, data,
                                    [tuple(c) for c in graph.cliques])
        assert result.value == pytest.approx(expected, abs=1e-10)

    def test_reordering_invariance(self, toy):
        space, data = toy
        model = BrownResnickModel(tau=np.array([0.7, 0.9]), space=space)
        graph = generate_graph(space, 2, 1.0)
        base = composite_loglik(model, data, CompositeLikelihoodSpec(graph)).value
        rng = np.random.default_rng(1)
        for _ in range(5):
            perm_blocks = rng.permutation(data.shape[0])
            perm_cliques = rng.permutation(len(graph))
            shuffled = CliqueGraph(order=2, cliques=graph.cliques[perm_cliques],
                                   deltas=graph.deltas[perm_cliques],
                                   quantile=1.0, n_points=3)
            value = composite_loglik(model, data[perm_blocks],
                                     CompositeLikelihoodSpec(shuffled)).value
            assert value == pytest.approx(base, abs=1e-9)

    def test_term_count(self, toy):
        space, data = toy
        model = BrownResnickModel(tau=np.array([0.7, 0.9]), space=space)
        graph = generate_graph(space, 2, 0.5)
        result = composite_loglik(model, data, CompositeLikelihoodSpec(graph))
        assert result.n_terms == len(graph) * data.shape[0]

    def test_floor_clamps_and_counts(self, toy):
        space, data = toy
        bad = data.copy()
        bad[0, 0] = 1e280  # wild outlier pair: log density far below any floor
        model = BrownResnickModel(tau=np.array([0.7, 0.9]), space=space)
        graph = generate_graph(space, 2, 1.0)
        result = composite_loglik(model, bad,
                                  CompositeLikelihoodSpec(graph, term_floor=-700.0))
        assert result.n_clamped > 0
        assert np.isfinite(result.value)

    def test_nonpositive_data_rejected(self, toy):
        space, data = toy
        data = data.copy()
        data[0, 0] = 0.0
        model = BrownResnickModel(tau=np.array([0.7, 0.9]), space=space)
        graph = generate_graph(space, 2, 1.0)
        with pytest.raises(DataValidationError):
            composite_loglik(model, data, CompositeLikelihoodSpec(graph))

    def test_order_three_rejected(self, toy):
        space, _ = toy
        graph = generate_graph(space, 3, 1.0)
        with pytest.raises(DataValidationError, match="order"):
            CompositeLikelihoodSpec(graph)


class TestFitTau:
    def test_fixed_point_refit(self, toy):
        space, data = toy
        graph = generate_graph(space, 2, 1.0)
        first = fit_tau(data, space, graph, seed=0)
        again = fit_tau(data, space, graph, tau0=first.model.tau, restarts=1, seed=0)
        assert again.loglik >= first.loglik - 1e-6
        assert np.allclose(again.model.tau, first.model.tau, rtol=1e-3)

    def test_complete_dependence_hits_bound(self):
        coords = np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.5]])
        space = CriticalPointSpace(coordinates=coords)
        rng = np.random.default_rng(2)
        col = 1.0 / -np.log(rng.uniform(size=30))
        data = np.column_stack([col, col, col])
        graph = generate_graph(space, 2, 1.0)
        fit = fit_tau(data, space, graph, bounds=(1e-3, 100.0), seed=0)
        assert fit.diagnostics["at_bound"]
        assert np.all(fit.model.tau > 50.0)

    def test_final_loglik_not_below_start(self, toy):
        space, data = toy
        graph = generate_graph(space, 2, 1.0)
        tau0 = np.array([0.3, 0.3])
        model0 = BrownResnickModel(tau=tau0, space=space)
        start = composite_loglik(model0, data, CompositeLikelihoodSpec(graph)).value
        fit = fit_tau(data, space, graph, tau0=tau0, seed=0)
        assert fit.loglik >= start

    def test_diagnostics_shape(self, toy):
        space, data = toy
        graph = generate_graph(space, 2, 1.0)
        fit = fit_tau(data, space, graph, seed=0)
        for key in ("iterations", "evaluations", "n_clamped", "seconds", "at_bound"):
            assert key in fit.diagnostics

    def test_bad_bounds_rejected(self, toy):
        space, data = toy
        graph = generate_graph(space, 2, 1.0)
        with pytest.raises(DataValidationError):
            fit_tau(data, space, graph, bounds=(1.0, 0.5))
        with pytest.raises(DataValidationError):
            fit_tau(data, space, graph, tau0=np.array([1000.0, 1.0]))


class TestSweep:
    def test_small_sweep_records(self):
        records = qg_sweep([0.5, 1.0], replications=2, seed=7)
        assert len(records) == 4
        assert {r.q_g for r in records} == {0.5, 1.0}
        assert all(r.seconds > 0 for r in records)
        assert all(np.isfinite(r.score) for r in records)

    def test_term_count_grows_with_quantile(self):
        # more cliques means more evaluation work per likelihood call
        from mesm.synth import gen_simulation_study
        space, data = gen_simulation_study(seed=3)
        small = generate_graph(space, 2, 0.2)
        large = generate_graph(space, 2, 1.0)
        assert len(small) < len(large)
