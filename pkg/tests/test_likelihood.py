import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import STAIRCASES, random_margins
from marglik.core_tables import MarginPair, TableLimitError, enumerate_tables
from marglik.extreme_tables import enumerate_extremes, epsilon_complete, tail_sums
from marglik.likelihood import (
    EIDataset,
    ParamVector,
    ScoreSet,
    UnitBudgetError,
    check_cond_probs,
    cond_expectations,
    dataset_eval,
    dataset_loglik,
    dataset_score,
    empirical_information,
    extreme_params,
    inverse_link,
    link,
    marginal_loglik,
    table_weights,
    unit_score,
    v_stat,
)
from marglik.scan import independence_params
from marglik.simulate import TRUE_PI, simulate_units
from oracles import brute_force_tables, multinomial_marginal_loglik, softmax_rows, weighted_mean_table


def random_params(rng, R, C, scale=1.0):
    return ParamVector(rng.normal(0, scale, C - 1), rng.normal(0, scale, (R - 1, C - 1)))


def fd_gradient(f, beta, h=1e-5):
    g = np.empty_like(beta)
    for k in range(beta.size):
        e = np.zeros_like(beta)
        e[k] = h
        g[k] = (f(beta + e) - f(beta - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-300)


class TestParamVector:
    def test_pack_order(self):
        p = ParamVector([1.0, 2.0], [[3.0, 4.0], [5.0, 6.0]])
        assert p.pack().tolist() == [1, 2, 3, 4, 5, 6]
        assert ParamVector.unpack(p.pack(), 3, 3).pack().tolist() == p.pack().tolist()
        assert p.size == 6

    def test_full_matrices(self):
        p = ParamVector([1.0], [[2.0]])
        assert p.full_phi().tolist() == [0.0, 1.0]
        assert p.full_lambda().tolist() == [[0.0, 0.0], [0.0, 2.0]]

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            ParamVector([np.inf], [[0.0]])


class TestLink:
    def test_zero_params_uniform(self):
        np.testing.assert_allclose(link(ParamVector.zeros(3, 4)), np.full((3, 4), 0.25))

    def test_phi_only(self):
        p = link(ParamVector([math.log(2)], [[0.0]]))
        np.testing.assert_allclose(p, [[1 / 3, 2 / 3], [1 / 3, 2 / 3]], atol=1e-15)

    def test_true_pi_roundtrip(self):
        np.testing.assert_allclose(link(inverse_link(TRUE_PI)), TRUE_PI, atol=1e-12)

    def test_large_logits_stable(self):
        p = link(ParamVector([800.0, -800.0], [[900.0, 0.0]]))
        assert np.isfinite(p).all()
        check_cond_probs(p)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(2, 5))
    def test_matches_softmax_and_inverts(self, seed, R, C):
        rng = np.random.default_rng(seed)
        params = random_params(rng, R, C, 2.0)
        p = link(params)
        np.testing.assert_allclose(p, softmax_rows(params.logits()), atol=1e-14)
        back = inverse_link(p)
        np.testing.assert_allclose(back.pack(), params.pack(), atol=1e-9)

    def test_check_cond_probs(self):
        with pytest.raises(ValueError):
            check_cond_probs([[0.5, 0.6]])
        with pytest.raises(ValueError):
            check_cond_probs([[1.2, -0.2]])


class TestVStat:
    def test_zero(self):
        assert v_stat(np.array([[3, 1], [2, 5]]), 0.0) == 0.0

    def test_single_cell(self):
        assert v_stat(np.array([[1, 0], [0, 1]]), [[3.0]]) == 3.0

    def test_z1_all_ones(self):
        assert v_stat(np.array(STAIRCASES[0][1]), np.ones((3, 3))) == 142

    def test_bilinear(self):
        rng = np.random.default_rng(1)
        a, b = rng.integers(0, 9, (2, 3, 3))
        l1, l2 = rng.normal(size=(2, 2, 2))
        assert v_stat(a + b, l1) == pytest.approx(v_stat(a, l1) + v_stat(b, l1))
        assert v_stat(a, 2 * l1 - l2) == pytest.approx(2 * v_stat(a, l1) - v_stat(a, l2))


class TestCondExpectations:
    def test_hypergeometric_mean(self, margins33):
        M = cond_expectations(margins33, 0.0).values
        np.testing.assert_allclose(M, np.outer(margins33.rows, margins33.cols) / margins33.n, atol=1e-10)

    def test_two_by_two_brute_force(self):
        m = MarginPair((2, 2), (2, 2))
        M = cond_expectations(m, [[math.log(4)]]).values
        # weights 4^k / prod n_ij! over n11 = 0, 1, 2: 1/4, 4, 16/4
        assert M[0, 0] == pytest.approx(16 / 11, abs=1e-12)
        assert M[1, 1] == pytest.approx(M[0, 0], abs=1e-12)
        oracle = weighted_mean_table(brute_force_tables((2, 2), (2, 2)), [[0, 0], [0, math.log(4)]])
        np.testing.assert_allclose(M, oracle, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(2, 3), st.integers(4, 14))
    def test_matches_oracle(self, seed, R, C, n):
        rng = np.random.default_rng(seed)
        m = random_margins(rng, R, C, n)
        lam = rng.normal(0, 1.5, (R - 1, C - 1))
        full = np.zeros((R, C))
        full[1:, 1:] = lam
        M = cond_expectations(m, lam).values
        oracle = weighted_mean_table(brute_force_tables(m.row_totals, m.col_totals), full)
        np.testing.assert_allclose(M, oracle, atol=1e-10)

    def test_margins_preserved(self):
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 25:
            R, C = rng.integers(2, 5, 2)
            m = random_margins(rng, R, C, int(rng.integers(max(R, C), 25)))
            try:
                coll = enumerate_tables(m, limit=10_000)
            except TableLimitError:
                continue
            checked += 1
            M = cond_expectations(coll, rng.normal(0, 3, (R - 1, C - 1))).values
            np.testing.assert_allclose(M.sum(axis=1), m.rows, atol=1e-8)
            np.testing.assert_allclose(M.sum(axis=0), m.cols, atol=1e-8)

    def test_budget(self, margins33):
        with pytest.raises(TableLimitError):
            cond_expectations(margins33, 0.0, limit=10)

    def test_weights_normalized(self, tables33):
        rng = np.random.default_rng(5)
        w = table_weights(tables33, rng.normal(0, 5, (2, 2)))
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert (w >= 0).all()

    def test_extreme_limit(self, margins33, tables33):
        for z in enumerate_extremes(margins33):
            xl = epsilon_complete(z, 50.0)
            M = cond_expectations(tables33, xl).values
            assert np.abs(M - z.entries).max() < 1e-6


class TestMarginalLoglik:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(2, 3), st.integers(3, 12))
    def test_matches_multinomial_oracle(self, seed, R, C, n):
        rng = np.random.default_rng(seed)
        m = random_margins(rng, R, C, max(n, R, C))
        params = random_params(rng, R, C)
        tables = brute_force_tables(m.row_totals, m.col_totals)
        expected = multinomial_marginal_loglik(tables, m.row_totals, softmax_rows(params.logits()))
        assert marginal_loglik(m, params) == pytest.approx(expected, abs=1e-9)

    def test_single_row(self):
        from scipy.stats import multinomial

        m = MarginPair((10,), (3, 5, 2))
        params = ParamVector([0.4, -0.3], np.zeros((0, 2)))
        p = link(params)[0]
        expected = multinomial.logpmf([3, 5, 2], 10, p) - math.lgamma(11)
        assert marginal_loglik(m, params) == pytest.approx(expected, abs=1e-12)

    def test_relabel_invariance(self):
        rng = np.random.default_rng(8)
        m = MarginPair((4, 3, 5), (2, 6, 4))
        P = softmax_rows(rng.normal(size=(3, 3)))
        base = marginal_loglik(m, inverse_link(P))
        for _ in range(5):
            pr, pc = rng.permutation(3), rng.permutation(3)
            m2 = MarginPair(tuple(np.array(m.row_totals)[pr]), tuple(np.array(m.col_totals)[pc]))
            P2 = P[np.ix_(pr, pc)]
            assert marginal_loglik(m2, inverse_link(P2)) == pytest.approx(base, abs=1e-10)

    def test_independence_below_tables(self, margins33, tables33):
        from marglik.scan import table_log_probs

        indep = marginal_loglik(tables33, independence_params(margins33))
        rng = np.random.default_rng(2)
        for k in rng.choice(tables33.count, 100, replace=False):
            lp = table_log_probs(tables33.tables[k], 115.13)
            from marglik.likelihood import params_from_log_probs

            assert marginal_loglik(tables33, params_from_log_probs(lp)) >= indep

    def test_shape_mismatch(self, margins33):
        with pytest.raises(ValueError):
            marginal_loglik(margins33, ParamVector.zeros(2, 3))


class TestUnitScore:
    def test_zero_at_independence(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            R, C = rng.integers(2, 4, 2)
            m = random_margins(rng, R, C, int(rng.integers(6, 30)))
            assert np.abs(unit_score(m, independence_params(m))).max() < 1e-8

    def test_finite_differences(self):
        rng = np.random.default_rng(6)
        for _ in range(24):
            R, C = rng.integers(2, 4, 2)
            m = random_margins(rng, R, C, int(rng.integers(6, 25)))
            coll = enumerate_tables(m)
            params = random_params(rng, R, C)
            g = unit_score(coll, params)
            fd = fd_gradient(lambda b: marginal_loglik(coll, ParamVector.unpack(b, R, C)), params.pack())
            assert rel_err(fd, g) < 1e-6

    def test_extreme_limit(self, margins33, tables33):
        for z in enumerate_extremes(margins33):
            params = extreme_params(epsilon_complete(z, 50.0))
            assert np.abs(unit_score(tables33, params)).max() < 1e-5

    def test_layout(self):
        m = MarginPair((3, 2), (1, 4))
        params = ParamVector([0.2], [[-0.5]])
        u = unit_score(m, params)
        p = link(params)
        assert u[0] == pytest.approx(4 - (3 * p[0, 1] + 2 * p[1, 1]))
        M = cond_expectations(m, params).values
        assert u[1] == pytest.approx(M[1, 1] - 2 * p[1, 1])


class TestExtremeWeights:
    """Weights of an extreme table against the rest of its collection."""

    def _coefficients(self, z, tables):
        xl = epsilon_complete(z, 1.0)
        D = z.perms.to_permuted(tables) - z.permuted_entries
        return xl, D, (D * xl.order).sum(axis=(1, 2))

    def test_xi_coefficient_via_second_differences(self, margins33, tables33):
        # V(N*) - V(Z) = xi * sum_st delta_st T_D(s, t) + const, delta the
        # second differences of the order matrix and T_D tail sums of N* - Z
        for z in enumerate_extremes(margins33):
            xl, D, coef = self._coefficients(z, tables33.tables)
            o = np.pad(xl.order, ((1, 0), (1, 0)))
            delta = o[1:, 1:] - o[:-1, 1:] - o[1:, :-1] + o[:-1, :-1]
            assert np.array_equal((tail_sums(D) * delta).sum(axis=(1, 2)), coef)
            for xi in (10.0, 20.0):
                v = D.reshape(len(D), -1) @ xl.at(xi).values().ravel()
                rem = (D * xl.offset).sum(axis=(1, 2))
                np.testing.assert_allclose(v, xi * coef + rem, atol=1e-9)

    def test_extreme_is_unique_maximizer(self, margins33, tables33):
        for z in enumerate_extremes(margins33):
            _, D, coef = self._coefficients(z, tables33.tables)
            self_ix = np.flatnonzero(~D.reshape(len(D), -1).any(axis=1))
            assert self_ix.size == 1
            others = np.delete(coef, self_ix)
            assert others.max() <= -1

    def test_ratio_decreases(self, margins33, tables33):
        from marglik.likelihood import table_log_weights

        for z in enumerate_extremes(margins33):
            k = tables33.index_of(z.entries)
            worst = []
            for xi in (10.0, 20.0, 40.0):
                lw = table_log_weights(tables33, epsilon_complete(z, xi))
                worst.append(np.delete(lw - lw[k], k).max())
            assert worst[0] > worst[1] > worst[2]


class TestDataset:
    @pytest.fixture
    def small(self):
        return EIDataset((MarginPair((4, 3, 5), (2, 6, 4)), MarginPair((3, 3, 2), (3, 1, 4)), MarginPair((2, 5, 3), (5, 3, 2))))

    def test_aggregates(self, small):
        assert small.agg_rows.tolist() == [9, 11, 10]
        assert small.agg_cols.tolist() == [10, 10, 10]
        np.testing.assert_allclose(small.U.sum(axis=1), 1.0)

    def test_single_unit(self, margins33):
        params = ParamVector([0.1, -0.2], [[0.3, 0.0], [0.5, -1.0]])
        d = EIDataset((margins33,))
        assert dataset_loglik(d, params) == marginal_loglik(margins33, params)
        np.testing.assert_array_equal(dataset_score(d, params).total, unit_score(margins33, params))

    def test_duplicated_unit(self, margins33):
        params = ParamVector([0.1, -0.2], [[0.3, 0.0], [0.5, -1.0]])
        d = EIDataset((margins33, margins33))
        ll, sc = dataset_eval(d, params)
        assert ll == 2 * marginal_loglik(margins33, params)
        np.testing.assert_array_equal(sc.total, 2 * unit_score(margins33, params))

    def test_total_is_row_sum(self, small):
        sc = dataset_score(small, ParamVector([0.1, 0.2], [[0.3, -0.4], [0.0, 0.7]]))
        np.testing.assert_allclose(sc.total, sc.per_unit.sum(axis=1), atol=1e-10)
        assert sc.per_unit.shape == (6, 3)

    def test_finite_differences_simulated(self):
        sim = simulate_units(s=60, n=40, seed=123)
        params = inverse_link(TRUE_PI)
        g = dataset_score(sim.data, params).total
        R, C = sim.data.shape
        fd = fd_gradient(lambda b: dataset_loglik(sim.data, ParamVector.unpack(b, R, C)), params.pack())
        assert rel_err(fd, g) < 1e-6

    def test_budget_names_unit(self, margins33):
        d = EIDataset((MarginPair((1, 1, 1), (1, 1, 1)), margins33), max_tables=100)
        with pytest.raises(UnitBudgetError) as info:
            d.collections
        assert info.value.unit == 1

    def test_mixed_shapes_rejected(self):
        with pytest.raises(ValueError):
            EIDataset((MarginPair((1, 1), (1, 1)), MarginPair((1, 1, 1), (1, 2))))


class TestEmpiricalInformation:
    def test_identical_scores(self):
        S = np.tile(np.array([[1.0], [2.0], [-3.0]]), 4)
        E = empirical_information(ScoreSet(S, S.sum(axis=1)))
        assert np.array_equal(E, np.zeros((3, 3)))

    def test_two_unit_toy(self):
        S = np.array([[1.0, -1.0], [0.0, 0.0], [0.0, 0.0]])
        E = empirical_information(ScoreSet(S, S.sum(axis=1)))
        np.testing.assert_array_equal(E, np.diag([2.0, 0.0, 0.0]))

    def test_needs_two_units(self):
        S = np.ones((2, 1))
        with pytest.raises(ValueError):
            empirical_information(ScoreSet(S, S[:, 0]))

    def test_singular_below_parameter_count(self):
        sim = simulate_units(s=5, n=40, seed=7)
        E = empirical_information(dataset_score(sim.data, inverse_link(TRUE_PI)))
        assert np.linalg.matrix_rank(E) < 6

    def test_symmetric_psd(self):
        sim = simulate_units(s=30, n=30, seed=9)
        E = empirical_information(dataset_score(sim.data, inverse_link(TRUE_PI)))
        np.testing.assert_allclose(E, E.T, atol=1e-10)
        assert np.linalg.eigvalsh(E).min() > -1e-8
