import numpy as np
import pytest
from hypothesis import given, strategies as st

from deconv_ht.deconvolve import FitConfig, fit
from deconv_ht.estimators import (
    BootstrapResult,
    EstimateReport,
    PopulationFrame,
    bootstrap_mse_term,
    ht_oracle_total,
    mht_proportions,
    mht_total,
    naive_proportions,
)
from deconv_ht.kernels import TruncatedGeometric, build_kernel_matrix, default_grid, per_attempt_prob
from deconv_ht.mixture import CountVector, DiscreteMixture, expected_inverse


def test_oracle_examples():
    assert ht_oracle_total(np.ones(10), PopulationFrame(100, 100)) == 10
    assert ht_oracle_total([0.5, 0.5], PopulationFrame(200, 100)) == 8
    assert ht_oracle_total([], PopulationFrame(10, 10)) == 0
    with pytest.raises(ValueError):
        ht_oracle_total([0.0], PopulationFrame(10, 10))


def test_frame_validation():
    with pytest.raises(ValueError):
        PopulationFrame(0, 10)
    with pytest.raises(ValueError):
        PopulationFrame(10, 0)
    assert PopulationFrame(30, 10).inflation == 3


def test_mht_total_examples():
    assert mht_total(DiscreteMixture([1.0], [1.0]), 50, PopulationFrame(20, 10)) == 100
    assert mht_total(DiscreteMixture([0.5], [1.0]), 50, PopulationFrame(10, 10)) == 100
    assert mht_total(DiscreteMixture([0.5], [1.0]), 0, PopulationFrame(10, 10)) == 0


@given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=6, unique=True),
       st.integers(0, 10_000), st.floats(1, 100), st.integers(0, 2**31))
def test_mht_total_definition(support, m, ratio, seed):
    w = np.random.default_rng(seed).dirichlet(np.ones(len(support)))
    g = DiscreteMixture(sorted(support), w / w.sum())
    frame = PopulationFrame(ratio * 1000, 1000)
    direct = (frame.N / frame.I) * m * sum(wi / si for wi, si in zip(g.weights, g.support))
    assert mht_total(g, m, frame) == pytest.approx(direct, rel=1e-12)


def test_mht_proportions_examples():
    np.testing.assert_allclose(mht_proportions([(100, DiscreteMixture([0.5], [1.0])),
                                                (100, DiscreteMixture([1.0], [1.0]))]), [2 / 3, 1 / 3])
    np.testing.assert_array_equal(mht_proportions([(7, DiscreteMixture([0.3], [1.0])), (0, None)]), [1, 0])
    with pytest.raises(ValueError):
        mht_proportions([(0, None), (0, None)])


def test_naive_proportions_examples():
    assert round(naive_proportions([421, 503])[0], 4) == 0.4556
    np.testing.assert_array_equal(naive_proportions([1, 0]), [1, 0])
    np.testing.assert_array_equal(naive_proportions([5, 5]), [0.5, 0.5])


@given(st.lists(st.integers(0, 1000), min_size=2, max_size=5).filter(lambda m: sum(m) > 0),
       st.integers(0, 2**31))
def test_shared_mixture_reduces_to_naive(m, seed):
    rng = np.random.default_rng(seed)
    g = DiscreteMixture([0.2, 0.55, 1.0], rng.dirichlet(np.ones(3)))
    np.testing.assert_allclose(mht_proportions([(mi, g) for mi in m]), naive_proportions(m), rtol=1e-14)


@given(st.floats(0.01, 1e3))
def test_proportions_scale_invariant(c):
    fits = [(120, DiscreteMixture([0.3, 1.0], [0.4, 0.6])), (80, DiscreteMixture([0.6, 0.9], [0.5, 0.5]))]
    totals = [mht_total(g, m, PopulationFrame(1000, 500)) for m, g in fits]
    scaled = [mht_total(g, m, PopulationFrame(1000 * c, 500 * c)) for m, g in fits]
    np.testing.assert_allclose(np.array(totals) / sum(totals), np.array(scaled) / sum(scaled), rtol=1e-12)
    np.testing.assert_allclose(np.array(totals) / sum(totals), mht_proportions(fits), rtol=1e-12)


def test_report_validation():
    with pytest.raises(ValueError):
        EstimateReport("bogus", np.array([1.0]))
    EstimateReport("mht", np.array([0.4, 0.6]))


def test_oracle_unbiased_small():
    rng = np.random.default_rng(5)
    p = rng.uniform(0.2, 1.0, size=200)
    frame = PopulationFrame(400, 200)
    T = 400.0  # every unit counts once, inflated by N/I
    draws = np.array([ht_oracle_total(p[rng.random(200) < p], frame) for _ in range(4000)])
    se = draws.std(ddof=1) / np.sqrt(len(draws))
    assert abs(draws.mean() - T) < 3 * se


# bootstrap --------------------------------------------------------------------

M0 = 4
KERNEL = TruncatedGeometric(M0)
P = build_kernel_matrix(default_grid(KERNEL), KERNEL)


def test_bootstrap_point_mass_is_zero():
    g = DiscreteMixture.point_mass(P.p_star, P.n_support - 1)
    res = bootstrap_mse_term(g, 200, PopulationFrame(2, 1), P, K=20, seed=1)
    assert float(res) == 0.0 and res.failures == 0


def test_bootstrap_single_replicate_definition():
    g = DiscreteMixture(P.p_star, np.eye(P.n_support)[[5, 30]].T @ [0.5, 0.5])
    frame = PopulationFrame(3000, 1000)
    res = bootstrap_mse_term(g, 300, frame, P, K=1, seed=9)
    T_hat = res.replicates[0]
    assert float(res) == pytest.approx((T_hat - mht_total(g, 300, frame)) ** 2, rel=1e-12)
    assert res.K == 1 and res.seed == 9


def test_bootstrap_validation():
    g = DiscreteMixture.point_mass(P.p_star, 3)
    with pytest.raises(ValueError):
        bootstrap_mse_term(g, 10, PopulationFrame(1, 1), P, K=0, seed=0)
    with pytest.raises(ValueError):
        bootstrap_mse_term(g, 0, PopulationFrame(1, 1), P, K=5, seed=0)


def test_bootstrap_worker_independent():
    g = DiscreteMixture(P.p_star, np.eye(P.n_support)[[3, 40]].T @ [0.3, 0.7])
    a = bootstrap_mse_term(g, 400, PopulationFrame(1, 1), P, K=12, seed=3, workers=1)
    b = bootstrap_mse_term(g, 400, PopulationFrame(1, 1), P, K=12, seed=3, workers=3)
    assert a.replicates.tobytes() == b.replicates.tobytes()
    assert float(a) == float(b)
    assert isinstance(a, BootstrapResult)


def _direct_mc_rmse(g, m, reps, seed):
    """Monte-Carlo root-MSE by simulating attempts unit by unit (no kernel matrix)."""
    rng = np.random.default_rng(seed)
    p_tilde = per_attempt_prob(g.support, M0)
    target = m * expected_inverse(g)
    errs = []
    for _ in range(reps):
        idx = rng.choice(len(g.weights), size=m, p=g.weights)
        ys = np.empty(m, dtype=int)
        for u, pt in enumerate(p_tilde[idx]):
            while True:  # respondent: condition the geometric on success within M0
                y = rng.geometric(pt)
                if y <= M0:
                    break
            ys[u] = y
        ghat = fit(CountVector.from_observations(ys, M0), P, FitConfig())
        errs.append(m * expected_inverse(ghat) - target)
    return float(np.sqrt(np.mean(np.square(errs))))


@pytest.mark.slow
def test_bootstrap_close_to_direct_monte_carlo():
    g = DiscreteMixture(P.p_star, np.eye(P.n_support)[[10, 40]].T @ [0.4, 0.6])
    boot = bootstrap_mse_term(g, 500, PopulationFrame(1, 1), P, K=200, seed=17)
    mc = _direct_mc_rmse(g, 500, 1000, seed=18)
    ratio = np.sqrt(float(boot)) / mc
    assert 0.5 <= ratio <= 2.0
