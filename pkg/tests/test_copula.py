import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexopf.copula import (
    UncertaintyModel,
    UncertaintySource,
    assemble_covariance,
    copula_mean,
    load_history_csv,
    sample,
    spearman_matrix,
    spearman_to_pearson,
)
from flexopf.errors import InsufficientSamples, NotPSD
from flexopf.fixtures import two_bus
from flexopf.marginals import (
    EmpiricalMarginal,
    NormalMarginal,
    PointMarginal,
    UniformMarginal,
    marginal_from_dict,
)


def test_spearman_identical_columns():
    x = np.random.default_rng(0).normal(size=100)
    rho = spearman_matrix(np.vstack([x, x]))
    assert rho[0, 1] == pytest.approx(1.0)


def test_spearman_antitone():
    x = np.random.default_rng(1).normal(size=100)
    rho = spearman_matrix(np.vstack([x, -np.exp(x)]))
    assert rho[0, 1] == pytest.approx(-1.0)


def test_spearman_independent_columns_small():
    rng = np.random.default_rng(2)
    rho = spearman_matrix(rng.normal(size=(2, 10_000)))
    # sampling-noise bound ~ 3/sqrt(T)
    assert abs(rho[0, 1]) < 0.05


def test_spearman_constant_column_is_zero():
    x = np.random.default_rng(3).normal(size=50)
    rho = spearman_matrix(np.vstack([x, np.full(50, 2.5)]))
    assert rho[0, 1] == 0.0 and rho[1, 1] == 1.0


def test_spearman_needs_three_samples():
    with pytest.raises(InsufficientSamples):
        spearman_matrix(np.zeros((2, 2)))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000),
       st.sampled_from(["exp", "cube", "affine"]))
def test_spearman_invariant_under_monotone_maps(seed, kind):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(3, 40))
    maps = {"exp": np.exp, "cube": lambda v: v ** 3, "affine": lambda v: 2.5 * v + 1.0}
    assert np.array_equal(spearman_matrix(data), spearman_matrix(maps[kind](data)))


def test_pearson_map_spot_values():
    rho_s = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(spearman_to_pearson(rho_s), np.eye(2))
    rho_s = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert spearman_to_pearson(rho_s)[0, 1] == pytest.approx(1.0, abs=1e-12)
    rho_s = np.array([[1.0, 0.5], [0.5, 1.0]])
    # 2 sin(pi/12), evaluated independently at high precision
    assert spearman_to_pearson(rho_s)[0, 1] == pytest.approx(0.5176380902050415, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_pearson_map_output_is_psd(seed):
    rng = np.random.default_rng(seed)
    raw = rng.uniform(-1, 1, size=(4, 4))
    rho_s = np.clip((raw + raw.T) / 2, -1, 1)
    np.fill_diagonal(rho_s, 1.0)
    out = spearman_to_pearson(rho_s)
    assert np.linalg.eigvalsh(out).min() > -1e-10
    assert np.allclose(np.diag(out), 1.0)


def test_covariance_identity_correlation():
    sigma = np.array([0.1, 0.2])
    gamma, half = assemble_covariance(sigma, np.eye(2))
    assert np.allclose(gamma, np.diag(sigma ** 2))
    assert np.allclose(half, np.diag(sigma))


def test_covariance_zero_sigma():
    gamma, half = assemble_covariance(np.zeros(3), np.eye(3))
    assert np.count_nonzero(gamma) == 0


def test_covariance_hand_expansion():
    sigma = np.array([0.1, 0.2, 0.1])
    rho = np.full((3, 3), 0.5)
    np.fill_diagonal(rho, 1.0)
    gamma, half = assemble_covariance(sigma, rho)
    expected = np.outer(sigma, sigma) * rho
    assert np.allclose(gamma, expected, atol=0)
    assert np.abs(half.T @ half - gamma).max() < 1e-10


def test_covariance_rejects_indefinite():
    rho = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotPSD):
        assemble_covariance(np.array([1.0, 1.0]), rho)


def test_copula_mean_uniform():
    mu, se = copula_mean([UniformMarginal(0.0, 1.0)], np.eye(1), n_samples=50_000, seed=1)
    assert abs(mu[0] - 0.5) < 3 * se[0]


def test_copula_mean_point_mass_exact():
    mu, _ = copula_mean([PointMarginal(2.5), NormalMarginal(0, 1)],
                        np.eye(2), n_samples=1000, seed=0)
    assert mu[0] == pytest.approx(2.5, abs=0)


def test_copula_mean_reproducible():
    args = ([NormalMarginal(0, 1)], np.eye(1))
    a, _ = copula_mean(*args, n_samples=2000, seed=42)
    b, _ = copula_mean(*args, n_samples=2000, seed=42)
    assert np.array_equal(a, b)


def _model(sigma=(0.1, 0.2), rho_s=0.5):
    m = two_bus()
    srcs = [UncertaintySource("s1", 2, "a", NormalMarginal(0.0, sigma[0])),
            UncertaintySource("s2", 2, "b", NormalMarginal(0.0, sigma[1]))]
    return UncertaintyModel.build(m, srcs, np.array([[1.0, rho_s], [rho_s, 1.0]]))


def test_model_invariants():
    um = _model()
    assert um.a_xi.sum(axis=0).tolist() == [1.0, 1.0]
    assert np.abs(um.gamma_half.T @ um.gamma_half - um.gamma).max() < 1e-12
    assert np.linalg.eigvalsh(um.gamma).min() > -1e-12


def test_sample_empty_and_deterministic():
    um = _model()
    assert sample(um, 0).shape == (0, 2)
    assert np.array_equal(sample(um, 100, seed=9), sample(um, 100, seed=9))


def test_sample_covariance_converges():
    um = _model()
    draws = sample(um, 100_000, seed=7)
    emp = np.cov(draws.T)
    assert np.linalg.norm(emp - um.gamma, "fro") < 0.05 * np.linalg.norm(um.gamma, "fro")


def test_sample_recovers_spearman():
    um = _model(rho_s=0.5)
    draws = sample(um, 100_000, seed=11)
    emp = spearman_matrix(draws.T)
    assert abs(emp[0, 1] - 0.5) < 0.03


def test_sample_marginals_ks():
    from scipy import stats
    um = _model()
    draws = sample(um, 20_000, seed=13)
    for k, sig in enumerate((0.1, 0.2)):
        _, pval = stats.kstest(draws[:, k], "norm", args=(0.0, sig))
        assert pval > 0.01


def test_empirical_marginal_round_trip():
    rng = np.random.default_rng(5)
    samples = rng.normal(size=500)
    m = EmpiricalMarginal(samples)
    xs = np.sort(samples)[5:-5]
    assert np.abs(m.ppf(m.cdf(xs)) - xs).max() < 1e-9
    doc = m.to_dict()
    assert marginal_from_dict(doc) == m


def test_history_csv_round_trip(tmp_path):
    path = tmp_path / "hist.csv"
    path.write_text(
        "source_id,timestamp,value_pu\n"
        "w1,2024-01-01T00,0.1\nw1,2024-01-01T01,0.3\nw1,2024-01-01T02,0.2\n"
        "w2,2024-01-01T00,0.5\nw2,2024-01-01T01,0.4\nw2,2024-01-01T02,0.6\n")
    ids, mat = load_history_csv(path)
    assert ids == ["w1", "w2"]
    assert mat.shape == (2, 3)
    assert np.allclose(mat[0], [0.1, 0.3, 0.2])
    rho = spearman_matrix(mat)
    assert rho.shape == (2, 2)
