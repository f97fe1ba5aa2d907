import numpy as np
import pytest
from scipy import integrate, linalg, stats

from dadmms.metrics import (
    ConvergenceSeries,
    GaussianSummary,
    MetricError,
    accuracy_series,
    average_iterate,
    empirical_gaussian,
    read_series_csv,
    sqrtm_psd,
    summarize_final,
    wasserstein2_gaussian,
    wasserstein_series,
    write_series_csv,
)
from dadmms.problems import LogRegProblem


def _random_spd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T + 0.1 * np.eye(d)


def test_empirical_gaussian_unbiased_covariance():
    s = empirical_gaussian(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    np.testing.assert_array_equal(s.mean, [0.0, 0.0])
    np.testing.assert_allclose(s.covariance, [[2.0, 0.0], [0.0, 0.0]])


def test_empirical_gaussian_one_dimensional_input():
    s = empirical_gaussian(np.array([1.0, 2.0, 3.0]))
    assert s.mean.shape == (1,)
    assert s.covariance[0, 0] == pytest.approx(1.0)


def test_empirical_gaussian_needs_two_samples():
    with pytest.raises(MetricError):
        empirical_gaussian(np.zeros((1, 2)))


def test_summary_shape_mismatch():
    with pytest.raises(MetricError):
        GaussianSummary(np.zeros(2), np.eye(3))


def test_sqrtm_psd():
    rng = np.random.default_rng(0)
    cov = _random_spd(rng, 3)
    root = sqrtm_psd(cov)
    np.testing.assert_allclose(root @ root, cov, atol=1e-10)
    with pytest.raises(MetricError):
        sqrtm_psd(np.diag([1.0, -1.0]))


def test_w2_translation():
    a = GaussianSummary(np.zeros(2), np.eye(2))
    b = GaussianSummary(np.array([3.0, 4.0]), np.eye(2))
    assert wasserstein2_gaussian(a, b) == pytest.approx(5.0, abs=1e-12)


def test_w2_diagonal_formula():
    rng = np.random.default_rng(1)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        va, vb = rng.uniform(0.1, 5.0, d), rng.uniform(0.1, 5.0, d)
        a = GaussianSummary(rng.standard_normal(d), np.diag(va))
        b = GaussianSummary(rng.standard_normal(d), np.diag(vb))
        expected = np.sqrt(np.sum((a.mean - b.mean) ** 2) + np.sum((np.sqrt(va) - np.sqrt(vb)) ** 2))
        assert wasserstein2_gaussian(a, b) == pytest.approx(expected, abs=1e-3)


def test_w2_quantile_coupling_one_dimensional():
    rng = np.random.default_rng(2)
    for _ in range(100):
        ma, mb = rng.normal(size=2)
        sa, sb = rng.uniform(0.2, 3.0, size=2)

        def gap(u):
            return (stats.norm.ppf(u, ma, sa) - stats.norm.ppf(u, mb, sb)) ** 2

        oracle = np.sqrt(integrate.quad(gap, 0.0, 1.0, limit=200)[0])
        value = wasserstein2_gaussian(GaussianSummary([ma], [[sa ** 2]]), GaussianSummary([mb], [[sb ** 2]]))
        assert value == pytest.approx(oracle, abs=1e-3)


def test_w2_against_general_sqrtm():
    rng = np.random.default_rng(3)
    for _ in range(20):
        ca, cb = _random_spd(rng, 3), _random_spd(rng, 3)
        ma, mb = rng.standard_normal(3), rng.standard_normal(3)
        root_a = linalg.sqrtm(ca).real
        cross = linalg.sqrtm(root_a @ cb @ root_a).real
        expected = np.sqrt(np.sum((ma - mb) ** 2) + np.trace(ca + cb - 2 * cross))
        value = wasserstein2_gaussian(GaussianSummary(ma, ca), GaussianSummary(mb, cb))
        assert value == pytest.approx(expected, rel=1e-6)


def test_w2_symmetric_and_zero_on_identity():
    rng = np.random.default_rng(4)
    a = GaussianSummary(rng.standard_normal(3), _random_spd(rng, 3))
    b = GaussianSummary(rng.standard_normal(3), _random_spd(rng, 3))
    assert wasserstein2_gaussian(a, b) == pytest.approx(wasserstein2_gaussian(b, a), abs=1e-8)
    assert wasserstein2_gaussian(a, a) < 1e-6


def test_w2_dimension_mismatch():
    with pytest.raises(MetricError):
        wasserstein2_gaussian(GaussianSummary(np.zeros(2), np.eye(2)), GaussianSummary(np.zeros(3), np.eye(3)))


def test_w2_singular_covariances():
    a = GaussianSummary(np.zeros(2), np.diag([1.0, 0.0]))
    b = GaussianSummary(np.zeros(2), np.diag([4.0, 0.0]))
    assert wasserstein2_gaussian(a, b) == pytest.approx(1.0, abs=1e-9)


def test_average_iterate():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(average_iterate(x), [2.0, 3.0])
    stack = np.stack([x, 2 * x])
    np.testing.assert_array_equal(average_iterate(stack), [[2.0, 3.0], [4.0, 6.0]])


def test_series_records_and_selection():
    series = ConvergenceSeries()
    series.add(0, "w2", 0, 3.0)
    series.add(5, "w2", 0, 1.0)
    series.add(5, "w2", "avg", 0.5)
    ks, vs = series.select("w2", 0)
    assert ks.tolist() == [0, 5] and vs.tolist() == [3.0, 1.0]
    assert series.final("w2", "avg") == 0.5
    assert series.metrics() == ["w2"]
    with pytest.raises(KeyError):
        series.final("accuracy_mean", 0)
    with pytest.raises(MetricError):
        series.add(1, "w2", 0, -0.1)


def test_relabel_and_summary():
    series = ConvergenceSeries()
    series.add(0, "w2", 1, 2.0)
    series.add(3, "w2", 1, 1.5)
    renamed = series.relabel("dsgld/")
    assert renamed.metrics() == ["dsgld/w2"]
    assert summarize_final(renamed) == {"dsgld/w2[1]": 1.5}


def test_series_csv_keeps_full_precision(tmp_path):
    series = ConvergenceSeries()
    series.add(0, "w2", "avg", 1 / 3)
    path = write_series_csv(series, tmp_path / "series.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "iteration,metric_name,agent_or_avg,value"
    assert read_series_csv(path).records == series.records


def test_wasserstein_series_layout():
    rng = np.random.default_rng(5)
    histories = [rng.standard_normal((3, 4, 2)) for _ in range(30)]
    target = GaussianSummary(np.zeros(2), np.eye(2))
    series = wasserstein_series(histories, [0, 1, 2], target)
    assert len(series.records) == 3 * (4 + 1)
    assert {w for _, _, w, _ in series.records} == {"0", "1", "2", "3", "avg"}
    only = wasserstein_series(histories, [0, 1, 2], target, agents=[2])
    assert {w for _, _, w, _ in only.records} == {"2", "avg"}
    with pytest.raises(MetricError):
        wasserstein_series(histories[:1], [0, 1, 2], target)


def test_average_equals_agent_when_agents_agree():
    rng = np.random.default_rng(6)
    histories = []
    for _ in range(20):
        x = rng.standard_normal((2, 1, 2))
        histories.append(np.repeat(x, 3, axis=1))
    target = GaussianSummary(np.ones(2), 2 * np.eye(2))
    series = wasserstein_series(histories, [0, 1], target)
    assert series.final("w2", "avg") == pytest.approx(series.final("w2", 0), rel=1e-12)


def test_accuracy_series_perfect_classifier():
    features = [np.array([[1.0, 0.0], [2.0, 1.0], [-1.0, 0.0]])]
    labels = [np.array([1, 1, 0])]
    problem = LogRegProblem(d=2, lambda_prior=10.0, features=features, labels=labels)
    histories = [np.tile(np.array([[[1.0, 0.0]]]), (2, 1, 1)) for _ in range(4)]
    series = accuracy_series(histories, [0, 1], problem)
    assert series.final("accuracy_mean", 0) == 1.0
    assert series.final("accuracy_std", 0) == 0.0


def test_accuracy_series_needs_logreg(linreg5):
    with pytest.raises(MetricError):
        accuracy_series([np.zeros((1, 5, 2))] * 2, [0], linreg5)
