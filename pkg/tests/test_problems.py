import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.optimize import brentq
from scipy.special import expit

from dadmms.problems import (
    LinRegProblem,
    LogisticPotential,
    ProxConvergenceError,
    QuadraticPotential,
    generate_linreg,
    generate_logreg,
    linreg_prox,
    linreg_true_posterior,
    logreg_prox,
    newton_minimize,
    pooled_minimizer,
    predict_accuracy,
    read_dataset,
    strong_convexity_constants,
    write_dataset,
)


def test_linreg_shapes_and_determinism(linreg5):
    assert linreg5.n_agents == 5
    assert linreg5.features[0].shape == (50, 2)
    assert linreg5.targets[0].shape == (50,)
    again = generate_linreg(2, 4.0, 10.0, 5, 50, seed=0)
    np.testing.assert_array_equal(linreg5.features[3], again.features[3])
    other = generate_linreg(2, 4.0, 10.0, 5, 50, seed=1)
    assert not np.allclose(linreg5.targets[0], other.targets[0])


def test_unequal_sample_counts():
    problem = generate_linreg(2, 4.0, 10.0, 3, [5, 0, 7], seed=0)
    assert [z.shape[0] for z in problem.features] == [5, 0, 7]
    with pytest.raises(ValueError):
        generate_linreg(2, 4.0, 10.0, 3, [5, 7], seed=0)


def test_linreg_potential_form(linreg5):
    pot = linreg5.potentials()[0]
    z, y = linreg5.features[0], linreg5.targets[0]
    x = np.array([0.3, -1.2])
    expected = np.sum((y - z @ x) ** 2) / (2 * 16.0) + x @ x / (2 * 10.0 * 5)
    assert pot.value(x) == pytest.approx(expected, rel=1e-12)


def test_zero_noise_linreg_has_no_potentials_or_posterior():
    problem = generate_linreg(2, 0.0, 10.0, 2, 5, seed=0)
    with pytest.raises(ValueError):
        problem.potentials()
    with pytest.raises(ValueError, match="xi > 0"):
        linreg_true_posterior(problem)


def test_quadratic_prox_and_regularized_minimizer_agree():
    h = np.array([[2.0, 0.5], [0.5, 1.0]])
    pot = QuadraticPotential(h, np.array([1.0, -1.0]))
    v = np.array([0.4, 2.0])
    gamma = 0.3
    x = linreg_prox(pot, gamma, v)
    assert pot.prox_residual(gamma, v, x) < 1e-12
    np.testing.assert_allclose(pot.minimize_regularized(1 / gamma, -v / gamma), x, atol=1e-12)


def test_prox_rejects_bad_gamma():
    pot = QuadraticPotential(np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        pot.prox(0.0, np.zeros(2))
    with pytest.raises(TypeError):
        logreg_prox(pot, 1.0, np.zeros(2))


def test_logreg_labels_sorted(logreg5):
    for i in range(logreg5.n_agents):
        labels = logreg5.labels[i]
        k = logreg5.n_label_one(i)
        assert np.all(labels[:k] == 1) and np.all(labels[k:] == 0)


def test_logreg_psi_signs(logreg5):
    pot = logreg5.potentials()[0]
    k = logreg5.n_label_one(0)
    assert np.all(pot.psi[:k] == -1.0) and np.all(pot.psi[k:] == 1.0)


def test_logreg_prox_optimality(logreg5):
    pot = logreg5.potentials()[1]
    rng = np.random.default_rng(3)
    for gamma in (0.01, 1.0, 50.0):
        v = 3 * rng.standard_normal(2)
        x = logreg_prox(pot, gamma, v)
        assert np.linalg.norm(pot.grad(x) + (x - v) / gamma) <= 1e-9


def test_logreg_prox_one_point_matches_root_of_derivative():
    pot = LogisticPotential(np.array([[2.0]]), np.array([-1.0]), 0.1)
    v = np.array([0.7])

    def dphi(t):
        return float(pot.grad(np.array([t]))[0]) + (t - v[0])

    root = brentq(dphi, -50.0, 50.0, xtol=1e-14)
    assert logreg_prox(pot, 1.0, v)[0] == pytest.approx(root, abs=1e-8)


def test_logreg_prox_leaves_potential_untouched(logreg5):
    pot = logreg5.potentials()[2]
    before = {k: np.copy(v) if isinstance(v, np.ndarray) else v for k, v in vars(pot).items()}
    logreg_prox(pot, 0.5, np.array([1.0, -2.0]))
    pot.minimize_regularized(1.0, np.array([0.3, 0.3]))
    assert vars(pot).keys() == before.keys()
    for key, value in before.items():
        np.testing.assert_array_equal(vars(pot)[key], value)


def test_logistic_curvature_bounds(logreg5):
    pot = logreg5.potentials()[0]
    m, big_m = pot.curvature_bounds()
    assert m == pytest.approx(1 / (10.0 * 5))
    assert big_m > m
    eig = np.linalg.eigvalsh(pot.hess(np.zeros(2)))
    assert eig.max() <= big_m + 1e-9


def test_newton_reports_non_convergence():
    pot = LogisticPotential(np.array([[1.0, 2.0]]), np.array([1.0]), 0.1)
    with pytest.raises(ProxConvergenceError) as info:
        newton_minimize(pot.value, pot.grad, pot.hess, np.ones(2), max_iter=0)
    assert info.value.residual > 0
    assert isinstance(info.value, RuntimeError)


def test_posterior_mean_is_pooled_minimizer(linreg5):
    post = linreg_true_posterior(linreg5)
    np.testing.assert_allclose(post.mean, pooled_minimizer(linreg5), atol=1e-10)
    np.testing.assert_allclose(post.covariance, post.covariance.T)


def test_posterior_matches_grid_integration():
    problem = generate_linreg(1, 1.0, 10.0, 3, 20, seed=5)
    post = linreg_true_posterior(problem)
    sd = float(np.sqrt(post.covariance[0, 0]))
    grid = np.linspace(post.mean[0] - 12 * sd, post.mean[0] + 12 * sd, 40001)
    pots = problem.potentials()
    log_density = np.array([-sum(p.value(np.array([g])) for p in pots) for g in grid])
    weights = np.exp(log_density - log_density.max())
    mass = trapezoid(weights, grid)
    mean = trapezoid(grid * weights, grid) / mass
    var = trapezoid((grid - mean) ** 2 * weights, grid) / mass
    assert mean == pytest.approx(post.mean[0], abs=1e-4)
    assert var == pytest.approx(post.covariance[0, 0], abs=1e-4)


def test_pooled_minimizer_logreg_is_stationary(logreg5):
    x = pooled_minimizer(logreg5)
    grad = sum(p.grad(x) for p in logreg5.potentials())
    assert np.linalg.norm(grad) <= 1e-9


def test_predict_accuracy():
    features = np.array([[1.0, 0.0], [-1.0, 0.0], [2.0, 1.0], [-3.0, 0.5]])
    labels = np.array([1, 0, 1, 1])
    assert predict_accuracy(np.array([1.0, 0.0]), features, labels) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        predict_accuracy(np.zeros(2), np.empty((0, 2)), np.empty(0))


def test_predict_accuracy_label_flip_symmetry():
    problem = generate_logreg(3, 10.0, 5, 50, seed=4)
    z, y = problem.pooled()
    assert np.all(z @ problem.x_true != 0.0)
    acc = predict_accuracy(problem.x_true, z, y)
    assert acc > 0.5
    assert predict_accuracy(-problem.x_true, z, y) == pytest.approx(1.0 - acc, abs=1e-12)


def test_strong_convexity_constants_linreg(linreg5):
    m_f, big_m, tau_f = strong_convexity_constants(linreg5)
    eigs = [np.linalg.eigvalsh(p.H) for p in linreg5.potentials()]
    assert m_f == pytest.approx(min(e[0] for e in eigs))
    assert big_m == pytest.approx(max(e[-1] for e in eigs))
    assert tau_f == pytest.approx(big_m / m_f)
    assert tau_f >= 1


def test_dataset_file_rebuilds_same_posterior(linreg5, tmp_path):
    path = write_dataset(linreg5, tmp_path / "dataset.csv")
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "agent,z0,z1,y"
    rebuilt = read_dataset(path, "linreg", lambda_prior=10.0, xi=4.0)
    assert isinstance(rebuilt, LinRegProblem)
    np.testing.assert_array_equal(linreg_true_posterior(rebuilt).mean, linreg_true_posterior(linreg5).mean)


def test_read_dataset_requires_xi_for_linreg(linreg5, tmp_path):
    path = write_dataset(linreg5, tmp_path / "dataset.csv")
    with pytest.raises(ValueError):
        read_dataset(path, "linreg", lambda_prior=10.0)


def test_logreg_with_given_truth():
    x_true = np.array([1.0, -2.0])
    problem = generate_logreg(2, 10.0, 2, 30, seed=0, x_true=x_true)
    np.testing.assert_array_equal(problem.x_true, x_true)
    features, labels = problem.pooled()
    assert features.shape == (60, 2) and labels.shape == (60,)


def test_quadratic_prox_simple_cases():
    pot = QuadraticPotential(np.eye(2), np.zeros(2))
    np.testing.assert_allclose(linreg_prox(pot, 1.0, np.array([2.0, 0.0])), [1.0, 0.0])
    h = np.array([[3.0, 1.0], [1.0, 2.0]])
    b = np.array([1.0, -1.0])
    far = linreg_prox(QuadraticPotential(h, b), 1e12, np.array([5.0, 5.0]))
    np.testing.assert_allclose(far, np.linalg.solve(h, b), atol=1e-8)


def test_logistic_prox_without_data():
    pot = LogisticPotential(np.empty((0, 2)), np.empty(0), 1 / 50)
    v = np.array([1.0, -3.0])
    np.testing.assert_allclose(logreg_prox(pot, 2.0, v), v / (1 + 2.0 / 50), atol=1e-9)


def test_logistic_labels_follow_the_generative_rule():
    x_true = np.array([0.3, -0.2])
    problem = generate_logreg(2, 10.0, 1, 100_000, seed=0, x_true=x_true)
    z, y = problem.pooled()
    assert y.mean() == pytest.approx(expit(z @ x_true).mean(), abs=0.006)
    unbiased = generate_logreg(2, 10.0, 1, 100_000, seed=1, x_true=np.zeros(2))
    assert unbiased.pooled()[1].mean() == pytest.approx(0.5, abs=0.006)


def test_zero_vector_predicts_label_one(logreg5):
    z, y = logreg5.pooled()
    assert predict_accuracy(np.zeros(2), z, y) == pytest.approx(y.mean())


def test_posterior_without_data_is_prior():
    post = linreg_true_posterior(generate_linreg(2, 4.0, 10.0, 3, 0, seed=0))
    np.testing.assert_allclose(post.mean, np.zeros(2), atol=1e-12)
    np.testing.assert_allclose(post.covariance, 10.0 * np.eye(2))
