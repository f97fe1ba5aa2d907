import numpy as np
import pytest

from dadmms.graph import DisconnectedGraphError, extend_matrices, spectral_constants
from dadmms.problems import pooled_minimizer, strong_convexity_constants
from dadmms.samplers import AdmmHyper, run_chain
from dadmms.theory import (
    NotContractiveError,
    bound_containment,
    bound_trajectory,
    contraction_constants,
    delta_max,
    delta_max_branches,
    delta_of,
    expected_dw_norm_sq,
    initial_wg_distance,
    kkt_residuals,
    lemma1_equivalence,
    lemma3_slack,
    noise_tail_distance,
    noise_terms,
    optimal_kappa,
    optimal_rho,
    product_target,
    sufficient_condition,
    tau_f_threshold,
    theory_report,
    threshold_expression,
)


@pytest.fixture
def ring_spectra(ring5):
    return spectral_constants(extend_matrices(ring5, 2))


@pytest.fixture
def complete_spectra(complete5):
    return spectral_constants(extend_matrices(complete5, 2))


def test_optimal_kappa_and_delta_max_unit_case():
    assert optimal_kappa(1.0, 1.0) == pytest.approx(2.618034, abs=1e-6)
    assert delta_max(1.0, 1.0) == pytest.approx(0.618034, abs=1e-6)


def test_optimal_kappa_balances_branches():
    kappa = optimal_kappa(2.0, 1.7)
    first, second = delta_max_branches(kappa, 2.0, 1.7)
    assert first == pytest.approx(second, rel=1e-12)
    assert first == pytest.approx(delta_max(2.0, 1.7), rel=1e-12)


def test_delta_plug_in(ring_spectra):
    k = contraction_constants(ring_spectra, m_f=1.0, big_m_f=1.0, kappa=2.0, rho=4.0)
    s_min2 = ring_spectra.sigma_min_m_minus ** 2
    s_max2 = ring_spectra.sigma_max_m_plus ** 2
    expected = min(s_min2 / (2 * s_max2), 1.0 / (s_max2 + 2.0 / (4.0 * s_min2)))
    assert k.delta == pytest.approx(expected, rel=1e-12)
    assert k.a == pytest.approx(3 / (2 * (1 + expected)), rel=1e-12)
    assert k.b == pytest.approx(1 / (2 * (1 + expected)), rel=1e-12)
    assert k.d_const == pytest.approx(2.0 * ring_spectra.sigma_max_m_minus ** 2, rel=1e-12)
    assert k.e == pytest.approx(2 * expected / ((1 + expected) * 4.0 * s_min2), rel=1e-12)
    assert k.c == pytest.approx(2 * np.sqrt(2) * expected / ((1 + expected) * s_min2), rel=1e-12)


def test_delta_at_optimum_is_delta_max(ring_spectra):
    m_f, big_m = 0.8, 2.4
    k = contraction_constants(ring_spectra, m_f, big_m)
    assert k.delta == pytest.approx(delta_max(big_m / m_f, ring_spectra.tau_g), rel=1e-9)


def test_delta_never_exceeds_delta_max(ring_spectra):
    rng = np.random.default_rng(0)
    m_f, big_m = 1.5, 4.5
    bound = delta_max(big_m / m_f, ring_spectra.tau_g)
    kappas = 1 + np.exp(rng.uniform(-6, 4, 10_000))
    rhos = np.exp(rng.uniform(-5, 5, 10_000))
    worst = max(delta_of(kp, r, ring_spectra, m_f, big_m) for kp, r in zip(kappas, rhos))
    assert worst <= bound * (1 + 1e-12)


def test_optimal_rho_first_order_condition(ring_spectra):
    kappa, m_f, big_m = 3.0, 1.0, 2.0

    def second(rho):
        s_min2 = ring_spectra.sigma_min_m_minus ** 2
        s_max2 = ring_spectra.sigma_max_m_plus ** 2
        return m_f / (rho / 4 * s_max2 + kappa * big_m ** 2 / (rho * s_min2))

    rho = optimal_rho(kappa, ring_spectra, big_m)
    h = 1e-6 * rho
    assert abs((second(rho + h) - second(rho - h)) / (2 * h)) <= 1e-6


def test_delta_rejects_bad_kappa(ring_spectra):
    with pytest.raises(NotContractiveError):
        delta_of(1.0, 1.0, ring_spectra, 1.0, 1.0)
    with pytest.raises(NotContractiveError):
        optimal_rho(0.5, ring_spectra, 1.0)


def test_sufficient_condition_matches_contraction(ring_spectra):
    for m_f in (0.3, 0.8, 2.0, 10.0):
        for tau_f in (1.0, 1.5, 3.0):
            verdict = sufficient_condition(m_f, tau_f, ring_spectra.tau_g)
            k = contraction_constants(ring_spectra, m_f, tau_f * m_f)
            assert verdict.holds == k.contractive
            assert verdict.margin == pytest.approx(verdict.lhs - verdict.rhs)


def test_threshold_published_values(ring_spectra, complete_spectra):
    assert tau_f_threshold(2.0, ring_spectra.tau_g) == pytest.approx(1.23, abs=0.01)
    assert tau_f_threshold(2.0, complete_spectra.tau_g) == pytest.approx(np.sqrt(6), abs=0.01)


def test_threshold_flips_the_verdict(ring_spectra):
    t = tau_f_threshold(2.0, ring_spectra.tau_g)
    assert sufficient_condition(2.0, t * 0.999, ring_spectra.tau_g).holds
    assert not sufficient_condition(2.0, t * 1.001, ring_spectra.tau_g).holds


def test_no_threshold_when_condition_never_holds(ring_spectra):
    assert tau_f_threshold(1.0, ring_spectra.tau_g) is None
    assert not sufficient_condition(1.0, 1.0, ring_spectra.tau_g).holds


def test_symbolic_threshold_matches_closed_form(ring_spectra):
    expr = threshold_expression()
    m_f, tau_g = sorted(expr.free_symbols, key=lambda s: s.name)
    value = float(expr.subs({m_f: 2.0, tau_g: ring_spectra.tau_g}))
    assert value == pytest.approx(tau_f_threshold(2.0, ring_spectra.tau_g), rel=1e-12)


def test_expected_dw_norm(ring5):
    assert expected_dw_norm_sq(ring5, 2) == 40.0


def test_noise_terms(ring5, ring_spectra):
    k = contraction_constants(ring_spectra, 3.0, 3.0)
    terms = noise_terms(k, ring5, 2, mc_samples=100_000, seed=1)
    assert terms["mc_dw_norm_sq"] == pytest.approx(40.0, rel=0.01)
    assert terms["Y"] <= terms["Y_jensen"]
    assert terms["R"] == pytest.approx(terms["R_exact"], rel=0.02)
    with pytest.raises(ValueError):
        noise_terms(k, ring5, 2, mc_samples=100)


def test_noiseless_bound_is_geometric(ring5, ring_spectra):
    k = contraction_constants(ring_spectra, 3.0, 3.0)
    traj = bound_trajectory(k, ring5, 2, 10, w0=2.0, noiseless=True)
    ratios = traj.values[1:] / traj.values[:-1]
    np.testing.assert_allclose(ratios, np.sqrt(k.a))
    assert traj.values[0] == pytest.approx(2.0 / np.sqrt(3.0))
    assert traj.bound_at(1) == traj.values[0]
    with pytest.raises(IndexError):
        traj.bound_at(0)


def test_bound_has_positive_floor(ring5, ring_spectra):
    k = contraction_constants(ring_spectra, 3.0, 3.0)
    traj = bound_trajectory(k, ring5, 2, 30, w0=5.0, mc_samples=20_000)
    assert traj.floor > traj.dw_term > 0
    assert np.all(np.diff(traj.values) < 0)
    assert traj.values[-1] > traj.floor
    jensen = bound_trajectory(k, ring5, 2, 30, w0=5.0, mc_samples=20_000, jensen=True)
    assert jensen.y_bound >= traj.y_bound


def test_bound_rejects_non_contractive_constants(ring5, ring_spectra):
    k = contraction_constants(ring_spectra, 0.1, 0.1)
    assert not k.contractive
    with pytest.raises(NotContractiveError):
        bound_trajectory(k, ring5, 2, 5, w0=1.0)


def test_kkt_residuals(linreg5, ring5):
    res = kkt_residuals(linreg5, ring5)
    assert res.stationarity <= 1e-8
    assert res.consensus <= 1e-8
    assert res.z_definition <= 1e-8
    np.testing.assert_allclose(res.x_star[:2], pooled_minimizer(linreg5))
    m_t = extend_matrices(ring5, 2).m_minus.T
    projector = m_t @ np.linalg.pinv(m_t)
    assert np.linalg.norm(res.beta_star - projector @ res.beta_star) <= 1e-9


def test_kkt_needs_connected_graph(linreg5, noedge5):
    with pytest.raises(DisconnectedGraphError):
        kkt_residuals(linreg5, noedge5)


def test_lemma1_equivalence(linreg5, ring5):
    report = lemma1_equivalence(linreg5, ring5, rho=5.0, n_iters=50, seed=0)
    assert report.max_x_deviation <= 1e-6
    assert report.max_dual_deviation <= 1e-9
    assert report.max_column_space_residual <= 1e-9


def test_lemma1_equivalence_noiseless(small_linreg, complete5):
    report = lemma1_equivalence(small_linreg, complete5, rho=2.0, n_iters=20, seed=3, noise_on=False)
    assert report.max_x_deviation <= 1e-6


def test_lemma3_slack_non_negative():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        x, y = rng.standard_normal(3), rng.standard_normal(3)
        kappa = 1 + rng.exponential(2.0)
        assert lemma3_slack(x, y, kappa) >= -1e-12


def test_product_target(linreg5):
    target = product_target(linreg5)
    assert target.mean.shape == (10,)
    assert target.covariance.shape == (10, 10)
    np.testing.assert_array_equal(target.covariance[:2, 2:4], np.zeros((2, 2)))


def test_noise_tail_distance(linreg5, logreg5, ring5):
    m_f = strong_convexity_constants(linreg5)[0]
    assert noise_tail_distance(linreg5, ring5, m_f) > 0
    assert noise_tail_distance(logreg5, ring5, 1.0) is None


def test_initial_wg_distance_zero_at_optimum(linreg5, ring5):
    mats = extend_matrices(ring5, 2)
    res = kkt_residuals(linreg5, ring5)
    samples = np.tile(res.x_star.reshape(5, 2), (4, 1, 1))
    value = initial_wg_distance(samples, mats, res.z_star, res.beta_star, rho=5.0)
    assert value == pytest.approx(np.linalg.norm(res.beta_star) / np.sqrt(5.0), rel=1e-9)


def test_theory_report_overrides(ring5):
    report = theory_report(ring5, 2, m_f=2.0, tau_f=1.0)
    data = report.as_dict()
    assert data["tau_g"] == pytest.approx(1.70, abs=0.01)
    assert data["sufficient_condition"] is True
    assert data["tau_f_threshold"] == pytest.approx(1.236, abs=1e-3)
    assert data["delta_max"] == pytest.approx(data["delta"], rel=1e-9)
    with pytest.raises(ValueError):
        theory_report(ring5, 2)


def test_theory_report_from_problem(linreg5, ring5):
    report = theory_report(ring5, 2, problem=linreg5)
    m_f, big_m, tau_f = strong_convexity_constants(linreg5)
    assert report.constants.m_f == pytest.approx(m_f)
    assert report.constants.tau_f == pytest.approx(tau_f)


def test_containment_rejects_logreg(logreg5, ring5):
    with pytest.raises(ValueError):
        bound_containment(logreg5, ring5, rho=5.0, n_trials=3, n_iters=2)


@pytest.mark.slow
def test_measured_distance_stays_under_bound(isotropic_linreg, ring5):
    spectra = spectral_constants(extend_matrices(ring5, 2))
    m_f, big_m, tau_f = strong_convexity_constants(isotropic_linreg)
    assert tau_f == pytest.approx(1.0)
    assert sufficient_condition(m_f, tau_f, spectra.tau_g).holds
    rho = contraction_constants(spectra, m_f, big_m).rho
    report = bound_containment(isotropic_linreg, ring5, rho, n_trials=200, n_iters=20, seed=0, mc_samples=20_000)
    assert report.violations == 0
    assert report.max_ratio < 1.0


@pytest.mark.slow
def test_dadmms_chain_runs_at_theory_penalty(isotropic_linreg, ring5):
    spectra = spectral_constants(extend_matrices(ring5, 2))
    m_f, big_m, _ = strong_convexity_constants(isotropic_linreg)
    rho = contraction_constants(spectra, m_f, big_m).rho
    history = run_chain("dadmms", isotropic_linreg, ring5, AdmmHyper(rho), 50, trial_seed=0)
    assert np.all(np.isfinite(history.x))
