import math

import numpy as np
import pytest

import hais.anneal as anneal
from conftest import GAUSS_1D_SIGMA2
from hais.anneal import (
    AIS_HMC_RESET,
    AIS_MH,
    ESTIMATORS,
    HAIS,
    HaisConfig,
    Schedule,
    convergence_sweep,
    effective_sample_size,
    intermediate_energy,
    log_mean_exp,
    log_z_std_err,
    reference_for,
    run_chain,
)
from hais.errors import ContractViolation, NonFiniteDynamics
from hais.models import CoordinateBound, EnergyModel, GaussianReference, PoeModel, random_poe


class Exponential(EnergyModel):
    """exp(-rate * x) on x >= 0; Z = 1 / rate."""

    def __init__(self, rate=1.0):
        self.dim = 1
        self.rate = rate
        self.constraints = (CoordinateBound(0, 0.0),)

    def _energy(self, x):
        return self.rate * x[..., 0]

    def _gradient(self, x):
        return np.full_like(x, self.rate)


class Blowup(EnergyModel):
    """Quadratic whose gradient turns NaN far from the origin."""

    dim = 1

    def _energy(self, x):
        return 0.5 * x[..., 0] ** 2

    def _gradient(self, x):
        return np.where(np.abs(x) > 2.5, np.nan, x)


def test_intermediate_energy_endpoints():
    assert intermediate_energy(0.0, 7.0, -3.0) == 7.0
    assert intermediate_energy(1.0, 7.0, -3.0) == -3.0
    assert intermediate_energy(0.5, 2.0, 4.0) == 3.0


def test_log_mean_exp_examples():
    assert log_mean_exp([0.0, 0.0]) == 0.0
    assert log_mean_exp([0.0, math.log(3.0)]) == pytest.approx(math.log(2.0))
    assert log_mean_exp([1000.0, 1000.0]) == pytest.approx(1000.0)
    with pytest.raises(ContractViolation):
        log_mean_exp([])


def test_schedule_linear_and_validation():
    np.testing.assert_allclose(Schedule.linear(4).betas, [0.25, 0.5, 0.75, 1.0])
    assert Schedule.linear(1).betas.tolist() == [1.0]
    with pytest.raises(ContractViolation):
        Schedule(np.array([0.5, 0.2, 1.0]))
    with pytest.raises(ContractViolation):
        Schedule(np.array([0.5, 0.9]))
    s = Schedule.sigmoid(50).betas
    assert s[-1] == 1.0 and np.all(np.diff(s) >= 0) and s[0] > 0


def test_config_validation():
    with pytest.raises(ContractViolation):
        HaisConfig(n_particles=1)
    with pytest.raises(ContractViolation):
        HaisConfig(estimator="bogus")
    assert HaisConfig(epsilon=0.2).gamma == pytest.approx(1 - 2**-0.2)


def test_ess_bounds(rng):
    lw = rng.standard_normal(50) * 3
    assert 1.0 <= effective_sample_size(lw) <= 50
    assert effective_sample_size(np.full(50, -7.3)) == pytest.approx(50.0, rel=1e-12)


def test_std_err_matches_delta_method(rng):
    lw = rng.standard_normal(40)
    w = np.exp(lw)
    expected = np.std(w, ddof=1) / (math.sqrt(40) * np.mean(w))
    assert log_z_std_err(lw) == pytest.approx(expected, rel=1e-12)
    assert log_z_std_err(lw + 800.0) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("estimator", ESTIMATORS)
def test_target_equal_to_proposal(estimator):
    q = GaussianReference(3)
    est = run_chain(q, GaussianReference(3), HaisConfig(n_distributions=37, n_particles=20, estimator=estimator))
    assert np.all(est.particle_log_weights == 0.0)
    assert est.log_z == q.analytic_log_z
    assert est.std_err == 0.0
    assert est.ess == pytest.approx(20, rel=1e-12)


def test_gaussian_target_sigma_two():
    est = run_chain(GaussianReference(1), GaussianReference(1, 2.0), HaisConfig(n_distributions=1000, seed=3))
    assert abs(est.log_z - GAUSS_1D_SIGMA2) < 0.05
    assert GAUSS_1D_SIGMA2 == pytest.approx(1.6121, abs=1e-4)


def test_poe_laplace_identity():
    poe = PoeModel(np.eye(2))
    est = run_chain(reference_for(poe), poe, HaisConfig(n_distributions=10_000, seed=4))
    assert abs(est.log_z - math.log(4.0)) < 0.05


@pytest.mark.parametrize("estimator", ESTIMATORS)
def test_bounded_target(estimator):
    est = run_chain(reference_for(Exponential()), Exponential(), HaisConfig(n_distributions=500, seed=1, estimator=estimator))
    assert abs(est.log_z) < 0.1
    assert est.log_z_proposal == pytest.approx(0.5 * math.log(2 * math.pi) + math.log(0.5))


def test_bounded_chain_stays_in_bounds():
    est = run_chain(reference_for(Exponential(3.0)), Exponential(3.0), HaisConfig(n_distributions=200, seed=2), record=True)
    assert np.all(est.positions >= 0)


def _product_form(q, p, betas, xs):
    """Direct evaluation of the weight as a product of density ratios (linear domain)."""
    w = np.exp(-p.energy(xs[-1])) / np.exp(-q.energy(xs[0]))
    for n in range(len(betas) - 1):
        e_n = lambda x, b=betas[n]: intermediate_energy(b, q.energy(x), p.energy(x))  # noqa: E731
        w = w * np.exp(-e_n(xs[n])) / np.exp(-e_n(xs[n + 1]))
    return np.log(w)


@pytest.mark.parametrize("estimator", ESTIMATORS)
def test_incremental_weights_match_product_form(estimator):
    q = GaussianReference(2)
    p = GaussianReference(2, [1.5, 0.7])
    cfg = HaisConfig(n_distributions=100, n_particles=30, seed=9, estimator=estimator)
    est = run_chain(q, p, cfg, record=True)
    direct = _product_form(q, p, cfg.betas(), est.positions)
    np.testing.assert_allclose(est.particle_log_weights, direct, atol=1e-10, rtol=0)


def test_momentum_terms_cancel():
    q = GaussianReference(2)
    p = PoeModel(np.array([[1.0, 0.2], [0.1, 0.9]]))
    cfg = HaisConfig(n_distributions=80, n_particles=25, seed=5)
    est = run_chain(q, p, cfg, record=True)
    xs, vs, betas = est.positions, est.momenta, cfg.betas()
    kin = 0.5 * np.sum(vs**2, axis=-1)
    log_phi = -kin - math.log(2 * math.pi)  # dim 2 momentum density
    # extended-space weight with every momentum term written out
    lw = (-p.energy(xs[-1]) + log_phi[-1]) - (-q.energy(xs[0]) + log_phi[0])
    for n in range(len(betas) - 1):
        e_n = lambda x, b=betas[n]: intermediate_energy(b, q.energy(x), p.energy(x))  # noqa: E731
        lw = lw + (-e_n(xs[n]) - kin[n]) - (-e_n(xs[n + 1]) - kin[n + 1])
    np.testing.assert_allclose(est.particle_log_weights, lw, atol=1e-10, rtol=0)


def test_hais_momentum_persists_reset_does_not():
    q = GaussianReference(1)
    p = GaussianReference(1, 2.0)
    est = run_chain(q, p, HaisConfig(n_distributions=400, n_particles=200, seed=1), record=True)
    v = est.momenta[:, :, 0]
    # persistent momentum: successive momenta strongly correlated
    assert np.corrcoef(v[100:-1].ravel(), v[101:].ravel())[0, 1] > 0.5


def test_determinism_and_thread_independence(monkeypatch):
    q = GaussianReference(2)
    p = GaussianReference(2, [2.0, 0.5])
    cfg = HaisConfig(n_distributions=60, n_particles=600, seed=11)
    a = run_chain(q, p, cfg)
    b = run_chain(q, p, cfg, threads=3)
    np.testing.assert_array_equal(a.particle_log_weights, b.particle_log_weights)
    monkeypatch.setattr(anneal, "NOISE_CHUNK", 7)
    c = run_chain(q, p, cfg)
    np.testing.assert_array_equal(a.particle_log_weights, c.particle_log_weights)
    d = run_chain(q, p, HaisConfig(n_distributions=60, n_particles=600, seed=12))
    assert not np.array_equal(a.particle_log_weights, d.particle_log_weights)


def test_particle_streams_independent_of_particle_count():
    q = GaussianReference(2)
    p = GaussianReference(2, [2.0, 0.5])
    a = run_chain(q, p, HaisConfig(n_distributions=50, n_particles=10, seed=1))
    b = run_chain(q, p, HaisConfig(n_distributions=50, n_particles=20, seed=1))
    np.testing.assert_allclose(a.particle_log_weights, b.particle_log_weights[:10], rtol=1e-12)


def test_single_distribution_is_importance_sampling():
    q = GaussianReference(1)
    p = GaussianReference(1, 1.2)
    est = run_chain(q, p, HaisConfig(n_distributions=1, n_particles=50, seed=0), record=True)
    x = est.positions[0, :, 0]
    np.testing.assert_allclose(est.particle_log_weights, 0.5 * x**2 - 0.5 * (x / 1.2) ** 2, atol=1e-14)


def test_non_finite_dynamics_reports_context():
    with pytest.raises(NonFiniteDynamics) as info:
        run_chain(GaussianReference(1), Blowup(), HaisConfig(n_distributions=50, n_particles=200, seed=0))
    assert info.value.beta is not None and 0 < info.value.beta <= 1
    assert 0 <= info.value.particle < 200


def test_dimension_mismatch():
    with pytest.raises(ContractViolation):
        run_chain(GaussianReference(2), GaussianReference(3), HaisConfig())


def test_sweep_rows_and_order():
    q = GaussianReference(2)
    rows = convergence_sweep(q, GaussianReference(2), [5, 20], 2, HaisConfig(n_particles=10))
    keys = [(r.n_distributions, r.estimator, r.repeat) for r in rows]
    assert keys == [(n, e, k) for n in (5, 20) for e in ESTIMATORS for k in range(2)]
    assert all(r.log_z == q.analytic_log_z for r in rows)


def test_sweep_rejects_unknown_estimator():
    with pytest.raises(ContractViolation):
        convergence_sweep(GaussianReference(1), GaussianReference(1), [5], 1, HaisConfig(), ["nope"])


def test_sweep_error_nonincreasing_in_n():
    q = GaussianReference(2)
    p = GaussianReference(2, [2.0, 0.5])
    rows = convergence_sweep(q, p, [10, 100, 1000], 20, HaisConfig(seed=2), [HAIS])
    mae = [np.mean([abs(r.log_z - p.analytic_log_z) for r in rows if r.n_distributions == n]) for n in (10, 100, 1000)]
    assert mae[0] >= mae[1] >= mae[2]


def test_sweep_hais_beats_random_walk_on_laplace_poe():
    poe = random_poe(6, 6, "laplace", np.random.default_rng(0), orthogonal=True)
    truth = poe.analytic_log_z
    ns = [10, 30, 100, 300, 1000]
    rows = convergence_sweep(reference_for(poe), poe, ns, 10, HaisConfig(seed=1), [HAIS, AIS_MH])

    def med(est, n):
        return np.median([abs(r.log_z - truth) for r in rows if r.estimator == est and r.n_distributions == n])

    n_star = next(n for n in ns if med(HAIS, n) < 0.5)
    assert med(AIS_MH, n_star) > med(HAIS, n_star)


def test_reset_and_mh_need_no_momentum_record():
    est = run_chain(GaussianReference(1), GaussianReference(1, 2.0), HaisConfig(n_distributions=10, estimator=AIS_MH), record=True)
    assert est.momenta is None
    est = run_chain(GaussianReference(1), GaussianReference(1, 2.0), HaisConfig(n_distributions=10, estimator=AIS_HMC_RESET), record=True)
    assert est.positions.shape == (10, 200, 1)
