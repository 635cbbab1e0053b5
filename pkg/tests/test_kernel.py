import math

import numpy as np
import pytest
from scipy import stats

from hais.errors import ContractViolation, NonFiniteDynamics
from hais.kernel import (
    KernelConfig,
    PhasePoint,
    accept_probability,
    accept_reject,
    default_gamma,
    hais_transition,
    leapfrog,
    metropolis_accept,
    refresh_momentum,
)
from hais.models import CoordinateBound


def quad_energy(x):
    return 0.5 * np.sum(np.asarray(x) ** 2, axis=-1)


def quad_grad(x):
    return np.asarray(x, dtype=float)


def flat_grad(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def pp(x, v):
    return PhasePoint(np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(v, float)))


# -- leapfrog -----------------------------------------------------------------


def test_leapfrog_quadratic_substitution():
    y = leapfrog(pp(1.0, 0.0), quad_grad, 0.2)
    assert y.position[0] == pytest.approx(0.98)
    assert y.momentum[0] == pytest.approx(-0.2)


def test_leapfrog_free_flight():
    y = leapfrog(pp(0.0, 1.0), flat_grad, 0.2)
    assert y.position[0] == pytest.approx(0.2)
    assert y.momentum[0] == 1.0


def test_leapfrog_reflects_at_bound():
    y = leapfrog(pp(0.05, -1.0), flat_grad, 0.2, [CoordinateBound(0, 0.0)])
    # half step to -0.05, mirrored to 0.05 with v=+1, second half step to 0.15
    assert y.momentum[0] == 1.0
    assert y.position[0] == pytest.approx(0.15)


def test_leapfrog_reflection_first_half_step_only():
    # single half step that crosses: x = 0.05 - 0.1 -> reflected 0.05
    x, v = 0.05 + 0.5 * 0.2 * -1.0, -1.0
    assert x == pytest.approx(-0.05)
    from hais.kernel import reflect

    xr, vr = reflect(np.array([x]), np.array([v]), [CoordinateBound(0, 0.0)])
    assert xr[0] == pytest.approx(0.05)
    assert vr[0] == 1.0


def test_leapfrog_multiple_bounds_iterate():
    from hais.kernel import reflect

    xr, vr = reflect(np.array([-3.0]), np.array([-1.0]), [CoordinateBound(0, 0.0), CoordinateBound(0, 1.0)])
    assert xr[0] >= 1.0


def test_leapfrog_non_finite_gradient():
    def bad(x):
        return np.full_like(x, np.nan)

    with pytest.raises(NonFiniteDynamics) as info:
        leapfrog(pp([1.0, 2.0], [0.0, 0.0]), bad, 0.2)
    assert info.value.point is not None


@pytest.mark.parametrize("bounded", [False, True])
def test_leapfrog_reversibility(bounded, rng):
    bounds = [CoordinateBound(1, 0.0), CoordinateBound(2, -0.3)] if bounded else []
    x = rng.standard_normal((500, 3))
    if bounded:
        x[:, 1] = np.abs(x[:, 1]) * 0.05
        x[:, 2] = -0.3 + np.abs(x[:, 2]) * 0.05
    v = rng.standard_normal((500, 3)) * 2

    def grad(z):
        return z + 0.3 * np.sin(z)

    y1 = leapfrog(PhasePoint(x, v), grad, 0.2, bounds)
    y2 = leapfrog(PhasePoint(y1.position, -y1.momentum), grad, 0.2, bounds)
    np.testing.assert_allclose(y2.position, x, atol=1e-10, rtol=0)
    np.testing.assert_allclose(y2.momentum, -v, atol=1e-10, rtol=0)
    if bounded:
        # a good share of particles actually bounced on the first half step
        assert np.mean((x + 0.1 * v)[:, 1] < 0) > 0.2


def test_leapfrog_output_respects_bounds(rng):
    bounds = [CoordinateBound(0, 0.0), CoordinateBound(1, 1.0)]
    x = np.column_stack([np.abs(rng.standard_normal(1000)), 1 + np.abs(rng.standard_normal(1000))])
    v = rng.standard_normal((1000, 2)) * 20
    y = leapfrog(PhasePoint(x, v), quad_grad, 0.5, bounds)
    assert np.all(y.position[:, 0] >= 0) and np.all(y.position[:, 1] >= 1)


def test_leapfrog_volume_preservation(rng):
    for _ in range(5):
        a = rng.standard_normal((2, 2))
        prec = a @ a.T + 0.5 * np.eye(2)

        def f(z, prec=prec):
            y = leapfrog(PhasePoint(z[:2], z[2:]), lambda x: x @ prec.T, 0.2)
            return np.concatenate([y.position, y.momentum])

        # linear map: columns of the Jacobian are images of basis vectors
        jac = np.column_stack([f(e) for e in np.eye(4)])
        assert abs(np.linalg.det(jac) - 1.0) < 1e-8


# -- accept / reject ----------------------------------------------------------


def test_accept_equal_hamiltonians():
    assert accept_probability(3.0, 3.0) == 1.0


def test_accept_lower_energy_always():
    assert accept_probability(3.0, 1.0) == 1.0
    assert np.all(metropolis_accept(np.full(100, 3.0), np.full(100, 1.0), np.linspace(0, 0.999, 100)))


def test_accept_nan_and_inf_rejected():
    assert accept_probability(0.0, np.nan) == 0.0
    assert accept_probability(0.0, np.inf) == 0.0


def test_accept_rate_monte_carlo(rng):
    n = 100_000
    acc = metropolis_accept(np.zeros(n), np.ones(n), rng.random(n))
    assert acc.mean() == pytest.approx(math.exp(-1), abs=0.005)


def test_accept_reject_negates_accepted_momentum():
    y0 = pp([1.0], [0.5])
    y1 = pp([0.0], [0.5])  # lower energy, same kinetic
    out = accept_reject(y0, y1, quad_energy, uniform=np.array(0.3))
    assert out.position[0] == 0.0 and out.momentum[0] == -0.5


def test_accept_reject_keeps_state_on_rejection():
    y0 = pp([0.0], [0.0])
    y1 = pp([10.0], [0.0])
    out = accept_reject(y0, y1, quad_energy, uniform=np.array(0.5))
    assert out.position[0] == 0.0 and out.momentum[0] == 0.0


# -- momentum refresh ---------------------------------------------------------


def test_refresh_full_is_fresh_draw(rng):
    noise = rng.standard_normal(5)
    out = refresh_momentum(np.full(5, 100.0), 1.0, noise=noise)
    np.testing.assert_array_equal(out, noise)


def test_refresh_zero_is_negation_and_involution(rng):
    v = rng.standard_normal(5)
    np.testing.assert_array_equal(refresh_momentum(v, 0.0, rng), -v)
    np.testing.assert_array_equal(refresh_momentum(refresh_momentum(v, 0.0, rng), 0.0, rng), v)


@pytest.mark.parametrize("gamma", [0.05, default_gamma(0.2), 0.5, 0.9])
def test_refresh_preserves_unit_variance(gamma, rng):
    v = rng.standard_normal(100_000)
    out = refresh_momentum(v, gamma, rng)
    assert out.var() == pytest.approx(1.0, rel=0.01)


def test_default_gamma_half_life():
    g = default_gamma(0.2)
    assert g == pytest.approx(0.12944943670387588, abs=1e-14)
    assert (1 - g) ** (1 / 0.2) == pytest.approx(0.5)


def test_kernel_config_validation():
    assert KernelConfig().gamma == pytest.approx(default_gamma(0.2))
    with pytest.raises(ContractViolation):
        KernelConfig(gamma=0.0)
    with pytest.raises(ContractViolation):
        KernelConfig(epsilon=-1)


# -- full transition ----------------------------------------------------------


def test_transition_degenerate_step(rng):
    cfg = KernelConfig(epsilon=1e-12, gamma=1.0)
    noise = rng.standard_normal(3)
    y = hais_transition(pp([1.0, 2.0, 3.0], [0.3, 0.1, 0.2]), quad_energy, quad_grad, cfg, rng=rng, noise=noise)
    np.testing.assert_allclose(y.position, [1.0, 2.0, 3.0], atol=1e-10)
    np.testing.assert_array_equal(y.momentum, noise)


def _run_kernel(x, v, steps, rng, cfg=KernelConfig()):
    moved = 0
    samples = []
    for _ in range(steps):
        y = hais_transition(PhasePoint(x, v), quad_energy, quad_grad, cfg, rng=rng)
        moved += np.sum(y.position[:, 0] != x[:, 0])
        x, v = y.position, y.momentum
        samples.append(x[:, 0].copy())
    return x, v, np.array(samples), moved / (steps * x.shape[0])


def test_kernel_long_run_variance(rng):
    # 1000 chains x 1000 kept steps = 10^6 samples of a unit Gaussian
    x = np.zeros((1000, 1))
    v = rng.standard_normal((1000, 1))
    x, v, _, _ = _run_kernel(x, v, 200, rng)
    _, _, samples, rate = _run_kernel(x, v, 1000, rng)
    assert samples.var() == pytest.approx(1.0, rel=0.02)
    assert rate > 0.97


def test_kernel_invariance_ks(rng):
    # start 10^5 independent chains in the stationary law; it must persist
    n = 100_000
    x = rng.standard_normal((n, 1))
    v = rng.standard_normal((n, 1))
    x, _, _, _ = _run_kernel(x, v, 25, rng)
    assert stats.kstest(x[:, 0], "norm").pvalue > 0.01


def test_hais_transition_matches_manual_composition(rng):
    cfg = KernelConfig()
    y = pp(rng.standard_normal(4), rng.standard_normal(4))
    u, r = 0.4, rng.standard_normal(4)
    got = hais_transition(y, quad_energy, quad_grad, cfg, uniform=np.array(u), noise=r)
    y1 = leapfrog(y, quad_grad, cfg.epsilon)
    kept = accept_reject(y, y1, quad_energy, uniform=np.array(u))
    np.testing.assert_array_equal(got.position, kept.position)
    np.testing.assert_allclose(got.momentum, -math.sqrt(1 - cfg.gamma) * kept.momentum + math.sqrt(cfg.gamma) * r)
