"""Hamiltonian transition kernel: leapfrog, Metropolis test, momentum refresh.

All operations accept positions and momenta with a leading batch shape, so
a population of independent particles advances in one call.  Randomness is
passed in explicitly, either as a ``numpy.random.Generator`` or as
pre-drawn noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation, NonFiniteDynamics
from .models import CoordinateBound

GradientFn = Callable[[np.ndarray], np.ndarray]
EnergyFn = Callable[[np.ndarray], np.ndarray]

DEFAULT_EPSILON = 0.2


def default_gamma(epsilon: float) -> float:
    """Refresh fraction that randomizes half the momentum power per unit time.

    One unit of simulation time is ``1/epsilon`` steps, and each step keeps a
    ``1 - gamma`` share of the power, so ``(1 - gamma)**(1/epsilon) = 1/2``.
    """
    return 1.0 - 2.0 ** (-epsilon)


@dataclass(frozen=True)
class PhasePoint:
    position: np.ndarray
    momentum: np.ndarray

    def __post_init__(self):
        if np.shape(self.position) != np.shape(self.momentum):
            raise ContractViolation(
                f"position {np.shape(self.position)} and momentum {np.shape(self.momentum)} differ in shape"
            )


@dataclass(frozen=True)
class KernelConfig:
    epsilon: float = DEFAULT_EPSILON
    gamma: float | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ContractViolation("epsilon must be positive")
        if self.gamma is None:
            object.__setattr__(self, "gamma", default_gamma(self.epsilon))
        if not 0 < self.gamma <= 1:
            raise ContractViolation("gamma must lie in (0, 1]")


def reflect(
    x: np.ndarray, v: np.ndarray, constraints: Sequence[CoordinateBound]
) -> tuple[np.ndarray, np.ndarray]:
    """Mirror coordinates that fell below their bound and flip their momenta.

    Repeats until every bound holds; a coordinate with several lower bounds
    can bounce more than once.
    """
    if not constraints:
        return x, v
    x = np.array(x, dtype=float)
    v = np.array(v, dtype=float)
    while True:
        moved = False
        for b in constraints:
            below = x[..., b.index] < b.lower
            if np.any(below):
                moved = True
                xi = x[..., b.index]
                vi = v[..., b.index]
                x[..., b.index] = np.where(below, 2.0 * b.lower - xi, xi)
                v[..., b.index] = np.where(below, -vi, vi)
        if not moved:
            return x, v


def leapfrog(
    y: PhasePoint,
    grad: GradientFn,
    epsilon: float,
    constraints: Sequence[CoordinateBound] = (),
) -> PhasePoint:
    """One leapfrog step: half position step, full momentum kick, half position step.

    Raises:
        NonFiniteDynamics: the gradient at the midpoint is not finite.
    """
    x, v = reflect(y.position + 0.5 * epsilon * y.momentum, y.momentum, constraints)
    g = grad(x)
    bad = ~np.all(np.isfinite(g), axis=-1)
    if np.any(bad):
        idx = int(np.flatnonzero(np.atleast_1d(bad))[0])
        point = np.atleast_2d(x)[idx]
        raise NonFiniteDynamics(f"non-finite gradient at {point!r}", point=point, particle=idx)
    v = v - epsilon * g
    x, v = reflect(x + 0.5 * epsilon * v, v, constraints)
    return PhasePoint(x, v)


def hamiltonian(energy: EnergyFn, y: PhasePoint) -> np.ndarray:
    return energy(y.position) + 0.5 * np.sum(y.momentum**2, axis=-1)


def accept_probability(h0, h1) -> np.ndarray:
    """``min(1, exp(h0 - h1))``; a NaN or infinite proposal gives 0."""
    h1 = np.asarray(h1)
    with np.errstate(over="ignore", invalid="ignore"):
        d = np.asarray(h0) - h1
        ok = np.isfinite(h1) & np.isfinite(d)
        return np.where(ok, np.exp(np.minimum(0.0, np.where(ok, d, 0.0))), 0.0)


def metropolis_accept(h0, h1, uniform) -> np.ndarray:
    """Boolean mask of accepted proposals given ``U(0,1)`` draws."""
    return np.asarray(uniform) < accept_probability(h0, h1)


def accept_reject(
    y0: PhasePoint,
    y1: PhasePoint,
    energy: EnergyFn,
    rng: np.random.Generator | None = None,
    *,
    uniform=None,
) -> PhasePoint:
    """Metropolis test on the joint energy; accepted proposals get negated momentum."""
    h0 = hamiltonian(energy, y0)
    with np.errstate(invalid="ignore", over="ignore"):
        h1 = hamiltonian(energy, y1)
    if uniform is None:
        uniform = rng.random(np.shape(h0))
    acc = metropolis_accept(h0, h1, uniform)[..., None]
    return PhasePoint(
        np.where(acc, y1.position, y0.position),
        np.where(acc, -y1.momentum, y0.momentum),
    )


def refresh_momentum(v, gamma: float, rng: np.random.Generator | None = None, *, noise=None) -> np.ndarray:
    """Negate and partially corrupt the momentum: ``-sqrt(1-g) v + sqrt(g) r``.

    The square root on the noise keeps a unit-Gaussian momentum
    unit-Gaussian.  ``gamma = 0`` is pure negation.
    """
    if not 0 <= gamma <= 1:
        raise ContractViolation("gamma must lie in [0, 1]")
    v = np.asarray(v, dtype=float)
    if noise is None:
        noise = rng.standard_normal(v.shape)
    return -math.sqrt(1.0 - gamma) * v + math.sqrt(gamma) * np.asarray(noise)


def hais_transition(
    y: PhasePoint,
    energy: EnergyFn,
    grad: GradientFn,
    config: KernelConfig,
    constraints: Sequence[CoordinateBound] = (),
    rng: np.random.Generator | None = None,
    *,
    uniform=None,
    noise=None,
) -> PhasePoint:
    """Leapfrog, Metropolis test, then partial momentum refresh, once each."""
    proposal = leapfrog(y, grad, config.epsilon, constraints)
    kept = accept_reject(y, proposal, energy, rng, uniform=uniform)
    v = refresh_momentum(kept.momentum, config.gamma, rng, noise=noise)
    return PhasePoint(kept.position, v)
