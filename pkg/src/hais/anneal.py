"""Annealed importance sampling chains and partition-function estimates.

A chain starts from an exactly sampled proposal ``q`` and walks through the
bridge energies ``(1 - beta) E_q + beta E_p`` for ``beta = 1/N, ..., 1``,
accumulating the log importance weight

    sum_n [E_{n-1}(x_n) - E_n(x_n)]

with ``E_0 = E_q`` and ``E_N = E_p``.  Between weight terms the particle is
moved by a Markov kernel that leaves the current bridge invariant: the
persistent-momentum Hamiltonian kernel (``hais``), the same kernel with the
momentum redrawn every step (``ais-hmc-reset``), or a Gaussian random-walk
Metropolis step (``ais-mh``).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .errors import ContractViolation, NonFiniteDynamics
from .kernel import (
    DEFAULT_EPSILON,
    PhasePoint,
    default_gamma,
    leapfrog,
    metropolis_accept,
    refresh_momentum,
)
from .models import EnergyModel, GaussianReference

HAIS = "hais"
AIS_MH = "ais-mh"
AIS_HMC_RESET = "ais-hmc-reset"
ESTIMATORS = (HAIS, AIS_HMC_RESET, AIS_MH)

# Particles are advanced in fixed-size vectorized blocks.  The block layout
# never depends on the thread count, so results are bit-identical however
# many workers run them.
PARTICLE_BLOCK = 256
# Steps of noise drawn per particle stream at a time.
NOISE_CHUNK = 512

_NORMAL_STREAM = 0
_UNIFORM_STREAM = 1


@dataclass(frozen=True)
class Schedule:
    """Nondecreasing annealing fractions ending exactly at 1."""

    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if b.ndim != 1 or b.size < 1:
            raise ContractViolation("schedule needs at least one beta")
        if np.any(np.diff(b) < 0) or b[0] < 0 or b[-1] != 1.0:
            raise ContractViolation("betas must be nondecreasing in [0, 1] and end at 1")
        b.flags.writeable = False
        object.__setattr__(self, "betas", b)

    @classmethod
    def linear(cls, n: int) -> Schedule:
        if n < 1:
            raise ContractViolation("n_distributions must be at least 1")
        return cls(np.arange(1, n + 1) / n)

    @classmethod
    def sigmoid(cls, n: int, width: float = 4.0) -> Schedule:
        """Denser near both endpoints; rescaled so it starts near 0 and ends at 1."""
        if n < 1:
            raise ContractViolation("n_distributions must be at least 1")
        s = 1.0 / (1.0 + np.exp(-np.linspace(-width, width, n + 1)))
        b = (s - s[0]) / (s[-1] - s[0])
        b[-1] = 1.0
        return cls(b[1:])

    def __len__(self) -> int:
        return self.betas.size


SCHEDULES = {"linear": Schedule.linear, "sigmoid": Schedule.sigmoid}


@dataclass(frozen=True)
class HaisConfig:
    n_distributions: int = 1000
    n_particles: int = 200
    epsilon: float = DEFAULT_EPSILON
    gamma: float | None = None
    seed: int = 0
    estimator: str = HAIS
    mh_sigma: float = 0.1
    schedule: str = "linear"

    def __post_init__(self):
        if self.n_distributions < 1:
            raise ContractViolation("n_distributions must be at least 1")
        if self.n_particles < 2:
            raise ContractViolation("n_particles must be at least 2")
        if not self.epsilon > 0:
            raise ContractViolation("epsilon must be positive")
        if self.gamma is None:
            object.__setattr__(self, "gamma", default_gamma(self.epsilon))
        if not 0 < self.gamma <= 1:
            raise ContractViolation("gamma must lie in (0, 1]")
        if self.estimator not in ESTIMATORS:
            raise ContractViolation(
                f"unknown estimator {self.estimator!r}; choose from {', '.join(ESTIMATORS)}"
            )
        if not self.mh_sigma > 0:
            raise ContractViolation("mh_sigma must be positive")
        if self.schedule not in SCHEDULES:
            raise ContractViolation(f"unknown schedule {self.schedule!r}")

    def betas(self) -> np.ndarray:
        return SCHEDULES[self.schedule](self.n_distributions).betas


@dataclass
class LogZEstimate:
    log_z: float
    std_err: float
    ess: float
    particle_log_weights: np.ndarray
    log_z_proposal: float
    # (N, P, dim) positions x_1..x_N and momenta after each transition, when recorded
    positions: np.ndarray | None = field(default=None, repr=False)
    momenta: np.ndarray | None = field(default=None, repr=False)


def intermediate_energy(beta, e_q, e_p):
    return (1.0 - beta) * e_q + beta * e_p


def log_mean_exp(values) -> float:
    """``log(mean(exp(values)))`` without overflow."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ContractViolation("log_mean_exp of an empty sequence")
    return float(logsumexp(v) - math.log(v.size))


def effective_sample_size(log_weights) -> float:
    """``(sum w)^2 / sum w^2`` computed from log weights."""
    lw = np.asarray(log_weights, dtype=float)
    return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def log_z_std_err(log_weights) -> float:
    """Delta-method standard error of ``log mean(w)``: ``sd(w) / (sqrt(P) mean(w))``."""
    lw = np.asarray(log_weights, dtype=float)
    top = np.max(lw)
    if not np.isfinite(top):
        return float("nan")
    w = np.exp(lw - top)
    return float(np.std(w, ddof=1) / (math.sqrt(w.size) * np.mean(w)))


def summarize(log_weights, log_z_proposal: float) -> LogZEstimate:
    lw = np.asarray(log_weights, dtype=float)
    return LogZEstimate(
        log_z=log_mean_exp(lw) + log_z_proposal,
        std_err=log_z_std_err(lw),
        ess=effective_sample_size(lw),
        particle_log_weights=lw,
        log_z_proposal=log_z_proposal,
    )


def particle_stream(seed: int, key: tuple[int, ...], particle: int, purpose: int) -> np.random.Generator:
    """Independent generator for one particle, keyed by ``(seed, key, particle, purpose)``."""
    ss = np.random.SeedSequence(seed, spawn_key=(*key, particle, purpose))
    return np.random.Generator(np.random.PCG64(ss))


class _Noise:
    """Per-particle normal and uniform streams, drawn in step chunks."""

    def __init__(self, seed, key, ids, dim):
        self.normals = [particle_stream(seed, key, i, _NORMAL_STREAM) for i in ids]
        self.uniforms = [particle_stream(seed, key, i, _UNIFORM_STREAM) for i in ids]
        self.dim = dim

    def normal(self, k: int) -> np.ndarray:
        return np.stack([g.standard_normal((k, self.dim)) for g in self.normals], axis=1)

    def uniform(self, k: int) -> np.ndarray:
        return np.stack([g.random(k) for g in self.uniforms], axis=1)


def _run_block(proposal, target, config: HaisConfig, betas, ids, key, record):
    dim = target.dim
    kind = config.estimator
    constraints = tuple(target.constraints) + tuple(proposal.constraints)
    noise = _Noise(config.seed, key, ids, dim)

    x = proposal.from_normals(noise.normal(1)[0])
    v = noise.normal(1)[0] if kind == HAIS else None
    eq = proposal.energy(x)
    ep = target.energy(x)
    lw = np.zeros(len(ids))

    n_total = betas.size
    xs, vs = ([], []) if record else (None, None)
    if record:
        xs.append(x.copy())
        vs.append(None if v is None else v.copy())

    prev_beta = 0.0
    step_noise = step_unif = None
    for n in range(n_total):
        beta = betas[n]
        lw += (beta - prev_beta) * (eq - ep)
        prev_beta = beta
        if n == n_total - 1:
            break
        j = n % NOISE_CHUNK
        if j == 0:
            k = min(NOISE_CHUNK, n_total - 1 - n)
            step_noise = noise.normal(k)
            step_unif = noise.uniform(k)
        r, u = step_noise[j], step_unif[j]

        if kind == AIS_MH:
            x1 = x + config.mh_sigma * r
            ok = target.satisfies_constraints(x1) & proposal.satisfies_constraints(x1)
            with np.errstate(invalid="ignore", over="ignore"):
                eq1 = proposal.energy(x1)
                ep1 = target.energy(x1)
                h0 = intermediate_energy(beta, eq, ep)
                h1 = np.where(ok, intermediate_energy(beta, eq1, ep1), np.inf)
        else:
            if kind == AIS_HMC_RESET:
                v = r

            def grad(z, beta=beta):
                return (1.0 - beta) * proposal.gradient(z) + beta * target.gradient(z)

            try:
                y1 = leapfrog(PhasePoint(x, v), grad, config.epsilon, constraints)
            except NonFiniteDynamics as err:
                raise NonFiniteDynamics(
                    f"non-finite gradient at beta={beta:.6g} for particle {ids[err.particle]}",
                    point=err.point,
                    beta=float(beta),
                    particle=int(ids[err.particle]),
                ) from err
            x1 = y1.position
            with np.errstate(invalid="ignore", over="ignore"):
                eq1 = proposal.energy(x1)
                ep1 = target.energy(x1)
                h0 = intermediate_energy(beta, eq, ep) + 0.5 * np.sum(v * v, axis=-1)
                h1 = intermediate_energy(beta, eq1, ep1) + 0.5 * np.sum(y1.momentum**2, axis=-1)

        acc = metropolis_accept(h0, h1, u)
        x = np.where(acc[:, None], x1, x)
        eq = np.where(acc, eq1, eq)
        ep = np.where(acc, ep1, ep)
        if kind == HAIS:
            v = np.where(acc[:, None], -y1.momentum, v)
            v = refresh_momentum(v, config.gamma, noise=r)
        if record:
            xs.append(x.copy())
            vs.append(None if v is None else v.copy())

    traj = None
    if record:
        traj = (np.stack(xs), None if kind != HAIS else np.stack(vs))
    return lw, traj


def run_chain(
    proposal: GaussianReference,
    target: EnergyModel,
    config: HaisConfig,
    *,
    stream_key: tuple[int, ...] = (),
    threads: int = 1,
    record: bool = False,
) -> LogZEstimate:
    """Estimate ``log Z`` of ``target`` with one annealing run of ``config.n_particles`` particles.

    Args:
        proposal: Exactly sampleable start distribution with known normalizer.
        target: Model whose normalizer is wanted.
        config: Run parameters.
        stream_key: Extra integers mixed into every particle's random stream,
            so independent runs sharing a seed (repeats, datapoints) differ.
        threads: Worker threads over particle blocks; does not change results.
        record: Keep full trajectories on the returned estimate (memory grows
            with ``N * particles * dim``).

    Raises:
        NonFiniteDynamics: a gradient went non-finite; carries beta and particle.
    """
    if proposal.dim != target.dim:
        raise ContractViolation(f"proposal dim {proposal.dim} != target dim {target.dim}")
    log_zq = proposal.analytic_log_z
    if log_zq is None or not hasattr(proposal, "from_normals"):
        raise ContractViolation("proposal must be directly sampleable with a known normalizer")
    betas = config.betas()
    ids = np.arange(config.n_particles)
    blocks = [ids[i : i + PARTICLE_BLOCK] for i in range(0, ids.size, PARTICLE_BLOCK)]
    key = tuple(int(k) for k in stream_key)

    def work(block):
        return _run_block(proposal, target, config, betas, block, key, record)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(b) for b in blocks]

    est = summarize(np.concatenate([lw for lw, _ in results]), log_zq)
    if record:
        est.positions = np.concatenate([t[0] for _, t in results], axis=1)
        if config.estimator == HAIS:
            est.momenta = np.concatenate([t[1] for _, t in results], axis=1)
    return est


def reference_for(target: EnergyModel) -> GaussianReference:
    """Unit Gaussian proposal matching ``target``'s dimension and bounds."""
    return GaussianReference(target.dim, 1.0, target.constraints)


@dataclass(frozen=True)
class SweepRow:
    n_distributions: int
    estimator: str
    repeat: int
    log_z: float
    std_err: float
    ess: float
    seconds: float


def convergence_sweep(
    proposal: GaussianReference,
    target: EnergyModel,
    n_list,
    repeats: int,
    config: HaisConfig,
    estimators=ESTIMATORS,
    threads: int = 1,
) -> list[SweepRow]:
    """Run every estimator at every N, ``repeats`` times each.

    Rows come out ordered by (N, estimator, repeat) in the order given.  Each
    run gets its own random streams keyed by its position in that ordering.
    """
    n_list = [int(n) for n in n_list]
    if not n_list:
        raise ContractViolation("n_list must not be empty")
    if repeats < 1:
        raise ContractViolation("repeats must be at least 1")
    for name in estimators:
        if name not in ESTIMATORS:
            raise ContractViolation(f"unknown estimator {name!r}; choose from {', '.join(ESTIMATORS)}")
    rows = []
    for ni, n in enumerate(n_list):
        for ei, name in enumerate(estimators):
            cfg = replace(config, n_distributions=n, estimator=name)
            for rep in range(repeats):
                t0 = time.perf_counter()
                est = run_chain(proposal, target, cfg, stream_key=(ni, ei, rep), threads=threads)
                rows.append(
                    SweepRow(n, name, rep, est.log_z, est.std_err, est.ess, time.perf_counter() - t0)
                )
    return rows
