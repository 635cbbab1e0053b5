"""Energy-based models over continuous state vectors.

Every model exposes ``energy`` and ``gradient`` over arrays of shape
``(..., dim)`` so a whole population of particles can be evaluated in one
call.  Energies are in nats; the density of a model is ``exp(-energy) / Z``.

Analysis models (product of experts, mcRBM) are energy models over the data
directly.  Generative models (linear and bilinear) are turned into energy
models over their auxiliary variables with :func:`posterior_model`; the
normalizer of that posterior energy is the datapoint's likelihood.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .errors import ContractViolation

LOG_2PI = math.log(2.0 * math.pi)

GAUSSIAN = "gaussian"
LAPLACE = "laplace"
STUDENT_T = "student_t"


@dataclass(frozen=True)
class CoordinateBound:
    """Inclusive lower bound ``x[index] >= lower``."""

    index: int
    lower: float = 0.0


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ContractViolation(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} has non-finite entries")
    arr.flags.writeable = False
    return arr


class EnergyModel(ABC):
    """Unnormalized density ``exp(-energy(x))`` over ``R^dim``.

    Subclasses implement ``_energy`` and ``_gradient`` for inputs already
    checked to have trailing dimension ``dim``.  Instances are immutable, so
    evaluation is safe from any number of threads.
    """

    dim: int
    constraints: tuple[CoordinateBound, ...] = ()

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise ContractViolation(
                f"{type(self).__name__} expects vectors of length {self.dim}, "
                f"got array of shape {x.shape}"
            )
        return x

    def energy(self, x) -> np.ndarray:
        return self._energy(self._check(x))

    def gradient(self, x) -> np.ndarray:
        return self._gradient(self._check(x))

    @abstractmethod
    def _energy(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _gradient(self, x: np.ndarray) -> np.ndarray: ...

    @property
    def analytic_log_z(self) -> float | None:
        """Exact ``log ∫ exp(-energy)``, or None when no closed form is known."""
        return None

    def satisfies_constraints(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ok = np.ones(x.shape[:-1], dtype=bool)
        for b in self.constraints:
            ok &= x[..., b.index] >= b.lower
        return ok


class GaussianReference(EnergyModel):
    """Axis-aligned Gaussian ``sum(x_i^2 / (2 s_i^2))``, optionally truncated.

    A coordinate with a lower bound ``b`` becomes a Gaussian truncated to
    ``[b, inf)``; for ``b = 0`` that is a half-Gaussian and its normalizer
    shrinks by a factor of two.  This is the proposal for every annealing run,
    so it can also be sampled exactly.
    """

    def __init__(self, dim: int, scale=1.0, bounds: Sequence[CoordinateBound] = ()):
        if dim < 1:
            raise ContractViolation("dim must be positive")
        self.dim = int(dim)
        scale = np.broadcast_to(np.asarray(scale, dtype=float), (self.dim,)).copy()
        if np.any(scale <= 0):
            raise ContractViolation("scale entries must be positive")
        scale.flags.writeable = False
        self.scale = scale
        self.constraints = tuple(bounds)
        for b in self.constraints:
            if not 0 <= b.index < self.dim:
                raise ContractViolation(f"bound index {b.index} outside dim {self.dim}")
        # tightest lower bound per coordinate, in standardized units
        lower = np.full(self.dim, -np.inf)
        for b in self.constraints:
            lower[b.index] = max(lower[b.index], b.lower / self.scale[b.index])
        lower.flags.writeable = False
        self._lower = lower

    def _energy(self, x):
        return 0.5 * np.sum((x / self.scale) ** 2, axis=-1)

    def _gradient(self, x):
        return x / self.scale**2

    @property
    def analytic_log_z(self) -> float:
        tail = special.log_ndtr(-self._lower)
        return float(0.5 * self.dim * LOG_2PI + np.sum(np.log(self.scale)) + np.sum(tail))

    def from_normals(self, z) -> np.ndarray:
        """Map standard normal draws to exact draws from this distribution.

        Bounded coordinates use the inverse-CDF transform, so one normal
        draw is consumed per coordinate either way.
        """
        z = self._check(z)
        out = z.copy()
        bounded = np.isfinite(self._lower)
        if np.any(bounded):
            lo = self._lower[bounded]
            # upper-tail form: P(X > x) = P(Z > z) * P(N > lo), stable for large z
            tail = special.ndtr(-z[..., bounded]) * special.ndtr(-lo)
            out[..., bounded] = np.maximum(-special.ndtri(tail), lo)
        return out * self.scale


class PoeModel(EnergyModel):
    """Product of experts ``sum_l E(phi_l . x; lambda_l)``.

    Args:
        phi: Filter matrix of shape ``(L, M)``, one filter per row.
        lam: Positive expert weights, length ``L``.  Laplace experts require
            all ones since the weight only rescales the filter.
        expert: ``"laplace"`` (``lambda |u|``) or ``"student_t"``
            (``lambda log(1 + u^2)``).
    """

    def __init__(self, phi, lam=None, expert: str = LAPLACE):
        self.phi = _frozen(phi, 2, "phi")
        n_experts, self.dim = self.phi.shape
        if lam is None:
            lam = np.ones(n_experts)
        self.lam = _frozen(lam, 1, "lambda")
        if self.lam.shape[0] != n_experts:
            raise ContractViolation(f"lambda has length {self.lam.shape[0]}, expected {n_experts}")
        if np.any(self.lam <= 0):
            raise ContractViolation("lambda entries must be positive")
        if expert not in (LAPLACE, STUDENT_T):
            raise ContractViolation(f"unknown expert {expert!r}")
        if expert == LAPLACE and not np.all(self.lam == 1.0):
            raise ContractViolation("Laplace experts have lambda fixed to 1")
        self.expert = expert

    @property
    def n_experts(self) -> int:
        return self.phi.shape[0]

    def _energy(self, x):
        u = x @ self.phi.T
        if self.expert == LAPLACE:
            return np.sum(self.lam * np.abs(u), axis=-1)
        return np.sum(self.lam * np.log1p(u * u), axis=-1)

    def _gradient(self, x):
        u = x @ self.phi.T
        if self.expert == LAPLACE:
            du = self.lam * np.sign(u)
        else:
            du = self.lam * 2.0 * u / (1.0 + u * u)
        return du @ self.phi

    @property
    def analytic_log_z(self) -> float | None:
        # closed form only for a complete, invertible filter bank
        if self.n_experts != self.dim:
            return None
        sign, logdet = np.linalg.slogdet(self.phi)
        if sign == 0 or not np.isfinite(logdet):
            return None
        if self.expert == LAPLACE:
            per_expert = np.log(2.0 / self.lam)
        else:
            if np.any(self.lam <= 0.5):
                return None
            per_expert = (
                0.5 * math.log(math.pi)
                + special.gammaln(self.lam - 0.5)
                - special.gammaln(self.lam)
            )
        return float(np.sum(per_expert) - logdet)


class McRbm(EnergyModel):
    """Mean-and-covariance RBM with hidden units summed out.

    The energy is::

        -sum_k softplus(0.5 * sum_l P[l,k] (C_l x)^2 / (|x|^2 + 1/2) + b_c[k])
        -sum_j softplus(W_j x + b_m[j])
        + |x|^2 / (2 sigma^2) - x . b_v
    """

    def __init__(self, p_mat, c_mat, w_mat, b_m, b_c, b_v, sigma: float = 1.0):
        self.p_mat = _frozen(p_mat, 2, "P")
        self.c_mat = _frozen(c_mat, 2, "C")
        self.w_mat = _frozen(w_mat, 2, "W")
        self.b_m = _frozen(b_m, 1, "b_m")
        self.b_c = _frozen(b_c, 1, "b_c")
        self.b_v = _frozen(b_v, 1, "b_v")
        n_filters, self.dim = self.c_mat.shape
        n_cov = self.p_mat.shape[1]
        n_mean = self.w_mat.shape[0]
        checks = [
            ("P rows", self.p_mat.shape[0], n_filters),
            ("W columns", self.w_mat.shape[1], self.dim),
            ("b_m length", self.b_m.shape[0], n_mean),
            ("b_c length", self.b_c.shape[0], n_cov),
            ("b_v length", self.b_v.shape[0], self.dim),
        ]
        for what, got, want in checks:
            if got != want:
                raise ContractViolation(f"mcRBM {what} is {got}, expected {want}")
        if not sigma > 0:
            raise ContractViolation("sigma must be positive")
        self.sigma = float(sigma)

    def _cov_input(self, x):
        f = x @ self.c_mat.T
        s = np.sum(x * x, axis=-1, keepdims=True) + 0.5
        return f, s, 0.5 * ((f * f) @ self.p_mat) / s + self.b_c

    def _energy(self, x):
        _, _, q = self._cov_input(x)
        cov = np.sum(np.logaddexp(0.0, q), axis=-1)
        mean = np.sum(np.logaddexp(0.0, x @ self.w_mat.T + self.b_m), axis=-1)
        quad = 0.5 * np.sum(x * x, axis=-1) / self.sigma**2
        return -cov - mean + quad - x @ self.b_v

    def _gradient(self, x):
        f, s, q = self._cov_input(x)
        sc = special.expit(q)
        # d/dx of 0.5 * sum_l P_lk f_l^2 / s, contracted with the softplus slopes
        dq = ((sc @ self.p_mat.T) * f) @ self.c_mat / s
        dq -= np.sum(sc * ((f * f) @ self.p_mat), axis=-1, keepdims=True) / s**2 * x
        sm = special.expit(x @ self.w_mat.T + self.b_m)
        return -dq - sm @ self.w_mat + x / self.sigma**2 - self.b_v


class LinearGenerative:
    """``x = phi a + noise`` with isotropic Gaussian noise of std ``sigma_n``.

    The prior over ``a`` is standard Gaussian or unit Laplace.
    """

    def __init__(self, phi, prior: str = GAUSSIAN, sigma_n: float = 0.1):
        self.phi = _frozen(phi, 2, "phi")
        if prior not in (GAUSSIAN, LAPLACE):
            raise ContractViolation(f"unknown prior {prior!r}")
        if not sigma_n > 0:
            raise ContractViolation("sigma_n must be positive")
        self.prior = prior
        self.sigma_n = float(sigma_n)

    @property
    def data_dim(self) -> int:
        return self.phi.shape[0]

    @property
    def aux_dim(self) -> int:
        return self.phi.shape[1]

    def basis_output(self, aux: np.ndarray) -> np.ndarray:
        return aux @ self.phi.T

    def prior_energy(self, a) -> np.ndarray:
        """Prior energy including its log-normalizer."""
        a = np.asarray(a, dtype=float)
        if self.prior == GAUSSIAN:
            return 0.5 * np.sum(a * a, axis=-1) + 0.5 * self.aux_dim * LOG_2PI
        return np.sum(np.abs(a), axis=-1) + self.aux_dim * math.log(2.0)

    def prior_gradient(self, a: np.ndarray) -> np.ndarray:
        return a if self.prior == GAUSSIAN else np.sign(a)

    def output_gradient(self, aux: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        return grad_out @ self.phi

    def aux_bounds(self) -> tuple[CoordinateBound, ...]:
        return ()

    def sample_aux(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.prior == GAUSSIAN:
            return rng.standard_normal((n, self.aux_dim))
        return rng.laplace(size=(n, self.aux_dim))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        aux = self.sample_aux(n, rng)
        return self.basis_output(aux) + self.sigma_n * rng.standard_normal((n, self.data_dim))

    def marginal_log_likelihood(self, x) -> np.ndarray | None:
        """Exact ``log p(x)`` where a closed form exists.

        Available for the Gaussian prior (marginal covariance
        ``phi phi^T + sigma_n^2 I``) and for any prior when ``phi = 0``.
        """
        x = np.asarray(x, dtype=float)
        if np.all(self.phi == 0):
            return _isotropic_log_density(x, self.sigma_n)
        if self.prior != GAUSSIAN:
            return None
        cov = self.phi @ self.phi.T + self.sigma_n**2 * np.eye(self.data_dim)
        chol = np.linalg.cholesky(cov)
        sol = np.linalg.solve(chol, np.atleast_2d(x).T).T
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        ll = -0.5 * np.sum(sol * sol, axis=-1) - 0.5 * (self.data_dim * LOG_2PI + logdet)
        return ll.reshape(x.shape[:-1])


class BilinearGenerative:
    """Linear generative model with ``a = (theta c) * (psi d)``.

    ``c`` has a unit Laplace prior; ``d >= 0`` has density ``exp(-sum d)``.
    """

    prior = "bilinear"

    def __init__(self, phi, theta, psi, sigma_n: float = 0.1):
        self.phi = _frozen(phi, 2, "phi")
        self.theta = _frozen(theta, 2, "theta")
        self.psi = _frozen(psi, 2, "psi")
        n_coef = self.phi.shape[1]
        if self.theta.shape[0] != n_coef or self.psi.shape[0] != n_coef:
            raise ContractViolation(
                f"theta and psi need {n_coef} rows, got {self.theta.shape[0]} and {self.psi.shape[0]}"
            )
        if not sigma_n > 0:
            raise ContractViolation("sigma_n must be positive")
        self.sigma_n = float(sigma_n)

    @property
    def data_dim(self) -> int:
        return self.phi.shape[0]

    @property
    def k_c(self) -> int:
        return self.theta.shape[1]

    @property
    def k_d(self) -> int:
        return self.psi.shape[1]

    @property
    def aux_dim(self) -> int:
        return self.k_c + self.k_d

    def split(self, aux: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return aux[..., : self.k_c], aux[..., self.k_c :]

    def coefficients(self, aux: np.ndarray) -> np.ndarray:
        c, d = self.split(aux)
        return (c @ self.theta.T) * (d @ self.psi.T)

    def basis_output(self, aux: np.ndarray) -> np.ndarray:
        return self.coefficients(aux) @ self.phi.T

    def prior_energy(self, aux) -> np.ndarray:
        c, d = self.split(np.asarray(aux, dtype=float))
        return np.sum(np.abs(c), axis=-1) + self.k_c * math.log(2.0) + np.sum(np.abs(d), axis=-1)

    def prior_gradient(self, aux: np.ndarray) -> np.ndarray:
        return np.sign(aux)

    def output_gradient(self, aux: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        c, d = self.split(aux)
        g_a = grad_out @ self.phi
        g_c = (g_a * (d @ self.psi.T)) @ self.theta
        g_d = (g_a * (c @ self.theta.T)) @ self.psi
        return np.concatenate([g_c, g_d], axis=-1)

    def aux_bounds(self) -> tuple[CoordinateBound, ...]:
        return tuple(CoordinateBound(self.k_c + i, 0.0) for i in range(self.k_d))

    def sample_aux(self, n: int, rng: np.random.Generator) -> np.ndarray:
        c = rng.laplace(size=(n, self.k_c))
        d = rng.exponential(size=(n, self.k_d))
        return np.concatenate([c, d], axis=-1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        aux = self.sample_aux(n, rng)
        return self.basis_output(aux) + self.sigma_n * rng.standard_normal((n, self.data_dim))

    def marginal_log_likelihood(self, x) -> np.ndarray | None:
        if np.all(self.phi == 0):
            return _isotropic_log_density(np.asarray(x, dtype=float), self.sigma_n)
        return None


def _isotropic_log_density(x: np.ndarray, sigma: float) -> np.ndarray:
    m = x.shape[-1]
    return -0.5 * np.sum(x * x, axis=-1) / sigma**2 - 0.5 * m * LOG_2PI - m * math.log(sigma)


class GenerativePosterior(EnergyModel):
    """Energy over the auxiliary variables of a generative model at fixed ``x``.

    The energy is the full negative log joint ``-log p(x | a) - log p(a)``,
    normalizing constants included, so its partition function is ``p(x)``.
    """

    def __init__(self, gen: LinearGenerative | BilinearGenerative, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (gen.data_dim,):
            raise ContractViolation(
                f"datapoint has shape {x.shape}, model expects ({gen.data_dim},)"
            )
        self.gen = gen
        self.x = x.copy()
        self.x.flags.writeable = False
        self.dim = gen.aux_dim
        self.constraints = gen.aux_bounds()
        m = gen.data_dim
        self._log_z_noise = 0.5 * m * LOG_2PI + m * math.log(gen.sigma_n)

    def _energy(self, aux):
        r = self.x - self.gen.basis_output(aux)
        fit = 0.5 * np.sum(r * r, axis=-1) / self.gen.sigma_n**2
        return fit + self._log_z_noise + self.gen.prior_energy(aux)

    def _gradient(self, aux):
        r = self.x - self.gen.basis_output(aux)
        grad_out = -r / self.gen.sigma_n**2
        return self.gen.output_gradient(aux, grad_out) + self.gen.prior_gradient(aux)

    @property
    def analytic_log_z(self) -> float | None:
        ll = self.gen.marginal_log_likelihood(self.x)
        return None if ll is None else float(ll)


def posterior_model(gen: LinearGenerative | BilinearGenerative, x) -> GenerativePosterior:
    """Energy model over ``gen``'s auxiliaries whose normalizer is ``p(x)``."""
    return GenerativePosterior(gen, x)


def analytic_log_z(model) -> float | None:
    """Closed-form log normalizer, or None when the model has none.

    For a generative model this is not defined without a datapoint; use
    ``gen.marginal_log_likelihood(x)`` or ``posterior_model(gen, x)``.
    """
    if isinstance(model, EnergyModel):
        try:
            return model.analytic_log_z
        except np.linalg.LinAlgError:
            return None
    return None


# -- random parameter draws ------------------------------------------------


def _normal(rng: np.random.Generator, shape, m: int) -> np.ndarray:
    return rng.standard_normal(shape) / math.sqrt(m)


def random_orthogonal(m: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


def random_poe(
    m: int,
    n_experts: int,
    expert: str,
    rng: np.random.Generator,
    lam_range: tuple[float, float] = (0.6, 2.0),
    orthogonal: bool = False,
) -> PoeModel:
    if orthogonal:
        if n_experts != m:
            raise ContractViolation("orthogonal filters need a complete model")
        phi = random_orthogonal(m, rng)
    else:
        phi = _normal(rng, (n_experts, m), m)
    lam = None
    if expert == STUDENT_T:
        lam = rng.uniform(*lam_range, size=n_experts)
    return PoeModel(phi, lam, expert)


def random_mcrbm(m: int, n_filters: int, k: int, j: int, rng: np.random.Generator, sigma=1.0) -> McRbm:
    return McRbm(
        p_mat=np.abs(_normal(rng, (n_filters, k), m)),
        c_mat=_normal(rng, (n_filters, m), m),
        w_mat=_normal(rng, (j, m), m),
        b_m=_normal(rng, j, m),
        b_c=_normal(rng, k, m),
        b_v=_normal(rng, m, m),
        sigma=sigma,
    )


def random_linear(m: int, l: int, prior: str, rng: np.random.Generator, sigma_n=0.1) -> LinearGenerative:
    return LinearGenerative(_normal(rng, (m, l), m), prior, sigma_n)


def random_bilinear(
    m: int, l: int, k_c: int, k_d: int, rng: np.random.Generator, sigma_n=0.1
) -> BilinearGenerative:
    return BilinearGenerative(
        _normal(rng, (m, l), m),
        _normal(rng, (l, k_c), m),
        _normal(rng, (l, k_d), m),
        sigma_n,
    )
