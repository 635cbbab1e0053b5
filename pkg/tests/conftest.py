import math

import numpy as np
import pytest
from scipy.special import log_ndtr

from hais.models import (
    LAPLACE,
    STUDENT_T,
    posterior_model,
    random_bilinear,
    random_linear,
    random_mcrbm,
    random_poe,
)


def central_difference(f, x, h=1e-5):
    """Central finite-difference gradient of a batched scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[i] = h
        g[..., i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def relative_error(a, b):
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    return np.linalg.norm(a - b, axis=-1) / np.maximum(np.linalg.norm(b, axis=-1), 1e-8)


def six_models(seed: int):
    """One random instance of each model family, generative ones as posteriors."""
    rng = np.random.default_rng(seed)
    lin_g = random_linear(5, 4, "gaussian", rng)
    lin_l = random_linear(5, 4, "laplace", rng)
    bil = random_bilinear(5, 4, 3, 2, rng)
    return {
        "linear_gaussian": posterior_model(lin_g, lin_g.sample(1, rng)[0]),
        "linear_laplace": posterior_model(lin_l, lin_l.sample(1, rng)[0]),
        "bilinear": posterior_model(bil, bil.sample(1, rng)[0]),
        "poe_laplace": random_poe(4, 6, LAPLACE, rng),
        "poe_student_t": random_poe(4, 6, STUDENT_T, rng),
        "mcrbm": random_mcrbm(3, 4, 2, 2, rng),
    }


def random_points(model, n, rng):
    """Points inside the model's constraints, at roughly unit scale."""
    x = rng.standard_normal((n, model.dim))
    for b in model.constraints:
        x[:, b.index] = b.lower + np.abs(x[:, b.index]) + 0.01
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def laplace_orthogonal_marginal(phi, sigma_n, x):
    """Exact log p(x) for a linear Laplace-prior model whose square basis is orthogonal.

    Rotating by phi^T decouples the coordinates, and each becomes a unit
    Laplace variable plus N(0, sigma_n^2) noise, whose density has a closed form.
    """
    y = np.asarray(x) @ phi
    s = sigma_n
    lo = s * s / 2 - y + log_ndtr(y / s - s)
    hi = s * s / 2 + y + log_ndtr(-y / s - s)
    return np.sum(np.logaddexp(lo, hi) - math.log(2), axis=-1)


GAUSS_1D_SIGMA2 = 0.5 * math.log(2 * math.pi) + math.log(2.0)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
