"""Average test-set log likelihood for analysis and generative models."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .anneal import HaisConfig, LogZEstimate, reference_for, run_chain
from .errors import ContractViolation, NonFiniteDynamics
from .models import BilinearGenerative, EnergyModel, LinearGenerative, posterior_model


@dataclass
class LikelihoodReport:
    """Per-datapoint log likelihoods (nats) and their summary.

    ``std_err`` is the spread over datapoints, ``sd / sqrt(n)``; the Monte
    Carlo error of each partition estimate is kept separately in
    ``logz_std_err``.  Failed datapoints hold NaN and are listed in
    ``failures``; the summary uses the rest.
    """

    mean_ll: float
    std_err: float
    per_point: np.ndarray
    logz_std_err: np.ndarray
    ess: np.ndarray
    log_z: float | None = None
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def n_ok(self) -> int:
        return int(np.sum(np.isfinite(self.per_point)))


def _check_data(data, dim: int) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[None, :]
    if data.ndim != 2 or data.shape[1] != dim:
        raise ContractViolation(f"data has {data.shape[-1]} columns, model expects {dim}")
    if not np.all(np.isfinite(data)):
        raise ContractViolation("data contains non-finite values")
    return data


def _summary(per_point: np.ndarray) -> tuple[float, float]:
    ok = per_point[np.isfinite(per_point)]
    if ok.size == 0:
        return float("nan"), float("nan")
    if ok.size == 1:
        return float(ok[0]), float("nan")
    return float(np.mean(ok)), float(np.std(ok, ddof=1) / math.sqrt(ok.size))


def analysis_log_likelihood(
    model: EnergyModel, data, config: HaisConfig, *, threads: int = 1
) -> LikelihoodReport:
    """``log p(x) = -E(x) - log Z`` with one shared annealing estimate of ``log Z``."""
    data = _check_data(data, model.dim)
    est = run_chain(reference_for(model), model, config, threads=threads)
    per_point = -model.energy(data) - est.log_z
    mean, se = _summary(per_point)
    n = data.shape[0]
    return LikelihoodReport(
        mean_ll=mean,
        std_err=se,
        per_point=per_point,
        logz_std_err=np.full(n, est.std_err),
        ess=np.full(n, est.ess),
        log_z=est.log_z,
    )


def generative_log_likelihood(
    gen: LinearGenerative | BilinearGenerative,
    data,
    config: HaisConfig,
    *,
    threads: int = 1,
) -> LikelihoodReport:
    """One annealing run per datapoint over the posterior of its auxiliaries.

    Datapoint ``i`` uses random streams keyed by ``i``, so results do not
    depend on evaluation order or thread count.  A datapoint whose dynamics
    blow up is recorded in ``failures`` instead of aborting the batch.
    """
    data = _check_data(data, gen.data_dim)

    def one(i: int) -> LogZEstimate | str:
        post = posterior_model(gen, data[i])
        try:
            return run_chain(reference_for(post), post, config, stream_key=(i,))
        except NonFiniteDynamics as err:
            return str(err)

    idx = range(data.shape[0])
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, idx))
    else:
        results = [one(i) for i in idx]

    n = data.shape[0]
    per_point = np.full(n, np.nan)
    logz_se = np.full(n, np.nan)
    ess = np.full(n, np.nan)
    failures = {}
    for i, res in enumerate(results):
        if isinstance(res, str):
            failures[i] = res
            continue
        per_point[i] = res.log_z
        logz_se[i] = res.std_err
        ess[i] = res.ess
    mean, se = _summary(per_point)
    return LikelihoodReport(mean, se, per_point, logz_se, ess, None, failures)
