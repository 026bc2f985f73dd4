"""Single-spin-flip Metropolis estimation for models too large to enumerate.

One sweep is one flip attempt per free spin, in index order.  Flips that
would violate a frozen-infinite constraint are rejected outright, so the
chain explores only the constraint surface reachable from its start.
Standard errors account for autocorrelation through the integrated
autocorrelation time of the per-sweep observable series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InconsistentBoundary, InvalidInput
from .noise import FROZEN
from .statmech import StatMechModel


@dataclass
class MetropolisResult:
    mean: float
    std_error: float
    acceptance_rate: float
    n_sweeps: int
    autocorr_time: float
    series: np.ndarray


def _initial_config(model: StatMechModel, rng: np.random.Generator) -> np.ndarray:
    """Random free spins, retried until all hard constraints hold."""
    config = np.ones(model.num_spins, dtype=np.int8)
    for i, v in model.frozen.items():
        config[i] = v
    free = model.free_spins()
    hard = [t for t in model.terms if t.k is FROZEN or math.isinf(t.k)]
    for _ in range(1000):
        for i in free:
            config[i] = 1 if rng.random() < 0.5 else -1
        ok = True
        for t in hard:
            chi = t.sign
            for s in t.spins:
                chi *= int(config[s])
            if chi == -1:
                ok = False
                break
        if ok:
            return config
    # fall back to the all-plus state, valid whenever every hard sign is +1
    for i in free:
        config[i] = 1
    for t in hard:
        chi = t.sign
        for s in t.spins:
            chi *= int(config[s])
        if chi == -1:
            raise InconsistentBoundary("could not find a configuration satisfying constraints")
    return config


def integrated_autocorr_time(series: np.ndarray) -> float:
    """Sokal-windowed integrated autocorrelation time; 1.0 for white noise."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0 or n < 8:
        return 1.0
    tau = 1.0
    for lag in range(1, n // 2):
        rho = float(np.dot(x[:-lag], x[lag:])) / ((n - lag) * var)
        tau += 2.0 * rho
        if lag >= 5 * tau:
            break
    return max(tau, 1.0)


def metropolis_estimate(
    model: StatMechModel,
    observable_spins,
    n_sweeps: int,
    rng: np.random.Generator,
    burn_in: int | None = None,
) -> MetropolisResult:
    """Estimate the expectation of a spin product by local Metropolis sampling."""
    if n_sweeps < 1:
        raise InvalidInput("need at least one measurement sweep")
    if burn_in is None:
        burn_in = 10 * n_sweeps
    free = model.free_spins()
    if not free:
        raise InvalidInput("model has no free spins to sample")
    config = _initial_config(model, rng)

    terms_of: list[list[int]] = [[] for _ in range(model.num_spins)]
    k_arr, hard_arr, chi = [], [], []
    for ti, t in enumerate(model.terms):
        hard = t.k is FROZEN or math.isinf(t.k)
        hard_arr.append(hard)
        k_arr.append(0.0 if hard else float(t.k))
        c = t.sign
        for s in t.spins:
            c *= int(config[s])
            terms_of[s].append(ti)
        chi.append(c)
    chi = np.array(chi, dtype=np.int8)
    k_arr = np.array(k_arr)
    hard_arr = np.array(hard_arr, dtype=bool)

    obs = list(observable_spins)
    accepted = 0
    attempts = 0
    series = np.empty(n_sweeps)
    for sweep in range(burn_in + n_sweeps):
        for i in free:
            attempts += 1
            tids = terms_of[i]
            blocked = False
            dgain = 0.0
            for ti in tids:
                if hard_arr[ti]:
                    blocked = True
                    break
                dgain += -2.0 * k_arr[ti] * chi[ti]
            if blocked:
                continue
            if dgain >= 0 or rng.random() < math.exp(dgain):
                accepted += 1
                config[i] = -config[i]
                for ti in tids:
                    chi[ti] = -chi[ti]
        if sweep >= burn_in:
            val = 1
            for s in obs:
                val *= int(config[s])
            series[sweep - burn_in] = val

    tau = integrated_autocorr_time(series)
    mean = float(series.mean())
    var = float(series.var(ddof=1)) if n_sweeps > 1 else 0.0
    std_error = math.sqrt(var * tau / n_sweeps) if n_sweeps > 1 else math.inf
    return MetropolisResult(
        mean=mean,
        std_error=std_error,
        acceptance_rate=accepted / max(attempts, 1),
        n_sweeps=n_sweeps,
        autocorr_time=tau,
        series=series,
    )
