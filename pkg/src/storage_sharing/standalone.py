"""Optimal storage for a firm that does not share (ideal and lossy storage)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Efficiency, Tariff, arbitrage_constant, lossy_threshold
from .demand import Distribution

__all__ = [
    "StandaloneSolution",
    "standalone_cost",
    "lossy_cost",
    "optimal_standalone",
    "optimal_standalone_lossy",
]


@dataclass(frozen=True)
class StandaloneSolution:
    c_opt: float
    j_opt: float
    gamma_used: float


def _tail_terms(dist: Distribution | None, c, samples):
    """``(E[(X-c)^+], E[min(c, X)])``, by sample average when `samples` is given."""
    if samples is not None:
        x = np.asarray(samples, dtype=float).ravel()
        c_arr = np.asarray(c, dtype=float)
        if c_arr.ndim == 0:
            excess = np.maximum(x - c_arr, 0.0).mean()
            return excess, x.mean() - excess
        excess = np.array([np.maximum(x - ci, 0.0).mean() for ci in c_arr.ravel()]).reshape(c_arr.shape)
        return excess, x.mean() - excess
    excess = np.asarray(dist.partial_expectation(c), dtype=float)
    return excess, dist.mean() - excess


def _scalar(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


def standalone_cost(tariff: Tariff, dist: Distribution | None, c, samples=None):
    """Daily expected cost of a firm owning `c` kWh of storage, no sharing.

    ``pi_s c + pi_h E[(X - c)^+] + pi_l E[min(c, X)]``. Closed form from
    `dist` unless daily `samples` of X are supplied, in which case the
    expectations are sample averages. Vectorized over `c`.
    """
    if np.any(np.asarray(c) < 0.0):
        raise ValueError("capacity must be non-negative")
    excess, used = _tail_terms(dist, c, samples)
    return _scalar(tariff.pi_s * np.asarray(c, dtype=float) + tariff.pi_h * excess + tariff.pi_l * used)


def lossy_cost(tariff: Tariff, eff: Efficiency, dist: Distribution | None, c, samples=None):
    """Daily expected cost with charging/discharging losses.

    A full battery of capacity `c` delivers at most ``eta_o c``; refilling a
    withdrawal ``min(eta_o c, X)`` costs ``pi_l / (eta_i eta_o)`` per kWh
    delivered::

        pi_s c + pi_h E[(X - eta_o c)^+] + pi_l/(eta_i eta_o) E[min(eta_o c, X)]
    """
    c = np.asarray(c, dtype=float)
    if np.any(c < 0.0):
        raise ValueError("capacity must be non-negative")
    excess, used = _tail_terms(dist, eff.eta_o * c, samples)
    recharge = tariff.pi_l / (eff.eta_i * eff.eta_o)
    return _scalar(tariff.pi_s * c + tariff.pi_h * excess + recharge * used)


def optimal_standalone(tariff: Tariff, dist: Distribution) -> StandaloneSolution:
    """Capacity at the ``gamma`` quantile and its cost ``pi_l E[X] + pi_s E[X | X >= C]``.

    Raises
    ------
    NoArbitrageError
        If ``pi_s >= pi_h - pi_l``.
    """
    gamma = arbitrage_constant(tariff)
    c_opt = float(dist.quantile(gamma))
    j_opt = tariff.pi_l * dist.mean() + tariff.pi_s * dist.tail_mean(c_opt)
    return StandaloneSolution(c_opt, float(j_opt), gamma)


def optimal_standalone_lossy(tariff: Tariff, eff: Efficiency, dist: Distribution) -> StandaloneSolution:
    """Lossy optimum ``C = F^{-1}(threshold) / eta_o``; cost from :func:`lossy_cost`."""
    if eff.ideal:
        return optimal_standalone(tariff, dist)
    threshold = lossy_threshold(tariff, eff)
    c_opt = float(dist.quantile(threshold)) / eff.eta_o
    j_opt = float(lossy_cost(tariff, eff, dist, c_opt))
    return StandaloneSolution(c_opt, j_opt, threshold)
