"""Tariff arithmetic and the small value types shared by every module."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NoArbitrageError(ValueError):
    """Storage is too expensive to arbitrage the peak/off-peak spread."""


@dataclass(frozen=True)
class Tariff:
    """Two-period time-of-use tariff plus the amortized storage price.

    Parameters
    ----------
    pi_h : float
        Peak price per kWh.
    pi_l : float
        Off-peak price per kWh.
    pi_s : float
        Amortized daily capital cost per kWh of storage capacity.
    """

    pi_h: float
    pi_l: float
    pi_s: float

    def __post_init__(self):
        for name in ("pi_h", "pi_l", "pi_s"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.pi_h > self.pi_l >= 0.0:
            raise ValueError(
                f"need pi_h > pi_l >= 0, got pi_h={self.pi_h}, pi_l={self.pi_l}"
            )
        if self.pi_s < 0.0:
            raise ValueError(f"pi_s must be non-negative, got {self.pi_s}")

    @property
    def pi_delta(self) -> float:
        """Peak minus off-peak price."""
        return self.pi_h - self.pi_l

    @property
    def viable(self) -> bool:
        return self.pi_s < self.pi_delta

    @classmethod
    def from_spread(cls, pi_delta: float, pi_s: float, pi_l: float = 0.0) -> "Tariff":
        return cls(pi_h=pi_l + pi_delta, pi_l=pi_l, pi_s=pi_s)


@dataclass(frozen=True)
class Efficiency:
    """Charging (`eta_i`) and discharging (`eta_o`) efficiencies."""

    eta_i: float = 1.0
    eta_o: float = 1.0

    def __post_init__(self):
        for name in ("eta_i", "eta_o"):
            v = float(getattr(self, name))
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
            object.__setattr__(self, name, v)

    @property
    def ideal(self) -> bool:
        return self.eta_i == 1.0 and self.eta_o == 1.0


def arbitrage_constant(tariff: Tariff) -> float:
    """Critical fractile ``(pi_delta - pi_s) / pi_delta``.

    Raises
    ------
    NoArbitrageError
        If ``pi_s >= pi_h - pi_l``.
    """
    if not tariff.viable:
        raise NoArbitrageError(
            f"pi_s={tariff.pi_s} >= pi_h - pi_l={tariff.pi_delta}: "
            "storage never pays for itself"
        )
    return (tariff.pi_delta - tariff.pi_s) / tariff.pi_delta


def lossy_spread(tariff: Tariff, eff: Efficiency) -> float:
    """Effective spread ``pi_h * eta_o - pi_l / eta_i`` per kWh of capacity."""
    return tariff.pi_h * eff.eta_o - tariff.pi_l / eff.eta_i


def lossy_threshold(tariff: Tariff, eff: Efficiency) -> float:
    """Critical fractile for lossy storage.

    The optimal standalone capacity ``C`` satisfies
    ``F(eta_o * C) = lossy_threshold(tariff, eff)``.
    """
    spread = lossy_spread(tariff, eff)
    num = spread - tariff.pi_s
    if num <= 0.0:
        raise NoArbitrageError(
            f"effective spread {spread:.6g} does not cover pi_s={tariff.pi_s} "
            f"at eta_i={eff.eta_i}, eta_o={eff.eta_o}"
        )
    if eff.ideal:
        # exact reduction, avoids a rounding difference
        return arbitrage_constant(tariff)
    return num / spread


class Estimate(float):
    """A Monte-Carlo statistic: behaves as a float, remembers its error.

    Arithmetic on an ``Estimate`` returns a plain ``float``.
    """

    stderr: float
    days: int | None
    seed: int | None

    def __new__(cls, value, stderr=0.0, days=None, seed=None):
        obj = super().__new__(cls, value)
        obj.stderr = float(stderr)
        obj.days = None if days is None else int(days)
        obj.seed = None if seed is None else int(seed)
        return obj

    def __repr__(self):
        return f"Estimate({float(self)!r}, stderr={self.stderr!r})"

    def __reduce__(self):
        return (Estimate, (float(self), self.stderr, self.days, self.seed))

    def to_dict(self) -> dict:
        return {"estimate": float(self), "stderr": self.stderr, "days": self.days, "seed": self.seed}


def mean_estimate(terms, seed=None) -> Estimate:
    """Sample mean of per-day `terms` with its standard error."""
    t = np.asarray(terms, dtype=float)
    se = t.std(ddof=1) / np.sqrt(t.size) if t.size > 1 else 0.0
    return Estimate(t.mean(), se, t.size, seed)
