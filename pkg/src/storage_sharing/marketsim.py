"""Day-by-day settlement of the storage spot market for a fixed allocation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .core import Estimate, Tariff, mean_estimate
from .demand import SampleMatrix, fit_empirical
from .sharing import Allocation, NashSolution, clearing_price, nash_equilibrium
from .standalone import optimal_standalone

__all__ = ["DayRecord", "MarketLedger", "simulate", "SavingsReport", "savings_report"]

LEDGER_SCHEMA_VERSION = "1"
LEDGER_COLUMNS = (
    "day",
    "firm",
    "demand_kwh",
    "capacity_kwh",
    "bought_kwh",
    "sold_kwh",
    "price",
    "cost",
    "surplus_kwh",
    "deficit_kwh",
)


@dataclass(frozen=True)
class DayRecord:
    day: int
    demand: np.ndarray
    surplus: float
    deficit: float
    price: float
    bought: np.ndarray
    sold: np.ndarray
    cost: np.ndarray


@dataclass(frozen=True, eq=False)
class MarketLedger:
    """Column-oriented ledger; ``ledger[t]`` gives day `t` as a :class:`DayRecord`."""

    tariff: Tariff
    capacities: np.ndarray
    demand: np.ndarray  # days x n
    surplus: np.ndarray
    deficit: np.ndarray
    price: np.ndarray
    cost: np.ndarray  # days x n
    seed: int | None = None

    def __len__(self):
        return self.price.size

    def __getitem__(self, t: int) -> DayRecord:
        return DayRecord(
            day=int(t),
            demand=self.demand[t],
            surplus=float(self.surplus[t]),
            deficit=float(self.deficit[t]),
            price=float(self.price[t]),
            bought=self.bought[t],
            sold=self.sold[t],
            cost=self.cost[t],
        )

    @property
    def bought(self) -> np.ndarray:
        return np.maximum(self.demand - self.capacities, 0.0)

    @property
    def sold(self) -> np.ndarray:
        return np.maximum(self.capacities - self.demand, 0.0)

    def mean_cost(self) -> list[Estimate]:
        return [mean_estimate(self.cost[:, k], self.seed) for k in range(self.cost.shape[1])]

    def mean_price(self) -> Estimate:
        return mean_estimate(self.price, self.seed)

    def savings(self) -> list[Estimate]:
        """Per-firm ``pi_h E[X_k] - mean cost`` (savings against owning no storage)."""
        terms = self.tariff.pi_h * self.demand - self.cost
        return [mean_estimate(terms[:, k], self.seed) for k in range(terms.shape[1])]

    def summary(self) -> dict:
        return {
            "schema_version": LEDGER_SCHEMA_VERSION,
            "days": len(self),
            "seed": self.seed,
            "capacities": self.capacities.tolist(),
            "mean_cost": [e.to_dict() for e in self.mean_cost()],
            "mean_price": self.mean_price().to_dict(),
            "delta_s": [e.to_dict() for e in self.savings()],
        }

    def to_csv(self, path) -> None:
        """One row per day per firm, in day order then firm order."""
        days, n = self.demand.shape
        bought, sold = self.bought, self.sold
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LEDGER_COLUMNS)
            for t in range(days):
                for k in range(n):
                    w.writerow(
                        (
                            t,
                            k,
                            repr(float(self.demand[t, k])),
                            repr(float(self.capacities[k])),
                            repr(float(bought[t, k])),
                            repr(float(sold[t, k])),
                            repr(float(self.price[t])),
                            repr(float(self.cost[t, k])),
                            repr(float(self.surplus[t])),
                            repr(float(self.deficit[t])),
                        )
                    )

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def simulate(tariff: Tariff, samples: SampleMatrix, allocation: Allocation) -> MarketLedger:
    """Clear the spot market on every sampled day.

    Each firm serves its own demand from storage first. The collective
    surplus ``S`` and deficit ``D`` set the price; every firm settles its net
    position ``X_k - C_k`` at that price and pays capital cost plus a full
    off-peak recharge. Unsold surplus is treated as sold at ``pi_l`` and
    bought back off-peak, so no charge carries to the next day.
    """
    if allocation.n != samples.n:
        raise ValueError(f"allocation has {allocation.n} firms, samples have {samples.n}")
    c = allocation.capacities
    x = samples.values
    net = x - c
    surplus = np.maximum(-net, 0.0).sum(axis=1)
    deficit = np.maximum(net, 0.0).sum(axis=1)
    price = clearing_price(tariff, allocation.total, samples.total)
    price = np.broadcast_to(np.asarray(price, dtype=float), (samples.days,)).copy()
    cost = (tariff.pi_s + tariff.pi_l) * c + price[:, None] * net
    return MarketLedger(tariff, c, x, surplus, deficit, price, cost, samples.seed)


@dataclass(frozen=True, eq=False)
class SavingsReport:
    """Per-firm costs without storage (``J``), alone (``J_o``) and sharing (``J_star``)."""

    j: np.ndarray
    j_o: np.ndarray
    j_star: np.ndarray
    c_o: np.ndarray
    c_star: np.ndarray

    @property
    def delta_ns(self) -> np.ndarray:
        return self.j - self.j_o

    @property
    def delta_s(self) -> np.ndarray:
        return self.j - self.j_star

    def to_rows(self) -> list[dict]:
        return [
            {
                "firm": k,
                "J": float(self.j[k]),
                "J_o": float(self.j_o[k]),
                "J_star": float(self.j_star[k]),
                "C_o": float(self.c_o[k]),
                "C_star": float(self.c_star[k]),
                "delta_ns": float(self.delta_ns[k]),
                "delta_s": float(self.delta_s[k]),
            }
            for k in range(self.j.size)
        ]

    def to_dict(self) -> dict:
        return {
            "firms": self.to_rows(),
            "mean_delta_ns": float(self.delta_ns.mean()),
            "mean_delta_s": float(self.delta_s.mean()),
            "total_C_o": float(self.c_o.sum()),
            "total_C_star": float(self.c_star.sum()),
        }


def savings_report(tariff: Tariff, samples: SampleMatrix, nash: NashSolution | None = None) -> SavingsReport:
    """Daily savings from storage with and without sharing, per firm.

    ``J = pi_h E[X_k]``; ``J_o`` is the standalone optimum on the firm's
    empirical law; ``J_star`` the equilibrium cost under sharing.
    """
    if nash is None:
        nash = nash_equilibrium(tariff, samples, check_alignment=False, verify=False)
    j = tariff.pi_h * samples.values.mean(axis=0)
    sols = [optimal_standalone(tariff, fit_empirical(samples.column(k))) for k in range(samples.n)]
    return SavingsReport(
        j=j,
        j_o=np.array([s.j_opt for s in sols]),
        j_star=np.asarray(nash.j_star, dtype=float),
        c_o=np.array([s.c_opt for s in sols]),
        c_star=np.asarray(nash.allocation.capacities, dtype=float),
    )
