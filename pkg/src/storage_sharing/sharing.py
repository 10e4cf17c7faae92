"""Spot market for stored energy and the storage investment game.

Every quantity here is computed from one shared :class:`SampleMatrix`, so
identities that hold day by day (trades netting out, block sums) hold
exactly on the sample and not only in expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Estimate, Tariff, arbitrage_constant, mean_estimate
from .demand import (
    AlignmentReport,
    Distribution,
    SampleMatrix,
    alignment_check,
    conditional_means,
    kernel_bandwidth,
)
from .standalone import standalone_cost

__all__ = [
    "Allocation",
    "VerificationResult",
    "NashSolution",
    "clearing_price",
    "firm_cost_sharing",
    "firm_cost_curve",
    "social_cost",
    "expected_clearing_price",
    "aggregate_quantile",
    "nash_equilibrium",
    "verify_global_min",
    "marginal_cost_terms",
]


@dataclass(frozen=True, eq=False)
class Allocation:
    """Storage capacity per firm, kWh."""

    capacities: np.ndarray

    def __post_init__(self):
        c = np.array(self.capacities, dtype=float, copy=True).ravel()
        if np.any(~np.isfinite(c)) or np.any(c < 0.0):
            raise ValueError(f"capacities must be finite and >= 0, got {c}")
        c.setflags(write=False)
        object.__setattr__(self, "capacities", c)

    @property
    def total(self) -> float:
        return float(self.capacities.sum())

    @property
    def n(self) -> int:
        return self.capacities.size

    def others(self, firm: int) -> float:
        return float(self.capacities.sum() - self.capacities[firm])

    def replace(self, firm: int, value: float) -> "Allocation":
        c = self.capacities.copy()
        c[firm] = value
        return Allocation(c)


def clearing_price(tariff: Tariff, c_total, x_total):
    """Spot price of stored energy: ``pi_h`` when storage falls short, else ``pi_l``.

    An exact tie is priced at ``pi_l``.
    """
    short = np.asarray(c_total) < np.asarray(x_total)
    out = np.where(short, tariff.pi_h, tariff.pi_l)
    return float(out) if out.ndim == 0 else out


def _cost_terms(tariff: Tariff, samples: SampleMatrix, firm: int, c_firm: float, others_total: float):
    x = samples.column(firm)
    price = clearing_price(tariff, c_firm + others_total, samples.total)
    return (tariff.pi_s + tariff.pi_l) * c_firm + price * (x - c_firm)


def firm_cost_sharing(
    tariff: Tariff, samples: SampleMatrix, firm: int, c_firm: float, others_total: float
) -> Estimate:
    """Daily expected cost of `firm` holding `c_firm` while the rest hold `others_total`.

    Capital cost plus off-peak recharge of the full battery, plus the firm's
    net position ``X_k - C_k`` settled at the daily clearing price.
    """
    if c_firm < 0.0:
        raise ValueError("capacity must be non-negative")
    return mean_estimate(_cost_terms(tariff, samples, firm, c_firm, others_total), samples.seed)


def firm_cost_curve(
    tariff: Tariff, samples: SampleMatrix, firm: int, others_total: float, grid
) -> np.ndarray:
    """:func:`firm_cost_sharing` on a grid of own capacities, in O((n + G) log n)."""
    grid = np.asarray(grid, dtype=float)
    st = samples._sorted_total
    xk = samples._sorted_values[:, firm]
    suffix = np.concatenate([np.cumsum(xk[::-1])[::-1], [0.0]])
    idx = np.searchsorted(st, grid + others_total, side="right")
    count = st.size - idx
    n = st.size
    mean_x = xk.mean()
    return (
        tariff.pi_s * grid
        + tariff.pi_l * mean_x
        + tariff.pi_delta * (suffix[idx] - grid * count) / n
    )


def social_cost(tariff: Tariff, dist_c: Distribution | None, c_total, samples: SampleMatrix | None = None):
    """Collective cost ``pi_s C + pi_h E[(X_c - C)^+] + pi_l E[min(C, X_c)]``.

    The constant off-peak term is excluded. Uses the aggregate column of
    `samples` when given, else the closed form of `dist_c`.
    """
    x = None if samples is None else samples.total
    return standalone_cost(tariff, dist_c, c_total, samples=x)


def expected_clearing_price(tariff: Tariff, samples: SampleMatrix, c_total: float) -> Estimate:
    """Sample mean of the daily clearing price with collective capacity `c_total`."""
    return mean_estimate(clearing_price(tariff, c_total, samples.total), samples.seed)


def _density_at(samples: SampleMatrix, q: float) -> float:
    x = samples._sorted_total
    h = kernel_bandwidth(x, "silverman")
    if h == 0.0:
        return math.inf
    lo = np.searchsorted(x, q - 8 * h)
    hi = np.searchsorted(x, q + 8 * h, side="right")
    z = (x[lo:hi] - q) / h
    return float(np.exp(-0.5 * z * z).sum() / (x.size * h * math.sqrt(2 * math.pi)))


def aggregate_quantile(samples: SampleMatrix, p: float) -> Estimate:
    """Empirical `p`-quantile of ``X_c`` with its asymptotic standard error."""
    q = float(np.quantile(samples.total, p))
    dens = _density_at(samples, q)
    se = math.sqrt(p * (1.0 - p) / samples.days) / dens if dens > 0 else math.inf
    return Estimate(q, se if math.isfinite(se) else 0.0, samples.days, samples.seed)


@dataclass(frozen=True, eq=False)
class VerificationResult:
    """Grid search of one firm's best response with the others held fixed."""

    firm: int
    passed: bool
    candidate: float
    candidate_cost: float
    best_capacity: float
    best_cost: float
    improvement: float
    improvement_se: float
    tolerance: float
    grid: np.ndarray = field(repr=False)
    costs: np.ndarray = field(repr=False)

    @property
    def margin_in_se(self) -> float:
        """Improvement of the best grid point in paired standard errors."""
        if self.improvement_se == 0.0:
            return math.inf if self.improvement > 0 else 0.0
        return self.improvement / self.improvement_se

    def to_dict(self) -> dict:
        return {
            "firm": self.firm,
            "passed": self.passed,
            "candidate": self.candidate,
            "candidate_cost": self.candidate_cost,
            "best_capacity": self.best_capacity,
            "best_cost": self.best_cost,
            "improvement": self.improvement,
            "improvement_se": self.improvement_se,
            "tolerance": self.tolerance,
        }


def verify_global_min(
    tariff: Tariff,
    samples: SampleMatrix,
    firm: int,
    candidate: Allocation,
    grid_resolution: int = 401,
) -> VerificationResult:
    """Check that `candidate` gives `firm` a global minimum of its cost.

    The firm's capacity is swept over ``[0, 1.5 * q99.9(X_firm)]`` (and the
    candidate value itself) with every other firm held at its candidate
    capacity. The candidate passes when its cost is within
    ``max(paired MC stderr, 1e-3 * cost range)`` of the grid minimum.
    """
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be >= 2")
    if candidate.n != samples.n:
        raise ValueError(f"allocation has {candidate.n} firms, samples have {samples.n}")
    c0 = float(candidate.capacities[firm])
    alpha = candidate.others(firm)
    upper = 1.5 * float(np.quantile(samples.column(firm), 0.999))
    upper = max(upper, 1.5 * c0, 1e-9)
    grid = np.unique(np.append(np.linspace(0.0, upper, grid_resolution), c0))
    costs = firm_cost_curve(tariff, samples, firm, alpha, grid)
    cand_cost = float(firm_cost_curve(tariff, samples, firm, alpha, np.array([c0]))[0])
    i = int(np.argmin(costs))
    best_c, best_cost = float(grid[i]), float(costs[i])

    diff = _cost_terms(tariff, samples, firm, c0, alpha) - _cost_terms(tariff, samples, firm, best_c, alpha)
    se = float(diff.std(ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0
    tol = max(se, 1e-3 * float(costs.max() - costs.min()))
    improvement = cand_cost - best_cost
    return VerificationResult(
        firm=firm,
        passed=improvement <= tol,
        candidate=c0,
        candidate_cost=cand_cost,
        best_capacity=best_c,
        best_cost=best_cost,
        improvement=improvement,
        improvement_se=se,
        tolerance=tol,
        grid=grid,
        costs=costs,
    )


@dataclass(frozen=True, eq=False)
class NashSolution:
    """The candidate equilibrium ``C*_k = E[X_k | X_c = Q]`` with ``F_c(Q) = gamma``.

    ``alignment`` and ``verification`` are ``None`` when they were not run.
    """

    gamma: float
    q: Estimate
    allocation: Allocation
    capacity_se: np.ndarray
    sum_se: float
    j_star: np.ndarray
    j_star_se: np.ndarray
    bandwidth: float
    alignment: AlignmentReport | None = None
    verification: tuple | None = None

    @property
    def n(self) -> int:
        return self.allocation.n

    @property
    def sum_gap(self) -> float:
        """``sum_k C*_k - Q``."""
        return self.allocation.total - float(self.q)

    @property
    def sum_stderr(self) -> float:
        """Combined standard error of the kernel sum and the quantile."""
        return math.hypot(self.sum_se, self.q.stderr)

    @property
    def is_equilibrium(self) -> bool | None:
        """Verdict of the best-response grid search, if it was run."""
        if self.verification is None:
            return None
        return all(v.passed for v in self.verification)

    def to_dict(self) -> dict:
        days, seed = self.q.days, self.q.seed
        out = {
            "gamma": self.gamma,
            "Q": self.q.to_dict(),
            "C_star": [
                {"estimate": float(c), "stderr": float(s), "days": days, "seed": seed}
                for c, s in zip(self.allocation.capacities, self.capacity_se)
            ],
            "C_total": self.allocation.total,
            "J_star": [
                {"estimate": float(j), "stderr": float(s), "days": days, "seed": seed}
                for j, s in zip(self.j_star, self.j_star_se)
            ],
            "bandwidth": self.bandwidth,
            "alignment": None if self.alignment is None else self.alignment.to_dict(),
            "verification": None
            if self.verification is None
            else {
                "passed": self.is_equilibrium,
                "firms": [v.to_dict() for v in self.verification],
            },
        }
        return out


def _j_star(tariff: Tariff, samples: SampleMatrix, q: float):
    x = samples.values
    tail = samples.total >= q
    frac = tail.mean()
    if frac == 0.0:
        terms = tariff.pi_l * x
    else:
        terms = tariff.pi_l * x + tariff.pi_s * x * tail[:, None] / frac
    est = terms.mean(axis=0)
    se = terms.std(axis=0, ddof=1) / math.sqrt(samples.days) if samples.days > 1 else np.zeros(samples.n)
    return est, se


def nash_equilibrium(
    tariff: Tariff,
    samples: SampleMatrix,
    *,
    bandwidth: str | float = "auto",
    check_alignment: bool = True,
    verify: bool = True,
    grid_resolution: int = 401,
    alignment_kwargs: dict | None = None,
) -> NashSolution:
    """Unique candidate equilibrium of the storage investment game.

    ``Q`` is the empirical ``gamma``-quantile of the aggregate column;
    ``C*_k`` the kernel estimate of ``E[X_k | X_c = Q]``;
    ``J*_k = pi_l E[X_k] + pi_s E[X_k | X_c >= Q]``.

    The candidate is an equilibrium only if no firm can improve by deviating:
    with `verify`, each firm's best response is grid-searched. With
    `check_alignment`, the monotonicity condition that guarantees existence
    is tested and attached.

    Raises
    ------
    NoArbitrageError
    ExtrapolationError
        When ``Q`` cannot be bracketed by sampled aggregate demand.
    """
    gamma = arbitrage_constant(tariff)
    q = aggregate_quantile(samples, gamma)
    cm = conditional_means(samples, float(q), bandwidth)
    alloc = Allocation(cm.estimate)
    j, j_se = _j_star(tariff, samples, float(q))
    alignment = None
    if check_alignment:
        alignment = alignment_check(samples, bandwidth=bandwidth, **(alignment_kwargs or {}))
    verification = None
    if verify:
        verification = tuple(
            verify_global_min(tariff, samples, k, alloc, grid_resolution) for k in range(samples.n)
        )
    return NashSolution(
        gamma=gamma,
        q=q,
        allocation=alloc,
        capacity_se=cm.stderr,
        sum_se=cm.sum_stderr,
        j_star=j,
        j_star_se=j_se,
        bandwidth=cm.bandwidth,
        alignment=alignment,
        verification=verification,
    )


def marginal_cost_terms(
    tariff: Tariff,
    samples: SampleMatrix,
    firm: int,
    others_total: float,
    grid,
    bandwidth: str | float = "auto",
):
    """Decompose ``dJ_k/dC_k = -pi_delta f_c(C + a) psi(C) + phi(C)``.

    Returns
    -------
    phi : ndarray
        ``pi_s - pi_delta + pi_delta F_c(C + a)``, non-decreasing in C.
    psi : ndarray
        ``E[X_k | X_c = C + a] - C``, non-increasing under alignment.
    density : ndarray
        Kernel density of ``X_c`` at ``C + a``.
    """
    grid = np.asarray(grid, dtype=float)
    agg = samples.aggregate()
    phi = tariff.pi_s - tariff.pi_delta + tariff.pi_delta * np.asarray(agg.cdf(grid + others_total))
    psi = np.array(
        [conditional_means(samples, c + others_total, bandwidth).estimate[firm] - c for c in grid]
    )
    dens = np.array([_density_at(samples, c + others_total) for c in grid])
    return phi, psi, dens
