"""Coalitions of firms: induced block games, stability, and sequential joining."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import Estimate, Tariff, arbitrage_constant
from .demand import Distribution, SampleMatrix, alignment_check
from .sharing import NashSolution, aggregate_quantile, nash_equilibrium

__all__ = [
    "Partition",
    "BlockStability",
    "StabilityReport",
    "JoinOutcome",
    "induced_game_nash",
    "stability_report",
    "join",
    "random_partition",
]


@dataclass(frozen=True)
class Partition:
    """Disjoint blocks of firm indices covering ``0 .. n-1``."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(i) for i in b)) for b in self.blocks)
        if any(not b for b in blocks):
            raise ValueError("empty block in partition")
        flat = [i for b in blocks for i in b]
        if len(flat) != len(set(flat)):
            raise ValueError("partition blocks overlap")
        if sorted(flat) != list(range(len(flat))):
            raise ValueError(f"partition must cover firms 0..{len(flat) - 1}, got {sorted(flat)}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(tuple((k,) for k in range(n)))

    @classmethod
    def grand(cls, n: int) -> "Partition":
        return cls((tuple(range(n)),))


def random_partition(n: int, n_blocks: int, rng: np.random.Generator) -> Partition:
    """Uniformly random labelling of `n` firms into `n_blocks` non-empty blocks."""
    if not 1 <= n_blocks <= n:
        raise ValueError("need 1 <= n_blocks <= n")
    while True:
        labels = rng.integers(0, n_blocks, n)
        if len(set(labels.tolist())) == n_blocks:
            return Partition(tuple(tuple(np.flatnonzero(labels == b)) for b in range(n_blocks)))


def induced_game_nash(
    tariff: Tariff, samples: SampleMatrix, partition: Partition, **kwargs
) -> NashSolution:
    """Equilibrium of the game whose players are the blocks of `partition`.

    Each block acts as one firm with demand equal to its members' sum. The
    aggregate is unchanged, so ``Q`` is too, and with a shared kernel the
    block capacities equal the sums of the member capacities in the full
    game. A ``RuntimeWarning`` is issued if the block game fails the
    alignment check.
    """
    if partition.n != samples.n:
        raise ValueError(f"partition covers {partition.n} firms, samples have {samples.n}")
    merged = samples.merge(partition.blocks)
    sol = nash_equilibrium(tariff, merged, **kwargs)
    report = sol.alignment if sol.alignment is not None else alignment_check(merged)
    if not report.aligned:
        warnings.warn(
            f"induced block game violates alignment for blocks {report.violating_firms}",
            RuntimeWarning,
            stacklevel=2,
        )
    return sol


@dataclass(frozen=True)
class BlockStability:
    block: tuple
    cost_in_grand: float
    cost_alone: float
    surplus: float
    stderr: float
    stable: bool


@dataclass(frozen=True)
class StabilityReport:
    blocks: tuple  # of BlockStability
    tolerance_se: float

    @property
    def stable(self) -> bool:
        return all(b.stable for b in self.blocks)

    def to_dict(self) -> dict:
        return {
            "stable": self.stable,
            "tolerance_se": self.tolerance_se,
            "blocks": [
                {
                    "block": list(b.block),
                    "cost_in_grand": b.cost_in_grand,
                    "cost_alone": b.cost_alone,
                    "surplus": b.surplus,
                    "stderr": b.stderr,
                    "stable": b.stable,
                }
                for b in self.blocks
            ],
        }


def _tail_weighted(x: np.ndarray, event: np.ndarray) -> np.ndarray:
    frac = event.mean()
    return x * event / frac if frac > 0 else np.zeros_like(x)


def stability_report(
    tariff: Tariff,
    samples: SampleMatrix,
    partition: Partition,
    nash: NashSolution | None = None,
    tolerance_se: float = 4.0,
) -> StabilityReport:
    """Does any block of `partition` prefer to leave and share on its own?

    For each block, the members' total equilibrium cost in the grand
    coalition is compared with the block's total cost as a separate sharing
    coalition (the equilibrium of the sub-model). ``surplus = alone - grand``
    should be non-negative; a block is unstable when the surplus is below
    ``-tolerance_se`` paired standard errors.
    """
    if partition.n != samples.n:
        raise ValueError(f"partition covers {partition.n} firms, samples have {samples.n}")
    gamma = arbitrage_constant(tariff)
    if nash is None:
        nash = nash_equilibrium(tariff, samples, check_alignment=False, verify=False)
    grand_tail = samples.total >= float(nash.q)
    out = []
    for block in partition.blocks:
        sub = samples.select(block)
        q_sub = float(aggregate_quantile(sub, gamma))
        inside = float(nash.j_star[list(block)].sum())
        xa = sub.total
        # total equilibrium cost of the sub-coalition
        alone = tariff.pi_l * xa.mean() + tariff.pi_s * _tail_weighted(xa, xa >= q_sub).mean()
        diff = tariff.pi_s * (_tail_weighted(xa, xa >= q_sub) - _tail_weighted(xa, grand_tail))
        se = float(diff.std(ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0
        surplus = float(alone - inside)
        out.append(BlockStability(block, inside, float(alone), surplus, se, surplus >= -tolerance_se * se))
    return StabilityReport(tuple(out), tolerance_se)


@dataclass(frozen=True, eq=False)
class JoinOutcome:
    """Effect of one firm joining an existing sharing coalition.

    ``reallocation`` holds the capacity change of every incumbent followed by
    the entrant's capacity; ``payments`` prices those changes at ``pi_s`` per
    kWh per day (positive = the firm pays in).
    """

    q_before: Estimate
    q_after: Estimate
    capacities_before: np.ndarray
    capacities_after: np.ndarray
    reallocation: np.ndarray
    payments: np.ndarray
    j_star_before: np.ndarray
    j_star_after: np.ndarray
    worse_off: tuple

    @property
    def delta_capacity(self) -> float:
        return float(self.q_after) - float(self.q_before)

    @property
    def delta_stderr(self) -> float:
        return math.hypot(self.q_before.stderr, self.q_after.stderr)

    def to_dict(self) -> dict:
        return {
            "q_before": self.q_before.to_dict(),
            "q_after": self.q_after.to_dict(),
            "delta_capacity": {
                "estimate": self.delta_capacity,
                "stderr": self.delta_stderr,
                "days": self.q_after.days,
                "seed": self.q_after.seed,
            },
            "capacities_before": self.capacities_before.tolist(),
            "capacities_after": self.capacities_after.tolist(),
            "reallocation": self.reallocation.tolist(),
            "payments_per_day": self.payments.tolist(),
            "j_star_before": self.j_star_before.tolist(),
            "j_star_after": self.j_star_after.tolist(),
            "worse_off_incumbents": list(self.worse_off),
        }


def _entrant_column(entrant, days: int, seed: int) -> np.ndarray:
    if isinstance(entrant, Distribution):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xE17])))
        u = rng.random(days)
        u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
        return entrant.from_uniform(u)
    col = np.asarray(entrant, dtype=float).ravel()
    if col.size != days:
        raise ValueError(f"entrant column has {col.size} days, incumbents have {days}")
    return col


def join(
    tariff: Tariff,
    samples_before: SampleMatrix,
    entrant=None,
    *,
    samples_after: SampleMatrix | None = None,
    seed: int | None = None,
    bandwidth: str | float = "auto",
) -> JoinOutcome:
    """Let a new firm join the coalition sampled in `samples_before`.

    Either pass `samples_after` (days drawn from the extended joint model,
    with the entrant in the last column) or an `entrant` that is a
    :class:`Distribution` drawn independently of the incumbents, or a
    per-day demand array aligned with `samples_before`.
    """
    arbitrage_constant(tariff)  # fail fast on a non-viable tariff
    if samples_after is None:
        if entrant is None:
            raise ValueError("give either an entrant or samples_after")
        s = seed if seed is not None else (samples_before.seed or 0)
        samples_after = samples_before.with_column(_entrant_column(entrant, samples_before.days, s))
    if samples_after.n != samples_before.n + 1:
        raise ValueError("samples_after must have exactly one more firm than samples_before")

    before = nash_equilibrium(tariff, samples_before, bandwidth=bandwidth, check_alignment=False, verify=False)
    after = nash_equilibrium(tariff, samples_after, bandwidth=bandwidth, check_alignment=False, verify=False)
    cap_b = before.allocation.capacities
    cap_a = after.allocation.capacities
    realloc = np.append(cap_a[:-1] - cap_b, cap_a[-1])
    worse = tuple(int(k) for k in np.flatnonzero(after.j_star[:-1] > before.j_star))
    return JoinOutcome(
        q_before=before.q,
        q_after=after.q,
        capacities_before=cap_b,
        capacities_after=cap_a,
        reallocation=realloc,
        payments=tariff.pi_s * realloc,
        j_star_before=before.j_star,
        j_star_after=after.j_star,
        worse_off=worse,
    )
