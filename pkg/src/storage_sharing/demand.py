"""Peak-period demand laws, joint firm models, sampling and conditional means.

Marginal laws (:class:`Distribution` subclasses) expose ``cdf``, ``quantile``,
``mean`` and the partial expectation ``E[(X - c)^+]`` that the cost functions
need. Joint laws (:class:`DemandModel` subclasses) produce a
:class:`SampleMatrix` of daily demands, one column per firm. The conditional
expectation ``E[X_k | X_c = q]`` is estimated from a sample matrix with a
Gaussian-kernel Nadaraya-Watson regression on the aggregate column.
"""

from __future__ import annotations

import abc
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

__all__ = [
    "Distribution",
    "Uniform",
    "TruncatedGaussian",
    "LogNormal",
    "IrwinHall",
    "TransformOfUniform",
    "Empirical",
    "PointMass",
    "Mixture",
    "DemandModel",
    "IndependentModel",
    "GaussianCopulaModel",
    "TransformModel",
    "PairedEmpiricalModel",
    "SampleMatrix",
    "ExtrapolationError",
    "ConditionalMean",
    "AlignmentReport",
    "TRANSFORMS",
    "register_transform",
    "cdf",
    "quantile",
    "sample",
    "fit_empirical",
    "kernel_bandwidth",
    "conditional_means",
    "conditional_mean",
    "alignment_check",
]

# days per RNG stream; fixed so output never depends on the worker count
BLOCK_DAYS = 1 << 16


class ExtrapolationError(ValueError):
    """A conditional mean was requested outside the sampled aggregate range."""


# ---------------------------------------------------------------------------
# marginal distributions
# ---------------------------------------------------------------------------


class Distribution(abc.ABC):
    """A non-negative one-dimensional demand law."""

    #: True when ``partial_expectation`` is a closed form rather than a sample
    #: or grid average.
    parametric = True

    @abc.abstractmethod
    def cdf(self, x):
        """Right-continuous CDF, vectorized over `x`."""

    @abc.abstractmethod
    def _ppf(self, p):
        """Generalized inverse on [0, 1], no argument checking."""

    @abc.abstractmethod
    def mean(self) -> float: ...

    @abc.abstractmethod
    def partial_expectation(self, c):
        """``E[(X - c)^+]``."""

    def quantile(self, p):
        """``inf{x : F(x) >= p}``.

        Raises
        ------
        ValueError
            If any `p` lies outside [0, 1].
        """
        p_arr = np.asarray(p, dtype=float)
        if np.any(~np.isfinite(p_arr)) or np.any(p_arr < 0.0) or np.any(p_arr > 1.0):
            raise ValueError(f"probability outside [0, 1]: {p}")
        out = self._ppf(p_arr)
        return float(out) if np.ndim(out) == 0 else out

    def survival(self, c) -> float:
        """``P(X >= c)`` (equals ``1 - F(c)`` for continuous laws)."""
        return 1.0 - float(self.cdf(c))

    def tail_mean(self, c: float) -> float:
        """``E[X | X >= c]``; zero when the tail event is empty."""
        s = self.survival(c)
        if s <= 0.0:
            return 0.0
        return c + float(self.partial_expectation(c)) / s

    def expected_min(self, c):
        """``E[min(c, X)]``."""
        return self.mean() - self.partial_expectation(c)

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        """Inverse-transform sampling from uniforms in (0, 1)."""
        return np.asarray(self._ppf(u), dtype=float)


def cdf(dist: Distribution, x):
    """``F(x)`` for any distribution; zero below the support."""
    return dist.cdf(x)


def quantile(dist: Distribution, p):
    """Generalized inverse of `dist`'s CDF."""
    return dist.quantile(p)


@dataclass(frozen=True)
class Uniform(Distribution):
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.a < self.b:
            raise ValueError(f"need 0 <= a < b, got a={self.a}, b={self.b}")

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def _ppf(self, p):
        return self.a + p * (self.b - self.a)

    def mean(self):
        return 0.5 * (self.a + self.b)

    def partial_expectation(self, c):
        c = np.asarray(c, dtype=float)
        inside = 0.5 * (self.b - np.clip(c, self.a, self.b)) ** 2 / (self.b - self.a)
        return np.where(c < self.a, self.mean() - c, inside)


@dataclass(frozen=True)
class TruncatedGaussian(Distribution):
    """Gaussian ``N(mu, sigma^2)`` conditioned on ``X >= 0``."""

    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @cached_property
    def _law(self):
        return stats.truncnorm(-self.mu / self.sigma, np.inf, loc=self.mu, scale=self.sigma)

    @cached_property
    def _mass(self) -> float:
        return float(special.ndtr(self.mu / self.sigma))

    def cdf(self, x):
        return self._law.cdf(x)

    def _ppf(self, p):
        return self._law.ppf(p)

    def mean(self):
        return float(self._law.mean())

    def partial_expectation(self, c):
        c = np.asarray(c, dtype=float)
        cc = np.maximum(c, 0.0)
        z = (cc - self.mu) / self.sigma
        upper = special.ndtr(-z)
        first_moment = (self.mu * upper + self.sigma * stats.norm.pdf(z)) / self._mass
        tail = first_moment - cc * upper / self._mass
        return np.where(c < 0.0, self.mean() - c, tail)


@dataclass(frozen=True)
class LogNormal(Distribution):
    """``exp(N(mu, sigma^2))``."""

    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(x, 0.0)) - self.mu) / self.sigma
        return np.where(x <= 0.0, 0.0, special.ndtr(z))

    def _ppf(self, p):
        return np.exp(self.mu + self.sigma * special.ndtri(p))

    def mean(self):
        return math.exp(self.mu + 0.5 * self.sigma**2)

    def partial_expectation(self, c):
        c = np.asarray(c, dtype=float)
        cc = np.maximum(c, 1e-300)
        d2 = (self.mu - np.log(cc)) / self.sigma
        d1 = d2 + self.sigma
        tail = self.mean() * special.ndtr(d1) - cc * special.ndtr(d2)
        return np.where(c <= 0.0, self.mean() - c, tail)


@dataclass(frozen=True)
class IrwinHall(Distribution):
    """Sum of `n` independent ``Uniform(0, scale)`` variables."""

    n: int = 2
    scale: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")

    def _power_sum(self, y, power: int):
        # sum_k (-1)^k C(n, k) (y - k)_+^power
        y = np.asarray(y, dtype=float)
        total = np.zeros_like(y)
        for k in range(self.n + 1):
            total = total + (-1) ** k * math.comb(self.n, k) * np.maximum(y - k, 0.0) ** power
        return total

    def cdf(self, x):
        y = np.asarray(x, dtype=float) / self.scale
        inside = self._power_sum(np.clip(y, 0.0, self.n), self.n) / math.factorial(self.n)
        return np.clip(np.where(y >= self.n, 1.0, inside), 0.0, 1.0)

    def _ppf(self, p):
        p = np.asarray(p, dtype=float)
        lo = np.zeros_like(p)
        hi = np.full_like(p, float(self.n))
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid * self.scale) < p
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = hi * self.scale
        return out if out.ndim else out[()]

    def mean(self):
        return 0.5 * self.n * self.scale

    def partial_expectation(self, c):
        # E[(X-c)^+] = E[X] - c + int_0^c F
        y = np.clip(np.asarray(c, dtype=float) / self.scale, 0.0, self.n)
        integral_f = self._power_sum(y, self.n + 1) / math.factorial(self.n + 1)
        out = self.scale * (0.5 * self.n - y + integral_f)
        c = np.asarray(c, dtype=float)
        return np.where(c < 0.0, self.mean() - c, out)


TRANSFORMS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda w: w,
    "w_sin2": lambda w: w * np.sin(w) ** 2,
    "w_cos2": lambda w: w * np.cos(w) ** 2,
    "square": lambda w: w * w,
}


def register_transform(name: str, fn: Callable[[np.ndarray], np.ndarray]) -> None:
    """Make `fn` available to :class:`TransformOfUniform` / :class:`TransformModel`."""
    TRANSFORMS[name] = fn


def _transform(name: str):
    try:
        return TRANSFORMS[name]
    except KeyError:
        raise ValueError(f"unknown transform {name!r}; known: {sorted(TRANSFORMS)}") from None


@dataclass(frozen=True)
class TransformOfUniform(Distribution):
    """``g(W)`` with ``W ~ Uniform(low, high)`` and `g` a registered transform.

    CDF, quantiles and moments come from a deterministic midpoint grid of
    `resolution` points over the base range.
    """

    low: float
    high: float
    transform: str
    resolution: int = 200_001

    parametric = False

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError("need low < high")
        _transform(self.transform)

    @cached_property
    def _grid(self) -> np.ndarray:
        w = self.low + (np.arange(self.resolution) + 0.5) * (self.high - self.low) / self.resolution
        vals = np.sort(_transform(self.transform)(w))
        if vals[0] < 0.0:
            raise ValueError(f"transform {self.transform!r} is negative on the base range")
        return vals

    @cached_property
    def _tail_sums(self) -> np.ndarray:
        return np.concatenate([np.cumsum(self._grid[::-1])[::-1], [0.0]])

    def cdf(self, x):
        return np.searchsorted(self._grid, np.asarray(x, dtype=float), side="right") / self._grid.size

    def _ppf(self, p):
        g = self._grid
        idx = np.clip(np.ceil(np.asarray(p) * g.size).astype(int) - 1, 0, g.size - 1)
        return g[idx]

    def mean(self):
        return float(self._grid.mean())

    def partial_expectation(self, c):
        c = np.asarray(c, dtype=float)
        i = np.searchsorted(self._grid, c, side="right")
        return (self._tail_sums[i] - (self._grid.size - i) * c) / self._grid.size

    def from_uniform(self, u):
        w = self.low + u * (self.high - self.low)
        return _transform(self.transform)(w)


@dataclass(frozen=True, eq=False)
class Empirical(Distribution):
    """Interpolated empirical law of a non-negative sample.

    The quantile function linearly interpolates between order statistics
    (position ``p * (n - 1)``) and the CDF is its generalized inverse.
    """

    values: np.ndarray

    parametric = False

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.size

    @cached_property
    def _tail_sums(self) -> np.ndarray:
        return np.concatenate([np.cumsum(self.values[::-1])[::-1], [0.0]])

    def cdf(self, x):
        xs = self.values
        n = xs.size
        x = np.asarray(x, dtype=float)
        i = np.searchsorted(xs, x, side="right") - 1
        ic = np.clip(i, 0, n - 2)
        gap = xs[ic + 1] - xs[ic]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(gap > 0, (x - xs[ic]) / gap, 0.0)
        out = (ic + np.clip(frac, 0.0, 1.0)) / (n - 1)
        out = np.where(i < 0, 0.0, np.where(i >= n - 1, 1.0, out))
        return out if out.ndim else float(out)

    def _ppf(self, p):
        return np.quantile(self.values, p, method="linear")

    def mean(self):
        return float(self.values.mean())

    def partial_expectation(self, c):
        c = np.asarray(c, dtype=float)
        i = np.searchsorted(self.values, c, side="right")
        return (self._tail_sums[i] - (self.size - i) * c) / self.size

    def survival(self, c) -> float:
        i = np.searchsorted(self.values, c, side="left")
        return (self.size - i) / self.size

    def tail_mean(self, c: float) -> float:
        """Mean of the samples ``>= c``; zero if there are none."""
        i = int(np.searchsorted(self.values, c, side="left"))
        if i >= self.size:
            return 0.0
        return float(self.values[i:].mean())


@dataclass(frozen=True)
class PointMass(Distribution):
    """Degenerate law at `value` (e.g. a firm with no peak demand)."""

    value: float = 0.0

    def __post_init__(self):
        if self.value < 0.0:
            raise ValueError("demand must be non-negative")

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.value, 1.0, 0.0)

    def _ppf(self, p):
        return np.where(np.asarray(p) > 0.0, self.value, 0.0) + 0.0 * np.asarray(p)

    def from_uniform(self, u):
        return np.full(np.shape(u), self.value)

    def mean(self):
        return self.value

    def partial_expectation(self, c):
        return np.maximum(self.value - np.asarray(c, dtype=float), 0.0)

    def survival(self, c) -> float:
        return 1.0 if self.value >= c else 0.0

    def tail_mean(self, c):
        return self.value if self.value >= c else 0.0


@dataclass(frozen=True)
class Mixture(Distribution):
    """Equal-weight average of CDFs, e.g. one per day of a non-stationary year.

    An optimizer fed this law sees the averaged CDF ``(1/T) sum_t F_t``.
    """

    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("need at least one component")

    @property
    def parametric(self):
        return all(d.parametric for d in self.components)

    def cdf(self, x):
        return sum(np.asarray(d.cdf(x), dtype=float) for d in self.components) / len(self.components)

    def _ppf(self, p):
        p = np.asarray(p, dtype=float)
        lo = np.zeros_like(p)
        hi = np.full_like(p, max(float(d.quantile(1.0)) for d in self.components))
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < p
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return hi if hi.ndim else hi[()]

    def mean(self):
        return float(np.mean([d.mean() for d in self.components]))

    def partial_expectation(self, c):
        return sum(np.asarray(d.partial_expectation(c), dtype=float) for d in self.components) / len(
            self.components
        )

    def from_uniform(self, u):
        u = np.asarray(u, dtype=float)
        m = len(self.components)
        # first digit picks the component, the remainder is a fresh uniform
        scaled = u * m
        idx = np.minimum(scaled.astype(int), m - 1)
        rest = np.clip(scaled - idx, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
        out = np.empty_like(u)
        for j, d in enumerate(self.components):
            sel = idx == j
            out[sel] = d.from_uniform(rest[sel])
        return out


def fit_empirical(samples) -> Empirical:
    """Empirical distribution of observed daily peak energies.

    Raises
    ------
    ValueError
        For fewer than two samples, non-finite or negative values.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least 2 samples to fit an empirical distribution")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    if np.any(x < 0.0):
        bad = int(np.flatnonzero(x < 0.0)[0])
        raise ValueError(f"negative demand at index {bad}: {x[bad]}")
    return Empirical(x)


# ---------------------------------------------------------------------------
# sample matrices and joint models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    """Daily peak demands, ``days x n`` kWh, with the seed that produced them."""

    values: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"expected a days x firms matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample matrix contains non-finite values")
        if np.any(v < 0.0):
            raise ValueError("sample matrix contains negative demand")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def days(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @cached_property
    def total(self) -> np.ndarray:
        """Aggregate demand ``X_c`` per day."""
        t = self.values.sum(axis=1)
        t.setflags(write=False)
        return t

    @cached_property
    def _order(self) -> np.ndarray:
        return np.argsort(self.total, kind="stable")

    @cached_property
    def _sorted_total(self) -> np.ndarray:
        return self.total[self._order]

    @cached_property
    def _sorted_values(self) -> np.ndarray:
        return self.values[self._order]

    def column(self, k: int) -> np.ndarray:
        return self.values[:, k]

    def marginal(self, k: int) -> Empirical:
        return Empirical(self.values[:, k])

    def aggregate(self) -> Empirical:
        return Empirical(self.total)

    def with_column(self, extra) -> "SampleMatrix":
        extra = np.asarray(extra, dtype=float).reshape(self.days, -1)
        return SampleMatrix(np.hstack([self.values, extra]), seed=self.seed)

    def select(self, firms: Sequence[int]) -> "SampleMatrix":
        return SampleMatrix(self.values[:, list(firms)], seed=self.seed)

    def merge(self, blocks: Sequence[Sequence[int]]) -> "SampleMatrix":
        """One column per block holding the summed demand of its members."""
        cols = [self.values[:, list(b)].sum(axis=1) for b in blocks]
        return SampleMatrix(np.column_stack(cols), seed=self.seed)


class DemandModel(abc.ABC):
    """Joint law of the daily peak demands of `n` firms."""

    @property
    @abc.abstractmethod
    def n(self) -> int: ...

    @abc.abstractmethod
    def marginal(self, k: int) -> Distribution: ...

    @abc.abstractmethod
    def _draw(self, rng: np.random.Generator, rows: int) -> np.ndarray: ...

    def aggregate(self) -> Distribution | None:
        """Closed-form law of the aggregate demand, when one is known."""
        return None

    def sample(self, days: int, seed: int, threads: int = 1) -> "SampleMatrix":
        return sample(self, days, seed, threads=threads)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def sample(model: DemandModel, days: int, seed: int, threads: int = 1) -> SampleMatrix:
    """Draw `days` i.i.d. daily demand vectors from `model`.

    Days are split into fixed blocks of ``BLOCK_DAYS``; block ``b`` uses a
    Philox stream keyed by ``(seed, b)``. The result is therefore identical
    for any `threads`.
    """
    days = int(days)
    if days < 1:
        raise ValueError("days must be >= 1")
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    n_blocks = -(-days // BLOCK_DAYS)

    def run(b: int) -> np.ndarray:
        rows = min(BLOCK_DAYS, days - b * BLOCK_DAYS)
        return model._draw(_block_rng(seed, b), rows)

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    return SampleMatrix(np.vstack(parts), seed=seed)


def _uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    # open interval so quantile functions stay finite
    u = rng.random(shape)
    return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)


@dataclass(frozen=True)
class IndependentModel(DemandModel):
    marginals: tuple

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if not self.marginals:
            raise ValueError("need at least one firm")

    @property
    def n(self):
        return len(self.marginals)

    def marginal(self, k):
        return self.marginals[k]

    def _draw(self, rng, rows):
        u = _uniforms(rng, (rows, self.n))
        return np.column_stack([d.from_uniform(u[:, k]) for k, d in enumerate(self.marginals)])

    def aggregate(self):
        first = self.marginals[0]
        if all(isinstance(d, Uniform) and d.a == 0.0 and d == first for d in self.marginals):
            return IrwinHall(self.n, first.b)
        if self.n == 1:
            return first
        return None


def _psd_factor(corr: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(corr)
        return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True, eq=False)
class GaussianCopulaModel(DemandModel):
    """Marginals coupled through a Gaussian copula with matrix `correlation`."""

    marginals: tuple
    correlation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        r = np.array(self.correlation, dtype=float)
        n = len(self.marginals)
        if r.shape != (n, n):
            raise ValueError(f"correlation must be {n}x{n}, got {r.shape}")
        if not np.allclose(r, r.T, atol=1e-12):
            raise ValueError("correlation matrix is not symmetric")
        if not np.allclose(np.diag(r), 1.0, atol=1e-12):
            raise ValueError("correlation matrix must have a unit diagonal")
        if np.linalg.eigvalsh(r).min() < -1e-10:
            raise ValueError("correlation matrix is not positive semidefinite")
        r.setflags(write=False)
        object.__setattr__(self, "correlation", r)

    @property
    def n(self):
        return len(self.marginals)

    def marginal(self, k):
        return self.marginals[k]

    @cached_property
    def _factor(self):
        return _psd_factor(self.correlation)

    def _draw(self, rng, rows):
        z = rng.standard_normal((rows, self.n)) @ self._factor.T
        u = np.clip(special.ndtr(z), np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
        return np.column_stack([d.from_uniform(u[:, k]) for k, d in enumerate(self.marginals)])

    @classmethod
    def one_factor(cls, marginals, loadings) -> "GaussianCopulaModel":
        """Correlation ``l_i * l_j`` off the diagonal."""
        lam = np.asarray(loadings, dtype=float)
        r = np.outer(lam, lam)
        np.fill_diagonal(r, 1.0)
        return cls(tuple(marginals), r)


@dataclass(frozen=True)
class TransformModel(DemandModel):
    """Firm `k` consumes ``g_k(W)`` for one shared ``W ~ Uniform(low, high)``.

    With ``("w_sin2", "w_cos2")`` the aggregate equals `W` exactly.
    """

    low: float = 0.0
    high: float = 10.0
    transforms: tuple = ("w_sin2", "w_cos2")

    def __post_init__(self):
        object.__setattr__(self, "transforms", tuple(self.transforms))
        for t in self.transforms:
            _transform(t)
        if not 0.0 <= self.low < self.high:
            raise ValueError("need 0 <= low < high")

    @property
    def n(self):
        return len(self.transforms)

    def marginal(self, k):
        return TransformOfUniform(self.low, self.high, self.transforms[k])

    def _draw(self, rng, rows):
        w = self.low + _uniforms(rng, rows) * (self.high - self.low)
        return np.column_stack([_transform(t)(w) for t in self.transforms])

    def aggregate(self):
        if set(self.transforms) == {"w_sin2", "w_cos2"} and len(self.transforms) == 2:
            return Uniform(self.low, self.high)
        return None


@dataclass(frozen=True, eq=False)
class PairedEmpiricalModel(DemandModel):
    """Historical ``days x firms`` matrix; each row is one calendar day.

    Sampling resamples whole rows, which keeps the cross-firm pairing.
    """

    values: np.ndarray
    firm_ids: tuple = ()
    dates: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 2:
            raise ValueError("paired-empirical data must be a days x firms matrix")
        if np.any(~np.isfinite(v)) or np.any(v < 0.0):
            raise ValueError("paired-empirical entries must be finite and >= 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        ids = tuple(self.firm_ids) or tuple(f"firm{k}" for k in range(v.shape[1]))
        if len(ids) != v.shape[1]:
            raise ValueError("one firm id per column required")
        object.__setattr__(self, "firm_ids", ids)
        object.__setattr__(self, "dates", tuple(self.dates))

    @property
    def n(self):
        return self.values.shape[1]

    def marginal(self, k):
        return Empirical(self.values[:, k])

    def aggregate(self):
        return Empirical(self.values.sum(axis=1))

    def _draw(self, rng, rows):
        return self.values[rng.integers(0, self.values.shape[0], rows)]

    def as_samples(self) -> SampleMatrix:
        """The historical days themselves, in calendar order."""
        return SampleMatrix(self.values)


# ---------------------------------------------------------------------------
# conditional expectation E[X_k | X_c = q]
# ---------------------------------------------------------------------------

# kernel support used in sums, in bandwidths
_CUTOFF = 8.0
_MIN_POINTS = 10


def kernel_bandwidth(total: np.ndarray, rule: str | float = "auto") -> float:
    """Bandwidth for regressing on the aggregate column.

    ``"silverman"`` is the rule of thumb ``0.9 min(sd, IQR/1.34) n^(-1/5)``.
    ``"auto"`` keeps Silverman's scale but shrinks at rate ``n^(-3/10)``, which
    undersmooths so the smoothing bias stays below the sampling error.
    A positive float is used as given.
    """
    if not isinstance(rule, str):
        h = float(rule)
        if h <= 0.0:
            raise ValueError("bandwidth must be positive")
        return h
    x = np.asarray(total, dtype=float)
    n = x.size
    q75, q25 = np.percentile(x, [75, 25])
    scale = min(x.std(), (q75 - q25) / 1.34) or x.std()
    if scale == 0.0:
        return 0.0
    if rule == "silverman":
        return 0.9 * scale * n ** -0.2
    if rule == "auto":
        return 0.9 * scale * n ** -0.3
    raise ValueError(f"unknown bandwidth rule {rule!r}")


@dataclass(frozen=True)
class ConditionalMean:
    """Kernel estimate of ``E[X_k | X_c = q]`` for every firm."""

    q: float
    estimate: np.ndarray
    stderr: np.ndarray
    sum_stderr: float
    bandwidth: float
    n_eff: float

    @property
    def total(self) -> float:
        return float(self.estimate.sum())


def _window(sorted_total: np.ndarray, q: float, h: float) -> tuple[int, int]:
    lo = int(np.searchsorted(sorted_total, q - _CUTOFF * h, side="left"))
    hi = int(np.searchsorted(sorted_total, q + _CUTOFF * h, side="right"))
    if hi - lo < _MIN_POINTS:
        centre = int(np.searchsorted(sorted_total, q))
        lo = max(0, centre - _MIN_POINTS // 2)
        hi = min(sorted_total.size, lo + _MIN_POINTS)
        lo = max(0, hi - _MIN_POINTS)
    return lo, hi


def _kernel(xs: np.ndarray, q: float, h: float) -> np.ndarray:
    if h == 0.0:
        return np.ones_like(xs)
    z = (xs - q) / h
    z2 = 0.5 * z * z
    return np.exp(-(z2 - z2.min()))


def _check_range(samples: SampleMatrix, q) -> None:
    lo, hi = samples._sorted_total[0], samples._sorted_total[-1]
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any(q < lo) or np.any(q > hi):
        raise ExtrapolationError(
            f"q={q.tolist()} outside sampled aggregate range [{lo:.6g}, {hi:.6g}]; "
            "draw more days"
        )


def conditional_means(
    samples: SampleMatrix, q: float, bandwidth: str | float = "auto"
) -> ConditionalMean:
    """Nadaraya-Watson estimate of ``E[X_k | X_c = q]`` for all firms at once.

    All firms share the same kernel weights, so the estimates sum to the
    kernel-weighted mean of ``X_c`` near `q`. Standard errors use the
    heteroskedasticity-robust form ``sqrt(sum_i w_i^2 r_i^2)``.

    Raises
    ------
    ExtrapolationError
        If `q` lies outside the sampled range of ``X_c``.
    """
    q = float(q)
    _check_range(samples, q)
    st = samples._sorted_total
    h = kernel_bandwidth(samples.total, bandwidth)
    lo, hi = _window(st, q, h)
    k = _kernel(st[lo:hi], q, h)
    w = k / k.sum()
    vals = samples._sorted_values[lo:hi]
    est = w @ vals
    resid = vals - est
    se = np.sqrt((w * w) @ (resid * resid))
    tot_resid = st[lo:hi] - est.sum()
    sum_se = float(np.sqrt((w * w) @ (tot_resid * tot_resid)))
    return ConditionalMean(q, est, se, sum_se, h, float(1.0 / (w @ w)))


def conditional_mean(
    samples: SampleMatrix, firm: int, q: float, bandwidth: str | float = "auto"
) -> float:
    """Kernel estimate of ``E[X_firm | X_c = q]`` in kWh."""
    if not 0 <= firm < samples.n:
        raise IndexError(f"firm {firm} out of range for {samples.n} firms")
    return float(conditional_means(samples, q, bandwidth).estimate[firm])


@dataclass(frozen=True)
class AlignmentReport:
    """Finite-difference slopes of ``beta -> E[X_k | X_c = beta]``.

    ``slopes`` and ``slope_se`` have shape ``(len(grid) - 1, n)``; a firm is
    flagged where its slope falls below ``-3 * slope_se``.
    """

    grid: np.ndarray
    means: np.ndarray
    slopes: np.ndarray
    slope_se: np.ndarray
    violations: tuple  # (firm, interval index) pairs
    bandwidth: float

    @property
    def aligned(self) -> bool:
        return not self.violations

    @property
    def violating_firms(self) -> list[int]:
        return sorted({f for f, _ in self.violations})

    def to_dict(self) -> dict:
        return {
            "aligned": self.aligned,
            "violating_firms": self.violating_firms,
            "n_violations": len(self.violations),
            "grid": self.grid.tolist(),
            "min_slope": self.slopes.min(axis=0).tolist(),
            "bandwidth": self.bandwidth,
        }


def alignment_check(
    samples: SampleMatrix,
    grid=None,
    bandwidth: str | float = "auto",
    n_boot: int = 64,
    seed: int = 0,
    n_grid: int = 25,
) -> AlignmentReport:
    """Test whether every firm's conditional mean is non-decreasing in ``X_c``.

    Parameters
    ----------
    samples : SampleMatrix
    grid : array-like, optional
        Strictly increasing evaluation points inside the sampled range of
        ``X_c``. Defaults to `n_grid` points from the 5% to the 95% quantile.
    n_boot : int
        Poisson-bootstrap replicates used for the slope standard errors.
    seed : int
        Seed of the bootstrap stream.
    """
    if grid is None:
        grid = np.quantile(samples.total, np.linspace(0.05, 0.95, n_grid))
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be strictly increasing with at least 2 points")
    _check_range(samples, grid)

    st = samples._sorted_total
    sv = samples._sorted_values
    h = kernel_bandwidth(samples.total, bandwidth)
    windows = [_window(st, g, h) for g in grid]
    kernels = [_kernel(st[lo:hi], g, h) for g, (lo, hi) in zip(grid, windows)]

    def curve(weights: np.ndarray | None, offset: int) -> np.ndarray:
        out = np.empty((grid.size, samples.n))
        for i, ((lo, hi), k) in enumerate(zip(windows, kernels)):
            kw = k if weights is None else k * weights[lo - offset : hi - offset]
            s = kw.sum()
            out[i] = (kw @ sv[lo:hi]) / s if s > 0 else np.nan
        return out

    means = curve(None, 0)
    dx = np.diff(grid)[:, None]
    slopes = np.diff(means, axis=0) / dx

    lo_all = min(w[0] for w in windows)
    hi_all = max(w[1] for w in windows)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xA11])))
    boot = np.empty((n_boot,) + slopes.shape)
    for b in range(n_boot):
        weights = rng.poisson(1.0, hi_all - lo_all).astype(float)
        boot[b] = np.diff(curve(weights, lo_all), axis=0) / dx
    slope_se = np.nanstd(boot, axis=0, ddof=1) if n_boot > 1 else np.zeros_like(slopes)

    bad = np.argwhere(slopes < -3.0 * slope_se)
    violations = tuple((int(f), int(i)) for i, f in bad)
    return AlignmentReport(grid, means, slopes, slope_se, violations, h)
