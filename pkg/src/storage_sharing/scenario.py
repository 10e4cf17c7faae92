"""Scenario files: tariff, demand source, Monte-Carlo settings, analysis toggles.

A scenario is YAML (JSON is accepted too)::

    tariff: {pi_h: 54.0, pi_l: 21.5, pi_s: 10.0}
    demand:
      coupling: gaussian-copula
      marginals:
        - {kind: truncated-gaussian, mu: 8.0, sigma: 2.0}
        - {kind: lognormal, mu: 1.8, sigma: 0.3}
      correlation: [[1.0, 0.5], [0.5, 1.0]]
    monte_carlo: {days: 100000, seed: 7}
    analysis: {alignment: true, verify: true}
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import demand as dm
from .core import Efficiency, Tariff

SCHEMA_VERSION = "1"
MIN_DAYS = 1_000
RECOMMENDED_DAYS = 100_000


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TariffConfig(_Strict):
    pi_h: float
    pi_l: float = Field(ge=0)
    pi_s: float = Field(ge=0)

    @model_validator(mode="after")
    def _peak_above_offpeak(self):
        if not self.pi_h > self.pi_l:
            raise ValueError("pi_h must exceed pi_l")
        return self

    def build(self) -> Tariff:
        return Tariff(self.pi_h, self.pi_l, self.pi_s)


class EfficiencyConfig(_Strict):
    eta_i: float = Field(1.0, gt=0, le=1)
    eta_o: float = Field(1.0, gt=0, le=1)

    def build(self) -> Efficiency:
        return Efficiency(self.eta_i, self.eta_o)


class UniformConfig(_Strict):
    kind: Literal["uniform"]
    a: float = Field(0.0, ge=0)
    b: float = 1.0


class TruncatedGaussianConfig(_Strict):
    kind: Literal["truncated-gaussian"]
    mu: float
    sigma: float = Field(gt=0)


class LogNormalConfig(_Strict):
    kind: Literal["lognormal"]
    mu: float
    sigma: float = Field(gt=0)


class IrwinHallConfig(_Strict):
    kind: Literal["irwin-hall"]
    n: int = Field(2, ge=1)
    scale: float = Field(1.0, gt=0)


class TransformOfUniformConfig(_Strict):
    kind: Literal["transform-of-uniform"]
    low: float = 0.0
    high: float = 1.0
    transform: str = "identity"


class EmpiricalConfig(_Strict):
    kind: Literal["empirical"]
    values: list[float] = Field(min_length=2)


class PointMassConfig(_Strict):
    kind: Literal["point-mass"]
    value: float = Field(0.0, ge=0)


DistributionConfig = Annotated[
    Union[
        UniformConfig,
        TruncatedGaussianConfig,
        LogNormalConfig,
        IrwinHallConfig,
        TransformOfUniformConfig,
        EmpiricalConfig,
        PointMassConfig,
    ],
    Field(discriminator="kind"),
]


def build_distribution(cfg) -> dm.Distribution:
    match cfg.kind:
        case "uniform":
            return dm.Uniform(cfg.a, cfg.b)
        case "truncated-gaussian":
            return dm.TruncatedGaussian(cfg.mu, cfg.sigma)
        case "lognormal":
            return dm.LogNormal(cfg.mu, cfg.sigma)
        case "irwin-hall":
            return dm.IrwinHall(cfg.n, cfg.scale)
        case "transform-of-uniform":
            return dm.TransformOfUniform(cfg.low, cfg.high, cfg.transform)
        case "empirical":
            return dm.fit_empirical(cfg.values)
        case "point-mass":
            return dm.PointMass(cfg.value)
    raise ValueError(f"unknown distribution kind {cfg.kind!r}")


class TransformConfig(_Strict):
    low: float = Field(0.0, ge=0)
    high: float = 10.0
    transforms: list[str] = ["w_sin2", "w_cos2"]


class MeterSchemaConfig(_Strict):
    timestamp: str = "timestamp"
    firm: str = "firm_id"
    power: str = "kw"
    unit: Literal["kW", "W"] = "kW"
    unit_column: Optional[str] = None


class DataConfig(_Strict):
    """Either a ready days x firms matrix or raw meter CSVs plus a peak window."""

    matrix: Optional[str] = None
    meter: list[str] = []
    window: str = "12:00-18:00"
    weekdays_only: bool = False
    csv_schema: MeterSchemaConfig = MeterSchemaConfig()

    @model_validator(mode="after")
    def _one_source(self):
        if bool(self.matrix) == bool(self.meter):
            raise ValueError("give exactly one of 'matrix' or 'meter'")
        return self


class DemandConfig(_Strict):
    coupling: Literal["independent", "gaussian-copula", "transform", "paired-empirical"]
    marginals: Optional[list[DistributionConfig]] = None
    correlation: Optional[list[list[float]]] = None
    transform: Optional[TransformConfig] = None
    data: Optional[DataConfig] = None

    @model_validator(mode="after")
    def _exactly_one_source(self):
        sources = [s for s in ("marginals", "transform", "data") if getattr(self, s) is not None]
        if len(sources) != 1:
            raise ValueError(f"exactly one demand source required, got {sources or 'none'}")
        wanted = {
            "independent": "marginals",
            "gaussian-copula": "marginals",
            "transform": "transform",
            "paired-empirical": "data",
        }[self.coupling]
        if sources[0] != wanted:
            raise ValueError(f"coupling {self.coupling!r} needs '{wanted}', got '{sources[0]}'")
        if self.coupling == "gaussian-copula" and self.correlation is None:
            raise ValueError("gaussian-copula coupling needs a correlation matrix")
        return self


class MonteCarloConfig(_Strict):
    days: int = Field(100_000, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)


class AnalysisConfig(_Strict):
    alignment: bool = True
    verify: bool = True
    grid_resolution: int = Field(401, ge=2)
    bandwidth: Union[float, Literal["auto", "silverman"]] = "auto"
    stability_partitions: list[list[list[int]]] = []
    join_entrant: Optional[DistributionConfig] = None
    gamma_sweep: Optional[list[float]] = None


class Scenario(_Strict):
    tariff: TariffConfig
    efficiency: Optional[EfficiencyConfig] = None
    demand: DemandConfig
    monte_carlo: MonteCarloConfig = MonteCarloConfig()
    analysis: AnalysisConfig = AnalysisConfig()

    def digest(self) -> str:
        """SHA-256 of the resolved scenario, stable across runs."""
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def build_model(self, base_dir: Path | None = None) -> dm.DemandModel:
        d = self.demand
        if d.coupling == "independent":
            return dm.IndependentModel(tuple(build_distribution(m) for m in d.marginals))
        if d.coupling == "gaussian-copula":
            return dm.GaussianCopulaModel(
                tuple(build_distribution(m) for m in d.marginals), np.asarray(d.correlation)
            )
        if d.coupling == "transform":
            t = d.transform
            return dm.TransformModel(t.low, t.high, tuple(t.transforms))
        return self._load_data(base_dir).model

    def _load_data(self, base_dir: Path | None):
        from . import ingest

        data = self.demand.data
        root = base_dir or Path(".")
        if data.matrix:
            model = ingest.read_matrix_csv(root / data.matrix)
            corr = np.atleast_2d(np.corrcoef(model.values, rowvar=False))
            return ingest.CohortData(model, corr, {f: model.marginal(k) for k, f in enumerate(model.firm_ids)}, np.zeros_like(model.values))
        schema = ingest.CsvSchema(**data.csv_schema.model_dump())
        window = ingest.PeakWindow.parse(data.window, data.weekdays_only)
        daily = []
        for p in data.meter:
            daily += [ingest.daily_peak_energy(s, window) for s in ingest.load_csv(root / p, schema)]
        return ingest.build_model(daily)

    def uses_data(self) -> bool:
        return self.demand.coupling == "paired-empirical"


def load_scenario(path, seed: int | None = None, days: int | None = None) -> Scenario:
    """Read and validate a scenario file, applying command-line overrides."""
    raw = yaml.safe_load(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: scenario must be a mapping at top level")
    mc = dict(raw.get("monte_carlo") or {})
    if seed is not None:
        mc["seed"] = seed
    if days is not None:
        mc["days"] = days
    if mc:
        raw["monte_carlo"] = mc
    return Scenario.model_validate(raw)
