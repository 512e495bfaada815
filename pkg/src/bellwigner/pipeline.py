"""Experiment configuration, run reports and the ideal/sample/loophole runs."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuit import VARIANTS, Outcome, ProbabilityTable, SettingPair, ideal_tables
from .loopholes import (NoiseModel, alt_polarizer_protocol, apply_noise, efficiency_curve,
                        polarizer_analytic, polarizer_counts, polarizer_estimator)
from .stats import (SETTING_KEYS, BellWignerResult, CountsTable, UncertainValue,
                    analytic_result, counts_to_csv, exact_result, monte_carlo_uncertainty,
                    no_signalling_report, probabilities_to_csv, sample_campaign)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    variant: str = "main"
    total_events: int = 1794
    seed: int = 0
    noise: NoiseModel = field(default_factory=NoiseModel)
    mc_samples: int = 100_000
    output_dir: str = "out"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if int(self.total_events) < 16:
            raise ConfigError("total_events must be at least 16")
        if int(self.mc_samples) < 1000:
            raise ConfigError("mc_samples must be at least 1000")
        if int(self.seed) < 0:
            raise ConfigError("seed must be non-negative")

    def to_dict(self) -> dict:
        return {"variant": self.variant, "total_events": self.total_events,
                "seed": self.seed, "noise": self.noise.to_dict(),
                "mc_samples": self.mc_samples, "output_dir": self.output_dir}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        try:
            if "noise" in d:
                d["noise"] = NoiseModel.from_dict(d["noise"])
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class RunReport:
    config: ExperimentConfig
    tables: tuple[ProbabilityTable, ...]
    counts: tuple[CountsTable, ...] | None
    exact: BellWignerResult
    analytic: BellWignerResult | None = None
    monte_carlo: BellWignerResult | None = None
    no_signalling: dict | None = None
    sigma_distance: float | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "tables": [_table_to_dict(t) for t in self.tables],
            "counts": None if self.counts is None else [_counts_to_dict(c) for c in self.counts],
            "exact": _result_to_dict(self.exact),
            "analytic": _result_to_dict(self.analytic),
            "monte_carlo": _result_to_dict(self.monte_carlo),
            "no_signalling": self.no_signalling,
            "sigma_distance": self.sigma_distance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(
            config=ExperimentConfig.from_dict(d["config"]),
            tables=tuple(_table_from_dict(t) for t in d["tables"]),
            counts=None if d["counts"] is None else tuple(_counts_from_dict(c) for c in d["counts"]),
            exact=_result_from_dict(d["exact"]),
            analytic=_result_from_dict(d["analytic"]),
            monte_carlo=_result_from_dict(d["monte_carlo"]),
            no_signalling=d["no_signalling"],
            sigma_distance=d["sigma_distance"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "report.json", out / "probabilities.csv"]
        written[0].write_text(self.to_json())
        written[1].write_text(probabilities_to_csv(self.tables))
        if self.counts is not None:
            written.append(out / "counts.csv")
            written[-1].write_text(counts_to_csv(self.counts))
        return written


def _setting_to_dict(s: SettingPair) -> dict:
    return {"x": s.x, "y": s.y, "variant": s.variant}


def _table_to_dict(t: ProbabilityTable) -> dict:
    return {"setting": _setting_to_dict(t.setting),
            "entries": [[e.alice, e.bob, e.alice_value, e.bob_value, e.probability]
                        for e in t.entries]}


def _table_from_dict(d: dict) -> ProbabilityTable:
    return ProbabilityTable(SettingPair(**d["setting"]),
                            tuple(Outcome(*row) for row in d["entries"]))


def _counts_to_dict(c: CountsTable) -> dict:
    return {"setting": _setting_to_dict(c.setting), "outcomes": [list(o) for o in c.outcomes],
            "counts": list(c.counts), "duration": c.duration}


def _counts_from_dict(d: dict) -> CountsTable:
    return CountsTable(SettingPair(**d["setting"]), tuple(tuple(o) for o in d["outcomes"]),
                       tuple(d["counts"]), d["duration"])


def _result_to_dict(r: BellWignerResult | None) -> dict | None:
    if r is None:
        return None

    def uv(v: UncertainValue) -> list:
        return [v.value, v.sigma_plus, v.sigma_minus]

    return {"method": r.method, "S": uv(r.S),
            "expectations": {f"{x}{y}": uv(r.expectations[(x, y)]) for x, y in SETTING_KEYS}}


def _result_from_dict(d: dict | None) -> BellWignerResult | None:
    if d is None:
        return None
    exps = {(int(k[0]), int(k[1])): UncertainValue(*v) for k, v in d["expectations"].items()}
    return BellWignerResult(exps, UncertainValue(*d["S"]), d["method"])


def model_tables(config: ExperimentConfig) -> list[ProbabilityTable]:
    return apply_noise(config.noise, ideal_tables(config.variant))


def run_ideal(config: ExperimentConfig) -> RunReport:
    """Exact predictions under the configured noise; no sampling."""
    tables = model_tables(config)
    if config.variant == "alt_polarizer_protocol":
        exact = alt_polarizer_protocol(tables, config.noise.polarizer_loss)
    else:
        exact = exact_result(tables)
    return RunReport(config, tuple(tables), None, exact,
                     no_signalling=no_signalling_report(tables))


def run_sample(config: ExperimentConfig) -> RunReport:
    """Poisson-sampled campaign with analytic and Monte-Carlo errors."""
    tables = model_tables(config)
    sample_seed, mc_seed = np.random.SeedSequence(config.seed).spawn(2)
    per_setting = config.total_events / 4
    if config.variant == "alt_polarizer_protocol":
        exact = alt_polarizer_protocol(tables, config.noise.polarizer_loss)
        counts = polarizer_counts(tables, config.noise.polarizer_loss, per_setting,
                                  np.random.default_rng(sample_seed))
        analytic = polarizer_analytic(counts)
        estimator = polarizer_estimator(counts)
        ns = None  # only the (1,1) setting records every outcome
    else:
        exact = exact_result(tables)
        counts = sample_campaign(tables, config.total_events, sample_seed)
        analytic = analytic_result(counts)
        estimator = None
        ns = no_signalling_report([c.to_probability_table() for c in counts])
    mc = monte_carlo_uncertainty(counts, config.mc_samples, mc_seed, estimator)
    return RunReport(config, tuple(tables), tuple(counts), exact, analytic, mc, ns,
                     mc.sigma_distance())


def parse_eta_grid(grid: str) -> list[float]:
    """``start:stop:step`` inclusive of ``stop`` (within half a step)."""
    try:
        start, stop, step = (float(p) for p in grid.split(":"))
    except ValueError as exc:
        raise ConfigError(f"eta grid must be start:stop:step, got {grid!r}") from exc
    if step <= 0 or not 0 <= start <= stop <= 1:
        raise ConfigError(f"invalid eta grid {grid!r}")
    n = int(np.floor((stop - start) / step + 0.5)) + 1
    return [round(start + i * step, 12) for i in range(n)]


def run_loophole(etas: Sequence[float]):
    return efficiency_curve(etas)
