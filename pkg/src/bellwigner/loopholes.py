"""Detection-efficiency analysis, noise models and the two alternative
measurement protocols."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import bisect

from .circuit import ProbabilityTable, ideal_tables
from .stats import (SETTING_KEYS, BellWignerResult, CountsTable, UncertainValue,
                    _by_key, _rng, binary_marginals, monte_carlo_uncertainty, s_value)

SQRT2 = np.sqrt(2)
ETA_THRESHOLD_CLOSED_FORM = 2 * np.sqrt(3 * (1 - 1 / SQRT2)) - 1
CHSH_ETA_THRESHOLD = 2 * SQRT2 - 2


def _unit(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def white_noise_for_fidelity(fidelity: float) -> float:
    """Mixing fraction p with <psi|(1-p)psi + p I/4|psi> = fidelity."""
    return _unit("white-noise fraction", 4 * (1 - _unit("fidelity", fidelity)) / 3)


@dataclass(frozen=True)
class NoiseModel:
    white_noise_fraction: float = 0.0
    bsm_infidelity: float = 0.0
    polarizer_loss: float = 0.0
    detection_efficiency: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            _unit(k, v)

    @classmethod
    def from_fidelities(cls, source_fidelity: float = 1.0, bsm_fidelity: float = 1.0,
                        **kwargs) -> "NoiseModel":
        return cls(white_noise_for_fidelity(source_fidelity), 1 - bsm_fidelity, **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        d = dict(d)
        if "source_fidelity" in d:
            d["white_noise_fraction"] = white_noise_for_fidelity(d.pop("source_fidelity"))
        if "bsm_fidelity" in d:
            d["bsm_infidelity"] = 1 - float(d.pop("bsm_fidelity"))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown noise fields {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


# -- detection efficiency ---------------------------------------------------

def efficiency_expectations(eta: float) -> dict:
    """Correlators under the +1-on-no-click strategy, closed form."""
    eta = _unit("eta", eta)
    e00 = eta**2 * (-1 / SQRT2) + (1 - eta) ** 2
    e01 = eta**3 / SQRT2 + (1 - eta) * (1 - eta**2)
    e11 = eta**4 / SQRT2 + (1 - eta**2) ** 2
    return {(0, 0): e00, (0, 1): e01, (1, 0): e01, (1, 1): e11}


def s_of_eta(eta: float) -> float:
    e = efficiency_expectations(eta)
    return s_value(e[(1, 1)], e[(1, 0)], e[(0, 1)], e[(0, 0)])


def eta_threshold(xtol: float = 1e-14) -> float:
    """Smallest efficiency at which S exceeds the local bound, by bisection."""
    return bisect(lambda eta: s_of_eta(eta) - 2, 0.5, 1.0, xtol=xtol)


def click_probability(setting: int, eta: float) -> float:
    """A0/B0 need one detector, A1/B1 need two."""
    return eta if setting == 0 else eta**2


def s_of_eta_from_tables(eta: float, tables: Sequence[ProbabilityTable] | None = None) -> float:
    """S under the no-click strategy for arbitrary binary tables, including
    the single-party marginal terms that vanish for maximally entangled wings."""
    tables = tables or ideal_tables()
    grids, _ = binary_marginals(tables)
    exps = {}
    for (x, y), g in grids.items():
        ca, cb = click_probability(x, eta), click_probability(y, eta)
        corr = g[0, 0] + g[1, 1] - g[0, 1] - g[1, 0]
        ma = g[0].sum() - g[1].sum()
        mb = g[:, 0].sum() - g[:, 1].sum()
        exps[(x, y)] = (ca * cb * corr + ca * (1 - cb) * ma + (1 - ca) * cb * mb
                        + (1 - ca) * (1 - cb))
    return s_value(*(exps[k] for k in SETTING_KEYS))


def inefficiency_strategy_sim(eta: float, events: int, rng_seed=None,
                              tables: Sequence[ProbabilityTable] | None = None) -> UncertainValue:
    """Event-by-event emulation of lossy detection with +1 on no-click.

    Events are split evenly over the four setting pairs. Returns the S
    estimate with its sampling standard error.
    """
    eta = _unit("eta", eta)
    if events < 1:
        raise ValueError("need at least one event")
    rng = _rng(rng_seed)
    grids, _ = binary_marginals(tables or ideal_tables())
    values = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]])
    exps, var = {}, 0.0
    for j, key in enumerate(SETTING_KEYS):
        n = events // 4 + (1 if j < events % 4 else 0)
        if n == 0:
            exps[key] = 1.0
            continue
        x, y = key
        picks = rng.choice(4, size=n, p=grids[key].reshape(-1))
        a, b = values[picks, 0], values[picks, 1]
        a = np.where(rng.random(n) < click_probability(x, eta), a, 1)
        b = np.where(rng.random(n) < click_probability(y, eta), b, 1)
        prod = a * b
        exps[key] = float(prod.mean())
        if n > 1:
            var += float(prod.var(ddof=1)) / n
    s = s_value(*(exps[k] for k in SETTING_KEYS))
    sig = float(np.sqrt(var))
    return UncertainValue(s, sig, sig)


@dataclass(frozen=True)
class EfficiencyCurve:
    points: tuple[tuple[float, float], ...]
    threshold: float

    def __post_init__(self):
        object.__setattr__(self, "points", tuple((float(e), float(s)) for e, s in self.points))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("eta", "S"))
        for eta, s in self.points:
            w.writerow((repr(eta), repr(s)))
        return buf.getvalue()


def efficiency_curve(etas: Sequence[float]) -> EfficiencyCurve:
    return EfficiencyCurve(tuple((e, s_of_eta(e)) for e in etas), eta_threshold())


def angle_sweep(angles: Sequence[float], eta: float = 1.0) -> list[tuple[float, float]]:
    """S under lossy detection as the source wave-plate angle is detuned from
    its optimum; a grid, not an optimiser."""
    return [(float(t), s_of_eta_from_tables(eta, ideal_tables("main", t))) for t in angles]


# -- noise ------------------------------------------------------------------

def _depolarize(grid: np.ndarray, frac: float, axis: int) -> np.ndarray:
    """Mix one wing with I/4: each rank-one outcome gets 1/4 of the other
    party's marginal."""
    if frac == 0:
        return grid
    if axis == 0:
        return (1 - frac) * grid + frac * np.broadcast_to(grid.sum(axis=0) / 4, grid.shape)
    return (1 - frac) * grid + frac * np.broadcast_to(grid.sum(axis=1)[:, None] / 4, grid.shape)


def _no_click(grid: np.ndarray, click: float, axis: int) -> np.ndarray:
    """Replace the outcome by the first +1 eigenstate with probability 1 - click."""
    if click == 1:
        return grid
    forced = np.zeros_like(grid)
    if axis == 0:
        forced[0, :] = grid.sum(axis=0)
    else:
        forced[:, 0] = grid.sum(axis=1)
    return click * grid + (1 - click) * forced


def apply_noise(model: NoiseModel, tables: Sequence[ProbabilityTable]) -> list[ProbabilityTable]:
    """Degrade tables: white noise per wing, then Bell-measurement infidelity
    on x=1 / y=1 sides, then detector inefficiency. Polariser loss is handled
    by :func:`alt_polarizer_protocol`."""
    out = []
    for t in tables:
        g = t.grid().copy()
        g = _depolarize(g, model.white_noise_fraction, 0)
        g = _depolarize(g, model.white_noise_fraction, 1)
        if t.setting.x == 1:
            g = _depolarize(g, model.bsm_infidelity, 0)
        if t.setting.y == 1:
            g = _depolarize(g, model.bsm_infidelity, 1)
        eta = model.detection_efficiency
        g = _no_click(g, click_probability(t.setting.x, eta), 0)
        g = _no_click(g, click_probability(t.setting.y, eta), 1)
        out.append(t.with_probabilities(g.reshape(-1)))
    return out


# -- alternative polariser protocol -----------------------------------------

def _polarizer_cells(table: ProbabilityTable) -> np.ndarray:
    """Outcomes actually recorded: all 16 for (1,1), else non-zero eigenvalues."""
    if (table.setting.x, table.setting.y) == (1, 1):
        return np.ones(len(table.entries), dtype=bool)
    return np.array([e.alice_value != 0 and e.bob_value != 0 for e in table.entries])


def polarizer_expected_counts(tables: Sequence[ProbabilityTable], loss: float,
                              per_setting: float = 1.0) -> list[np.ndarray]:
    """Mean counts per recorded cell, SETTING_KEYS order; each polariser-measured
    party costs a factor (1 - loss)."""
    loss = _unit("polarizer loss", loss)
    by = _by_key(tables)
    out = []
    for k in SETTING_KEYS:
        t = by[k]
        damp = (1 - loss) ** ((k[0] == 0) + (k[1] == 0))
        out.append(per_setting * damp * t.probabilities[_polarizer_cells(t)])
    return out


def polarizer_counts(tables: Sequence[ProbabilityTable], loss: float, per_setting: float,
                     rng_seed=None) -> list[CountsTable]:
    rng = _rng(rng_seed)
    by = _by_key(tables)
    means = polarizer_expected_counts(tables, loss, per_setting)
    out = []
    for k, mu in zip(SETTING_KEYS, means):
        t = by[k]
        mask = _polarizer_cells(t)
        outcomes = tuple((e.alice, e.bob, e.alice_value, e.bob_value)
                         for e, keep in zip(t.entries, mask) if keep)
        out.append(CountsTable(t.setting, outcomes, tuple(rng.poisson(mu)), per_setting))
    return out


def polarizer_estimator(counts_tables: Sequence[CountsTable]):
    """Vectorised estimator normalising every setting by the (1,1) total."""
    by = _by_key(counts_tables)
    lams = [by[k].products for k in SETTING_KEYS]
    bounds = np.cumsum([0] + [len(lam) for lam in lams])

    def estimate(n: np.ndarray) -> np.ndarray:
        norm = n[:, bounds[0]:bounds[1]].sum(axis=1)
        out = np.empty((n.shape[0], 4))
        with np.errstate(invalid="ignore", divide="ignore"):
            for j in range(4):
                out[:, j] = n[:, bounds[j]:bounds[j + 1]] @ lams[j] / norm
        return out

    return estimate


def polarizer_analytic(counts_tables: Sequence[CountsTable]) -> BellWignerResult:
    """First-order Poisson errors including the correlation through the
    shared (1,1) normalisation."""
    by = _by_key(counts_tables)
    n11, lam11 = by[(1, 1)].array, by[(1, 1)].products
    norm = n11.sum()
    if norm <= 0:
        raise ValueError("no counts in the normalising (1,1) setting")
    f = {k: float(by[k].products @ by[k].array / norm) for k in SETTING_KEYS}
    sign = {(1, 1): 1, (1, 0): 1, (0, 1): 1, (0, 0): -1}

    grad11 = (lam11 - f[(1, 1)]) / norm
    sig11 = float(np.sqrt(np.sum(grad11**2 * n11)))
    exps = {(1, 1): UncertainValue(f[(1, 1)], sig11, sig11)}
    var_s = 0.0
    for k in SETTING_KEYS[1:]:
        lam, n = by[k].products, by[k].array
        sig = float(np.sqrt(np.sum((lam / norm) ** 2 * n) + f[k] ** 2 / norm))
        exps[k] = UncertainValue(f[k], sig, sig)
        var_s += np.sum((sign[k] * lam / norm) ** 2 * n)
        grad11 = grad11 - sign[k] * f[k] / norm
    var_s += np.sum(grad11**2 * n11)
    s = s_value(*(f[k] for k in SETTING_KEYS))
    sig_s = float(np.sqrt(var_s))
    return BellWignerResult(exps, UncertainValue(s, sig_s, sig_s), "analytic")


def alt_polarizer_protocol(tables: Sequence[ProbabilityTable], loss: float, rng_seed=None,
                           per_setting: float = 1794 / 4, method: str = "analytic",
                           mc_samples: int = 100_000) -> BellWignerResult:
    """Emulate the polariser-based A0/B0 measurement.

    Without ``rng_seed`` the expected counts are used directly (exact). With a
    seed, counts are Poisson-sampled and errors come from ``method``.
    """
    if rng_seed is None:
        means = polarizer_expected_counts(tables, loss, 1.0)
        by = _by_key(tables)
        norm = means[0].sum()
        f = {}
        for k, mu in zip(SETTING_KEYS, means):
            lam = by[k].products[_polarizer_cells(by[k])]
            f[k] = float(lam @ mu / norm)
        exps = {k: UncertainValue(v) for k, v in f.items()}
        return BellWignerResult(exps, UncertainValue(s_value(*(f[k] for k in SETTING_KEYS))),
                                "exact")
    if isinstance(rng_seed, np.random.Generator):
        raise TypeError("pass an integer seed so the Monte-Carlo stage is reproducible")
    counts = polarizer_counts(tables, loss, per_setting, rng_seed)
    if method == "monte_carlo":
        return monte_carlo_uncertainty(counts, mc_samples, rng_seed, polarizer_estimator(counts))
    return polarizer_analytic(counts)
