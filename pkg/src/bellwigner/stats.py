"""Finite-statistics emulation of the coincidence campaign and the S estimator."""
from __future__ import annotations

import csv
import io
import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .circuit import Outcome, ProbabilityTable, SettingPair, all_settings, expectation

SETTING_KEYS = ((1, 1), (1, 0), (0, 1), (0, 0))
CSV_COLUMNS = ("setting_x", "setting_y", "outcome_a", "outcome_b",
               "eigenvalue_a", "eigenvalue_b", "count")
MC_CHUNK = 10_000
SIGMA_PERCENTILES = (15.865525393145707, 84.13447460685429)


def s_value(e11: float, e10: float, e01: float, e00: float) -> float:
    """CHSH combination <A1B1> + <A1B0> + <A0B1> - <A0B0>."""
    for e in (e11, e10, e01, e00):
        if not -1 - 1e-12 <= e <= 1 + 1e-12:
            raise ValueError(f"expectation {e} outside [-1, 1]")
    return e11 + e10 + e01 - e00


def s_from_expectations(exps: dict) -> float:
    return s_value(*(exps[k] for k in SETTING_KEYS))


@dataclass(frozen=True)
class UncertainValue:
    value: float
    sigma_plus: float = 0.0
    sigma_minus: float = 0.0

    def __post_init__(self):
        for s in (self.sigma_plus, self.sigma_minus):
            if not np.isfinite(s) or s < 0:
                raise ValueError(f"invalid sigma {s}")

    @property
    def sigma(self) -> float:
        return 0.5 * (self.sigma_plus + self.sigma_minus)


@dataclass(frozen=True)
class BellWignerResult:
    expectations: dict
    S: UncertainValue
    method: str

    def __post_init__(self):
        if self.method not in ("exact", "analytic", "monte_carlo"):
            raise ValueError(f"unknown method {self.method!r}")
        if set(self.expectations) != set(SETTING_KEYS):
            raise ValueError("need all four setting pairs")
        s = sum(self.expectations[k].value for k in SETTING_KEYS[:3]) \
            - self.expectations[(0, 0)].value
        if abs(s - self.S.value) > 1e-12:
            raise ValueError(f"S={self.S.value} inconsistent with expectations ({s})")

    def sigma_distance(self, bound: float = 2.0) -> float:
        """How many lower-side sigmas S sits above the local bound."""
        if self.S.sigma_minus == 0:
            return float("inf") if self.S.value > bound else float("-inf")
        return (self.S.value - bound) / self.S.sigma_minus


@dataclass(frozen=True)
class CountsTable:
    setting: SettingPair
    outcomes: tuple[tuple[str, str, float, float], ...]
    counts: tuple[int, ...]
    duration: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.counts) != len(self.outcomes):
            raise ValueError("counts do not align with outcomes")
        if any(c < 0 for c in self.counts):
            raise ValueError("negative count")

    @classmethod
    def from_table(cls, table: ProbabilityTable, counts, duration: float = 1.0) -> "CountsTable":
        outcomes = tuple((e.alice, e.bob, e.alice_value, e.bob_value) for e in table.entries)
        return cls(table.setting, outcomes, tuple(counts), duration)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float)

    @property
    def products(self) -> np.ndarray:
        return np.array([a * b for _, _, a, b in self.outcomes])

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    def to_probability_table(self) -> ProbabilityTable:
        if self.total == 0:
            raise ValueError("cannot normalise an all-zero counts table")
        n = self.array / self.total
        return ProbabilityTable(
            self.setting,
            tuple(Outcome(o[0], o[1], o[2], o[3], float(p)) for o, p in zip(self.outcomes, n)),
        )


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_counts(table: ProbabilityTable, expected_total: float, rng_seed=None) -> CountsTable:
    """Independent Poisson(expected_total * p_i) draws for every outcome."""
    if not expected_total > 0:
        raise ValueError("expected_total must be positive")
    counts = _rng(rng_seed).poisson(expected_total * table.probabilities)
    return CountsTable.from_table(table, counts, duration=expected_total)


def sample_campaign(tables: Sequence[ProbabilityTable], total_events: float,
                    seed=None) -> list[CountsTable]:
    """Equal exposure per setting pair, each with its own child seed."""
    children = _seed_sequence(seed).spawn(len(tables))
    per = total_events / len(tables)
    return [sample_counts(t, per, np.random.default_rng(c)) for t, c in zip(tables, children)]


def expectation_from_counts(counts: CountsTable, eigenvalue_products=None) -> float:
    """f(n) = sum(lambda_i n_i) / sum(n_i)."""
    n = counts.array
    lam = counts.products if eigenvalue_products is None else np.asarray(eigenvalue_products, float)
    total = n.sum()
    if total <= 0:
        raise ValueError("all-zero counts")
    return float(lam @ n / total)


def error_propagation(counts: CountsTable, eigenvalue_products=None,
                      floor: bool = False) -> float:
    """First-order Poisson error of f(n): sum_i (df/dn_i)^2 var(n_i), var(n_i) = n_i.

    With ``floor`` the variance of every cell is n_i + 1, which keeps sigma
    away from zero when all counts sit on one outcome.
    """
    n = counts.array
    lam = counts.products if eigenvalue_products is None else np.asarray(eigenvalue_products, float)
    total = n.sum()
    if total <= 0:
        raise ValueError("all-zero counts")
    f = lam @ n / total
    grad = (lam - f) / total
    var = n + 1 if floor else n
    return float(np.sqrt(np.sum(grad**2 * var)))


def _by_key(tables: Iterable) -> dict:
    out = {}
    for t in tables:
        out[(t.setting.x, t.setting.y)] = t
    if set(out) != set(SETTING_KEYS):
        raise ValueError("need one table for each of the four setting pairs")
    return out


def analytic_result(counts_tables: Sequence[CountsTable], floor: bool = False) -> BellWignerResult:
    """Propagated errors per setting, combined in quadrature for S."""
    by = _by_key(counts_tables)
    exps = {}
    for k, c in by.items():
        sig = error_propagation(c, floor=floor)
        exps[k] = UncertainValue(expectation_from_counts(c), sig, sig)
    s = s_from_expectations({k: v.value for k, v in exps.items()})
    sig_s = float(np.sqrt(sum(v.sigma_plus**2 for v in exps.values())))
    return BellWignerResult(exps, UncertainValue(s, sig_s, sig_s), "analytic")


def exact_result(tables: Sequence[ProbabilityTable]) -> BellWignerResult:
    by = _by_key(tables)
    exps = {k: UncertainValue(expectation(t)) for k, t in by.items()}
    s = s_from_expectations({k: v.value for k, v in exps.items()})
    return BellWignerResult(exps, UncertainValue(s), "exact")


def per_setting_estimator(counts_tables: Sequence[CountsTable]) -> Callable:
    """Vectorised estimator: (R, 4 * 16) count replicas -> (R, 4) expectations
    in SETTING_KEYS order, each normalised by its own setting total."""
    by = _by_key(counts_tables)
    sizes = [len(by[k].counts) for k in SETTING_KEYS]
    lams = [by[k].products for k in SETTING_KEYS]
    bounds = np.cumsum([0] + sizes)

    def estimate(n: np.ndarray) -> np.ndarray:
        out = np.empty((n.shape[0], 4))
        for j in range(4):
            block = n[:, bounds[j]:bounds[j + 1]]
            with np.errstate(invalid="ignore", divide="ignore"):
                out[:, j] = block @ lams[j] / block.sum(axis=1)
        return out

    return estimate


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BW_SIM_THREADS", "1")))
    except ValueError:
        return 1


def monte_carlo_uncertainty(counts_tables: Sequence[CountsTable], samples: int = 100_000,
                            rng_seed=0, estimator: Callable | None = None
                            ) -> BellWignerResult:
    """Poisson resampling of every observed count; percentile intervals.

    Replicas are generated in fixed-size chunks, each with its own child of
    ``SeedSequence(rng_seed)``, so the result does not depend on how many
    threads (``BW_SIM_THREADS``) evaluate them.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 Monte-Carlo samples")
    by = _by_key(counts_tables)
    for c in by.values():
        if c.total == 0:
            raise ValueError("all-zero counts table")
    observed = np.concatenate([by[k].array for k in SETTING_KEYS])
    estimator = estimator or per_setting_estimator(counts_tables)

    n_chunks = -(-samples // MC_CHUNK)
    seeds = _seed_sequence(rng_seed).spawn(n_chunks)
    sizes = [min(MC_CHUNK, samples - i * MC_CHUNK) for i in range(n_chunks)]

    def run(i: int) -> np.ndarray:
        rng = np.random.default_rng(seeds[i])
        replicas = rng.poisson(observed, size=(sizes[i], observed.size)).astype(float)
        return estimator(replicas)

    workers = min(_threads(), n_chunks)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, range(n_chunks)))
    else:
        chunks = [run(i) for i in range(n_chunks)]
    reps = np.concatenate(chunks)
    reps_s = reps[:, 0] + reps[:, 1] + reps[:, 2] - reps[:, 3]

    centre = estimator(observed[None, :])[0]
    exps = {}
    for j, k in enumerate(SETTING_KEYS):
        exps[k] = _interval(float(centre[j]), reps[:, j])
    s_val = s_from_expectations({k: v.value for k, v in exps.items()})
    return BellWignerResult(exps, _interval(s_val, reps_s), "monte_carlo")


def _interval(value: float, replicas: np.ndarray) -> UncertainValue:
    lo, hi = np.nanpercentile(replicas, SIGMA_PERCENTILES)
    return UncertainValue(value, max(float(hi) - value, 0.0), max(value - float(lo), 0.0))


# -- local hidden variables -------------------------------------------------

def lhv_max_table() -> list[tuple[tuple[int, int, int, int], int]]:
    """S for each deterministic assignment (a0, a1, b0, b1) in {+1, -1}^4."""
    rows = []
    for a0, a1, b0, b1 in itertools.product((1, -1), repeat=4):
        rows.append(((a0, a1, b0, b1), a1 * b1 + a1 * b0 + a0 * b1 - a0 * b0))
    return rows


def lhv_bound() -> int:
    return max(s for _, s in lhv_max_table())


def binary_marginals(tables: Sequence[ProbabilityTable], tol: float = 1e-9,
                     coarse_grain: bool = False) -> tuple[dict, float]:
    """Collapse each table onto eigenvalues +-1, giving 2x2 arrays indexed
    [alice (+1, -1), bob (+1, -1)].

    Mass on eigenvalue-0 outcomes must be below ``tol`` unless
    ``coarse_grain`` is set, in which case it is dropped, the remainder
    renormalised and the largest dropped mass returned.
    """
    out, dropped = {}, 0.0
    for k, t in _by_key(tables).items():
        grid = np.zeros((2, 2))
        zero = 0.0
        for e in t.entries:
            if e.alice_value == 0 or e.bob_value == 0:
                zero += e.probability
                continue
            grid[int(e.alice_value < 0), int(e.bob_value < 0)] += e.probability
        if zero > tol and not coarse_grain:
            raise ValueError(f"setting {k} has {zero:.3g} mass on eigenvalue-0 outcomes")
        dropped = max(dropped, zero)
        out[k] = grid / grid.sum()
    return out, dropped


def no_signalling_report(tables: Sequence[ProbabilityTable]) -> dict:
    """Largest change of one party's outcome marginal under the other's setting."""
    by = _by_key(tables)
    alice = max(
        float(np.max(np.abs(by[(x, 0)].grid().sum(axis=1) - by[(x, 1)].grid().sum(axis=1))))
        for x in (0, 1)
    )
    bob = max(
        float(np.max(np.abs(by[(0, y)].grid().sum(axis=0) - by[(1, y)].grid().sum(axis=0))))
        for y in (0, 1)
    )
    return {"alice": alice, "bob": bob, "max": max(alice, bob)}


def chsh_variants(exps: dict) -> list[float]:
    """The eight CHSH expressions: minus sign on each term, both overall signs."""
    e = [exps[k] for k in SETTING_KEYS]
    out = []
    for minus in range(4):
        s = sum(v if i != minus else -v for i, v in enumerate(e))
        out += [s, -s]
    return out


def fine_lhv_membership(tables: Sequence[ProbabilityTable], tol: float = 1e-9,
                        coarse_grain: bool = False) -> bool:
    """True iff the binary statistics admit a local joint distribution:
    no-signalling within ``tol`` and all eight CHSH expressions <= 2 + tol."""
    grids, _ = binary_marginals(tables, tol, coarse_grain)
    for x in (0, 1):
        if np.max(np.abs(grids[(x, 0)].sum(axis=1) - grids[(x, 1)].sum(axis=1))) > tol:
            return False
    for y in (0, 1):
        if np.max(np.abs(grids[(0, y)].sum(axis=0) - grids[(1, y)].sum(axis=0))) > tol:
            return False
    signs = np.array([[1, -1], [-1, 1]])
    exps = {k: float(np.sum(signs * g)) for k, g in grids.items()}
    return max(chsh_variants(exps)) <= 2 + tol


# -- CSV --------------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def counts_to_csv(counts_tables: Sequence[CountsTable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in counts_tables:
        for (oa, ob, va, vb), n in zip(c.outcomes, c.counts):
            w.writerow([c.setting.x, c.setting.y, oa, ob, _fmt(va), _fmt(vb), n])
    return buf.getvalue()


def counts_from_csv(text: str, variant: str = "main") -> list[CountsTable]:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or tuple(rows[0].keys()) != CSV_COLUMNS:
        raise ValueError(f"expected columns {CSV_COLUMNS}")
    grouped: dict[tuple[int, int], list] = {}
    for r in rows:
        key = (int(r["setting_x"]), int(r["setting_y"]))
        grouped.setdefault(key, []).append(r)
    out = []
    for s in all_settings(variant):
        rs = grouped.get((s.x, s.y), [])
        outcomes = tuple((r["outcome_a"], r["outcome_b"], float(r["eigenvalue_a"]),
                          float(r["eigenvalue_b"])) for r in rs)
        out.append(CountsTable(s, outcomes, tuple(int(r["count"]) for r in rs)))
    return out


def probabilities_to_csv(tables: Sequence[ProbabilityTable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS[:-1] + ("probability",))
    for t in tables:
        for e in t.entries:
            w.writerow([t.setting.x, t.setting.y, e.alice, e.bob,
                        _fmt(e.alice_value), _fmt(e.bob_value), _fmt(e.probability)])
    return buf.getvalue()
