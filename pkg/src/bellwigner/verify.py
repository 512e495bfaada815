"""Self-check suite behind ``bellwigner verify``.

Each check returns ``(passed, detail)``. Tolerances live in ``TOLERANCES``
and can be overridden by name. ``fault`` injects a known defect so the suite
can be shown to catch it.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import circuit, loopholes, qcore, stats

TOLERANCES = {
    "exact": 1e-12,
    "eigen": 1e-10,
    "threshold": 1e-9,
    "mc_vs_analytic": 0.005,
    "sigma_low": 0.05,
    "sigma_high": 0.10,
    "s_low": 2.2,
    "s_high": 2.6,
    "mc_sigmas": 4.0,
}
FAULTS = ("four_photon_sign",)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


class _Context:
    def __init__(self, tol: dict, fault: str | None):
        self.tol = tol
        self.fault = fault

    def four_photon(self) -> qcore.Ket:
        psi = circuit.four_photon_state()
        if self.fault == "four_photon_sign":
            amps = np.array(psi.amplitudes)
            amps[int("0110", 2)] *= -1  # |hv>_{a alpha} |vh>_{b beta}
            psi = qcore.Ket(psi.labels, amps)
        return psi

    def tables(self, variant: str = "main"):
        psi = self.four_photon()
        return [circuit.outcome_probabilities(psi, s) for s in circuit.all_settings(variant)]


def _ideal_probabilities(ctx):
    hi, lo = (1 + 1 / math.sqrt(2)) / 4, (1 - 1 / math.sqrt(2)) / 4
    worst = 0.0
    for t in ctx.tables():
        for e in t.entries:
            target = 0.0 if e.product == 0 else min((hi, lo, 0.0), key=lambda v: abs(v - e.probability))
            worst = max(worst, abs(e.probability - target))
    return worst < ctx.tol["exact"], f"max deviation {worst:.2e}"


def _ideal_s(ctx):
    s = stats.exact_result(ctx.tables()).S.value
    return abs(s - 2 * math.sqrt(2)) < ctx.tol["exact"], f"S = {s:.15f}"


def _four_photon_norm(ctx):
    n2 = ctx.four_photon().norm2
    return abs(n2 - 1 / 16) < ctx.tol["exact"], f"squared norm {n2:.15f}"


def _four_photon_amplitudes(ctx):
    psi = ctx.four_photon().normalized()
    c, s = math.cos(math.pi / 8) / math.sqrt(2), math.sin(math.pi / 8) / math.sqrt(2)
    expected = {"hvvh": c, "vhhv": c, "hvhv": s, "vhvh": -s}
    worst = 0.0
    for bits in map("".join, itertools.product("hv", repeat=4)):
        worst = max(worst, abs(psi.amplitude(bits) - expected.get(bits, 0.0)))
    return worst < ctx.tol["exact"], f"max amplitude deviation {worst:.2e}"


def _eta_threshold(ctx):
    eta = loopholes.eta_threshold()
    ok = (abs(eta - loopholes.ETA_THRESHOLD_CLOSED_FORM) < ctx.tol["threshold"]
          and round(eta, 3) == 0.875 and round(loopholes.CHSH_ETA_THRESHOLD, 3) == 0.828)
    return ok, f"eta* = {eta:.12f}, CHSH reference {loopholes.CHSH_ETA_THRESHOLD:.6f}"


def _error_cross_validation(ctx, seeds: int = 20, samples: int = 100_000):
    tables = ctx.tables()
    in_band, worst_gap = 0, 0.0
    for seed in range(seeds):
        counts = stats.sample_campaign(tables, 1794, seed)
        a = stats.analytic_result(counts).S.sigma_plus
        mc = stats.monte_carlo_uncertainty(counts, samples, seed).S
        worst_gap = max(worst_gap, abs(mc.sigma_plus - a), abs(mc.sigma_minus - a))
        in_band += ctx.tol["sigma_low"] <= a <= ctx.tol["sigma_high"]
    ok = worst_gap < ctx.tol["mc_vs_analytic"] and in_band >= 16
    return ok, f"max |sigma_MC - sigma_analytic| = {worst_gap:.4f}, {in_band}/{seeds} in band"


def _lhv(ctx):
    bound = stats.lhv_bound()
    quantum = stats.fine_lhv_membership(ctx.tables())
    product = qcore.Ket.basis("hvhv", ("a", "alpha", "b", "beta"))
    classical = stats.fine_lhv_membership(
        [circuit.outcome_probabilities(product, s) for s in circuit.all_settings()])
    return bound == 2 and not quantum and classical, \
        f"max LHV S = {bound}, quantum local={quantum}, product local={classical}"


def _no_signalling(ctx):
    ideal = stats.no_signalling_report(ctx.tables())["max"]
    bad = ctx.tables()
    g = bad[0].grid().copy()
    g[0, :] = 0
    g[0, 0] = g.sum() / 3
    bad[0] = bad[0].with_probabilities(g.reshape(-1))
    flagged = stats.no_signalling_report(bad)["max"] > 1e-3
    return ideal < ctx.tol["exact"] and flagged, f"ideal discrepancy {ideal:.2e}, control flagged={flagged}"


def _variant_equivalence(ctx):
    main = stats.exact_result(ctx.tables("main")).S.value
    alt = stats.exact_result(ctx.tables("alt_observables")).S.value
    return abs(main - alt) < ctx.tol["exact"], f"|S_main - S_alt| = {abs(main - alt):.2e}"


def _noise_plausibility(ctx, seeds: int = 20):
    model = loopholes.NoiseModel.from_fidelities(0.987, 1 - 0.0316)
    tables = loopholes.apply_noise(model, ctx.tables())
    in_band = above = 0
    for seed in range(seeds):
        counts = stats.sample_campaign(tables, 1794, seed)
        r = stats.analytic_result(counts)
        in_band += ctx.tol["s_low"] <= r.S.value <= ctx.tol["s_high"]
        above += r.sigma_distance() > 2
    return in_band >= 18 and above >= 18, f"{in_band}/{seeds} S in band, {above}/{seeds} beyond 2 sigma"


def _inefficiency_sim(ctx):
    details, ok = [], True
    for i, eta in enumerate((0.7, 0.875, 1.0)):
        sim = loopholes.inefficiency_strategy_sim(eta, 10**6, 1000 + i)
        gap = abs(sim.value - loopholes.s_of_eta(eta))
        ok &= gap < ctx.tol["mc_sigmas"] * max(sim.sigma, 1e-15) or gap < 1e-12
        details.append(f"eta={eta}: {gap / max(sim.sigma, 1e-15):.2f} sigma")
    return ok, ", ".join(details)


def _metrics(ctx):
    t = ctx.tol["eigen"]
    singlet = circuit.bell_state("psi-", ("a", "b")).density_matrix()
    mixed = qcore.DensityMatrix.maximally_mixed(("a", "b"))
    rotated = circuit.resource_state().density_matrix()
    vals = (qcore.concurrence(singlet), qcore.purity(mixed),
            qcore.fidelity(singlet, singlet), qcore.concurrence(rotated))
    ok = (abs(vals[0] - 1) < t and abs(vals[1] - 0.25) < t and abs(vals[2] - 1) < t
          and abs(vals[3] - vals[0]) < t)
    return ok, "C(psi-)={:.12f} P(I/4)={:.12f} F={:.12f} C(rotated)={:.12f}".format(*vals)


CHECKS: dict[str, Callable] = {
    "ideal_probabilities": _ideal_probabilities,
    "ideal_s_value": _ideal_s,
    "four_photon_norm": _four_photon_norm,
    "four_photon_amplitudes": _four_photon_amplitudes,
    "eta_threshold": _eta_threshold,
    "error_cross_validation": _error_cross_validation,
    "lhv_oracle": _lhv,
    "no_signalling": _no_signalling,
    "variant_equivalence": _variant_equivalence,
    "noise_plausibility": _noise_plausibility,
    "inefficiency_simulation": _inefficiency_sim,
    "state_metrics": _metrics,
}


def run_checks(tolerances: dict | None = None, fault: str | None = None,
               only=None, skip=()) -> list[CheckResult]:
    tol = dict(TOLERANCES)
    for k, v in (tolerances or {}).items():
        if k not in tol:
            raise KeyError(f"unknown tolerance {k!r}")
        tol[k] = float(v)
    if fault is not None and fault not in FAULTS:
        raise KeyError(f"unknown fault {fault!r}")
    names = [n for n in CHECKS if (only is None or n in only) and n not in skip]
    for n in list(only or ()) + list(skip):
        if n not in CHECKS:
            raise KeyError(f"unknown check {n!r}")
    ctx = _Context(tol, fault)
    results = []
    for name in names:
        try:
            passed, detail = CHECKS[name](ctx)
        except Exception as exc:  # a crashing check is a failing check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail))
    return results
