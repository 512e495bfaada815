"""Command-line entry point: ``bellwigner {ideal,sample,loophole,verify}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .circuit import VARIANTS
from .loopholes import CHSH_ETA_THRESHOLD
from .pipeline import ConfigError, ExperimentConfig, parse_eta_grid, run_ideal, run_loophole, run_sample
from .verify import FAULTS, run_checks

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3

log = logging.getLogger("bellwigner")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, total_events=args.events, variant=args.variant,
                              output_dir=args.out, mc_samples=args.mc_samples)


def _summary(report) -> dict:
    best = report.monte_carlo or report.exact
    out = {"variant": report.config.variant, "S": best.S.value,
           "sigma_plus": best.S.sigma_plus, "sigma_minus": best.S.sigma_minus}
    if report.analytic is not None:
        out["sigma_analytic"] = report.analytic.S.sigma_plus
        out["sigma_distance"] = report.sigma_distance
    return out


def cmd_ideal(args) -> int:
    cfg = _config(args)
    report = run_ideal(cfg)
    report.write(cfg.output_dir)
    print(json.dumps(_summary(report)))
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = _config(args)
    report = run_sample(cfg)
    report.write(cfg.output_dir)
    print(json.dumps(_summary(report)))
    return EXIT_OK


def cmd_loophole(args) -> int:
    cfg = _config(args)
    curve = run_loophole(parse_eta_grid(args.eta_grid))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "efficiency.csv").write_text(curve.to_csv())
    print(f"threshold {curve.threshold:.4f}")
    print(f"chsh_reference {CHSH_ETA_THRESHOLD:.4f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    tol = {}
    for item in args.tol:
        name, _, value = item.partition("=")
        try:
            tol[name] = float(value)
        except ValueError:
            raise ConfigError(f"bad tolerance override {item!r}") from None
    try:
        results = run_checks(tol, args.inject_fault, skip=args.skip)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    if failed:
        print("failed: " + ", ".join(r.name for r in failed), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--events", type=int, help="total six-fold coincidence events")
    common.add_argument("--variant", choices=VARIANTS)
    common.add_argument("--out", help="output directory")
    common.add_argument("--mc-samples", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bellwigner", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ideal", parents=[common], help="exact probabilities and S").set_defaults(func=cmd_ideal)
    sub.add_parser("sample", parents=[common], help="Poisson-sampled campaign").set_defaults(func=cmd_sample)
    lp = sub.add_parser("loophole", parents=[common], help="S versus detection efficiency")
    lp.add_argument("--eta-grid", default="0.8:1.0:0.01", help="start:stop:step")
    lp.set_defaults(func=cmd_loophole)
    vp = sub.add_parser("verify", parents=[common], help="run the self-check suite")
    vp.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE")
    vp.add_argument("--skip", action="append", default=[], metavar="CHECK")
    vp.add_argument("--inject-fault", choices=FAULTS, help=argparse.SUPPRESS)
    vp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
