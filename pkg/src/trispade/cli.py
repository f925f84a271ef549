"""Command-line entry point.

Subcommands::

    trispade entropy-sweep    [-c config.yaml] [-o DIR] [--seed N] [--workers N]
    trispade threshold-sweep  ...
    trispade latency-ensemble ...
    trispade verify           [-c config.yaml]

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

from . import channels, experiments, report, scene, sim
from .config import (ExperimentConfig, load_config, make_scenario,
                     serialize_config_json)
from .detect import threshold_for_pfa
from .errors import ConfigError, NumericsError
from .optics import Psf, mode_probabilities

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VERIFY = 4


def _load(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig()
    if getattr(args, "output", None) is not None:
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(
            cfg.output, directory=args.output))
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, detector=dataclasses.replace(
            cfg.detector, master_seed=args.seed))
    if getattr(args, "workers", None) is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    if getattr(args, "dump_channels", False):
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(
            cfg.output, dump_channels=True))
    return cfg


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _provenance(cfg: ExperimentConfig, out: Path) -> None:
    if "json" in cfg.output.formats:
        (out / "resolved_config.json").write_text(serialize_config_json(cfg),
                                                  encoding="utf-8")


def _dump_channels(cfg: ExperimentConfig, out: Path, gamma: float) -> None:
    if not cfg.output.dump_channels:
        return
    sc = make_scenario(cfg, gamma)
    for receiver in cfg.receivers:
        cm = experiments.build_channels(cfg, sc, receiver)
        report.write_channels_csv(out / f"channels_{receiver}_gamma{gamma:g}.csv", cm)


def cmd_entropy_sweep(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    result = experiments.entropy_sweep(cfg)
    if "csv" in cfg.output.formats:
        report.write_csv(out / "entropy_sweep.csv", report.ENTROPY_COLUMNS,
                         result["rows"], report.ENTROPY_HEADER)
        report.write_csv(out / "entropy_slopes.csv", report.SLOPE_COLUMNS,
                         result["slopes"], report.SLOPE_HEADER)
    if "svg" in cfg.output.formats:
        report.render_entropy_sweep(out / "entropy_sweep.svg", result["rows"])
    _provenance(cfg, out)
    _dump_channels(cfg, out, cfg.scenario.gamma)
    for s in result["slopes"]:
        print(f"slope[{s['series']}] = {s['slope']:.3f} over "
              f"gamma in [{s['window_lo']:g}, {s['window_hi']:g}]")
    print(f"wrote {out / 'entropy_sweep.csv'}")
    return EXIT_OK


def cmd_threshold_sweep(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    result = experiments.threshold_sweep(cfg)
    if "csv" in cfg.output.formats:
        report.write_csv(out / "threshold_sweep.csv", report.THRESHOLD_COLUMNS,
                         result["rows"], report.THRESHOLD_HEADER)
    if "svg" in cfg.output.formats:
        report.render_threshold_sweep(out / "threshold_sweep.svg", result["rows"])
    _provenance(cfg, out)
    _dump_channels(cfg, out, cfg.scenario.gamma)
    for r in result["rows"]:
        lat = "censored" if r["mean_latency"] is None else f"{r['mean_latency']:.2f}"
        print(f"h={r['h']:g}: latency={lat} prediction="
              f"{'-' if r['prediction'] is None else format(r['prediction'], '.2f')}")
    print(f"wrote {out / 'threshold_sweep.csv'}")
    return EXIT_OK


def cmd_latency_ensemble(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    result = experiments.latency_ensemble(cfg)
    if "csv" in cfg.output.formats:
        report.write_csv(out / "latency_ensemble.csv", report.LATENCY_COLUMNS,
                         result["rows"], report.LATENCY_HEADER)
    if "svg" in cfg.output.formats:
        report.render_latency_ensemble(out / "latency_ensemble.svg", result["rows"])
    _provenance(cfg, out)
    for gamma in cfg.latency_ensemble.gamma_grid:
        _dump_channels(cfg, out, gamma)
    for r in result["rows"]:
        lat = "censored" if r["mean_latency"] is None else f"{r['mean_latency']:.2f}"
        print(f"gamma={r['gamma']:g} {r['receiver']}: latency={lat} "
              f"tau*={r['tau_star']:.2f}")
    print(f"wrote {out / 'latency_ensemble.csv'}")
    return EXIT_OK


def _verify_checks(cfg: ExperimentConfig):
    """Fast self-consistency checks (seconds); the full gate lives in pytest."""
    n = 500.0
    psf = Psf()

    def corner_scenario(gamma):
        pre = scene.uniform_square(1.0, 128)
        post = scene.from_points([[0.5, 0.5], [0.5, -0.5], [-0.5, 0.5], [-0.5, -0.5]])
        return channels.Scenario(pre, post, gamma, n, psf)

    def two_point_scenario(gamma):
        pre = scene.from_points([[0.5, 0.0], [-0.5, 0.0]])
        post = scene.from_points([[0.0, 0.0]])
        return channels.Scenario(pre, post, gamma, n, psf)

    sq = corner_scenario(0.2)
    m1 = scene.moments(sq.pre)
    expected = 2 * 0.25 * (m1.mx2 - 0.25 + 0.25 * math.log(0.25 / m1.mx2)) * 0.2 ** 2
    got = channels.qre_leading_order(sq)
    yield ("leading-order QRE matches the closed-form constant",
           abs(got - expected) <= 1e-9 * expected)

    tp = two_point_scenario(0.05)
    lo = channels.qre_leading_order(tp)
    num = channels.qre_numerical(tp, 8)
    yield ("numerical QRE within 2% of leading order at gamma=0.05",
           abs(num - lo) <= 0.02 * lo)

    ok = True
    for gamma in (0.05, 0.1):
        sc = corner_scenario(gamma)
        re = channels.poisson_re_per_step(channels.trispade_channels(sc)) / n
        ok &= abs(re - channels.qre_leading_order(sc)) <= 0.05 * channels.qre_leading_order(sc)
    yield ("mode sorter per-photon RE within 5% of the quantum limit", ok)

    point = channels.Scenario(scene.from_points([[0.0, 0.0]]),
                              scene.from_points([[0.0, 0.0]]), 0.25, n, psf)
    cm = channels.trispade_channels(point)
    yield ("centered point source puts all flux in the matched mode",
           abs(cm.lambda_pre[0] - n) < 1e-9 and cm.lambda_pre[1] == 0
           and cm.lambda_pre[2] == 0)
    yield ("identical objects carry zero information",
           channels.poisson_re_per_step(cm) == 0.0)

    rec = sim.run_trial(cm, 5.0, 10, 200, 7)
    yield ("identical objects never trigger the detector", rec.censored)

    p = mode_probabilities(psf, [1.0, 0.0])
    yield ("mode probabilities form a simplex",
           abs(sum(p) - 1) < 1e-9 and all(v >= 0 for v in p)
           and abs(p[0] - math.exp(-0.25)) < 1e-12)

    yield ("threshold rule reproduces ln(window/pfa)",
           abs(threshold_for_pfa(0.001, 25) - math.log(25000)) < 1e-12)

    try:
        scene.ObjectModel(positions=[[0.2, 0.0]], weights=[1.0])
        yield ("off-centroid object construction is rejected", False)
    except ValueError:
        yield ("off-centroid object construction is rejected", True)


def cmd_verify(cfg: ExperimentConfig) -> int:
    failures = 0
    for name, ok in _verify_checks(cfg):
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        failures += 0 if ok else 1
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_VERIFY
    print("all checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trispade",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("entropy-sweep", "relative entropies vs gamma"),
                            ("threshold-sweep", "latency and false alarms vs threshold"),
                            ("latency-ensemble", "mean latency vs gamma per receiver"),
                            ("verify", "fast self-checks")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", type=Path, default=None,
                       help="YAML experiment config (defaults applied when omitted)")
        if name != "verify":
            p.add_argument("-o", "--output", type=str, default=None,
                           help="output directory override")
            p.add_argument("--seed", type=int, default=None,
                           help="master seed override")
            p.add_argument("--workers", type=int, default=None,
                           help="trial worker count override")
            p.add_argument("--dump-channels", action="store_true",
                           help="also export channel rate tables as CSV")
    return parser


_COMMANDS = {
    "entropy-sweep": cmd_entropy_sweep,
    "threshold-sweep": cmd_threshold_sweep,
    "latency-ensemble": cmd_latency_ensemble,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
