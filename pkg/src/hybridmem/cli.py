"""Command line entry point: simulate, generate and compare."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import SCHEMES, ConfigError, RunConfig, load_generator_spec
from .report import emit_report, run_comparison
from .simulation import run_simulation
from .workload import TraceError, generate, write_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRACE = 3

HEADLINE = ("scheme", "passes", "accesses", "mean_latency_ns", "dynamic_energy_mJ",
            "nvm_writes", "lifetime_years", "bank_imbalance_final")


def _scheme(name: str) -> str:
    if name not in SCHEMES:
        raise ConfigError(f"scheme: unknown {name!r}, expected one of {', '.join(SCHEMES)}")
    return name


def _open_trace(cfg: RunConfig):
    try:
        return cfg.open_trace()
    except OSError as exc:
        raise TraceError(f"cannot read trace: {exc}") from None


def cmd_simulate(args) -> int:
    cfg = RunConfig.load(args.config)
    scheme = _scheme(args.scheme) if args.scheme else None
    cfg = cfg.with_overrides(scheme=scheme, seed=args.seed,
                             trace=str(Path(args.trace).resolve()) if args.trace else None)
    result = run_simulation(cfg, _open_trace(cfg))
    out = Path(args.out)
    emit_report(result, out)
    m = result.metrics
    print(json.dumps({k: m[k] for k in HEADLINE}, sort_keys=True))
    print(f"report written to {out}")
    return EXIT_OK


def cmd_generate(args) -> int:
    spec = load_generator_spec(args.spec)
    trace = generate(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        write_trace(trace, fh, certify=not args.no_certificate)
    print(f"{spec.kind}: {spec.n_pages} pages, {spec.n_passes} passes -> {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = RunConfig.load(args.config)
    schemes = [_scheme(s.strip()) for s in args.schemes.split(",") if s.strip()]
    if not schemes:
        raise ConfigError("--schemes: at least one scheme is required")
    rows, _ = run_comparison(cfg, schemes, args.out, trace=_open_trace(cfg))
    for row in rows:
        ratios = ", ".join(f"{k[:-6]}={row[k]:.3f}" if row[k] is not None else f"{k[:-6]}=n/a"
                           for k in row if k.endswith("_ratio"))
        print(f"{row['scheme']}: {ratios}")
    print(f"comparison written to {Path(args.out) / 'compare.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridmem", description="Hybrid DRAM/NVM memory management simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="replay one configuration and write a report")
    sim.add_argument("config", help="run configuration (YAML or JSON)")
    sim.add_argument("--trace", help="trace file replacing the configured workload")
    sim.add_argument("--out", default="out", help="report directory (default: out)")
    sim.add_argument("--scheme", help=f"override the scheme ({', '.join(SCHEMES)})")
    sim.add_argument("--seed", type=int, help="override the run seed")
    sim.set_defaults(func=cmd_simulate)

    gen = sub.add_parser("generate", help="render a synthetic workload to a trace file")
    gen.add_argument("spec", help="generator spec (YAML or JSON)")
    gen.add_argument("--out", required=True, help="trace file to write")
    gen.add_argument("--no-certificate", action="store_true",
                     help="skip the measured-property certificate in the header")
    gen.set_defaults(func=cmd_generate)

    cmp_ = sub.add_parser("compare", help="run one workload under several schemes")
    cmp_.add_argument("config", help="run configuration (YAML or JSON)")
    cmp_.add_argument("--schemes", required=True, help="comma-separated scheme names")
    cmp_.add_argument("--out", default="out", help="output directory (default: out)")
    cmp_.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE


if __name__ == "__main__":
    sys.exit(main())
