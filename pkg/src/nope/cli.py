"""Command-line entry point.

``nope sweep --config FILE`` runs a BER sweep and writes CSV;
``nope golden`` dumps fixed-point golden vectors for one random problem.
Exit status is 0 on success and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .fixedpoint.datapath import DEFAULT_CONFIG, scale_and_quantize_inputs
from .fixedpoint.golden import nope_golden_records, write_golden
from .harness import ConfigError, SweepConfig, draw_trials, emit_plot_script, load_config, run_sweep, write_csv
from .model import make_constellation, noise_variance_for_snr
from .mvu import format_trace, layout_blocks, run_solo

log = logging.getLogger("nope")

EXIT_OK = 0
EXIT_CONFIG = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nope", description="NOPE equalizer simulations")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sweep", help="run a Monte Carlo BER sweep")
    s.add_argument("--config", required=True, type=Path, help="flat key = value config file")
    s.add_argument("--snr-db", nargs="+", help="override snr_db")
    s.add_argument("--constellation", help="override constellation")
    s.add_argument("--equalizers", nargs="+", help="override equalizers")
    s.add_argument("--seed", help="override seed")
    s.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    s.add_argument("--trace", action="store_true", help="also write the MVU/EU cycle trace of the first trial")
    s.add_argument("--plot", action="store_true", help="also write a matplotlib script next to the CSV")

    g = sub.add_parser("golden", help="write fixed-point golden vectors for one random 64x16 problem")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--snr-db", type=float, default=10.0)
    g.add_argument("--constellation", default="QAM16")
    g.add_argument("--t-max", type=int, default=5)
    return p


def _first_problem(cfg, snr_db: float):
    batch = draw_trials(cfg, 0, 1)
    c = make_constellation(cfg.constellation)
    y = batch.H[0] @ batch.x[0]
    if cfg.noise:
        y = y + np.sqrt(noise_variance_for_snr(snr_db, cfg.dims, c.energy)) * batch.w[0]
    return batch.H[0], y


def _sweep(args) -> int:
    overrides = {}
    if args.snr_db:
        overrides["snr_db"] = " ".join(args.snr_db)
    if args.constellation:
        overrides["constellation"] = args.constellation
    if args.equalizers:
        overrides["equalizers"] = " ".join(args.equalizers)
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = load_config(args.config, overrides)
    if args.trace and (cfg.dims.B, cfg.dims.U) != (64, 16):
        raise ConfigError("--trace needs dims = 64x16")
    if args.plot and not args.out:
        raise ConfigError("--plot needs --out")

    points = run_sweep(cfg, progress=lambda p: log.info("%s %.2f dB: %d errors / %d trials", p.equalizer, p.snr_db, p.bit_errors, p.trials))
    if args.out:
        write_csv(points, args.out)
        if args.plot:
            emit_plot_script(args.out)
    else:
        write_csv(points, sys.stdout)

    if args.trace:
        H, y = _first_problem(cfg, cfg.snr_db[0])
        Hq, yq, _ = scale_and_quantize_inputs(H, y, DEFAULT_CONFIG)
        _, events, total = run_solo(layout_blocks(Hq), yq, cfg.iterations)
        text = f"# cycle unit problem phase op\n# total_cycles {total}\n" + format_trace(events)
        if args.out:
            args.out.with_suffix(".trace").write_text(text)
        else:
            sys.stdout.write(text)
    return EXIT_OK


def _golden(args) -> int:
    cfg = SweepConfig(constellation=args.constellation, seed=args.seed, snr_db=(args.snr_db,))
    if args.t_max < 1:
        raise ConfigError("--t-max must be positive")
    H, y = _first_problem(cfg, args.snr_db)
    Hq, yq, _ = scale_and_quantize_inputs(H, y, DEFAULT_CONFIG)
    write_golden(nope_golden_records(Hq, yq, args.t_max), args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _sweep(args) if args.command == "sweep" else _golden(args)
    except ConfigError as e:
        print(f"nope: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
