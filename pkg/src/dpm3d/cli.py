"""Command-line entry point: ``dpm3d --test A --mode sd --n 36 ...``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import poisson
from .runner import MODES, TESTS, RunConfig, parse_config_file, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpm3d", description="Chemotaxis blow-up solver on a ball "
                                "using difference potentials on Cartesian grids.")
    p.add_argument("--config", help="key=value configuration file (flags override it)")
    p.add_argument("--test", choices=TESTS)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--n", type=int, help="cells per axis (single domain)")
    p.add_argument("--n1", type=int, help="cells per axis of the inner subdomain")
    p.add_argument("--n2", type=int, help="cells per axis of the outer subdomain")
    p.add_argument("--harmonics", type=int, help="zonal harmonics per term on the outer boundary")
    p.add_argument("--interface-harmonics", type=int, help="zonal harmonics per term on the interface")
    p.add_argument("--beta", type=int, choices=(0, 1), help="boundary extension order")
    p.add_argument("--t-final", type=float)
    p.add_argument("--dt", type=float, help="fixed time step (default: adaptive)")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--out", help="output directory for timeseries.csv and snapshots")
    p.add_argument("--snapshot-every", type=int)
    p.add_argument("--threads", type=int, help="FFT worker threads (default: DPM_THREADS or all cores)")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> RunConfig:
    values = parse_config_file(args.config) if args.config else {}
    for key, val in vars(args).items():
        if key in ("config", "verbose") or val is None:
            continue
        values[key] = val
    return RunConfig(**values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (ValueError, TypeError) as exc:
        print(f"dpm3d: error: {exc}", file=sys.stderr)
        return 2
    if cfg.threads is not None:
        poisson.set_workers(cfg.threads)

    def progress(sim, rec):
        if args.verbose:
            print(f"step {rec.step:6d} t={rec.t:.6e} dt={rec.dt:.3e} max_rho={rec.max_rho:.6e}",
                  flush=True)

    rep = run(cfg, callback=progress)
    last = rep.records[-1]
    print(f"termination={rep.cause} steps={rep.steps} t={rep.t:.9e} max_rho={last.max_rho:.9e} "
          f"rebuilds={rep.rebuilds} wall={rep.wall_time:.2f}s")
    if rep.bracket:
        print(f"stoppage between t={rep.bracket[0]:.9e} and t={rep.bracket[1]:.9e}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
