"""Command line front end.

Subcommands:
  min-duration     shortest training lengths for a problem size
  verify-noiseless exact-recovery round trip on random channels
  sweep            config-driven Monte Carlo NMSE sweep with CSV output
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import benchmark as bm
from .channels import CorrelationSpec, SystemDims
from .harness import (derive_seed, draw_channels, load_config,
                      run_proposed_trial, run_sweep, write_csv)
from .lmmse import build_covariances
from .schedules import build_schedule, min_durations


def _add_dims_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--m", type=int, required=True, help="BS antennas")
    parser.add_argument("--n", type=int, required=True, help="IRS elements")
    parser.add_argument("--k", type=int, required=True, help="users")


def cmd_min_duration(args) -> int:
    dims = SystemDims(M=args.m, N=args.n, K=args.k)
    tau1, tau2, total = min_durations(dims)
    print(f"phase1 = {tau1}")
    print(f"phase2 = {tau2}")
    print(f"total  = {total}")
    print(f"baseline_total = {bm.benchmark_min_duration(dims)}")
    return 0


def cmd_verify_noiseless(args) -> int:
    dims = SystemDims(M=args.m, N=args.n, K=args.k)
    spec = CorrelationSpec.exponential(dims, rho=0.5)
    tau1, tau2, _ = min_durations(dims)
    tol = 1e-8
    worst = 0.0
    for trial in range(args.trials):
        ch_seed = derive_seed(args.seed, 0, trial)
        ch, casc, _ = draw_channels(dims, spec, ch_seed)
        sched = build_schedule(dims, tau1, tau2, pilot_power=1.0,
                               seed=derive_seed(args.seed, 2, trial))
        est, true = run_proposed_trial(ch, casc, sched, 0.0, None,
                                       derive_seed(args.seed, 1, trial))
        err = np.linalg.norm(est - true) / np.linalg.norm(true)
        bsched = bm.build_benchmark_schedule(
            dims, pilot_power=1.0, seed=derive_seed(args.seed, 3, trial))
        cov = build_covariances(spec, np.ones(dims.K, dtype=np.complex128), 1.0)
        best, btrue = bm.run_benchmark_trial(ch, casc, bsched, 0.0, cov,
                                             derive_seed(args.seed, 1, trial))
        berr = np.linalg.norm(best - btrue) / np.linalg.norm(btrue)
        worst = max(worst, err, berr)
        print(f"trial {trial}: antenna-scheme rel err {err:.3e}, "
              f"baseline rel err {berr:.3e}")
    ok = worst <= tol
    print(f"{'PASS' if ok else 'FAIL'}: worst relative error {worst:.3e} "
          f"(tolerance {tol:g})")
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    rows = run_sweep(cfg, out_csv=None, threads=args.threads,
                     noiseless_debug=args.noiseless_debug)
    if args.out:
        write_csv(rows, args.out)
        print(f"wrote {len(rows)} rows to {args.out}")
    for r in rows:
        print(f"{r.scheme:18s} total={r.total_pilots:4d} "
              f"(tau1={r.tau1}, tau2={r.tau2}) "
              f"nmse={r.nmse_mean:.6e} +- {r.nmse_stderr:.1e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irsce",
        description="IRS-assisted uplink cascaded channel estimation: "
                    "training design, recovery, and NMSE benchmarking")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("min-duration",
                       help="minimum training durations for a problem size")
    _add_dims_args(p)
    p.set_defaults(func=cmd_min_duration)

    p = sub.add_parser("verify-noiseless",
                       help="exact-recovery round trip on random channels")
    _add_dims_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=3)
    p.set_defaults(func=cmd_verify_noiseless)

    p = sub.add_parser("sweep", help="run a Monte Carlo NMSE sweep")
    p.add_argument("--config", required=True, help="config file path")
    p.add_argument("--out", default=None, help="output CSV path")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--noiseless-debug", action="store_true",
                   help="force zero noise (exact-recovery smoke test)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
