"""Command-line reproducibility harness.

    harness synth --levels 21 --b-below 1.5 --b-above 0.5 --boundary 10 \
        --noise 0.01 --seed 42 --out campaign.csv
    harness repeat --server "labgate-server --data-dir data" \
        --call call.json --n 4 --out report/
    harness contrast --campaign campaign.csv

Exit code 0 iff every assertion of the invoked experiment holds.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from labgate.harness.runner import run_contrast, run_repeat
from labgate.harness.synth import SyntheticSpec, generate_campaign


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_levels=args.levels, b_below=args.b_below, b_above=args.b_above,
        boundary_uW=args.boundary, noise_rel=args.noise, rng_seed=args.seed,
        a=args.prefactor, fwhm_eV=args.fwhm, profile_kind=args.profile)
    csv_bytes, truth_bytes = generate_campaign(spec)
    out = Path(args.out)
    out.write_bytes(csv_bytes)
    truth_path = out.parent / (out.name.removesuffix(".csv") + ".truth.txt")
    truth_path.write_bytes(truth_bytes)
    print(f"wrote {out} ({args.levels} levels) and {truth_path}")
    return 0


def _cmd_repeat(args) -> int:
    call = json.loads(Path(args.call).read_text("utf-8"))
    out_dir = Path(args.out) if args.out else None
    report = run_repeat(args.server, call, n=args.n, out_dir=out_dir,
                        parallel=args.parallel)
    for i, (h, t) in enumerate(zip(report.hashes, report.timings_s)):
        print(f"run {i}: sha256 {h}  ({t:.2f}s)")
    print(f"identical: {report.identical}")
    if report.b_values:
        print(f"b values: {list(report.b_values)}")
        print(f"sigma_b across runs: {report.sigma_b_across_runs}")
        print(f"intensity spread: {report.intensity_spread_pct:.6f}%")
    return 0 if report.identical else 1


def _cmd_contrast(args) -> int:
    report = run_contrast(Path(args.campaign).read_bytes(), boundary_uW=args.boundary)
    print(f"b (voigt pipeline):      {report.b_primary}")
    print(f"b (lorentzian pipeline): {report.b_alternate}")
    print(f"delta_b: {report.delta_b}  (fit sigma_b {report.sigma_b_fit})")
    print(f"primary deterministic:   {report.primary_deterministic}")
    print(f"alternate deterministic: {report.alternate_deterministic}")
    ok = report.primary_deterministic and report.alternate_deterministic
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="harness",
                                     description="Reproducibility harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic campaign CSV + truth sidecar")
    p.add_argument("--levels", type=int, default=21)
    p.add_argument("--b-below", type=float, default=1.5)
    p.add_argument("--b-above", type=float, default=0.5)
    p.add_argument("--boundary", type=float, default=10.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--prefactor", type=float, default=1000.0)
    p.add_argument("--fwhm", type=float, default=0.05)
    p.add_argument("--profile", default="voigt",
                   choices=("gaussian", "lorentzian", "voigt"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("repeat", help="replay one call against fresh server processes")
    p.add_argument("--server", required=True, help="server command line")
    p.add_argument("--call", required=True, help="JSON file with {tool, args}")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--out", default=None, help="directory for per-run artifacts")
    p.add_argument("--parallel", action="store_true",
                   help="launch the runs concurrently (compared after all finish)")
    p.set_defaults(func=_cmd_repeat)

    p = sub.add_parser("contrast", help="voigt vs lorentzian methodology contrast")
    p.add_argument("--campaign", required=True)
    p.add_argument("--boundary", type=float, default=10.0)
    p.set_defaults(func=_cmd_contrast)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
