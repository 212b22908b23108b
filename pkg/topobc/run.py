import argparse
import logging
import os
import shlex
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

import pandas as pd
from dotenv import load_dotenv

from topobc import __version__
from topobc.bounds import (
    PolicyId,
    achievable_gdof,
    outer_bound,
    outer_bound_general,
    recognize_policy,
)
from topobc.harness import (
    ALPHA_GRID,
    DEFAULT_SNR_DB,
    DEFAULT_TOLERANCE,
    DEFAULT_TRIALS,
    SCHEMES,
    SweepConfig,
    slope_standard_error,
    sweep,
    verify_against_claims,
    worker_count,
)
from topobc.persistence import ConfigError, load_distribution, render_csv, write_csv_with_manifest
from topobc.schemes import DEFAULT_HORIZON, Fidelity, NonIntegerPhases, Scheme4Variant, Scheme5Subcase, UnpairableSchedule
from topobc.state_model import as_fraction, parse_alpha

# ======================
# CLI CONFIGURATION
# ======================

LOG_LEVEL_ENV = "TOPO_BC_LOG_LEVEL"
LOG_FILE_ENV = "TOPO_BC_LOG_FILE"
DEFAULT_LOG_FILE = "logs/topobc.log"
DEFAULT_ALPHA = "1/2"
DEFAULT_FIG3_STEP = "0.05"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_VERIFY = 3

SIMULATE_COLUMNS = ["snr_db", "rho", "rate_u1", "rate_u2", "rate_sum", "se_sum"]

# scheme column -> policy whose closed form it plots, and the simulated scheme behind it
FIG3_CURVES = {
    "mat": (PolicyId.MAT_FIXED, "mat"),
    "su": (PolicyId.SINGLE_USER, "su"),
    "tsm1": (PolicyId.TSM3_DD_FIXED_LB, "tsm3"),
    "tsm2": (PolicyId.TSM4_DD_ALT, "tsm4"),
}

logger = logging.getLogger(__name__)


def setup_logging() -> None:
    log_file = Path(os.getenv(LOG_FILE_ENV, DEFAULT_LOG_FILE))
    log_file.parent.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=os.getenv(LOG_LEVEL_ENV, "INFO").upper(),
        format="%(asctime)s | %(levelname)s | %(message)s",
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler(),
        ],
    )


# ======================
# HELPERS
# ======================

def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected a comma list of numbers, got {text!r}") from e


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, Fraction) and x.denominator != 1:
        return f"{float(x):.6f} ({x})"
    return f"{float(x):.6f}"


def _manifest(args: argparse.Namespace, argv: List[str], **params) -> dict:
    manifest = {
        "command": args.command,
        "tool_version": __version__,
        "wall_clock": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "argv": shlex.join(argv),
    }
    manifest.update({k: v for k, v in params.items() if v is not None})
    return manifest


def _emit(args, argv, table: pd.DataFrame, footer=(), **params) -> None:
    if args.out:
        write_csv_with_manifest(args.out, _manifest(args, argv, out=args.out, **params), table, footer)
    else:
        sys.stdout.write(render_csv(table, footer))


# ======================
# COMMANDS
# ======================

def cmd_bounds(args, argv) -> int:
    dist = load_distribution(args.dist)
    report = outer_bound(dist)
    general = outer_bound_general(dist)

    print(f"Distribution: {dist.describe()}")
    for name, value in (("d1", report.d1), ("d2", report.d2), ("d3", report.d3), ("d4", report.d4)):
        if value is not None:
            print(f"{name}: {_fmt(value)}")
    print(f"d_min: {_fmt(report.d_min)}")
    if report.d1 is not None:
        print(f"d_min (general form only): {_fmt(general.d_min)}")

    policy = recognize_policy(dist)
    if policy is None:
        print("policy: none recognized")
        return EXIT_OK

    achievable = achievable_gdof(policy, dist.alpha)
    print(
        f"policy: {policy.value} ({achievable.optimality.value}) "
        f"achievable {_fmt(achievable.value)} gap {_fmt(report.d_min - achievable.value)}"
    )
    return EXIT_OK


def _scheme_options(args) -> dict:
    options = {}
    if args.strong_user != 1:
        options["strong_user"] = args.strong_user
    if args.scheme == "tsm3":
        options["scale"] = args.scale
    if args.scheme == "tsm4":
        options["variant"] = Scheme4Variant(args.variant)
    if args.scheme == "tsm5":
        if args.subcase:
            options["subcase"] = Scheme5Subcase(args.subcase)
        else:
            options["horizon"] = args.horizon
    return options


def cmd_simulate(args, argv) -> int:
    if args.dist and args.scheme != "tsm5":
        raise ConfigError("--dist only applies to tsm5")

    options = _scheme_options(args)
    if args.dist:
        dist = load_distribution(args.dist)
        alpha = dist.alpha
        options["dist"] = dist
    elif args.scheme == "tsm3":
        alpha = as_fraction(args.alpha)  # phases need the exact value
    else:
        alpha = parse_alpha(args.alpha)

    config = SweepConfig(
        scheme=args.scheme,
        alpha=alpha,
        snr_points_db=tuple(args.snr_db),
        trials=args.trials,
        seed=args.seed,
        mode=Fidelity(args.mode),
        options=tuple(options.items()),
    )
    table, estimate = sweep(config, args.workers or worker_count())

    footer = [f"slope,,,,{estimate.slope:.6f},{estimate.residual_rms:.6f}"]
    _emit(
        args,
        argv,
        table[SIMULATE_COLUMNS],
        footer,
        scheme=args.scheme,
        alpha=config.alpha,
        config=args.dist,
        seed=args.seed,
        trials=args.trials,
        mode=config.mode.value,
        slope_se=f"{slope_standard_error(list(table['se_sum']), list(table['snr_db'])):.6f}",
    )
    logger.info(f"✅ {args.scheme} alpha={config.alpha}: slope {estimate.slope:.4f} (rms {estimate.residual_rms:.4f})")
    return EXIT_OK


def fig3_alphas(step) -> List[Fraction]:
    step = as_fraction(step)
    if not 0 < step <= 1:
        raise ValueError(f"step must lie in (0, 1], got {step}")
    alphas = []
    k = 0
    while k * step < 1:
        alphas.append(k * step)
        k += 1
    alphas.append(Fraction(1))
    return alphas


def fig3_table(step=DEFAULT_FIG3_STEP) -> pd.DataFrame:
    """Closed-form sum GDoF of MAT, SU and the two delayed-CSIT TSM schemes against alpha."""
    rows = []
    for alpha in fig3_alphas(step):
        row = {"alpha": float(alpha)}
        for column, (policy, _) in FIG3_CURVES.items():
            row[column] = float(achievable_gdof(policy, alpha).value)
        rows.append(row)
    return pd.DataFrame(rows)


def cmd_sweep_fig3(args, argv) -> int:
    table = fig3_table(args.step)

    if args.simulated:
        workers = args.workers or worker_count()
        for column, (_, scheme) in FIG3_CURVES.items():
            slopes = []
            for alpha in fig3_alphas(args.step):
                config = SweepConfig(scheme, alpha, tuple(args.snr_db), args.trials, args.seed)
                slopes.append(sweep(config, workers)[1].slope)
            table[f"{column}_sim"] = slopes

    _emit(args, argv, table, step=args.step, simulated=args.simulated, trials=args.trials if args.simulated else None)
    return EXIT_OK


def cmd_verify(args, argv) -> int:
    report = verify_against_claims(
        alpha_grid=ALPHA_GRID,
        tolerance=args.tolerance,
        trials=args.trials,
        seed=args.seed,
        snr_points_db=tuple(args.snr_db),
        workers=args.workers or worker_count(),
    )
    print(report.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    if args.out:
        write_csv_with_manifest(
            args.out,
            _manifest(args, argv, out=args.out, tolerance=args.tolerance, trials=args.trials, seed=args.seed),
            report,
        )

    failed = int((report["status"] != "PASS").sum())
    if failed:
        logger.error(f"❌ {failed}/{len(report)} claims failed")
        return EXIT_VERIFY
    logger.info(f"✅ All {len(report)} claims passed")
    return EXIT_OK


# ======================
# ARGUMENTS
# ======================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topobc", description="Topological MISO BC GDoF bounds and simulations")
    sub = parser.add_subparsers(dest="command", required=True)

    def sweep_flags(p):
        p.add_argument("--snr-db", type=_float_list, default=list(DEFAULT_SNR_DB))
        p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None)

    p = sub.add_parser("bounds", help="outer bounds and achievability for a state distribution")
    p.add_argument("--dist", required=True)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("simulate", help="Monte Carlo sweep of one scheme")
    p.add_argument("--scheme", required=True, choices=sorted(SCHEMES))
    p.add_argument("--alpha", default=DEFAULT_ALPHA)
    p.add_argument("--dist", default=None)
    p.add_argument("--mode", choices=[f.value for f in Fidelity], default=Fidelity.ANALYTIC.value)
    p.add_argument("--variant", choices=[v.value for v in Scheme4Variant], default=Scheme4Variant.WSW.value)
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    p.add_argument("--subcase", choices=[s.value for s in Scheme5Subcase], default=None)
    p.add_argument("--strong-user", type=int, choices=[1, 2], default=1)
    sweep_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep-fig3", help="sum GDoF of MAT, SU and TSM against alpha")
    p.add_argument("--step", default=DEFAULT_FIG3_STEP)
    p.add_argument("--simulated", action="store_true")
    sweep_flags(p)
    p.set_defaults(func=cmd_sweep_fig3)

    p = sub.add_parser("verify", help="check every scheme's slope against its claim")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    sweep_flags(p)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    load_dotenv()
    setup_logging()

    args = build_parser().parse_args(argv)
    logger.info(f"topobc {__version__} | {args.command} | {shlex.join(argv)}")

    try:
        return args.func(args, argv)
    except (ValueError, NonIntegerPhases, UnpairableSchedule) as e:
        logger.error(f"❌ Config error: {e}")
        return EXIT_CONFIG
    except Exception:
        logger.exception("Run failed")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
