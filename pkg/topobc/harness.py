import logging
import math
import os
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from topobc.baselines import baseline_single_user, baseline_zero_forcing
from topobc.bounds import PolicyId, achievable_gdof, outer_bound, policy_distribution
from topobc.channel import SnrPoint, trial_stream
from topobc.layered import SchemeError
from topobc.schemes import (
    DEFAULT_HORIZON,
    MAX_UNPAIRED,
    Fidelity,
    Scheme4Variant,
    Scheme5Subcase,
    SchemeOutcome,
    UnpairableSchedule,
    pair_uses,
    phase_lengths,
    require_pn_np_family,
    scheme1_nd_pn,
    scheme2_pd_nn,
    scheme3_dd_fixed,
    scheme4_dd_alternating,
    scheme5_concatenate,
    scheme5_pn_np,
    scheme_mat_baseline,
)
from topobc.state_model import Number, StateDistribution, as_fraction, periodic_schedule

logger = logging.getLogger(__name__)

# ======================
# HARNESS CONFIG
# ======================

DEFAULT_SNR_DB = (40.0, 60.0, 80.0)
DEFAULT_TRIALS = 10_000
DEFAULT_TOLERANCE = 0.05
ALPHA_GRID = ("0", "1/4", "1/2", "3/4", "1")
FAILURE_BUDGET = 0.01
MIN_TRIALS = 100
FIT_POINTS = 3
CHUNKS_PER_WORKER = 4

THREADS_ENV = "TOPO_BC_THREADS"


class HarnessError(RuntimeError):
    pass


class DegenerateFit(ValueError):
    pass


# ======================
# SCHEME REGISTRY
# ======================

Runner = Callable[[Number, SnrPoint, np.random.Generator, Fidelity, Mapping], SchemeOutcome]


def _tsm1(alpha, snr, rng, mode, opts):
    return scheme1_nd_pn(alpha, snr, rng, strong_user=opts.get("strong_user", 1))


def _tsm2(alpha, snr, rng, mode, opts):
    return scheme2_pd_nn(alpha, snr, rng, strong_user=opts.get("strong_user", 1))


def _tsm3(alpha, snr, rng, mode, opts):
    return scheme3_dd_fixed(
        alpha,
        snr,
        rng,
        scale=opts.get("scale", 1),
        t1=opts.get("t1"),
        fidelity=mode,
        noiseless=opts.get("noiseless", False),
        strong_user=opts.get("strong_user", 1),
    )


def _tsm4(alpha, snr, rng, mode, opts):
    return scheme4_dd_alternating(
        alpha,
        snr,
        rng,
        variant=opts.get("variant", Scheme4Variant.WSW),
        fidelity=mode,
        noiseless=opts.get("noiseless", False),
    )


def _tsm5(alpha, snr, rng, mode, opts):
    if "subcase" in opts:
        return scheme5_pn_np(alpha, snr, rng, opts["subcase"], reverse=opts.get("reverse", False))
    dist = opts.get("dist") or policy_distribution(PolicyId.TSM5_PN_NP, alpha)
    return scheme5_concatenate(dist, snr, rng, horizon=opts.get("horizon", DEFAULT_HORIZON))


def _mat(alpha, snr, rng, mode, opts):
    return scheme_mat_baseline(alpha, snr, rng, strong_user=opts.get("strong_user", 1))


def _zf(alpha, snr, rng, mode, opts):
    return baseline_zero_forcing(alpha, snr, rng, strong_user=opts.get("strong_user", 1))


def _su(alpha, snr, rng, mode, opts):
    return baseline_single_user(alpha, snr, rng, strong_user=opts.get("strong_user", 1))


SCHEMES: Dict[str, Runner] = {
    "tsm1": _tsm1,
    "tsm2": _tsm2,
    "tsm3": _tsm3,
    "tsm4": _tsm4,
    "tsm5": _tsm5,
    "mat": _mat,
    "zf": _zf,
    "su": _su,
}

SCHEME_POLICIES: Dict[str, PolicyId] = {
    "tsm1": PolicyId.TSM1_ND_PN,
    "tsm2": PolicyId.TSM2_PD_NN,
    "tsm3": PolicyId.TSM3_DD_FIXED_LB,
    "tsm4": PolicyId.TSM4_DD_ALT,
    "tsm5": PolicyId.TSM5_PN_NP,
    "mat": PolicyId.MAT_FIXED,
    "zf": PolicyId.ZF_PERFECT,
    "su": PolicyId.SINGLE_USER,
}

SCHEME_OPTIONS: Dict[str, frozenset] = {
    "tsm1": frozenset({"strong_user"}),
    "tsm2": frozenset({"strong_user"}),
    "tsm3": frozenset({"strong_user", "scale", "t1", "noiseless"}),
    "tsm4": frozenset({"variant", "noiseless"}),
    "tsm5": frozenset({"dist", "horizon", "subcase", "reverse"}),
    "mat": frozenset({"strong_user"}),
    "zf": frozenset({"strong_user"}),
    "su": frozenset({"strong_user"}),
}


# ======================
# TYPES
# ======================

@dataclass(frozen=True)
class SweepConfig:
    scheme: str
    alpha: Number
    snr_points_db: Tuple[float, ...] = DEFAULT_SNR_DB
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    mode: Fidelity = Fidelity.ANALYTIC
    options: Tuple[Tuple[str, object], ...] = ()

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {sorted(SCHEMES)}")
        object.__setattr__(self, "alpha", as_fraction(self.alpha))
        object.__setattr__(self, "mode", Fidelity(self.mode))
        object.__setattr__(self, "snr_points_db", tuple(float(s) for s in self.snr_points_db))
        object.__setattr__(self, "options", tuple(sorted(dict(self.options).items())))

        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if len(self.snr_points_db) < 2:
            raise ValueError("slope fitting needs at least 2 SNR points")
        if any(s < 0 for s in self.snr_points_db):
            raise ValueError("SNR points must be >= 0 dB")
        if self.trials < MIN_TRIALS:
            raise ValueError(f"trials must be >= {MIN_TRIALS}, got {self.trials}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")

        unknown = set(self.opts) - SCHEME_OPTIONS[self.scheme]
        if unknown:
            raise ValueError(f"{self.scheme} does not take options {sorted(unknown)}")
        self._check_scheme_options()

    @property
    def opts(self) -> Dict[str, object]:
        return dict(self.options)

    def _check_scheme_options(self) -> None:
        opts = self.opts
        if opts.get("strong_user", 1) not in (1, 2):
            raise ValueError(f"strong_user must be 1 or 2, got {opts['strong_user']}")
        if self.scheme == "tsm3":
            phase_lengths(self.alpha, opts.get("scale", 1), opts.get("t1"))
        if self.scheme == "tsm4":
            Scheme4Variant(opts.get("variant", Scheme4Variant.WSW))
        if self.scheme == "tsm5":
            if "subcase" in opts:
                Scheme5Subcase(opts["subcase"])
            dist = opts.get("dist")
            if dist is not None:
                if not isinstance(dist, StateDistribution):
                    raise ValueError("dist must be a StateDistribution")
                if dist.alpha != self.alpha:
                    raise ValueError(f"dist alpha {dist.alpha} differs from sweep alpha {self.alpha}")
                require_pn_np_family(dist)
            if "subcase" not in opts:
                dist = dist or policy_distribution(PolicyId.TSM5_PN_NP, self.alpha)
                horizon = opts.get("horizon", DEFAULT_HORIZON)
                _, leftover = pair_uses(periodic_schedule(dist, horizon))
                if len(leftover) > MAX_UNPAIRED:
                    raise UnpairableSchedule(f"horizon {horizon} leaves {len(leftover)} unmatched uses")

    @property
    def policy(self) -> PolicyId:
        return SCHEME_POLICIES[self.scheme]


@dataclass(frozen=True)
class GdofEstimate:
    slope: float
    intercept: float
    residual_rms: float
    per_point_rates: Tuple[float, ...] = field(default_factory=tuple)


# ======================
# WORKERS
# ======================

def worker_count() -> int:
    """Worker cap from TOPO_BC_THREADS, never above the CPU count (speed only; results never depend on it)."""
    cpus = os.cpu_count() or 1
    raw = os.getenv(THREADS_ENV)
    if not raw:
        return cpus
    try:
        n = int(raw)
    except ValueError as e:
        raise ValueError(f"{THREADS_ENV}={raw!r} is not an integer") from e
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be >= 1, got {n}")
    return min(n, cpus)


def safe_trial(fn, *args, fail_value=None):
    """
    Trial-level guard.
    Numerical failures of one draw are logged and counted, never fatal here.
    """
    try:
        return fn(*args)
    except (SchemeError, np.linalg.LinAlgError, FloatingPointError) as e:
        logger.warning(f"⚠️ Trial failed in {fn.__name__}{args[1:]}: {e}")
        return fail_value


def run_trial(config: SweepConfig, snr_index: int, trial: int) -> SchemeOutcome:
    rng = trial_stream(config.seed, snr_index, trial)
    snr = SnrPoint.from_db(config.snr_points_db[snr_index])
    return SCHEMES[config.scheme](config.alpha, snr, rng, config.mode, config.opts)


def _run_chunk(task: Tuple[SweepConfig, int, int, int]) -> List[Optional[Tuple[float, float, float]]]:
    config, snr_index, start, stop = task
    rows = []
    for trial in range(start, stop):
        outcome = safe_trial(run_trial, config, snr_index, trial)
        if outcome is None:
            rows.append(None)
        else:
            rows.append((
                outcome.rate_user1,
                outcome.rate_user2,
                outcome.diagnostics.get("quant_error_power", math.nan),
            ))
    return rows


def _chunks(config: SweepConfig, snr_index: int, n_chunks: int) -> List[Tuple[SweepConfig, int, int, int]]:
    bounds = np.linspace(0, config.trials, max(n_chunks, 1) + 1).astype(int)
    return [
        (config, snr_index, int(lo), int(hi))
        for lo, hi in zip(bounds[:-1], bounds[1:])
        if hi > lo
    ]


def _run_point(config: SweepConfig, snr_index: int, pool: Optional[Pool], workers: int):
    tasks = _chunks(config, snr_index, workers * CHUNKS_PER_WORKER)
    if pool is None:
        parts = [_run_chunk(t) for t in tasks]
    else:
        parts = pool.map(_run_chunk, tasks)
    return [row for part in parts for row in part]


# ======================
# STATISTICS
# ======================

def _mean_se(values: Sequence[float]) -> Tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def _nanmean(values: Sequence[float]) -> float:
    finite = [v for v in values if not math.isnan(v)]
    return math.fsum(finite) / len(finite) if finite else math.nan


def measure_rates(config: SweepConfig, workers: Optional[int] = None) -> pd.DataFrame:
    """
    Per-SNR mean rates with standard errors.

    Each trial owns the stream (seed, snr index, trial index), so the table is
    identical for any worker count.
    """
    workers = workers or worker_count()
    logger.info(
        f"[SWEEP] {config.scheme} alpha={config.alpha} snr={list(config.snr_points_db)} "
        f"trials={config.trials} mode={config.mode.value} workers={workers}"
    )

    pool = Pool(workers) if workers > 1 else None
    rows = []
    try:
        for i, snr_db in enumerate(config.snr_points_db):
            results = _run_point(config, i, pool, workers)
            ok = [r for r in results if r is not None]
            failed = len(results) - len(ok)

            if failed > FAILURE_BUDGET * config.trials:
                raise HarnessError(
                    f"{config.scheme} at {snr_db} dB: {failed}/{config.trials} trials failed"
                )
            if failed:
                logger.warning(f"[SWEEP] {snr_db} dB: excluded {failed} failed trials")

            r1, se1 = _mean_se([r[0] for r in ok])
            r2, se2 = _mean_se([r[1] for r in ok])
            rs, ses = _mean_se([r[0] + r[1] for r in ok])
            rows.append({
                "snr_db": snr_db,
                "rho": SnrPoint.from_db(snr_db).rho,
                "rate_u1": r1,
                "rate_u2": r2,
                "rate_sum": rs,
                "se_u1": se1,
                "se_u2": se2,
                "se_sum": ses,
                "trials": len(ok),
                "failed": failed,
                "quant_error_power": _nanmean([r[2] for r in ok]),
            })
            logger.info(f"[SWEEP] {snr_db} dB: sum={rs:.4f} ± {ses:.4f}")
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    return pd.DataFrame(rows)


def fit_slope(
    per_point_rates: Sequence[float],
    snr_points_db: Sequence[float],
    top: int = FIT_POINTS,
) -> GdofEstimate:
    """Least-squares line of sum rate against log2(rho) over the top SNR points."""
    if len(per_point_rates) != len(snr_points_db):
        raise ValueError("one rate per SNR point is required")
    if len(snr_points_db) < 2:
        raise DegenerateFit("slope fitting needs at least 2 points")

    order = np.argsort(np.asarray(snr_points_db, dtype=float))[-top:]
    x = np.array([SnrPoint.from_db(snr_points_db[i]).log2_rho for i in order])
    y = np.array([per_point_rates[i] for i in order], dtype=float)
    if np.ptp(x) == 0:
        raise DegenerateFit(f"identical SNR points {sorted(snr_points_db)}")

    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    residual = y - A @ np.array([slope, intercept])
    return GdofEstimate(
        slope=float(slope),
        intercept=float(intercept),
        residual_rms=float(np.sqrt(np.mean(residual ** 2))),
        per_point_rates=tuple(float(r) for r in per_point_rates),
    )


def slope_standard_error(se_points: Sequence[float], snr_points_db: Sequence[float], top: int = FIT_POINTS) -> float:
    """Standard error of the fitted slope from per-point standard errors."""
    order = np.argsort(np.asarray(snr_points_db, dtype=float))[-top:]
    x = np.array([SnrPoint.from_db(snr_points_db[i]).log2_rho for i in order])
    se = np.array([se_points[i] for i in order], dtype=float)
    w = (x - x.mean()) / np.sum((x - x.mean()) ** 2)
    return float(np.sqrt(np.sum(w ** 2 * se ** 2)))


def sweep(config: SweepConfig, workers: Optional[int] = None) -> Tuple[pd.DataFrame, GdofEstimate]:
    table = measure_rates(config, workers)
    estimate = fit_slope(list(table["rate_sum"]), list(table["snr_db"]))
    logger.info(f"[SWEEP] {config.scheme} alpha={config.alpha}: slope={estimate.slope:.4f}")
    return table, estimate


# ======================
# CLAIM VERIFICATION
# ======================

VERIFY_SCHEMES = ("tsm1", "tsm2", "tsm3", "tsm4", "tsm5", "mat", "zf", "su")


def verify_against_claims(
    alpha_grid: Sequence[Number] = ALPHA_GRID,
    tolerance: float = DEFAULT_TOLERANCE,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    snr_points_db: Sequence[float] = DEFAULT_SNR_DB,
    schemes: Sequence[str] = VERIFY_SCHEMES,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """
    Fitted slope of every scheme on the alpha grid against its claimed GDoF
    and the outer bound of its design distribution. A row passes when the
    slope is within tolerance of the claim and not above bound + tolerance.
    """
    rows = []
    for scheme in schemes:
        for alpha in alpha_grid:
            config = SweepConfig(scheme, alpha, tuple(snr_points_db), trials, seed)
            claimed = float(achievable_gdof(config.policy, config.alpha).value)
            bound = float(outer_bound(policy_distribution(config.policy, config.alpha)).d_min)

            table, estimate = sweep(config, workers)
            se = slope_standard_error(list(table["se_sum"]), list(table["snr_db"]))
            passed = abs(estimate.slope - claimed) <= tolerance and estimate.slope <= bound + tolerance
            status = "PASS" if passed else "FAIL"

            row = {
                "scheme": scheme,
                "alpha": float(config.alpha),
                "claimed": claimed,
                "bound": bound,
                "slope": estimate.slope,
                "residual_rms": estimate.residual_rms,
                "se": se,
                "status": status,
            }
            rows.append(row)
            message = (
                f"[VERIFY] {scheme} alpha={config.alpha} slope={estimate.slope:.4f} "
                f"claimed={claimed:.4f} bound={bound:.4f} {status}"
            )
            if passed:
                logger.info(message)
            else:
                logger.error(f"❌ {message}")

    return pd.DataFrame(rows)
