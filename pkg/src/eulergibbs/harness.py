"""Monte Carlo experiments over the Gibbs ensembles, plus the statistical test kit.

Experiments answer four questions about the truncated flow and its invariant
Gaussian measures: does the flow leave the measure invariant (run_invariance),
do negative-order drift moments stabilize as the box grows (moment_scan), do
the coupled dyadic approximants contract in the local metric (cauchy_scan),
and does the flow move nearby initial conditions a bounded factor apart
(continuity_probe)?

Every experiment is a deterministic function of its parameters and the given
RngStream. Sub-ensembles draw from child streams derived as
stream_id -> (stream_id << 8) | offset with a fixed documented offset per
role (1 evolved ensemble, 2 fresh reference, 3 moment samples, 4 dyadic
pairs, 5 continuity base), so distinct experiments under one master seed
never share counters, while scans across cutoffs reuse per-mode draws and
gain common random numbers. Thread counts only partition member loops over
row blocks and never change any reported number.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaincc

from ._meta import VERSION
from .drift import PSEUDO_SPECTRAL, drift_batch
from .flow import IntegrationError, IntegratorConfig, evolve_coeffs
from .gibbs import (
    GENERATOR_NAME,
    GibbsParams,
    RngStream,
    coupled_dyadic_matrices,
    sample_coeff_matrix,
)
from .spectral import (
    Mode,
    SpectralField,
    TWO_PI,
    _sobolev_weights,
    cross_period_distance,
    local_distance,
    mode_arrays,
    mode_box,
    mode_index,
)

STREAM_EVOLVED = 1
STREAM_FRESH = 2
STREAM_MOMENTS = 3
STREAM_DYADIC = 4
STREAM_CONTINUITY = 5

DEFAULT_MOMENT_CUTOFFS = ((4, 4), (6, 6), (8, 8), (10, 10), (12, 12))

INVARIANCE_SCHEMA = "report.invariance.v1"
MOMENTS_SCHEMA = "report.moments.v1"
CAUCHY_SCHEMA = "report.cauchy.v1"
CONTINUITY_SCHEMA = "report.continuity.v1"


def _child(rng: RngStream, offset: int) -> RngStream:
    return rng.substream((rng.stream_id << 8) | offset)


# ---------------------------------------------------------------------------
# test kit


def kolmogorov_sf(x: float) -> float:
    """Survival function Q(x) of the Kolmogorov distribution.

    Alternating series for large arguments, the Jacobi theta dual for small
    ones; accurate to ~1e-15 on both branches.
    """
    x = float(x)
    if x <= 0.0:
        return 1.0
    if x < 1.18:
        t = math.pi**2 / (8.0 * x * x)
        total = sum(math.exp(-((2 * j - 1) ** 2) * t) for j in range(1, 8))
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / x * total))
    total = 0.0
    sign = 1.0
    for j in range(1, 200):
        term = math.exp(-2.0 * j * j * x * x)
        total += sign * term
        sign = -sign
        if term < 1e-18:
            break
    return min(1.0, max(0.0, 2.0 * total))


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    effective_size: float


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> KsResult:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.

    Uses the plain Kolmogorov limit at the standard effective size
    n m / (n + m); no small-sample or tie corrections.
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_two_sample needs two nonempty samples")
    everything = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, everything, side="right") / a.size
    cdf_b = np.searchsorted(b, everything, side="right") / b.size
    statistic = float(np.max(np.abs(cdf_a - cdf_b)))
    effective = a.size * b.size / (a.size + b.size)
    return KsResult(
        statistic=statistic,
        p_value=kolmogorov_sf(math.sqrt(effective) * statistic),
        effective_size=effective,
    )


def ks_one_sample(values: Sequence[float], cdf: Callable[[np.ndarray], np.ndarray]) -> KsResult:
    """One-sample KS test of values against a continuous CDF."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    n = values.size
    if n == 0:
        raise ValueError("ks_one_sample needs a nonempty sample")
    theory = np.asarray(cdf(values), dtype=np.float64)
    grid = np.arange(1, n + 1) / n
    statistic = float(max(np.max(grid - theory), np.max(theory - (grid - 1.0 / n))))
    return KsResult(
        statistic=statistic,
        p_value=kolmogorov_sf(math.sqrt(n) * statistic),
        effective_size=float(n),
    )


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    p_value: float
    dof: int


def chi_square_uniform(p_values: Sequence[float], bins: int = 10) -> ChiSquareResult:
    """Pearson chi-square test of p-values against uniformity on [0, 1]."""
    p_values = np.asarray(p_values, dtype=np.float64)
    if p_values.size == 0:
        raise ValueError("chi_square_uniform needs a nonempty sample")
    counts, _ = np.histogram(np.clip(p_values, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    expected = p_values.size / bins
    statistic = float(np.sum((counts - expected) ** 2) / expected)
    dof = bins - 1
    return ChiSquareResult(
        statistic=statistic,
        p_value=float(gammaincc(dof / 2.0, statistic / 2.0)),
        dof=dof,
    )


# ---------------------------------------------------------------------------
# observables


OBSERVABLE_KINDS = (
    "coeff_real",
    "coeff_imag",
    "coeff_abs2",
    "energy",
    "enstrophy",
    "sobolev_norm",
    "spectrum_band",
)


@dataclass(frozen=True)
class ObservableSpec:
    """A scalar statistic of a field: coefficient marginals, quadratic
    functionals, a Sobolev norm of a given order, or the coefficient power in
    a shell band lo <= |k| < hi."""

    kind: str
    mode: Mode | None = None
    order: float | None = None
    band: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in OBSERVABLE_KINDS:
            raise ValueError(f"kind must be one of {OBSERVABLE_KINDS}, got {self.kind!r}")
        if self.kind.startswith("coeff_"):
            if self.mode is None:
                raise ValueError(f"{self.kind} needs a target mode")
            object.__setattr__(self, "mode", (int(self.mode[0]), int(self.mode[1])))
        elif self.kind == "sobolev_norm":
            if self.order is None:
                raise ValueError("sobolev_norm needs an order")
            object.__setattr__(self, "order", float(self.order))
        elif self.kind == "spectrum_band":
            if self.band is None:
                raise ValueError("spectrum_band needs a (lo, hi) shell range")
            lo, hi = float(self.band[0]), float(self.band[1])
            if not lo < hi:
                raise ValueError(f"spectrum_band needs lo < hi, got {(lo, hi)}")
            object.__setattr__(self, "band", (lo, hi))

    @property
    def label(self) -> str:
        if self.kind.startswith("coeff_"):
            return f"{self.kind}({self.mode[0]},{self.mode[1]})"
        if self.kind == "sobolev_norm":
            return f"sobolev_norm({self.order:g})"
        if self.kind == "spectrum_band":
            return f"band({self.band[0]:g},{self.band[1]:g})"
        return self.kind


def observable_values(
    spec: ObservableSpec, coeffs: np.ndarray, period: float, cutoff: Mode
) -> np.ndarray:
    """Evaluate one observable over every row of a coefficient matrix."""
    abs_sq = coeffs.real**2 + coeffs.imag**2
    if spec.kind.startswith("coeff_"):
        index = mode_index(cutoff)
        if spec.mode not in index:
            raise ValueError(f"observable {spec.label} targets a mode outside cutoff {cutoff}")
        column = coeffs[:, index[spec.mode]]
        if spec.kind == "coeff_real":
            return np.ascontiguousarray(column.real)
        if spec.kind == "coeff_imag":
            return np.ascontiguousarray(column.imag)
        return np.ascontiguousarray(column.real**2 + column.imag**2)
    if spec.kind == "energy":
        weights = _sobolev_weights(period, cutoff, 1.0)
        return np.einsum("sm,m->s", abs_sq, weights, optimize=False)
    if spec.kind == "enstrophy":
        weights = _sobolev_weights(period, cutoff, 2.0)
        return np.einsum("sm,m->s", abs_sq, weights, optimize=False)
    if spec.kind == "sobolev_norm":
        weights = _sobolev_weights(period, cutoff, spec.order)
        return np.sqrt(np.einsum("sm,m->s", abs_sq, weights, optimize=False))
    k1, k2 = mode_arrays(cutoff)
    radius = np.sqrt((k1 * k1 + k2 * k2).astype(np.float64))
    mask = (radius >= spec.band[0]) & (radius < spec.band[1])
    return abs_sq[:, mask].sum(axis=1)


def default_observables(cutoff: Sequence[int]) -> tuple[ObservableSpec, ...]:
    """Marginals of every boxed mode plus the standard global diagnostics."""
    specs: list[ObservableSpec] = []
    for k in mode_box((int(cutoff[0]), int(cutoff[1]))):
        specs.append(ObservableSpec("coeff_real", mode=k))
        specs.append(ObservableSpec("coeff_imag", mode=k))
    specs.append(ObservableSpec("energy"))
    specs.append(ObservableSpec("enstrophy"))
    specs.append(ObservableSpec("sobolev_norm", order=-1.5))
    for band in ((1.0, 2.0), (2.0, 4.0), (4.0, math.inf)):
        specs.append(ObservableSpec("spectrum_band", band=band))
    return tuple(specs)


# ---------------------------------------------------------------------------
# invariance


@dataclass(frozen=True)
class ObservableRow:
    label: str
    kind: str
    pre_mean: float
    pre_variance: float
    pre_se: float
    post_mean: float
    post_variance: float
    post_se: float
    ks_statistic: float
    p_value: float

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "kind": self.kind,
            "pre_mean": self.pre_mean,
            "pre_variance": self.pre_variance,
            "pre_se": self.pre_se,
            "post_mean": self.post_mean,
            "post_variance": self.post_variance,
            "post_se": self.post_se,
            "ks_statistic": self.ks_statistic,
            "p_value": self.p_value,
        }


@dataclass(frozen=True)
class EnsembleReport:
    """Per-observable comparison of a fresh Gibbs ensemble against an evolved one."""

    observables: tuple[ObservableRow, ...]
    ensemble_size: int
    surviving: int
    failed_members: tuple[int, ...]
    energy_drift_max: float
    enstrophy_drift_max: float
    marginal_pass_rate: float
    verdicts: dict
    manifest: dict

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "schema": INVARIANCE_SCHEMA,
            "ensemble_size": self.ensemble_size,
            "surviving": self.surviving,
            "failed_members": list(self.failed_members),
            "energy_drift_max": self.energy_drift_max,
            "enstrophy_drift_max": self.enstrophy_drift_max,
            "marginal_pass_rate": self.marginal_pass_rate,
            "verdicts": dict(self.verdicts),
            "passed": self.passed,
            "observables": [row.to_dict() for row in self.observables],
            "manifest": self.manifest,
        }

    def csv_rows(self) -> list[dict]:
        return [row.to_dict() for row in self.observables]


def _column_stats(values: np.ndarray) -> tuple[float, float, float]:
    mean = float(values.mean())
    variance = float(values.var(ddof=1)) if values.size > 1 else 0.0
    return mean, variance, math.sqrt(variance / values.size) if values.size else 0.0


def _quadratic_rows(coeffs: np.ndarray, period: float, cutoff: Mode, order: float) -> np.ndarray:
    weights = _sobolev_weights(period, cutoff, order)
    abs_sq = coeffs.real**2 + coeffs.imag**2
    return np.einsum("sm,m->s", abs_sq, weights, optimize=False)


def run_invariance(
    p: GibbsParams,
    cfg: IntegratorConfig,
    observables: Sequence[ObservableSpec],
    ensemble_size: int,
    rng: RngStream,
    *,
    alpha: float = 0.01,
    pass_fraction: float = 0.95,
    mean_se_factor: float = 3.0,
    failure_tol: float = 0.01,
    threads: int = 1,
) -> EnsembleReport:
    """Test invariance of the Gibbs law under the flow over cfg.t_final.

    One ensemble is drawn and evolved; a second, fresh ensemble provides the
    reference law. Every observable is compared by a two-sample KS test; the
    top-line verdict requires at least pass_fraction of the mode-marginal
    tests to clear the alpha level, and energy/enstrophy ensemble means to
    agree within mean_se_factor combined standard errors. At t_final = 0 the
    comparison is null by construction and an additional chi-square
    uniformity verdict on the marginal p-values calibrates the test stack.
    Aborts (IntegrationError) if more than failure_tol of the members fail
    to integrate.
    """
    ensemble_size = int(ensemble_size)
    if ensemble_size < 100:
        raise ValueError(f"ensemble_size must be >= 100 for stable KS levels, got {ensemble_size}")
    observables = tuple(observables)
    if not observables:
        raise ValueError("need at least one observable")

    initial = sample_coeff_matrix(p, _child(rng, STREAM_EVOLVED), ensemble_size)
    evolution = evolve_coeffs(initial, p.period, p.cutoff, cfg, threads=threads)
    failed = evolution.failed_members
    if len(failed) > failure_tol * ensemble_size:
        raise IntegrationError(
            f"{len(failed)} of {ensemble_size} members failed to integrate "
            f"(tolerated fraction {failure_tol})",
            step=evolution.steps,
            members=failed,
        )
    keep = np.setdiff1d(np.arange(ensemble_size), np.asarray(failed, dtype=int))
    post = evolution.coeffs[keep]
    pre = sample_coeff_matrix(p, _child(rng, STREAM_FRESH), ensemble_size)

    energy_pre = _quadratic_rows(initial[keep], p.period, p.cutoff, 1.0)
    energy_post = _quadratic_rows(post, p.period, p.cutoff, 1.0)
    enstrophy_pre = _quadratic_rows(initial[keep], p.period, p.cutoff, 2.0)
    enstrophy_post = _quadratic_rows(post, p.period, p.cutoff, 2.0)
    energy_drift = np.abs(energy_post - energy_pre) / np.maximum(np.abs(energy_pre), 1.0)
    enstrophy_drift = np.abs(enstrophy_post - enstrophy_pre) / np.maximum(
        np.abs(enstrophy_pre), 1.0
    )

    rows: list[ObservableRow] = []
    for spec in observables:
        a = observable_values(spec, pre, p.period, p.cutoff)
        b = observable_values(spec, post, p.period, p.cutoff)
        ks = ks_two_sample(a, b)
        pre_mean, pre_var, pre_se = _column_stats(a)
        post_mean, post_var, post_se = _column_stats(b)
        rows.append(
            ObservableRow(
                label=spec.label,
                kind=spec.kind,
                pre_mean=pre_mean,
                pre_variance=pre_var,
                pre_se=pre_se,
                post_mean=post_mean,
                post_variance=post_var,
                post_se=post_se,
                ks_statistic=ks.statistic,
                p_value=ks.p_value,
            )
        )

    marginal_p = [r.p_value for r in rows if r.kind.startswith("coeff_")]
    if marginal_p:
        pass_rate = float(np.mean([pv >= alpha for pv in marginal_p]))
    else:
        pass_rate = 1.0
    verdicts: dict = {"marginal_pass_rate": pass_rate >= pass_fraction}
    for name in ("energy", "enstrophy"):
        for row in rows:
            if row.kind == name:
                gap = abs(row.post_mean - row.pre_mean)
                budget = mean_se_factor * math.hypot(row.pre_se, row.post_se)
                verdicts[f"{name}_mean"] = gap <= budget
                break
    if cfg.t_final == 0.0 and marginal_p:
        verdicts["null_p_uniformity"] = chi_square_uniform(marginal_p).p_value >= alpha

    manifest = {
        "schema": INVARIANCE_SCHEMA,
        "params": {"gamma": p.gamma, "period": p.period, "cutoff": list(p.cutoff)},
        "integrator": {
            "scheme": cfg.scheme,
            "dt": cfg.dt,
            "t_final": cfg.t_final,
            "drift_method": cfg.drift_method,
            "fixed_point_tol": cfg.fixed_point_tol,
        },
        "master_seed": rng.master_seed,
        "stream_id": rng.stream_id,
        "generator": GENERATOR_NAME,
        "version": VERSION,
        "thresholds": {
            "alpha": alpha,
            "pass_fraction": pass_fraction,
            "mean_se_factor": mean_se_factor,
            "failure_tol": failure_tol,
        },
    }
    return EnsembleReport(
        observables=tuple(rows),
        ensemble_size=ensemble_size,
        surviving=int(keep.size),
        failed_members=failed,
        energy_drift_max=float(energy_drift.max()) if keep.size else 0.0,
        enstrophy_drift_max=float(enstrophy_drift.max()) if keep.size else 0.0,
        marginal_pass_rate=pass_rate,
        verdicts=verdicts,
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# drift moments across cutoffs


@dataclass(frozen=True)
class MomentRow:
    order: float
    exponent: float
    cutoff: Mode
    mean: float
    se: float


@dataclass(frozen=True)
class MomentSeries:
    order: float
    exponent: float
    means: tuple[float, ...]
    stable_tail: bool
    strictly_increasing: bool


@dataclass(frozen=True)
class MomentReport:
    """Estimates of E ||B(Phi)||_{H^beta}^(2 exponent) across a cutoff ladder."""

    rows: tuple[MomentRow, ...]
    series: tuple[MomentSeries, ...]
    cutoffs: tuple[Mode, ...]
    manifest: dict

    def series_for(self, order: float, exponent: float) -> MomentSeries:
        for s in self.series:
            if s.order == order and s.exponent == exponent:
                return s
        raise KeyError(f"no series for order {order}, exponent {exponent}")

    def to_dict(self) -> dict:
        return {
            "schema": MOMENTS_SCHEMA,
            "cutoffs": [list(c) for c in self.cutoffs],
            "rows": [
                {
                    "order": r.order,
                    "exponent": r.exponent,
                    "cutoff": list(r.cutoff),
                    "mean": r.mean,
                    "se": r.se,
                }
                for r in self.rows
            ],
            "series": [
                {
                    "order": s.order,
                    "exponent": s.exponent,
                    "means": list(s.means),
                    "stable_tail": s.stable_tail,
                    "strictly_increasing": s.strictly_increasing,
                }
                for s in self.series
            ],
            "manifest": self.manifest,
        }

    def csv_rows(self) -> list[dict]:
        return [
            {
                "order": r.order,
                "exponent": r.exponent,
                "cutoff1": r.cutoff[0],
                "cutoff2": r.cutoff[1],
                "mean": r.mean,
                "se": r.se,
            }
            for r in self.rows
        ]


def _threaded_blocks(fn: Callable[[np.ndarray], np.ndarray], matrix: np.ndarray, threads: int) -> np.ndarray:
    """Apply a row-wise map over contiguous blocks, optionally in parallel.

    fn must act row-independently; the concatenation order is fixed by block
    index, so the result is identical for every thread count.
    """
    threads = max(1, int(threads))
    if threads == 1 or matrix.shape[0] < 2 * threads:
        return fn(matrix)
    bounds = np.linspace(0, matrix.shape[0], threads + 1, dtype=int)
    pieces: list[np.ndarray | None] = [None] * threads

    def run(i: int) -> None:
        lo, hi = bounds[i], bounds[i + 1]
        if lo < hi:
            pieces[i] = fn(matrix[lo:hi])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(run, range(threads)))
    return np.concatenate([piece for piece in pieces if piece is not None], axis=0)


def moment_scan(
    p: GibbsParams,
    orders: Sequence[float],
    exponents: Sequence[float],
    ensemble_size: int,
    rng: RngStream,
    *,
    cutoffs: Sequence[Sequence[int]] = DEFAULT_MOMENT_CUTOFFS,
    stability_tol: float = 0.05,
    drift_method: str = PSEUDO_SPECTRAL,
    threads: int = 1,
) -> MomentReport:
    """Estimate drift moments E ||B||_{H^beta}^(2q) on a growing cutoff ladder.

    p fixes gamma and the period; its own cutoff is ignored in favor of the
    ladder. The counter-keyed sampler gives every ladder rung the same draw
    for every shared mode, so successive estimates differ only by the new
    shell contributions (common random numbers).
    """
    ensemble_size = int(ensemble_size)
    if ensemble_size < 2:
        raise ValueError("ensemble_size must be >= 2")
    orders = [float(b) for b in orders]
    exponents = [float(q) for q in exponents]
    ladder = tuple((int(c[0]), int(c[1])) for c in cutoffs)
    if len(ladder) < 2:
        raise ValueError("need at least two cutoffs to compare")
    stream = _child(rng, STREAM_MOMENTS)

    rows: list[MomentRow] = []
    means: dict[tuple[float, float], list[float]] = {
        (b, q): [] for b in orders for q in exponents
    }
    for cutoff in ladder:
        params = GibbsParams(p.gamma, p.period, cutoff)
        coeffs = sample_coeff_matrix(params, stream, ensemble_size)
        rates = _threaded_blocks(
            lambda block: drift_batch(block, p.period, cutoff, method=drift_method),
            coeffs,
            threads,
        )
        abs_sq = rates.real**2 + rates.imag**2
        for b in orders:
            weights = _sobolev_weights(p.period, cutoff, b)
            norm_sq = np.einsum("sm,m->s", abs_sq, weights, optimize=False)
            for q in exponents:
                values = norm_sq if q == 1.0 else norm_sq**q
                mean, _, se = _column_stats(values)
                rows.append(MomentRow(order=b, exponent=q, cutoff=cutoff, mean=mean, se=se))
                means[(b, q)].append(mean)

    series = []
    for (b, q), sequence in means.items():
        tail_change = abs(sequence[-1] - sequence[-2]) / max(abs(sequence[-2]), 1e-300)
        diffs = np.diff(sequence)
        series.append(
            MomentSeries(
                order=b,
                exponent=q,
                means=tuple(sequence),
                stable_tail=bool(tail_change < stability_tol),
                strictly_increasing=bool(np.all(diffs > 0.0)),
            )
        )

    manifest = {
        "schema": MOMENTS_SCHEMA,
        "params": {"gamma": p.gamma, "period": p.period},
        "cutoffs": [list(c) for c in ladder],
        "orders": orders,
        "exponents": exponents,
        "ensemble_size": ensemble_size,
        "drift_method": drift_method,
        "stability_tol": stability_tol,
        "master_seed": rng.master_seed,
        "stream_id": rng.stream_id,
        "generator": GENERATOR_NAME,
        "version": VERSION,
    }
    return MomentReport(rows=tuple(rows), series=tuple(series), cutoffs=ladder, manifest=manifest)


# ---------------------------------------------------------------------------
# dyadic Cauchy scan


@dataclass(frozen=True)
class CauchyRow:
    level: int
    mean_sq_distance: float
    se: float


@dataclass(frozen=True)
class CauchyReport:
    """E d^2(Phi_{2^n}, Phi_{2^(n+1)}) for coupled dyadic pairs across levels."""

    rows: tuple[CauchyRow, ...]
    order: float
    strictly_decreasing: bool
    manifest: dict

    @property
    def passed(self) -> bool:
        return self.strictly_decreasing

    def to_dict(self) -> dict:
        return {
            "schema": CAUCHY_SCHEMA,
            "order": self.order,
            "rows": [
                {"level": r.level, "mean_sq_distance": r.mean_sq_distance, "se": r.se}
                for r in self.rows
            ],
            "strictly_decreasing": self.strictly_decreasing,
            "manifest": self.manifest,
        }

    def csv_rows(self) -> list[dict]:
        return [
            {"level": r.level, "mean_sq_distance": r.mean_sq_distance, "se": r.se}
            for r in self.rows
        ]


def cauchy_scan(
    n_values: Sequence[int],
    order: float,
    ensemble_size: int,
    rng: RngStream,
    *,
    gamma: float = 1.0,
    modes_per_unit: int = 1,
    level_max: int = 4,
    points_per_unit: int = 64,
    threads: int = 1,
) -> CauchyReport:
    """Monte Carlo E d^2 between coupled consecutive dyadic levels 2^n, 2^(n+1).

    Level n lives on period 2^n with cutoff modes_per_unit * 2^n per axis, so
    every level resolves the same physical frequency window. The distance is
    the windowed local metric at the given (negative) order evaluated on the
    common observation square [0, level_max]^2.
    """
    order = float(order)
    if not order < 1.0:
        raise ValueError(f"the local metric scan needs order < 1, got {order}")
    ensemble_size = int(ensemble_size)
    if ensemble_size < 2:
        raise ValueError("ensemble_size must be >= 2")
    levels = [int(n) for n in n_values]
    if not levels:
        raise ValueError("need at least one level")
    if min(levels) < 1:
        raise ValueError("levels must be >= 1 so the coarse period is at least 2")
    stream = _child(rng, STREAM_DYADIC)

    rows: list[CauchyRow] = []
    for n in levels:
        base = GibbsParams(
            gamma=gamma,
            period=2.0**n,
            cutoff=(modes_per_unit * 2**n, modes_per_unit * 2**n),
        )
        coarse, fine, fine_params = coupled_dyadic_matrices(
            n, n + 1, base, stream, ensemble_size
        )

        def distances(block_index: np.ndarray) -> np.ndarray:
            out = np.empty(block_index.size, dtype=np.float64)
            for slot, i in enumerate(block_index):
                f = SpectralField(base.period, base.cutoff, coarse[i])
                g = SpectralField(fine_params.period, fine_params.cutoff, fine[i])
                out[slot] = cross_period_distance(
                    f, g, order, level_max, points_per_unit=points_per_unit
                ) ** 2
            return out

        sq = _threaded_blocks(distances, np.arange(ensemble_size), threads)
        mean, _, se = _column_stats(sq)
        rows.append(CauchyRow(level=n, mean_sq_distance=mean, se=se))

    by_level = sorted(rows, key=lambda r: r.level)
    decreasing = all(
        earlier.mean_sq_distance > later.mean_sq_distance
        for earlier, later in zip(by_level, by_level[1:])
    )
    manifest = {
        "schema": CAUCHY_SCHEMA,
        "gamma": gamma,
        "order": order,
        "levels": levels,
        "ensemble_size": ensemble_size,
        "modes_per_unit": modes_per_unit,
        "level_max": level_max,
        "points_per_unit": points_per_unit,
        "master_seed": rng.master_seed,
        "stream_id": rng.stream_id,
        "generator": GENERATOR_NAME,
        "version": VERSION,
    }
    return CauchyReport(
        rows=tuple(rows),
        order=order,
        strictly_decreasing=decreasing and len(by_level) > 1,
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# flow continuity


@dataclass(frozen=True)
class ContinuityRow:
    delta: float
    input_distance: float
    median_output_distance: float
    median_ratio: float
    surviving: int


@dataclass(frozen=True)
class ContinuityReport:
    """Output-vs-input local distances for perturbed initial conditions."""

    rows: tuple[ContinuityRow, ...]
    order: float
    ratio_stabilizes: bool
    monotone_in_delta: bool
    manifest: dict

    @property
    def passed(self) -> bool:
        return self.ratio_stabilizes

    def to_dict(self) -> dict:
        return {
            "schema": CONTINUITY_SCHEMA,
            "order": self.order,
            "rows": [
                {
                    "delta": r.delta,
                    "input_distance": r.input_distance,
                    "median_output_distance": r.median_output_distance,
                    "median_ratio": r.median_ratio,
                    "surviving": r.surviving,
                }
                for r in self.rows
            ],
            "ratio_stabilizes": self.ratio_stabilizes,
            "monotone_in_delta": self.monotone_in_delta,
            "manifest": self.manifest,
        }

    def csv_rows(self) -> list[dict]:
        return [
            {
                "delta": r.delta,
                "input_distance": r.input_distance,
                "median_output_distance": r.median_output_distance,
                "median_ratio": r.median_ratio,
                "surviving": r.surviving,
            }
            for r in self.rows
        ]


def _perturbation_direction(p: GibbsParams, order: float) -> np.ndarray:
    """The fixed probe direction: the Gibbs deviation profile, unit H^order norm."""
    sigma = np.array(
        np.sqrt(2.0 / p.gamma) * (p.period / TWO_PI) ** 2, dtype=np.float64
    )
    k1, k2 = mode_arrays(p.cutoff)
    profile = sigma / (k1 * k1 + k2 * k2).astype(np.float64)
    weights = _sobolev_weights(p.period, p.cutoff, order)
    norm = math.sqrt(float(np.dot(weights, profile * profile)))
    return (profile / norm).astype(np.complex128)


def continuity_probe(
    p: GibbsParams,
    cfg: IntegratorConfig,
    deltas: Sequence[float],
    ensemble_size: int,
    rng: RngStream,
    *,
    order: float = -1.5,
    level_max: int = 4,
    points_per_unit: int = 64,
    ratio_tol: float = 0.25,
    threads: int = 1,
) -> ContinuityReport:
    """Probe the local modulus of continuity of the time-t flow map.

    Gibbs initial conditions are nudged by delta times a fixed unit-norm
    direction; both copies are evolved and the output local distance is
    compared with the (deterministic) input distance. A flow continuous in
    the local topology shows median ratios that stabilize as delta shrinks;
    the verdict checks the two smallest positive deltas agree within
    ratio_tol.
    """
    ensemble_size = int(ensemble_size)
    if ensemble_size < 2:
        raise ValueError("ensemble_size must be >= 2")
    delta_list = [float(d) for d in deltas]
    if any(d < 0.0 for d in delta_list):
        raise ValueError("deltas must be nonnegative")
    stream = _child(rng, STREAM_CONTINUITY)

    base = sample_coeff_matrix(p, stream, ensemble_size)
    base_evolution = evolve_coeffs(base, p.period, p.cutoff, cfg, threads=threads)
    direction = _perturbation_direction(p, order)
    zero = SpectralField.zeros(p.period, p.cutoff)

    rows: list[ContinuityRow] = []
    for delta in delta_list:
        perturbed = base + delta * direction[None, :]
        pert_evolution = evolve_coeffs(perturbed, p.period, p.cutoff, cfg, threads=threads)
        bad = set(base_evolution.failed_members) | set(pert_evolution.failed_members)
        keep = [i for i in range(ensemble_size) if i not in bad]
        input_distance = local_distance(
            zero.with_coeffs(delta * direction), zero, order, level_max,
            points_per_unit=points_per_unit,
        )

        def output_distances(block_index: np.ndarray) -> np.ndarray:
            out = np.empty(block_index.size, dtype=np.float64)
            for slot, i in enumerate(block_index):
                f = zero.with_coeffs(base_evolution.coeffs[i])
                g = zero.with_coeffs(pert_evolution.coeffs[i])
                out[slot] = local_distance(
                    f, g, order, level_max, points_per_unit=points_per_unit
                )
            return out

        outputs = _threaded_blocks(output_distances, np.asarray(keep, dtype=int), threads)
        median_out = float(np.median(outputs)) if outputs.size else math.nan
        ratio = median_out / input_distance if input_distance > 0.0 else math.nan
        rows.append(
            ContinuityRow(
                delta=delta,
                input_distance=input_distance,
                median_output_distance=median_out,
                median_ratio=ratio,
                surviving=len(keep),
            )
        )

    positive = sorted((r for r in rows if r.delta > 0.0), key=lambda r: r.delta)
    if len(positive) >= 2 and positive[1].median_ratio > 0.0:
        smallest, second = positive[0], positive[1]
        stabilizes = (
            abs(smallest.median_ratio / second.median_ratio - 1.0) <= ratio_tol
        )
    else:
        stabilizes = False
    ordered = sorted(rows, key=lambda r: r.delta)
    monotone = all(
        a.median_output_distance <= b.median_output_distance + 1e-15
        for a, b in zip(ordered, ordered[1:])
    )

    manifest = {
        "schema": CONTINUITY_SCHEMA,
        "params": {"gamma": p.gamma, "period": p.period, "cutoff": list(p.cutoff)},
        "integrator": {
            "scheme": cfg.scheme,
            "dt": cfg.dt,
            "t_final": cfg.t_final,
            "drift_method": cfg.drift_method,
        },
        "deltas": delta_list,
        "order": order,
        "ensemble_size": ensemble_size,
        "level_max": level_max,
        "points_per_unit": points_per_unit,
        "ratio_tol": ratio_tol,
        "probe_direction": "gibbs-sigma-profile-normalized",
        "master_seed": rng.master_seed,
        "stream_id": rng.stream_id,
        "generator": GENERATOR_NAME,
        "version": VERSION,
    }
    return ContinuityReport(
        rows=tuple(rows),
        order=order,
        ratio_stabilizes=stabilizes,
        monotone_in_delta=monotone,
        manifest=manifest,
    )
