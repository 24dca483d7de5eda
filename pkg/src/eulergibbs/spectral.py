"""Spectral representation of zero-mean real fields on the torus [0, L]^2.

A field is stored through its complex Fourier coefficients on the positive
half-lattice: modes k = (k1, k2) with k1 > 0, or k1 = 0 and k2 > 0. The
negative half is implied by conjugate symmetry, phi_{-k} = conj(phi_k), and
the zero mode is pinned to 0 (every field has spatial mean zero).

The plane-wave basis is e_k(x) = (1/L) exp(i 2 pi k.x / L), orthonormal in
L^2([0, L]^2), so

    phi(x) = 2 Re sum_{k > 0} phi_k e_k(x),
    integral |phi|^2 = 2 sum_{k > 0} |phi_k|^2.

Sobolev norms of order beta use the homogeneous symbol (2 pi |k| / L)^beta
and sum over the stored (positive) modes only:

    sobolev_norm(f, beta)^2 = sum_{k > 0} (2 pi |k| / L)^(2 beta) |phi_k|^2,

so energy(f) = sobolev_norm(f, 1)^2 and enstrophy(f) = sobolev_norm(f, 2)^2
are exactly the conserved quadratic invariants of the truncated Euler flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

Mode = tuple[int, int]
SobolevOrder = float

FIELD_SCHEMA = "field.v1"

TWO_PI = 2.0 * math.pi


def is_positive(k: Sequence[int]) -> bool:
    """True iff k lies in the positive half-lattice (k1 > 0, or k1 = 0 and k2 > 0)."""
    k1, k2 = int(k[0]), int(k[1])
    return k1 > 0 or (k1 == 0 and k2 > 0)


def perp(k: Sequence[int]) -> Mode:
    """Rotate an index by 90 degrees: k^perp = (-k2, k1)."""
    return (-int(k[1]), int(k[0]))


def _check_cutoff(cutoff: Sequence[int]) -> Mode:
    try:
        n1, n2 = int(cutoff[0]), int(cutoff[1])
    except (TypeError, IndexError) as exc:
        raise ValueError(f"cutoff must be a pair of integers, got {cutoff!r}") from exc
    if n1 < 1 or n2 < 1:
        raise ValueError(f"cutoff components must be >= 1, got {(n1, n2)}")
    return (n1, n2)


@lru_cache(maxsize=None)
def mode_box(cutoff: Mode) -> tuple[Mode, ...]:
    """All positive modes with |k1| <= N1 and |k2| <= N2, lexicographic by (k1, k2).

    The length is N1 * (2 N2 + 1) + N2.
    """
    n1, n2 = _check_cutoff(cutoff)
    modes: list[Mode] = [(0, k2) for k2 in range(1, n2 + 1)]
    for k1 in range(1, n1 + 1):
        modes.extend((k1, k2) for k2 in range(-n2, n2 + 1))
    return tuple(modes)


def mode_count(cutoff: Sequence[int]) -> int:
    n1, n2 = _check_cutoff(cutoff)
    return n1 * (2 * n2 + 1) + n2


@lru_cache(maxsize=None)
def mode_arrays(cutoff: Mode) -> tuple[np.ndarray, np.ndarray]:
    """The box modes as two parallel int64 arrays (k1[i], k2[i]), read-only."""
    modes = mode_box(cutoff)
    k1 = np.array([m[0] for m in modes], dtype=np.int64)
    k2 = np.array([m[1] for m in modes], dtype=np.int64)
    k1.flags.writeable = False
    k2.flags.writeable = False
    return k1, k2


@lru_cache(maxsize=None)
def mode_index(cutoff: Mode) -> Mapping[Mode, int]:
    return {k: i for i, k in enumerate(mode_box(cutoff))}


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Positive-mode coefficient vector of a zero-mean real field on [0, period]^2.

    coeffs[i] is the coefficient of mode_box(cutoff)[i]. Instances are
    immutable; arithmetic returns new fields on the same lattice.
    """

    period: float
    cutoff: Mode
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        period = float(self.period)
        if not period > 0.0 or not math.isfinite(period):
            raise ValueError(f"period must be positive and finite, got {self.period!r}")
        cutoff = _check_cutoff(self.cutoff)
        coeffs = np.array(self.coeffs, dtype=np.complex128)
        expected = (mode_count(cutoff),)
        if coeffs.shape != expected:
            raise ValueError(
                f"coeffs must have shape {expected} for cutoff {cutoff}, got {coeffs.shape}"
            )
        coeffs.flags.writeable = False
        object.__setattr__(self, "period", period)
        object.__setattr__(self, "cutoff", cutoff)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, period: float, cutoff: Sequence[int]) -> "SpectralField":
        cutoff = _check_cutoff(cutoff)
        return cls(period, cutoff, np.zeros(mode_count(cutoff), dtype=np.complex128))

    @classmethod
    def from_modes(
        cls,
        period: float,
        cutoff: Sequence[int],
        entries: Mapping[Sequence[int], complex],
    ) -> "SpectralField":
        """Build a field with the given positive-mode entries; all others zero."""
        cutoff = _check_cutoff(cutoff)
        index = mode_index(cutoff)
        coeffs = np.zeros(mode_count(cutoff), dtype=np.complex128)
        for k, value in entries.items():
            key = (int(k[0]), int(k[1]))
            if key not in index:
                raise ValueError(f"mode {key} is not a positive mode inside cutoff {cutoff}")
            coeffs[index[key]] = value
        return cls(period, cutoff, coeffs)

    def coeff(self, k: Sequence[int]) -> complex:
        """The stored coefficient of positive mode k (raises for modes outside the box)."""
        key = (int(k[0]), int(k[1]))
        index = mode_index(self.cutoff)
        if key not in index:
            raise KeyError(f"mode {key} is not a positive mode inside cutoff {self.cutoff}")
        return complex(self.coeffs[index[key]])

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.period, self.cutoff, coeffs)

    def same_lattice(self, other: "SpectralField") -> bool:
        return self.period == other.period and self.cutoff == other.cutoff

    def _require_same_lattice(self, other: "SpectralField") -> None:
        if not self.same_lattice(other):
            raise ValueError(
                "lattice mismatch: "
                f"({self.period}, {self.cutoff}) vs ({other.period}, {other.cutoff})"
            )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SpectralField):
            return NotImplemented
        return self.same_lattice(other) and np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None  # type: ignore[assignment]

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._require_same_lattice(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._require_same_lattice(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar: complex) -> "SpectralField":
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def to_record(self) -> dict:
        """JSON-ready record: coefficients listed in lexicographic mode order."""
        modes = mode_box(self.cutoff)
        return {
            "schema": FIELD_SCHEMA,
            "period": self.period,
            "cutoff": list(self.cutoff),
            "coeffs": [
                [int(k[0]), int(k[1]), float(c.real), float(c.imag)]
                for k, c in zip(modes, self.coeffs)
            ],
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "SpectralField":
        try:
            period = float(record["period"])
            cutoff = _check_cutoff(record["cutoff"])
            rows = record["coeffs"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed field record: {exc}") from exc
        schema = record.get("schema", FIELD_SCHEMA)
        if schema != FIELD_SCHEMA:
            raise ValueError(f"unsupported field schema {schema!r}")
        modes = mode_box(cutoff)
        if len(rows) != len(modes):
            raise ValueError(
                f"field record has {len(rows)} coefficients, expected {len(modes)}"
            )
        coeffs = np.empty(len(modes), dtype=np.complex128)
        for i, (row, k) in enumerate(zip(rows, modes)):
            if (int(row[0]), int(row[1])) != k:
                raise ValueError(
                    f"field record mode {tuple(row[:2])} at slot {i} does not match "
                    f"the lexicographic box order (expected {k})"
                )
            coeffs[i] = complex(float(row[2]), float(row[3]))
        return cls(period, cutoff, coeffs)


@lru_cache(maxsize=None)
def _sobolev_weights(period: float, cutoff: Mode, order: float) -> np.ndarray:
    """Per-mode weights (2 pi |k| / period)^(2 order) over the box, read-only."""
    k1, k2 = mode_arrays(cutoff)
    symbol_sq = (TWO_PI / period) ** 2 * (k1 * k1 + k2 * k2).astype(np.float64)
    weights = symbol_sq if order == 1.0 else symbol_sq**order
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    weights.flags.writeable = False
    return weights


def _weighted_power(f: SpectralField, order: float) -> float:
    weights = _sobolev_weights(f.period, f.cutoff, float(order))
    abs_sq = f.coeffs.real**2 + f.coeffs.imag**2
    return float(np.dot(weights, abs_sq))


def sobolev_norm(f: SpectralField, order: SobolevOrder) -> float:
    """Homogeneous Sobolev norm of order beta over the stored positive modes."""
    return math.sqrt(_weighted_power(f, order))


def energy(f: SpectralField) -> float:
    """Kinetic energy (1/2) integral |grad phi|^2, equal to sobolev_norm(f, 1)^2."""
    return _weighted_power(f, 1.0)


def enstrophy(f: SpectralField) -> float:
    """Enstrophy (1/2) integral |laplacian phi|^2, equal to sobolev_norm(f, 2)^2."""
    return _weighted_power(f, 2.0)


def full_coefficient_grid(f: SpectralField, order: float = 0.0) -> np.ndarray:
    """Conjugate-completed coefficient grid of shape (2 N1 + 1, 2 N2 + 1).

    Entry [k1 + N1, k2 + N2] holds the coefficient of mode (k1, k2); the zero
    mode is 0. With order != 0 every coefficient is multiplied by the symbol
    (2 pi |k| / period)^order, i.e. the grid represents |D|^order f.
    """
    n1, n2 = f.cutoff
    grid = np.zeros((2 * n1 + 1, 2 * n2 + 1), dtype=np.complex128)
    k1, k2 = mode_arrays(f.cutoff)
    grid[k1 + n1, k2 + n2] = f.coeffs
    grid[n1 - k1, n2 - k2] = np.conj(f.coeffs)
    if order != 0.0:
        m1 = np.arange(-n1, n1 + 1, dtype=np.float64)[:, None]
        m2 = np.arange(-n2, n2 + 1, dtype=np.float64)[None, :]
        symbol_sq = (TWO_PI / f.period) ** 2 * (m1 * m1 + m2 * m2)
        symbol_sq[n1, n2] = 1.0  # zero mode carries a zero coefficient anyway
        grid *= symbol_sq ** (0.5 * order)
    return grid


def evaluate(f: SpectralField, x) -> float | np.ndarray:
    """Evaluate the real field at a point (2,) or at an array of points (P, 2)."""
    points = np.asarray(x, dtype=np.float64)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    if points.shape[-1] != 2:
        raise ValueError(f"points must have two coordinates, got shape {points.shape}")
    k1, k2 = mode_arrays(f.cutoff)
    angle = (TWO_PI / f.period) * (
        np.outer(points[:, 0], k1) + np.outer(points[:, 1], k2)
    )
    phases = np.exp(1j * angle)
    values = (2.0 / f.period) * np.einsum("pm,m->p", phases, f.coeffs, optimize=False).real
    return float(values[0]) if single else values


def evaluate_grid(
    f: SpectralField,
    x1,
    x2,
    order: float = 0.0,
) -> np.ndarray:
    """Evaluate |D|^order f on the tensor grid x1 x x2, returning shape (len(x1), len(x2)).

    Separable contraction over the conjugate-completed coefficient grid; used
    by the windowed metric and by quadrature cross-checks. The contraction is
    performed with fixed-order einsum so results do not depend on BLAS
    threading.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    n1, n2 = f.cutoff
    grid = full_coefficient_grid(f, order=order)
    m1 = np.arange(-n1, n1 + 1, dtype=np.float64)
    m2 = np.arange(-n2, n2 + 1, dtype=np.float64)
    e1 = np.exp((2j * math.pi / f.period) * np.outer(m1, x1))
    e2 = np.exp((2j * math.pi / f.period) * np.outer(m2, x2))
    partial = np.einsum("ai,ab->ib", e1, grid, optimize=False)
    values = np.einsum("ib,bj->ij", partial, e2, optimize=False)
    return values.real / f.period


def _quadrature_points(level_max: int, points_per_unit: int) -> np.ndarray:
    """Midpoints of a uniform grid with points_per_unit cells per unit length on [0, level_max]."""
    count = level_max * points_per_unit
    return (np.arange(count, dtype=np.float64) + 0.5) / points_per_unit


def _check_metric_args(order: float, level_max: int, points_per_unit: int) -> tuple[int, int]:
    level_max = int(level_max)
    points_per_unit = int(points_per_unit)
    if level_max < 1:
        raise ValueError(f"level_max must be >= 1, got {level_max}")
    if points_per_unit < 1:
        raise ValueError(f"points_per_unit must be >= 1, got {points_per_unit}")
    float(order)
    return level_max, points_per_unit


def _windowed_sum(profile: np.ndarray, level_max: int, points_per_unit: int) -> float:
    """Fold a squared-profile grid into sum_l 2^-l x_l / (1 + x_l) over nested windows [0, l]^2."""
    squares = profile * profile
    running = squares.cumsum(axis=0).cumsum(axis=1)
    total = 0.0
    for level in range(1, level_max + 1):
        edge = level * points_per_unit - 1
        x = math.sqrt(running[edge, edge]) / points_per_unit
        total += 0.5**level * x / (1.0 + x)
    return total


def local_distance(
    f: SpectralField,
    g: SpectralField,
    order: SobolevOrder,
    level_max: int,
    points_per_unit: int = 64,
) -> float:
    """Local Sobolev metric d(f, g) = sum_{l=1}^{level_max} 2^-l x_l / (1 + x_l).

    Here x_l is the windowed norm (integral over [0, l]^2 of |D^order (f-g)|^2)^(1/2),
    computed by midpoint quadrature with points_per_unit cells per unit length.
    Each term is capped below 1 so the metric is bounded by 1 regardless of
    level_max. Both fields must share one period (windows of a fixed physical
    size only compare meaningfully on a common torus); fields on different
    periods go through cross_period_distance instead.
    """
    level_max, points_per_unit = _check_metric_args(order, level_max, points_per_unit)
    if f.period != g.period:
        raise ValueError(
            f"mismatched periods {f.period} vs {g.period}; use cross_period_distance"
        )
    if f.cutoff != g.cutoff:
        common = (max(f.cutoff[0], g.cutoff[0]), max(f.cutoff[1], g.cutoff[1]))
        f = _embed(f, common)
        g = _embed(g, common)
    diff = f.with_coeffs(f.coeffs - g.coeffs)
    points = _quadrature_points(level_max, points_per_unit)
    profile = evaluate_grid(diff, points, points, order=float(order))
    return _windowed_sum(profile, level_max, points_per_unit)


def cross_period_distance(
    f: SpectralField,
    g: SpectralField,
    order: SobolevOrder,
    level_max: int,
    points_per_unit: int = 64,
) -> float:
    """The same windowed metric for fields living on different tori.

    Each field is evaluated (with its own derivative symbol) on the shared
    observation window [0, level_max]^2 and the profiles are differenced
    pointwise. For equal periods this agrees with local_distance up to
    rounding in the two evaluations.
    """
    level_max, points_per_unit = _check_metric_args(order, level_max, points_per_unit)
    points = _quadrature_points(level_max, points_per_unit)
    profile = evaluate_grid(f, points, points, order=float(order)) - evaluate_grid(
        g, points, points, order=float(order)
    )
    return _windowed_sum(profile, level_max, points_per_unit)


def _embed(f: SpectralField, cutoff: Mode) -> SpectralField:
    """Re-index a field into a containing box, zero-filling the new modes."""
    if f.cutoff == cutoff:
        return f
    n1, n2 = cutoff
    if f.cutoff[0] > n1 or f.cutoff[1] > n2:
        raise ValueError(f"cannot embed cutoff {f.cutoff} into smaller box {cutoff}")
    coeffs = np.zeros(mode_count(cutoff), dtype=np.complex128)
    index = mode_index(cutoff)
    for k, c in zip(mode_box(f.cutoff), f.coeffs):
        coeffs[index[k]] = c
    return SpectralField(f.period, cutoff, coeffs)
