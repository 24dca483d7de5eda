"""The quadratic Galerkin drift of 2D incompressible Euler in stream-function form.

For the truncated stream function phi(x) = 2 Re sum_{k > 0} phi_k e_k(x) the
vorticity equation d(lap phi)/dt = -(grad^perp phi . grad) lap phi closes on
the mode box and gives, per positive mode k,

    d phi_k / dt = B_k(phi)
                 = (1/L) (2 pi / L)^2 sum_h (h^perp . k) |k - h|^2 / |k|^2 phi_h phi_{k-h},

where the sum runs over all nonzero lattice modes h with both h and k - h in
the closed box (phi_{-m} = conj(phi_m), zero outside). This is the
triad-complete truncation: it conserves energy and enstrophy exactly, and its
symmetrized kernel per unordered pair {h, k - h} equals -2 alpha(h, k, L)
with alpha the closed-form triad coefficient below.

Two evaluation paths are provided: a precomputed triad table (the normative
definition, exact term-by-term) and a zero-padded pseudo-spectral transform
(an independent oracle evaluating the PDE right-hand side on a grid).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .spectral import (
    Mode,
    SpectralField,
    TWO_PI,
    _sobolev_weights,
    mode_arrays,
    mode_box,
)

TRIAD_SUM = "triad_sum"
PSEUDO_SPECTRAL = "pseudo_spectral"

_BATCH_CHUNK = 256


def alpha(h: Sequence[int], k: Sequence[int], period: float) -> float:
    """Closed-form triad coefficient alpha_{h,k} on the torus of the given period.

    alpha = (1/L)(2 pi / L)^2 (h^perp . k) [ (k . h)/|k|^2 - 1/2 ], symmetric
    under h <-> k - h. Evaluated as an exact integer numerator divided once,
    so nearly-cancelling brackets lose no precision and parallel h, k give
    exactly 0.
    """
    h1, h2 = int(h[0]), int(h[1])
    k1, k2 = int(k[0]), int(k[1])
    if k1 == 0 and k2 == 0:
        raise ValueError("alpha is undefined for k = 0 (division by |k|^2)")
    if h1 == 0 and h2 == 0:
        raise ValueError("alpha is undefined for h = 0 (not a triad)")
    cross = h1 * k2 - h2 * k1
    if cross == 0:
        return 0.0
    k_sq = k1 * k1 + k2 * k2
    numerator = cross * (2 * (k1 * h1 + k2 * h2) - k_sq)
    return (TWO_PI**2 / float(period) ** 3) * (numerator / float(2 * k_sq))


@dataclass(frozen=True)
class DriftResult:
    """A drift evaluation: the time-derivative field plus the method that produced it."""

    field: SpectralField
    method: str


@dataclass(frozen=True)
class _TriadTable:
    """Ordered-pair contribution table for one cutoff.

    For output mode p the pairs offsets[p]:offsets[p+1] list signed-mode
    indices (a, b) and integer kernel weights w = (h^perp . k) |k - h|^2; the
    drift is pref * inv_ksq[p] * sum w * s[a] * s[b] with s the coefficient
    vector extended by its conjugates.

    Each segment lays the two ordered contributions of an unordered pair
    {h, k - h} out adjacently, and the evaluator multiplies both through the
    index-sorted operands (u_idx, v_idx), so the pair shares one bitwise
    product (a complex multiply is not FMA-commutative, so the operand order
    must be pinned).  The weights of a pair are exact integer negatives
    whenever |h| = |k - h|; summing each adjacent pair before the segment
    reduction therefore cancels equal-shell contributions to +0 exactly, and
    single-shell fields get an identically zero drift.  (a_idx, b_idx) keep
    the true ordered (h, k - h) labeling for the contribution dump.
    """

    a_idx: np.ndarray
    b_idx: np.ndarray
    u_idx: np.ndarray
    v_idx: np.ndarray
    weights: np.ndarray
    offsets: np.ndarray
    pair_offsets: np.ndarray
    inv_ksq: np.ndarray


@lru_cache(maxsize=None)
def _triad_table(cutoff: Mode) -> _TriadTable:
    n1, n2 = cutoff
    k1, k2 = mode_arrays(cutoff)
    m = k1.size
    signed1 = np.concatenate([k1, -k1])
    signed2 = np.concatenate([k2, -k2])
    lookup = np.full((2 * n1 + 1, 2 * n2 + 1), -1, dtype=np.int64)
    lookup[signed1 + n1, signed2 + n2] = np.arange(2 * m)

    a_parts: list[np.ndarray] = []
    b_parts: list[np.ndarray] = []
    w_parts: list[np.ndarray] = []
    counts = np.empty(m, dtype=np.int64)
    for p in range(m):
        j1 = k1[p] - signed1
        j2 = k2[p] - signed2
        cross = signed1 * k2[p] - signed2 * k1[p]
        ok = (
            (np.abs(j1) <= n1)
            & (np.abs(j2) <= n2)
            & ((j1 != 0) | (j2 != 0))
            & (cross != 0)
        )
        a = np.nonzero(ok)[0]
        weights = (cross[ok] * (j1[ok] ** 2 + j2[ok] ** 2)).astype(np.float64)
        b = lookup[j1[ok] + n1, j2[ok] + n2]
        if a.size:
            # pair-adjacent layout; the partner of (h, k-h) is (k-h, h) and is
            # always present because the ok mask is symmetric in the pair
            pos = np.full(2 * m, -1, dtype=np.int64)
            pos[a] = np.arange(a.size)
            partner = pos[b]
            lead = np.nonzero(np.arange(a.size) < partner)[0]
            order = np.empty(a.size, dtype=np.int64)
            order[0::2] = lead
            order[1::2] = partner[lead]
            a, b, weights = a[order], b[order], weights[order]
        else:
            # keep reduceat segments nonempty with one null pair
            a = np.zeros(2, dtype=np.int64)
            b = np.zeros(2, dtype=np.int64)
            weights = np.zeros(2, dtype=np.float64)
        a_parts.append(a)
        b_parts.append(b)
        w_parts.append(weights)
        counts[p] = a.size

    offsets = np.zeros(m, dtype=np.int64)
    np.cumsum(counts[:-1], out=offsets[1:])
    a_idx = np.concatenate(a_parts)
    b_idx = np.concatenate(b_parts)
    table = _TriadTable(
        a_idx=a_idx,
        b_idx=b_idx,
        u_idx=np.minimum(a_idx, b_idx),
        v_idx=np.maximum(a_idx, b_idx),
        weights=np.concatenate(w_parts),
        offsets=offsets,
        pair_offsets=offsets // 2,
        inv_ksq=1.0 / (k1 * k1 + k2 * k2).astype(np.float64),
    )
    for arr in (
        table.a_idx,
        table.b_idx,
        table.u_idx,
        table.v_idx,
        table.weights,
        table.offsets,
        table.pair_offsets,
        table.inv_ksq,
    ):
        arr.flags.writeable = False
    return table


def _triad_batch(coeffs: np.ndarray, period: float, cutoff: Mode) -> np.ndarray:
    table = _triad_table(cutoff)
    prefactor = TWO_PI**2 / float(period) ** 3
    out = np.empty_like(coeffs)
    for lo in range(0, coeffs.shape[0], _BATCH_CHUNK):
        block = coeffs[lo : lo + _BATCH_CHUNK]
        signed = np.concatenate([block, np.conj(block)], axis=1)
        terms = signed[:, table.u_idx] * signed[:, table.v_idx] * table.weights
        # collapse each unordered pair before the segment sum; equal-shell
        # partners are exact negatives, so shell fields stay bitwise steady
        pairs = terms[:, 0::2] + terms[:, 1::2]
        sums = np.add.reduceat(pairs, table.pair_offsets, axis=1)
        out[lo : lo + _BATCH_CHUNK] = prefactor * (sums * table.inv_ksq)
    return out


def _check_grid(grid: int, cutoff: Mode) -> int:
    grid = int(grid)
    needed = 4 * max(cutoff)
    if grid < needed:
        raise ValueError(
            f"insufficient grid {grid} for cutoff {cutoff}: "
            f"need at least 4 * max cutoff component = {needed} for dealiasing"
        )
    return grid


def _pseudo_batch(coeffs: np.ndarray, period: float, cutoff: Mode, grid: int) -> np.ndarray:
    out = np.empty_like(coeffs)
    for lo in range(0, coeffs.shape[0], _BATCH_CHUNK):
        out[lo : lo + _BATCH_CHUNK] = _pseudo_chunk(
            coeffs[lo : lo + _BATCH_CHUNK], period, cutoff, grid
        )
    return out


def _pseudo_chunk(coeffs: np.ndarray, period: float, cutoff: Mode, grid: int) -> np.ndarray:
    """One chunk of the collocation oracle in the Hermitian half-spectrum.

    The physical fields are real, so every transform runs through rfft2 and
    irfft2 on columns 0..m//2. Boxed modes with k2 < 0 live in the dropped
    half and are stored (and read back) through their conjugates; k2 = 0
    modes need both Hermitian partners placed explicitly because only the
    last axis's symmetry is implied by the layout.
    """
    m = _check_grid(grid, cutoff)
    length = float(period)
    k1, k2 = mode_arrays(cutoff)
    half = m // 2
    pos = k2 > 0
    neg = k2 < 0
    axis = k2 == 0
    spec = np.zeros((coeffs.shape[0], m, half + 1), dtype=np.complex128)
    spec[:, k1[pos] % m, k2[pos]] = coeffs[:, pos]
    spec[:, (-k1[neg]) % m, -k2[neg]] = np.conj(coeffs[:, neg])
    spec[:, k1[axis] % m, 0] = coeffs[:, axis]
    spec[:, (-k1[axis]) % m, 0] = np.conj(coeffs[:, axis])

    m1 = (np.fft.fftfreq(m) * m)[:, None]
    m2 = (np.fft.rfftfreq(m) * m)[None, :]
    d1 = 1j * (TWO_PI / length) * m1
    d2 = 1j * (TWO_PI / length) * m2
    lap = -((TWO_PI / length) ** 2) * (m1 * m1 + m2 * m2)
    shape = (m, m)

    scale = m * m / length  # inverse-transform normalization for the (1/L) basis
    u1 = np.fft.irfft2(spec * (-d2), s=shape) * scale
    u2 = np.fft.irfft2(spec * d1, s=shape) * scale
    g1 = np.fft.irfft2(spec * (lap * d1), s=shape) * scale
    g2 = np.fft.irfft2(spec * (lap * d2), s=shape) * scale

    advect = -(u1 * g1 + u2 * g2)
    transformed = np.fft.rfft2(advect) * (length / (m * m))
    vort_rate = np.empty_like(coeffs)
    nonneg = ~neg
    vort_rate[:, nonneg] = transformed[:, k1[nonneg] % m, k2[nonneg]]
    vort_rate[:, neg] = np.conj(transformed[:, (-k1[neg]) % m, -k2[neg]])
    lap_box = -((TWO_PI / length) ** 2) * (k1 * k1 + k2 * k2).astype(np.float64)
    return vort_rate / lap_box


def drift_batch(
    coeffs: np.ndarray,
    period: float,
    cutoff: Sequence[int],
    method: str = TRIAD_SUM,
    grid: int | None = None,
) -> np.ndarray:
    """Evaluate the drift for a whole coefficient matrix (rows are fields).

    Rows are processed independently in fixed-size chunks, so the result is
    bitwise independent of batching and threading.
    """
    cutoff = (int(cutoff[0]), int(cutoff[1]))
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    if coeffs.ndim != 2:
        raise ValueError(f"coeffs must be 2-D (batch, modes), got shape {coeffs.shape}")
    if method == TRIAD_SUM:
        return _triad_batch(coeffs, period, cutoff)
    if method == PSEUDO_SPECTRAL:
        if grid is None:
            grid = 4 * max(cutoff)
        return _pseudo_batch(coeffs, period, cutoff, grid)
    raise ValueError(f"unknown drift method {method!r}")


def drift(f: SpectralField) -> DriftResult:
    """The Galerkin drift B(phi) via the exact triad table."""
    coeffs = _triad_batch(f.coeffs[None, :], f.period, f.cutoff)[0]
    return DriftResult(field=f.with_coeffs(coeffs), method=TRIAD_SUM)


def drift_pseudospectral(f: SpectralField, grid: int | None = None) -> DriftResult:
    """The drift via the zero-padded collocation oracle.

    Differentiates the truncated series spectrally on a uniform grid of the
    given size (default 4x the max cutoff component, the dealiasing minimum),
    multiplies pointwise, and projects back onto the box. Agrees with drift()
    to round-off because the padding leaves no aliased triad.
    """
    if grid is None:
        grid = 4 * max(f.cutoff)
    coeffs = _pseudo_batch(f.coeffs[None, :], f.period, f.cutoff, grid)[0]
    return DriftResult(field=f.with_coeffs(coeffs), method=PSEUDO_SPECTRAL)


def quadratic_derivative(f: SpectralField, functional: str) -> float:
    """Directional derivative of energy or enstrophy along the drift at f.

    Closed form 2 sum_k w_k Re(conj(phi_k) B_k) with w the order-1 or order-2
    Sobolev weights; identically zero in exact arithmetic because the
    truncation is triad-complete.
    """
    orders = {"energy": 1.0, "enstrophy": 2.0}
    if functional not in orders:
        raise ValueError(f"functional must be one of {sorted(orders)}, got {functional!r}")
    rate = drift(f).field
    weights = _sobolev_weights(f.period, f.cutoff, orders[functional])
    return 2.0 * float(np.dot(weights, (np.conj(f.coeffs) * rate.coeffs).real))


@dataclass(frozen=True)
class JacobianTraceResult:
    trace: float
    frobenius_norm: float


def jacobian_trace_estimate(f: SpectralField, eps: float = 1e-5) -> JacobianTraceResult:
    """Central-difference trace of the drift Jacobian in real coordinates.

    Coordinates are (Re phi_k, Im phi_k) over the box. The drift is quadratic,
    so central differences recover the Jacobian exactly up to round-off; a
    vanishing trace is the discrete Liouville property behind invariance of
    the Gibbs measures. The Frobenius norm of the same estimated Jacobian is
    returned for relative comparisons.
    """
    eps = float(eps)
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    m = f.coeffs.size
    dim = 2 * m
    deltas = np.zeros((dim, m), dtype=np.complex128)
    idx = np.arange(m)
    deltas[idx, idx] = eps
    deltas[m + idx, idx] = 1j * eps
    batch = np.concatenate([f.coeffs[None, :] + deltas, f.coeffs[None, :] - deltas])
    rates = _triad_batch(batch, f.period, f.cutoff)
    columns = (rates[:dim] - rates[dim:]) / (2.0 * eps)
    # row j is dF/dx_j with F in complex form; flatten to real coordinates
    jacobian_t = np.concatenate([columns.real, columns.imag], axis=1)
    return JacobianTraceResult(
        trace=float(np.trace(jacobian_t)),
        frobenius_norm=float(np.sqrt(np.sum(jacobian_t * jacobian_t))),
    )


def write_triad_contributions(f: SpectralField, path) -> int:
    """Debugging dump: one CSV row per ordered triad contribution to drift(f).

    Columns are k1,k2,h1,h2,alpha,contribution where alpha is the symmetric
    closed-form coefficient of the triad and contribution the ordered term
    added to B_k. Returns the number of rows written.
    """
    table = _triad_table(f.cutoff)
    k1, k2 = mode_arrays(f.cutoff)
    signed = np.concatenate([f.coeffs, np.conj(f.coeffs)])
    signed1 = np.concatenate([k1, -k1])
    signed2 = np.concatenate([k2, -k2])
    prefactor = TWO_PI**2 / f.period**3
    ends = np.append(table.offsets[1:], table.a_idx.size)
    rows = 0
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["k1", "k2", "h1", "h2", "alpha", "contribution"])
        for p in range(k1.size):
            for i in range(table.offsets[p], ends[p]):
                if table.weights[i] == 0.0:
                    continue
                a = table.a_idx[i]
                h = (int(signed1[a]), int(signed2[a]))
                term = (
                    prefactor
                    * table.inv_ksq[p]
                    * table.weights[i]
                    * signed[a]
                    * signed[table.b_idx[i]]
                )
                writer.writerow(
                    [
                        int(k1[p]),
                        int(k2[p]),
                        h[0],
                        h[1],
                        repr(alpha(h, (int(k1[p]), int(k2[p])), f.period)),
                        repr(complex(term)),
                    ]
                )
                rows += 1
    return rows
