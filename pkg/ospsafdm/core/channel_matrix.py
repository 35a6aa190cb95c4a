# Copyright (c) the ospsafdm authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Effective DAFT-domain channel matrix, noise covariance and conditioning.

Entry (m, m') of H sums, over paths p and integer delays l'' within the pulse
support around l_p,

    h_p exp(j2pi(c1 l''^2 + c2 (m'^2 - m^2) - m' l'' / M))
        * g_T(l'' - l_p) * g_W(m - m' + 2 M c1 l'' - k_p).

g_W is the DTFT of the receive window and is M-periodic in its argument, so
one evaluation per entry covers Doppler shifts that wrap around the band.
"""

import dataclasses
import fractions
import math
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from ospsafdm.core import pulses
from ospsafdm.core.channel import pulse_support
from ospsafdm.core.transmitter import chirp_factor


class DimensionMismatch(ValueError):
    pass


class NotSquare(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class ChannelMatrix:
    entries: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    mode: str = ""
    fingerprint: str = ""

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape


@dataclasses.dataclass(frozen=True)
class NoiseCovariance:
    matrix: np.ndarray
    factors: Tuple[str, ...]

    def scaled(self, sigma2: float) -> np.ndarray:
        return sigma2 * self.matrix


class DaftKernel:
    """Single-path responses for one (numerology, pulse, window) setup.

    g_W tables are cached per fractional Doppler offset, so repeated paths
    with the same offset (estimation grids) share one FFT.

    With a `doppler_guard`, g_W is cut to arguments within +-guard bins, so
    each (path, delay tap) term only reaches the bins around its own peak.
    This is the truncated model a grid-based path estimator fits.
    """

    max_tables = 4096

    def __init__(self, grid, g_T, window, doppler_guard: Optional[float] = None):
        if window.M != grid.M:
            raise DimensionMismatch(
                "window built for M=%d, grid has M=%d" % (window.M, grid.M)
            )
        self.grid = grid
        self.g_T = g_T
        self.window = window
        if doppler_guard is not None and doppler_guard < 0:
            raise ValueError("Doppler guard must be non-negative")
        self.doppler_guard = doppler_guard
        self._tables = {}

    def gw_table(self, delta: float) -> np.ndarray:
        table = self._tables.get(delta)
        if table is None:
            if len(self._tables) >= self.max_tables:
                self._tables.clear()
            table = pulses.gw_table(self.window, delta)
            if self.doppler_guard is not None:
                M = self.grid.M
                arg = np.arange(M) + delta
                arg[arg >= M / 2] -= M
                table[np.abs(arg) > self.doppler_guard] = 0
            self._tables[delta] = table
        return table

    def _gw_offset(self, delay: int, k: float):
        """Splits 2 M c1 l'' - k into an integer bin offset and a fraction."""
        shift = self.grid.daft_shift * delay
        whole = math.floor(shift)
        value = float(shift - whole) - k
        base = math.floor(value)
        return whole + base, value - base

    def path_matrix(self, ell: float, k: float, rows, cols) -> np.ndarray:
        """Unit-gain path response without the c2 factors."""
        M = self.grid.M
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        lo, hi = pulse_support(self.g_T, ell)
        delays = np.arange(lo, hi + 1)
        g = pulses.sample_gt(self.g_T, delays - ell)
        diff = rows[:, None] - cols[None, :]
        out = np.zeros(diff.shape, dtype=np.complex128)
        for d, gd in zip(delays, g):
            if gd == 0:
                continue
            offset, delta = self._gw_offset(int(d), k)
            table = self.gw_table(delta)
            col_phase = np.exp(-2j * np.pi * ((cols * int(d)) % M) / M)
            weight = gd * chirp_factor(self.grid.c1, int(d))
            out += weight * table[(diff + offset) % M] * col_phase[None, :]
        return out

    def chirp_factors(self, rows, cols):
        c2 = self.grid.c2
        return chirp_factor(c2, rows, sign=-1), chirp_factor(c2, cols)

    def path_column(self, ell: float, k: float, col: int, rows=None) -> np.ndarray:
        if rows is None:
            rows = np.arange(self.grid.M)
        rows = np.asarray(rows)
        block = self.path_matrix(ell, k, rows, [col])[:, 0]
        row_c2, col_c2 = self.chirp_factors(rows, np.array([col]))
        return block * row_c2 * col_c2[0]

    def matrix(self, paths, rows, cols) -> np.ndarray:
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        H = np.zeros((len(rows), len(cols)), dtype=np.complex128)
        for p in paths:
            H += p.h * self.path_matrix(p.ell, p.k, rows, cols)
        row_c2, col_c2 = self.chirp_factors(rows, cols)
        return row_c2[:, None] * H * col_c2[None, :]


def build_h(
    cfg,
    realization,
    g_T,
    window,
    full: bool = False,
    rows=None,
    cols=None,
    mode: str = "",
    kernel: Optional[DaftKernel] = None,
) -> ChannelMatrix:
    """H over all M rows and the scheduled columns (all M columns if full)."""
    grid = cfg.grid
    if kernel is None:
        kernel = DaftKernel(grid, g_T, window)
    if rows is None:
        rows = np.arange(grid.M)
    if cols is None:
        cols = np.arange(grid.M) if full else grid.scheduled_indices
    entries = kernel.matrix(realization.paths, rows, cols)
    return ChannelMatrix(entries, np.asarray(rows), np.asarray(cols), mode=mode)


def scheduled_submatrix(H: ChannelMatrix, grid) -> ChannelMatrix:
    lo, hi = grid.scheduled
    row_sel = np.nonzero((H.rows >= lo) & (H.rows < hi))[0]
    col_sel = np.nonzero((H.cols >= lo) & (H.cols < hi))[0]
    if len(row_sel) != hi - lo or len(col_sel) != hi - lo:
        raise DimensionMismatch(
            "matrix does not cover the scheduled range [%d, %d)" % (lo, hi)
        )
    return dataclasses.replace(
        H,
        entries=H.entries[np.ix_(row_sel, col_sel)],
        rows=H.rows[row_sel],
        cols=H.cols[col_sel],
    )


def as_array(H) -> np.ndarray:
    return H.entries if isinstance(H, ChannelMatrix) else np.asarray(H)


def receive_transform(grid, window, removed: Optional[int] = None):
    """S W B C1 as an M x (M + L_D + L_W) matrix, plus the factors applied.

    `removed` defaults to the prefix length that leaves the window support
    [-D, M), i.e. L_D + L_W - D.
    """
    M, n_cp, D = grid.M, grid.N_cp, window.D
    if removed is None:
        removed = n_cp - D
    if removed != n_cp - D:
        raise DimensionMismatch(
            "removing %d samples leaves %d, window spans %d"
            % (removed, M + n_cp - removed, M + D)
        )
    factors = []
    if grid.c1 != 0:
        factors.append("C1")
    if removed:
        factors.append("B")
    if not np.all(window.values == 1):
        factors.append("W")
    if D:
        factors.append("S")

    dechirp = chirp_factor(grid.c1, np.arange(-n_cp, M), sign=-1)
    A = np.zeros((M, M + n_cp), dtype=np.complex128)
    rows = np.arange(M)
    cols = rows + n_cp
    A[rows, cols] = window.values[D:] * dechirp[cols]
    if D:
        tail = np.arange(M - D, M)
        src = tail - M + n_cp
        A[tail, src] += window.values[:D] * dechirp[src]
    return A, factors


def build_noise_covariance(cfg, window, R_n) -> NoiseCovariance:
    """R_w = (C2 F_M S W B C1) R_n (C2 F_M S W B C1)^H."""
    grid = getattr(cfg, "grid", cfg)
    R_n = np.asarray(R_n)
    size = grid.M + grid.N_cp
    if R_n.shape != (size, size):
        raise DimensionMismatch(
            "R_n has shape %s, expected (%d, %d)" % (R_n.shape, size, size)
        )
    A, factors = receive_transform(grid, window)
    factors.append("F_M")
    K = A @ R_n @ A.conj().T
    K = np.fft.fft(K, axis=0, norm="ortho")
    K = np.fft.fft(K.conj().T, axis=0, norm="ortho").conj().T
    if grid.c2 != 0:
        c2 = chirp_factor(grid.c2, np.arange(grid.M), sign=-1)
        K = c2[:, None] * K * c2.conj()[None, :]
        factors.append("C2")
    K = 0.5 * (K + K.conj().T)
    return NoiseCovariance(matrix=K, factors=tuple(factors))


def white_noise(grid, sigma2: float = 1.0) -> np.ndarray:
    return sigma2 * np.eye(grid.M + grid.N_cp)


def condition_number(H) -> float:
    A = as_array(H)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSquare("condition number needs a square matrix, got %s" % (A.shape,))
    s = linalg.svdvals(A)
    if s[-1] < 1e-300:
        return math.inf
    return float(s[0] / s[-1])


def square_factor(H) -> np.ndarray:
    """R of H = QR for a tall H; same singular values, square."""
    A = as_array(H)
    if A.shape[0] < A.shape[1]:
        raise DimensionMismatch("expected a tall matrix, got %s" % (A.shape,))
    (R,) = linalg.qr(A, mode="r")
    return R[: A.shape[1]]


def system_condition_number(H) -> float:
    """Condition number of the system an equalizer inverts.

    Square matrices are used as they are; a tall M x M_schd matrix is
    reduced to its square QR factor first.
    """
    A = as_array(H)
    if A.shape[0] == A.shape[1]:
        return condition_number(A)
    return condition_number(square_factor(A))


def c1_is_shift_aligned(grid) -> bool:
    """True when 2 M c1 is an odd integer."""
    shift = fractions.Fraction(grid.daft_shift)
    return shift.denominator == 1 and shift.numerator % 2 == 1
