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
"""Linear equalizers, Gray QAM and link metrics."""

import math
import warnings

import numpy as np
from scipy import linalg, special, stats

from ospsafdm.core.channel_matrix import DimensionMismatch, as_array


class SolveFailure(RuntimeError):
    pass


class BadLength(ValueError):
    pass


def lmmse_equalize(y, H, R_w, Es: float = 1.0) -> np.ndarray:
    """x = Es H^H (Es H H^H + R_w)^-1 y.

    H may be tall (all received rows, scheduled columns). `y` may carry
    leading batch axes.
    """
    A = as_array(H)
    R_w = as_array(R_w)
    y = np.asarray(y)
    if Es <= 0:
        raise ValueError("symbol energy must be positive")
    if A.shape[0] != y.shape[-1] or R_w.shape != (A.shape[0], A.shape[0]):
        raise DimensionMismatch(
            "H %s, R_w %s and y %s do not match" % (A.shape, R_w.shape, y.shape)
        )
    C = Es * (A @ A.conj().T) + R_w
    rhs = y.reshape(-1, y.shape[-1]).T
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            z = linalg.solve(C, rhs, assume_a="her")
    except (linalg.LinAlgError, linalg.LinAlgWarning) as e:
        raise SolveFailure("LMMSE system is singular: %s" % e) from e
    if not np.all(np.isfinite(z)):
        raise SolveFailure("LMMSE solve produced non-finite values")
    x = Es * (A.conj().T @ z)
    return x.T.reshape(y.shape[:-1] + (A.shape[1],))


def zf_equalize(y, H) -> np.ndarray:
    """Least-squares (zero-forcing) reference equalizer."""
    A = as_array(H)
    y = np.asarray(y)
    rhs = y.reshape(-1, y.shape[-1]).T
    x, *_ = linalg.lstsq(A, rhs)
    return x.T.reshape(y.shape[:-1] + (A.shape[1],))


def gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = np.array(g, copy=True)
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


class QamSpec:
    """Square Gray QAM. The first half of a symbol's bits select I.

    Per axis, bit pattern g (MSB first) maps to level (L - 1) - 2 *
    gray_to_binary(g), so all-zero bits sit in the first quadrant.
    """

    def __init__(self, bits_per_symbol: int):
        if bits_per_symbol < 2 or bits_per_symbol % 2:
            raise BadLength(
                "QAM needs an even number of bits, got %d" % bits_per_symbol
            )
        self.bits_per_symbol = bits_per_symbol
        self.axis_bits = bits_per_symbol // 2
        self.levels = 1 << self.axis_bits
        self.scale = math.sqrt(2.0 * (self.levels ** 2 - 1) / 3.0)

    @property
    def constellation(self) -> np.ndarray:
        """Point for every label 0 .. 2^Q_m - 1."""
        labels = np.arange(1 << self.bits_per_symbol)
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        bits = (labels[:, None] >> shifts) & 1
        return self.modulate(bits.reshape(-1))

    def _axis_level(self, bits: np.ndarray) -> np.ndarray:
        weights = 1 << np.arange(self.axis_bits - 1, -1, -1)
        g = bits @ weights
        return (self.levels - 1) - 2 * gray_to_binary(g)

    def modulate(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64)
        if bits.shape[-1] % self.bits_per_symbol:
            raise BadLength(
                "%d bits do not fill %d-bit symbols"
                % (bits.shape[-1], self.bits_per_symbol)
            )
        groups = bits.reshape(bits.shape[:-1] + (-1, self.bits_per_symbol))
        i = self._axis_level(groups[..., : self.axis_bits])
        q = self._axis_level(groups[..., self.axis_bits :])
        return (i + 1j * q) / self.scale

    def _axis_bits(self, values: np.ndarray) -> np.ndarray:
        k = np.rint(((self.levels - 1) - values * self.scale) / 2.0)
        k = np.clip(k, 0, self.levels - 1).astype(np.int64)
        g = k ^ (k >> 1)
        shifts = np.arange(self.axis_bits - 1, -1, -1)
        return (g[..., None] >> shifts) & 1

    def demodulate(self, symbols) -> np.ndarray:
        """Minimum-distance hard decisions, one bit row per frame."""
        symbols = np.asarray(symbols)
        bits = np.concatenate(
            [self._axis_bits(symbols.real), self._axis_bits(symbols.imag)], axis=-1
        )
        return bits.reshape(symbols.shape[:-1] + (-1,))


def qam_modulate(bits, bits_per_symbol: int) -> np.ndarray:
    return QamSpec(bits_per_symbol).modulate(bits)


def qam_demodulate(symbols, bits_per_symbol: int) -> np.ndarray:
    return QamSpec(bits_per_symbol).demodulate(symbols)


def nmse(H_hat, H) -> float:
    A, B = as_array(H_hat), as_array(H)
    if A.shape != B.shape:
        raise DimensionMismatch("shapes %s and %s differ" % (A.shape, B.shape))
    num = float(np.sum(np.abs(A - B) ** 2))
    den = float(np.sum(np.abs(B) ** 2))
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def ber_count(tx_bits, rx_bits):
    tx_bits = np.asarray(tx_bits)
    rx_bits = np.asarray(rx_bits)
    if tx_bits.shape != rx_bits.shape:
        raise BadLength(
            "bit streams of shape %s and %s" % (tx_bits.shape, rx_bits.shape)
        )
    return int(np.count_nonzero(tx_bits != rx_bits)), int(tx_bits.size)


def qpsk_awgn_ber(snr_db) -> np.ndarray:
    """Q(sqrt(Es/N0)) for Gray QPSK."""
    snr = 10.0 ** (np.asarray(snr_db, dtype=np.float64) / 10.0)
    return 0.5 * special.erfc(np.sqrt(snr) / math.sqrt(2.0))


def sign_test_pvalue(wins: int, losses: int) -> float:
    """One-sided sign test that wins outnumber losses; ties are dropped."""
    n = wins + losses
    if n == 0:
        return 1.0
    return float(stats.binom.sf(wins - 1, n, 0.5))
