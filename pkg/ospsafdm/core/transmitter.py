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
"""Transmit chain: prechirp, IFFT, extended CP, chirp, pulse shaping.

All stage functions operate along the last axis, so a (frames, M) array
modulates a batch of frames at once. Prefix samples carry negative signed
indices; `first_index` always names the signed index of buffer position 0.
"""

import dataclasses
import fractions
from typing import Optional

import numpy as np
from scipy import signal

# Buffers whose signed index range starts at -(L_D + L_W), -D or 0.
PREFIXED_STAGES = ("s1", "s", "r", "r1")
STAGES = ("x", "x0", "s0", "s1", "s", "r", "r1", "r2", "r3", "y0", "y")


def chirp_factor(rate, index, sign: int = 1) -> np.ndarray:
    """exp(sign * j 2 pi rate * index^2) with the phase reduced exactly.

    `rate` is rational; the product rate * index^2 is reduced modulo 1 in
    integer arithmetic before it is turned into a float.
    """
    rate = fractions.Fraction(rate)
    idx = np.asarray(index, dtype=np.int64)
    num, den = rate.numerator, rate.denominator
    if den < 2 ** 31 and abs(num) < 2 ** 62:
        sq = (idx * idx) % den
        phase = ((sq * (num % den)) % den) / den
    else:
        phase = np.mod(float(rate) * idx.astype(np.float64) ** 2, 1.0)
    return np.exp(sign * 2j * np.pi * phase)


@dataclasses.dataclass
class Waveform:
    """Oversampled baseband waveform; `origin` is the tick of l' = 0."""

    samples: np.ndarray
    origin: int
    oversample: int


@dataclasses.dataclass
class FrameTaps:
    n_cp: int
    D: int
    x: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None
    s0: Optional[np.ndarray] = None
    s1: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    waveform: Optional[Waveform] = None
    r: Optional[np.ndarray] = None
    r1: Optional[np.ndarray] = None
    r2: Optional[np.ndarray] = None
    r3: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None

    def first_index(self, name: str) -> int:
        if name in PREFIXED_STAGES:
            return -self.n_cp
        if name == "r2":
            return -self.D
        if name == "waveform":
            return -self.waveform.origin
        return 0

    def indices(self, name: str) -> np.ndarray:
        buf = self.buffer(name)
        start = self.first_index(name)
        return np.arange(start, start + buf.shape[-1])

    def buffer(self, name: str) -> np.ndarray:
        if name not in STAGES and name != "waveform":
            raise KeyError("unknown stage %r" % name)
        value = getattr(self, name)
        if value is None:
            raise KeyError("stage %r was not recorded" % name)
        return value.samples if name == "waveform" else value

    def recorded(self):
        return [n for n in STAGES + ("waveform",) if getattr(self, n) is not None]


def prechirp(x: np.ndarray, c2) -> np.ndarray:
    M = x.shape[-1]
    return x * chirp_factor(c2, np.arange(M))


def ifft_m(x0: np.ndarray) -> np.ndarray:
    return np.fft.ifft(x0, axis=-1, norm="ortho")


def add_extended_cp(s0: np.ndarray, L_D: int, L_W: int) -> np.ndarray:
    n_cp = L_D + L_W
    M = s0.shape[-1]
    if n_cp >= M:
        raise ValueError("prefix length %d not shorter than M=%d" % (n_cp, M))
    if n_cp == 0:
        return s0.copy()
    return np.concatenate([s0[..., M - n_cp :], s0], axis=-1)


def chirp(s1: np.ndarray, c1, first_index: int) -> np.ndarray:
    """s[l'] = s1[l'] exp(j 2 pi c1 l'^2) on signed indices from first_index."""
    ell = np.arange(first_index, first_index + s1.shape[-1])
    return s1 * chirp_factor(c1, ell)


def shape_to_waveform(
    s: np.ndarray, tx_pulse, oversample: int, first_index: int = 0
) -> Waveform:
    """Zero-stuffs by `oversample` and filters with the transmit pulse."""
    if tx_pulse.oversample != oversample:
        raise ValueError(
            "pulse sampled at x%d, waveform at x%d" % (tx_pulse.oversample, oversample)
        )
    samples = signal.upfirdn(tx_pulse.taps, s, up=oversample, axis=-1)
    origin = -first_index * oversample + tx_pulse.center_index
    return Waveform(samples=samples, origin=origin, oversample=oversample)


def place_scheduled(symbols: np.ndarray, grid) -> np.ndarray:
    """Embeds M_schd symbols per frame into a length-M DAFT grid."""
    lo, hi = grid.scheduled
    if symbols.shape[-1] != hi - lo:
        raise ValueError(
            "expected %d scheduled symbols, got %d" % (hi - lo, symbols.shape[-1])
        )
    x = np.zeros(symbols.shape[:-1] + (grid.M,), dtype=np.complex128)
    x[..., lo:hi] = symbols
    return x


def modulate_frame(x: np.ndarray, cfg, tx_pulse=None) -> FrameTaps:
    """Runs the transmit chain; the waveform stage needs a transmit pulse."""
    grid = cfg.grid
    x = np.asarray(x, dtype=np.complex128)
    if x.shape[-1] == grid.M_schd and grid.M_schd != grid.M:
        x = place_scheduled(x, grid)
    taps = FrameTaps(n_cp=grid.N_cp, D=grid.D, x=x)
    taps.x0 = prechirp(x, grid.c2)
    taps.s0 = ifft_m(taps.x0)
    taps.s1 = add_extended_cp(taps.s0, grid.L_D, grid.L_W)
    taps.s = chirp(taps.s1, grid.c1, -grid.N_cp)
    if tx_pulse is not None:
        taps.waveform = shape_to_waveform(
            taps.s, tx_pulse, cfg.oversample, first_index=-grid.N_cp
        )
    return taps
