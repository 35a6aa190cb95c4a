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
"""Receive chain in three modes.

os_ps:          dechirp, keep [-D, M), RC window, overlap-sum, FFT.
direct_window:  dechirp, keep [0, M), multiply by a window on [0, M), FFT.
plain:          dechirp, keep [0, M), FFT.

The window is applied after de-chirping in every mode.
"""

import collections

import numpy as np
from scipy import signal

from ospsafdm.core import pulses
from ospsafdm.core.transmitter import FrameTaps, Waveform, chirp_factor


class AlignmentError(ValueError):
    pass


class SupportMismatch(ValueError):
    pass


ReceiveMode = collections.namedtuple("ReceiveMode", "kind window")


def receive_mode(cfg, kind: str) -> ReceiveMode:
    window = pulses.window_for(cfg, kind)
    check_mode(ReceiveMode(kind, window), cfg.grid)
    return ReceiveMode(kind, window)


def check_mode(mode: ReceiveMode, grid):
    if mode.kind == "os_ps":
        if mode.window.D != grid.D or mode.window.M != grid.M:
            raise SupportMismatch(
                "os_ps window spans [-%d, %d), grid needs [-%d, %d)"
                % (mode.window.D, mode.window.M, grid.D, grid.M)
            )
    elif mode.kind == "direct_window":
        if mode.window.D != 0:
            raise SupportMismatch("direct_window needs a window on [0, M)")
    elif mode.kind != "plain":
        raise ValueError("unknown receive mode %r" % mode.kind)


def removed_prefix(mode: ReceiveMode, grid) -> int:
    """Prefix length dropped by a mode; D = 0 modes drop all of it."""
    if mode.kind == "os_ps":
        return grid.L_R
    return grid.N_cp


def matched_filter_and_sample(
    waveform: Waveform, rx_pulse, grid, tx_pulse=None
) -> np.ndarray:
    """Filters with rx_pulse and samples l in [-(L_D + L_W), M).

    The gain makes the sampled overall pulse equal 1 at zero offset.
    """
    U = waveform.oversample
    if rx_pulse.oversample != U:
        raise AlignmentError(
            "rx pulse at x%d, waveform at x%d" % (rx_pulse.oversample, U)
        )
    if tx_pulse is not None:
        peak = np.convolve(tx_pulse.taps, rx_pulse.taps)[
            tx_pulse.center_index + rx_pulse.center_index
        ]
    else:
        peak = np.sum(np.abs(rx_pulse.taps) ** 2)

    filtered = signal.upfirdn(rx_pulse.taps, waveform.samples, axis=-1)
    ell = np.arange(-grid.N_cp, grid.M)
    pos = waveform.origin + rx_pulse.center_index + ell * U
    if pos[0] < 0 or pos[-1] >= filtered.shape[-1]:
        raise AlignmentError(
            "sampling ticks [%d, %d] outside the %d-tick buffer"
            % (pos[0], pos[-1], filtered.shape[-1])
        )
    return filtered[..., pos] / peak


def dechirp(r: np.ndarray, c1, first_index: int) -> np.ndarray:
    ell = np.arange(first_index, first_index + r.shape[-1])
    return r * chirp_factor(c1, ell, sign=-1)


def remove_partial_prefix(r1: np.ndarray, L_R: int) -> np.ndarray:
    return r1[..., L_R:]


def window_overlap_sum(r2: np.ndarray, window) -> np.ndarray:
    """r3[l] = W[l - M] r2[l - M] + W[l] r2[l] for 0 <= l < M."""
    M, D = window.M, window.D
    if r2.shape[-1] != M + D:
        raise SupportMismatch(
            "r2 has %d samples, window spans [-%d, %d)" % (r2.shape[-1], D, M)
        )
    weighted = r2 * window.values
    r3 = weighted[..., D:].copy()
    if D:
        r3[..., M - D :] += weighted[..., :D]
    return r3


def fft_m(r3: np.ndarray) -> np.ndarray:
    return np.fft.fft(r3, axis=-1, norm="ortho")


def deprechirp(y0: np.ndarray, c2) -> np.ndarray:
    return y0 * chirp_factor(c2, np.arange(y0.shape[-1]), sign=-1)


def demodulate_frame(received, mode: ReceiveMode, cfg, rx_pulse=None, tx_pulse=None):
    """Returns (y, taps). `received` is either a Waveform or baseband r."""
    grid = cfg.grid
    check_mode(mode, grid)
    window = mode.window if mode.kind != "plain" else pulses.rectangular_window(grid.M)
    taps = FrameTaps(n_cp=grid.N_cp, D=window.D)

    if isinstance(received, Waveform):
        if rx_pulse is None:
            raise AlignmentError("a waveform needs the receive pulse")
        taps.r = matched_filter_and_sample(received, rx_pulse, grid, tx_pulse)
    else:
        taps.r = np.asarray(received, dtype=np.complex128)

    taps.r1 = dechirp(taps.r, grid.c1, -grid.N_cp)
    taps.r2 = remove_partial_prefix(taps.r1, removed_prefix(mode, grid))
    taps.r3 = window_overlap_sum(taps.r2, window)
    taps.y0 = fft_m(taps.r3)
    taps.y = deprechirp(taps.y0, grid.c2)
    return taps.y, taps
