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
"""Doubly-selective multipath channel.

Two backends: a waveform backend acting on the oversampled transmit signal
(constant path delays, narrowband Doppler) and a discrete backend acting on
baseband samples with the sampled overall pulse. Both use signed time
indices with l = 0 at the first data sample.
"""

import collections
import dataclasses
import math
import zlib
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from ospsafdm.core import pulses
from ospsafdm.core.config import SPEED_OF_LIGHT, ChannelGenParams
from ospsafdm.core.transmitter import Waveform


class IndexOutOfSupport(ValueError):
    pass


ChannelPath = collections.namedtuple(
    "ChannelPath", "h ell k beta tau nu v f_c", defaults=(None,) * 5
)


@dataclasses.dataclass(frozen=True)
class ChannelRealization:
    paths: tuple
    params: Optional[ChannelGenParams] = None

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))

    @property
    def P(self) -> int:
        return len(self.paths)

    @property
    def h(self) -> np.ndarray:
        return np.array([p.h for p in self.paths], dtype=np.complex128)

    @property
    def ell(self) -> np.ndarray:
        return np.array([p.ell for p in self.paths], dtype=np.float64)

    @property
    def k(self) -> np.ndarray:
        return np.array([p.k for p in self.paths], dtype=np.float64)

    def scaled_doppler(self, factor: float) -> "ChannelRealization":
        paths = [p._replace(k=p.k * factor) for p in self.paths]
        return ChannelRealization(paths, self.params)


def single_path(h=1.0, ell=0.0, k=0.0) -> ChannelRealization:
    return ChannelRealization([ChannelPath(complex(h), float(ell), float(k))])


def experiment_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def trial_rng(seed: int, experiment: str, trial: int, stream: int = 0):
    """Independent generator per (seed, experiment, trial, stream)."""
    key = [int(seed), experiment_id(experiment), int(trial)]
    if stream:
        key.append(int(stream))
    return np.random.default_rng(key)


def draw_channel(
    params: ChannelGenParams, rng: np.random.Generator, grid=None
) -> ChannelRealization:
    P = params.P
    scale = math.sqrt(params.gain_variance / 2.0)
    gains = scale * (rng.standard_normal(P) + 1j * rng.standard_normal(P))
    ell = rng.uniform(params.delay_low, params.delay_high, P)
    theta = rng.uniform(0.0, 2.0 * np.pi, P)

    if not params.physical:
        k = params.K_max * np.cos(theta)
        return realization_from_arrays(gains, ell, k, params)

    if grid is None:
        raise ValueError("physical channel drawing needs the grid numerology")
    f_c = params.carrier_hz
    paths = []
    for beta, ell_p, theta_p in zip(gains, ell, theta):
        tau = ell_p * grid.delta_t
        v = params.speed_mps * math.cos(theta_p)
        nu = v * f_c / SPEED_OF_LIGHT
        h = beta * np.exp(-2j * np.pi * f_c * tau)
        paths.append(
            ChannelPath(
                h=complex(h),
                ell=float(ell_p),
                k=nu / grid.delta_f,
                beta=complex(beta),
                tau=tau,
                nu=nu,
                v=v,
                f_c=f_c,
            )
        )
    return ChannelRealization(paths, params)


def pulse_support(g_T, ell_p: float):
    """Integer delays l'' in [floor(l_p) - L_T/2, ceil(l_p) + L_T/2]."""
    lo = int(math.floor(ell_p)) - g_T.halfspan
    hi = int(math.ceil(ell_p)) + g_T.halfspan
    return lo, hi


def apply_discrete_channel(s: np.ndarray, realization, g_T, grid) -> np.ndarray:
    """r[l] = sum_p h_p e^{j2pi k_p l/M} sum_l'' s[l - l''] g_T(l'' - l_p).

    `s` spans l in [-(L_D + L_W), M) along its last axis; samples before the
    frame are zero.
    """
    n = s.shape[-1]
    ell = np.arange(-grid.N_cp, grid.M)
    if n != len(ell):
        raise ValueError("expected %d samples, got %d" % (len(ell), n))
    r = np.zeros(s.shape, dtype=np.complex128)
    for p in realization.paths:
        lo, hi = pulse_support(g_T, p.ell)
        if lo < 0 or hi > grid.L_R:
            raise IndexOutOfSupport(
                "path at delay %.3f needs l'' in [%d, %d], supported [0, %d]"
                % (p.ell, lo, hi, grid.L_R)
            )
        delays = np.arange(lo, hi + 1)
        g = pulses.sample_gt(g_T, delays - p.ell)
        acc = np.zeros(s.shape, dtype=np.complex128)
        for d, gd in zip(delays, g):
            if gd == 0 or d >= n:
                continue
            acc[..., d:] += gd * s[..., : n - d]
        r += p.h * np.exp(2j * np.pi * p.k * ell / grid.M) * acc
    return r


def apply_waveform_channel(
    waveform: Waveform, realization, grid, halfwidth: int = pulses.FD_HALFWIDTH
) -> Waveform:
    """sum_p h_p in(t - tau_p) exp(j 2 pi nu_p t), t = 0 at the first data sample.

    Fractional delays use the windowed-sinc interpolator on the oversampled
    grid; the output buffer keeps the input origin and grows by the longest
    delay plus the interpolator half-width.
    """
    U = waveform.oversample
    x = waveform.samples
    max_delay = max((p.ell for p in realization.paths), default=0.0)
    pad = int(math.ceil(max(max_delay, 0.0) * U)) + halfwidth
    n = x.shape[-1] + pad
    xp = np.zeros(x.shape[:-1] + (n,), dtype=np.complex128)
    xp[..., : x.shape[-1]] = x
    ticks = np.arange(n) - waveform.origin

    out = np.zeros_like(xp)
    for p in realization.paths:
        shift = p.ell * U
        a = int(math.ceil(shift))
        _, weights = pulses.fractional_delay_filter(a - shift, halfwidth)
        # Reversed kernel: c[t] = sum_n xp[t - H + n] w[n].
        c = signal.upfirdn(weights[::-1], xp, axis=-1)
        start = halfwidth - a
        delayed = np.zeros_like(xp)
        if start >= 0:
            delayed[...] = c[..., start : start + n]
        else:
            delayed[..., -start:] = c[..., : n + start]
        doppler = np.exp(2j * np.pi * p.k * ticks / (U * grid.M))
        out += p.h * delayed * doppler
    return Waveform(samples=out, origin=waveform.origin, oversample=U)


def add_noise(r: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    if sigma2 < 0:
        raise ValueError("noise variance must be non-negative")
    if sigma2 == 0:
        return np.array(r, dtype=np.complex128, copy=True)
    return r + complex_noise(r.shape, rng) * math.sqrt(sigma2)


def complex_noise(shape, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance circular complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def realization_from_arrays(
    h: Sequence[complex], ell: Sequence[float], k: Sequence[float], params=None
) -> ChannelRealization:
    paths = [
        ChannelPath(complex(hh), float(ll), float(kk)) for hh, ll, kk in zip(h, ell, k)
    ]
    return ChannelRealization(paths, params)
