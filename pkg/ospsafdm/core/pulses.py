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
"""Time-domain shaping pulses, receive windows and the window DTFT.

Pulses live on the oversampled grid (rate = oversample * M * delta_f) and
carry the index of their t = 0 tap. Windows live on the signed baseband
index range [-D, M).
"""

import dataclasses

import numpy as np
from scipy import signal

# Fractional-delay interpolation kernel, shared with the waveform channel.
FD_HALFWIDTH = 64
FD_KAISER_BETA = 8.0


class RateMismatch(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class SampledPulse:
    taps: np.ndarray
    center_index: int
    rate: float
    halfspan: int
    oversample: int = 1

    @property
    def span(self) -> int:
        """Oversampled taps on each side of the center."""
        return self.halfspan * self.oversample

    def energy(self) -> float:
        return float(np.sum(np.abs(self.taps) ** 2) / self.rate)


@dataclasses.dataclass(frozen=True)
class Window:
    values: np.ndarray
    D: int
    kind: str
    M: int

    def __post_init__(self):
        if len(self.values) != self.M + self.D:
            raise ValueError(
                "window has %d values, expected M + D = %d"
                % (len(self.values), self.M + self.D)
            )

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.D, self.M)

    def at(self, ell) -> np.ndarray:
        """W_T at signed indices; zero outside [-D, M)."""
        ell = np.asarray(ell)
        inside = (ell >= -self.D) & (ell < self.M)
        out = np.zeros(ell.shape, dtype=self.values.dtype)
        out[inside] = self.values[ell[inside] + self.D]
        return out


def _rrc_shape(t: np.ndarray, rolloff: float) -> np.ndarray:
    """Unnormalized root-raised-cosine at t in symbol periods."""
    beta = rolloff
    h = np.empty_like(t)
    at_zero = np.isclose(t, 0.0)
    if beta > 0:
        at_asym = np.isclose(np.abs(t), 1.0 / (4.0 * beta))
    else:
        at_asym = np.zeros_like(at_zero)
    regular = ~(at_zero | at_asym)

    tr = t[regular]
    num = np.sin(np.pi * tr * (1 - beta)) + 4 * beta * tr * np.cos(
        np.pi * tr * (1 + beta)
    )
    den = np.pi * tr * (1 - (4 * beta * tr) ** 2)
    h[regular] = num / den
    h[at_zero] = 1 - beta + 4 * beta / np.pi
    if np.any(at_asym):
        h[at_asym] = (beta / np.sqrt(2)) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
            + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
        )
    return h


def make_rrc(
    rolloff: float, halfspan: int, oversample: int, symbol_rate: float = 1.0
) -> SampledPulse:
    """Unit-energy root-raised-cosine pulse truncated to +-halfspan symbols.

    Energy is measured as sum(|taps|^2) / rate, so the pulse approximates a
    unit-energy continuous pulse at the given symbol rate.
    """
    if not 0 <= rolloff <= 1:
        raise ValueError("rolloff %r outside [0, 1]" % rolloff)
    span = halfspan * oversample
    t = np.arange(-span, span + 1) / float(oversample)
    taps = _rrc_shape(t, rolloff)
    rate = oversample * symbol_rate
    taps = taps * np.sqrt(rate / np.sum(taps ** 2))
    return SampledPulse(
        taps=taps,
        center_index=span,
        rate=rate,
        halfspan=halfspan,
        oversample=oversample,
    )


def make_delta(
    oversample: int = 1, symbol_rate: float = 1.0, halfspan: int = 0
) -> SampledPulse:
    rate = oversample * symbol_rate
    return SampledPulse(
        taps=np.array([np.sqrt(rate)]),
        center_index=0,
        rate=rate,
        halfspan=halfspan,
        oversample=oversample,
    )


def overall_pulse(tx: SampledPulse, rx: SampledPulse) -> SampledPulse:
    """g_T = g_T,tx * g_T,rx, normalized to g_T(0) = 1.

    The half-support is the sum of both pulses' half-supports, so g_T is
    exactly zero beyond it.
    """
    if tx.rate != rx.rate or tx.oversample != rx.oversample:
        raise RateMismatch(
            "tx pulse at rate %r (x%d), rx pulse at rate %r (x%d)"
            % (tx.rate, tx.oversample, rx.rate, rx.oversample)
        )
    taps = np.convolve(tx.taps, rx.taps) / tx.rate
    center = tx.center_index + rx.center_index
    taps = taps / taps[center]
    if np.isrealobj(tx.taps) and np.isrealobj(rx.taps):
        taps = np.real(taps)
    return SampledPulse(
        taps=taps,
        center_index=center,
        rate=tx.rate,
        halfspan=tx.halfspan + rx.halfspan,
        oversample=tx.oversample,
    )


def fractional_delay_filter(frac, halfwidth: int = FD_HALFWIDTH):
    """Kaiser-windowed sinc interpolator.

    Returns (offsets, weights) such that x(n0 + frac) is approximated by
    sum(x[n0 + offsets] * weights). `frac` may be an array, in which case
    weights has one row per value.
    """
    offsets = np.arange(-halfwidth + 1, halfwidth + 1)
    frac = np.asarray(frac, dtype=np.float64)
    u = offsets - frac[..., None]
    taper = np.i0(FD_KAISER_BETA * np.sqrt(np.clip(1 - (u / halfwidth) ** 2, 0, 1)))
    weights = np.sinc(u) * taper / np.i0(FD_KAISER_BETA)
    return offsets, weights


def sample_gt(pulse: SampledPulse, t_over_dt, method: str = "sinc"):
    """g_T(t_over_dt * delta_T), zero beyond the pulse's half-support.

    method="sinc" interpolates the oversampled taps with the same kernel the
    waveform channel uses for fractional delays; method="linear" interpolates
    between adjacent oversampled taps.
    """
    t = np.asarray(t_over_dt, dtype=np.float64)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    y = t * pulse.oversample
    base = np.floor(y)
    frac = y - base
    base = base.astype(np.int64) + pulse.center_index
    taps = pulse.taps
    n = len(taps)

    if method == "linear":
        offsets = np.array([0, 1])
        weights = np.stack([1 - frac, frac], axis=-1)
    elif method == "sinc":
        offsets, weights = fractional_delay_filter(frac)
    else:
        raise ValueError("unknown interpolation method %r" % method)

    idx = base[:, None] + offsets[None, :]
    valid = (idx >= 0) & (idx < n)
    gathered = np.where(valid, taps[np.clip(idx, 0, n - 1)], 0)
    values = np.sum(gathered * weights, axis=-1)
    values[np.abs(t) > pulse.halfspan] = 0
    return values[0] if scalar else values


def make_rc_window(grid) -> Window:
    return rc_window(grid.M, grid.D)


def rc_window(M: int, D: int) -> Window:
    """Nyquist raised-cosine window with roll-off D / M on [-D, M)."""
    ell = np.arange(-D, M, dtype=np.float64)
    values = np.ones(M + D)
    if D > 0:
        excess = np.abs(ell - (M - D) / 2.0) - (M - D) / 2.0
        taper = excess > 0
        values[taper] = np.cos(np.pi / (2.0 * D) * excess[taper]) ** 2
    return Window(values=values, D=D, kind="rc", M=M)


def make_chebyshev_window(length: int, atten_db: float) -> Window:
    """Dolph-Chebyshev window on [0, length), peak 1, D = 0."""
    if length < 2:
        raise ValueError("Chebyshev window needs at least 2 samples")
    if atten_db <= 0:
        raise ValueError("attenuation must be positive")
    values = signal.windows.chebwin(length, at=atten_db, sym=True)
    values = values / np.max(values)
    return Window(values=values, D=0, kind="chebyshev", M=length)


def rectangular_window(M: int) -> Window:
    return Window(values=np.ones(M), D=0, kind="rectangular", M=M)


def eval_gw(window: Window, f_over_df, M: int = None):
    """(1/M) sum_l W_T[l] exp(-j 2 pi f l / M) at real f (in subcarriers)."""
    if M is None:
        M = window.M
    f = np.asarray(f_over_df, dtype=np.float64)
    ell = window.indices
    phase = np.exp(-2j * np.pi * np.multiply.outer(f, ell) / M)
    return phase @ window.values / M


def gw_table(window: Window, delta: float) -> np.ndarray:
    """g_W(n + delta) for n = 0 .. M-1, exact up to FFT rounding.

    g_W is M-periodic in its argument, so G[(n) % M] serves every integer
    offset n.
    """
    M = window.M
    u = window.values * np.exp(-2j * np.pi * delta * window.indices / M)
    v = u[window.D :].copy()
    v[M - window.D :] += u[: window.D]
    return np.fft.fft(v) / M


def pulse_for(cfg):
    """(tx, rx, overall) pulses for an experiment config.

    Each of tx and rx is cut to half of L_T/2, so the overall pulse is
    supported on exactly [-L_T/2, L_T/2].
    """
    symbol_rate = cfg.grid.M * cfg.grid.delta_f
    halfspan = cfg.filter_halfspan // 2
    if cfg.pulse_kind == "delta":
        tx = make_delta(cfg.oversample, symbol_rate, halfspan)
    else:
        tx = make_rrc(cfg.pulse_rolloff, halfspan, cfg.oversample, symbol_rate)
    rx = dataclasses.replace(tx, taps=np.conj(tx.taps[::-1]))
    rx = dataclasses.replace(rx, center_index=len(tx.taps) - 1 - tx.center_index)
    return tx, rx, overall_pulse(tx, rx)


def window_for(cfg, mode: str) -> Window:
    """Receive window of a mode: RC on [-D, M) for os_ps, D = 0 otherwise."""
    M = cfg.grid.M
    if mode == "os_ps":
        return make_rc_window(cfg.grid)
    if mode == "plain":
        return rectangular_window(M)
    if cfg.window_kind == "chebyshev":
        return make_chebyshev_window(M, cfg.cheb_atten_db)
    if cfg.window_kind == "rc":
        return rc_window(M, 0)
    return rectangular_window(M)
