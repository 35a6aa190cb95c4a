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
"""Numerology, channel statistics and experiment configuration.

Everything here is immutable. A config travels from the config file (or a
profile) through `validate_config` and is then shared read-only by the
transmitter, the channel, the receiver and the sweep workers.
"""

import ast
import collections
import dataclasses
import fractions
import hashlib
import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

Fraction = fractions.Fraction

MODES = ("os_ps", "direct_window", "plain")
WINDOW_KINDS = ("rc", "chebyshev", "rectangular")
PULSE_KINDS = ("rrc", "delta")
STRATEGIES = ("low_overhead", "low_sidelobe")
EQUALIZER_NOISE = ("white", "colored")

SPEED_OF_LIGHT = 299792458.0


class InvalidConfig(ValueError):
    def __init__(self, field: str, reason: str):
        super().__init__("%s: %s" % (field, reason))
        self.field = field
        self.reason = reason


class ConfigViolations(InvalidConfig):
    """Raised when more than one constraint is violated at once."""

    def __init__(self, violations):
        self.violations = list(violations)
        first = self.violations[0]
        super().__init__(first.field, first.reason)
        self.args = ("; ".join(str(v) for v in self.violations),)


class StrategyInfeasible(ValueError):
    pass


def to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1 << 32)
    return Fraction(value)


@dataclasses.dataclass(frozen=True)
class GridConfig:
    M: int
    delta_f: float
    c1: Fraction
    c2: Fraction
    L_D: int
    L_W: int
    L_R: int
    scheduled: Tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "c1", to_fraction(self.c1))
        object.__setattr__(self, "c2", to_fraction(self.c2))
        object.__setattr__(self, "scheduled", tuple(int(v) for v in self.scheduled))

    @property
    def N_cp(self) -> int:
        """Length of the extended cyclic prefix, L_D + L_W."""
        return self.L_D + self.L_W

    @property
    def D(self) -> int:
        return self.L_D + self.L_W - self.L_R

    @property
    def alpha_W(self) -> Fraction:
        return Fraction(self.D, self.M)

    @property
    def delta_t(self) -> float:
        return 1.0 / (self.M * self.delta_f)

    @property
    def M_schd(self) -> int:
        return self.scheduled[1] - self.scheduled[0]

    @property
    def scheduled_indices(self) -> np.ndarray:
        return np.arange(self.scheduled[0], self.scheduled[1])

    @property
    def daft_shift(self) -> Fraction:
        """DAFT-domain shift per delay sample, 2 M c1."""
        return 2 * self.M * self.c1

    def with_prefix(self, L_W: int, L_R: int) -> "GridConfig":
        return dataclasses.replace(self, L_W=int(L_W), L_R=int(L_R))

    def with_alpha(self, alpha_w) -> "GridConfig":
        """Re-derives (L_W, L_R) so that D == round(alpha_w * M).

        L_R is kept where possible and the extension is carried by L_W; when
        the requested overlap is shorter than L_D - L_R, more of the prefix is
        removed instead.
        """
        target = int(round(float(alpha_w) * self.M))
        if target >= self.L_D - self.L_R:
            return self.with_prefix(target - self.L_D + self.L_R, self.L_R)
        return self.with_prefix(0, self.L_D - target)


@dataclasses.dataclass(frozen=True)
class ChannelGenParams:
    P: int
    K_max: float
    K_res: int
    delay_low: float
    delay_high: float
    gain_variance: Optional[float] = None
    carrier_hz: Optional[float] = None
    speed_mps: Optional[float] = None

    def __post_init__(self):
        if self.gain_variance is None and self.P:
            object.__setattr__(self, "gain_variance", 1.0 / self.P)

    @property
    def physical(self) -> bool:
        return self.carrier_hz is not None and self.speed_mps is not None


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    grid: GridConfig
    chan: ChannelGenParams
    pulse_rolloff: float = 0.2
    oversample: int = 8
    filter_halfspan: int = 16
    window_kind: str = "chebyshev"
    cheb_atten_db: float = 60.0
    mode: str = "os_ps"
    qam_bits: int = 2
    snr_grid_db: Tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    trials: int = 50
    seed: int = 0
    pulse_kind: str = "rrc"
    equalizer_noise: str = "white"

    def __post_init__(self):
        object.__setattr__(
            self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db)
        )
        object.__setattr__(self, "mode", normalize_mode(self.mode))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_grid(self, grid: GridConfig) -> "ExperimentConfig":
        return dataclasses.replace(self, grid=grid)


# Validated configs are plain ExperimentConfig instances that passed
# validate_config.
ValidatedConfig = ExperimentConfig

PrefixPlan = collections.namedtuple("PrefixPlan", "L_W L_R alpha_W")


def normalize_mode(mode: str) -> str:
    return mode.strip().replace("-", "_") if isinstance(mode, str) else mode


def compute_c1(K_max: int, K_res: int, M: int) -> Fraction:
    return Fraction(2 * (K_max + K_res) + 1, 2 * M)


def resolve_prefix_strategy(
    strategy: str, L_tau_est: int, L_W_min: int, grid: GridConfig
) -> PrefixPlan:
    strategy = normalize_mode(strategy)
    if strategy not in STRATEGIES:
        raise StrategyInfeasible("unknown prefix strategy %r" % strategy)
    if L_tau_est > grid.L_D:
        raise StrategyInfeasible(
            "estimated delay spread %d exceeds L_D=%d" % (L_tau_est, grid.L_D)
        )
    L_W = 0 if strategy == "low_overhead" else int(L_W_min)
    D = grid.L_D + L_W - L_tau_est
    if D < 0 or D >= grid.M:
        raise StrategyInfeasible("overlap length %d outside [0, %d)" % (D, grid.M))
    return PrefixPlan(L_W=L_W, L_R=int(L_tau_est), alpha_W=Fraction(D, grid.M))


def _check(violations, ok, field, reason):
    if not ok:
        violations.append(InvalidConfig(field, reason))


def validate_config(cfg: ExperimentConfig) -> ValidatedConfig:
    v = []
    g, ch = cfg.grid, cfg.chan

    _check(v, isinstance(g.M, int) and g.M > 0, "M", "must be a positive integer")
    _check(v, g.delta_f > 0, "delta_f", "must be positive")
    for name in ("L_D", "L_W", "L_R"):
        _check(v, getattr(g, name) >= 0, name, "must be non-negative")
    _check(v, g.L_R <= g.N_cp, "L_R", "longer than the extended prefix")
    _check(v, 0 <= g.D < g.M, "L_W", "overlap length D outside [0, M)")
    _check(v, g.N_cp < g.M, "L_D", "extended prefix not shorter than M")
    lo, hi = g.scheduled
    _check(v, 0 <= lo < hi <= g.M, "scheduled", "range outside [0, M)")

    _check(v, ch.P >= 1, "P", "at least one path")
    _check(v, ch.K_max >= 0, "K_max", "must be non-negative")
    _check(v, ch.K_res >= 0, "K_res", "must be non-negative")
    _check(v, ch.delay_low <= ch.delay_high, "delay_low", "exceeds delay_high")
    _check(
        v,
        ch.delay_low >= cfg.filter_halfspan,
        "delay_low",
        "below the pulse half-support",
    )
    _check(
        v,
        g.L_R >= math.ceil(ch.delay_high) + cfg.filter_halfspan,
        "L_R",
        "prefix removal shorter than channel span",
    )
    _check(
        v,
        ch.gain_variance is not None and ch.gain_variance > 0,
        "gain_variance",
        "must be positive",
    )
    if ch.physical:
        k_phys = ch.speed_mps * ch.carrier_hz / SPEED_OF_LIGHT / g.delta_f
        _check(
            v,
            k_phys <= ch.K_max + 1e-12,
            "speed_mps",
            "Doppler %.3f exceeds K_max" % k_phys,
        )

    _check(v, 0 <= cfg.pulse_rolloff <= 1, "pulse_rolloff", "outside [0, 1]")
    _check(v, cfg.oversample >= 1, "oversample", "must be at least 1")
    _check(v, cfg.filter_halfspan >= 0, "filter_halfspan", "must be non-negative")
    _check(v, cfg.pulse_kind in PULSE_KINDS, "pulse_kind", "unknown pulse kind")
    _check(v, cfg.window_kind in WINDOW_KINDS, "window_kind", "unknown window kind")
    _check(v, cfg.cheb_atten_db > 0, "cheb_atten_db", "must be positive")
    _check(v, cfg.mode in MODES, "mode", "unknown receive mode")
    _check(
        v,
        cfg.equalizer_noise in EQUALIZER_NOISE,
        "equalizer_noise",
        "unknown equalizer noise model",
    )
    _check(
        v,
        cfg.qam_bits % 2 == 0 and 2 <= cfg.qam_bits <= 10,
        "qam_bits",
        "must be even and within [2, 10]",
    )
    _check(v, len(cfg.snr_grid_db) > 0, "snr_grid_db", "empty SNR grid")
    _check(v, cfg.trials >= 1, "trials", "at least one trial")
    _check(v, 0 <= cfg.seed < 2 ** 64, "seed", "must fit in 64 bits")

    if len(v) == 1:
        raise v[0]
    if v:
        raise ConfigViolations(v)
    return cfg


# Profiles.


def desk_profile() -> ExperimentConfig:
    M = 512
    return ExperimentConfig(
        grid=GridConfig(
            M=M,
            delta_f=15e3,
            c1=compute_c1(3, 4, M),
            c2=Fraction(0),
            L_D=36,
            L_W=0,
            L_R=36,
            scheduled=(0, 128),
        ),
        chan=ChannelGenParams(P=4, K_max=3, K_res=4, delay_low=16, delay_high=20),
        qam_bits=2,
        snr_grid_db=(0.0, 2.5, 5.0, 7.5, 10.0),
        trials=50,
    )


def paper_profile() -> ExperimentConfig:
    """Full-size numerology. Slow: every H is 4096 x 600."""
    M = 4096
    return ExperimentConfig(
        grid=GridConfig(
            M=M,
            delta_f=15e3,
            c1=compute_c1(3, 4, M),
            c2=Fraction(0),
            L_D=288,
            L_W=0,
            L_R=288,
            scheduled=(0, 600),
        ),
        chan=ChannelGenParams(P=10, K_max=3, K_res=4, delay_low=16, delay_high=26),
        qam_bits=10,
        trials=50,
    )


PROFILES = {"desk": desk_profile, "paper": paper_profile}

# Config file keys.

GRID_KEYS = ("M", "delta_f", "c1", "c2", "L_D", "L_W", "L_R", "scheduled")
CHAN_KEYS = (
    "P",
    "K_max",
    "K_res",
    "delay_low",
    "delay_high",
    "gain_variance",
    "carrier_hz",
    "speed_mps",
)
TOP_KEYS = tuple(
    f.name
    for f in dataclasses.fields(ExperimentConfig)
    if f.name not in ("grid", "chan")
)
KEYS = GRID_KEYS + CHAN_KEYS + TOP_KEYS


def _parse_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip("\"'")


def parse_config_text(text: str) -> Dict[str, object]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig("line %d" % lineno, "expected `key = value`")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise InvalidConfig(key, "unknown key")
        values[key] = _parse_value(value)
    return values


def apply_overrides(cfg: ExperimentConfig, values: Dict[str, object]):
    grid_changes, chan_changes, top_changes = {}, {}, {}
    for key, value in values.items():
        if key in GRID_KEYS:
            grid_changes[key] = value
        elif key in CHAN_KEYS:
            chan_changes[key] = value
        elif key in TOP_KEYS:
            top_changes[key] = value
        else:
            raise InvalidConfig(key, "unknown key")

    chan = dataclasses.replace(cfg.chan, **chan_changes)
    if "P" in chan_changes and "gain_variance" not in chan_changes:
        chan = dataclasses.replace(chan, gain_variance=1.0 / chan.P)

    c1 = grid_changes.pop("c1", None)
    grid = dataclasses.replace(cfg.grid, **grid_changes)
    if c1 == "auto" or (c1 is None and "M" in grid_changes):
        c1 = compute_c1(int(chan.K_max), chan.K_res, grid.M)
    if c1 is not None:
        try:
            grid = dataclasses.replace(grid, c1=to_fraction(c1))
        except (ValueError, ZeroDivisionError):
            raise InvalidConfig("c1", "not a rational number: %r" % (c1,))
    return dataclasses.replace(cfg, grid=grid, chan=chan, **top_changes)


def load_config(
    path: Optional[str] = None,
    profile: str = "desk",
    overrides: Optional[Dict[str, object]] = None,
) -> ValidatedConfig:
    """Profile, then config file, then explicit overrides; validated."""
    if profile not in PROFILES:
        raise InvalidConfig("profile", "unknown profile %r" % profile)
    cfg = PROFILES[profile]()
    if path is not None:
        with open(path, "r") as f:
            values = parse_config_text(f.read())
        logging.info("Loaded %d config keys from %s", len(values), path)
        cfg = apply_overrides(cfg, values)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return validate_config(cfg)


def _format_value(value) -> str:
    if isinstance(value, Fraction):
        return '"%s"' % value
    if isinstance(value, tuple):
        return repr(list(value)) if len(value) != 2 else repr(value)
    return repr(value)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Canonical flat text form; parse_config_text inverts it."""
    lines = []
    for key in GRID_KEYS:
        lines.append("%s = %s" % (key, _format_value(getattr(cfg.grid, key))))
    for key in CHAN_KEYS:
        lines.append("%s = %s" % (key, _format_value(getattr(cfg.chan, key))))
    for key in TOP_KEYS:
        value = getattr(cfg, key)
        if key == "snr_grid_db":
            value = list(value)
        lines.append("%s = %s" % (key, _format_value(value)))
    return "\n".join(lines) + "\n"


def fingerprint(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode("utf-8")).hexdigest()


def parse_list(text: Optional[str], cast=float) -> Sequence:
    """Parses '0.1,0.2' or '[0.1, 0.2]' flag values."""
    if text is None:
        return None
    text = text.strip()
    if text.startswith("["):
        return [cast(v) for v in ast.literal_eval(text)]
    return [cast(v) for v in text.split(",") if v.strip()]
