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
"""Seeded Monte Carlo sweeps: conditioning, NMSE floor and uncoded BER.

A setup is one (mode, window, alpha_W) receiver. Every trial draws one
channel and runs it through all setups, so modes are compared on identical
channels, bits and noise. Trials are mapped over a process pool in order;
rows are sorted before emission, so reports do not depend on the number of
workers.
"""

import dataclasses
import logging
import math
import multiprocessing
import os
import traceback
from typing import Dict, List, Optional, Sequence

os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import tqdm  # noqa: E402

from ospsafdm.core import channel as channel_lib  # noqa: E402
from ospsafdm.core import channel_matrix  # noqa: E402
from ospsafdm.core import config as config_lib  # noqa: E402
from ospsafdm.core import equalization, estimation  # noqa: E402
from ospsafdm.core import file_writer, prof, pulses, receiver  # noqa: E402
from ospsafdm.core import transmitter  # noqa: E402

ERROR_TARGET = 200
DEFAULT_ALPHA_GRID = (0.25,)

NUM_WORKERS_ENV = "OSPSAFDM_NUM_WORKERS"


def num_workers() -> int:
    value = os.environ.get(NUM_WORKERS_ENV)
    if value:
        return max(1, int(value))
    return multiprocessing.cpu_count()


@dataclasses.dataclass(frozen=True)
class SetupSpec:
    mode: str
    window_kind: str
    alpha_w: float


class Setup:
    """Everything one receiver setup needs, built once per process."""

    def __init__(self, spec: SetupSpec, cfg):
        self.spec = spec
        grid = cfg.grid
        if spec.mode == "os_ps":
            grid = grid.with_alpha(spec.alpha_w)
        self.cfg = cfg.with_grid(grid).replace(
            mode=spec.mode, window_kind=spec.window_kind
        )
        self.tx, self.rx, self.g_T = pulses.pulse_for(self.cfg)
        self.mode = receiver.receive_mode(self.cfg, spec.mode)
        self.window = (
            self.mode.window
            if spec.mode != "plain"
            else pulses.rectangular_window(grid.M)
        )
        self.kernel = channel_matrix.DaftKernel(grid, self.g_T, self.window)
        self._noise = None
        self._search = None

    @property
    def noise(self) -> channel_matrix.NoiseCovariance:
        """Unit-variance R_w."""
        if self._noise is None:
            grid = self.cfg.grid
            self._noise = channel_matrix.build_noise_covariance(
                grid, self.window, channel_matrix.white_noise(grid)
            )
        return self._noise

    @property
    def search(self) -> estimation.PathSearch:
        if self._search is None:
            kernel = estimation.estimator_kernel(self.cfg, self.g_T, self.window)
            self._search = estimation.PathSearch(self.cfg, kernel)
        return self._search

    def equalizer_noise(self, sigma2: float) -> np.ndarray:
        """Noise covariance the LMMSE detector assumes at variance sigma2."""
        if self.cfg.equalizer_noise == "colored":
            return self.noise.scaled(sigma2)
        return sigma2 * np.eye(self.cfg.grid.M)

    def build_h(self, realization, full: bool = False):
        return channel_matrix.build_h(
            self.cfg,
            realization,
            self.g_T,
            self.window,
            full=full,
            mode=self.spec.mode,
            kernel=self.kernel,
        )

    def transmit(self, x, realization):
        """Noiseless DAFT-domain output of the discrete backend."""
        taps = transmitter.modulate_frame(x, self.cfg)
        r = channel_lib.apply_discrete_channel(
            taps.s, realization, self.g_T, self.cfg.grid
        )
        y, _ = receiver.demodulate_frame(r, self.mode, self.cfg)
        return y

    def demodulate(self, r):
        y, _ = receiver.demodulate_frame(r, self.mode, self.cfg)
        return y


def setup_specs(cfg, modes: Sequence[str], alpha_grid) -> List[SetupSpec]:
    """os_ps is swept over alpha_grid; D = 0 modes have a single setup."""
    specs = []
    for mode in modes:
        mode = config_lib.normalize_mode(mode)
        if mode not in config_lib.MODES:
            raise config_lib.InvalidConfig("mode", "unknown receive mode %r" % mode)
        if mode == "os_ps":
            for alpha in alpha_grid:
                specs.append(SetupSpec(mode, "rc", float(alpha)))
        elif mode == "plain":
            specs.append(SetupSpec(mode, "rectangular", 0.0))
        else:
            specs.append(SetupSpec(mode, cfg.window_kind, 0.0))
    return specs


def check_setups(cfg, specs):
    """Validates the derived numerology of every setup up front."""
    for spec in specs:
        grid = cfg.grid
        if spec.mode == "os_ps":
            grid = grid.with_alpha(spec.alpha_w)
        config_lib.validate_config(cfg.with_grid(grid))


# Worker-process state; set by _init_worker.
_context = {}


def _init_worker(cfg, specs, options):
    _context.clear()
    _context["cfg"] = cfg
    _context["setups"] = [Setup(s, cfg) for s in specs]
    _context["options"] = options


def _run_trial(args):
    experiment, trial = args
    try:
        return TRIALS[experiment](trial)
    except Exception:
        logging.error("Exception in %s trial %d!", experiment, trial)
        traceback.print_exc()
        raise


def _map_trials(
    experiment: str, cfg, specs, trials, options: Optional[Dict] = None, progress=True
):
    """Yields per-trial results in trial order."""
    options = dict(options or {})
    workers = min(num_workers(), max(1, len(trials)))
    jobs = [(experiment, t) for t in trials]
    if workers <= 1:
        _init_worker(cfg, specs, options)
        results = map(_run_trial, jobs)
        yield from tqdm.tqdm(
            results, total=len(jobs), desc=experiment, disable=not progress
        )
        return
    with multiprocessing.Pool(
        workers, initializer=_init_worker, initargs=(cfg, specs, options)
    ) as pool:
        results = pool.imap(_run_trial, jobs)
        yield from tqdm.tqdm(
            results, total=len(jobs), desc=experiment, disable=not progress
        )


def new_report(experiment: str, cfg, **extra) -> file_writer.ExperimentReport:
    metadata = dict(
        experiment=experiment,
        config_fingerprint=config_lib.fingerprint(cfg),
        seed=int(cfg.seed),
        version=file_writer.describe_version(),
    )
    metadata.update(extra)
    return file_writer.ExperimentReport(metadata=metadata)


def add_medians(report, metric: str, summary_metric: str):
    """Appends one trial = -1 median row per setup (and SNR point)."""
    rows = [r for r in report.rows if r.metric == metric and r.trial >= 0]
    if not rows:
        return
    frame = pd.DataFrame(rows, columns=file_writer.REPORT_HEADER)
    frame["snr_key"] = frame["snr_db"].astype(float).fillna(-math.inf)
    keys = ["experiment", "mode", "window_kind", "alpha_w", "snr_key"]
    for key, group in frame.groupby(keys, sort=True):
        experiment, mode, window_kind, alpha_w, snr_key = key
        snr = None if snr_key == -math.inf else float(snr_key)
        median = float(group["value"].median())
        report.add(
            experiment,
            mode,
            window_kind,
            float(alpha_w),
            snr,
            -1,
            summary_metric,
            median,
        )
        logging.info(
            "%s %s/%s alpha_w=%.3f%s: median %s = %.6g over %d trials",
            experiment,
            mode,
            window_kind,
            alpha_w,
            "" if snr is None else " snr=%.1fdB" % snr,
            metric,
            median,
            len(group),
        )


def trial_channel(cfg, experiment: str, trial: int):
    """The replayed channel if one was given, else a fresh draw for the trial."""
    fixed = _context["options"].get("channel")
    if fixed is not None:
        return fixed
    rng = channel_lib.trial_rng(cfg.seed, experiment, trial)
    return channel_lib.draw_channel(cfg.chan, rng, cfg.grid)


# Conditioning.


def _cond_trial(trial: int):
    cfg = _context["cfg"]
    full = _context["options"].get("full_matrix", False)
    realization = trial_channel(cfg, "cond", trial)
    rows = []
    for setup in _context["setups"]:
        H = setup.build_h(realization, full=full)
        value = channel_matrix.system_condition_number(H)
        s = setup.spec
        rows.append(
            ("cond", s.mode, s.window_kind, s.alpha_w, None, trial, "cond", value)
        )
    return rows


def run_condition_sweep(
    cfg,
    modes: Sequence[str],
    alpha_grid=DEFAULT_ALPHA_GRID,
    trials: Optional[int] = None,
    channel=None,
    full_matrix: bool = False,
    progress: bool = True,
) -> file_writer.ExperimentReport:
    """Condition number of H per trial and setup, plus per-setup medians."""
    trials = cfg.trials if trials is None else trials
    specs = setup_specs(cfg, modes, alpha_grid)
    check_setups(cfg, specs)
    report = new_report("cond", cfg, full_matrix=bool(full_matrix))
    options = dict(full_matrix=full_matrix, channel=channel)
    for rows in _map_trials("cond", cfg, specs, range(trials), options, progress):
        report.extend(rows)
    add_medians(report, "cond", "cond_median")
    return report


# NMSE floor.


def _nmse_trial(trial: int):
    cfg = _context["cfg"]
    oracle = _context["options"].get("oracle_paths", False)
    realization = trial_channel(cfg, "nmse", trial)
    rows = []
    for setup in _context["setups"]:
        H = setup.build_h(realization)
        if oracle:
            estimates = [
                estimation.PathEstimate(p.h, p.ell, p.k, 0.0)
                for p in realization.paths
            ]
            kernel = setup.kernel
        else:
            x_pilot = estimation.pilot_frame(setup.cfg.grid)
            y_pilot = setup.transmit(x_pilot, realization)
            estimates = estimation.estimate_channel(
                y_pilot, x_pilot, setup.cfg, cfg.chan.P, search=setup.search
            )
            kernel = setup.search.kernel
        H_hat = estimation.reconstruct_h(
            estimates, setup.cfg, setup.g_T, setup.window, kernel=kernel
        )
        value = equalization.nmse(H_hat, H)
        s = setup.spec
        rows.append(
            ("nmse", s.mode, s.window_kind, s.alpha_w, None, trial, "nmse", value)
        )
    return rows


def run_nmse_sweep(
    cfg,
    modes: Sequence[str],
    alpha_grid=DEFAULT_ALPHA_GRID,
    trials: Optional[int] = None,
    channel=None,
    oracle_paths: bool = False,
    progress: bool = True,
) -> file_writer.ExperimentReport:
    """Noiseless single-pilot estimation, reconstruction and NMSE of H."""
    trials = cfg.trials if trials is None else trials
    modes = list(modes)
    if "plain" not in [config_lib.normalize_mode(m) for m in modes]:
        modes.append("plain")
    specs = setup_specs(cfg, modes, alpha_grid)
    check_setups(cfg, specs)
    report = new_report("nmse", cfg, oracle_paths=bool(oracle_paths))
    options = dict(oracle_paths=oracle_paths, channel=channel)
    for rows in _map_trials("nmse", cfg, specs, range(trials), options, progress):
        report.extend(rows)
    add_medians(report, "nmse", "nmse_median")
    return report


# Uncoded BER.


def noise_variance(snr_db: float, Es: float = 1.0) -> float:
    return Es * 10.0 ** (-snr_db / 10.0)


def _ber_trial(trial: int):
    """Bit errors per (setup, SNR point): {(setup index, snr index): (errs, n)}."""
    cfg = _context["cfg"]
    options = _context["options"]
    csi = options.get("csi", "perfect")
    snr_grid = options["snr_grid"]
    qam = equalization.QamSpec(cfg.qam_bits)
    grid = cfg.grid

    realization = trial_channel(cfg, "ber", trial)
    data_rng = channel_lib.trial_rng(cfg.seed, "ber", trial, stream=1)
    bits = data_rng.integers(0, 2, grid.M_schd * qam.bits_per_symbol)
    symbols = qam.modulate(bits)
    x = transmitter.place_scheduled(symbols, grid)
    # One noise buffer over the longest prefix; each setup keeps its own span.
    n_samples = grid.M + max(s.cfg.grid.N_cp for s in _context["setups"])
    noise = channel_lib.complex_noise(n_samples, data_rng)
    pilot_noise = channel_lib.complex_noise(n_samples, data_rng)

    out = {}
    for i, setup in enumerate(_context["setups"]):
        span = grid.M + setup.cfg.grid.N_cp
        y_clean = setup.transmit(x, realization)
        w = setup.demodulate(noise[n_samples - span :])
        if csi == "perfect":
            H = setup.build_h(realization)
        else:
            x_pilot = estimation.pilot_frame(setup.cfg.grid)
            y_pilot_clean = setup.transmit(x_pilot, realization)
            w_pilot = setup.demodulate(pilot_noise[n_samples - span :])
        for j, snr_db in enumerate(snr_grid):
            sigma2 = noise_variance(snr_db)
            y = y_clean + math.sqrt(sigma2) * w
            if csi != "perfect":
                estimates = estimation.estimate_channel(
                    y_pilot_clean + math.sqrt(sigma2) * w_pilot,
                    x_pilot,
                    setup.cfg,
                    cfg.chan.P,
                    search=setup.search,
                )
                H = estimation.reconstruct_h(
                    estimates,
                    setup.cfg,
                    setup.g_T,
                    setup.window,
                    kernel=setup.search.kernel,
                )
            x_hat = equalization.lmmse_equalize(y, H, setup.equalizer_noise(sigma2))
            rx_bits = qam.demodulate(x_hat)
            out[(i, j)] = equalization.ber_count(bits, rx_bits)
    return out


def stop_index(errors: Sequence[int], target: int = ERROR_TARGET) -> int:
    """Number of leading trials kept: up to the first reaching `target` errors."""
    total = 0
    for n, e in enumerate(errors, 1):
        total += e
        if total >= target:
            return n
    return len(errors)


def run_ber_sweep(
    cfg,
    modes: Sequence[str],
    snr_grid: Optional[Sequence[float]] = None,
    csi: str = "perfect",
    alpha_grid=DEFAULT_ALPHA_GRID,
    trials: Optional[int] = None,
    channel=None,
    error_target: int = ERROR_TARGET,
    chunk_size: Optional[int] = None,
    progress: bool = True,
) -> file_writer.ExperimentReport:
    """Uncoded BER with LMMSE equalization, perfect or estimated CSI.

    A (setup, SNR) point keeps the trials up to the first one at which its
    accumulated errors reach `error_target`. The cut depends on trial order
    only; trials run in chunks until every point is cut or the budget ends.
    """
    if csi not in ("perfect", "estimated"):
        raise ValueError("csi must be 'perfect' or 'estimated', got %r" % csi)
    trials = cfg.trials if trials is None else trials
    snr_grid = tuple(cfg.snr_grid_db if snr_grid is None else snr_grid)
    specs = setup_specs(cfg, modes, alpha_grid)
    check_setups(cfg, specs)
    chunk_size = chunk_size or max(4 * num_workers(), 8)
    options = dict(csi=csi, snr_grid=snr_grid, channel=channel)

    results = []
    for start in range(0, trials, chunk_size):
        chunk = range(start, min(trials, start + chunk_size))
        results.extend(_map_trials("ber", cfg, specs, chunk, options, progress))
        done = all(
            sum(r[key][0] for r in results) >= error_target for key in results[0]
        )
        if done:
            logging.info("All BER points reached %d errors", error_target)
            break

    experiment = "ber_" + csi
    report = new_report(
        experiment,
        cfg,
        csi=csi,
        error_target=error_target,
        equalizer_noise=cfg.equalizer_noise,
    )
    for i, s in enumerate(specs):
        for j, snr_db in enumerate(snr_grid):
            counts = [r[(i, j)] for r in results]
            n_used = stop_index([c[0] for c in counts], error_target)
            errors = sum(c[0] for c in counts[:n_used])
            n_bits = sum(c[1] for c in counts[:n_used])
            for trial, (e, n) in enumerate(counts[:n_used]):
                row = (s.mode, s.window_kind, s.alpha_w, snr_db, trial, "ber", e / n)
                report.add(experiment, *row)
            summary = dict(ber=errors / n_bits, bit_errors=errors, trials=n_used)
            for metric, value in summary.items():
                row = (s.mode, s.window_kind, s.alpha_w, snr_db, -1, metric)
                report.add(experiment, *row, float(value))
            logging.info(
                "%s %s/%s alpha_w=%.3f snr=%.1fdB: BER %.3e (%d errors, %d trials)",
                experiment,
                s.mode,
                s.window_kind,
                s.alpha_w,
                snr_db,
                errors / n_bits,
                errors,
                n_used,
            )
    return report


TRIALS = {"cond": _cond_trial, "nmse": _nmse_trial, "ber": _ber_trial}


# Single frames.


@dataclasses.dataclass
class FrameResult:
    x: np.ndarray
    y: np.ndarray
    taps: object
    realization: object
    H: object
    timings: prof.Timings


def simulate_frame(
    cfg,
    realization,
    x: Optional[np.ndarray] = None,
    backend: str = "discrete",
    snr_db: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    alpha_w: Optional[float] = None,
    build_matrix: bool = True,
) -> FrameResult:
    """One frame through the full chain in cfg.mode with per-stage timings."""
    if backend not in ("discrete", "waveform"):
        raise ValueError("unknown channel backend %r" % backend)
    timings = prof.Timings()
    alpha = float(cfg.grid.alpha_W) if alpha_w is None else alpha_w
    spec = setup_specs(cfg, [cfg.mode], [alpha])[0]
    setup = Setup(spec, cfg)
    grid = setup.cfg.grid
    if rng is None:
        rng = channel_lib.trial_rng(cfg.seed, "frame", 0)
    if x is None:
        qam = equalization.QamSpec(cfg.qam_bits)
        bits = rng.integers(0, 2, grid.M_schd * qam.bits_per_symbol)
        x = transmitter.place_scheduled(qam.modulate(bits), grid)
    timings.time("setup")

    tx_taps = transmitter.modulate_frame(
        x, setup.cfg, setup.tx if backend == "waveform" else None
    )
    timings.time("transmit")
    if backend == "discrete":
        received = channel_lib.apply_discrete_channel(
            tx_taps.s, realization, setup.g_T, grid
        )
    else:
        received = channel_lib.apply_waveform_channel(
            tx_taps.waveform, realization, grid
        )
    timings.time("channel")
    if snr_db is not None:
        sigma2 = noise_variance(snr_db)
        if backend == "discrete":
            received = channel_lib.add_noise(received, sigma2, rng)
        else:
            # White at the sample rate, so sigma2 per sample after filtering.
            received = dataclasses.replace(
                received,
                samples=channel_lib.add_noise(
                    received.samples, sigma2 * setup.tx.rate, rng
                ),
            )
    y, rx_taps = receiver.demodulate_frame(
        received, setup.mode, setup.cfg, rx_pulse=setup.rx, tx_pulse=setup.tx
    )
    timings.time("receive")

    for name in ("x", "x0", "s0", "s1", "s", "waveform"):
        setattr(rx_taps, name, getattr(tx_taps, name))
    H = None
    if build_matrix:
        with timings.section("channel_matrix"):
            H = setup.build_h(realization, full=True)
    return FrameResult(x, y, rx_taps, realization, H, timings)
