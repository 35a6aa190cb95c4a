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

import argparse
import logging
import os
import sys

os.environ["OMP_NUM_THREADS"] = "1"  # noqa Identical BLAS reductions per worker.

import numpy as np  # noqa: E402

from ospsafdm import experiments  # noqa: E402
from ospsafdm.core import channel as channel_lib  # noqa: E402
from ospsafdm.core import config as config_lib  # noqa: E402
from ospsafdm.core import equalization, estimation  # noqa: E402
from ospsafdm.core import file_writer  # noqa: E402

COMMANDS = ("cond", "nmse", "ber", "frame", "dump-window", "dump-pulse", "dump-h")


# yapf: disable
parser = argparse.ArgumentParser(description="OS-PS-AFDM link-level simulator")

parser.add_argument("command", choices=COMMANDS,
                    help="Sweep or dump to run.")
parser.add_argument("--config", default=None, metavar="PATH",
                    help="Flat key = value config file applied over the profile.")
parser.add_argument("--profile", default="desk", choices=sorted(config_lib.PROFILES),
                    help="Base numerology. 'paper' is full size and slow.")
parser.add_argument("--seed", default=None, type=int, metavar="U64",
                    help="Master seed (default: from the config).")
parser.add_argument("--mode", default=None,
                    help="Receive mode, or a comma list of modes for sweeps "
                    "(os_ps, direct_window, plain).")
parser.add_argument("--alpha-w", default=None, metavar="LIST",
                    help="Window roll-off values for os_ps, e.g. 0.1,0.2,0.3.")
parser.add_argument("--snr", default=None, metavar="LIST",
                    help="SNR points in dB (default: from the config).")
parser.add_argument("--trials", default=None, type=int, metavar="N",
                    help="Monte Carlo trials (default: from the config).")
parser.add_argument("--cheb-atten", default=None, type=float, metavar="DB",
                    help="Chebyshev sidelobe attenuation for direct_window.")
parser.add_argument("--out", default=None, metavar="PATH",
                    help="Output file (default: stdout).")
parser.add_argument("--format", default="csv", choices=["csv", "json"],
                    help="Report format.")

# Experiment settings.
parser.add_argument("--csi", default="perfect", choices=["perfect", "estimated"],
                    help="Channel knowledge of the BER equalizer.")
parser.add_argument("--full-matrix", action="store_true",
                    help="Condition numbers of the full M x M matrix.")
parser.add_argument("--oracle-paths", action="store_true",
                    help="Feed the true path parameters to the NMSE reconstruction.")
parser.add_argument("--equalizer-noise", default=None,
                    choices=config_lib.EQUALIZER_NOISE,
                    help="Noise covariance the LMMSE detector assumes "
                    "(default: from the config).")
parser.add_argument("--no-progress", dest="progress", action="store_false",
                    help="Hide progress bars.")

# Frame and dump settings.
parser.add_argument("--backend", default="discrete", choices=["discrete", "waveform"],
                    help="Channel backend of the frame command.")
parser.add_argument("--channel", default=None, metavar="PATH",
                    help="Replay a channel realization CSV (p,h_re,h_im,ell,k).")
parser.add_argument("--dump-taps", default=None, metavar="NAMES",
                    help="Comma list of frame stages to dump, e.g. s,r2,y.")
parser.add_argument("--taps-dir", default=".",
                    help="Directory for stage dumps.")
parser.add_argument("--dump-paths", default=None, metavar="PATH",
                    help="Write the paths estimated from a pilot frame.")
parser.add_argument("--h-file", default=None, metavar="PATH",
                    help="Binary H written by dump-h, read by frame.")

# Run directory.
parser.add_argument("--savedir", default=None,
                    help="Root dir for a run directory with meta.json and out.log.")
parser.add_argument("--xpid", default=None,
                    help="Run id (default: pid and time).")

# yapf: enable


logging.basicConfig(
    format=(
        "[%(levelname)s:%(process)d %(module)s:%(lineno)d %(asctime)s] " "%(message)s"
    ),
    level=logging.INFO,
)


def load_flags_config(flags):
    overrides = {}
    if flags.seed is not None:
        overrides["seed"] = flags.seed
    if flags.trials is not None:
        overrides["trials"] = flags.trials
    if flags.snr is not None:
        overrides["snr_grid_db"] = tuple(config_lib.parse_list(flags.snr))
    if flags.cheb_atten is not None:
        overrides["cheb_atten_db"] = flags.cheb_atten
    if flags.equalizer_noise is not None:
        overrides["equalizer_noise"] = flags.equalizer_noise
    modes = flags.mode.split(",") if flags.mode else None
    if modes and len(modes) == 1:
        overrides["mode"] = modes[0]
    return config_lib.load_config(flags.config, flags.profile, overrides)


def sweep_modes(flags, default):
    if not flags.mode:
        return list(default)
    return [config_lib.normalize_mode(m) for m in flags.mode.split(",")]


def alpha_grid(flags, cfg):
    values = config_lib.parse_list(flags.alpha_w)
    if values:
        return values
    if cfg.grid.D:
        return [float(cfg.grid.alpha_W)]
    return list(experiments.DEFAULT_ALPHA_GRID)


def channel_for(flags, cfg, experiment):
    if flags.channel:
        logging.info("Replaying channel from %s", flags.channel)
        return file_writer.read_realization(flags.channel)
    rng = channel_lib.trial_rng(cfg.seed, experiment, 0)
    return channel_lib.draw_channel(cfg.chan, rng, cfg.grid)


def run_frame(flags, cfg):
    realization = channel_for(flags, cfg, "frame")
    alphas = alpha_grid(flags, cfg)
    result = experiments.simulate_frame(
        cfg, realization, backend=flags.backend, alpha_w=alphas[0]
    )
    logging.info("Frame timings: %s", result.timings.summary())

    spec = experiments.setup_specs(cfg, [cfg.mode], alphas[:1])[0]
    report = experiments.new_report("frame", cfg, backend=flags.backend)
    Hx = result.H.entries @ result.x
    rel = np.linalg.norm(result.y - Hx) / max(np.linalg.norm(Hx), 1e-300)
    row = ("frame", spec.mode, spec.window_kind, spec.alpha_w)
    report.add(*row, None, 0, "rel_error", float(rel))

    if flags.dump_taps:
        for name in flags.dump_taps.split(","):
            name = name.strip()
            path = os.path.join(flags.taps_dir, "%s.csv" % name)
            file_writer.write_taps_csv(
                path, result.taps.buffer(name), result.taps.indices(name)
            )
            logging.info("Wrote stage %s to %s", name, path)

    setup = experiments.Setup(spec, cfg)
    if flags.dump_paths:
        x_pilot = estimation.pilot_frame(setup.cfg.grid)
        y_pilot = setup.transmit(x_pilot, realization)
        estimates = estimation.estimate_channel(
            y_pilot, x_pilot, setup.cfg, cfg.chan.P, search=setup.search
        )
        file_writer.write_paths_csv(flags.dump_paths, estimates)
        H_hat = estimation.reconstruct_h(
            estimates, setup.cfg, setup.g_T, setup.window, kernel=setup.search.kernel
        )
        value = equalization.nmse(H_hat, setup.build_h(realization))
        report.add(*row, None, 0, "nmse", value)

    if flags.snr is not None:
        qam = equalization.QamSpec(cfg.qam_bits)
        lo, hi = setup.cfg.grid.scheduled
        tx_bits = qam.demodulate(result.x[lo:hi])
        if flags.h_file:
            H, _, _ = file_writer.read_matrix(flags.h_file)
            logging.info("Equalizing with H from %s", flags.h_file)
            if H.shape[1] == setup.cfg.grid.M and hi - lo != H.shape[1]:
                logging.info("Keeping scheduled columns [%d, %d) of the full H", lo, hi)
                H = H[:, lo:hi]
        else:
            H = setup.build_h(realization)
        for snr_db in cfg.snr_grid_db:
            sigma2 = experiments.noise_variance(snr_db)
            rng = channel_lib.trial_rng(cfg.seed, "frame", 0, stream=1)
            noisy = experiments.simulate_frame(
                cfg,
                realization,
                x=result.x,
                backend=flags.backend,
                snr_db=snr_db,
                rng=rng,
                alpha_w=alphas[0],
                build_matrix=False,
            )
            x_hat = equalization.lmmse_equalize(
                noisy.y, H, setup.equalizer_noise(sigma2)
            )
            errors, n = equalization.ber_count(tx_bits, qam.demodulate(x_hat))
            report.add(*row, snr_db, 0, "ber", errors / n)
    return report


def run_dump(flags, cfg, out):
    mode = cfg.mode
    alpha = alpha_grid(flags, cfg)[0]
    spec = experiments.setup_specs(cfg, [mode], [alpha])[0]
    setup = experiments.Setup(spec, cfg)
    if flags.command == "dump-window":
        file_writer.write_series_csv(out, setup.window.values, setup.window.indices)
    elif flags.command == "dump-pulse":
        g_T = setup.g_T
        ticks = np.arange(len(g_T.taps)) - g_T.center_index
        file_writer.write_series_csv(out, g_T.taps, ticks)
    else:
        realization = channel_for(flags, cfg, "dump-h")
        H = setup.build_h(realization, full=flags.full_matrix)
        if flags.h_file:
            file_writer.write_matrix(flags.h_file, H.entries, spec.mode, cfg.seed)
            logging.info("Wrote %s x %s matrix to %s", *H.shape, flags.h_file)
        file_writer.write_magnitude_csv(out, H.entries, H.rows, H.cols)


def replayed_channel(flags):
    if not flags.channel:
        return None
    logging.info("Replaying channel from %s in every trial", flags.channel)
    return file_writer.read_realization(flags.channel)


def run(flags, cfg):
    """Runs one command; returns the report of sweep and frame commands."""
    if flags.command == "cond":
        return experiments.run_condition_sweep(
            cfg,
            sweep_modes(flags, config_lib.MODES),
            alpha_grid(flags, cfg),
            full_matrix=flags.full_matrix,
            channel=replayed_channel(flags),
            progress=flags.progress,
        )
    if flags.command == "nmse":
        return experiments.run_nmse_sweep(
            cfg,
            sweep_modes(flags, config_lib.MODES),
            alpha_grid(flags, cfg),
            oracle_paths=flags.oracle_paths,
            channel=replayed_channel(flags),
            progress=flags.progress,
        )
    if flags.command == "ber":
        return experiments.run_ber_sweep(
            cfg,
            sweep_modes(flags, ("os_ps", "direct_window")),
            csi=flags.csi,
            alpha_grid=alpha_grid(flags, cfg),
            channel=replayed_channel(flags),
            progress=flags.progress,
        )
    if flags.command == "frame":
        return run_frame(flags, cfg)
    raise ValueError("not a report command: %s" % flags.command)


def main(flags):
    try:
        cfg = load_flags_config(flags)
    except (ValueError, OSError) as e:
        logging.error("Invalid configuration: %s", e)
        return 2

    writer = None
    if flags.savedir:
        writer = file_writer.ReportWriter(
            xpid=flags.xpid, xp_args=vars(flags), rootdir=flags.savedir
        )
        writer.metadata["config"] = config_lib.config_to_text(cfg)

    out = flags.out
    try:
        if flags.command.startswith("dump-"):
            run_dump(flags, cfg, out or sys.stdout)
        else:
            report = run(flags, cfg)
            file_writer.emit_report(report, flags.format, out or sys.stdout)
            if out:
                logging.info("Wrote %d rows to %s", len(report), out)
            if writer:
                writer.write_report(report, flags.format)
    except Exception:
        if writer:
            writer.close(successful=False)
        raise
    if writer:
        writer.close()
    return 0


def cli():
    flags = parser.parse_args()
    sys.exit(main(flags))


if __name__ == "__main__":
    cli()
