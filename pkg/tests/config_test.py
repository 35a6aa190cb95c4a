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
"""Tests for numerology, validation and config files."""

import os
import tempfile
import unittest
from fractions import Fraction

from ospsafdm.core import config

import small_config


class NumerologyTest(unittest.TestCase):
    def test_compute_c1(self):
        self.assertEqual(config.compute_c1(3, 4, 512), Fraction(15, 1024))
        self.assertEqual(config.compute_c1(3, 4, 4096), Fraction(15, 8192))

    def test_desk_profile(self):
        cfg = config.validate_config(config.desk_profile())
        self.assertEqual(cfg.grid.N_cp, 36)
        self.assertEqual(cfg.grid.D, 0)
        self.assertEqual(cfg.grid.M_schd, 128)
        self.assertEqual(cfg.grid.daft_shift, 15)
        self.assertEqual(cfg.snr_grid_db, (0.0, 2.5, 5.0, 7.5, 10.0))
        self.assertEqual(cfg.equalizer_noise, "white")

    def test_paper_profile_validates(self):
        cfg = config.validate_config(config.paper_profile())
        self.assertEqual(cfg.grid.M, 4096)
        self.assertEqual(cfg.qam_bits, 10)

    def test_with_alpha(self):
        grid = config.desk_profile().grid.with_alpha(0.25)
        self.assertEqual(grid.D, 128)
        self.assertEqual(grid.L_R, 36)
        self.assertEqual(grid.L_W, 128)
        self.assertEqual(grid.alpha_W, Fraction(1, 4))

    def test_with_alpha_below_prefix_surplus(self):
        grid = config.desk_profile().grid.with_prefix(0, 20)
        self.assertEqual(grid.D, 16)
        smaller = grid.with_alpha(8 / 512)
        self.assertEqual(smaller.D, 8)
        self.assertEqual(smaller.L_W, 0)
        self.assertEqual(smaller.L_R, 28)

    def test_normalize_mode(self):
        self.assertEqual(config.normalize_mode("os-ps"), "os_ps")
        self.assertEqual(config.normalize_mode(" direct-window "), "direct_window")


class PrefixStrategyTest(unittest.TestCase):
    def setUp(self):
        self.grid = config.desk_profile().grid

    def test_low_overhead(self):
        plan = config.resolve_prefix_strategy("low_overhead", 20, 64, self.grid)
        self.assertEqual(plan.L_W, 0)
        self.assertEqual(plan.L_R, 20)
        self.assertEqual(plan.alpha_W, Fraction(16, 512))

    def test_low_sidelobe(self):
        plan = config.resolve_prefix_strategy("low-sidelobe", 20, 64, self.grid)
        self.assertEqual(plan.L_W, 64)
        self.assertEqual(plan.alpha_W, Fraction(80, 512))

    def test_infeasible(self):
        with self.assertRaises(config.StrategyInfeasible):
            config.resolve_prefix_strategy("low_overhead", 40, 0, self.grid)
        with self.assertRaises(config.StrategyInfeasible):
            config.resolve_prefix_strategy("longest", 20, 0, self.grid)


class ValidateTest(unittest.TestCase):
    def test_single_violation(self):
        cfg = small_config.small_config(trials=0)
        with self.assertRaises(config.InvalidConfig) as ctx:
            config.validate_config(cfg)
        self.assertNotIsInstance(ctx.exception, config.ConfigViolations)
        self.assertEqual(ctx.exception.field, "trials")

    def test_all_violations_reported(self):
        desk = config.desk_profile()
        cfg = desk.with_grid(desk.grid.with_prefix(0, 40))
        with self.assertRaises(config.ConfigViolations) as ctx:
            config.validate_config(cfg)
        fields = {v.field for v in ctx.exception.violations}
        self.assertIn("L_R", fields)
        self.assertIn("L_W", fields)

    def test_channel_span_exceeds_removal(self):
        cfg = small_config.small_config()
        cfg = cfg.with_grid(cfg.grid.with_prefix(0, 8))
        with self.assertRaises(config.InvalidConfig) as ctx:
            config.validate_config(cfg)
        self.assertEqual(ctx.exception.field, "L_R")

    def test_odd_qam(self):
        with self.assertRaises(config.InvalidConfig):
            config.validate_config(small_config.small_config(qam_bits=3))

    def test_unknown_mode(self):
        with self.assertRaises(config.InvalidConfig):
            config.validate_config(small_config.small_config(mode="ofdm"))

    def test_unknown_equalizer_noise(self):
        cfg = small_config.small_config(equalizer_noise="pink")
        with self.assertRaises(config.InvalidConfig) as ctx:
            config.validate_config(cfg)
        self.assertEqual(ctx.exception.field, "equalizer_noise")

    def test_physical_doppler_bound(self):
        cfg = small_config.small_config()
        fast = cfg.replace(
            chan=config.ChannelGenParams(
                P=2,
                K_max=1,
                K_res=1,
                delay_low=4,
                delay_high=6,
                carrier_hz=4e9,
                speed_mps=3000.0,
            )
        )
        with self.assertRaises(config.InvalidConfig) as ctx:
            config.validate_config(fast)
        self.assertEqual(ctx.exception.field, "speed_mps")


class ConfigFileTest(unittest.TestCase):
    def test_parse(self):
        values = config.parse_config_text(
            'M = 128\nc1 = "15/256"  # chirp\n\nsnr_grid_db = [0, 10]\nmode = os-ps\n'
        )
        self.assertEqual(values["M"], 128)
        self.assertEqual(values["c1"], "15/256")
        self.assertEqual(values["snr_grid_db"], [0, 10])
        self.assertEqual(values["mode"], "os-ps")

    def test_unknown_key(self):
        with self.assertRaises(config.InvalidConfig) as ctx:
            config.parse_config_text("foo = 1\n")
        self.assertEqual(ctx.exception.field, "foo")
        self.assertEqual(ctx.exception.reason, "unknown key")

    def test_missing_equals(self):
        with self.assertRaises(config.InvalidConfig):
            config.parse_config_text("M 128\n")

    def test_c1_follows_m(self):
        cfg = config.apply_overrides(config.desk_profile(), {"M": 128})
        self.assertEqual(cfg.grid.c1, Fraction(15, 256))
        cfg = config.apply_overrides(cfg, {"c1": "1/8"})
        self.assertEqual(cfg.grid.c1, Fraction(1, 8))
        cfg = config.apply_overrides(cfg, {"c1": "auto"})
        self.assertEqual(cfg.grid.c1, Fraction(15, 256))

    def test_bad_c1(self):
        with self.assertRaises(config.InvalidConfig):
            config.apply_overrides(config.desk_profile(), {"c1": "fast"})

    def test_path_count_resets_gain_variance(self):
        cfg = config.apply_overrides(config.desk_profile(), {"P": 8})
        self.assertAlmostEqual(cfg.chan.gain_variance, 1 / 8)

    def test_text_round_trip(self):
        for cfg in (config.desk_profile(), small_config.small_config(seed=7)):
            values = config.parse_config_text(config.config_to_text(cfg))
            again = config.apply_overrides(config.desk_profile(), values)
            self.assertEqual(again, cfg)
            self.assertEqual(config.fingerprint(again), config.fingerprint(cfg))

    def test_equalizer_noise_key(self):
        values = config.parse_config_text("equalizer_noise = colored\n")
        cfg = config.apply_overrides(config.desk_profile(), values)
        self.assertEqual(config.validate_config(cfg).equalizer_noise, "colored")
        self.assertIn("equalizer_noise = 'colored'", config.config_to_text(cfg))

    def test_fingerprint_changes_with_seed(self):
        cfg = config.desk_profile()
        self.assertNotEqual(
            config.fingerprint(cfg), config.fingerprint(cfg.replace(seed=1))
        )

    def test_load_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "run.cfg")
            with open(path, "w") as f:
                f.write("trials = 3\nseed = 11\n")
            cfg = config.load_config(path, "desk", {"seed": 5})
        self.assertEqual(cfg.trials, 3)
        self.assertEqual(cfg.seed, 5)

    def test_load_invalid(self):
        with self.assertRaises(config.InvalidConfig):
            config.load_config(None, "desk", {"L_R": 400})
        with self.assertRaises(config.InvalidConfig):
            config.load_config(None, "huge")

    def test_parse_list(self):
        self.assertEqual(config.parse_list("0.1,0.2"), [0.1, 0.2])
        self.assertEqual(config.parse_list("[5, 10]"), [5.0, 10.0])
        self.assertIsNone(config.parse_list(None))


if __name__ == "__main__":
    unittest.main()
