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
"""Tests for pilot-based path estimation and H reconstruction."""

import unittest

import numpy as np
from ospsafdm import experiments
from ospsafdm.core import channel, config, equalization, estimation

import small_config


def _os_ps_setup(cfg, alpha=0.25):
    return experiments.Setup(experiments.SetupSpec("os_ps", "rc", alpha), cfg)


def _exact_search(setup):
    return estimation.PathSearch(setup.cfg, setup.kernel)


def _two_path_config():
    M = 64
    cfg = small_config.small_config(
        chan=config.ChannelGenParams(
            P=2, K_max=2, K_res=1, delay_low=4, delay_high=12
        )
    )
    grid = cfg.grid
    return cfg.with_grid(
        config.GridConfig(
            M=M,
            delta_f=grid.delta_f,
            c1=config.compute_c1(2, 1, M),
            c2=grid.c2,
            L_D=16,
            L_W=0,
            L_R=16,
            scheduled=grid.scheduled,
        )
    )


class PilotTest(unittest.TestCase):
    def test_pilot_frame(self):
        grid = small_config.small_config().grid
        self.assertEqual(estimation.pilot_index(grid), 16)
        x = estimation.pilot_frame(grid)
        self.assertEqual(np.count_nonzero(x), 1)
        self.assertEqual(x[16], 1.0)

    def test_search_grid(self):
        setup = _os_ps_setup(small_config.small_config())
        search = setup.search
        np.testing.assert_allclose(search.ell_grid, 4.0 + 0.25 * np.arange(9))
        np.testing.assert_allclose(search.k_grid, -1.0 + 0.25 * np.arange(9))
        A, norms = search.atoms
        self.assertEqual(A.shape, (64, 81))
        self.assertIs(search.atoms[0], A)
        self.assertTrue(np.all(norms > 0))
        self.assertIs(setup.search, search)

    def test_search_fits_guarded_model(self):
        cfg = small_config.small_config()
        setup = _os_ps_setup(cfg)
        self.assertEqual(estimation.doppler_guard(cfg), 2.0)
        self.assertEqual(setup.search.kernel.doppler_guard, 2.0)
        self.assertIsNone(setup.kernel.doppler_guard)


class EstimateTest(unittest.TestCase):
    def test_single_path_on_grid(self):
        cfg = small_config.small_config()
        setup = _os_ps_setup(cfg)
        realization = channel.single_path(h=0.8 - 0.3j, ell=4.75, k=0.5)
        x = estimation.pilot_frame(setup.cfg.grid)
        y = setup.transmit(x, realization)
        estimates = estimation.estimate_channel(
            y, x, setup.cfg, max_paths=1, search=_exact_search(setup)
        )
        self.assertEqual(len(estimates), 1)
        est = estimates[0]
        self.assertAlmostEqual(est.ell_hat, 4.75, places=6)
        self.assertAlmostEqual(est.k_hat, 0.5, places=6)
        self.assertLess(abs(est.h_hat - (0.8 - 0.3j)), 1e-6)
        self.assertLess(est.residual_energy / np.vdot(y, y).real, 1e-6)

    def test_pilot_amplitude_is_removed(self):
        cfg = small_config.small_config()
        setup = _os_ps_setup(cfg)
        realization = channel.single_path(h=1.0, ell=5.0, k=-0.25)
        x = 2.0j * estimation.pilot_frame(setup.cfg.grid)
        y = setup.transmit(x, realization)
        (est,) = estimation.estimate_channel(
            y, x, setup.cfg, max_paths=1, search=_exact_search(setup)
        )
        self.assertLess(abs(est.h_hat - 1.0), 1e-6)

    def test_two_paths(self):
        cfg = _two_path_config()
        setup = _os_ps_setup(cfg)
        realization = channel.realization_from_arrays(
            [1.0, 0.5j], [5.0, 10.0], [-1.25, 1.5]
        )
        x = estimation.pilot_frame(setup.cfg.grid)
        y = setup.transmit(x, realization)
        estimates = estimation.estimate_channel(
            y, x, setup.cfg, max_paths=2, search=_exact_search(setup)
        )
        self.assertEqual(len(estimates), 2)
        for est in estimates:
            error = min(abs(est.ell_hat - 5.0), abs(est.ell_hat - 10.0))
            self.assertLess(error, 1 / 8)
        H_hat = estimation.reconstruct_h(
            estimates, setup.cfg, setup.g_T, setup.window, kernel=setup.kernel
        )
        self.assertLess(equalization.nmse(H_hat, setup.build_h(realization)), 1e-3)
        energies = [est.residual_energy for est in estimates]
        self.assertLessEqual(energies[1], energies[0])

    def test_guarded_search_recovers_guarded_path(self):
        cfg = small_config.small_config()
        setup = _os_ps_setup(cfg)
        search = setup.search
        y = (0.4 + 0.9j) * search.atom(5.25, -0.75)
        (est,) = search.search(y, max_paths=1)
        self.assertAlmostEqual(est.ell_hat, 5.25, places=6)
        self.assertAlmostEqual(est.k_hat, -0.75, places=6)
        self.assertLess(abs(est.h_hat - (0.4 + 0.9j)), 1e-6)

    def test_polish_lowers_residual(self):
        cfg = _two_path_config()
        setup = _os_ps_setup(cfg)
        search = _exact_search(setup)
        y = search.atom(5.3, -1.25) + 0.5j * search.atom(9.7, 1.5)
        start = [(5.4, -1.15), (9.62, 1.4)]
        B = np.stack([search.atom(e, k) for e, k in start], axis=1)
        _, before = search._fit(y, B)
        found, gains, after = search.polish(y, start)
        self.assertEqual(len(found), 2)
        self.assertEqual(len(gains), 2)
        self.assertLess(after, 1e-6 * before)
        for (ell, k), truth in zip(found, [(5.3, -1.25), (9.7, 1.5)]):
            self.assertAlmostEqual(ell, truth[0], places=4)
            self.assertAlmostEqual(k, truth[1], places=4)
        _, _, unchanged = search.polish(y, start, max_evals=0)
        self.assertEqual(unchanged, before)

    def test_zero_pilot(self):
        cfg = small_config.small_config()
        setup = _os_ps_setup(cfg)
        x = np.zeros(64, dtype=complex)
        self.assertEqual(
            estimation.estimate_channel(x, x, setup.cfg, 2, search=setup.search), []
        )

    def test_silent_channel(self):
        cfg = small_config.small_config()
        setup = _os_ps_setup(cfg)
        x = estimation.pilot_frame(setup.cfg.grid)
        y = np.zeros(64, dtype=complex)
        self.assertEqual(
            estimation.estimate_channel(y, x, setup.cfg, 2, search=setup.search), []
        )

    def test_pilot_position_checked(self):
        cfg = small_config.small_config()
        setup = _os_ps_setup(cfg)
        x = np.zeros(64, dtype=complex)
        x[3] = 1.0
        with self.assertRaises(ValueError):
            estimation.estimate_channel(x, x, setup.cfg, 1, search=setup.search)

    def test_needs_kernel(self):
        cfg = small_config.small_config()
        x = estimation.pilot_frame(cfg.grid)
        with self.assertRaises(ValueError):
            estimation.estimate_channel(x, x, cfg, 1)


class ReconstructTest(unittest.TestCase):
    def setUp(self):
        cfg = small_config.small_config()
        self.setup = _os_ps_setup(cfg)
        self.realization = channel.realization_from_arrays(
            [0.6 + 0.2j, -0.3j], [4.4, 5.7], [0.3, -0.8]
        )
        self.H = self.setup.build_h(self.realization)

    def _reconstruct(self, estimates):
        s = self.setup
        return estimation.reconstruct_h(
            estimates, s.cfg, s.g_T, s.window, kernel=s.kernel
        )

    def test_exact_paths(self):
        estimates = [
            estimation.PathEstimate(p.h, p.ell, p.k, 0.0)
            for p in self.realization.paths
        ]
        H_hat = self._reconstruct(estimates)
        np.testing.assert_array_equal(H_hat.entries, self.H.entries)
        self.assertEqual(equalization.nmse(H_hat, self.H), 0.0)

    def test_no_paths(self):
        H_hat = self._reconstruct([])
        self.assertEqual(H_hat.shape, self.H.shape)
        np.testing.assert_array_equal(H_hat.entries, 0)

    def test_error_grows_with_delay_offset(self):
        errors = []
        for offset in (0.02, 0.05, 0.1, 0.2):
            estimates = [
                estimation.PathEstimate(p.h, p.ell + offset, p.k, 0.0)
                for p in self.realization.paths
            ]
            errors.append(equalization.nmse(self._reconstruct(estimates), self.H))
        self.assertEqual(errors, sorted(errors))
        self.assertGreater(errors[0], 0.0)

    def test_realization_round_trip(self):
        estimates = [estimation.PathEstimate(1j, 4.5, 0.25, 1e-3)]
        realization = estimation.estimates_to_realization(estimates)
        self.assertEqual(realization.P, 1)
        self.assertEqual(realization.paths[0].h, 1j)
        self.assertEqual(realization.paths[0].ell, 4.5)
        self.assertEqual(realization.paths[0].k, 0.25)


if __name__ == "__main__":
    unittest.main()
