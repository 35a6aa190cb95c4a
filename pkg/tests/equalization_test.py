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
"""Tests for the equalizers, QAM mapping and link metrics."""

import math
import unittest

import numpy as np
from ospsafdm.core import channel_matrix, equalization


def _complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class LmmseTest(unittest.TestCase):
    def test_scalar_wiener(self):
        h, sigma2, y = 0.6 - 0.8j, 0.25, np.array([1.0 + 2.0j])
        x = equalization.lmmse_equalize(y, np.array([[h]]), np.array([[sigma2]]))
        expected = np.conj(h) / (abs(h) ** 2 + sigma2) * y
        np.testing.assert_allclose(x, expected, atol=1e-14)

    def test_zero_noise_inverts(self):
        rng = np.random.default_rng(0)
        H = _complex(rng, 8, 8)
        x = _complex(rng, 8)
        x_hat = equalization.lmmse_equalize(H @ x, H, np.zeros((8, 8)))
        np.testing.assert_allclose(x_hat, x, atol=1e-9)

    def test_explicit_inverse(self):
        rng = np.random.default_rng(1)
        H = _complex(rng, 8, 8)
        B = _complex(rng, 8, 8)
        R_w = 0.1 * B @ B.conj().T + 0.05 * np.eye(8)
        y = _complex(rng, 8)
        Es = 2.0
        expected = Es * H.conj().T @ np.linalg.inv(Es * H @ H.conj().T + R_w) @ y
        x_hat = equalization.lmmse_equalize(y, H, R_w, Es=Es)
        np.testing.assert_allclose(x_hat, expected, atol=1e-10)

    def test_tall_matrix(self):
        rng = np.random.default_rng(2)
        H = _complex(rng, 12, 5)
        R_w = 0.3 * np.eye(12)
        y = _complex(rng, 12)
        # Equivalent information form of the same estimator.
        expected = np.linalg.solve(
            H.conj().T @ H / 0.3 + np.eye(5), H.conj().T @ y / 0.3
        )
        x_hat = equalization.lmmse_equalize(y, H, R_w)
        self.assertEqual(x_hat.shape, (5,))
        np.testing.assert_allclose(x_hat, expected, atol=1e-10)

    def test_batch(self):
        rng = np.random.default_rng(3)
        H = _complex(rng, 6, 4)
        R_w = 0.2 * np.eye(6)
        y = _complex(rng, 3, 6)
        batch = equalization.lmmse_equalize(y, H, R_w)
        self.assertEqual(batch.shape, (3, 4))
        for i in range(3):
            np.testing.assert_allclose(
                batch[i], equalization.lmmse_equalize(y[i], H, R_w), atol=1e-12
            )

    def test_channel_matrix_input(self):
        H = channel_matrix.ChannelMatrix(
            entries=2.0 * np.eye(4), rows=np.arange(4), cols=np.arange(4)
        )
        x = equalization.lmmse_equalize(np.ones(4), H, np.zeros((4, 4)))
        np.testing.assert_allclose(x, 0.5 * np.ones(4))

    def test_singular_system(self):
        with self.assertRaises(equalization.SolveFailure):
            equalization.lmmse_equalize(np.ones(4), np.zeros((4, 4)), np.zeros((4, 4)))

    def test_bad_shapes(self):
        with self.assertRaises(channel_matrix.DimensionMismatch):
            equalization.lmmse_equalize(np.ones(3), np.eye(4), np.eye(4))
        with self.assertRaises(channel_matrix.DimensionMismatch):
            equalization.lmmse_equalize(np.ones(4), np.eye(4), np.eye(3))
        with self.assertRaises(ValueError):
            equalization.lmmse_equalize(np.ones(4), np.eye(4), np.eye(4), Es=0)

    def test_lmmse_beats_zero_forcing(self):
        rng = np.random.default_rng(4)
        qam = equalization.QamSpec(2)
        sigma2 = 0.5
        lmmse_err = zf_err = 0.0
        for _ in range(20):
            H = _complex(rng, 8, 8) / math.sqrt(2)
            x = qam.modulate(rng.integers(0, 2, 16))
            y = H @ x + math.sqrt(sigma2) * _complex(rng, 8) / math.sqrt(2)
            x_lmmse = equalization.lmmse_equalize(y, H, sigma2 * np.eye(8))
            x_zf = equalization.zf_equalize(y, H)
            lmmse_err += np.sum(np.abs(x_lmmse - x) ** 2)
            zf_err += np.sum(np.abs(x_zf - x) ** 2)
        self.assertLess(lmmse_err, zf_err)

    def test_zero_forcing_noiseless(self):
        rng = np.random.default_rng(5)
        H = _complex(rng, 10, 6)
        x = _complex(rng, 6)
        np.testing.assert_allclose(equalization.zf_equalize(H @ x, H), x, atol=1e-10)


class QamTest(unittest.TestCase):
    def test_qpsk_first_quadrant(self):
        symbol = equalization.qam_modulate([0, 0], 2)
        np.testing.assert_allclose(symbol, [(1 + 1j) / math.sqrt(2)])

    def test_unit_energy(self):
        for bits in (2, 4, 6, 10):
            points = equalization.QamSpec(bits).constellation
            self.assertEqual(len(points), 1 << bits)
            self.assertAlmostEqual(np.mean(np.abs(points) ** 2), 1.0, places=12)

    def test_gray_neighbours(self):
        qam = equalization.QamSpec(4)
        points = qam.constellation
        step = 2.0 / qam.scale
        for a in range(16):
            for b in range(a + 1, 16):
                if abs(abs(points[a] - points[b]) - step) < 1e-9:
                    self.assertEqual(bin(a ^ b).count("1"), 1)

    def test_hard_decisions(self):
        qam = equalization.QamSpec(6)
        rng = np.random.default_rng(0)
        bits = rng.integers(0, 2, (3, 60))
        symbols = qam.modulate(bits)
        self.assertEqual(symbols.shape, (3, 10))
        noisy = symbols + 0.2 / qam.scale * _complex(rng, 3, 10) / 2
        np.testing.assert_array_equal(qam.demodulate(noisy), bits)
        far = np.array([10.0 + 10.0j])
        np.testing.assert_array_equal(qam.demodulate(far), [0] * 6)

    def test_gray_to_binary(self):
        np.testing.assert_array_equal(
            equalization.gray_to_binary(np.array([0, 1, 3, 2, 6, 7, 5, 4])),
            np.arange(8),
        )

    def test_bad_lengths(self):
        with self.assertRaises(equalization.BadLength):
            equalization.QamSpec(3)
        with self.assertRaises(equalization.BadLength):
            equalization.qam_modulate([0, 1, 1], 2)


class MetricsTest(unittest.TestCase):
    def test_nmse(self):
        H = np.arange(1.0, 7.0).reshape(2, 3)
        self.assertEqual(equalization.nmse(H, H), 0.0)
        self.assertAlmostEqual(equalization.nmse(2 * H, H), 1.0)
        self.assertEqual(equalization.nmse(np.zeros(3), np.zeros(3)), 0.0)
        self.assertEqual(equalization.nmse(np.ones(3), np.zeros(3)), math.inf)
        with self.assertRaises(channel_matrix.DimensionMismatch):
            equalization.nmse(H, H.T)

    def test_nmse_scale_invariance(self):
        rng = np.random.default_rng(4)
        H = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
        H_hat = H + 0.1 * rng.standard_normal((6, 4))
        value = equalization.nmse(H_hat, H)
        for c in (3.0, -0.5j, 1e-4 * (1 + 1j)):
            scaled = equalization.nmse(c * H_hat, c * H)
            self.assertAlmostEqual(scaled, value, places=12)

    def test_ber_count(self):
        self.assertEqual(equalization.ber_count([0, 1, 1, 0], [0, 0, 1, 1]), (2, 4))
        with self.assertRaises(equalization.BadLength):
            equalization.ber_count([0, 1], [0, 1, 1])

    def test_qpsk_awgn_reference(self):
        reference = float(equalization.qpsk_awgn_ber(0.0))
        self.assertAlmostEqual(reference, 0.158655, places=6)
        values = equalization.qpsk_awgn_ber([0.0, 5.0, 10.0])
        self.assertTrue(np.all(np.diff(values) < 0))

    def test_sign_test(self):
        self.assertLess(equalization.sign_test_pvalue(15, 5), 0.05)
        self.assertGreater(equalization.sign_test_pvalue(10, 10), 0.5)
        self.assertEqual(equalization.sign_test_pvalue(0, 0), 1.0)


if __name__ == "__main__":
    unittest.main()
