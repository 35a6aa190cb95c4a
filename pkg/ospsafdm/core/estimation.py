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
"""Pilot-based delay-Doppler path estimation.

The pilot frame is a single unit impulse at the middle scheduled index m_p,
so the received pilot is column m_p of H. Paths are found greedily on a
quarter-sample by quarter-subcarrier grid and refined by parabolic fits.
After every new path, the delays and Doppler shifts of all paths found so far
are fitted jointly by nonlinear least squares, with the gains projected out.
"""

import collections
import logging
from typing import List

import numpy as np
from scipy import linalg, optimize

from ospsafdm.core import channel_matrix
from ospsafdm.core.channel import ChannelPath, ChannelRealization

GRID_STEP = 0.25
REFINE_ROUNDS = 2
REFINE_POINTS = 5
POLISH_EVALS = 60
STOP_RATIO = 1e-12


class NoConvergence(RuntimeError):
    pass


PathEstimate = collections.namedtuple(
    "PathEstimate", "h_hat ell_hat k_hat residual_energy"
)


def pilot_index(grid) -> int:
    lo, hi = grid.scheduled
    return (lo + hi) // 2


def pilot_frame(grid) -> np.ndarray:
    x = np.zeros(grid.M, dtype=np.complex128)
    x[pilot_index(grid)] = 1.0
    return x


def doppler_guard(cfg) -> float:
    """Bins around a path's peak the estimator models: K_max + K_res."""
    return float(cfg.chan.K_max + cfg.chan.K_res)


def estimator_kernel(cfg, g_T, window) -> channel_matrix.DaftKernel:
    return channel_matrix.DaftKernel(
        cfg.grid, g_T, window, doppler_guard=doppler_guard(cfg)
    )


class PathSearch:
    """Matching pursuit over single-path responses of one setup.

    The grid dictionary is built once and reused across trials.
    """

    def __init__(self, cfg, kernel: channel_matrix.DaftKernel, step: float = GRID_STEP):
        self.cfg = cfg
        self.kernel = kernel
        self.step = step
        chan = cfg.chan
        self.ell_bounds = (float(chan.delay_low), float(chan.delay_high))
        self.k_bounds = (-float(chan.K_max), float(chan.K_max))
        self.ell_grid = self._axis(*self.ell_bounds)
        self.k_grid = self._axis(*self.k_bounds)
        self.col = pilot_index(cfg.grid)
        self._atoms = None

    def _axis(self, lo: float, hi: float) -> np.ndarray:
        n = int(np.floor((hi - lo) / self.step + 1e-9))
        return lo + self.step * np.arange(n + 1)

    def atom(self, ell: float, k: float) -> np.ndarray:
        return self.kernel.path_column(ell, k, self.col)

    @property
    def atoms(self) -> np.ndarray:
        if self._atoms is None:
            cols = [self.atom(e, k) for e in self.ell_grid for k in self.k_grid]
            A = np.stack(cols, axis=1)
            self._atoms = (A, np.sum(np.abs(A) ** 2, axis=0))
            logging.debug(
                "Built %d x %d pilot dictionary", len(self.ell_grid), len(self.k_grid)
            )
        return self._atoms

    def metric(self, residual: np.ndarray, ell: float, k: float) -> float:
        a = self.atom(ell, k)
        energy = np.vdot(a, a).real
        if energy == 0:
            return 0.0
        return abs(np.vdot(a, residual)) ** 2 / energy

    def _refine_axis(self, residual, ell, k, best, step, axis):
        center = ell if axis == 0 else k
        lo, hi = self.ell_bounds if axis == 0 else self.k_bounds
        xs = center + step * np.arange(-(REFINE_POINTS // 2), REFINE_POINTS // 2 + 1)
        xs = xs[(xs >= lo) & (xs <= hi)]
        if len(xs) < 3:
            return ell, k, best

        def at(x):
            return (x, k) if axis == 0 else (ell, x)

        values = np.array([self.metric(residual, *at(x)) for x in xs])
        a, b, _ = np.polyfit(xs - center, values, 2)
        if a >= 0:
            return ell, k, best
        x = center + np.clip(-b / (2 * a), xs[0] - center, xs[-1] - center)
        value = self.metric(residual, *at(x))
        if value > best:
            return at(x) + (value,)
        return ell, k, best

    def refine(self, residual, ell, k):
        best = self.metric(residual, ell, k)
        step = self.step
        for _ in range(REFINE_ROUNDS):
            ell, k, best = self._refine_axis(residual, ell, k, best, step, 0)
            ell, k, best = self._refine_axis(residual, ell, k, best, step, 1)
            step /= 4.0
        return float(ell), float(k)

    def _fit(self, y, B):
        gains, *_ = linalg.lstsq(B, y)
        residual = y - B @ gains
        return gains, float(np.vdot(residual, residual).real)

    def _columns(self, ell, k) -> np.ndarray:
        return np.stack([self.atom(e, kk) for e, kk in zip(ell, k)], axis=1)

    def _projected_residual(self, theta, y):
        ell, k = np.split(theta, 2)
        B = self._columns(ell, k)
        gains, *_ = linalg.lstsq(B, y)
        r = y - B @ gains
        return np.concatenate([r.real, r.imag])

    def polish(self, y: np.ndarray, found, max_evals: int = POLISH_EVALS):
        """Joint (l, k) fit of all paths; returns (paths, gains, energy).

        The new fit is kept only if the residual energy does not grow.
        """
        found = [(float(e), float(k)) for e, k in found]
        ell, k = (np.array(v) for v in zip(*found))
        gains, energy = self._fit(y, self._columns(ell, k))
        if max_evals <= 0:
            return found, gains, energy
        n = len(found)
        lo = np.repeat([self.ell_bounds[0], self.k_bounds[0]], n)
        hi = np.repeat([self.ell_bounds[1], self.k_bounds[1]], n)
        hi = np.maximum(hi, lo + 1e-9)
        theta = np.clip(np.concatenate([ell, k]), lo, hi)
        fit = optimize.least_squares(
            self._projected_residual,
            theta,
            bounds=(lo, hi),
            args=(y,),
            max_nfev=max_evals,
        )
        ell, k = np.split(fit.x, 2)
        moved_gains, moved_energy = self._fit(y, self._columns(ell, k))
        if moved_energy > energy:
            return found, gains, energy
        return list(zip(ell.tolist(), k.tolist())), moved_gains, moved_energy

    def search(self, y: np.ndarray, max_paths: int) -> List[PathEstimate]:
        initial = float(np.vdot(y, y).real)
        if initial == 0 or max_paths <= 0:
            return []
        A, norms = self.atoms
        residual = y.copy()
        previous = initial
        found, energies = [], []
        for _ in range(max_paths):
            corr = np.abs(A.conj().T @ residual) ** 2 / np.where(norms > 0, norms, 1)
            i = int(np.argmax(corr))
            ell = self.ell_grid[i // len(self.k_grid)]
            k = self.k_grid[i % len(self.k_grid)]
            found.append(self.refine(residual, ell, k))
            found, gains, energy = self.polish(y, found)
            if energy > previous * (1 + 1e-9) + 1e-300:
                raise NoConvergence(
                    "residual grew from %.3e to %.3e at path %d"
                    % (previous, energy, len(found))
                )
            energies.append(energy)
            previous = energy
            if energy <= STOP_RATIO * initial:
                break
            residual = y - self._columns(*zip(*found)) @ gains
        return [
            PathEstimate(complex(g), e, k, r)
            for g, (e, k), r in zip(gains, found, energies)
        ]


def estimate_channel(
    y_pilot, x_pilot, cfg, max_paths: int, kernel=None, search: PathSearch = None
) -> List[PathEstimate]:
    """Greedy path estimates from a single-impulse pilot frame."""
    x_pilot = np.asarray(x_pilot)
    y_pilot = np.asarray(y_pilot, dtype=np.complex128)
    m_p = int(np.argmax(np.abs(x_pilot)))
    amplitude = x_pilot[m_p]
    if amplitude == 0:
        return []
    if search is None:
        if kernel is None:
            raise ValueError("estimation needs a kernel or a prepared search")
        search = PathSearch(cfg, kernel)
    if m_p != search.col:
        raise ValueError(
            "pilot at index %d, search prepared for %d" % (m_p, search.col)
        )
    return search.search(y_pilot / amplitude, max_paths)


def estimates_to_realization(estimates) -> ChannelRealization:
    return ChannelRealization(
        [ChannelPath(e.h_hat, e.ell_hat, e.k_hat) for e in estimates]
    )


def reconstruct_h(estimates, cfg, g_T, window, **kwargs):
    """H from estimated paths through the same kernel as build_h."""
    return channel_matrix.build_h(
        cfg, estimates_to_realization(estimates), g_T, window, **kwargs
    )
