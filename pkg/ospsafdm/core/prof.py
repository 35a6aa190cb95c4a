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
"""Per-stage wall-clock laps of a simulated frame."""

import contextlib
import time


class Timings:
    """Laps per stage name, reported in the order stages first ran."""

    def __init__(self):
        self._laps = {}
        self._mark = time.perf_counter()

    def add(self, name: str, seconds: float) -> None:
        self._laps.setdefault(name, []).append(float(seconds))

    def time(self, name: str) -> None:
        """Records the time since the previous lap under `name`."""
        now = time.perf_counter()
        self.add(name, now - self._mark)
        self._mark = now

    @contextlib.contextmanager
    def section(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self._mark = time.perf_counter()
            self.add(name, self._mark - start)

    def counts(self):
        return {name: len(laps) for name, laps in self._laps.items()}

    def totals(self):
        return {name: sum(laps) for name, laps in self._laps.items()}

    def summary(self, prefix: str = "") -> str:
        totals = self.totals()
        total = sum(totals.values())
        lines = [prefix] if prefix else []
        for name, seconds in totals.items():
            share = 100 * seconds / total if total else 0.0
            lines.append(
                "    %s: %.3fms (%.1f%%) x%d"
                % (name, 1000 * seconds, share, len(self._laps[name]))
            )
        lines.append("Total: %.3fms" % (1000 * total))
        return "\n".join(lines)
