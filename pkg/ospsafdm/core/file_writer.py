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
"""Reports, run directories and array dumps."""

import collections
import contextlib
import copy
import csv
import datetime
import json
import logging
import math
import os
import struct
import time
from typing import Dict, List, Optional

import numpy as np

REPORT_HEADER = (
    "experiment",
    "mode",
    "window_kind",
    "alpha_w",
    "snr_db",
    "trial",
    "metric",
    "value",
)

ReportRow = collections.namedtuple("ReportRow", REPORT_HEADER)

MATRIX_MAGIC = b"OSPM"
MATRIX_HEADER = struct.Struct("<4sII16sQ")


def gather_metadata() -> Dict:
    date_start = datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S.%f")
    try:
        import git

        try:
            repo = git.Repo(search_parent_directories=True)
            git_data = dict(
                commit=repo.commit().hexsha,
                branch=None if repo.head.is_detached else repo.active_branch.name,
                is_dirty=repo.is_dirty(),
                path=repo.git_dir,
            )
        except (git.InvalidGitRepositoryError, git.NoSuchPathError, ValueError):
            git_data = None
    except ImportError:
        git_data = None
    if "SLURM_JOB_ID" in os.environ:
        slurm_data = {}
        for k in os.environ:
            if k.startswith("SLURM"):
                d_key = k.replace("SLURM_", "").replace("SLURMD_", "").lower()
                slurm_data[d_key] = os.environ[k]
    else:
        slurm_data = None
    return dict(
        date_start=date_start,
        date_end=None,
        successful=False,
        git=git_data,
        slurm=slurm_data,
    )


def describe_version() -> str:
    """`git describe --always --dirty --tags`, or "unknown" outside a checkout."""
    try:
        import git

        here = os.path.dirname(os.path.abspath(__file__))
        repo = git.Repo(here, search_parent_directories=True)
        return repo.git.describe("--always", "--dirty", "--tags")
    except Exception:
        return "unknown"


class ExperimentReport:
    def __init__(self, rows=(), metadata: Optional[Dict] = None):
        self.rows = [ReportRow(*r) for r in rows]
        self.metadata = dict(metadata or {})

    def add(self, *fields):
        self.rows.append(ReportRow(*fields))

    def extend(self, rows):
        self.rows.extend(ReportRow(*r) for r in rows)

    def sorted_rows(self) -> List[ReportRow]:
        return sorted(self.rows, key=_row_key)

    def select(self, **fields) -> List[ReportRow]:
        return [
            r
            for r in self.rows
            if all(getattr(r, k) == v for k, v in fields.items())
        ]

    def to_frame(self):
        import pandas as pd

        return pd.DataFrame(self.sorted_rows(), columns=REPORT_HEADER)

    def __len__(self):
        return len(self.rows)


def _row_key(row: ReportRow):
    snr = -math.inf if row.snr_db is None else row.snr_db
    value = row.value if not math.isnan(row.value) else math.inf
    return (
        row.experiment,
        row.mode,
        row.window_kind,
        row.alpha_w,
        snr,
        row.trial,
        row.metric,
        value,
    )


def _format_float(value) -> str:
    return "" if value is None else repr(float(value))


def _format_row(row: ReportRow) -> List[str]:
    return [
        row.experiment,
        row.mode,
        row.window_kind,
        _format_float(row.alpha_w),
        _format_float(row.snr_db),
        str(int(row.trial)),
        row.metric,
        _format_float(row.value),
    ]


def _parse_row(fields) -> ReportRow:
    experiment, mode, window_kind, alpha_w, snr_db, trial, metric, value = fields
    return ReportRow(
        experiment,
        mode,
        window_kind,
        float(alpha_w),
        float(snr_db) if snr_db != "" else None,
        int(trial),
        metric,
        float(value),
    )


def emit_report(report: ExperimentReport, fmt: str, path) -> None:
    """Writes the sorted rows as CSV (rows only) or JSON (metadata and rows).

    `path` may also be an open text stream.
    """
    if fmt not in ("csv", "json"):
        raise ValueError("unknown report format %r" % fmt)
    with open_output(path) as f:
        _emit(report, fmt, f)


def _emit(report: ExperimentReport, fmt: str, f) -> None:
    rows = report.sorted_rows()
    if fmt == "csv":
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for row in rows:
            writer.writerow(_format_row(row))
        return
    payload = {
        "metadata": report.metadata,
        "rows": [dict(zip(REPORT_HEADER, _json_row(r))) for r in rows],
    }
    json.dump(payload, f, indent=2, sort_keys=True)
    f.write("\n")


def _json_row(row: ReportRow):
    return row._replace(
        alpha_w=float(row.alpha_w),
        snr_db=None if row.snr_db is None else float(row.snr_db),
        trial=int(row.trial),
        value=float(row.value),
    )


def _json_to_row(record: Dict) -> ReportRow:
    snr_db = record["snr_db"]
    return ReportRow(
        record["experiment"],
        record["mode"],
        record["window_kind"],
        float(record["alpha_w"]),
        None if snr_db is None else float(snr_db),
        int(record["trial"]),
        record["metric"],
        float(record["value"]),
    )


def load_report(path) -> ExperimentReport:
    with open(path, "r", newline="") as f:
        text = f.read()
    if text.lstrip().startswith("{"):
        payload = json.loads(text)
        rows = [_json_to_row(r) for r in payload["rows"]]
        return ExperimentReport(rows, payload.get("metadata"))
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header is None or tuple(header) != REPORT_HEADER:
        raise ValueError("%s: not a report (header %r)" % (path, header))
    return ExperimentReport([_parse_row(r) for r in reader if r])


class ReportWriter:
    """Run directory with meta.json, out.log and the emitted report."""

    def __init__(
        self,
        xpid: str = None,
        xp_args: dict = None,
        rootdir: str = "~/logs/ospsafdm",
        symlink_to_latest: bool = True,
    ):
        if not xpid:
            xpid = "{proc}_{unixtime}".format(
                proc=os.getpid(), unixtime=int(time.time())
            )
        self.xpid = xpid
        self.metadata = gather_metadata()
        # Copied so closing the writer never serializes caller-owned objects.
        self.metadata["args"] = copy.deepcopy(xp_args or {})
        self.metadata["xpid"] = self.xpid

        formatter = logging.Formatter("%(message)s")
        self._logger = logging.getLogger("logs/out")
        self._logger.setLevel(logging.INFO)
        self._logger.propagate = False
        self._handlers = []
        if not any(type(h) is logging.StreamHandler for h in self._logger.handlers):
            shandle = logging.StreamHandler()
            shandle.setFormatter(formatter)
            self._add_handler(shandle)

        rootdir = os.path.expandvars(os.path.expanduser(rootdir))
        self.basepath = os.path.join(rootdir, self.xpid)
        if not os.path.exists(self.basepath):
            self._logger.info("Creating run directory: %s", self.basepath)
            os.makedirs(self.basepath, exist_ok=True)
        else:
            self._logger.info("Found run directory: %s", self.basepath)

        if symlink_to_latest:
            symlink = os.path.join(rootdir, "latest")
            try:
                if os.path.islink(symlink):
                    os.remove(symlink)
                if not os.path.exists(symlink):
                    os.symlink(self.basepath, symlink)
                    self._logger.info("Symlinked run directory: %s", symlink)
            except OSError:
                # Another run raced us to the link.
                pass

        self.paths = dict(
            msg=os.path.join(self.basepath, "out.log"),
            meta=os.path.join(self.basepath, "meta.json"),
        )
        self._save_metadata()

        fhandle = logging.FileHandler(self.paths["msg"])
        fhandle.setFormatter(formatter)
        self._add_handler(fhandle)
        self._logger.info("Saving messages to %s", self.paths["msg"])

    def _add_handler(self, handler):
        self._logger.addHandler(handler)
        self._handlers.append(handler)

    def log(self, message: str, *args) -> None:
        self._logger.info(message, *args)

    def report_path(self, fmt: str) -> str:
        return os.path.join(self.basepath, "report.%s" % fmt)

    def write_report(self, report: ExperimentReport, fmt: str = "csv") -> str:
        path = self.report_path(fmt)
        emit_report(report, fmt, path)
        self.metadata["report"] = path
        self._logger.info("Wrote %d rows to %s", len(report), path)
        return path

    def close(self, successful: bool = True) -> None:
        self.metadata["date_end"] = datetime.datetime.now().strftime(
            "%Y-%m-%d %H:%M:%S.%f"
        )
        self.metadata["successful"] = successful
        self._save_metadata()
        for handler in self._handlers:
            self._logger.removeHandler(handler)
            handler.close()
        self._handlers = []

    def _save_metadata(self) -> None:
        with open(self.paths["meta"], "w") as jsonfile:
            json.dump(self.metadata, jsonfile, indent=4, sort_keys=True, default=str)


# Array dumps.


@contextlib.contextmanager
def open_output(path, mode="w"):
    """Opens `path` for writing, or passes an open stream through."""
    if isinstance(path, (str, os.PathLike)):
        kwargs = dict(newline="") if "b" not in mode else {}
        with open(path, mode, **kwargs) as f:
            yield f
    else:
        yield path


def write_matrix(path, H: np.ndarray, mode: str = "", seed: int = 0) -> None:
    H = np.asarray(H)
    if H.ndim != 2:
        raise ValueError("expected a matrix, got shape %s" % (H.shape,))
    name = mode.encode("ascii")
    if len(name) > 16:
        raise ValueError("mode name %r longer than 16 bytes" % mode)
    with open(path, "wb") as f:
        f.write(MATRIX_HEADER.pack(MATRIX_MAGIC, H.shape[0], H.shape[1], name, seed))
        f.write(np.ascontiguousarray(H, dtype="<c8").tobytes())


def read_matrix(path):
    """Returns (matrix, mode, seed)."""
    with open(path, "rb") as f:
        head = f.read(MATRIX_HEADER.size)
        if len(head) != MATRIX_HEADER.size:
            raise ValueError("%s: truncated header" % path)
        magic, rows, cols, name, seed = MATRIX_HEADER.unpack(head)
        if magic != MATRIX_MAGIC:
            raise ValueError("%s: bad magic %r" % (path, magic))
        data = np.frombuffer(f.read(), dtype="<c8")
    if data.size != rows * cols:
        raise ValueError(
            "%s: %d entries for a %d x %d matrix" % (path, data.size, rows, cols)
        )
    mode = name.rstrip(b"\0").decode("ascii")
    return data.reshape(rows, cols).astype(np.complex128), mode, seed


def write_magnitude_csv(path, H: np.ndarray, rows=None, cols=None) -> None:
    H = np.asarray(H)
    rows = np.arange(H.shape[0]) if rows is None else rows
    cols = np.arange(H.shape[1]) if cols is None else cols
    with open_output(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["row", "col", "magnitude"])
        mag = np.abs(H)
        for i, r in enumerate(rows):
            for j, c in enumerate(cols):
                writer.writerow([int(r), int(c), repr(float(mag[i, j]))])


def write_realization(path, realization) -> None:
    with open_output(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["p", "h_re", "h_im", "ell", "k"])
        for p, path_ in enumerate(realization.paths):
            h = complex(path_.h)
            writer.writerow(
                [
                    p,
                    repr(h.real),
                    repr(h.imag),
                    repr(float(path_.ell)),
                    repr(float(path_.k)),
                ]
            )


def read_realization(path):
    from ospsafdm.core.channel import realization_from_arrays

    h, ell, k = [], [], []
    with open(path, "r", newline="") as f:
        for record in csv.DictReader(f):
            h.append(complex(float(record["h_re"]), float(record["h_im"])))
            ell.append(float(record["ell"]))
            k.append(float(record["k"]))
    return realization_from_arrays(h, ell, k)


def write_paths_csv(path, estimates) -> None:
    with open_output(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["p", "h_re", "h_im", "ell", "k", "residual_energy"])
        for p, e in enumerate(estimates):
            h = complex(e.h_hat)
            writer.writerow(
                [
                    p,
                    repr(h.real),
                    repr(h.imag),
                    repr(float(e.ell_hat)),
                    repr(float(e.k_hat)),
                    repr(float(e.residual_energy)),
                ]
            )


def write_series_csv(path, values, indices=None) -> None:
    values = np.asarray(values)
    indices = np.arange(len(values)) if indices is None else indices
    with open_output(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["index", "value"])
        for i, v in zip(indices, values):
            writer.writerow([int(i), repr(float(np.real(v)))])


def write_taps_csv(path, values, indices) -> None:
    values = np.asarray(values)
    with open_output(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["index", "re", "im"])
        for i, v in zip(indices, values):
            v = complex(v)
            writer.writerow([int(i), repr(v.real), repr(v.imag)])
