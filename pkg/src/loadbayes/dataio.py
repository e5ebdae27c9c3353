"""CSV readers and writers for every dataset the package emits.

All files are UTF-8 with LF line endings; floats are written with ``repr`` so
they round-trip exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .model_core import IM_FIELDS, ImRegressionData, ZipSeries


class DataFormatError(ValueError):
    """Unreadable or malformed data file."""


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_table(path, expected=None) -> tuple[list[str], np.ndarray]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if expected is not None and tuple(header) != tuple(expected):
        raise DataFormatError(f"{path}: expected header {','.join(expected)}, got {','.join(header)}")
    try:
        body = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-numeric cell ({exc})") from exc
    if body.size == 0:
        body = body.reshape(0, len(header))
    if body.shape[1] != len(header):
        raise DataFormatError(f"{path}: ragged rows")
    return header, body


ZIP_HEADER = ("x", "y")
SCENARIO_HEADER = ("run", "v_pu", "p_pu", "converged")
IM_HEADER = IM_FIELDS + ("t0",)
TRAJECTORY_HEADER = ("t", "ed", "eq", "omega", "ud", "uq")
REPLAY_HEADER = ("run", "v_a", "v_b", "delta_v")


def write_zip_series(series: ZipSeries, path) -> None:
    write_table(path, ZIP_HEADER, zip(series.x, series.y))


def read_zip_series(path) -> ZipSeries:
    _, body = read_table(path, ZIP_HEADER)
    try:
        return ZipSeries(body[:, 0], body[:, 1])
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def write_scenario_log(result, path) -> None:
    write_table(path, SCENARIO_HEADER, result.log_rows())


def read_scenario_log(path) -> np.ndarray:
    return read_table(path, SCENARIO_HEADER)[1]


def write_im_regression(data: ImRegressionData, path) -> None:
    cols = [getattr(data, f) for f in IM_FIELDS] + [np.full(data.n, data.t0)]
    write_table(path, IM_HEADER, zip(*cols))


def read_im_regression(path) -> ImRegressionData:
    _, body = read_table(path, IM_HEADER)
    if body.shape[0] == 0:
        raise DataFormatError(f"{path}: no samples")
    t0 = body[:, -1]
    if np.ptp(t0) != 0:
        raise DataFormatError(f"{path}: t0 column must be constant")
    kwargs = {f: body[:, i] for i, f in enumerate(IM_FIELDS)}
    return ImRegressionData(**kwargs, t0=float(t0[0]))


def write_trajectory(times, states, inputs, path) -> None:
    write_table(path, TRAJECTORY_HEADER, zip(times, *np.asarray(states).T, *np.asarray(inputs).T))


def read_trajectory(path):
    _, body = read_table(path, TRAJECTORY_HEADER)
    return body[:, 0], body[:, 1:4], body[:, 4:6]


def write_samples(chain, path) -> None:
    """One row per kept draw, one column per parameter."""
    write_table(path, chain.names, chain.draws)


def read_samples(path) -> tuple[list[str], np.ndarray]:
    return read_table(path)


def write_replay(result, path) -> None:
    write_table(path, REPLAY_HEADER,
                ((k + 1, a, b, d) for k, (a, b, d) in enumerate(zip(result.v_a, result.v_b, result.delta_v))))


def read_replay(path) -> np.ndarray:
    return read_table(path, REPLAY_HEADER)[1]


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
