"""Data ingestion and export.

Screens arrive as tab-delimited text with one row per (culture, timepoint)
and header columns ORF, Expt.Time, Growth; optional columns Row, Col,
Barcode/Plate, Treatment, Condition, Repeat and Batch refine repeat
identification and condition assignment. Repeats are keyed by an explicit
Repeat column when present, else by (Row, Col, plate) tuples, else by
contiguous time resets.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .growth import GrowthCurve
from .hierarchy.screen import CONTROL, QUERY, RepeatSeries, ScreenDataset

REQUIRED_COLUMNS = ("ORF", "Expt.Time", "Growth")
_EDGE_ROWS = (1, 16)
_EDGE_COLS = (1, 24)


class SchemaError(ValueError):
    """Input file does not carry a required column."""


class DataError(ValueError):
    """Input rows are structurally invalid (location included)."""


def _plate_key(row: dict) -> str | None:
    for col in ("Barcode", "Plate"):
        if col in row and row[col] != "":
            return row[col]
    return None


def load_screen(
    path,
    condition_labels: dict[str, int] | None = None,
    drop_edges: bool = False,
    exclude=(),
) -> ScreenDataset:
    """Read a screen from tab-delimited text.

    condition_labels maps Treatment values to 0 (control) / 1 (query); a
    literal Condition column (values 0/1) wins when present; with neither,
    every row is the control condition. drop_edges removes border
    cultures (Row 1/16, Col 1/24). `exclude` strips gene names.
    """
    path = Path(path)
    exclude = set(exclude)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        header = reader.fieldnames or []
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        has = set(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            orf = row["ORF"]
            if orf in exclude:
                continue
            if drop_edges and "Row" in has and "Col" in has:
                try:
                    if (int(row["Row"]) in _EDGE_ROWS
                            or int(row["Col"]) in _EDGE_COLS):
                        continue
                except ValueError:
                    pass
            try:
                t = float(row["Expt.Time"])
                y = float(row["Growth"])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric time/growth") from exc
            if not np.isfinite(y) or not np.isfinite(t) or t < 0:
                raise DataError(f"{path}:{lineno}: invalid time/growth value")
            if "Condition" in has and row["Condition"] != "":
                cond = int(row["Condition"])
                if cond not in (CONTROL, QUERY):
                    raise DataError(f"{path}:{lineno}: Condition must be 0 or 1")
            elif condition_labels is not None and "Treatment" in has:
                treat = row["Treatment"]
                if treat not in condition_labels:
                    raise DataError(
                        f"{path}:{lineno}: treatment {treat!r} not in condition map"
                    )
                cond = condition_labels[treat]
            else:
                cond = CONTROL
            if "Repeat" in has and row["Repeat"] != "":
                rep_key = ("explicit", row["Repeat"])
            elif {"Row", "Col"} <= has:
                rep_key = ("position", _plate_key(row), row["Row"], row["Col"])
            else:
                rep_key = None  # resolved by time resets below
            batch = row.get("Batch") or _plate_key(row)
            rows.append((cond, orf, rep_key, t, y, batch, lineno))

    # group into repeats
    grouped: dict[tuple, list] = {}
    auto_index: dict[tuple, int] = {}
    last_time: dict[tuple, float] = {}
    for cond, orf, rep_key, t, y, batch, lineno in rows:
        if rep_key is None:
            series_key = (cond, orf)
            idx = auto_index.get(series_key, 0)
            if series_key in last_time and t <= last_time[series_key]:
                idx += 1
                auto_index[series_key] = idx
            last_time[series_key] = t
            rep_key = ("auto", idx)
        grouped.setdefault((cond, orf, rep_key), []).append((t, y, batch, lineno))

    series: dict[int, dict[str, list[RepeatSeries]]] = {CONTROL: {}, QUERY: {}}
    for (cond, orf, rep_key), obs in sorted(grouped.items(), key=lambda kv: kv[0]):
        obs_sorted = sorted(obs, key=lambda o: o[0])
        times = np.array([o[0] for o in obs_sorted])
        if np.any(np.diff(times) <= 0):
            dup = obs_sorted[int(np.argmin(np.diff(times)) + 1)]
            raise DataError(
                f"{path}:{dup[3]}: non-monotone time within repeat "
                f"{rep_key} of {orf!r} (condition {cond})"
            )
        values = np.array([o[1] for o in obs_sorted])
        batch = obs_sorted[0][2]
        series[cond].setdefault(orf, []).append(
            RepeatSeries(times=times, values=values, batch=batch)
        )
    return ScreenDataset(series)


def save_screen(ds: ScreenDataset, path) -> None:
    """Write a screen back to the tab-delimited layout (lossless)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t")
        w.writerow(["ORF", "Expt.Time", "Growth", "Condition", "Repeat", "Batch"])
        for cond in (CONTROL, QUERY):
            for gene in sorted(ds.series[cond]):
                for m, rep in enumerate(ds.series[cond][gene]):
                    for t, y in zip(rep.times, rep.values):
                        w.writerow([
                            gene, f"{t:.17g}", f"{y:.17g}", cond, m,
                            rep.batch or "",
                        ])


def load_exclusion_list(path) -> set[str]:
    """One gene name per line; '#' comments allowed."""
    out = set()
    for raw in Path(path).read_text().splitlines():
        name = raw.split("#", 1)[0].strip()
        if name:
            out.add(name)
    return out


def save_curve(curve: GrowthCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "value"])
        for t, y in zip(curve.times, curve.values):
            w.writerow([f"{t:.17g}", f"{y:.17g}"])


def load_curve(path) -> GrowthCurve:
    times, values = [], []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames is None or not {"time", "value"} <= set(rd.fieldnames):
            raise SchemaError(f"{path}: curve files need 'time' and 'value' columns")
        for row in rd:
            times.append(float(row["time"]))
            values.append(float(row["value"]))
    return GrowthCurve(times=np.array(times), values=np.array(values))


def save_trajectories(times, paths, path) -> None:
    """Matrix CSV: first column time, one column per simulated path."""
    arr = np.column_stack([np.asarray(times), np.asarray(paths).T])
    header = "time," + ",".join(f"path{i}" for i in range(np.asarray(paths).shape[0]))
    np.savetxt(path, arr, delimiter=",", header=header, comments="", fmt="%.17g")
