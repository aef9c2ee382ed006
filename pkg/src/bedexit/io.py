"""File formats and atomic writers.

Formats handled here:

* raw stream      — CSV with header ``timestamp_s,load_kg`` or JSON-lines
                    ``{"t": float, "load": float}`` (by extension)
* label intervals — CSV ``start_s,end_s,label``
* window manifest — CSV ``id,label,t_end``
* training log    — CSV ``step,split,loss,accuracy``
* probability trace — CSV ``t_s,probability,alarm``

All writers go through :func:`atomic_write_*`: content lands in a temp file in
the destination directory and is renamed into place, so a crashed run never
leaves a half-written artifact. Floats are serialized with ``repr`` (shortest
round-trip form), which keeps outputs byte-stable across runs.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataError
from .signals import RawStream


def fmt_float(x: float) -> str:
    """Shortest round-trip decimal form of a float."""
    return repr(float(x))


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: str | Path, obj: object) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# raw streams


def write_raw_csv(path: str | Path, raw: RawStream) -> None:
    buf = _io.StringIO()
    buf.write("timestamp_s,load_kg\n")
    for t, x in zip(raw.timestamps, raw.load):
        buf.write(f"{fmt_float(t)},{fmt_float(x)}\n")
    atomic_write_text(path, buf.getvalue())


def write_raw_jsonl(path: str | Path, raw: RawStream) -> None:
    buf = _io.StringIO()
    for t, x in zip(raw.timestamps, raw.load):
        buf.write('{"t": %s, "load": %s}\n' % (fmt_float(t), fmt_float(x)))
    atomic_write_text(path, buf.getvalue())


def read_raw_stream(path: str | Path, sample_rate_hz: float) -> RawStream:
    """Load a raw stream, validating against the declared sample rate.

    CSV is assumed unless the file ends in .jsonl/.ndjson.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"raw stream file not found: {path}")
    ts: list[float] = []
    xs: list[float] = []
    if path.suffix in (".jsonl", ".ndjson"):
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    ts.append(float(rec["t"]))
                    xs.append(float(rec["load"]))
                except (ValueError, KeyError, TypeError) as exc:
                    raise DataError(f"{path}:{line_no}: bad JSONL record: {exc}") from exc
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["timestamp_s", "load_kg"]:
                raise DataError(
                    f"{path}: expected header 'timestamp_s,load_kg', got {header}"
                )
            for line_no, row in enumerate(reader, 2):
                if not row:
                    continue
                try:
                    ts.append(float(row[0]))
                    xs.append(float(row[1]))
                except (ValueError, IndexError) as exc:
                    raise DataError(f"{path}:{line_no}: bad CSV row: {exc}") from exc
    if not ts:
        raise DataError(f"{path}: no samples")
    return RawStream(
        sample_rate_hz=sample_rate_hz,
        timestamps=np.asarray(ts),
        load=np.asarray(xs),
    ).validate()


# ---------------------------------------------------------------------------
# label intervals

VALID_INTERVAL_LABELS = {"transition", "non_active", "exit", "empty"}


def write_labels_csv(path: str | Path, intervals: Iterable[tuple[float, float, str]]) -> None:
    buf = _io.StringIO()
    buf.write("start_s,end_s,label\n")
    for start, end, label in intervals:
        buf.write(f"{fmt_float(start)},{fmt_float(end)},{label}\n")
    atomic_write_text(path, buf.getvalue())


def read_labels_csv(path: str | Path) -> list[tuple[float, float, str]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"label file not found: {path}")
    out: list[tuple[float, float, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["start_s", "end_s", "label"]:
            raise DataError(f"{path}: expected header 'start_s,end_s,label', got {header}")
        for line_no, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                start, end, label = float(row[0]), float(row[1]), row[2]
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{line_no}: bad label row: {exc}") from exc
            if label not in VALID_INTERVAL_LABELS:
                raise DataError(f"{path}:{line_no}: unknown label {label!r}")
            if end < start:
                raise DataError(f"{path}:{line_no}: end_s precedes start_s")
            out.append((start, end, label))
    return out


# ---------------------------------------------------------------------------
# manifests, logs, traces


def write_manifest_csv(path: str | Path, rows: Iterable[tuple[str, int, float]]) -> None:
    """Window manifest: one (id, label, t_end) row per encoded window."""
    buf = _io.StringIO()
    buf.write("id,label,t_end\n")
    for wid, label, t_end in rows:
        buf.write(f"{wid},{int(label)},{fmt_float(t_end)}\n")
    atomic_write_text(path, buf.getvalue())


def read_manifest_csv(path: str | Path) -> list[tuple[str, int, float]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    out: list[tuple[str, int, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "label", "t_end"]:
            raise DataError(f"{path}: expected header 'id,label,t_end', got {header}")
        for line_no, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                out.append((row[0], int(row[1]), float(row[2])))
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{line_no}: bad manifest row: {exc}") from exc
    return out


def write_training_log_csv(
    path: str | Path, rows: Iterable[tuple[int, str, float, float]]
) -> None:
    buf = _io.StringIO()
    buf.write("step,split,loss,accuracy\n")
    for step, split, loss, acc in rows:
        buf.write(f"{int(step)},{split},{fmt_float(loss)},{fmt_float(acc)}\n")
    atomic_write_text(path, buf.getvalue())


def write_trace_csv(path: str | Path, rows: Iterable[tuple[float, float, bool]]) -> None:
    buf = _io.StringIO()
    buf.write("t_s,probability,alarm\n")
    for t_s, prob, alarm in rows:
        buf.write(f"{fmt_float(t_s)},{fmt_float(prob)},{1 if alarm else 0}\n")
    atomic_write_text(path, buf.getvalue())


def read_trace_csv(path: str | Path) -> list[tuple[float, float, bool]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"trace not found: {path}")
    out: list[tuple[float, float, bool]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t_s", "probability", "alarm"]:
            raise DataError(f"{path}: expected header 't_s,probability,alarm', got {header}")
        for row in reader:
            if row:
                out.append((float(row[0]), float(row[1]), row[2] == "1"))
    return out
