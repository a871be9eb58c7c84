"""File formats: CSV time series, JSON-lines event logs and JSON documents.

Floats are written with ``repr`` so reading a file back reproduces the
in-memory values exactly.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .jumps import JumpEvent


@dataclass
class TimeSeriesRecord:
    t: float
    values: dict[str, float]
    n_eff: int | None = None
    counts: list[tuple[int, int]] | None = None  # (state id, count)


def records_from_run(run) -> list[TimeSeriesRecord]:
    names = list(run.values)
    out = []
    for k, t in enumerate(run.times):
        counts = run.counts[k] if run.counts is not None else None
        out.append(
            TimeSeriesRecord(
                float(t), {n: float(run.values[n][k]) for n in names}, int(run.n_eff[k]), counts
            )
        )
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_counts(counts) -> str:
    return ";".join(f"{sid}:{c}" for sid, c in counts)


def _parse_counts(text: str) -> list[tuple[int, int]]:
    if not text:
        return []
    return [tuple(int(p) for p in item.split(":")) for item in text.split(";")]


def write_timeseries(path: str | Path, records: Sequence[TimeSeriesRecord]) -> None:
    """CSV with header ``t, <observables...>[, n_eff][, counts]``."""
    if not records:
        raise ValueError("no records to write")
    names = list(records[0].values)
    has_neff = records[0].n_eff is not None
    has_counts = records[0].counts is not None
    header = ["t", *names] + (["n_eff"] if has_neff else []) + (["counts"] if has_counts else [])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in records:
            row = [_fmt(r.t), *(_fmt(r.values[n]) for n in names)]
            if has_neff:
                row.append(str(r.n_eff))
            if has_counts:
                row.append(_fmt_counts(r.counts))
            w.writerow(row)


def read_timeseries(path: str | Path) -> list[TimeSeriesRecord]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "t":
        raise ValueError(f"{path}: first column must be 't'")
    names = [h for h in header[1:] if h not in ("n_eff", "counts")]
    i_neff = header.index("n_eff") if "n_eff" in header else None
    i_counts = header.index("counts") if "counts" in header else None
    out = []
    for row in body:
        vals = {n: float(row[1 + i]) for i, n in enumerate(names)}
        out.append(
            TimeSeriesRecord(
                float(row[0]),
                vals,
                int(row[i_neff]) if i_neff is not None else None,
                _parse_counts(row[i_counts]) if i_counts is not None else None,
            )
        )
    return out


def write_events(path: str | Path, events: Iterable[JumpEvent]) -> None:
    with Path(path).open("w") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_record()) + "\n")


def read_events(path: str | Path) -> list[JumpEvent]:
    with Path(path).open() as fh:
        return [JumpEvent.from_record(json.loads(line)) for line in fh if line.strip()]


def write_json(path: str | Path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


def write_trajectory(path: str | Path, times, states: np.ndarray, labels: Sequence[str] | None = None) -> None:
    """Tracked-member CSV: populations, then exact amplitudes as re/im columns."""
    d = states.shape[1]
    labels = list(labels) if labels is not None else [f"p_{i}" for i in range(d)]
    pops = states.real**2 + states.imag**2
    amp_cols = [f"{part}_{i}" for i in range(d) for part in ("re", "im")]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *labels, *amp_cols])
        for t, p, v in zip(times, pops, states):
            amps = [x for a in v for x in (_fmt(a.real), _fmt(a.imag))]
            w.writerow([_fmt(t), *(_fmt(x) for x in p), *amps])


def read_trajectory(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Times and tracked-member amplitudes from :func:`write_trajectory` output."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    d = sum(1 for h in header if h.startswith("re_"))
    first = header.index("re_0")
    times = np.array([float(r[0]) for r in rows[1:]])
    states = np.array(
        [[complex(float(r[first + 2 * i]), float(r[first + 2 * i + 1])) for i in range(d)] for r in rows[1:]]
    )
    return times, states.reshape(len(times), d)
