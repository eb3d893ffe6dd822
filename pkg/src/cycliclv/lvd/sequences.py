"""Group video frames into per-window image sequences.

Frames are (timestamp, path) pairs at roughly 1 fps.  Each 5-second
window of the ride, aligned with the imputer's windowing, gets a small
evenly spaced subset of its frames; windows without frames are skipped
and reported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd


class SequenceError(ValueError):
    pass


@dataclass(frozen=True)
class FrameSequence:
    """Frames selected for one window of one individual's ride."""

    individual_id: str
    t: int                       # window index
    frame_paths: tuple[str, ...]
    t_start: float
    lat: float = math.nan
    lon: float = math.nan


@dataclass
class ExtractionReport:
    n_windows: int = 0
    skipped_windows: list[int] = field(default_factory=list)

    def note_skip(self, w):
        self.skipped_windows.append(w)


def extract_sequences(frames, individual_id="", window_s=5.0,
                      frames_per_window=2, anchor=None):
    """Select frames per window.

    ``frames`` is an iterable of (timestamp, path) or (timestamp, path,
    lat, lon) tuples; ``anchor`` fixes the time origin (default: first
    frame's timestamp).  Returns ``(sequences, report)``; each window
    with at least one frame yields a sequence of up to
    ``frames_per_window`` evenly spaced frames, tagged with the mean
    position of the selected frames.
    """
    if frames_per_window < 1:
        raise SequenceError("frames_per_window must be >= 1")
    rows = []
    for item in frames:
        ts, path = item[0], item[1]
        lat, lon = (item[2], item[3]) if len(item) > 3 else (math.nan, math.nan)
        rows.append((float(ts), str(path), float(lat), float(lon)))
    rows.sort(key=lambda r: r[0])
    report = ExtractionReport()
    if not rows:
        return [], report
    t0 = rows[0][0] if anchor is None else float(anchor)

    buckets: dict[int, list] = {}
    for row in rows:
        w = int((row[0] - t0) // window_s)
        buckets.setdefault(w, []).append(row)

    sequences = []
    last = max(buckets)
    for w in range(min(buckets), last + 1):
        group = buckets.get(w)
        if not group:
            report.note_skip(w)
            continue
        n = len(group)
        if n <= frames_per_window:
            picked = group
        else:
            idx = np.round(
                np.linspace(0, n - 1, frames_per_window)
            ).astype(int)
            picked = [group[i] for i in idx]
        lats = [r[2] for r in picked if math.isfinite(r[2])]
        lons = [r[3] for r in picked if math.isfinite(r[3])]
        sequences.append(FrameSequence(
            individual_id=individual_id,
            t=w,
            frame_paths=tuple(r[1] for r in picked),
            t_start=t0 + w * window_s,
            lat=float(np.mean(lats)) if lats else math.nan,
            lon=float(np.mean(lons)) if lons else math.nan,
        ))
        report.n_windows += 1
    return sequences, report


def load_frame_index(path) -> list[tuple]:
    """Read a frame index CSV (columns timestamp, path and optionally
    lat, lon)."""
    frame = pd.read_csv(path)
    for col in ("timestamp", "path"):
        if col not in frame.columns:
            raise SequenceError(f"frame index lacks column {col!r}")
    has_pos = {"lat", "lon"} <= set(frame.columns)
    out = []
    for row in frame.itertuples(index=False):
        if has_pos:
            out.append((row.timestamp, row.path, row.lat, row.lon))
        else:
            out.append((row.timestamp, row.path))
    return out
