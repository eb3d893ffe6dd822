"""Impute cyclist actions from a 1 Hz GPS speed trace.

The trace is split into segments wherever the gap between consecutive
fixes exceeds ``max_gap_s``.  Within a segment every sample gets a label
from its speed and the delta to the previous sample, samples are grouped
into 5-second windows anchored at the segment start, and each window's
action is the highest-priority label present in it, with the priority
order

    brake > wait > accelerate > decelerate > maintain.

Wait is decided on the instantaneous speed alone and overrides any
delta-based label.  Per-sample speed deltas are accumulated into window
magnitudes (all rises into ``accel_mag``, sharp drops into
``brake_mag``, every other drop into ``decel_mag``), so the signed sum
of the three magnitudes telescopes to the window's net speed change.

Correction passes then clean up artifacts; the built-in ones are

* ``isolated_wait``: a wait window between two non-wait windows whose
  own mean speed exceeds ``wait_speed`` becomes decelerate (a spurious
  zero fix, not an actual stop);
* ``spurious_brake``: a brake window whose net speed drop over the
  window stays below ``brake_drop`` becomes decelerate (a single noisy
  dip, not a braking maneuver).

The default thresholds below are engineering choices for 1 Hz traces,
not published values; they are carried in the result metadata and every
one of them can be overridden.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

#: highest priority first
PRIORITY = ("brake", "wait", "accelerate", "decelerate", "maintain")
_PRIORITY_RANK = {a: i for i, a in enumerate(PRIORITY)}


class ImputerError(ValueError):
    pass


@dataclass(frozen=True)
class GpsSample:
    timestamp: float          # seconds
    speed: float              # km/h
    lat: float = math.nan
    lon: float = math.nan


@dataclass(frozen=True)
class ImputerConfig:
    brake_drop: float = 5.0       # km/h per sample, sharp drop
    decel_drop: float = 1.5       # km/h per sample, gradual drop
    accel_rise: float = 1.5       # km/h per sample
    wait_speed: float = 1.0       # km/h, at or below means standing
    window_s: float = 5.0
    max_gap_s: float = 5.0
    min_window_samples: int = 2
    corrections: tuple = ("isolated_wait", "spurious_brake")

    def metadata(self) -> dict:
        return {
            "brake_drop": self.brake_drop,
            "decel_drop": self.decel_drop,
            "accel_rise": self.accel_rise,
            "wait_speed": self.wait_speed,
            "window_s": self.window_s,
            "max_gap_s": self.max_gap_s,
            "min_window_samples": self.min_window_samples,
            "corrections": list(self.corrections),
            "thresholds_source": "package defaults (not published values)",
        }


@dataclass
class WindowAction:
    window_index: int
    action: str
    accel_mag: float
    decel_mag: float
    brake_mag: float
    n_samples: int
    mean_speed: float
    first_speed: float
    last_speed: float
    t_start: float


def split_segments(samples, config: ImputerConfig | None = None):
    """Split a trace into gap-free segments.

    Timestamps must be strictly increasing; a gap larger than
    ``max_gap_s`` starts a new segment.
    """
    cfg = config or ImputerConfig()
    samples = list(samples)
    for a, b in zip(samples, samples[1:]):
        if b.timestamp <= a.timestamp:
            raise ImputerError(
                f"timestamps not strictly increasing at t={b.timestamp!r}"
            )
    if not samples:
        return []
    segments = [[samples[0]]]
    for a, b in zip(samples, samples[1:]):
        if b.timestamp - a.timestamp > cfg.max_gap_s:
            segments.append([])
        segments[-1].append(b)
    return segments


def classify_samples(segment, config: ImputerConfig | None = None):
    """Per-sample labels and deltas for one gap-free segment.

    Returns ``(labels, deltas)``; ``deltas[i]`` is the speed change from
    sample i-1 to sample i (``deltas[0]`` is 0; the first sample has no
    delta and is labeled maintain unless it is standing).
    """
    cfg = config or ImputerConfig()
    labels, deltas = [], []
    prev = None
    for s in segment:
        if s.speed < 0:
            raise ImputerError(f"negative speed {s.speed!r} at t={s.timestamp!r}")
        dv = 0.0 if prev is None else s.speed - prev.speed
        deltas.append(dv)
        if s.speed <= cfg.wait_speed:
            labels.append("wait")
        elif prev is None:
            labels.append("maintain")
        elif dv <= -cfg.brake_drop:
            labels.append("brake")
        elif dv <= -cfg.decel_drop:
            labels.append("decelerate")
        elif dv >= cfg.accel_rise:
            labels.append("accelerate")
        else:
            labels.append("maintain")
        prev = s
    return labels, deltas


def aggregate_windows(segment, labels, deltas, config: ImputerConfig | None = None):
    """Group one segment's samples into windows and emit window actions.

    Windows are ``window_s``-wide buckets anchored at the segment's
    first timestamp.  A window with fewer than ``min_window_samples``
    samples is dropped (with its deltas).  The window action is the
    highest-priority label present; magnitudes accumulate the window's
    deltas by kind and are reported as positive numbers.
    """
    cfg = config or ImputerConfig()
    if not segment:
        return []
    t0 = segment[0].timestamp
    buckets: dict[int, list[int]] = {}
    for i, s in enumerate(segment):
        w = int((s.timestamp - t0) // cfg.window_s)
        buckets.setdefault(w, []).append(i)

    windows = []
    for w in sorted(buckets):
        idx = buckets[w]
        if len(idx) < cfg.min_window_samples:
            continue
        present = {labels[i] for i in idx}
        action = min(present, key=_PRIORITY_RANK.__getitem__)
        accel = decel = brake = 0.0
        for i in idx:
            if i == 0:
                continue  # the segment's first sample has no delta
            dv = deltas[i]
            if dv > 0:
                accel += dv
            elif dv <= -cfg.brake_drop:
                brake += -dv
            elif dv < 0:
                decel += -dv
        speeds = [segment[i].speed for i in idx]
        windows.append(WindowAction(
            window_index=w,
            action=action,
            accel_mag=accel,
            decel_mag=decel,
            brake_mag=brake,
            n_samples=len(idx),
            mean_speed=float(np.mean(speeds)),
            first_speed=speeds[0],
            last_speed=speeds[-1],
            t_start=t0 + w * cfg.window_s,
        ))
    return windows


def correct_assignments(windows, config: ImputerConfig | None = None):
    """Apply the configured correction passes, in order.

    Each pass reads a snapshot of the previous state and rewrites
    actions only, never magnitudes, so the telescoping of magnitudes to
    net speed change survives correction.
    """
    cfg = config or ImputerConfig()
    out = list(windows)
    for name in cfg.corrections:
        if name == "isolated_wait":
            snapshot = out
            new = []
            for i, w in enumerate(snapshot):
                if (w.action == "wait"
                        and 0 < i < len(snapshot) - 1
                        and snapshot[i - 1].action != "wait"
                        and snapshot[i + 1].action != "wait"
                        and w.mean_speed > cfg.wait_speed):
                    w = replace_action(w, "decelerate")
                new.append(w)
            out = new
        elif name == "spurious_brake":
            out = [
                replace_action(w, "decelerate")
                if (w.action == "brake"
                    and (w.first_speed - w.last_speed) < cfg.brake_drop)
                else w
                for w in out
            ]
        else:
            raise ImputerError(f"unknown correction pass {name!r}")
    return out


def replace_action(w: WindowAction, action: str) -> WindowAction:
    return replace(w, action=action)


@dataclass
class ImputeResult:
    windows: list[WindowAction]          # all segments, ride order
    segment_of: list[int]                # parallel: segment number per window
    n_segments: int
    n_dropped_windows: int
    metadata: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for t, (seg, w) in enumerate(zip(self.segment_of, self.windows)):
            rows.append({
                "t": t,
                "segment": seg,
                "window_index": w.window_index,
                "t_start": w.t_start,
                "action": w.action,
                "accel_mag": w.accel_mag,
                "decel_mag": w.decel_mag,
                "brake_mag": w.brake_mag,
                "n_samples": w.n_samples,
                "mean_speed": w.mean_speed,
            })
        return pd.DataFrame(rows)


def impute(samples, config: ImputerConfig | None = None) -> ImputeResult:
    """Full pipeline: segment, classify, window, correct."""
    cfg = config or ImputerConfig()
    segments = split_segments(samples, cfg)
    all_windows, seg_of = [], []
    dropped = 0
    for seg_no, segment in enumerate(segments):
        labels, deltas = classify_samples(segment, cfg)
        windows = aggregate_windows(segment, labels, deltas, cfg)
        n_buckets = len({int((s.timestamp - segment[0].timestamp) // cfg.window_s)
                         for s in segment})
        dropped += n_buckets - len(windows)
        windows = correct_assignments(windows, cfg)
        all_windows.extend(windows)
        seg_of.extend([seg_no] * len(windows))
    return ImputeResult(
        windows=all_windows,
        segment_of=seg_of,
        n_segments=len(segments),
        n_dropped_windows=dropped,
        metadata=cfg.metadata(),
    )


def load_trace(path) -> list[GpsSample]:
    """Read a trace CSV with columns timestamp, speed (and optionally
    lat, lon)."""
    frame = pd.read_csv(path)
    for col in ("timestamp", "speed"):
        if col not in frame.columns:
            raise ImputerError(f"trace file lacks column {col!r}")
    has_pos = {"lat", "lon"} <= set(frame.columns)
    out = []
    for row in frame.itertuples(index=False):
        out.append(GpsSample(
            timestamp=float(row.timestamp),
            speed=float(row.speed),
            lat=float(row.lat) if has_pos else math.nan,
            lon=float(row.lon) if has_pos else math.nan,
        ))
    return out
