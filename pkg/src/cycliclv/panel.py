"""Panel dataset loading, validation and feature derivation.

Observations are 5-second windows of a ride, keyed by ``individual_id``
and a window index ``t``.  The canonical column namespace is flat: every
covariate a model may reference is one numeric column.  A schema mapping
file renames source columns to canonical names and can convert units::

    individual_id = RiderID
    t = Window
    speed = SPEED
    speed.units = m/s
    dist_junction = DJ
    dist_junction.units = km

Only ``individual_id`` and ``t`` are mandatory at load time.  Everything
else is validated when present and checked against a model's covariate
needs at compile time.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .modelspec import ACTION_CODES, ACTIONS

#: indicator columns that may be missing per row without penalty
INDICATOR_COLUMNS = ("tc", "pc", "hr", "hrv")

#: columns with a structural meaning beyond being a covariate
ID_COLUMNS = ("individual_id", "t")
ACTION_COLUMNS = ("action", "action_magnitude")

_ACTION_NAME_TO_CODE = {name: code for name, code in ACTION_CODES.items()}

#: supported unit conversions, per canonical column family
_UNIT_FACTORS = {
    "speed": {"km/h": 1.0, "m/s": 3.6},
    "dist_junction": {"m": 1.0, "km": 1000.0},
    "dist_traveled": {"km": 1.0, "m": 0.001},
    "time_elapsed": {"min": 1.0, "s": 1.0 / 60.0},
}


class PanelError(ValueError):
    """Raised when a data file violates the panel contract."""


@dataclass
class ValidationReport:
    """Line-oriented record of everything noticed while loading."""

    lines: list[str] = field(default_factory=list)

    def note(self, msg):
        self.lines.append(str(msg))

    def __str__(self):
        return "\n".join(self.lines)


@dataclass
class DeriveConfig:
    """Thresholds for the discretized distance and speed levels.

    Defaults are the reference quartile cut points (meters to the next
    junction: first quartile 9.7, last 82.8; speed in km/h: 4.4, 17.4).
    Override for data in other units.
    """

    dist_low: float = 9.7
    dist_high: float = 82.8
    speed_low: float = 4.4
    speed_high: float = 17.4


@dataclass
class PanelDataset:
    """Validated panel: a frame sorted by (individual, t) plus a report."""

    frame: pd.DataFrame
    report: ValidationReport = field(default_factory=ValidationReport)

    @property
    def n_obs(self) -> int:
        return len(self.frame)

    @property
    def individuals(self) -> list:
        return list(dict.fromkeys(self.frame["individual_id"].tolist()))

    @property
    def n_individuals(self) -> int:
        return len(self.individuals)

    def columns(self) -> list[str]:
        return list(self.frame.columns)

    def covariate_columns(self) -> list[str]:
        skip = set(ID_COLUMNS) | set(ACTION_COLUMNS)
        return [c for c in self.frame.columns if c not in skip]

    def individual_slices(self) -> list[tuple[object, slice]]:
        """Contiguous row ranges per individual, in sorted frame order."""
        ids = self.frame["individual_id"].to_numpy()
        out = []
        start = 0
        for i in range(1, len(ids) + 1):
            if i == len(ids) or ids[i] != ids[start]:
                out.append((ids[start], slice(start, i)))
                start = i
        return out

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index=False)

    def rows(self):
        for _, row in self.frame.iterrows():
            yield row


def _read_schema(path) -> tuple[dict, dict]:
    """Read a ``canonical = source`` mapping plus ``col.units = u`` lines."""
    rename, units = {}, {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise PanelError(f"schema line {lineno}: cannot parse {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.endswith(".units"):
                units[key[: -len(".units")]] = value
            else:
                rename[value] = key
    return rename, units


def load_panel(path_or_buffer, schema=None) -> PanelDataset:
    """Load a CSV into a validated :class:`PanelDataset`.

    ``schema`` is an optional path to a mapping file; without it the CSV
    header is taken to already use canonical names.
    """
    report = ValidationReport()
    frame = pd.read_csv(path_or_buffer)
    if schema is not None:
        rename, units = _read_schema(schema)
        missing = [src for src in rename if src not in frame.columns]
        if missing:
            raise PanelError(f"schema names absent source column(s): {missing}")
        frame = frame.rename(columns=rename)
        for col, unit in units.items():
            if col not in frame.columns:
                raise PanelError(f"units given for unknown column {col!r}")
            table = _UNIT_FACTORS.get(col)
            if table is None or unit not in table:
                raise PanelError(f"unsupported units {unit!r} for column {col!r}")
            if table[unit] != 1.0:
                frame[col] = frame[col] * table[unit]
                report.note(f"converted {col} from {unit}")

    for col in ID_COLUMNS:
        if col not in frame.columns:
            raise PanelError(f"missing required column {col!r}")

    if "action" in frame.columns and frame["action"].dtype == object:
        codes = frame["action"].map(_ACTION_NAME_TO_CODE)
        bad = frame["action"][codes.isna() & frame["action"].notna()]
        if len(bad):
            raise PanelError(f"unknown action label {bad.iloc[0]!r}")
        frame["action"] = codes

    for col in frame.columns:
        if col == "individual_id":
            continue
        coerced = pd.to_numeric(frame[col], errors="coerce")
        new_nan = coerced.isna() & frame[col].notna()
        if new_nan.any():
            raise PanelError(
                f"non-numeric value {frame[col][new_nan].iloc[0]!r} in column {col!r}"
            )
        frame[col] = coerced

    frame = frame.sort_values(["individual_id", "t"], kind="mergesort")
    frame = frame.reset_index(drop=True)

    ds = PanelDataset(frame, report)
    _validate(ds)
    report.note(f"loaded {ds.n_obs} observations, {ds.n_individuals} individuals")
    return ds


def _validate(ds: PanelDataset) -> None:
    frame = ds.frame
    for ind, sl in ds.individual_slices():
        t = frame["t"].to_numpy()[sl]
        if np.any(np.diff(t) <= 0):
            raise PanelError(f"non-monotone t within individual {ind!r}")
        if "time_elapsed" in frame.columns:
            tt = frame["time_elapsed"].to_numpy()[sl]
            ok = np.isfinite(tt)
            if np.any(np.diff(tt[ok]) <= 0):
                raise PanelError(
                    f"non-increasing time_elapsed within individual {ind!r}"
                )
    for col, low in (("speed", 0.0), ("dist_junction", 0.0)):
        if col in frame.columns:
            vals = frame[col].to_numpy()
            bad = np.isfinite(vals) & (vals < low)
            if bad.any():
                raise PanelError(f"negative {col} for individual "
                                 f"{frame['individual_id'][bad].iloc[0]!r}")
    if "action" in frame.columns:
        act = frame["action"].to_numpy()
        ok = np.isnan(act) | np.isin(act, list(ACTION_CODES.values()))
        if not ok.all():
            raise PanelError(f"action code out of range: {act[~ok][0]!r}")


def derive_levels(ds: PanelDataset, config: DeriveConfig | None = None) -> PanelDataset:
    """Add the discretized level flags and standard interaction columns.

    Derived columns (strict inequalities; values on a threshold set
    neither flag):

    * ``dist_low`` = 1 when ``dist_junction`` < ``config.dist_low``
    * ``dist_high`` = 1 when ``dist_junction`` > ``config.dist_high``
    * ``speed_low`` / ``speed_high`` likewise from ``speed``
    * ``dj_x_knows`` = ``dist_junction * knows_route``
    * ``time_sq``, ``dist_traveled_sq``, ``temp_x_humidity``

    Interaction columns are only added when their inputs exist.
    """
    cfg = config or DeriveConfig()
    frame = ds.frame.copy()
    if "dist_junction" in frame.columns:
        dj = frame["dist_junction"].to_numpy(dtype=float)
        frame["dist_low"] = (dj < cfg.dist_low).astype(float)
        frame["dist_high"] = (dj > cfg.dist_high).astype(float)
    if "speed" in frame.columns:
        sp = frame["speed"].to_numpy(dtype=float)
        frame["speed_low"] = (sp < cfg.speed_low).astype(float)
        frame["speed_high"] = (sp > cfg.speed_high).astype(float)
    if {"dist_junction", "knows_route"} <= set(frame.columns):
        frame["dj_x_knows"] = frame["dist_junction"] * frame["knows_route"]
    if "time_elapsed" in frame.columns:
        frame["time_sq"] = frame["time_elapsed"] ** 2
    if "dist_traveled" in frame.columns:
        frame["dist_traveled_sq"] = frame["dist_traveled"] ** 2
    if {"temperature", "humidity"} <= set(frame.columns):
        frame["temp_x_humidity"] = frame["temperature"] * frame["humidity"]
    out = PanelDataset(frame, ds.report)
    out.report.note("derived level flags and interactions")
    return out


def exclude_forced_stops(ds: PanelDataset) -> PanelDataset:
    """Drop waits at red lights: these are compelled, not chosen.

    A row is removed when its action is wait and the red signal applies.
    The ``red_light`` covariate is used when present; otherwise a row
    with ``traffic_light`` set and a wait action is treated as forced.
    """
    frame = ds.frame
    if "action" not in frame.columns:
        raise PanelError("cannot exclude forced stops without an action column")
    wait = frame["action"] == ACTION_CODES["wait"]
    if "red_light" in frame.columns:
        red = frame["red_light"].fillna(0) > 0
    elif "traffic_light" in frame.columns:
        red = frame["traffic_light"].fillna(0) > 0
    else:
        red = pd.Series(False, index=frame.index)
    drop = wait & red
    out = PanelDataset(frame[~drop].reset_index(drop=True), ds.report)
    out.report.note(f"excluded {int(drop.sum())} forced stops (wait at red signal)")
    return out


def standardize_indicators(ds: PanelDataset, stats=None) -> PanelDataset:
    """Z-score the physiological indicator columns per individual.

    ``stats`` may supply baseline ``{(individual, column): (mean, std)}``
    pairs; otherwise each individual's own ride mean and standard
    deviation are used.  Missing values stay missing; a zero-variance
    indicator becomes all zeros.
    """
    frame = ds.frame.copy()
    for col in INDICATOR_COLUMNS:
        if col not in frame.columns:
            continue
        for ind, sl in ds.individual_slices():
            vals = frame[col].to_numpy(dtype=float)[sl]
            if stats is not None and (ind, col) in stats:
                mean, std = stats[(ind, col)]
            else:
                ok = np.isfinite(vals)
                if not ok.any():
                    continue
                mean = float(np.mean(vals[ok]))
                std = float(np.std(vals[ok]))
            z = (vals - mean) / std if std > 0 else np.where(
                np.isfinite(vals), 0.0, np.nan
            )
            frame.loc[frame.index[sl], col] = z
    out = PanelDataset(frame, ds.report)
    out.report.note("standardized indicator columns per individual")
    return out


def require_covariates(ds: PanelDataset, names) -> PanelDataset:
    """Drop rows with a missing value in any of the named covariates.

    A column absent altogether (or entirely missing) is an error; sparse
    missingness rejects just the affected rows, with the count reported.
    """
    frame = ds.frame
    names = [n for n in names]
    for name in names:
        if name not in frame.columns:
            raise PanelError(f"model references covariate {name!r} absent from data")
        if frame[name].isna().all():
            raise PanelError(f"covariate {name!r} has no observed values")
    if not names:
        return ds
    keep = ~frame[names].isna().any(axis=1)
    dropped = int((~keep).sum())
    if dropped == 0:
        return ds
    out = PanelDataset(frame[keep].reset_index(drop=True), ds.report)
    out.report.note(f"rejected {dropped} rows with missing required covariates")
    return out


def make_panel(frame: pd.DataFrame) -> PanelDataset:
    """Build a dataset from an in-memory frame through the same checks
    as :func:`load_panel`."""
    buf = io.StringIO()
    frame.to_csv(buf, index=False)
    buf.seek(0)
    return load_panel(buf)
