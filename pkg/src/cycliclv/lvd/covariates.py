"""Distill structured descriptions into binary model covariates.

Each covariate is a named rule over an :class:`LvdRecord`; the default
registry produces the eight flags the bundled model variants reference.
Rules can be replaced or extended by passing a custom mapping.
"""
from __future__ import annotations

import pandas as pd

from .records import LvdRecord


def _any_level(pairs, level: str) -> bool:
    return any(lv == level for _, lv in pairs)


DEFAULT_RULES = {
    "high_vehicular_activity":
        lambda r: _any_level(r.vehicle_proximity, "High"),
    "high_pedestrians_activity":
        lambda r: r.pedestrian_activity == "High"
        or _any_level(r.pedestrian_proximity, "High"),
    "high_cyclists_activity":
        lambda r: r.other_cyclists == "High",
    "bad_infrastructure":
        lambda r: r.cyclist_infrastructure == "poor",
    "route_bad_condition":
        lambda r: r.road_condition == "poor",
    "red_light":
        lambda r: r.traffic_signal == "Red",
    "stressful_situation":
        lambda r: r.stress_level == "High" or r.special_events == "Present",
    "cloudy":
        lambda r: r.weather == "Cloudy",
}


def record_covariates(record: LvdRecord, rules=None) -> dict[str, float]:
    """Binary flags for one record."""
    rules = rules or DEFAULT_RULES
    return {name: float(bool(rule(record))) for name, rule in rules.items()}


def to_covariates(described, rules=None) -> pd.DataFrame:
    """Flag table for a batch of described windows.

    ``described`` is an iterable of objects with ``individual_id``,
    ``t`` and ``record`` attributes (see
    :class:`cycliclv.lvd.client.DescribedWindow`).  The result has one
    row per window, keyed by (individual_id, t), ready to join onto a
    panel.
    """
    rules = rules or DEFAULT_RULES
    rows = []
    for d in described:
        row = {"individual_id": d.individual_id, "t": d.t}
        row.update(record_covariates(d.record, rules))
        rows.append(row)
    frame = pd.DataFrame(rows, columns=["individual_id", "t", *rules])
    return frame.sort_values(["individual_id", "t"]).reset_index(drop=True)
