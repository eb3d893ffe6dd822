"""Structured video-description records and their text form.

A describer response is a block of ``Field: value`` lines (with two
nested blocks for vehicle and pedestrian proximity).  :func:`parse_response`
turns such text into an :class:`LvdRecord`, matching field names and
values case-insensitively against the closed vocabularies;
:func:`render_record` writes the canonical text back out, and the two
are inverse to each other on valid records.

Out-of-vocabulary values produce a diagnostic and either reject the
record or fall back to the field's neutral value, per
:class:`ParserConfig`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

PROXIMITY_LEVELS = ("High", "Medium", "Low", "Not present")
VEHICLE_KINDS = ("car", "truck", "motorcycle", "bicycle")
PEDESTRIAN_KINDS = ("adult", "child", "group", "pet")

#: closed vocabulary per scalar field (None: free text)
VOCABULARY = {
    "lane_type": ("dedicated", "shared", "does not exist"),
    "separation": ("Physical", "visual", "none"),
    "traffic_signal": ("Green", "Red", "Not identifiable", "Not present"),
    "signage": None,
    "road_condition": ("good", "fair", "poor"),
    "potholes": ("present", "not present"),
    "pedestrian_activity": ("High", "Medium", "Low"),
    "obstructions": ("Present", "Not present"),
    "weather": ("Sunny", "Cloudy"),
    "stress_level": ("High", "Medium", "Low"),
    "stress_description": None,
    "special_events": ("Present", "Not present"),
    "road_works": ("Present", "Not present"),
    "other_cyclists": PROXIMITY_LEVELS,
    "cyclist_infrastructure": ("good", "fair", "poor"),
}

#: fallback used by the ``neutral`` policy for out-of-vocabulary values
NEUTRAL_VALUES = {
    "lane_type": "does not exist",
    "separation": "none",
    "traffic_signal": "Not identifiable",
    "road_condition": "fair",
    "potholes": "not present",
    "pedestrian_activity": "Low",
    "obstructions": "Not present",
    "weather": "Sunny",
    "stress_level": "Low",
    "special_events": "Not present",
    "road_works": "Not present",
    "other_cyclists": "Not present",
    "cyclist_infrastructure": "fair",
    "_proximity": "Not present",
}

#: canonical text label per field, in canonical output order
FIELD_LABELS = {
    "lane_type": "LaneType",
    "separation": "Type of bicycle lane separation",
    "traffic_signal": "TrafficSignal",
    "signage": "Signage",
    "vehicle_proximity": "VehicleProximity",
    "pedestrian_proximity": "Type of Nearby Pedestrian",
    "road_condition": "Road Condition",
    "potholes": "Presence of potholes",
    "pedestrian_activity": "Pedestrian Activity",
    "obstructions": "Obstructions",
    "weather": "WeatherCondition",
    "stress_level": "CyclistStressLevel",
    "stress_description": "StressLevelDescription",
    "special_events": "Special Events",
    "road_works": "Road Works",
    "other_cyclists": "Presence of Other Cyclists",
    "cyclist_infrastructure": "Cyclist Infrastructure",
}

_SUBKEY_OF = {
    **{k: ("vehicle_proximity", k) for k in VEHICLE_KINDS},
    **{k: ("pedestrian_proximity", k) for k in PEDESTRIAN_KINDS},
}


def _norm(s: str) -> str:
    return re.sub(r"[^a-z0-9]+", "", s.lower())


_LABEL_TO_FIELD = {_norm(v): k for k, v in FIELD_LABELS.items()}
# accept a few natural shorthands seen in responses
_LABEL_TO_FIELD.update({
    _norm("Separation"): "separation",
    _norm("Weather"): "weather",
    _norm("Potholes"): "potholes",
    _norm("Other Cyclists"): "other_cyclists",
    _norm("Nearby Pedestrian"): "pedestrian_proximity",
    _norm("StressLevel"): "stress_level",
})


@dataclass(frozen=True)
class LvdRecord:
    """One window's structured description."""

    lane_type: str
    separation: str
    traffic_signal: str
    signage: tuple[str, ...]
    vehicle_proximity: tuple[tuple[str, str], ...]     # kind -> level
    pedestrian_proximity: tuple[tuple[str, str], ...]  # kind -> level
    road_condition: str
    potholes: str
    pedestrian_activity: str
    obstructions: str
    weather: str
    stress_level: str
    stress_description: str
    special_events: str
    road_works: str
    other_cyclists: str
    cyclist_infrastructure: str

    def vehicles(self) -> dict[str, str]:
        return dict(self.vehicle_proximity)

    def pedestrians(self) -> dict[str, str]:
        return dict(self.pedestrian_proximity)


@dataclass(frozen=True)
class ParseDiagnostic:
    kind: str          # out_of_vocabulary | missing_field | unknown_field | empty
    field: str
    value: str
    message: str
    resolution: str    # rejected | neutral | ignored

    def __str__(self):
        return f"{self.kind}: {self.message} [{self.resolution}]"


@dataclass(frozen=True)
class ParserConfig:
    """``fallback='reject'`` drops records with vocabulary violations;
    ``'neutral'`` substitutes the field's neutral value instead."""

    fallback: str = "reject"

    def __post_init__(self):
        if self.fallback not in ("reject", "neutral"):
            raise ValueError(f"unknown fallback policy {self.fallback!r}")


@dataclass
class ParseOutcome:
    record: LvdRecord | None
    diagnostics: list[ParseDiagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.record is not None


def _match_vocab(value: str, vocab) -> str | None:
    low = value.strip().lower()
    for v in vocab:
        if v.lower() == low:
            return v
    return None


def parse_response(text: str, config: ParserConfig | None = None) -> ParseOutcome:
    """Parse describer output into a record.

    Every known field must be present; scalar values must match the
    field's vocabulary up to case.  Diagnostics list everything found
    wrong; whether an imperfect record survives depends on the fallback
    policy.
    """
    cfg = config or ParserConfig()
    diags: list[ParseDiagnostic] = []
    values: dict[str, object] = {}
    vehicles: dict[str, str] = {}
    pedestrians: dict[str, str] = {}
    fatal = False

    def flag_oov(fieldname, value, vocab, neutral_key=None):
        nonlocal fatal
        allowed = ", ".join(vocab)
        if cfg.fallback == "neutral":
            res = "neutral"
        else:
            res = "rejected"
            fatal = True
        diags.append(ParseDiagnostic(
            "out_of_vocabulary", fieldname, value,
            f"{fieldname}={value!r} not in {{{allowed}}}", res))
        return NEUTRAL_VALUES[neutral_key or fieldname]

    any_field = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line or ":" not in line:
            continue
        label, value = line.split(":", 1)
        key = _norm(label)
        value = value.strip()
        sub = _SUBKEY_OF.get(key)
        if sub is not None:
            any_field = True
            target, kind = sub
            level = _match_vocab(value, PROXIMITY_LEVELS)
            if level is None:
                level = flag_oov(f"{target}.{kind}", value, PROXIMITY_LEVELS,
                                 "_proximity")
            (vehicles if target == "vehicle_proximity" else pedestrians)[kind] = level
            continue
        fieldname = _LABEL_TO_FIELD.get(key)
        if fieldname is None:
            diags.append(ParseDiagnostic(
                "unknown_field", label.strip(), value,
                f"unrecognized field {label.strip()!r}", "ignored"))
            continue
        any_field = True
        if fieldname in ("vehicle_proximity", "pedestrian_proximity"):
            continue  # block header; sub-lines carry the data
        if fieldname == "signage":
            items = tuple(s.strip() for s in value.split(",") if s.strip())
            values[fieldname] = items if items else ("none",)
            continue
        vocab = VOCABULARY[fieldname]
        if vocab is None:
            values[fieldname] = value
            continue
        matched = _match_vocab(value, vocab)
        if matched is None:
            matched = flag_oov(fieldname, value, vocab)
        values[fieldname] = matched

    if not any_field:
        diags.append(ParseDiagnostic(
            "empty", "", "", "no fields found", "rejected"))
        return ParseOutcome(None, diags)

    def fill_missing(fieldname, neutral):
        nonlocal fatal
        if cfg.fallback == "neutral":
            diags.append(ParseDiagnostic(
                "missing_field", fieldname, "",
                f"field {fieldname!r} absent", "neutral"))
            return neutral
        diags.append(ParseDiagnostic(
            "missing_field", fieldname, "",
            f"field {fieldname!r} absent", "rejected"))
        fatal = True
        return neutral

    for fieldname, vocab in VOCABULARY.items():
        if fieldname in values:
            continue
        if fieldname == "signage":
            values[fieldname] = (fill_missing(fieldname, "none"),)
        elif fieldname == "stress_description":
            values[fieldname] = fill_missing(fieldname, "")
        else:
            values[fieldname] = fill_missing(fieldname, NEUTRAL_VALUES[fieldname])
    for kind in VEHICLE_KINDS:
        if kind not in vehicles:
            vehicles[kind] = fill_missing(f"vehicle_proximity.{kind}",
                                          NEUTRAL_VALUES["_proximity"])
    for kind in PEDESTRIAN_KINDS:
        if kind not in pedestrians:
            pedestrians[kind] = fill_missing(f"pedestrian_proximity.{kind}",
                                             NEUTRAL_VALUES["_proximity"])

    if fatal:
        return ParseOutcome(None, diags)
    record = LvdRecord(
        lane_type=values["lane_type"],
        separation=values["separation"],
        traffic_signal=values["traffic_signal"],
        signage=tuple(values["signage"]),
        vehicle_proximity=tuple((k, vehicles[k]) for k in VEHICLE_KINDS),
        pedestrian_proximity=tuple((k, pedestrians[k]) for k in PEDESTRIAN_KINDS),
        road_condition=values["road_condition"],
        potholes=values["potholes"],
        pedestrian_activity=values["pedestrian_activity"],
        obstructions=values["obstructions"],
        weather=values["weather"],
        stress_level=values["stress_level"],
        stress_description=values["stress_description"],
        special_events=values["special_events"],
        road_works=values["road_works"],
        other_cyclists=values["other_cyclists"],
        cyclist_infrastructure=values["cyclist_infrastructure"],
    )
    return ParseOutcome(record, diags)


def render_record(record: LvdRecord) -> str:
    """Canonical text form; ``parse_response`` recovers the record."""
    lines = [
        f"{FIELD_LABELS['lane_type']}: {record.lane_type}",
        f"{FIELD_LABELS['separation']}: {record.separation}",
        f"{FIELD_LABELS['traffic_signal']}: {record.traffic_signal}",
        f"{FIELD_LABELS['signage']}: {', '.join(record.signage)}",
        f"{FIELD_LABELS['vehicle_proximity']}:",
    ]
    for kind, level in record.vehicle_proximity:
        lines.append(f"{kind.capitalize()}: {level}")
    lines.append(f"{FIELD_LABELS['pedestrian_proximity']}:")
    for kind, level in record.pedestrian_proximity:
        lines.append(f"{kind.capitalize()}: {level}")
    lines += [
        f"{FIELD_LABELS['road_condition']}: {record.road_condition}",
        f"{FIELD_LABELS['potholes']}: {record.potholes}",
        f"{FIELD_LABELS['pedestrian_activity']}: {record.pedestrian_activity}",
        f"{FIELD_LABELS['obstructions']}: {record.obstructions}",
        f"{FIELD_LABELS['weather']}: {record.weather}",
        f"{FIELD_LABELS['stress_level']}: {record.stress_level}",
        f"{FIELD_LABELS['stress_description']}: {record.stress_description}",
        f"{FIELD_LABELS['special_events']}: {record.special_events}",
        f"{FIELD_LABELS['road_works']}: {record.road_works}",
        f"{FIELD_LABELS['other_cyclists']}: {record.other_cyclists}",
        f"{FIELD_LABELS['cyclist_infrastructure']}: {record.cyclist_infrastructure}",
    ]
    return "\n".join(lines) + "\n"
