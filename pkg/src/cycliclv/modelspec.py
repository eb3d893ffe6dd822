"""Model specification files.

A model is described by a small line-oriented text format.  Sections are
opened with a bracketed header and contain ``covariate -> parameter``
term lines; noise scales are attached with ``noise = <parameter>``::

    [model]
    name = example

    [latent fatigue]
    const -> b_fat_const
    time_elapsed -> b_fat_time

    [utility accelerate]
    const -> b_acc_const
    speed -> b_acc_speed
    fatigue -> b_acc_fatigue      # latent loading

    [measurement hr]
    fatigue -> g_hr_fatigue
    noise = s_hr

    [continuous accelerate]
    speed -> m_acc_speed
    noise = s_acc

    [draws]
    count = 500
    scheme = halton
    seed = 1

Rules enforced by :func:`parse_spec`:

* exactly five utility sections (accelerate, brake, decelerate, wait,
  maintain); maintain must stay empty (it is the zero-utility reference);
* the wait utility may not reference the speed covariates (``speed``,
  ``speed_low``, ``speed_high``);
* ``const`` is a reserved pseudo-covariate equal to one;
* a utility term whose left-hand name matches a declared latent is a
  latent loading; measurement terms must reference latents; latent
  equations may not reference other latents;
* every parameter name is distinct across the whole file;
* continuous sections are only allowed for accelerate, brake and
  decelerate (the actions carrying an observed magnitude);
* when a covariate schema is supplied, every non-latent term must name a
  known covariate.

Latent equations carry an implicit standard-normal disturbance and the
utilities an implicit Gumbel one; neither has a free scale (these fix
the identification of the latent and choice scales).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources

from .params import ParameterVector

ACTIONS = ("accelerate", "brake", "decelerate", "wait", "maintain")
#: 1-based action codes used in data files.
ACTION_CODES = {name: i + 1 for i, name in enumerate(ACTIONS)}
CONTINUOUS_ACTIONS = ("accelerate", "brake", "decelerate")
#: covariates that may never enter the wait utility
SPEED_FAMILY = frozenset({"speed", "speed_low", "speed_high"})
#: reserved intercept pseudo-covariate
CONST = "const"

#: minimum allowed value for noise scales (keeps densities finite)
SIGMA_FLOOR = 1e-6

BUNDLED_SPECS = ("mnl", "mnl_i", "hm", "hm_a", "hm_i", "hm_ia")


class SpecError(ValueError):
    """Raised for malformed or inconsistent model specification text."""


@dataclass(frozen=True)
class Term:
    """A single ``ref -> parameter`` entry of an equation."""

    ref: str
    parameter: str


@dataclass
class EquationSpec:
    """One equation: a target, its linear terms and a noise description.

    ``kind`` is one of ``latent``, ``utility``, ``measurement`` or
    ``continuous``; ``noise`` is ``"std_normal"``, ``"gumbel"`` or the
    name of a free normal scale parameter.
    """

    kind: str
    target: str
    terms: list[Term] = field(default_factory=list)
    noise: str | None = None

    def parameters(self) -> list[str]:
        out = [t.parameter for t in self.terms]
        if self.noise not in (None, "std_normal", "gumbel"):
            out.append(self.noise)
        return out


@dataclass
class ModelSpec:
    """Parsed model: latents, the five utilities, measurements, continuous
    magnitude equations and the draw settings."""

    name: str = "model"
    latents: list[EquationSpec] = field(default_factory=list)
    utilities: dict[str, EquationSpec] = field(default_factory=dict)
    measurements: list[EquationSpec] = field(default_factory=list)
    continuous: dict[str, EquationSpec] = field(default_factory=dict)
    draws_count: int = 500
    draws_scheme: str = "halton"
    draws_seed: int = 1

    # -- views ---------------------------------------------------------

    def latent_names(self) -> list[str]:
        return [eq.target for eq in self.latents]

    def equations(self) -> list[EquationSpec]:
        out = list(self.latents)
        out += [self.utilities[a] for a in ACTIONS if a in self.utilities]
        out += list(self.measurements)
        out += [self.continuous[a] for a in CONTINUOUS_ACTIONS if a in self.continuous]
        return out

    def parameter_names(self) -> list[str]:
        names = []
        for eq in self.equations():
            names.extend(eq.parameters())
        return names

    def covariate_names(self) -> set[str]:
        """All covariate names referenced anywhere (excluding latents/const)."""
        latents = set(self.latent_names())
        out = set()
        for eq in self.equations():
            for t in eq.terms:
                if t.ref != CONST and t.ref not in latents:
                    out.add(t.ref)
        return out

    def build_parameters(self) -> ParameterVector:
        """Fresh parameter vector: coefficients start at 0 (free), noise
        scales at 1 with a positive lower bound."""
        pv = ParameterVector()
        scale_names = {
            eq.noise
            for eq in self.equations()
            if eq.noise not in (None, "std_normal", "gumbel")
        }
        for name in self.parameter_names():
            if name in scale_names:
                pv.add(name, value=1.0, lower=SIGMA_FLOOR)
            else:
                pv.add(name, value=0.0)
        return pv


def free_dimension(spec: ModelSpec, pv: ParameterVector | None = None) -> int:
    """Number of free (non-fixed) parameters of ``spec`` under ``pv``.

    With no ``pv`` the count is taken over a fresh parameter vector, i.e.
    the total number of named parameters.
    """
    if pv is None:
        pv = spec.build_parameters()
    spec_names = set(spec.parameter_names())
    return sum(1 for p in pv.entries if p.name in spec_names and not p.fixed)


# ---------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------

_SECTION_RE = re.compile(r"^\[([a-z]+)(?:\s+([A-Za-z0-9_]+))?\]$")
_TERM_RE = re.compile(r"^([A-Za-z0-9_]+)\s*->\s*([A-Za-z0-9_]+)$")
_KV_RE = re.compile(r"^([A-Za-z_]+)\s*=\s*(.+)$")


def parse_spec(text: str, schema=None) -> ModelSpec:
    """Parse specification ``text`` into a :class:`ModelSpec`.

    ``schema``, when given, is a collection of known covariate names;
    any term referencing a name outside it (and which is not a latent or
    ``const``) raises :class:`SpecError`.
    """
    spec = ModelSpec()
    section = None  # (kind, target, EquationSpec|None)
    seen_params: set[str] = set()
    seen_sections: set[tuple[str, str]] = set()

    def open_equation(kind, target, lineno):
        key = (kind, target)
        if key in seen_sections:
            raise SpecError(f"line {lineno}: duplicate section [{kind} {target}]")
        seen_sections.add(key)
        eq = EquationSpec(kind=kind, target=target)
        if kind == "latent":
            eq.noise = "std_normal"
            spec.latents.append(eq)
        elif kind == "utility":
            if target not in ACTIONS:
                raise SpecError(f"line {lineno}: unknown action {target!r}")
            eq.noise = "gumbel"
            spec.utilities[target] = eq
        elif kind == "measurement":
            spec.measurements.append(eq)
        elif kind == "continuous":
            if target not in CONTINUOUS_ACTIONS:
                raise SpecError(
                    f"line {lineno}: continuous magnitude not defined for "
                    f"{target!r} (only {', '.join(CONTINUOUS_ACTIONS)})"
                )
            spec.continuous[target] = eq
        return eq

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            kind, target = m.group(1), m.group(2)
            if kind in ("model", "draws"):
                if target is not None:
                    raise SpecError(f"line {lineno}: [{kind}] takes no argument")
                section = (kind, None, None)
            elif kind in ("latent", "utility", "measurement", "continuous"):
                if target is None:
                    raise SpecError(f"line {lineno}: [{kind}] needs a target name")
                section = (kind, target, open_equation(kind, target, lineno))
            else:
                raise SpecError(f"line {lineno}: unknown section [{kind}]")
            continue
        if section is None:
            raise SpecError(f"line {lineno}: content before any section")
        kind, target, eq = section

        m = _TERM_RE.match(line)
        if m and kind not in ("model", "draws"):
            ref, pname = m.group(1), m.group(2)
            if pname in seen_params:
                raise SpecError(f"line {lineno}: duplicate parameter {pname!r}")
            seen_params.add(pname)
            eq.terms.append(Term(ref, pname))
            continue

        m = _KV_RE.match(line)
        if not m:
            raise SpecError(f"line {lineno}: cannot parse {raw.strip()!r}")
        key, value = m.group(1), m.group(2).strip()
        if kind == "model":
            if key == "name":
                spec.name = value
            else:
                raise SpecError(f"line {lineno}: unknown [model] key {key!r}")
        elif kind == "draws":
            if key == "count":
                spec.draws_count = int(value)
            elif key == "seed":
                spec.draws_seed = int(value)
            elif key == "scheme":
                if value not in ("halton", "pseudo"):
                    raise SpecError(f"line {lineno}: unknown draw scheme {value!r}")
                spec.draws_scheme = value
            else:
                raise SpecError(f"line {lineno}: unknown [draws] key {key!r}")
        elif key == "noise":
            if kind not in ("measurement", "continuous"):
                raise SpecError(
                    f"line {lineno}: noise scale not allowed in [{kind}] "
                    "(latent noise is standard normal, utility noise Gumbel)"
                )
            if eq.noise is not None:
                raise SpecError(f"line {lineno}: duplicate noise line")
            if value in seen_params:
                raise SpecError(f"line {lineno}: duplicate parameter {value!r}")
            seen_params.add(value)
            eq.noise = value
        else:
            raise SpecError(f"line {lineno}: unknown key {key!r} in [{kind}]")

    _validate(spec, schema)
    return spec


def _validate(spec: ModelSpec, schema) -> None:
    latents = spec.latent_names()
    if len(set(latents)) != len(latents):
        raise SpecError("duplicate latent target")
    latent_set = set(latents)

    if set(spec.utilities) != set(ACTIONS):
        missing = [a for a in ACTIONS if a not in spec.utilities]
        raise SpecError(
            f"utility count != 5: missing utility section(s) for "
            f"{', '.join(missing) if missing else 'unknown actions'}"
        )
    if spec.utilities["maintain"].terms:
        raise SpecError(
            "the maintain utility is the reference and must have no terms"
        )
    for t in spec.utilities["wait"].terms:
        if t.ref in SPEED_FAMILY:
            raise SpecError(
                f"speed covariate {t.ref!r} is not allowed in the wait utility"
            )

    for eq in spec.latents:
        for t in eq.terms:
            if t.ref in latent_set:
                raise SpecError(
                    f"latent {eq.target!r} may not reference latent {t.ref!r}"
                )

    seen_meas = set()
    for eq in spec.measurements:
        if eq.target in seen_meas:
            raise SpecError(f"duplicate measurement target {eq.target!r}")
        seen_meas.add(eq.target)
        if eq.noise is None:
            raise SpecError(f"measurement {eq.target!r} has no noise line")
        if not eq.terms:
            raise SpecError(f"measurement {eq.target!r} has no loadings")
        for t in eq.terms:
            if t.ref not in latent_set:
                raise SpecError(
                    f"measurement {eq.target!r} references {t.ref!r}, "
                    "which is not a declared latent"
                )

    for action, eq in spec.continuous.items():
        if eq.noise is None:
            raise SpecError(f"continuous {action!r} has no noise line")
        if not eq.terms:
            raise SpecError(f"continuous {action!r} has no mean terms")
        for t in eq.terms:
            if t.ref in latent_set:
                raise SpecError(
                    f"continuous {action!r} may not reference latent {t.ref!r}"
                )

    if spec.draws_count < 1:
        raise SpecError("draw count must be >= 1")

    if schema is not None:
        known = set(schema) | latent_set | {CONST}
        for eq in spec.equations():
            if eq.kind == "measurement":
                continue
            for t in eq.terms:
                if t.ref not in known:
                    raise SpecError(
                        f"unknown covariate {t.ref!r} in [{eq.kind} {eq.target}]"
                    )


# ---------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------

def serialize_spec(spec: ModelSpec) -> str:
    """Render ``spec`` back to canonical text (parse round-trips)."""
    out = [f"[model]", f"name = {spec.name}", ""]
    for eq in spec.latents:
        out.append(f"[latent {eq.target}]")
        out += [f"{t.ref} -> {t.parameter}" for t in eq.terms]
        out.append("")
    for action in ACTIONS:
        eq = spec.utilities[action]
        out.append(f"[utility {action}]")
        out += [f"{t.ref} -> {t.parameter}" for t in eq.terms]
        out.append("")
    for eq in spec.measurements:
        out.append(f"[measurement {eq.target}]")
        out += [f"{t.ref} -> {t.parameter}" for t in eq.terms]
        out.append(f"noise = {eq.noise}")
        out.append("")
    for action in CONTINUOUS_ACTIONS:
        if action not in spec.continuous:
            continue
        eq = spec.continuous[action]
        out.append(f"[continuous {action}]")
        out += [f"{t.ref} -> {t.parameter}" for t in eq.terms]
        out.append(f"noise = {eq.noise}")
        out.append("")
    out += [
        "[draws]",
        f"count = {spec.draws_count}",
        f"scheme = {spec.draws_scheme}",
        f"seed = {spec.draws_seed}",
        "",
    ]
    return "\n".join(out)


def load_bundled_spec(name: str, schema=None) -> ModelSpec:
    """Load one of the shipped variants (see :data:`BUNDLED_SPECS`)."""
    if name not in BUNDLED_SPECS:
        raise SpecError(
            f"unknown bundled spec {name!r}; available: {', '.join(BUNDLED_SPECS)}"
        )
    text = (
        resources.files("cycliclv.specs").joinpath(f"{name}.spec").read_text()
    )
    return parse_spec(text, schema=schema)


def load_spec_file(path, schema=None) -> ModelSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(fh.read(), schema=schema)
