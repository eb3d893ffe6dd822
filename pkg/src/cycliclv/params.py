"""Named, ordered parameter vectors.

Every estimable quantity in a model (utility coefficients, structural
coefficients, measurement loadings, noise scales) is registered here by
name.  A :class:`ParameterVector` keeps a stable ordering, per-entry
bounds and a fixed/free flag, and converts between the full named vector
and the packed free-parameter array the optimizer works on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


class ParameterError(ValueError):
    """Raised for unknown names, duplicate registrations or bad values."""


@dataclass(frozen=True)
class Parameter:
    name: str
    value: float = 0.0
    fixed: bool = False
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not self.name:
            raise ParameterError("parameter name must be non-empty")
        if not (self.lower <= self.value <= self.upper):
            raise ParameterError(
                f"value {self.value!r} of {self.name!r} outside bounds "
                f"[{self.lower}, {self.upper}]"
            )


@dataclass
class ParameterVector:
    """Ordered collection of named parameters.

    Parameters keep their registration order; the packed free vector used
    by the optimizer is the subsequence of non-fixed entries in that same
    order.
    """

    entries: list[Parameter] = field(default_factory=list)

    def __post_init__(self):
        self._index = {}
        for i, p in enumerate(self.entries):
            if p.name in self._index:
                raise ParameterError(f"duplicate parameter {p.name!r}")
            self._index[p.name] = i

    # -- construction -------------------------------------------------

    def add(self, name, value=0.0, fixed=False, lower=-math.inf, upper=math.inf):
        if name in self._index:
            raise ParameterError(f"duplicate parameter {name!r}")
        self._index[name] = len(self.entries)
        self.entries.append(Parameter(name, value, fixed, lower, upper))

    # -- lookup -------------------------------------------------------

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.entries]

    def __len__(self):
        return len(self.entries)

    def __contains__(self, name):
        return name in self._index

    def __getitem__(self, name) -> Parameter:
        try:
            return self.entries[self._index[name]]
        except KeyError:
            raise ParameterError(f"unknown parameter {name!r}") from None

    def index(self, name) -> int:
        """Position of ``name`` in the full vector."""
        try:
            return self._index[name]
        except KeyError:
            raise ParameterError(f"unknown parameter {name!r}") from None

    def get(self, name) -> float:
        return self[name].value

    # -- mutation-by-copy ---------------------------------------------

    def set(self, name, value) -> "ParameterVector":
        """Return a copy with ``name`` set to ``value``."""
        i = self.index(name)
        out = ParameterVector(list(self.entries))
        out.entries[i] = replace(out.entries[i], value=float(value))
        return out

    def fix(self, name, value=None) -> "ParameterVector":
        """Return a copy with ``name`` fixed (optionally at ``value``)."""
        i = self.index(name)
        out = ParameterVector(list(self.entries))
        p = out.entries[i]
        out.entries[i] = replace(
            p, fixed=True, value=p.value if value is None else float(value)
        )
        return out

    def update(self, mapping) -> "ParameterVector":
        """Return a copy with every ``name -> value`` in ``mapping`` applied."""
        out = self
        for name, value in mapping.items():
            out = out.set(name, value)
        return out

    # -- packed views -------------------------------------------------

    def values(self) -> np.ndarray:
        """Full value array, one entry per registered parameter."""
        return np.array([p.value for p in self.entries], dtype=float)

    @property
    def free_names(self) -> list[str]:
        return [p.name for p in self.entries if not p.fixed]

    def free_indices(self) -> np.ndarray:
        return np.array([i for i, p in enumerate(self.entries) if not p.fixed], dtype=int)

    def free_values(self) -> np.ndarray:
        return np.array([p.value for p in self.entries if not p.fixed], dtype=float)

    def free_bounds(self) -> list[tuple[float, float]]:
        return [(p.lower, p.upper) for p in self.entries if not p.fixed]

    def free_dimension(self) -> int:
        return sum(1 for p in self.entries if not p.fixed)

    def full_from_free(self, x) -> np.ndarray:
        """Expand a packed free array to the full value array."""
        x = np.asarray(x, dtype=float)
        idx = self.free_indices()
        if x.shape != (idx.size,):
            raise ParameterError(
                f"free vector has shape {x.shape}, expected ({idx.size},)"
            )
        full = self.values()
        full[idx] = x
        return full

    def with_free(self, x) -> "ParameterVector":
        """Return a copy whose free entries take the packed values ``x``."""
        full = self.full_from_free(x)
        out = ParameterVector(
            [replace(p, value=float(v)) for p, v in zip(self.entries, full)]
        )
        return out

    # -- serialization ------------------------------------------------

    def to_text(self) -> str:
        """Render as ``name = value`` lines (full precision, stable order)."""
        lines = []
        for p in self.entries:
            flag = "  fixed" if p.fixed else ""
            lines.append(f"{p.name} = {p.value!r}{flag}")
        return "\n".join(lines) + "\n"

    def apply_text(self, text) -> "ParameterVector":
        """Return a copy updated from ``name = value`` lines."""
        out = self
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"bad parameter line {raw!r}")
            name, rest = line.split("=", 1)
            parts = rest.split()
            if not parts:
                raise ParameterError(f"bad parameter line {raw!r}")
            out = out.set(name.strip(), float(parts[0]))
            if len(parts) > 1 and parts[1] == "fixed":
                out = out.fix(name.strip())
        return out
