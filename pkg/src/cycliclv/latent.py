"""Latent structural equations and indicator measurement densities.

Row-level reference implementations.  The estimator runs a vectorized
equivalent (see :mod:`cycliclv.likelihood`); these functions define the
semantics and serve everything that works one observation at a time.

A latent is a linear index of covariates plus a standard normal
disturbance whose realization is supplied by the caller (a simulation
draw).  Indicators are normal around a linear combination of the
latents; the identification convention keeps the latent disturbance
scale at one and lets the loadings and indicator scales move.
"""
from __future__ import annotations

import math

from .modelspec import CONST, ModelSpec

_LOG_2PI = math.log(2.0 * math.pi)


class EvaluationError(ValueError):
    pass


def _term_value(row, ref):
    if ref == CONST:
        return 1.0
    try:
        v = row[ref]
    except (KeyError, IndexError):
        raise EvaluationError(f"row lacks covariate {ref!r}") from None
    v = float(v)
    if math.isnan(v):
        raise EvaluationError(f"missing value for covariate {ref!r}")
    return v


def linear_index(row, terms, values):
    """Sum of covariate * parameter over ``terms``.

    ``values`` maps parameter name to value (a ParameterVector works).
    """
    total = 0.0
    for t in terms:
        total += _term_value(row, t.ref) * _get(values, t.parameter)
    return total


def _get(values, name):
    get = getattr(values, "get", None)
    if get is not None:
        return float(get(name))
    return float(values[name])


def eval_structural(row, spec: ModelSpec, pv, draw=None) -> dict:
    """Realized latent values for one observation.

    ``draw`` is a sequence with one standard normal per latent, in the
    order the latents are declared; ``None`` means all-zero (the
    structural mean).  Returns ``{latent_name: value}``.
    """
    n = len(spec.latents)
    if draw is None:
        draw = [0.0] * n
    if len(draw) != n:
        raise EvaluationError(
            f"draw has {len(draw)} dims, spec declares {n} latent(s)"
        )
    out = {}
    for eq, e in zip(spec.latents, draw):
        out[eq.target] = linear_index(row, eq.terms, pv) + float(e)
    return out


def normal_logpdf(x, mean, sigma):
    if sigma <= 0.0:
        raise EvaluationError(f"noise scale must be positive, got {sigma!r}")
    z = (x - mean) / sigma
    return -0.5 * z * z - math.log(sigma) - 0.5 * _LOG_2PI


def measurement_logdensity(indicators, latents, spec: ModelSpec, pv) -> float:
    """Joint log density of the observed indicators given the latents.

    ``indicators`` maps indicator name to observed value; entries that
    are absent or NaN are dropped from the product (their individual
    density integrates out to one).  ``latents`` maps latent name to
    realized value.
    """
    total = 0.0
    for eq in spec.measurements:
        try:
            x = indicators[eq.target]
        except (KeyError, IndexError):
            continue
        x = float(x)
        if math.isnan(x):
            continue
        mean = 0.0
        for t in eq.terms:
            try:
                lat = latents[t.ref]
            except KeyError:
                raise EvaluationError(f"no value for latent {t.ref!r}") from None
            mean += float(lat) * _get(pv, t.parameter)
        total += normal_logpdf(x, mean, _get(pv, eq.noise))
    return total
