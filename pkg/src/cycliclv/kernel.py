"""Choice kernel: instant utilities, logit probabilities and the
continuous magnitude density.

Five actions are modeled: accelerate, brake, decelerate, wait and
maintain.  Maintain is the reference with utility identically zero; the
other four carry linear indices over covariates and, in hybrid models,
the realized latents.  Choice probabilities are the standard logit with
a max subtraction so utilities of any magnitude stay finite.
"""
from __future__ import annotations

import math

import numpy as np

from .latent import EvaluationError, linear_index, normal_logpdf, _get, _term_value
from .modelspec import ACTIONS, ModelSpec

N_ACTIONS = len(ACTIONS)


def eval_utilities(row, spec: ModelSpec, pv, latents=None) -> np.ndarray:
    """Deterministic utilities for one observation, ordered as
    (accelerate, brake, decelerate, wait, maintain).

    ``latents`` maps latent name to realized value; required whenever a
    utility references one.  Maintain is always exactly zero.
    """
    latents = latents or {}
    latent_names = set(spec.latent_names())
    v = np.zeros(N_ACTIONS)
    for i, action in enumerate(ACTIONS):
        eq = spec.utilities[action]
        total = 0.0
        for t in eq.terms:
            if t.ref in latent_names:
                try:
                    x = float(latents[t.ref])
                except KeyError:
                    raise EvaluationError(
                        f"utility {action!r} needs latent {t.ref!r}"
                    ) from None
            else:
                x = _term_value(row, t.ref)
            total += x * _get(pv, t.parameter)
        v[i] = total
    return v


def softmax(v):
    """Stable softmax along the last axis (max subtraction)."""
    v = np.asarray(v, dtype=float)
    shifted = v - np.max(v, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def choice_prob(utilities, chosen=None):
    """Logit probabilities from a length-5 utility vector (or batch).

    With ``chosen`` (0-based action index) returns just that action's
    probability.
    """
    p = softmax(utilities)
    if chosen is None:
        return p
    return p[..., chosen]


def log_choice_prob(utilities, chosen):
    """log P(chosen) computed in log space (no underflow at extreme
    utility gaps)."""
    v = np.asarray(utilities, dtype=float)
    m = np.max(v, axis=-1, keepdims=True)
    lse = m[..., 0] + np.log(np.sum(np.exp(v - m), axis=-1))
    return v[..., chosen] - lse


def continuous_logdensity(row, action, spec: ModelSpec, pv) -> float:
    """Log density of the observed magnitude of a speed-changing action.

    The magnitude is normal around a linear index of the row covariates
    (the reference model uses current speed alone).  Returns 0.0 when
    the spec has no continuous equation for ``action`` or the magnitude
    is missing, so callers can add it unconditionally.
    """
    eq = spec.continuous.get(action)
    if eq is None:
        return 0.0
    try:
        y = float(row["action_magnitude"])
    except (KeyError, IndexError):
        return 0.0
    if math.isnan(y):
        return 0.0
    mean = linear_index(row, eq.terms, pv)
    return normal_logpdf(y, mean, _get(pv, eq.noise))
