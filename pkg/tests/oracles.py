"""Independent reference computations for the test suite.

Everything here is deliberately naive: plain Python loops, textbook
formulas, scipy densities.  Only the parsed model structure is shared
with the package; none of the vectorized evaluation code is reused, so
agreement between the two is evidence, not tautology.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import stats

CONST = "const"
ACTIONS = ("accelerate", "brake", "decelerate", "wait", "maintain")


def _val(values, name):
    get = getattr(values, "get", None)
    if get is not None:
        return float(get(name))
    return float(values[name])


def _row_value(row, ref):
    return 1.0 if ref == CONST else float(row[ref])


def naive_utilities(row, spec, values, latents):
    v = []
    for action in ACTIONS:
        eq = spec.utilities[action]
        total = 0.0
        for t in eq.terms:
            if t.ref in latents:
                x = latents[t.ref]
            else:
                x = _row_value(row, t.ref)
            total += x * _val(values, t.parameter)
        v.append(total)
    return v


def naive_choice_prob(v, chosen):
    m = max(v)
    e = [math.exp(u - m) for u in v]
    return e[chosen] / sum(e)


def integrand(row, spec, values, eps):
    """Choice probability times measurement and magnitude densities at
    one realization ``eps`` of the latent disturbances."""
    latents = {}
    for eq, e in zip(spec.latents, eps):
        mean = sum(_row_value(row, t.ref) * _val(values, t.parameter)
                   for t in eq.terms)
        latents[eq.target] = mean + float(e)

    chosen = int(row["action"]) - 1
    f = naive_choice_prob(naive_utilities(row, spec, values, latents), chosen)

    for eq in spec.measurements:
        try:
            x = float(row[eq.target])
        except (KeyError, IndexError):
            continue
        if math.isnan(x):
            continue
        mean = sum(latents[t.ref] * _val(values, t.parameter) for t in eq.terms)
        f *= stats.norm.pdf(x, loc=mean, scale=_val(values, eq.noise))

    eq = spec.continuous.get(ACTIONS[chosen])
    if eq is not None:
        try:
            y = float(row["action_magnitude"])
        except (KeyError, IndexError):
            y = math.nan
        if not math.isnan(y):
            mean = sum(_row_value(row, t.ref) * _val(values, t.parameter)
                       for t in eq.terms)
            f *= stats.norm.pdf(y, loc=mean, scale=_val(values, eq.noise))
    return f


def naive_sim_loglik(ds, spec, values, tensor):
    """Straight-line simulated log likelihood: per observation, average
    the integrand over that observation's draw block and take the log."""
    n_lat = len(spec.latents)
    per_obs = []
    for i, (_, row) in enumerate(ds.frame.iterrows()):
        R = tensor.shape[1] if n_lat else 1
        acc = 0.0
        for r in range(R):
            eps = tensor[i, r] if n_lat else []
            acc += integrand(row, spec, values, eps)
        per_obs.append(math.log(acc / R))
    return float(np.sum(per_obs)), np.array(per_obs)


def gauss_hermite_likelihood(row, spec, values, n_nodes=64):
    """Exact-by-quadrature observation likelihood.

    Tensor Gauss-Hermite over the latent disturbances:
    integral of f(eps) phi(eps) d eps ~= pi^(-d/2) sum_j w_j f(sqrt(2) x_j).
    """
    n_lat = len(spec.latents)
    if n_lat == 0:
        return integrand(row, spec, values, [])
    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    total = 0.0
    for combo in itertools.product(range(n_nodes), repeat=n_lat):
        eps = [math.sqrt(2.0) * nodes[j] for j in combo]
        w = math.prod(weights[j] for j in combo)
        total += w * integrand(row, spec, values, eps)
    return total / math.pi ** (n_lat / 2.0)


def gauss_hermite_loglik(ds, spec, values, n_nodes=64):
    per_obs = np.array([
        math.log(gauss_hermite_likelihood(row, spec, values, n_nodes))
        for _, row in ds.frame.iterrows()
    ])
    return float(per_obs.sum()), per_obs


def fd_gradient(fun, x, step=1e-5):
    """Central finite differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        h = step * max(1.0, abs(x[j]))
        xp = x.copy(); xp[j] += h
        xm = x.copy(); xm[j] -= h
        g[j] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def multinomial_intercept_loglik(counts):
    """Log likelihood of the saturated intercept-only logit."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    return float(sum(c * math.log(c / n) for c in counts if c > 0))
