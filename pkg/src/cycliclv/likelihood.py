"""Simulated log likelihood of a panel under a model specification.

The per-observation likelihood is a Monte Carlo average over R draws of
the latent disturbances.  For draw r the integrand is the product of

* the logit probability of the chosen action given the realized latents,
* the normal densities of whatever indicators are observed, and
* the normal density of the continuous magnitude when the chosen action
  carries one,

and the observation's simulated likelihood is the mean over draws.  All
reductions run in log space (max subtraction), so extreme utilities and
tiny densities stay finite.  With no latents the integrand does not
depend on the draws and the average collapses to a single evaluation.

Evaluation is organized per individual: each individual's block of rows
is computed with vectorized array ops, and the per-individual results
are reduced in a fixed order.  Parallel execution distributes the same
per-individual computations over threads and reduces in the same order,
so it is bit-for-bit identical to the serial path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .draws import SimulationDraws, draws_for_spec
from .kernel import log_choice_prob, eval_utilities, continuous_logdensity
from .latent import eval_structural, measurement_logdensity
from .modelspec import ACTIONS, CONST, ModelSpec
from .panel import PanelDataset, require_covariates

_LOG_2PI = math.log(2.0 * math.pi)


class LikelihoodError(ValueError):
    pass


@dataclass
class LikelihoodReport:
    """Value and byproducts of one (log) likelihood evaluation."""

    total: float
    per_obs: np.ndarray
    per_individual: np.ndarray
    individuals: list
    n_obs: int
    gradient: np.ndarray | None = None
    scores: np.ndarray | None = None  # per-individual gradients (n_ind, n_free)


def prepare_dataset(ds: PanelDataset, spec: ModelSpec) -> PanelDataset:
    """Reject rows unusable under ``spec``.

    Any row missing the action or a covariate referenced by some
    equation is dropped (the count lands in the dataset report).
    Indicators and magnitudes may stay missing; their factors are simply
    skipped.
    """
    needed = sorted(spec.covariate_names())
    if "action" not in ds.frame.columns:
        raise LikelihoodError("dataset has no action column")
    return require_covariates(ds, ["action"] + needed)


# ---------------------------------------------------------------------
# compiled design
# ---------------------------------------------------------------------

def _design(frame, terms, latent_names):
    """Split an equation into a covariate matrix and latent loadings."""
    cols, pnames = [], []
    loads = []  # (latent position, parameter name)
    for t in terms:
        if t.ref in latent_names:
            loads.append((latent_names.index(t.ref), t.parameter))
            continue
        if t.ref == CONST:
            cols.append(np.ones(len(frame)))
        else:
            cols.append(frame[t.ref].to_numpy(dtype=float))
        pnames.append(t.parameter)
    X = np.column_stack(cols) if cols else np.zeros((len(frame), 0))
    return X, pnames, loads


class CompiledModel:
    """Model bound to one dataset: design matrices and parameter indexing.

    Build once, then evaluate :meth:`loglik` at many parameter values
    with the same draws.
    """

    def __init__(self, ds: PanelDataset, spec: ModelSpec, pv):
        frame = ds.frame
        self.spec = spec
        self.pv = pv
        self.n_obs = len(frame)
        self.latent_names = spec.latent_names()
        self.n_lat = len(self.latent_names)
        pidx = pv.index

        missing = [c for c in sorted(spec.covariate_names())
                   if c not in frame.columns]
        if missing:
            raise LikelihoodError(f"dataset lacks covariate(s) {missing}")
        for c in sorted(spec.covariate_names()):
            bad = frame[c].isna()
            if bad.any():
                row = frame[bad].iloc[0]
                raise LikelihoodError(
                    f"missing value of {c!r} at individual "
                    f"{row['individual_id']!r}, t={row['t']!r}; "
                    "run prepare_dataset first"
                )
        if "action" not in frame.columns or frame["action"].isna().any():
            raise LikelihoodError("every row needs an action")
        self.chosen = frame["action"].to_numpy(dtype=int) - 1

        # latent structural equations
        self.lat_X, self.lat_pidx = [], []
        for eq in spec.latents:
            X, pnames, loads = _design(frame, eq.terms, [])
            self.lat_X.append(X)
            self.lat_pidx.append(np.array([pidx(p) for p in pnames], dtype=int))

        # utilities
        self.util_X, self.util_pidx, self.util_loads = [], [], []
        for action in ACTIONS:
            X, pnames, loads = _design(frame, eq_terms := spec.utilities[action].terms,
                                       self.latent_names)
            self.util_X.append(X)
            self.util_pidx.append(np.array([pidx(p) for p in pnames], dtype=int))
            self.util_loads.append([(d, pidx(p)) for d, p in loads])

        # measurement equations
        self.meas = []
        for eq in spec.measurements:
            if eq.target not in frame.columns:
                obs = np.zeros(self.n_obs)
                mask = np.zeros(self.n_obs, dtype=bool)
            else:
                obs = frame[eq.target].to_numpy(dtype=float)
                mask = np.isfinite(obs)
                obs = np.where(mask, obs, 0.0)
            loads = [(self.latent_names.index(t.ref), pidx(t.parameter))
                     for t in eq.terms]
            self.meas.append((eq.target, obs, mask, loads, pidx(eq.noise)))

        # continuous magnitudes
        self.cont = []
        if "action_magnitude" in frame.columns:
            y_all = frame["action_magnitude"].to_numpy(dtype=float)
        else:
            y_all = np.full(self.n_obs, np.nan)
        for action, eq in spec.continuous.items():
            a = ACTIONS.index(action)
            mask = (self.chosen == a) & np.isfinite(y_all)
            X, pnames, _ = _design(frame, eq.terms, [])
            self.cont.append(
                (a, np.where(mask, y_all, 0.0), mask, X,
                 np.array([pidx(p) for p in pnames], dtype=int), pidx(eq.noise))
            )

        self.ind_slices = ds.individual_slices()
        self.individuals = [ind for ind, _ in self.ind_slices]
        self.free_idx = pv.free_indices()

    # -- single-individual evaluation ---------------------------------

    def _eval_slice(self, theta, sl, draw_block, want_grad):
        """Log likelihood (and full-parameter gradient) of one
        individual's rows.  ``draw_block`` is (T, R, n_lat)."""
        T = sl.stop - sl.start
        R = draw_block.shape[1] if self.n_lat else 1
        chosen = self.chosen[sl]

        lat_vals = []
        for d in range(self.n_lat):
            mean = self.lat_X[d][sl] @ theta[self.lat_pidx[d]]
            lat_vals.append(mean[:, None] + draw_block[:, :, d])

        V = np.zeros((T, R, len(ACTIONS)))
        for i in range(len(ACTIONS)):
            base = self.util_X[i][sl] @ theta[self.util_pidx[i]]
            Vi = np.broadcast_to(base[:, None], (T, R)).copy()
            for d, p in self.util_loads[i]:
                Vi += theta[p] * lat_vals[d]
            V[:, :, i] = Vi

        vmax = V.max(axis=2)
        expV = np.exp(V - vmax[:, :, None])
        sumexp = expV.sum(axis=2)
        logp = (np.take_along_axis(V, chosen[:, None, None], axis=2)[:, :, 0]
                - vmax - np.log(sumexp))

        s = logp
        resids = []
        for name, obs, mask, loads, sidx in self.meas:
            sd = theta[sidx]
            if sd <= 0.0:
                raise LikelihoodError(f"noise scale for {name!r} is not positive")
            mean = np.zeros((T, R))
            for d, p in loads:
                mean += theta[p] * lat_vals[d]
            diff = obs[sl][:, None] - mean
            ld = -0.5 * (diff / sd) ** 2 - math.log(sd) - 0.5 * _LOG_2PI
            m = mask[sl][:, None]
            s = s + np.where(m, ld, 0.0)
            if want_grad:
                resids.append(np.where(m, diff / (sd * sd), 0.0))

        cont_ld = np.zeros(T)
        for a, y, mask, X, pidxs, sidx in self.cont:
            sd = theta[sidx]
            if sd <= 0.0:
                raise LikelihoodError(
                    f"magnitude noise scale for {ACTIONS[a]!r} is not positive"
                )
            m = mask[sl]
            if not m.any():
                continue
            mean = X[sl] @ theta[pidxs]
            diff = y[sl] - mean
            ld = -0.5 * (diff / sd) ** 2 - math.log(sd) - 0.5 * _LOG_2PI
            cont_ld += np.where(m, ld, 0.0)
        s = s + cont_ld[:, None]

        smax = s.max(axis=1)
        wu = np.exp(s - smax[:, None])
        sumw = wu.sum(axis=1)
        ll_obs = smax + np.log(sumw) - math.log(R)

        if not want_grad:
            return ll_obs, None

        g = np.zeros(theta.shape[0])
        W = wu / sumw[:, None]
        P = expV / sumexp[:, :, None]
        onehot = np.zeros((T, len(ACTIONS)))
        onehot[np.arange(T), chosen] = 1.0

        # residual choice signal per action, draw-weighted
        E = onehot[:, None, :] - P            # (T, R, 5)
        WE = W[:, :, None] * E

        D = [np.zeros((T, R)) for _ in range(self.n_lat)]
        for i in range(len(ACTIONS)):
            if self.util_pidx[i].size:
                np.add.at(g, self.util_pidx[i],
                          self.util_X[i][sl].T @ WE[:, :, i].sum(axis=1))
            for d, p in self.util_loads[i]:
                g[p] += float((WE[:, :, i] * lat_vals[d]).sum())
                D[d] += theta[p] * E[:, :, i]

        for (name, obs, mask, loads, sidx), resid in zip(self.meas, resids):
            sd = theta[sidx]
            for d, p in loads:
                g[p] += float((W * resid * lat_vals[d]).sum())
                D[d] += theta[p] * resid
            m = mask[sl][:, None]
            dsig = np.where(m, resid * resid * sd - 1.0 / sd, 0.0)
            g[sidx] += float((W * dsig).sum())

        for d in range(self.n_lat):
            if self.lat_pidx[d].size:
                np.add.at(g, self.lat_pidx[d],
                          self.lat_X[d][sl].T @ (W * D[d]).sum(axis=1))

        for a, y, mask, X, pidxs, sidx in self.cont:
            m = mask[sl]
            if not m.any():
                continue
            sd = theta[sidx]
            mean = X[sl] @ theta[pidxs]
            resid = np.where(m, (y[sl] - mean) / (sd * sd), 0.0)
            if pidxs.size:
                np.add.at(g, pidxs, X[sl].T @ resid)
            g[sidx] += float(np.sum(np.where(
                m, resid * resid * sd * sd / sd - 1.0 / sd, 0.0)))

        return ll_obs, g

    # -- full evaluation ----------------------------------------------

    def loglik(self, x_free, draws: SimulationDraws | None, want_grad=False,
               want_scores=False, n_jobs=1) -> LikelihoodReport:
        theta = self.pv.full_from_free(x_free)
        if self.n_lat:
            if draws is None:
                raise LikelihoodError("model has latents but no draws given")
            if draws.tensor.shape[0] != self.n_obs or draws.n_dims != self.n_lat:
                raise LikelihoodError(
                    f"draw tensor shaped {draws.tensor.shape} does not fit "
                    f"{self.n_obs} observations x {self.n_lat} latent(s)"
                )
            tensor = draws.tensor
        else:
            tensor = np.zeros((self.n_obs, 1, 0))

        grad_flag = want_grad or want_scores
        tasks = [(sl, tensor[sl]) for _, sl in self.ind_slices]
        if n_jobs == 1:
            parts = [self._eval_slice(theta, sl, block, grad_flag)
                     for sl, block in tasks]
        else:
            parts = Parallel(n_jobs=n_jobs, backend="threading")(
                delayed(self._eval_slice)(theta, sl, block, grad_flag)
                for sl, block in tasks
            )

        per_obs = np.concatenate([p[0] for p in parts])
        if not np.all(np.isfinite(per_obs)):
            i = int(np.argmax(~np.isfinite(per_obs)))
            ind, sl = next(
                (ind, sl) for ind, sl in self.ind_slices
                if sl.start <= i < sl.stop
            )
            raise LikelihoodError(
                f"non-finite likelihood at individual {ind!r}, "
                f"row offset {i - sl.start}"
            )
        per_ind = np.array([p[0].sum() for p in parts])
        total = float(per_ind.sum())

        gradient = scores = None
        if grad_flag:
            score_rows = [p[1][self.free_idx] for p in parts]
            scores_arr = np.vstack(score_rows) if score_rows else np.zeros(
                (0, self.free_idx.size))
            if want_scores:
                scores = scores_arr
            gradient = scores_arr.sum(axis=0)
        return LikelihoodReport(
            total=total,
            per_obs=per_obs,
            per_individual=per_ind,
            individuals=list(self.individuals),
            n_obs=self.n_obs,
            gradient=gradient,
            scores=scores,
        )


# ---------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------

def obs_sim_likelihood(row, pv, spec: ModelSpec, draws) -> float:
    """Simulated likelihood of a single observation (not the log).

    ``row`` maps covariate names to values and carries ``action`` (code
    1..5) plus, when relevant, ``action_magnitude`` and the indicator
    columns.  ``draws`` is an (R, n_latents) block of standard normal
    draws; for a model without latents any R works (the value does not
    depend on the draws).
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[None, :]
    n_lat = len(spec.latents)
    if draws.shape[1:] != (n_lat,):
        raise LikelihoodError(
            f"draw block shaped {draws.shape} does not fit {n_lat} latent(s)"
        )
    chosen = int(row["action"]) - 1
    if not 0 <= chosen < len(ACTIONS):
        raise LikelihoodError(f"action code {row['action']!r} out of range")
    cont = continuous_logdensity(row, ACTIONS[chosen], spec, pv)
    indicators = {}
    for eq in spec.measurements:
        try:
            indicators[eq.target] = row[eq.target]
        except (KeyError, IndexError):
            pass

    R = draws.shape[0] if n_lat else 1
    logs = np.empty(R)
    for r in range(R):
        lat = eval_structural(row, spec, pv, draws[r] if n_lat else [])
        v = eval_utilities(row, spec, pv, lat)
        logs[r] = (log_choice_prob(v, chosen)
                   + measurement_logdensity(indicators, lat, spec, pv)
                   + cont)
    m = logs.max()
    value = float(np.exp(m) * np.exp(logs - m).sum() / R) if np.isfinite(m) else 0.0
    if not (value > 0.0 and math.isfinite(value)):
        raise LikelihoodError("observation likelihood is zero or non-finite")
    return value


def total_loglik(ds: PanelDataset, pv, spec: ModelSpec,
                 draws: SimulationDraws | None = None, n_jobs=1,
                 want_grad=False, want_scores=False) -> LikelihoodReport:
    """Simulated log likelihood of the whole panel.

    Draws default to the spec's own settings.  The report carries the
    per-observation and per-individual decomposition and, on request,
    the analytic gradient over free parameters.
    """
    model = CompiledModel(ds, spec, pv)
    if draws is None and model.n_lat:
        draws = draws_for_spec(ds.n_obs, spec)
    return model.loglik(pv.free_values(), draws, want_grad=want_grad,
                        want_scores=want_scores, n_jobs=n_jobs)


def loglik_gradient(ds: PanelDataset, pv, spec: ModelSpec,
                    draws: SimulationDraws | None = None, n_jobs=1) -> np.ndarray:
    """Analytic gradient of the simulated log likelihood with respect to
    the free parameters, in parameter-vector order."""
    return total_loglik(ds, pv, spec, draws=draws, n_jobs=n_jobs,
                        want_grad=True).gradient
