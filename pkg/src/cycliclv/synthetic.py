"""Synthetic panels drawn from a model's own data generating process.

Covariates are sampled per the generator config (constant, uniform or
categorical; at the observation or individual level), derived level
flags and interactions are recomputed with the panel module, latents and
indicators are drawn from the structural and measurement equations,
actions from utility maxima with Gumbel noise and magnitudes from the
continuous equations.  Estimating the generating spec on such a panel
should recover the generating parameters; ``recovery_experiment`` runs
that loop.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .estimator import EstimationConfig, EstimationError, estimate
from .modelspec import ACTIONS, CONST, ModelSpec
from .panel import DeriveConfig, PanelDataset, derive_levels, exclude_forced_stops, make_panel
from .params import ParameterVector


class GeneratorError(ValueError):
    pass


@dataclass
class CovariateSpec:
    """How to sample one covariate.

    ``kind`` is ``constant`` (needs ``value``), ``uniform`` (``low``,
    ``high``) or ``choice`` (``values`` with matching ``shares``).
    ``level`` is ``obs`` (fresh draw each window) or ``individual``
    (drawn once per individual; demographics belong here).
    """

    kind: str
    value: float = 0.0
    low: float = 0.0
    high: float = 1.0
    values: tuple = (0.0, 1.0)
    shares: tuple = (0.5, 0.5)
    level: str = "obs"

    def sample(self, rng, n):
        if self.kind == "constant":
            return np.full(n, float(self.value))
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=n)
        if self.kind == "choice":
            vals = np.asarray(self.values, dtype=float)
            p = np.asarray(self.shares, dtype=float)
            if p.shape != vals.shape or not np.isclose(p.sum(), 1.0):
                raise GeneratorError(
                    f"shares {self.shares!r} do not match values {self.values!r}"
                )
            return rng.choice(vals, size=n, p=p)
        raise GeneratorError(f"unknown covariate kind {self.kind!r}")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class GeneratorConfig:
    n_individuals: int = 20
    t_per_individual: int = 50
    seed: int = 0
    covariates: dict[str, CovariateSpec] = field(default_factory=dict)
    derive: DeriveConfig | None = None
    #: sample a red_light flag with this probability and feed forced
    #: waits through the exclusion step (0 disables)
    red_light_prob: float = 0.0

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        covs = {
            name: CovariateSpec.from_dict(c) if isinstance(c, dict) else c
            for name, c in d.pop("covariates", {}).items()
        }
        derive = d.pop("derive", None)
        if isinstance(derive, dict):
            derive = DeriveConfig(**derive)
        return cls(covariates=covs, derive=derive, **d)


def _gumbel(rng, size):
    # standard Gumbel via inverse CDF
    u = rng.uniform(size=size)
    return -np.log(-np.log(u))


def simulate_dataset(spec: ModelSpec, pv: ParameterVector,
                     cfg: GeneratorConfig) -> PanelDataset:
    """Draw a panel from the model defined by ``spec`` and ``pv``."""
    needed = spec.covariate_names()
    rng_root = np.random.SeedSequence(cfg.seed)
    streams = [np.random.default_rng(s)
               for s in rng_root.spawn(cfg.n_individuals)]

    frames = []
    for ind in range(cfg.n_individuals):
        rng = streams[ind]
        T = cfg.t_per_individual
        data = {"individual_id": [f"S{ind:03d}"] * T, "t": np.arange(T)}
        for name, cspec in cfg.covariates.items():
            if cspec.level == "individual":
                data[name] = np.full(T, cspec.sample(rng, 1)[0])
            else:
                data[name] = cspec.sample(rng, T)
        if cfg.red_light_prob > 0.0 and "red_light" not in data:
            data["red_light"] = (
                rng.uniform(size=T) < cfg.red_light_prob
            ).astype(float)
        frames.append(pd.DataFrame(data))

    frame = pd.concat(frames, ignore_index=True)
    ds = make_panel(frame)
    ds = derive_levels(ds, cfg.derive)
    missing = sorted(needed - set(ds.frame.columns))
    if missing:
        raise GeneratorError(
            f"generator config does not produce covariate(s) {missing}"
        )
    frame = ds.frame

    # realized latents per row
    lat_vals = {}
    rng = np.random.default_rng(rng_root.spawn(1)[0])
    for eq in spec.latents:
        mean = np.zeros(len(frame))
        for t in eq.terms:
            x = np.ones(len(frame)) if t.ref == CONST else frame[t.ref].to_numpy(float)
            mean = mean + x * pv.get(t.parameter)
        lat_vals[eq.target] = mean + rng.standard_normal(len(frame))

    # utilities and chosen actions
    V = np.zeros((len(frame), len(ACTIONS)))
    for i, action in enumerate(ACTIONS):
        eq = spec.utilities[action]
        for t in eq.terms:
            if t.ref in lat_vals:
                x = lat_vals[t.ref]
            elif t.ref == CONST:
                x = np.ones(len(frame))
            else:
                x = frame[t.ref].to_numpy(float)
            V[:, i] = V[:, i] + x * pv.get(t.parameter)
    V = V + _gumbel(rng, V.shape)
    chosen = np.argmax(V, axis=1)
    frame["action"] = chosen + 1

    # forced waits at red lights (removed again below)
    if cfg.red_light_prob > 0.0:
        forced = frame["red_light"].to_numpy(float) > 0
        frame.loc[forced, "action"] = ACTIONS.index("wait") + 1
        chosen = frame["action"].to_numpy(int) - 1

    # continuous magnitudes for the chosen speed-changing actions
    if spec.continuous:
        y = np.full(len(frame), np.nan)
        for action, eq in spec.continuous.items():
            a = ACTIONS.index(action)
            rows = chosen == a
            if not rows.any():
                continue
            mean = np.zeros(int(rows.sum()))
            for t in eq.terms:
                x = (np.ones(len(frame)) if t.ref == CONST
                     else frame[t.ref].to_numpy(float))
                mean = mean + x[rows] * pv.get(t.parameter)
            y[rows] = mean + pv.get(eq.noise) * rng.standard_normal(rows.sum())
        frame["action_magnitude"] = y

    # indicators from the measurement equations
    for eq in spec.measurements:
        mean = np.zeros(len(frame))
        for t in eq.terms:
            mean = mean + lat_vals[t.ref] * pv.get(t.parameter)
        frame[eq.target] = mean + pv.get(eq.noise) * rng.standard_normal(len(frame))

    ds = make_panel(frame)
    if cfg.red_light_prob > 0.0:
        ds = exclude_forced_stops(ds)
    return ds


@dataclass
class RecoverySummary:
    names: list[str]
    true_values: np.ndarray
    mean_estimate: np.ndarray
    bias: np.ndarray
    rel_bias: np.ndarray
    rmse: np.ndarray
    coverage: np.ndarray        # share of reps with truth inside the 95% CI
    n_replications: int
    n_failed: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "parameter": self.names,
            "true": self.true_values,
            "mean_estimate": self.mean_estimate,
            "bias": self.bias,
            "rel_bias": self.rel_bias,
            "rmse": self.rmse,
            "coverage95": self.coverage,
        })


def recovery_experiment(spec: ModelSpec, pv_true: ParameterVector,
                        gen_cfg: GeneratorConfig, n_replications=10,
                        est_cfg: EstimationConfig | None = None,
                        progress=None) -> RecoverySummary:
    """Simulate-and-estimate ``n_replications`` times.

    Each replication reseeds the generator (base seed + replication) and
    fits the generating spec from scratch.  Replications whose fit fails
    outright are dropped and counted in ``n_failed``.
    """
    est_cfg = est_cfg or EstimationConfig()
    names = pv_true.free_names
    truth = pv_true.free_values()
    ests, ses = [], []
    n_failed = 0
    for rep in range(n_replications):
        cfg = GeneratorConfig(
            n_individuals=gen_cfg.n_individuals,
            t_per_individual=gen_cfg.t_per_individual,
            seed=gen_cfg.seed + rep,
            covariates=gen_cfg.covariates,
            derive=gen_cfg.derive,
            red_light_prob=gen_cfg.red_light_prob,
        )
        ds = simulate_dataset(spec, pv_true, cfg)
        try:
            res = estimate(ds, spec, config=est_cfg)
        except (EstimationError, np.linalg.LinAlgError):
            n_failed += 1
            continue
        ests.append(res.pv.free_values())
        if res.cov is not None:
            ses.append(res.cov.se_robust)
        if progress is not None:
            progress(rep, res)
    if not ests:
        raise EstimationError("every replication failed")
    E = np.vstack(ests)
    mean_est = E.mean(axis=0)
    bias = mean_est - truth
    denom = np.where(np.abs(truth) > 1e-12, np.abs(truth), np.nan)
    rel_bias = np.abs(bias) / denom
    rmse = np.sqrt(((E - truth) ** 2).mean(axis=0))
    if ses:
        S = np.vstack(ses)
        lo = E[: len(S)] - 1.96 * S
        hi = E[: len(S)] + 1.96 * S
        coverage = ((truth >= lo) & (truth <= hi)).mean(axis=0)
    else:
        coverage = np.full(truth.shape, np.nan)
    return RecoverySummary(
        names=names, true_values=truth, mean_estimate=mean_est, bias=bias,
        rel_bias=rel_bias, rmse=rmse, coverage=coverage,
        n_replications=len(ests), n_failed=n_failed,
    )
