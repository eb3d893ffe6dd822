"""Maximum simulated likelihood estimation.

The objective is the simulated log likelihood from
:mod:`cycliclv.likelihood`, with common random numbers: one draw tensor
is generated up front and reused for every evaluation, so the optimizer
sees a smooth deterministic function.  Optimization is quasi-Newton
(scipy's L-BFGS-B, which honors the positivity bounds on noise scales)
with analytic gradients.

Multi-start: candidate starting points are Latin hypercube perturbations
of a heuristic default (logit intercepts matched to empirical action
shares, zero slopes, unit scales).  Each candidate gets a short
pre-optimization; the best few are refined to convergence and the
overall best kept.  With one candidate and zero perturbation this
reduces to a single plain quasi-Newton run.

Standard errors are cluster-robust: H^-1 B H^-1 with H the finite
difference Hessian of the analytic gradient and B the outer product of
per-individual scores.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .draws import SimulationDraws, make_draws
from .likelihood import CompiledModel, LikelihoodError, prepare_dataset
from .modelspec import ACTIONS, CONST, ModelSpec, free_dimension
from .panel import PanelDataset
from .params import ParameterVector

#: thresholds for the significance stars
STAR_LEVELS = ((2.576, "***"), (1.960, "**"), (1.645, "*"))


class EstimationError(RuntimeError):
    pass


def stars(t) -> str:
    """Significance stars for a robust t ratio."""
    if t is None or not math.isfinite(t):
        return ""
    a = abs(float(t))
    for cut, mark in STAR_LEVELS:
        if a >= cut:
            return mark
    return ""


# ---------------------------------------------------------------------
# fit metrics
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class FitMetrics:
    ll: float
    ll0: float
    k: int
    n_obs: int
    aic: float
    bic: float
    rho2: float
    adj_rho2: float


def null_loglik(n_obs: int) -> float:
    """Log likelihood with every free parameter at zero.

    All-zero parameters make every utility zero, so each of the five
    actions has probability 1/5; the measurement and magnitude factors
    are excluded from this baseline so it is comparable across model
    variants.
    """
    return n_obs * math.log(1.0 / len(ACTIONS))


def fit_metrics(ll, k, n_obs, ll0=None) -> FitMetrics:
    """Information criteria and rho-squared measures.

    ``aic = 2k - 2ll``; ``bic = k ln(n_obs) - 2ll``;
    ``adj_rho2 = 1 - (ll - k)/ll0``.
    """
    if ll0 is None:
        ll0 = null_loglik(n_obs)
    return FitMetrics(
        ll=float(ll),
        ll0=float(ll0),
        k=int(k),
        n_obs=int(n_obs),
        aic=2.0 * k - 2.0 * ll,
        bic=k * math.log(n_obs) - 2.0 * ll,
        rho2=1.0 - ll / ll0,
        adj_rho2=1.0 - (ll - k) / ll0,
    )


# ---------------------------------------------------------------------
# robust covariance
# ---------------------------------------------------------------------

@dataclass
class CovarianceResult:
    robust: np.ndarray
    classical: np.ndarray
    se_robust: np.ndarray
    se_classical: np.ndarray
    t_robust: np.ndarray
    names: list[str]


def _fd_hessian(fun_grad, x, step=1e-5):
    """Central finite differences of an analytic gradient."""
    n = x.size
    H = np.empty((n, n))
    for j in range(n):
        h = step * max(1.0, abs(x[j]))
        xp = x.copy(); xp[j] += h
        xm = x.copy(); xm[j] -= h
        H[:, j] = (fun_grad(xp) - fun_grad(xm)) / (2.0 * h)
    return 0.5 * (H + H.T)


def robust_covariance(ds: PanelDataset, spec: ModelSpec, pv: ParameterVector,
                      draws: SimulationDraws | None = None, n_jobs=1,
                      fd_step=1e-5) -> CovarianceResult:
    """Cluster-robust (sandwich) covariance of the free parameters at
    ``pv``, clustering scores by individual.

    ``H`` is the Hessian of the total log likelihood (finite differences
    of the analytic gradient), ``B = sum_n s_n s_n'`` over individual
    scores; the sandwich is ``H^-1 B H^-1`` and the classical matrix is
    ``(-H)^-1``.
    """
    model = CompiledModel(ds, spec, pv)
    x = pv.free_values()

    def grad_at(xv):
        return model.loglik(xv, draws, want_grad=True, n_jobs=n_jobs).gradient

    H = _fd_hessian(grad_at, x, step=fd_step)
    rep = model.loglik(x, draws, want_scores=True, n_jobs=n_jobs)
    B = rep.scores.T @ rep.scores
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(f"Hessian is not invertible: {exc}") from exc
    robust = Hinv @ B @ Hinv
    robust = 0.5 * (robust + robust.T)
    classical = 0.5 * ((-Hinv) + (-Hinv).T)
    with np.errstate(invalid="ignore"):
        se_r = np.sqrt(np.diag(robust))
        se_c = np.sqrt(np.diag(classical))
        t_r = x / se_r
    return CovarianceResult(robust, classical, se_r, se_c, t_r, pv.free_names)


# ---------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------

@dataclass
class EstimationConfig:
    """Knobs for :func:`estimate`.

    ``R``/``scheme``/``draw_seed`` override the spec's draw settings.
    ``n_candidates`` > 1 switches on the multi-start search with
    ``perturbation`` as the half-width of the Latin hypercube box.
    """

    R: int | None = None
    scheme: str | None = None
    draw_seed: int | None = None
    burn: int = 0
    n_candidates: int = 1
    perturbation: float = 0.0
    pre_iterations: int = 20
    top_k: int = 3
    seed: int = 0
    maxiter: int = 1000
    gtol: float = 1e-5
    ftol: float = 1e-14
    n_jobs: int = 1
    share_start: bool = True
    compute_cov: bool = True
    fd_step: float = 1e-5


@dataclass
class EstimationResult:
    spec: ModelSpec
    pv: ParameterVector
    ll: float
    converged: bool
    n_iter: int
    grad_inf: float
    metrics: FitMetrics
    n_obs: int
    n_individuals: int
    cov: CovarianceResult | None
    draws_key: dict | None
    multistart: list[dict] = field(default_factory=list)

    @property
    def free_names(self):
        return self.pv.free_names

    def free_values(self):
        return self.pv.free_values()


def _share_start(model: CompiledModel, pv: ParameterVector) -> np.ndarray:
    """Default start: intercepts at log share ratios, measurement loadings
    nudged to a small positive value, rest untouched.

    An all-zero latent block sits exactly on the reflection symmetry of the
    likelihood (flipping one latent's sign everywhere leaves the fit
    unchanged), so a zero start lets round-off pick the mode at random.
    Positive starting loadings anchor each latent to the sign convention of
    its indicators.
    """
    x = pv.free_values()
    counts = np.bincount(model.chosen, minlength=len(ACTIONS)).astype(float)
    shares = (counts + 0.5) / (counts.sum() + 0.5 * len(ACTIONS))
    ref = shares[ACTIONS.index("maintain")]
    free_names = pv.free_names
    for i, action in enumerate(ACTIONS):
        if action == "maintain":
            continue
        eq = model.spec.utilities[action]
        for t in eq.terms:
            if t.ref == CONST and t.parameter in free_names:
                j = free_names.index(t.parameter)
                if x[j] == 0.0:
                    x[j] = math.log(shares[i] / ref)
    latent_names = {eq.target for eq in model.spec.latents}
    for eq in model.spec.measurements:
        for t in eq.terms:
            if t.ref in latent_names and t.parameter in free_names:
                j = free_names.index(t.parameter)
                if x[j] == 0.0:
                    x[j] = 0.1
    return x


def _candidate_points(center, bounds, cfg: EstimationConfig):
    if cfg.n_candidates <= 1 or cfg.perturbation == 0.0:
        pts = [center.copy()]
        if cfg.n_candidates > 1:
            pts += [center.copy() for _ in range(cfg.n_candidates - 1)]
        return pts
    sampler = qmc.LatinHypercube(d=center.size, seed=cfg.seed)
    u = sampler.random(cfg.n_candidates - 1)
    pts = [center.copy()]
    for row in u:
        x = center + cfg.perturbation * (2.0 * row - 1.0)
        for j, (lo, hi) in enumerate(bounds):
            x[j] = min(max(x[j], lo if math.isfinite(lo) else x[j]), hi)
            if math.isfinite(lo):
                x[j] = max(x[j], lo + 1e-4)
        pts.append(x)
    return pts


def estimate(ds: PanelDataset, spec: ModelSpec,
             pv: ParameterVector | None = None,
             config: EstimationConfig | None = None) -> EstimationResult:
    """Fit ``spec`` to ``ds`` by maximum simulated likelihood."""
    cfg = config or EstimationConfig()
    ds = prepare_dataset(ds, spec)
    if ds.n_obs == 0:
        raise EstimationError("no usable observations")
    pv = pv if pv is not None else spec.build_parameters()
    if pv.free_dimension() == 0:
        raise EstimationError("every parameter is fixed; nothing to estimate")

    model = CompiledModel(ds, spec, pv)
    draws = None
    if model.n_lat:
        draws = make_draws(
            ds.n_obs,
            cfg.R if cfg.R is not None else spec.draws_count,
            n_dims=model.n_lat,
            scheme=cfg.scheme if cfg.scheme is not None else spec.draws_scheme,
            seed=cfg.draw_seed if cfg.draw_seed is not None else spec.draws_seed,
            burn=cfg.burn,
        )

    def objective(x):
        rep = model.loglik(x, draws, want_grad=True, n_jobs=cfg.n_jobs)
        return -rep.total, -rep.gradient

    bounds = pv.free_bounds()
    center = _share_start(model, pv) if cfg.share_start else pv.free_values()

    if cfg.maxiter == 0:
        rep = model.loglik(center, draws, n_jobs=cfg.n_jobs)
        metrics = fit_metrics(rep.total, free_dimension(spec, pv), ds.n_obs)
        return EstimationResult(
            spec=spec, pv=pv.with_free(center), ll=rep.total, converged=False,
            n_iter=0, grad_inf=math.inf, metrics=metrics, n_obs=ds.n_obs,
            n_individuals=ds.n_individuals, cov=None,
            draws_key=draws.key() if draws else None,
        )

    history = []
    candidates = _candidate_points(center, bounds, cfg)
    if len(candidates) > 1:
        scored = []
        for idx, x0 in enumerate(candidates):
            res = optimize.minimize(
                objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": cfg.pre_iterations, "gtol": cfg.gtol,
                         "ftol": cfg.ftol},
            )
            scored.append((float(res.fun), idx, res.x))
            history.append({"stage": "pre", "candidate": idx, "ll": -float(res.fun)})
        scored.sort(key=lambda s: (s[0], s[1]))
        finalists = scored[: max(1, cfg.top_k)]
    else:
        finalists = [(math.inf, 0, candidates[0])]

    best = None
    for _, idx, x0 in finalists:
        res = optimize.minimize(
            objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": cfg.maxiter, "gtol": cfg.gtol,
                     "ftol": cfg.ftol},
        )
        history.append({"stage": "refine", "candidate": idx, "ll": -float(res.fun)})
        if best is None or res.fun < best.fun:
            best = res

    x_hat = best.x
    rep = model.loglik(x_hat, draws, want_grad=True, n_jobs=cfg.n_jobs)
    grad_inf = float(np.max(np.abs(rep.gradient))) if rep.gradient.size else 0.0
    # converged means a genuinely flat optimum, not just that the line
    # search gave up
    converged = grad_inf < 1e-3
    pv_hat = pv.with_free(x_hat)
    metrics = fit_metrics(rep.total, free_dimension(spec, pv), ds.n_obs)

    cov = None
    if cfg.compute_cov:
        cov = robust_covariance(ds, spec, pv_hat, draws=draws,
                                n_jobs=cfg.n_jobs, fd_step=cfg.fd_step)

    return EstimationResult(
        spec=spec, pv=pv_hat, ll=float(rep.total), converged=converged,
        n_iter=int(best.nit), grad_inf=grad_inf, metrics=metrics,
        n_obs=ds.n_obs, n_individuals=ds.n_individuals, cov=cov,
        draws_key=draws.key() if draws else None, multistart=history,
    )


# ---------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------

def _param_lines(result: EstimationResult, eq, se_map, t_map):
    out = []
    for t in eq.terms:
        out.append(_one_line(result, t.parameter, se_map, t_map))
    if eq.noise not in (None, "std_normal", "gumbel"):
        out.append(_one_line(result, eq.noise, se_map, t_map))
    return out


def _one_line(result, name, se_map, t_map):
    p = result.pv[name]
    if p.fixed:
        return f"  {name:<44} {p.value:>10.4f}      (fixed)"
    t = t_map.get(name)
    ttxt = f"{t:>8.2f}" if t is not None and math.isfinite(t) else "      --"
    return f"  {name:<44} {p.value:>10.4f} {ttxt} {stars(t)}"


def report(result: EstimationResult) -> str:
    """Human-readable estimation table: parameter blocks per equation
    with robust t ratios and significance stars, then fit metrics."""
    se_map, t_map = {}, {}
    if result.cov is not None:
        for name, se, t in zip(result.cov.names, result.cov.se_robust,
                               result.cov.t_robust):
            se_map[name] = float(se)
            t_map[name] = float(t)

    m = result.metrics
    lines = [
        f"Model: {result.spec.name}",
        f"Observations: {result.n_obs}   Individuals: {result.n_individuals}",
        f"Free parameters: {m.k}",
        f"Converged: {'yes' if result.converged else 'NO'}   "
        f"iterations: {result.n_iter}   max|grad|: {result.grad_inf:.3e}",
        "",
        f"LL(0):      {m.ll0:>12.2f}",
        f"LL(final):  {m.ll:>12.2f}",
        f"AIC:        {m.aic:>12.1f}",
        f"BIC:        {m.bic:>12.1f}",
        f"rho2:       {m.rho2:>12.4f}",
        f"adj rho2:   {m.adj_rho2:>12.4f}",
        "",
        f"{'parameter':<46} {'estimate':>10} {'rob. t':>8}",
    ]
    for eq in result.spec.latents:
        lines.append(f"[latent {eq.target}]")
        lines += _param_lines(result, eq, se_map, t_map)
    for action in ACTIONS:
        eq = result.spec.utilities[action]
        if not eq.terms:
            continue
        lines.append(f"[utility {action}]")
        lines += _param_lines(result, eq, se_map, t_map)
    for eq in result.spec.measurements:
        lines.append(f"[measurement {eq.target}]")
        lines += _param_lines(result, eq, se_map, t_map)
    for action, eq in result.spec.continuous.items():
        lines.append(f"[continuous {action}]")
        lines += _param_lines(result, eq, se_map, t_map)
    lines.append("")
    lines.append("significance: *** |t|>=2.576, ** |t|>=1.960, * |t|>=1.645")
    return "\n".join(lines)


def results_text(result: EstimationResult) -> str:
    """Machine-readable results: stable ``key = value`` lines with full
    float precision (byte-reproducible across identical runs)."""
    lines = [
        f"model = {result.spec.name}",
        f"n_obs = {result.n_obs}",
        f"n_individuals = {result.n_individuals}",
        f"k = {result.metrics.k}",
        f"converged = {int(result.converged)}",
        f"ll = {result.ll!r}",
        f"ll0 = {result.metrics.ll0!r}",
        f"aic = {result.metrics.aic!r}",
        f"bic = {result.metrics.bic!r}",
        f"adj_rho2 = {result.metrics.adj_rho2!r}",
    ]
    for p in result.pv.entries:
        lines.append(f"param.{p.name} = {p.value!r}{'  fixed' if p.fixed else ''}")
    if result.cov is not None:
        for name, se in zip(result.cov.names, result.cov.se_robust):
            lines.append(f"se.{name} = {float(se)!r}")
    return "\n".join(lines) + "\n"
