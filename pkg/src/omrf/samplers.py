"""MCMC samplers for ordinal MRF posteriors.

All gradient-based methods share one kernel: a Metropolis-adjusted Langevin
step preconditioned by the inverse Fisher (observed) information,

    x' = x + (sigma2 / 2) R R' grad log pi(x) + sigma R z,

with ``R`` refreshed every ``refresh_every`` accepted moves during burn-in
and ``sigma2`` tuned toward ``target_accept`` by Robbins-Monro on
``log sigma2``.  Both are frozen after burn-in.

The CoRe family samples ``beta = A (theta - theta*) + theta*``: the
target on the beta-scale is the pulled-back pseudo posterior, so the
``beta`` draws carry the corrected scale.  ``Chain.draws`` therefore holds
``beta`` for CoRe-type methods and ``Chain.pseudo_draws`` the matching
``theta(beta)``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import linalg

from . import _gibbs
from .estimate import map_pseudo, robbins_monro
from .exceptions import NumericalError, ValidationError
from .model import (
    Dataset,
    PriorSpec,
    _check_capacity,
    _env_cap,
    enumeration_cap,
    _support_moments,
    as_dataset,
    exact_moments,
    prior_eval,
    pseudo_terms,
    state_statistics,
    sufficient_statistics,
)
from .rescale import (
    RescalingMatrix,
    build_rescaling,
    curvature_bundle,
    post_hoc_calibrate,
    robust_posterior_covariance,
    update_rescaling,
)

log = logging.getLogger(__name__)

# The exact sampler enumerates the state space at every iteration, so it gets
# a tighter budget than one-off evaluations (env var MRF_EXACT_SAMPLER_CAP).
EXACT_SAMPLER_CAP = 2**20

METHODS = ("exact", "pseudo", "core", "core-rm", "core-mch", "adacore", "dmh", "adadmh",
           "empirical", "ph-rm", "ph-ghw", "ph-mch")


def exact_sampler_cap() -> int:
    return min(enumeration_cap(), _env_cap("MRF_EXACT_SAMPLER_CAP", EXACT_SAMPLER_CAP))


@dataclass
class AdaCoReConfig:
    xi: float = 0.05
    tau: float | None = None      # None: 3 / sqrt(n)
    epsilon: float = 1e-12


@dataclass
class SamplerConfig:
    iterations: int = 25_000
    burn_in: int = 5_000
    seed: int | None = None
    sigma2_init: float | None = None  # None: 0.001 for the exact target, 1.0 otherwise
    target_accept: float = 0.574
    inner_gibbs_iters: int = 25_000   # Monte Carlo states per DMH / AdaDMH proposal
    inner_chains: int = 100
    refresh_every: int = 50
    adacore: AdaCoReConfig = field(default_factory=AdaCoReConfig)

    def __post_init__(self):
        if isinstance(self.adacore, dict):
            self.adacore = AdaCoReConfig(**self.adacore)
        for name in ("iterations", "inner_gibbs_iters", "inner_chains", "refresh_every"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"sampler {name} must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValidationError("burn_in must be in [0, iterations)")
        if not 0 < self.target_accept < 1:
            raise ValidationError("target_accept must lie in (0, 1)")
        if self.sigma2_init is not None and self.sigma2_init <= 0:
            raise ValidationError("sigma2_init must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Chain:
    """Output of one sampler run.

    ``draws`` has one row per iteration, burn-in included; ``retained`` drops
    the first ``burn_in`` rows.
    """

    draws: np.ndarray
    accept_trace: np.ndarray
    sigma2_trace: np.ndarray
    wall_time_seconds: float
    method: str
    burn_in: int
    pseudo_draws: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def retained(self) -> np.ndarray:
        return self.draws[self.burn_in:]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accept_trace[self.burn_in:]))

    @property
    def d(self) -> int:
        return self.draws.shape[1]


# ---------------------------------------------------------------------------
# targets


class Point(NamedTuple):
    logp: float
    grad: np.ndarray
    aux: object = None


def _factor_from_precision(prec: np.ndarray, transform: np.ndarray | None = None) -> np.ndarray:
    """Lower ``R`` with ``R R' = M prec^-1 M'`` (``M`` = ``transform`` or identity)."""
    try:
        lf = linalg.cholesky(0.5 * (prec + prec.T), lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("information matrix is not positive definite") from exc
    w = linalg.solve_triangular(lf, np.eye(prec.shape[0]), lower=True, trans="T")  # Lf^-T
    if transform is not None:
        w = transform @ w
    cov = w @ w.T
    try:
        return linalg.cholesky(0.5 * (cov + cov.T), lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("inverse information is not positive definite") from exc


class _Target:
    dim: int

    def evaluate(self, x, rng=None) -> Point:
        raise NotImplementedError

    def log_density(self, x, rng=None) -> float:
        return self.evaluate(x, rng).logp

    def gradient(self, x, rng=None) -> np.ndarray:
        return self.evaluate(x, rng).grad

    def precision(self, x) -> np.ndarray:
        """Negative Hessian (observed information) of the log target at ``x``."""
        raise NotImplementedError

    def fisher_factor(self, x) -> np.ndarray:
        return _factor_from_precision(self.precision(x))

    def accept_extra(self, cur: Point, prop: Point, x, x_new) -> float:
        return 0.0


class _PriorMixin:
    def _prior(self, theta):
        if self.prior is None:
            return 0.0, 0.0, np.zeros(self.dim)
        return prior_eval(theta, self.prior, self.ds.spec)


class PseudoTarget(_PriorMixin, _Target):
    def __init__(self, ds: Dataset, prior: PriorSpec | None):
        self.ds, self.prior, self.dim = ds, prior, ds.spec.d

    def evaluate(self, x, rng=None) -> Point:
        t = pseudo_terms(self.ds, x)
        lp, lg, _ = self._prior(x)
        return Point(t.logdens + lp, t.gradient + lg)

    def precision(self, x):
        h = pseudo_terms(self.ds, x, hessian=True).hessian
        return -(h + np.diag(self._prior(x)[2]))


class ExactTarget(_PriorMixin, _Target):
    def __init__(self, ds: Dataset, prior: PriorSpec | None):
        _check_capacity(ds.spec, exact_sampler_cap())
        self.ds, self.prior, self.dim = ds, prior, ds.spec.d
        self.s_obs = sufficient_statistics(ds).values

    def evaluate(self, x, rng=None) -> Point:
        log_z, mean, _ = exact_moments(x, self.ds.spec)
        lp, lg, _ = self._prior(x)
        n = self.ds.n
        return Point(float(self.s_obs @ x) - n * log_z + lp, self.s_obs - n * mean + lg)

    def precision(self, x):
        _, _, cov = exact_moments(x, self.ds.spec)
        return self.ds.n * cov - np.diag(self._prior(x)[2])


class EmpiricalTarget(_PriorMixin, _Target):
    def __init__(self, ds: Dataset, prior: PriorSpec | None):
        self.ds, self.prior, self.dim = ds, prior, ds.spec.d
        self.support = state_statistics(ds.unique_rows, ds.spec)
        self.s_obs = ds.counts @ self.support

    def evaluate(self, x, rng=None) -> Point:
        log_z, mean, _ = _support_moments(x, self.support)
        lp, lg, _ = self._prior(x)
        n = self.ds.n
        return Point(float(self.s_obs @ x) - n * log_z + lp, self.s_obs - n * mean + lg)

    def precision(self, x):
        _, _, cov = _support_moments(x, self.support)
        return self.ds.n * cov - np.diag(self._prior(x)[2])


class DMHTarget(_PriorMixin, _Target):
    """Unnormalised full likelihood with auxiliary states from inner Gibbs runs.

    Each evaluation draws ``inner`` states at the evaluation point from
    ``chains`` Gibbs chains started at randomly chosen observed rows.  Their
    statistics (kept in ``aux``) give the Monte Carlo gradient
    ``s(X) - n s_hat`` and, for a move ``theta -> theta'`` with states drawn at
    ``theta'``, the partition-function ratio

        Z(theta) / Z(theta') ~= mean_k f(y_k; theta) / f(y_k; theta'),

    raised to the power ``n``.
    """

    def __init__(self, ds: Dataset, prior: PriorSpec | None, inner: int, chains: int, rng):
        self.ds, self.prior, self.dim = ds, prior, ds.spec.d
        self.inner, self.chains, self.rng = inner, chains, rng
        self.s_obs = sufficient_statistics(ds).values

    def _stats(self, theta):
        rows = self.ds.values[self.rng.integers(0, self.ds.n, size=min(self.chains, self.inner))]
        states = _gibbs.monte_carlo_states(theta, self.ds.spec, self.inner, self.rng,
                                           init=rows, chains=self.chains)
        return state_statistics(states, self.ds.spec)

    def evaluate(self, x, rng=None) -> Point:
        stats = self._stats(x)
        lp, lg, _ = self._prior(x)
        return Point(float(self.s_obs @ x) + lp, self.s_obs - self.ds.n * stats.mean(axis=0) + lg, stats)

    def accept_extra(self, cur, prop, x, x_new):
        v = prop.aux @ (np.asarray(x) - np.asarray(x_new))
        top = v.max()
        # log-mean-exp written so that x == x_new gives exactly 0
        return float(self.ds.n * (top + np.log(np.mean(np.exp(v - top)))))

    def precision(self, x):
        cov = np.atleast_2d(np.cov(self._stats(x), rowvar=False))
        return self.ds.n * cov - np.diag(self._prior(x)[2])


class RescaledTarget(_Target):
    """Base target pulled back to ``beta``: ``theta(beta) = A^-1 (beta - theta*) + theta*``.

    ``include_jacobian`` adds the constant ``log|det A^-1|``; it cancels in
    every acceptance ratio and is off by default.
    """

    def __init__(self, base: _Target, rescaling: RescalingMatrix, anchor=None,
                 include_jacobian: bool = False):
        self.base = base
        self.dim = base.dim
        self.include_jacobian = include_jacobian
        self.anchor = np.array(rescaling.theta_star if anchor is None else anchor, dtype=float)
        self.set_rescaling(rescaling)

    def set_rescaling(self, rescaling: RescalingMatrix):
        self.rescaling = rescaling
        self.A = rescaling.A
        self.A_inv = rescaling.A_inv
        self.A_inv_T = rescaling.A_inv_T
        # affine offsets written so that A = I gives exact identities
        self._c_theta = self.anchor - self.A_inv @ self.anchor
        self._c_beta = self.anchor - self.A @ self.anchor
        self.log_jacobian = float(-np.sum(np.log(np.abs(np.diag(rescaling.Gamma_factor))))
                                  - np.sum(np.log(np.abs(np.diag(rescaling.L_factor)))))

    def to_theta(self, beta):
        return self.A_inv @ beta + self._c_theta

    def to_beta(self, theta):
        return self.A @ theta + self._c_beta

    def evaluate(self, x, rng=None) -> Point:
        p = self.base.evaluate(self.to_theta(x), rng)
        logp = p.logp + self.log_jacobian if self.include_jacobian else p.logp
        return Point(logp, self.A_inv_T @ p.grad, p.aux)

    def precision(self, x):
        return self.A_inv_T @ self.base.precision(self.to_theta(x)) @ self.A_inv

    def fisher_factor(self, x):
        return _factor_from_precision(self.base.precision(self.to_theta(x)), transform=self.A)

    def accept_extra(self, cur, prop, x, x_new):
        return self.base.accept_extra(cur, prop, self.to_theta(x), self.to_theta(x_new))


# ---------------------------------------------------------------------------
# kernel


@dataclass
class KernelState:
    x: np.ndarray
    point: Point
    R: np.ndarray
    R_inv: np.ndarray
    sigma2: float


def make_state(target: _Target, x, sigma2: float, R=None, rng=None) -> KernelState:
    x = np.asarray(x, dtype=float)
    point = target.evaluate(x, rng)
    if R is None:
        R = target.fisher_factor(x)
    return KernelState(x, point, R, linalg.solve_triangular(R, np.eye(len(x)), lower=True), sigma2)


def _langevin_mean(x, point: Point, R, sigma2):
    return x + 0.5 * sigma2 * (R @ (R.T @ point.grad))


def proposal_logdens(x_to, x_from, point_from: Point, R, R_inv, sigma2) -> float:
    """``log q(x_to | x_from)`` up to the constant shared by both directions."""
    r = R_inv @ (x_to - _langevin_mean(x_from, point_from, R, sigma2))
    return -0.5 * float(r @ r) / sigma2


def log_acceptance(target: _Target, state: KernelState, x_new, point_new: Point) -> float:
    fwd = proposal_logdens(x_new, state.x, state.point, state.R, state.R_inv, state.sigma2)
    bwd = proposal_logdens(state.x, x_new, point_new, state.R, state.R_inv, state.sigma2)
    return (point_new.logp - state.point.logp + bwd - fwd
            + target.accept_extra(state.point, point_new, state.x, x_new))


def fisher_mala_step(target: _Target, state: KernelState, rng: np.random.Generator,
                     adapt_iter: int | None = None, target_accept: float = 0.574):
    """One preconditioned Langevin Metropolis-Hastings step.

    Returns ``(new_state, accepted, log_alpha)``.  When ``adapt_iter`` is an
    iteration index, ``log sigma2`` moves by ``(adapt_iter + 1)^-1/2 (alpha - target_accept)``.
    """
    z = rng.standard_normal(state.x.shape[0])
    x_new = _langevin_mean(state.x, state.point, state.R, state.sigma2) + np.sqrt(state.sigma2) * (state.R @ z)
    u = rng.random()
    with np.errstate(all="ignore"):
        if np.all(np.isfinite(x_new)):
            point_new = target.evaluate(x_new, rng)
            la = log_acceptance(target, state, x_new, point_new)
        else:
            point_new, la = None, -np.inf
    if not np.isfinite(la):
        la = -np.inf
    accepted = bool(np.log(u) < la)
    new = KernelState(x_new, point_new, state.R, state.R_inv, state.sigma2) if accepted else state
    if adapt_iter is not None:
        alpha = float(np.exp(min(0.0, la)))
        sigma2 = float(np.exp(np.log(new.sigma2) + (alpha - target_accept) / np.sqrt(adapt_iter + 1)))
        new = replace(new, sigma2=sigma2)
    return new, accepted, la


def _refresh(target: _Target, state: KernelState) -> KernelState:
    try:
        R = target.fisher_factor(state.x)
    except NumericalError as exc:
        log.warning("keeping previous preconditioner: %s", exc)
        return state
    return replace(state, R=R, R_inv=linalg.solve_triangular(R, np.eye(len(state.x)), lower=True))


def _run(target: _Target, x0, cfg: SamplerConfig, rng, method: str, sigma2_init: float,
         before_step=None, after_step=None, theta_of=None) -> Chain:
    S, d = cfg.iterations, target.dim
    draws = np.empty((S, d))
    latent = np.empty((S, d)) if theta_of is not None else None
    acc = np.zeros(S, dtype=bool)
    s2 = np.empty(S)
    t0 = time.perf_counter()
    state = make_state(target, x0, sigma2_init, rng=rng)
    since_refresh = 0
    for s in range(S):
        adapting = s < cfg.burn_in
        if before_step is not None:
            state = before_step(s, state)
        state, ok, _ = fisher_mala_step(target, state, rng, s if adapting else None,
                                        cfg.target_accept)
        if after_step is not None:
            after_step(s, state, ok)
        if ok and adapting:
            since_refresh += 1
            if since_refresh % cfg.refresh_every == 0:
                state = _refresh(target, state)
        draws[s] = state.x
        if latent is not None:
            latent[s] = theta_of(state.x)
        acc[s] = ok
        s2[s] = state.sigma2
    wall = time.perf_counter() - t0
    return Chain(draws, acc, s2, wall, method, cfg.burn_in, latent)


def _sigma2(cfg: SamplerConfig, exact: bool) -> float:
    if cfg.sigma2_init is not None:
        return cfg.sigma2_init
    return 0.001 if exact else 1.0


def _start(ds, prior, theta_star):
    if theta_star is not None:
        return ds.spec.check_theta(theta_star)
    res = map_pseudo(ds, prior=prior) if prior is not None else None
    if res is None:
        from .estimate import mple
        res = mple(ds)
    return res.theta_star


# ---------------------------------------------------------------------------
# samplers


def sample_pseudo(data, prior: PriorSpec | None, cfg: SamplerConfig, theta_star=None) -> Chain:
    """Pseudo-posterior sampler."""
    ds = as_dataset(data)
    x0 = _start(ds, prior, theta_star)
    rng = np.random.default_rng(cfg.seed)
    chain = _run(PseudoTarget(ds, prior), x0, cfg, rng, "pseudo", _sigma2(cfg, False))
    chain.meta["theta_star"] = x0.tolist()
    return chain


def sample_exact(data, prior: PriorSpec | None, cfg: SamplerConfig, theta_star=None) -> Chain:
    """Exact-posterior sampler with the partition function enumerated at every step."""
    ds = as_dataset(data)
    target = ExactTarget(ds, prior)
    x0 = _start(ds, prior, theta_star)
    rng = np.random.default_rng(cfg.seed)
    return _run(target, x0, cfg, rng, "exact", _sigma2(cfg, True))


def sample_core(data, prior: PriorSpec | None, rescaling: RescalingMatrix, cfg: SamplerConfig,
                include_jacobian: bool = False, method: str = "core") -> Chain:
    """CoRe: Langevin moves on the beta-scale against the pulled-back pseudo posterior."""
    ds = as_dataset(data)
    if rescaling.d != ds.spec.d:
        raise ValidationError(f"rescaling has d={rescaling.d}, model has d={ds.spec.d}")
    target = RescaledTarget(PseudoTarget(ds, prior), rescaling, include_jacobian=include_jacobian)
    rng = np.random.default_rng(cfg.seed)
    x0 = target.to_beta(rescaling.theta_star)
    chain = _run(target, x0, cfg, rng, method, _sigma2(cfg, False), theta_of=target.to_theta)
    chain.meta["rescaling"] = rescaling.to_dict()
    return chain


def curvature_change(R_s: np.ndarray, R_star: np.ndarray, epsilon: float = 1e-12) -> float:
    """Relative Frobenius change ``||R_s - R*|| / (||R*|| + eps)``."""
    return float(np.linalg.norm(R_s - R_star) / (np.linalg.norm(R_star) + epsilon))


def ema_update(previous: float, value: float, xi: float) -> float:
    return (1.0 - xi) * previous + xi * value


def sample_adacore(data, prior: PriorSpec | None, cfg: SamplerConfig, theta_star=None) -> Chain:
    """Adaptive CoRe: the GHW rescaling is re-estimated at the running mean during burn-in.

    An update fires when the exponential moving average of the relative
    change between the curvature factor at the running mean and the factor
    stored at the last accepted state exceeds ``tau`` (default ``3/sqrt(n)``).
    """
    ds = as_dataset(data)
    anchor = _start(ds, prior, theta_star)
    base = PseudoTarget(ds, prior)
    target = RescaledTarget(base, build_rescaling(ds, anchor, prior, "GHW"))
    ac = cfg.adacore
    tau = ac.tau if ac.tau is not None else 3.0 / np.sqrt(ds.n)

    def theta_factor(theta):
        return _factor_from_precision(base.precision(theta))

    track = {"R_star": theta_factor(anchor), "cum": np.zeros(ds.spec.d), "ema": 0.0,
             "updates": 0, "update_iterations": [], "ema_trace": []}

    def before_step(s, state):
        if s >= cfg.burn_in:
            return state
        theta_s = target.to_theta(state.x)
        track["cum"] += theta_s
        if s == 0:
            return state
        mean = track["cum"] / (s + 1)
        try:
            delta = curvature_change(theta_factor(mean), track["R_star"], ac.epsilon)
        except NumericalError:
            return state
        track["ema"] = ema_update(track["ema"], delta, ac.xi)
        track["ema_trace"].append(track["ema"])
        if track["ema"] <= tau:
            return state
        previous = target.rescaling
        new = update_rescaling(mean, ds, prior, previous=previous)
        if new is previous:
            return state
        target.set_rescaling(replace(new, theta_star=anchor))
        track["updates"] += 1
        track["update_iterations"].append(s)
        return make_state(target, target.to_beta(theta_s), state.sigma2)

    def after_step(s, state, accepted):
        if accepted and s < cfg.burn_in:
            try:
                track["R_star"] = theta_factor(target.to_theta(state.x))
            except NumericalError:
                pass

    rng = np.random.default_rng(cfg.seed)
    chain = _run(target, target.to_beta(anchor), cfg, rng, "adacore", _sigma2(cfg, False),
                 before_step=before_step, after_step=after_step, theta_of=target.to_theta)
    chain.meta.update({
        "rescaling": target.rescaling.to_dict(),
        "tau": tau,
        "updates": track["updates"],
        "update_iterations": track["update_iterations"],
        "final_ema": track["ema"],
    })
    return chain


def sample_dmh(data, prior: PriorSpec | None, cfg: SamplerConfig, theta_star=None) -> Chain:
    """Double Metropolis-Hastings with Langevin proposals from Monte Carlo gradients."""
    ds = as_dataset(data)
    x0 = _start(ds, prior, theta_star)
    ss = np.random.SeedSequence(cfg.seed)
    rng, inner_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    target = DMHTarget(ds, prior, cfg.inner_gibbs_iters, cfg.inner_chains, inner_rng)
    chain = _run(target, x0, cfg, rng, "dmh", _sigma2(cfg, False))
    chain.meta["inner_gibbs_iters"] = cfg.inner_gibbs_iters
    return chain


def adadmh_proposal_covariance(sigma_ghw, sigma_hat, s: int, burn_in: int) -> np.ndarray:
    """``(2.38^2/d) [(1-lam) Sigma_GHW + lam Sigma_hat + 1e-8 I]`` with ``lam = min(1, s/burn_in)``."""
    d = sigma_ghw.shape[0]
    lam = min(1.0, s / burn_in) if burn_in else 1.0
    return (2.38**2 / d) * ((1 - lam) * sigma_ghw + lam * sigma_hat + 1e-8 * np.eye(d))


def sample_adadmh(data, prior: PriorSpec | None, cfg: SamplerConfig, theta_star=None) -> Chain:
    """Adaptive random-walk double Metropolis-Hastings.

    Proposal covariance ``(2.38^2/d) [(1-lam) Sigma_GHW + lam Sigma_hat + 1e-8 I]``
    with ``lam = min(1, s / burn_in)`` and ``Sigma_hat`` the running
    covariance of past draws; frozen after burn-in.
    """
    ds = as_dataset(data)
    d = ds.spec.d
    x = _start(ds, prior, theta_star).copy()
    sigma_ghw = robust_posterior_covariance(curvature_bundle(ds, x, prior))
    ss = np.random.SeedSequence(cfg.seed)
    rng, inner_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    target = DMHTarget(ds, prior, cfg.inner_gibbs_iters, cfg.inner_chains, inner_rng)
    scale = 2.38**2 / d
    S = cfg.iterations
    draws = np.empty((S, d))
    acc = np.zeros(S, dtype=bool)
    t0 = time.perf_counter()
    point = target.evaluate(x)
    mean = np.zeros(d)
    m2 = np.zeros((d, d))
    count = 0
    chol = None
    for s in range(S):
        if s < cfg.burn_in or chol is None:
            emp = m2 / (count - 1) if count > 1 else np.zeros((d, d))
            cov = adadmh_proposal_covariance(sigma_ghw, emp, s, cfg.burn_in)
            chol = linalg.cholesky(0.5 * (cov + cov.T), lower=True)
        x_new = x + chol @ rng.standard_normal(d)
        point_new = target.evaluate(x_new)
        la = point_new.logp - point.logp + target.accept_extra(point, point_new, x, x_new)
        if np.log(rng.random()) < la:
            x, point = x_new, point_new
            acc[s] = True
        draws[s] = x
        if s < cfg.burn_in:
            count += 1
            delta = x - mean
            mean += delta / count
            m2 += np.outer(delta, x - mean)
    wall = time.perf_counter() - t0
    chain = Chain(draws, acc, np.full(S, scale), wall, "adadmh", cfg.burn_in)
    chain.meta["inner_gibbs_iters"] = cfg.inner_gibbs_iters
    return chain


def sample_empirical(data, prior: PriorSpec | None, cfg: SamplerConfig, theta_star=None,
                     shift: bool = True) -> Chain:
    """Empirical-likelihood posterior, translated so its per-coordinate mode sits at the MAP."""
    from .metrics import half_sample_mode

    ds = as_dataset(data)
    x0 = _start(ds, prior, theta_star)
    rng = np.random.default_rng(cfg.seed)
    chain = _run(EmpiricalTarget(ds, prior), x0, cfg, rng, "empirical", _sigma2(cfg, False))
    if shift:
        modes = np.array([half_sample_mode(col) for col in chain.retained.T])
        offset = x0 - modes
        chain.draws = chain.draws + offset
        chain.meta["shift"] = offset.tolist()
    chain.meta["theta_star"] = x0.tolist()
    return chain


# ---------------------------------------------------------------------------
# method dispatch


def sample_method(method: str, data, prior: PriorSpec | None, cfg: SamplerConfig,
                  mc_outer: int = 100_000, theta_star=None, rm_kwargs: dict | None = None,
                  pseudo_chain: Chain | None = None) -> Chain:
    """Run any named method, including the estimation steps CoRe and PH variants need.

    ``pseudo_chain`` lets the post-hoc methods reuse an existing pseudo run.
    """
    ds = as_dataset(data)
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method in ("exact", "dmh", "adadmh", "empirical", "adacore"):
        fn = {"exact": sample_exact, "dmh": sample_dmh, "adadmh": sample_adadmh,
              "empirical": sample_empirical, "adacore": sample_adacore}[method]
        return fn(ds, prior, cfg, theta_star=theta_star)
    if method == "pseudo":
        return sample_pseudo(ds, prior, cfg, theta_star=theta_star)

    t0 = time.perf_counter()
    mode = _start(ds, prior, theta_star)
    variant = {"core": "GHW", "ph-ghw": "GHW", "core-rm": "RM", "ph-rm": "RM",
               "core-mch": "MCH", "ph-mch": "MCH"}[method]
    anchor = mode
    meta: dict = {}
    if variant == "RM":
        rm = robbins_monro(ds, prior=prior, mc_samples=max(1000, mc_outer // 10), theta0=mode,
                           seed=cfg.seed, **(rm_kwargs or {}))
        anchor = rm.theta_star
        meta["robbins_monro"] = rm.to_dict()
    rescaling = build_rescaling(ds, anchor, prior, variant, mc_samples=mc_outer, seed=cfg.seed)
    setup = time.perf_counter() - t0

    if method.startswith("core"):
        chain = sample_core(ds, prior, rescaling, cfg, method=method)
    else:
        base = pseudo_chain if pseudo_chain is not None else sample_pseudo(ds, prior, cfg, theta_star=mode)
        if variant == "RM":
            # pseudo draws are centred at the pseudo mode; move them to the RM optimum
            L = build_rescaling(ds, mode, prior, "GHW").L_factor
            calibrated = post_hoc_calibrate(base.draws, mode, L, rescaling.Gamma_factor,
                                            center="mode", location=anchor)
        else:
            calibrated = post_hoc_calibrate(base.draws[base.burn_in:], mode, rescaling.L_factor,
                                            rescaling.Gamma_factor, center="mean")
            calibrated = np.vstack([
                post_hoc_calibrate(base.draws[:base.burn_in], mode, rescaling.L_factor,
                                   rescaling.Gamma_factor, center="mode"),
                calibrated,
            ]) if base.burn_in else calibrated
        chain = Chain(calibrated, base.accept_trace.copy(), base.sigma2_trace.copy(),
                      base.wall_time_seconds, method, base.burn_in, base.draws.copy())
        chain.meta["rescaling"] = rescaling.to_dict()
    chain.wall_time_seconds += setup
    chain.meta.update(meta)
    chain.meta["setup_seconds"] = setup
    return chain
