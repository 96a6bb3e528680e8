"""Point estimation: constrained MPLE, pseudo-posterior MAP, Robbins-Monro and MC Hessians."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _gibbs
from .exceptions import ValidationError
from .model import (
    Dataset,
    ModelSpec,
    PriorSpec,
    as_dataset,
    prior_eval,
    pseudo_terms,
    state_statistics,
    sufficient_statistics,
)

log = logging.getLogger(__name__)

_DIVERGED_NORM = 1e3
_F_RESOLUTION = 1e-12  # relative Newton decrement treated as converged
_SEPARATED = 15.0  # |coordinate| beyond which an unpenalised fit is treated as separated


@dataclass(frozen=True)
class GraphStructure:
    """Undirected graph over ``p`` nodes as a set of pairs ``(i, j)`` with ``i < j``."""

    p: int
    edges: frozenset

    def __init__(self, p: int, edges=()):
        clean = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValidationError(f"self-loop ({i}, {j}) not allowed")
            if not (0 <= i < p and 0 <= j < p):
                raise ValidationError(f"edge ({i}, {j}) out of range for p={p}")
            clean.add((min(i, j), max(i, j)))
        object.__setattr__(self, "p", int(p))
        object.__setattr__(self, "edges", frozenset(clean))

    @classmethod
    def full(cls, p: int) -> "GraphStructure":
        return cls(p, [(i, j) for i in range(p) for j in range(i + 1, p)])

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def __len__(self):
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a


@dataclass
class EstimateResult:
    theta_star: np.ndarray
    converged: bool
    iterations: int
    final_gradient_norm: float
    method: str = "mple"
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theta_star": self.theta_star.tolist(),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "final_gradient_norm": float(self.final_gradient_norm),
            "method": self.method,
            "info": self.info,
        }


def _objective(ds: Dataset, theta, prior, hessian=True):
    t = pseudo_terms(ds, theta, hessian=hessian)
    f, g, h = t.logdens, t.gradient, t.hessian
    if prior is not None:
        lp, lg, lc = prior_eval(theta, prior, ds.spec)
        f, g = f + lp, g + lg
        if hessian:
            h = h + np.diag(lc)
    return f, g, h


def mple(data, spec: ModelSpec | None = None, structure: GraphStructure | None = None,
         prior: PriorSpec | None = None, theta0=None, tol: float = 1e-8,
         max_iter: int = 200) -> EstimateResult:
    """Maximum (penalised) pseudo-likelihood by damped Newton iterations.

    Interactions absent from ``structure`` are pinned at zero and excluded
    from the Newton system.  Non-convergence and separation are reported in
    the result rather than raised.
    """
    ds = as_dataset(data, spec)
    spec = ds.spec
    if structure is not None and structure.p != spec.p:
        raise ValidationError(f"structure has p={structure.p}, model has p={spec.p}")
    free = np.ones(spec.d, dtype=bool) if structure is None else spec.edge_mask(structure.edges)
    theta = np.zeros(spec.d) if theta0 is None else spec.check_theta(theta0).copy()
    theta[~free] = 0.0

    f, g, h = _objective(ds, theta, prior)
    gnorm = float(np.linalg.norm(g[free]))
    decrements = []
    converged = gnorm <= tol
    it = 0
    info: dict = {}
    while not converged and it < max_iter:
        it += 1
        gf = g[free]
        neg_h = -h[np.ix_(free, free)]
        try:
            step = linalg.cho_solve(linalg.cho_factor(neg_h), gf)
        except linalg.LinAlgError:
            # flat direction (separation without a prior): fall back to a damped step
            evals, evecs = np.linalg.eigh(neg_h)
            evals = np.maximum(evals, 1e-8 * max(1.0, evals.max()))
            step = evecs @ ((evecs.T @ gf) / evals)
        slope = float(gf @ step)
        decrements.append(slope)
        direction = np.zeros(spec.d)
        direction[free] = step
        if slope <= _F_RESOLUTION * max(1.0, abs(f)):
            # predicted gain is below the objective's rounding: Armijo cannot judge it
            theta = theta + direction
            f, g, h = _objective(ds, theta, prior)
            gnorm = float(np.linalg.norm(g[free]))
            converged = True
            break
        t = 1.0
        while True:
            cand = theta + t * direction
            fc, gc, hc = _objective(ds, cand, prior)
            if np.isfinite(fc) and fc >= f + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            info["line_search_failed"] = True
            break
        theta, f, g, h = cand, fc, gc, hc
        gnorm = float(np.linalg.norm(g[free]))
        converged = gnorm <= tol
        if np.linalg.norm(theta) > _DIVERGED_NORM:
            info["separation"] = True
            break
    info["newton_decrements"] = decrements
    if prior is None and np.max(np.abs(theta[free]), initial=0.0) > _SEPARATED:
        info["separation"] = True
        log.warning("MPLE drifts to the boundary (separation); supply a prior to bound it")
    if not converged:
        log.warning("MPLE did not converge after %d iterations (|grad| = %.3g)", it, gnorm)
    return EstimateResult(theta, bool(converged), it, gnorm,
                          method="mple" if prior is None else "map", info=info)


def map_pseudo(data, spec: ModelSpec | None = None, prior: PriorSpec | None = None,
               **kwargs) -> EstimateResult:
    """Mode of the pseudo posterior (pseudo log-likelihood plus log-prior)."""
    if prior is None:
        raise ValidationError("map_pseudo requires a prior")
    return mple(data, spec, prior=prior, **kwargs)


class _PersistentChains:
    """Gibbs chains kept alive across calls, for stochastic-approximation loops."""

    def __init__(self, spec: ModelSpec, init: np.ndarray, chains: int, rng):
        idx = rng.integers(0, init.shape[0], size=chains)
        self.states = np.ascontiguousarray(init[idx], dtype=np.int64)
        self.spec = spec
        self.rng = rng

    def draw(self, theta, n_samples: int, burn_in: int = 1) -> np.ndarray:
        chains = self.states.shape[0]
        if burn_in:
            _gibbs.run_sweeps(self.states, theta, self.spec, burn_in, self.rng)
        sweeps = -(-n_samples // chains)
        rec = _gibbs.run_sweeps(self.states, theta, self.spec, sweeps, self.rng, record=True)
        return rec.reshape(-1, self.spec.p)[:n_samples]


def robbins_monro(data, spec: ModelSpec | None = None, prior: PriorSpec | None = None,
                  mc_samples: int = 10_000, schedule=None, *, n_iter: int = 200,
                  a0: float | None = None, offset: float = 100.0,
                  preconditioner: str | None = "pseudo", theta0=None, chains: int = 500,
                  seed=None) -> EstimateResult:
    """Stochastic approximation of the full-likelihood (posterior) mode.

    Iterates ``theta += a_k P (s(X) - n s_hat_k + grad log prior)`` where
    ``s_hat_k`` averages single-state statistics over ``mc_samples`` Gibbs
    draws at ``theta_k``.  ``schedule`` overrides the gain sequence (its length
    sets the number of iterations); otherwise ``a_k = a0 / (k + offset)``.

    With ``preconditioner="pseudo"``, ``P`` is the inverse negative pseudo
    posterior Hessian at the start point times ``n`` and ``a0`` defaults to
    ``offset / n`` (a full Newton step at k=0).  With ``preconditioner=None``
    the plain gradient recursion with ``a0 = 1/n`` is used.
    """
    ds = as_dataset(data, spec)
    spec = ds.spec
    n = ds.n
    rng = np.random.default_rng(seed)
    if theta0 is None:
        theta0 = mple(ds, prior=prior).theta_star
    theta = spec.check_theta(theta0).copy()
    s_obs = sufficient_statistics(ds).values

    if preconditioner == "pseudo":
        _, _, h = _objective(ds, theta, prior)
        precond = n * np.linalg.inv(-h)
        precond = 0.5 * (precond + precond.T)
        a0 = offset / n if a0 is None else a0
    elif preconditioner is None:
        precond = None
        a0 = 1.0 / n if a0 is None else a0
    else:
        raise ValidationError(f"unknown preconditioner {preconditioner!r}")

    gains = (np.asarray(schedule, dtype=float) if schedule is not None
             else a0 / (np.arange(n_iter) + offset))
    sampler = _PersistentChains(spec, ds.values, min(chains, mc_samples), rng)
    info = {"a0": a0, "offset": offset, "preconditioner": preconditioner,
            "mc_samples": mc_samples, "n_iter": int(len(gains))}
    converged = True
    gnorm = np.nan
    k = 0
    for k, a_k in enumerate(gains, start=1):
        if a_k == 0.0:
            continue
        s_hat = _gibbs.mean_statistics(sampler.draw(theta, mc_samples), spec)
        g = s_obs - n * s_hat
        if prior is not None:
            g = g + prior_eval(theta, prior, spec)[1]
        gnorm = float(np.linalg.norm(g))
        step = g if precond is None else precond @ g
        theta = theta + a_k * step
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > _DIVERGED_NORM:
            info["diverged"] = True
            converged = False
            log.warning("Robbins-Monro diverged at iteration %d", k)
            break
    return EstimateResult(theta, converged, k, gnorm, method="robbins_monro", info=info)


def monte_carlo_hessian(theta_star, spec: ModelSpec, n: int, mc_samples: int = 100_000,
                        *, init=None, chains: int = 1000, burn_in: int | None = None,
                        seed=None, return_se: bool = False):
    """``-n Cov[s(x)]`` estimated from Gibbs draws at ``theta_star``.

    Chains start at the rows of ``init`` when given (no burn-in by default),
    otherwise uniformly at random with 1000 burn-in sweeps.
    """
    theta = spec.check_theta(theta_star)
    if mc_samples < 2 * spec.d:
        warnings.warn(
            f"mc_samples={mc_samples} < 2*d={2 * spec.d}; Monte Carlo Hessian is unreliable",
            RuntimeWarning, stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    if burn_in is None:
        burn_in = 10 if init is not None else 1000
    init_arr = None
    if init is not None:
        init_arr = init.values if isinstance(init, Dataset) else np.asarray(init)
        init_arr = init_arr[rng.permutation(init_arr.shape[0])]
    states = _gibbs.monte_carlo_states(theta, spec, mc_samples, rng, init=init_arr,
                                       chains=chains, burn_in=burn_in)
    stats = state_statistics(states, spec)
    cov = np.cov(stats, rowvar=False)
    cov = np.atleast_2d(cov)
    hess = -n * 0.5 * (cov + cov.T)
    if not return_se:
        return hess
    # iid-approximation standard error of each covariance entry
    c = stats - stats.mean(axis=0)
    k, d = c.shape
    first = np.zeros((d, d))
    second = np.zeros((d, d))
    for lo in range(0, k, 4096):
        block = c[lo:lo + 4096]
        prod = block[:, :, None] * block[:, None, :]
        first += prod.sum(axis=0)
        second += (prod * prod).sum(axis=0)
    var = np.maximum(second - first**2 / k, 0.0) / (k - 1)
    return hess, n * np.sqrt(var / k)
