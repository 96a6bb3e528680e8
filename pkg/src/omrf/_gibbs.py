"""Single-site Gibbs sweeps over the full conditionals (numba kernel).

Uniform variates come from a numpy ``Generator`` outside the jitted code so
that results depend only on the caller's seed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .model import ModelSpec

_BLOCK_SITES = 2**22  # uniforms generated per block


@njit(cache=True)
def _sweeps(states, mu, inter, uniforms, record):
    n, p = states.shape
    m = mu.shape[1]
    logits = np.empty(m + 1)
    for s in range(uniforms.shape[0]):
        for k in range(n):
            for i in range(p):
                rest = 0.0
                for j in range(p):
                    rest += inter[i, j] * states[k, j]
                top = 0.0
                logits[0] = 0.0
                for h in range(1, m + 1):
                    v = mu[i, h - 1] + h * rest
                    logits[h] = v
                    if v > top:
                        top = v
                total = 0.0
                for h in range(m + 1):
                    logits[h] = np.exp(logits[h] - top)
                    total += logits[h]
                target = uniforms[s, k, i] * total
                acc = 0.0
                cat = m
                for h in range(m + 1):
                    acc += logits[h]
                    if target < acc:
                        cat = h
                        break
                states[k, i] = cat
        if record.shape[0] > 0:
            record[s] = states


def run_sweeps(states: np.ndarray, theta, spec: ModelSpec, sweeps: int,
               rng: np.random.Generator, record: bool = False):
    """Advance every row of ``states`` (in place) by ``sweeps`` full Gibbs passes.

    Returns the stacked states after each sweep, shape ``(sweeps, n, p)``,
    when ``record`` is true.
    """
    mu, inter = spec.split(theta)
    n, p = states.shape
    per_block = max(1, _BLOCK_SITES // max(1, n * p))
    kept = []
    done = 0
    while done < sweeps:
        b = min(per_block, sweeps - done)
        u = rng.random((b, n, p))
        rec = np.empty((b, n, p), dtype=states.dtype) if record else np.empty((0, n, p), dtype=states.dtype)
        _sweeps(states, mu, inter, u, rec)
        if record:
            kept.append(rec)
        done += b
    if record:
        return np.concatenate(kept, axis=0) if kept else np.empty((0, n, p), dtype=states.dtype)
    return None


def monte_carlo_states(theta, spec: ModelSpec, n_samples: int, rng: np.random.Generator,
                       init: np.ndarray | None = None, chains: int = 100,
                       burn_in: int = 0) -> np.ndarray:
    """Draw ``n_samples`` states from the model with parallel Gibbs chains.

    Chains start at rows of ``init`` (cycled) or uniformly at random; every
    state visited after burn-in is kept.
    """
    if init is not None:
        init = np.asarray(init)
        chains = min(chains, n_samples)
        idx = np.arange(chains) % init.shape[0]
        states = np.ascontiguousarray(init[idx], dtype=np.int64)
    else:
        chains = min(chains, n_samples)
        states = rng.integers(0, spec.m + 1, size=(chains, spec.p)).astype(np.int64)
    if burn_in:
        run_sweeps(states, theta, spec, burn_in, rng)
    sweeps = -(-n_samples // chains)
    rec = run_sweeps(states, theta, spec, sweeps, rng, record=True)
    return rec.reshape(-1, spec.p)[:n_samples]


def mean_statistics(states: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Average single-state sufficient statistics without building the ``K x d`` matrix."""
    x = np.asarray(states)
    k = x.shape[0]
    counts = np.stack([(x == h).sum(axis=0) for h in range(1, spec.m + 1)], axis=1)
    xf = x.astype(float)
    cross = xf.T @ xf
    iu, ju = spec.pairs
    return np.concatenate([counts.ravel() / k, cross[iu, ju] / k])
