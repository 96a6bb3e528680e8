"""Ordinal Markov random field: parameter layout, likelihoods and prior.

Parameter vectors are flat arrays of length ``p*m + p*(p-1)/2``.  The first
``p*m`` entries are thresholds ``mu[i, h]`` (h = 1..m, stored at
``i*m + h - 1``); the remaining entries are interactions ``theta[i, j]`` for
``i < j`` in row-major order.  Category 0 is the baseline and carries no
threshold.

Datasets are compressed to unique rows with multiplicities; every
pseudo-likelihood quantity is a weighted sum over those rows, so the cost
scales with the number of distinct response patterns instead of ``n``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Literal

import numpy as np
from scipy.special import logsumexp

from .exceptions import CapacityError, ConfigError, ValidationError

DEFAULT_ENUM_CAP = 2**24
_CACHE_ENTRIES = 2**23  # max floats held in a cached state-statistics matrix
_CHUNK_STATES = 2**16


def _env_cap(var: str, default: int) -> int:
    raw = os.environ.get(var)
    if raw is None:
        return default
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{var} must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ConfigError(f"{var} must be positive")
    return cap


def enumeration_cap() -> int:
    """Largest state space enumerated exactly (env var ``MRF_ENUM_CAP``)."""
    return _env_cap("MRF_ENUM_CAP", DEFAULT_ENUM_CAP)


@dataclass(frozen=True)
class ModelSpec:
    """Dimensions of an ordinal MRF with ``p`` variables taking values 0..m."""

    p: int
    m: int

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ConfigError(f"p must be a positive integer, got {self.p!r}")
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"m must be a positive integer, got {self.m!r}")

    @property
    def n_thresholds(self) -> int:
        return self.p * self.m

    @property
    def n_interactions(self) -> int:
        return self.p * (self.p - 1) // 2

    @property
    def d(self) -> int:
        return self.n_thresholds + self.n_interactions

    @property
    def n_states(self) -> int:
        return (self.m + 1) ** self.p

    @cached_property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-major ``(i, j)`` index arrays of the unordered pairs ``i < j``."""
        return np.triu_indices(self.p, 1)

    def threshold_index(self, i: int, h: int) -> int:
        if not (0 <= i < self.p and 1 <= h <= self.m):
            raise IndexError(f"no threshold ({i}, {h}) for {self}")
        return i * self.m + h - 1

    def interaction_index(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        if not (0 <= i < j < self.p):
            raise IndexError(f"no interaction ({i}, {j}) for {self}")
        # offset of row i in the strict upper triangle
        row = i * self.p - i * (i + 1) // 2
        return self.n_thresholds + row + (j - i - 1)

    def role(self, k: int) -> tuple[str, int, int]:
        """Inverse of the layout: ``("threshold", i, h)`` or ``("interaction", i, j)``."""
        if not 0 <= k < self.d:
            raise IndexError(k)
        if k < self.n_thresholds:
            i, h = divmod(k, self.m)
            return ("threshold", i, h + 1)
        q = k - self.n_thresholds
        iu, ju = self.pairs
        return ("interaction", int(iu[q]), int(ju[q]))

    def names(self) -> list[str]:
        out = []
        for k in range(self.d):
            kind, a, b = self.role(k)
            out.append(f"mu_{a}_{b}" if kind == "threshold" else f"theta_{a}_{b}")
        return out

    def interaction_slice(self) -> slice:
        return slice(self.n_thresholds, self.d)

    def split(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """Return thresholds as a ``(p, m)`` array and a symmetric zero-diagonal interaction matrix."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d,):
            raise ValidationError(f"parameter vector has shape {theta.shape}, expected ({self.d},)")
        mu = theta[: self.n_thresholds].reshape(self.p, self.m)
        inter = np.zeros((self.p, self.p))
        iu, ju = self.pairs
        inter[iu, ju] = theta[self.n_thresholds:]
        inter[ju, iu] = theta[self.n_thresholds:]
        return mu, inter

    def join(self, mu, inter) -> np.ndarray:
        mu = np.asarray(mu, dtype=float).reshape(self.p, self.m)
        inter = np.asarray(inter, dtype=float)
        iu, ju = self.pairs
        return np.concatenate([mu.ravel(), inter[iu, ju]])

    def edge_mask(self, edges) -> np.ndarray:
        """Boolean mask over the parameter vector: thresholds and listed edges are free."""
        mask = np.zeros(self.d, dtype=bool)
        mask[: self.n_thresholds] = True
        for i, j in edges:
            mask[self.interaction_index(int(i), int(j))] = True
        return mask

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d,):
            raise ValidationError(f"parameter vector has shape {theta.shape}, expected ({self.d},)")
        if not np.all(np.isfinite(theta)):
            raise ValidationError("parameter vector has non-finite entries")
        return theta


class Dataset:
    """An ``n x p`` matrix of category codes in ``0..m``.

    Parameters
    ----------
    values : array_like of int
        Observed categories, one row per observation.
    spec : ModelSpec
        Model dimensions the data must conform to.
    """

    def __init__(self, values, spec: ModelSpec):
        arr = np.asarray(values)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise ValidationError(f"data must be a 2-d matrix, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValidationError("data must have at least one row")
        if arr.shape[1] != spec.p:
            raise ValidationError(f"data has {arr.shape[1]} columns, model has p={spec.p}")
        if arr.dtype.kind == "f":
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                bad = np.argwhere(~np.isfinite(arr) | (arr != np.round(arr)))[0]
                raise ValidationError(f"non-integer value at row {bad[0]}, column {bad[1]}")
        elif arr.dtype.kind not in "iub":
            raise ValidationError(f"data must be integer-valued, got dtype {arr.dtype}")
        arr = arr.astype(np.int64)
        bad = (arr < 0) | (arr > spec.m)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise ValidationError(
                f"category {arr[r, c]} out of bounds 0..{spec.m} at row {r}, column {c}"
            )
        arr.setflags(write=False)
        self.values = arr
        self.spec = spec

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.spec.p

    @property
    def m(self) -> int:
        return self.spec.m

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"Dataset(n={self.n}, p={self.spec.p}, m={self.spec.m})"

    @cached_property
    def _compressed(self):
        rows, inverse, counts = np.unique(
            self.values, axis=0, return_inverse=True, return_counts=True
        )
        return rows, counts.astype(float), inverse.reshape(-1)

    @property
    def unique_rows(self) -> np.ndarray:
        return self._compressed[0]

    @property
    def counts(self) -> np.ndarray:
        return self._compressed[1]

    @property
    def row_index(self) -> np.ndarray:
        """Index into :attr:`unique_rows` for every original row."""
        return self._compressed[2]


def as_dataset(data, spec: ModelSpec | None = None) -> Dataset:
    if isinstance(data, Dataset):
        if spec is not None and data.spec != spec:
            raise ValidationError(f"dataset has {data.spec}, expected {spec}")
        return data
    if spec is None:
        raise ValidationError("a ModelSpec is required to interpret a raw matrix")
    return Dataset(data, spec)


@dataclass(frozen=True)
class SuffStats:
    values: np.ndarray
    kind: Literal["full", "pseudo"]
    spec: ModelSpec


@dataclass(frozen=True)
class PriorSpec:
    """Independent zero-mean normal prior with one sd for thresholds and one for interactions."""

    sd_threshold: float = 5.0
    sd_interaction: float = 2.5

    def __post_init__(self):
        for name in ("sd_threshold", "sd_interaction"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"prior {name} must be positive, got {v!r}")

    def sds(self, spec: ModelSpec) -> np.ndarray:
        return np.concatenate([
            np.full(spec.n_thresholds, float(self.sd_threshold)),
            np.full(spec.n_interactions, float(self.sd_interaction)),
        ])


def prior_eval(theta, prior: PriorSpec, spec: ModelSpec):
    """Log-density, gradient and (constant) diagonal curvature of the normal prior."""
    theta = np.asarray(theta, dtype=float)
    sd = prior.sds(spec)
    var = sd * sd
    logdens = float(np.sum(-0.5 * theta * theta / var - np.log(sd) - 0.5 * np.log(2 * np.pi)))
    return logdens, -theta / var, -1.0 / var


def state_statistics(states, spec: ModelSpec) -> np.ndarray:
    """Per-row full sufficient statistics, shape ``(rows, d)``."""
    x = np.asarray(states)
    k = x.shape[0]
    out = np.empty((k, spec.d))
    thr = out[:, : spec.n_thresholds].reshape(k, spec.p, spec.m)
    np.equal(x[:, :, None], np.arange(1, spec.m + 1), out=thr)
    iu, ju = spec.pairs
    np.multiply(x[:, iu], x[:, ju], out=out[:, spec.n_thresholds:])
    return out


def sufficient_statistics(data, spec: ModelSpec | None = None,
                          kind: Literal["full", "pseudo"] = "full") -> SuffStats:
    """Category counts per (variable, non-baseline category) and summed cross products.

    ``kind="pseudo"`` doubles the cross products, as in the exponent of the
    pseudo-likelihood.
    """
    ds = as_dataset(data, spec)
    spec = ds.spec
    if kind not in ("full", "pseudo"):
        raise ValidationError(f"kind must be 'full' or 'pseudo', got {kind!r}")
    s = ds.counts @ state_statistics(ds.unique_rows, spec)
    if kind == "pseudo":
        s[spec.n_thresholds:] *= 2.0
    return SuffStats(values=s, kind=kind, spec=spec)


# ---------------------------------------------------------------------------
# exact enumeration


def all_states(spec: ModelSpec, start: int = 0, stop: int | None = None) -> np.ndarray:
    """States ``start..stop`` in mixed-radix order (last variable fastest)."""
    stop = spec.n_states if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    radix = (spec.m + 1) ** np.arange(spec.p - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // radix) % (spec.m + 1)


def _check_capacity(spec: ModelSpec, cap: int | None = None):
    cap = enumeration_cap() if cap is None else cap
    if spec.n_states > cap:
        raise CapacityError(
            f"(m+1)^p = {spec.n_states} states exceeds the enumeration cap {cap}; "
            "use the pseudo-likelihood, CoRe or DMH methods instead"
        )


@lru_cache(maxsize=16)
def _cached_state_statistics(spec: ModelSpec) -> np.ndarray:
    s = state_statistics(all_states(spec), spec)
    s.setflags(write=False)
    return s


def _state_stat_chunks(spec: ModelSpec):
    if spec.n_states * spec.d <= _CACHE_ENTRIES:
        yield _cached_state_statistics(spec)
        return
    for lo in range(0, spec.n_states, _CHUNK_STATES):
        hi = min(lo + _CHUNK_STATES, spec.n_states)
        yield state_statistics(all_states(spec, lo, hi), spec)


def log_partition_exact(theta, spec: ModelSpec) -> float:
    """``log sum_x exp(s(x)'theta)`` over all ``(m+1)^p`` states."""
    theta = spec.check_theta(theta)
    _check_capacity(spec)
    parts = [logsumexp(chunk @ theta) for chunk in _state_stat_chunks(spec)]
    return float(logsumexp(parts))


def exact_moments(theta, spec: ModelSpec) -> tuple[float, np.ndarray, np.ndarray]:
    """Log partition function, mean and covariance of ``s(x)`` under the model."""
    theta = spec.check_theta(theta)
    _check_capacity(spec)
    log_z = log_partition_exact(theta, spec)
    mean = np.zeros(spec.d)
    second = np.zeros((spec.d, spec.d))
    for chunk in _state_stat_chunks(spec):
        w = np.exp(chunk @ theta - log_z)
        mean += w @ chunk
        second += (chunk * w[:, None]).T @ chunk
    cov = second - np.outer(mean, mean)
    return log_z, mean, 0.5 * (cov + cov.T)


def _support_moments(theta, support_stats: np.ndarray):
    e = support_stats @ theta
    log_z = logsumexp(e)
    w = np.exp(e - log_z)
    mean = w @ support_stats
    centered = support_stats - mean
    cov = (centered * w[:, None]).T @ centered
    return float(log_z), mean, cov


def full_log_likelihood(data, theta, prior: PriorSpec | None = None) -> float:
    """Exact log-likelihood ``s(X)'theta - n log Z(theta)`` (plus log-prior)."""
    ds = as_dataset(data)
    theta = ds.spec.check_theta(theta)
    s = sufficient_statistics(ds).values
    out = float(s @ theta) - ds.n * log_partition_exact(theta, ds.spec)
    if prior is not None:
        out += prior_eval(theta, prior, ds.spec)[0]
    return out


def full_gradient(data, theta) -> np.ndarray:
    """Exact gradient ``s(X) - n E_theta[s]`` of the full log-likelihood."""
    ds = as_dataset(data)
    theta = ds.spec.check_theta(theta)
    _, mean, _ = exact_moments(theta, ds.spec)
    return sufficient_statistics(ds).values - ds.n * mean


def full_hessian(data, theta) -> np.ndarray:
    """Exact Hessian ``-n Cov_theta[s]`` of the full log-likelihood."""
    ds = as_dataset(data)
    _, _, cov = exact_moments(ds.spec.check_theta(theta), ds.spec)
    return -ds.n * cov


def empirical_log_likelihood(data, theta, prior: PriorSpec | None = None) -> float:
    """Full-likelihood form with the partition sum restricted to the distinct observed rows."""
    ds = as_dataset(data)
    theta = ds.spec.check_theta(theta)
    support = state_statistics(ds.unique_rows, ds.spec)
    s = ds.counts @ support
    out = float(s @ theta) - ds.n * float(logsumexp(support @ theta))
    if prior is not None:
        out += prior_eval(theta, prior, ds.spec)[0]
    return out


def empirical_gradient(data, theta) -> np.ndarray:
    ds = as_dataset(data)
    theta = ds.spec.check_theta(theta)
    support = state_statistics(ds.unique_rows, ds.spec)
    _, mean, _ = _support_moments(theta, support)
    return ds.counts @ support - ds.n * mean


def empirical_hessian(data, theta) -> np.ndarray:
    ds = as_dataset(data)
    theta = ds.spec.check_theta(theta)
    support = state_statistics(ds.unique_rows, ds.spec)
    _, _, cov = _support_moments(theta, support)
    return -ds.n * cov


# ---------------------------------------------------------------------------
# pseudo-likelihood


def conditional_probabilities(row, i: int, theta, spec: ModelSpec) -> np.ndarray:
    """``P(X_i = h | x_(-i))`` for ``h = 0..m``."""
    row = np.asarray(row)
    mu, inter = spec.split(theta)
    rest = float(inter[i] @ row)
    logits = np.concatenate([[0.0], mu[i] + np.arange(1, spec.m + 1) * rest])
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def _conditionals(x: np.ndarray, mu: np.ndarray, inter: np.ndarray):
    """Category-1..m logits, log normalisers and probabilities for every row and variable."""
    m = mu.shape[1]
    h = np.arange(1, m + 1, dtype=float)
    rest = x @ inter
    eta = mu[None, :, :] + rest[:, :, None] * h
    top = np.maximum(eta.max(axis=2), 0.0)
    log_norm = top + np.log(np.exp(-top) + np.exp(eta - top[:, :, None]).sum(axis=2))
    prob = np.exp(eta - log_norm[:, :, None])
    return eta, log_norm, prob


def _pseudo_row_logdens(x, eta, log_norm):
    k, p = x.shape
    xi = x.astype(np.int64)
    picked = np.where(
        xi > 0,
        np.take_along_axis(eta, np.maximum(xi - 1, 0)[:, :, None], axis=2)[:, :, 0],
        0.0,
    )
    return (picked - log_norm).sum(axis=1)


def pseudo_log_likelihood(data, theta, prior: PriorSpec | None = None) -> float:
    """Sum over rows and variables of the log full-conditional probabilities."""
    ds = as_dataset(data)
    spec = ds.spec
    theta = spec.check_theta(theta)
    mu, inter = spec.split(theta)
    x = ds.unique_rows.astype(float)
    eta, log_norm, _ = _conditionals(x, mu, inter)
    out = float(ds.counts @ _pseudo_row_logdens(x, eta, log_norm))
    if prior is not None:
        out += prior_eval(theta, prior, spec)[0]
    return out


def _rest_design(x: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """``z[k, i, :]``: derivative of variable i's rest score w.r.t. the parameter vector."""
    k = x.shape[0]
    z = np.zeros((k, spec.p, spec.d))
    iu, ju = spec.pairs
    cols = spec.n_thresholds + np.arange(spec.n_interactions)
    z[:, iu, cols] = x[:, ju]
    z[:, ju, cols] = x[:, iu]
    return z


@dataclass
class PseudoTerms:
    """Pseudo log-likelihood pieces on the unique rows of a dataset."""

    logdens: float
    gradient: np.ndarray
    row_scores: np.ndarray | None = None  # (unique rows, d)
    hessian: np.ndarray | None = None


def pseudo_terms(ds: Dataset, theta: np.ndarray, *, scores: bool = False,
                 hessian: bool = False) -> PseudoTerms:
    spec = ds.spec
    p, m = spec.p, spec.m
    mu, inter = spec.split(theta)
    x = ds.unique_rows.astype(float)
    w = ds.counts
    k = x.shape[0]
    eta, log_norm, prob = _conditionals(x, mu, inter)
    logdens = float(w @ _pseudo_row_logdens(x, eta, log_norm))

    h = np.arange(1, m + 1, dtype=float)
    onehot = x[:, :, None] == h
    resid = onehot - prob                       # (k, p, m)
    delta = x - prob @ h                        # x_i - E[X_i | rest]
    iu, ju = spec.pairs
    inter_scores = delta[:, iu] * x[:, ju] + delta[:, ju] * x[:, iu]
    row_scores = np.concatenate([resid.reshape(k, p * m), inter_scores], axis=1)
    grad = w @ row_scores
    out = PseudoTerms(logdens, grad, row_scores if scores else None)

    if hessian:
        z = _rest_design(x, spec)
        # conditional covariance pieces of the category indicators
        cov_hh = prob[:, :, :, None] * (np.eye(m) - prob[:, :, None, :])   # diag(P) - PP'
        cov_hx = prob * (h - (prob @ h)[:, :, None])                         # Cov(1{X=h}, X)
        var_x = prob @ (h * h) - (prob @ h) ** 2
        info = np.einsum("ki,kid,kie->de", var_x * w[:, None], z, z)
        blocks = np.einsum("k,kigh->igh", w, cov_hh)
        nt = spec.n_thresholds
        for i in range(p):
            sl = slice(i * m, (i + 1) * m)
            info[sl, sl] += blocks[i]
        cross = np.einsum("kih,kid->ihd", cov_hx * w[:, None, None], z).reshape(nt, spec.d)
        info[:nt, :] += cross
        info[:, :nt] += cross.T
        out.hessian = -0.5 * (info + info.T)
    return out


def pseudo_score_and_curvature(data, theta):
    """Gradient, Hessian and per-observation scores of the pseudo log-likelihood.

    Returns
    -------
    gradient : ndarray, shape (d,)
    hessian : ndarray, shape (d, d)
    scores : ndarray, shape (n, d)
        One score row per original observation; they sum to ``gradient``.
    """
    ds = as_dataset(data)
    theta = ds.spec.check_theta(theta)
    t = pseudo_terms(ds, theta, scores=True, hessian=True)
    return t.gradient, t.hessian, t.row_scores[ds.row_index]


def pseudo_gradient(data, theta) -> np.ndarray:
    ds = as_dataset(data)
    return pseudo_terms(ds, ds.spec.check_theta(theta)).gradient


def pseudo_hessian(data, theta) -> np.ndarray:
    ds = as_dataset(data)
    return pseudo_terms(ds, ds.spec.check_theta(theta), hessian=True).hessian


def score_outer_product(data, theta) -> np.ndarray:
    """``U = sum_nu u_nu u_nu'`` over observations."""
    ds = as_dataset(data)
    t = pseudo_terms(ds, ds.spec.check_theta(theta), scores=True)
    u = t.row_scores
    return (u * ds.counts[:, None]).T @ u
