"""Posterior comparison metrics: density overlap, Savage-Dickey factors, ESS, correlations."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .exceptions import ValidationError

GRID_POINTS = 512
_BF_FLOOR = 1e-12


def silverman_bandwidth(x) -> float:
    """``0.9 min(sd, IQR/1.34) S^(-1/5)``, falling back to ``sd`` or 1e-8 for degenerate samples."""
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread <= 0:
        spread = 1e-8
    return 0.9 * spread * x.size ** (-0.2)


@dataclass
class DensityEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    samples: np.ndarray = field(repr=False)

    def __call__(self, points) -> np.ndarray:
        points = np.atleast_1d(np.asarray(points, dtype=float))
        z = (points[:, None] - self.samples[None, :]) / self.bandwidth
        return np.exp(-0.5 * z * z).sum(axis=1) / (self.samples.size * self.bandwidth * np.sqrt(2 * np.pi))

    @property
    def mode(self) -> float:
        return float(self.grid[np.argmax(self.density)])


MIN_DRAWS = 30
MIN_ESS_DRAWS = 100


def _check_samples(x, what="samples", minimum=2, varying=False):
    x = np.asarray(x, dtype=float).ravel()
    if x.size < minimum:
        raise ValidationError(f"{what} need at least {minimum} values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{what} contain non-finite values")
    if varying and np.ptp(x) == 0:
        raise ValidationError(f"{what} have zero variance")
    return x


def kde(x, grid=None, bandwidth: float | None = None) -> DensityEstimate:
    """Gaussian kernel density estimate on a 512-point grid padded by three bandwidths."""
    x = _check_samples(x)
    bw = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if grid is None:
        grid = np.linspace(x.min() - 3 * bw, x.max() + 3 * bw, GRID_POINTS)
    est = DensityEstimate(np.asarray(grid, dtype=float), np.empty(0), bw, x)
    est.density = _evaluate_chunked(est, est.grid)
    return est


def _evaluate_chunked(est: DensityEstimate, points, chunk: int = 64) -> np.ndarray:
    return np.concatenate([est(points[i:i + chunk]) for i in range(0, len(points), chunk)])


def overlap_index(a, b) -> float:
    """Overlap ``integral min(f_a, f_b)`` of two KDEs on a shared grid, clamped to [0, 1]."""
    a = _check_samples(a, "first sample", MIN_DRAWS, varying=True)
    b = _check_samples(b, "second sample", MIN_DRAWS, varying=True)
    bw_a, bw_b = silverman_bandwidth(a), silverman_bandwidth(b)
    pad = 3 * max(bw_a, bw_b)
    grid = np.linspace(min(a.min(), b.min()) - pad, max(a.max(), b.max()) + pad, GRID_POINTS)
    fa = kde(a, grid, bw_a).density
    fb = kde(b, grid, bw_b).density
    return float(np.clip(np.trapezoid(np.minimum(fa, fb), grid), 0.0, 1.0))


def savage_dickey(draws, prior_sd: float, value: float = 0.0, return_flag: bool = False):
    """Bayes factor ``BF_01 = posterior density at value / prior density at value``.

    The posterior density is floored at 1e-12 so that the log factor stays
    finite when ``value`` lies far outside the draws. With ``return_flag`` the
    result is ``(bf, floored)``.
    """
    draws = _check_samples(draws, "draws", MIN_DRAWS, varying=True)
    if prior_sd <= 0:
        raise ValidationError("prior_sd must be positive")
    post = float(kde(draws, grid=np.array([value])).density[0])
    floored = post < _BF_FLOOR
    bf = max(post, _BF_FLOOR) / stats.norm.pdf(value, scale=prior_sd)
    return (bf, floored) if return_flag else bf


def sd_ratio(draws, reference) -> np.ndarray:
    """Per-coordinate ratio of posterior standard deviations."""
    a = _as_columns(draws)
    b = _as_columns(reference)
    if min(len(a), len(b)) < MIN_DRAWS:
        raise ValidationError(f"sd_ratio needs at least {MIN_DRAWS} draws")
    ref_sd = np.std(b, axis=0, ddof=1)
    if np.any(ref_sd == 0):
        raise ValidationError("reference draws have zero standard deviation")
    return np.std(a, axis=0, ddof=1) / ref_sd


def _as_columns(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def ess(x) -> float:
    """Effective sample size by Geyer's initial positive sequence, clamped to ``(0, S]``."""
    x = _check_samples(x, "chain column", MIN_ESS_DRAWS, varying=True)
    n = x.size
    c = x - x.mean()
    var = float(c @ c) / n
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(c, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / (n * var)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    tau = max(tau, 1.0 / n)
    return float(min(n, n / tau))


def ess_matrix(draws) -> np.ndarray:
    return np.array([ess(col) for col in _as_columns(draws).T])


def posterior_correlations(draws) -> np.ndarray:
    """Pearson correlation matrix of the columns of ``draws`` (accepts a ``Chain``).

    Entries involving a constant column are NaN.
    """
    x = _as_columns(getattr(draws, "retained", draws))
    if len(x) < MIN_ESS_DRAWS:
        raise ValidationError(f"correlations need at least {MIN_ESS_DRAWS} draws")
    c = x - x.mean(axis=0)
    sd = np.sqrt((c * c).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (c.T @ c) / np.outer(sd, sd)
    r[:, sd == 0] = np.nan
    r[sd == 0, :] = np.nan
    return np.clip(r, -1.0, 1.0)


def half_sample_mode(x) -> float:
    """Robust mode estimate by recursively keeping the densest half of the sorted sample."""
    y = np.sort(np.asarray(x, dtype=float).ravel())
    if y.size == 0:
        raise ValidationError("half_sample_mode of an empty sample")
    while y.size > 3:
        h = (y.size + 1) // 2
        widths = y[h - 1:] - y[:y.size - h + 1]
        i = int(np.argmin(widths))
        y = y[i:i + h]
    if y.size == 3:
        if y[1] - y[0] < y[2] - y[1]:
            return float(0.5 * (y[0] + y[1]))
        if y[1] - y[0] > y[2] - y[1]:
            return float(0.5 * (y[1] + y[2]))
        return float(y[1])
    return float(y.mean())


def kde_mode(x) -> float:
    return kde(x).mode


@dataclass
class MetricsReport:
    names: list[str]
    method: str
    eta: np.ndarray | None = None
    sd_ratio: np.ndarray | None = None
    ess: np.ndarray | None = None
    log_bf01: np.ndarray | None = None
    acceptance_rate: float | None = None
    wall_time_seconds: float | None = None
    extra: dict = field(default_factory=dict)

    def _columns(self):
        return {k: getattr(self, k) for k in ("eta", "sd_ratio", "ess", "log_bf01")
                if getattr(self, k) is not None}

    def to_dict(self) -> dict:
        out = {"method": self.method, "names": list(self.names),
               "acceptance_rate": self.acceptance_rate,
               "wall_time_seconds": self.wall_time_seconds}
        out.update({k: np.asarray(v).tolist() for k, v in self._columns().items()})
        out["extra"] = self.extra
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_long_csv(self) -> str:
        """One row per (parameter, metric)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "parameter", "metric", "value"])
        for metric, values in self._columns().items():
            for name, v in zip(self.names, np.asarray(values)):
                w.writerow([self.method, name, metric, repr(float(v))])
        return buf.getvalue()


def build_report(chain, names, reference=None, prior_sds=None, bf_mask=None) -> MetricsReport:
    """Metrics of one chain, optionally against a reference chain.

    ``prior_sds`` enables Savage-Dickey factors for the coordinates selected by
    ``bf_mask`` (all coordinates by default); the others are NaN.
    """
    draws = _as_columns(getattr(chain, "retained", chain))
    d = draws.shape[1]
    if len(names) != d:
        raise ValidationError(f"{len(names)} names for {d} parameters")
    rep = MetricsReport(list(names), getattr(chain, "method", "unknown"))
    flags: dict[str, list[str]] = {}

    def each(metric, fn):
        out = np.full(d, np.nan)
        for k in range(d):
            try:
                out[k] = fn(k)
            except ValidationError:
                flags.setdefault(metric, []).append(rep.names[k])
        return out

    rep.ess = each("ess", lambda k: ess(draws[:, k]))
    rep.acceptance_rate = getattr(chain, "acceptance_rate", None)
    rep.wall_time_seconds = getattr(chain, "wall_time_seconds", None)
    if reference is not None:
        ref = _as_columns(getattr(reference, "retained", reference))
        if ref.shape[1] != d:
            raise ValidationError("reference chain has a different dimension")
        rep.eta = each("eta", lambda k: overlap_index(draws[:, k], ref[:, k]))
        rep.sd_ratio = each("sd_ratio", lambda k: sd_ratio(draws[:, k], ref[:, k])[0])
    if prior_sds is not None:
        prior_sds = np.broadcast_to(np.asarray(prior_sds, dtype=float), (d,))
        mask = np.ones(d, dtype=bool) if bf_mask is None else np.asarray(bf_mask, dtype=bool)
        floored = []

        def log_bf(k):
            if not mask[k]:
                return np.nan
            bf, low = savage_dickey(draws[:, k], prior_sds[k], return_flag=True)
            if low:
                floored.append(rep.names[k])
            return np.log(bf)

        rep.log_bf01 = each("log_bf01", log_bf)
        if floored:
            flags["log_bf01_floored"] = floored
    if flags:
        rep.extra["flags"] = flags
    return rep
