"""Rescaling matrices ``A = Gamma L'`` and post-hoc calibration of pseudo-posterior draws.

``L L' = -(H + H_theta)`` is the pseudo-posterior precision at ``theta*`` and
``Gamma Gamma'`` the target covariance: the prior-corrected sandwich
(Godambe-Huber-White) covariance, or a prior-corrected inverse of a Monte
Carlo estimate of the full-likelihood information.  Inverses are always
formed by triangular solves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import linalg

from .estimate import monte_carlo_hessian
from .exceptions import NumericalError, ValidationError
from .model import ModelSpec, PriorSpec, as_dataset, prior_eval, pseudo_terms

log = logging.getLogger(__name__)

Variant = Literal["GHW", "RM", "MCH"]
_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass(frozen=True)
class CurvatureBundle:
    H: np.ndarray          # pseudo log-likelihood Hessian
    U: np.ndarray          # sum of score outer products
    H_theta: np.ndarray    # diagonal of the log-prior curvature
    eval_point: np.ndarray


@dataclass(frozen=True)
class RescalingMatrix:
    theta_star: np.ndarray
    L_factor: np.ndarray
    Gamma_factor: np.ndarray
    A_inv: np.ndarray
    A_inv_T: np.ndarray
    variant: str = "GHW"

    @property
    def d(self) -> int:
        return self.theta_star.shape[0]

    @property
    def A(self) -> np.ndarray:
        return self.Gamma_factor @ self.L_factor.T

    @property
    def pseudo_covariance(self) -> np.ndarray:
        lt_inv = linalg.solve_triangular(self.L_factor, np.eye(self.d), lower=True)
        return lt_inv.T @ lt_inv

    @property
    def target_covariance(self) -> np.ndarray:
        return self.Gamma_factor @ self.Gamma_factor.T

    def to_beta(self, theta) -> np.ndarray:
        """``beta = A (theta - theta*) + theta*`` (rows of a matrix are mapped independently)."""
        theta = np.asarray(theta, dtype=float)
        return (theta - self.theta_star) @ self.A.T + self.theta_star

    def to_theta(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        return (beta - self.theta_star) @ self.A_inv_T + self.theta_star

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "theta_star": self.theta_star.tolist(),
            "L_factor": self.L_factor.tolist(),
            "Gamma_factor": self.Gamma_factor.tolist(),
            "A_inv": self.A_inv.tolist(),
            "A_inv_T": self.A_inv_T.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RescalingMatrix":
        return cls(
            theta_star=np.asarray(raw["theta_star"], dtype=float),
            L_factor=np.asarray(raw["L_factor"], dtype=float),
            Gamma_factor=np.asarray(raw["Gamma_factor"], dtype=float),
            A_inv=np.asarray(raw["A_inv"], dtype=float),
            A_inv_T=np.asarray(raw["A_inv_T"], dtype=float),
            variant=raw.get("variant", "GHW"),
        )

    @classmethod
    def identity(cls, theta_star) -> "RescalingMatrix":
        theta_star = np.asarray(theta_star, dtype=float)
        eye = np.eye(theta_star.shape[0])
        return cls(theta_star, eye, eye.copy(), eye.copy(), eye.copy(), variant="identity")


def _prior_curvature(prior: PriorSpec | None, spec: ModelSpec, theta) -> np.ndarray:
    if prior is None:
        return np.zeros(spec.d)
    return prior_eval(theta, prior, spec)[2]


def curvature_bundle(data, theta_eval, prior: PriorSpec | None = None) -> CurvatureBundle:
    """Pseudo Hessian, score outer-product sum and prior curvature at one point."""
    ds = as_dataset(data)
    theta = ds.spec.check_theta(theta_eval)
    t = pseudo_terms(ds, theta, scores=True, hessian=True)
    u = t.row_scores
    U = (u * ds.counts[:, None]).T @ u
    return CurvatureBundle(t.hessian, 0.5 * (U + U.T), _prior_curvature(prior, ds.spec, theta),
                           theta.copy())


def _cholesky(mat: np.ndarray, what: str) -> np.ndarray:
    """Lower Cholesky factor with a small diagonal jitter ladder before giving up."""
    mat = 0.5 * (mat + mat.T)
    scale = max(1.0, float(np.mean(np.abs(np.diag(mat)))))
    for jitter in _JITTERS:
        try:
            return linalg.cholesky(mat + jitter * scale * np.eye(mat.shape[0]), lower=True)
        except linalg.LinAlgError:
            continue
    raise NumericalError(f"Cholesky factorisation of {what} failed (matrix not positive definite)")


def ghw_covariance(bundle: CurvatureBundle) -> np.ndarray:
    """Sandwich ``(-H)^-1 U (-H)^-1`` via two solves against ``-H``."""
    neg_h = -np.asarray(bundle.H)
    try:
        fac = linalg.cho_factor(neg_h)
    except linalg.LinAlgError as exc:
        raise NumericalError(
            "-H is not positive definite; add a prior (regularisation) or check for separation"
        ) from exc
    left = linalg.cho_solve(fac, bundle.U)
    sigma = linalg.cho_solve(fac, left.T)
    return 0.5 * (sigma + sigma.T)


def robust_posterior_covariance(bundle: CurvatureBundle) -> np.ndarray:
    """``(Sigma_GHW^-1 - H_theta)^-1``, with ``Sigma_GHW^-1 = (-H) U^-1 (-H)``."""
    neg_h = -np.asarray(bundle.H)
    try:
        inv_ghw = neg_h @ linalg.solve(bundle.U, neg_h, assume_a="pos")
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError("score covariance U is singular") from exc
    prec = 0.5 * (inv_ghw + inv_ghw.T) - np.diag(bundle.H_theta)
    evals = np.linalg.eigvalsh(prec)
    if evals[0] <= 0:
        raise NumericalError(
            f"Sigma_GHW^-1 - H_theta is not positive definite (smallest eigenvalue {evals[0]:.3g})"
        )
    fac = linalg.cho_factor(prec, lower=True)
    cov = linalg.cho_solve(fac, np.eye(prec.shape[0]))
    return 0.5 * (cov + cov.T)


def rescaling_from_factors(theta_star, L, Gamma, variant: str = "custom") -> RescalingMatrix:
    """Rescaling matrix ``A = Gamma L'`` from given lower-triangular factors."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    d = L.shape[0]
    eye = np.eye(d)
    gamma_tilde = linalg.solve_triangular(Gamma, eye, lower=True)     # Gamma^-1
    l_tilde = linalg.solve_triangular(L.T, eye, lower=False)           # L^-T
    a_inv = l_tilde @ gamma_tilde
    a_inv_t = gamma_tilde.T @ l_tilde.T
    return RescalingMatrix(np.array(theta_star, dtype=float), L, Gamma, a_inv, a_inv_t, variant)


def _ghw_factors(bundle: CurvatureBundle):
    """Both Cholesky factors following the solve-based update recipe."""
    neg_h = -bundle.H
    try:
        z = linalg.solve(bundle.U, neg_h, assume_a="sym")               # U Z = -H
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError("score covariance U is singular") from exc
    prec = neg_h @ z - np.diag(bundle.H_theta)
    prec_l = _cholesky(prec, "the robust posterior precision")
    cov = linalg.cho_solve((prec_l, True), np.eye(prec.shape[0]))
    gamma = _cholesky(cov, "Gamma Gamma' (robust posterior covariance)")
    L = _cholesky(neg_h - np.diag(bundle.H_theta), "L L' = -(H + H_theta)")
    return L, gamma


def rescaling_from_curvature(bundle: CurvatureBundle, theta_star=None) -> RescalingMatrix:
    """GHW rescaling from precomputed curvature pieces (anchored at the evaluation point by default)."""
    L, gamma = _ghw_factors(bundle)
    anchor = bundle.eval_point if theta_star is None else theta_star
    return rescaling_from_factors(anchor, L, gamma, "GHW")


def build_rescaling(data, theta_star, prior: PriorSpec | None = None, variant: Variant = "GHW",
                    mc_samples: int | None = None, *, seed=None, mc_hessian=None
                    ) -> RescalingMatrix:
    """Rescaling matrix at ``theta_star`` for the GHW, RM or MCH target covariance.

    For ``RM``/``MCH`` the target covariance is ``((-H_MC) - H_theta)^-1``
    with ``H_MC`` the Monte Carlo full-likelihood Hessian at ``theta_star``
    (pass the RM optimum as ``theta_star`` for the RM variant).  A
    precomputed ``mc_hessian`` skips the simulation.
    """
    ds = as_dataset(data)
    spec = ds.spec
    theta_star = spec.check_theta(theta_star)
    bundle = curvature_bundle(ds, theta_star, prior)
    if variant == "GHW":
        L, gamma = _ghw_factors(bundle)
    elif variant in ("RM", "MCH"):
        if mc_hessian is None:
            if mc_samples is None:
                raise ValidationError(f"variant {variant} requires mc_samples")
            mc_hessian = monte_carlo_hessian(theta_star, spec, ds.n, mc_samples,
                                             init=ds, seed=seed)
        prec = -np.asarray(mc_hessian) - np.diag(bundle.H_theta)
        prec_l = _cholesky(prec, f"the {variant} Monte Carlo precision")
        cov = linalg.cho_solve((prec_l, True), np.eye(spec.d))
        gamma = _cholesky(cov, f"Gamma Gamma' ({variant} covariance)")
        L = _cholesky(-(bundle.H + np.diag(bundle.H_theta)), "L L' = -(H + H_theta)")
    else:
        raise ValidationError(f"unknown rescaling variant {variant!r}")
    return rescaling_from_factors(theta_star, L, gamma, variant)


def update_rescaling(running_mean, data, prior: PriorSpec | None = None,
                     previous: RescalingMatrix | None = None) -> RescalingMatrix:
    """GHW rescaling re-evaluated at the running mean (adaptive burn-in update).

    When a factorisation fails and ``previous`` is given, the previous matrix
    is returned and a warning logged.
    """
    ds = as_dataset(data)
    try:
        return rescaling_from_curvature(curvature_bundle(ds, running_mean, prior))
    except NumericalError as exc:
        if previous is None:
            raise
        log.warning("rescaling update failed at running mean, keeping previous matrix: %s", exc)
        return previous


def post_hoc_calibrate(draws, theta_star, L_factor, Gamma_factor,
                       center: Literal["mode", "mean"] = "mode", location=None) -> np.ndarray:
    """Affine calibration ``Gamma L' (theta - c) + loc`` of every draw.

    ``c`` is ``theta_star`` (``center="mode"``) or the draw mean
    (``center="mean"``); ``loc`` defaults to ``c``.
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    theta_star = np.asarray(theta_star, dtype=float)
    L = np.atleast_2d(np.asarray(L_factor, dtype=float))
    gamma = np.atleast_2d(np.asarray(Gamma_factor, dtype=float))
    d = draws.shape[1]
    if L.shape != (d, d) or gamma.shape != (d, d) or theta_star.shape != (d,):
        raise ValidationError(
            f"factor shapes {L.shape}, {gamma.shape} and theta* {theta_star.shape} "
            f"do not match draws with d={d}"
        )
    if center == "mode":
        c = theta_star
    elif center == "mean":
        c = draws.mean(axis=0)
    else:
        raise ValidationError(f"center must be 'mode' or 'mean', got {center!r}")
    loc = c if location is None else np.asarray(location, dtype=float)
    a = gamma @ L.T
    return (draws - c) @ a.T + loc
