"""Closed-form Gaussian reference for the quadratic interaction functional.

For drift kappa*x + eps*mean(m) the mean-field law started from a Gaussian
stays Gaussian, so the full dynamics reduces to a mean ODE plus a covariance
Lyapunov ODE on phase space (x then v).  This module propagates those
moments and evaluates, in closed form, every quantity the convergence
theory speaks about: relative entropy, relative Fisher information,
quadratic Wasserstein distance, the free-energy gap to the invariant law,
and the mixed hypocoercive Fisher functional.

Conventions: the entropy in the free energy is int m log m (negative
differential entropy); Wasserstein values are squared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    IndefiniteCoefficientsError,
    ParameterError,
    StepTooLargeError,
)

_SYM_TOL = 1e-12
_EIG_FLOOR = 1e-14
_EIG_NEG_LIMIT = -1e-8


@dataclass(frozen=True)
class GaussianMoments:
    """Mean and covariance of a Gaussian law on phase space (x then v)."""

    mean: np.ndarray
    cov: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        mu = np.asarray(self.mean, dtype=np.float64)
        sigma = np.asarray(self.cov, dtype=np.float64)
        if mu.ndim != 1 or mu.shape[0] < 2 or mu.shape[0] % 2 != 0:
            raise DimensionMismatchError(
                f"mean must be a vector of even length >= 2, got shape {mu.shape}"
            )
        k = mu.shape[0]
        if sigma.shape != (k, k):
            raise DimensionMismatchError(f"cov shape {sigma.shape}, expected ({k}, {k})")
        if not np.isfinite(mu).all() or not np.isfinite(sigma).all():
            raise ParameterError("moments contain non-finite entries")
        asym = np.abs(sigma - sigma.T).max()
        if asym > _SYM_TOL * max(1.0, np.abs(sigma).max()):
            raise ParameterError(f"cov is not symmetric (max asymmetry {asym:.3e})")
        sigma = 0.5 * (sigma + sigma.T)
        lo = np.linalg.eigvalsh(sigma)[0]
        if not lo > 0:
            raise ParameterError(f"cov must be positive definite (min eigenvalue {lo:.3e})")
        mu = mu.copy(); mu.setflags(write=False)
        sigma = sigma.copy(); sigma.setflags(write=False)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "cov", sigma)

    @property
    def phase_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def dim(self) -> int:
        return self.mean.shape[0] // 2


def invariant_moments(kappa: float, dim: int) -> GaussianMoments:
    """Invariant Gaussian law: x ~ N(0, I/kappa) independent of v ~ N(0, I)."""
    if not kappa > 0:
        raise ParameterError(f"kappa must be positive, got {kappa}")
    cov = np.diag(np.concatenate([np.full(dim, 1.0 / kappa), np.ones(dim)]))
    return GaussianMoments(np.zeros(2 * dim), cov)


def _drift_matrices(kappa: float, eps: float, dim: int):
    z = np.zeros((dim, dim))
    eye = np.eye(dim)
    # mean feels the full coupling kappa + eps; fluctuations only kappa
    a_mean = np.block([[z, eye], [-(kappa + eps) * eye, -eye]])
    a_cov = np.block([[z, eye], [-kappa * eye, -eye]])
    q = np.block([[z, z], [z, 2.0 * eye]])
    return a_mean, a_cov, q


def propagate_moments(
    init: GaussianMoments,
    kappa: float,
    eps: float,
    horizon: float,
    ode_dt: float,
) -> GaussianMoments:
    """Integrate the mean and covariance ODEs to the horizon with RK4.

    d mu/dt = A_mean mu,  d Sigma/dt = A Sigma + Sigma A^T + diag(0, 2I).
    Raises StepTooLargeError if the covariance loses positive-definiteness.
    """
    if not horizon >= 0:
        raise ParameterError(f"horizon must be nonnegative, got {horizon}")
    if not ode_dt > 0:
        raise ParameterError(f"ode_dt must be positive, got {ode_dt}")
    if horizon == 0.0:
        return init
    a_mean, a_cov, q = _drift_matrices(kappa, eps, init.dim)
    n = max(1, math.ceil(horizon / ode_dt - 1e-9))
    h = horizon / n
    mu = init.mean.copy()
    sigma = init.cov.copy()

    def rhs(m, s):
        return a_mean @ m, a_cov @ s + s @ a_cov.T + q

    for _ in range(n):
        k1m, k1s = rhs(mu, sigma)
        k2m, k2s = rhs(mu + 0.5 * h * k1m, sigma + 0.5 * h * k1s)
        k3m, k3s = rhs(mu + 0.5 * h * k2m, sigma + 0.5 * h * k2s)
        k4m, k4s = rhs(mu + h * k3m, sigma + h * k3s)
        mu = mu + (h / 6.0) * (k1m + 2 * k2m + 2 * k3m + k4m)
        sigma = sigma + (h / 6.0) * (k1s + 2 * k2s + 2 * k3s + k4s)
        sigma = 0.5 * (sigma + sigma.T)
        lo = np.linalg.eigvalsh(sigma)[0]
        if not lo > 0:
            raise StepTooLargeError(
                f"covariance lost positivity (min eigenvalue {lo:.3e}); reduce ode_dt"
            )
    return GaussianMoments(mu, sigma, time=init.time + horizon)


def propagate_trajectory(
    init: GaussianMoments,
    kappa: float,
    eps: float,
    times,
    ode_dt: float,
) -> list[GaussianMoments]:
    """Moments at each requested time (nondecreasing, starting at init.time)."""
    out = []
    current = init
    last_t = init.time
    for t in times:
        if t < last_t - 1e-12:
            raise ParameterError("times must be nondecreasing")
        current = propagate_moments(current, kappa, eps, max(0.0, t - last_t), ode_dt)
        last_t = t
        out.append(current)
    return out


def _check_same_dim(a: GaussianMoments, b: GaussianMoments):
    if a.phase_dim != b.phase_dim:
        raise DimensionMismatchError(
            f"phase dimensions differ: {a.phase_dim} vs {b.phase_dim}"
        )


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    if vals.min() < _EIG_NEG_LIMIT:
        raise ParameterError(f"matrix is not PSD (eigenvalue {vals.min():.3e})")
    vals = np.clip(vals, _EIG_FLOOR, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def gaussian_relative_entropy(a: GaussianMoments, b: GaussianMoments) -> float:
    """KL divergence H(a | b) between Gaussian laws."""
    _check_same_dim(a, b)
    k = a.phase_dim
    b_inv = np.linalg.inv(b.cov)
    delta = b.mean - a.mean
    _, logdet_a = np.linalg.slogdet(a.cov)
    _, logdet_b = np.linalg.slogdet(b.cov)
    return 0.5 * (
        float(np.trace(b_inv @ a.cov)) + float(delta @ b_inv @ delta) - k + logdet_b - logdet_a
    )


def gaussian_relative_fisher(a: GaussianMoments, b: GaussianMoments) -> float:
    """I(a | b) = E_a | grad log a - grad log b |^2 in closed form."""
    _check_same_dim(a, b)
    a_inv = np.linalg.inv(a.cov)
    b_inv = np.linalg.inv(b.cov)
    g = b_inv - a_inv
    h = b_inv @ (a.mean - b.mean)
    return float(np.trace(g @ a.cov @ g)) + float(h @ h)


def gaussian_w2(a: GaussianMoments, b: GaussianMoments) -> float:
    """Squared quadratic Wasserstein distance between Gaussian laws."""
    _check_same_dim(a, b)
    delta = a.mean - b.mean
    rb = _psd_sqrt(b.cov)
    cross = _psd_sqrt(rb @ a.cov @ rb)
    val = float(delta @ delta) + float(np.trace(a.cov + b.cov - 2.0 * cross))
    # tiny negatives from eigen clamping
    return max(val, 0.0)


def _neg_entropy(cov: np.ndarray) -> float:
    """int m log m for a Gaussian with this covariance."""
    k = cov.shape[0]
    _, logdet = np.linalg.slogdet(cov)
    return -0.5 * (k * math.log(2.0 * math.pi * math.e) + logdet)


def free_energy(a: GaussianMoments, kappa: float, eps: float) -> float:
    """Energy + kinetic term + entropy of a Gaussian phase-space law."""
    d = a.dim
    mu_x, mu_v = a.mean[:d], a.mean[d:]
    cov_xx = a.cov[:d, :d]
    cov_vv = a.cov[d:, d:]
    functional = 0.5 * kappa * (float(np.trace(cov_xx)) + float(mu_x @ mu_x)) + 0.5 * eps * float(
        mu_x @ mu_x
    )
    kinetic = 0.5 * (float(np.trace(cov_vv)) + float(mu_v @ mu_v))
    return functional + kinetic + _neg_entropy(a.cov)


def free_energy_gap(a: GaussianMoments, kappa: float, eps: float) -> float:
    """Free energy of ``a`` minus that of the invariant law; the Lyapunov gap."""
    if not kappa > 0:
        raise ParameterError(f"kappa must be positive, got {kappa}")
    ref = invariant_moments(kappa, a.dim)
    return free_energy(a, kappa, eps) - free_energy(ref, kappa, eps)


def herau_functional(a: GaussianMoments, coeffs, reference: GaussianMoments) -> float:
    """Mixed Fisher functional E_a[ ca|s_v|^2 + 2 cb s_v.s_x + cc|s_x|^2 ].

    Here s = grad log(a/reference) split into its x and v blocks.  The
    coefficient triple must satisfy ca > 0 and ca*cc > cb^2 so the quadratic
    form is positive definite.
    """
    _check_same_dim(a, reference)
    ca, cb, cc = (float(c) for c in coeffs)
    if not (ca > 0 and ca * cc > cb * cb):
        raise IndefiniteCoefficientsError(
            f"coefficients (a={ca}, b={cb}, c={cc}) must satisfy a > 0 and a*c > b^2"
        )
    d = a.dim
    eye = np.eye(d)
    z = np.zeros((d, d))
    weight = np.block([[cc * eye, cb * eye], [cb * eye, ca * eye]])
    a_inv = np.linalg.inv(a.cov)
    r_inv = np.linalg.inv(reference.cov)
    g = r_inv - a_inv
    h = r_inv @ (a.mean - reference.mean)
    return float(np.trace(g @ weight @ g @ a.cov)) + float(h @ weight @ h)


def talagrand_constant(kappa: float) -> float:
    """Sharp transport constant c with c * W2^2(m, m_inf) <= H(m | m_inf).

    For the Gaussian invariant law the constant is 1/(2*lambda_max(cov)),
    the log-Sobolev constant of that Gaussian; translations attain equality.
    """
    if not kappa > 0:
        raise ParameterError(f"kappa must be positive, got {kappa}")
    lam_max = max(1.0 / kappa, 1.0)
    return 1.0 / (2.0 * lam_max)


def sample(moments: GaussianMoments, n: int, seed: int) -> np.ndarray:
    """n i.i.d. phase-space draws, deterministic in the seed."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return rng.multivariate_normal(moments.mean, moments.cov, size=n, method="cholesky")
