"""Structured forecast-error covariance and scenario sampling.

The error vector stacks renewable errors over load errors (length ``2T``).
The covariance estimate is the Frobenius-nearest matrix to the sample
covariance that (a) has identical ``r x r`` diagonal blocks inside each of
the renew and load blocks and (b) has every eigenvalue at least ``eps``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import ValidationError
from .domain import ForecastBundle
from .planning.stochastic import ScenarioSet

OFFDIAG_MODES = ("zero", "keep")


def _sym(W: np.ndarray) -> np.ndarray:
    return 0.5 * (W + W.T)


def _check_square(W, name="W") -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {W.shape}", name)
    return W


def default_floor(C: np.ndarray) -> float:
    """Scale-aware eigenvalue floor: 1e-6 times the mean variance."""
    scale = abs(float(np.trace(C))) / C.shape[0]
    return 1e-6 * scale if scale > 0 else 1e-10


@dataclass(frozen=True)
class ErrorModel:
    """Gaussian model of stacked (renew, load) forecast errors."""

    mu: np.ndarray
    sigma: np.ndarray
    block_size: int = 96
    num_blocks: int = 7
    psd_floor: float = 1e-8

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        sigma = _check_square(self.sigma, "sigma")
        n = 2 * self.block_size * self.num_blocks
        if mu.shape != (n,) or sigma.shape != (n, n):
            raise ValidationError(
                f"expected mu of length {n} and sigma {n}x{n} for block_size="
                f"{self.block_size}, num_blocks={self.num_blocks}", "error_model")
        if not np.allclose(sigma, sigma.T, atol=1e-10, rtol=0):
            raise ValidationError("sigma must be symmetric", "error_model.sigma")
        if not self.psd_floor > 0:
            raise ValidationError("must be > 0", "error_model.psd_floor")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", _sym(sigma))

    @property
    def T(self) -> int:
        return self.block_size * self.num_blocks

    def min_eigenvalue(self) -> float:
        return float(linalg.eigvalsh(self.sigma)[0])

    def is_block_constant(self, offdiag: str = "zero", atol: float = 0.0) -> bool:
        P = project_block_constant(self.sigma, self.block_size, self.num_blocks, offdiag)
        return bool(np.max(np.abs(P - self.sigma)) <= atol)


@dataclass(frozen=True)
class AdmmSettings:
    rho: float = 1.0
    epsilon: float | None = None  # None -> default_floor(C)
    max_iters: int = 5000
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    offdiag: str = "zero"

    def __post_init__(self):
        for name in ("rho", "tol_primal", "tol_dual"):
            if not getattr(self, name) > 0:
                raise ValidationError("must be > 0", f"admm.{name}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValidationError("must be > 0", "admm.epsilon")
        if self.max_iters < 1:
            raise ValidationError("must be >= 1", "admm.max_iters")
        if self.offdiag not in OFFDIAG_MODES:
            raise ValidationError(f"must be one of {OFFDIAG_MODES}", "admm.offdiag")


class CovarianceResult(NamedTuple):
    sigma: np.ndarray
    converged: bool
    iterations: int
    primal_residual: float
    dual_residual: float
    epsilon: float


def sample_error_covariance(errors) -> np.ndarray:
    """Unbiased sample covariance of a ``K x 2T`` error matrix."""
    E = np.asarray(errors, dtype=float)
    if E.ndim != 2:
        raise ValidationError("error matrix must be 2-D (samples x variables)", "errors")
    if E.shape[0] < 2:
        raise ValidationError(f"need at least 2 samples, got {E.shape[0]}", "errors")
    return _sym(np.cov(E, rowvar=False, ddof=1))


def project_block_constant(W, r: int, D: int, offdiag: str = "zero") -> np.ndarray:
    """Frobenius projection onto block-constant structured matrices.

    Inside the renew-renew and load-load blocks the ``D`` diagonal ``r x r``
    blocks are replaced by their mean; their off-diagonal blocks are zeroed
    (``offdiag="zero"``) or left alone (``"keep"``). The cross block is copied.
    """
    W = _check_square(W)
    T = r * D
    if r < 1 or D < 1 or W.shape != (2 * T, 2 * T):
        raise ValidationError(f"expected a {2 * T}x{2 * T} matrix for r={r}, D={D}, "
                              f"got {W.shape}", "W")
    if offdiag not in OFFDIAG_MODES:
        raise ValidationError(f"must be one of {OFFDIAG_MODES}", "offdiag")
    W = _sym(W)
    X = W.copy()
    for start in (0, T):
        sub = W[start:start + T, start:start + T]
        blocks = sub.reshape(D, r, D, r)
        mean = np.einsum("iaib->ab", blocks) / D
        if offdiag == "zero":
            X[start:start + T, start:start + T] = np.kron(np.eye(D), mean)
        else:
            for d in range(D):
                s = start + d * r
                X[s:s + r, s:s + r] = mean
    return X


def project_psd_floor(W, eps: float) -> np.ndarray:
    """Clip the eigenvalues of symmetric ``W`` from below at ``eps``."""
    W = _sym(_check_square(W))
    vals, vecs = linalg.eigh(W, driver="evr", check_finite=False)
    if vals[0] >= eps:
        return W
    vals = np.maximum(vals, eps)
    return _sym((vecs * vals) @ vecs.T)


def _finalize(Z, r, D, eps, offdiag) -> np.ndarray:
    # back onto the block structure exactly, then lift the spectrum by a
    # multiple of I, which is itself block-constant
    X = project_block_constant(Z, r, D, offdiag)
    lam = float(linalg.eigvalsh(X)[0])
    if lam < eps:
        X = X + (eps - lam) * np.eye(X.shape[0])
    return X


def admm_covariance(C, r: int, D: int, settings: AdmmSettings | None = None) -> CovarianceResult:
    """Nearest block-constant, eigenvalue-floored matrix to ``C`` by ADMM."""
    settings = settings or AdmmSettings()
    C = _sym(_check_square(C, "C"))
    eps = settings.epsilon if settings.epsilon is not None else default_floor(C)
    rho = settings.rho
    X, Z, U = C.copy(), C.copy(), np.zeros_like(C)
    r_norm = s_norm = np.inf
    k = 0
    converged = False
    for k in range(1, settings.max_iters + 1):
        X = project_block_constant((C + rho * (Z - U)) / (rho + 1.0), r, D, settings.offdiag)
        Z_new = project_psd_floor(X + U, eps)
        U = U + X - Z_new
        r_norm = float(np.linalg.norm(X - Z_new))
        s_norm = rho * float(np.linalg.norm(Z_new - Z))
        Z = Z_new
        if r_norm <= settings.tol_primal and s_norm <= settings.tol_dual:
            converged = True
            break
    return CovarianceResult(_finalize(Z, r, D, eps, settings.offdiag), converged, k,
                            r_norm, s_norm, eps)


def dykstra_covariance(C, r: int, D: int, eps: float | None = None, iters: int = 20000,
                       tol: float = 1e-12, offdiag: str = "zero") -> np.ndarray:
    """Projection of ``C`` onto the same intersection by Dykstra's algorithm."""
    C = _sym(_check_square(C, "C"))
    eps = eps if eps is not None else default_floor(C)
    x = C.copy()
    p = np.zeros_like(C)
    q = np.zeros_like(C)
    for _ in range(iters):
        y = project_block_constant(x + p, r, D, offdiag)
        p = x + p - y
        x_new = project_psd_floor(y + q, eps)
        q = y + q - x_new
        change = float(np.linalg.norm(x_new - x))
        x = x_new
        if change <= tol and float(np.linalg.norm(x - y)) <= tol:
            break
    return _finalize(x, r, D, eps, offdiag)


def sample_errors(error_model: ErrorModel, n: int, seed: int) -> np.ndarray:
    """``n`` pre-clamp error draws ``mu + L z`` (rows), one RNG substream per draw."""
    if n < 1:
        raise ValidationError("must be >= 1", "n_scenarios")
    try:
        L = linalg.cholesky(error_model.sigma, lower=True)
    except linalg.LinAlgError as exc:
        raise ValidationError(f"sigma is not positive definite: {exc}",
                              "error_model.sigma") from exc
    streams = np.random.SeedSequence(seed).spawn(n)
    dim = error_model.mu.size
    Z = np.stack([np.random.default_rng(s).standard_normal(dim) for s in streams])
    return error_model.mu + Z @ L.T


def draw_scenarios(forecast: ForecastBundle, error_model: ErrorModel, n: int, seed: int,
                   pv_capacity: float = 15.0) -> ScenarioSet:
    """Perturb a point forecast with sampled errors and clamp to physical ranges."""
    T = len(forecast)
    if error_model.T != T:
        raise ValidationError(f"error model covers T={error_model.T}, forecast has {T}",
                              "error_model")
    E = sample_errors(error_model, n, seed)
    renew = np.clip(forecast.p_renew + E[:, :T], 0.0, pv_capacity)
    load = np.maximum(forecast.p_load + E[:, T:], 0.0)
    return ScenarioSet(renew, load, forecast)


class BlockCovarianceEstimator(BaseEstimator):
    """Estimate a structured error model from a ``K x 2T`` error history.

    Parameters mirror :class:`AdmmSettings`; ``block_size`` is ``r`` and the
    number of blocks is inferred from the data width. ``method`` selects the
    ADMM solver or the Dykstra oracle.
    """

    def __init__(self, block_size=96, rho=1.0, epsilon=None, max_iters=5000,
                 tol_primal=1e-6, tol_dual=1e-6, offdiag="zero", method="admm"):
        self.block_size = block_size
        self.rho = rho
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.tol_primal = tol_primal
        self.tol_dual = tol_dual
        self.offdiag = offdiag
        self.method = method

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        n = X.shape[1]
        r = int(self.block_size)
        if r < 1 or n % (2 * r):
            raise ValidationError(f"width {n} is not a multiple of 2*block_size={2 * r}",
                                  "block_size")
        D = n // (2 * r)
        C = sample_error_covariance(X)
        if self.method == "admm":
            settings = AdmmSettings(self.rho, self.epsilon, self.max_iters, self.tol_primal,
                                    self.tol_dual, self.offdiag)
            res = admm_covariance(C, r, D, settings)
            sigma, eps = res.sigma, res.epsilon
            self.converged_, self.n_iter_ = res.converged, res.iterations
        elif self.method == "dykstra":
            eps = self.epsilon if self.epsilon is not None else default_floor(C)
            sigma = dykstra_covariance(C, r, D, eps, self.max_iters, offdiag=self.offdiag)
            self.converged_, self.n_iter_ = True, self.max_iters
        else:
            raise ValidationError("must be 'admm' or 'dykstra'", "method")
        self.sample_covariance_ = C
        self.location_ = X.mean(axis=0)
        self.covariance_ = sigma
        self.epsilon_ = eps
        self.error_model_ = ErrorModel(self.location_, sigma, r, D, eps)
        self.n_features_in_ = n
        return self

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        check_is_fitted(self, "error_model_")
        return sample_errors(self.error_model_, n, seed)
