"""Covariance/projection algebra: K_eta solves, M-actions, GLS, trace(M).

The central object is M_{1,eta} = Kinv - Kinv X (X' Kinv X)^{-1} X' Kinv
with Kinv = (K + eta I)^{-1}, applied through linear solves rather than
materialized.  The m x m inner system is always solved densely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .design import DesignMatrix
from .errors import InputError, ModelError, SolverError
from .kernels import CorrelationMatrix

# Dense Cholesky is the default solver up to this size; beyond it (or for
# sparse storage) conjugate gradients takes over.
DENSE_SOLVER_MAX_N = 4096

# Degeneracy flag: z counts as lying in range(X) when the projection
# residual is below this fraction of ||z||.
DEGENERACY_RTOL = 1e-12

JITTER_SCALE = 1e-10


@dataclass
class HyperParams:
    """Variance hyperparameters (sigma2, sigma02, eta) with sigma02 = eta*sigma2.

    ``eta`` may be +inf (noise-dominated limit, sigma2 = 0).  ``source``
    records whether the values were estimated or user-fixed.
    """

    sigma2: float
    sigma02: float
    eta: float
    source: str = "estimated"

    def __post_init__(self):
        if self.sigma2 < 0 or self.sigma02 < 0:
            raise InputError("variances must be nonnegative")
        if math.isfinite(self.eta) and self.eta >= 0 and self.sigma2 > 0:
            if not math.isclose(self.sigma02, self.eta * self.sigma2,
                                rel_tol=1e-9, abs_tol=1e-300):
                raise InputError("sigma02 must equal eta * sigma2")

    @classmethod
    def from_sigma2_eta(cls, sigma2: float, eta: float,
                        source: str = "estimated") -> "HyperParams":
        if math.isinf(eta):
            return cls(0.0, sigma2, eta, source)
        return cls(sigma2, eta * sigma2, eta, source)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def sigma0(self) -> float:
        return math.sqrt(self.sigma02)


class Solver:
    """Linear solver for K_eta systems with a per-eta factorization cache.

    ``method`` is "dense_cholesky" or "cg".  A solver instance is bound to
    one correlation matrix; caches must not be shared across estimation
    runs on different matrices.
    """

    # Factorizations are O(n^2) memory each; cap how many stay cached so a
    # long optimization sweep over many eta values cannot exhaust memory.
    FACTOR_CACHE_SIZE = 48

    def __init__(self, K: CorrelationMatrix, method: str = "dense_cholesky",
                 tol: float = 1e-10, max_iter: int | None = None):
        if method not in ("dense_cholesky", "cg"):
            raise InputError(f"unknown solver method {method!r}")
        if method == "dense_cholesky" and K.storage == "sparse":
            self._K_dense = K.toarray()
        else:
            self._K_dense = K.entries if K.storage == "dense" else None
        self.K = K
        self.method = method
        self.tol = tol
        self.max_iter = max_iter if max_iter is not None else 10 * K.n
        self.jitter = 0.0
        self._factors: dict[float, tuple] = {}
        self._logdets: dict[float, float] = {}

    # -- dense path ---------------------------------------------------

    def _factorize(self, eta: float):
        if eta in self._factors:
            return self._factors[eta]
        n = self.K.n
        A = self._K_dense + (eta + self.jitter) * np.eye(n)
        try:
            factor = sla.cho_factor(A, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            if self.jitter == 0.0:
                # tapering or duplicate points can push K slightly indefinite
                self.jitter = JITTER_SCALE * n
                return self._factorize(eta)
            raise SolverError(
                f"Cholesky factorization of K + {eta} I failed even with "
                f"jitter {self.jitter}") from None
        if len(self._factors) >= self.FACTOR_CACHE_SIZE:
            self._factors.pop(next(iter(self._factors)))
        self._factors[eta] = factor
        self._logdets[eta] = 2.0 * float(
            np.sum(np.log(np.diag(factor[0]))))
        return factor

    # -- public API ----------------------------------------------------

    def solve(self, eta: float, B: np.ndarray) -> np.ndarray:
        """Return K_eta^{-1} B to solver tolerance."""
        if not (np.isfinite(eta) and eta >= 0):
            raise InputError(f"eta must be a finite nonnegative real, got {eta}")
        B = np.asarray(B, dtype=float)
        if self.method == "dense_cholesky":
            factor = self._factorize(eta)
            return sla.cho_solve(factor, B, check_finite=False)
        return self._solve_cg(eta, B)

    def _solve_cg(self, eta: float, B: np.ndarray) -> np.ndarray:
        n = self.K.n
        K = self.K.entries
        shift = eta + self.jitter
        op = spla.LinearOperator(
            (n, n), matvec=lambda v: K @ v + shift * v, dtype=float)
        single = B.ndim == 1
        cols = B[:, None] if single else B
        out = np.empty_like(cols)
        for j in range(cols.shape[1]):
            b = cols[:, j]
            x, info = _cg(op, b, rtol=self.tol, maxiter=self.max_iter)
            if info != 0:
                resid = float(np.linalg.norm(op.matvec(x) - b))
                raise SolverError(
                    f"CG did not converge for eta={eta} within "
                    f"{self.max_iter} iterations (residual {resid:.3e}, "
                    f"target {self.tol * np.linalg.norm(b):.3e})")
            out[:, j] = x
        return out[:, 0] if single else out

    def logdet(self, eta: float) -> float:
        """log det(K + eta I); Cholesky on the dense path, sparse LU otherwise."""
        if self.method == "dense_cholesky":
            self._factorize(eta)
            return self._logdets[eta]
        if eta in self._logdets:
            return self._logdets[eta]
        A = (self.K.entries + (eta + self.jitter)
             * sparse.identity(self.K.n, format="csr")).tocsc()
        lu = spla.splu(A)
        diag_u = lu.U.diagonal()
        if np.any(diag_u == 0):
            raise SolverError(f"singular K + {eta} I in sparse logdet")
        val = float(np.sum(np.log(np.abs(diag_u))))
        self._logdets[eta] = val
        return val


def _cg(op, b, rtol, maxiter):
    """scipy.sparse.linalg.cg across the tol/rtol API rename."""
    try:
        return spla.cg(op, b, rtol=rtol, maxiter=maxiter)
    except TypeError:  # scipy < 1.12
        return spla.cg(op, b, tol=rtol, maxiter=maxiter)


def default_solver(K: CorrelationMatrix) -> Solver:
    """DenseCholesky up to DENSE_SOLVER_MAX_N, CG for sparse/tapered K."""
    if K.storage == "dense" and K.n <= DENSE_SOLVER_MAX_N:
        return Solver(K, "dense_cholesky")
    return Solver(K, "cg")


@dataclass
class GpModel:
    """Immutable problem instance: observations, design, correlation, points.

    ``degenerate`` flags z in range(X) (projection residual below
    DEGENERACY_RTOL * ||z||), in which case the fitted error variance is
    identically zero and estimation short-circuits.
    """

    z: np.ndarray
    X: DesignMatrix
    K: CorrelationMatrix
    points: np.ndarray
    degenerate: bool = field(init=False)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        n = self.z.shape[0]
        if self.X.entries.shape[0] != n or self.K.n != n:
            raise ModelError(
                f"inconsistent dimensions: len(z)={n}, "
                f"rows(X)={self.X.entries.shape[0]}, rows(K)={self.K.n}")
        if not np.all(np.isfinite(self.z)):
            raise InputError("observations must be finite")
        # z in range(X) makes every M-action vanish regardless of eta, so the
        # plain least-squares residual is an equivalent, cheaper probe.
        coef, *_ = np.linalg.lstsq(self.X.entries, self.z, rcond=None)
        resid = self.z - self.X.entries @ coef
        znorm = np.linalg.norm(self.z)
        self.degenerate = bool(
            np.linalg.norm(resid) <= DEGENERACY_RTOL * max(znorm, 1e-300))

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def m(self) -> int:
        return self.X.m


def solve_K_eta(model: GpModel, eta: float, B: np.ndarray,
                solver: Solver) -> np.ndarray:
    """Solution of (K + eta I) U = B."""
    return solver.solve(eta, B)


def _xty_solve(model: GpModel, Y: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve the m x m system (X' Y) a = rhs densely."""
    B = model.X.entries.T @ Y
    try:
        return sla.solve(B, rhs, assume_a="sym")
    except np.linalg.LinAlgError as exc:
        raise ModelError(f"X' K_eta^{{-1}} X is singular: {exc}") from None


def m1_apply(model: GpModel, eta: float, solver: Solver) -> np.ndarray:
    """w = M_{1,eta} z via u = Kinv z, Y = Kinv X, w = u - Y (X'Y)^{-1} Y'z."""
    u = solver.solve(eta, model.z)
    Y = solver.solve(eta, model.X.entries)
    a = _xty_solve(model, Y, Y.T @ model.z)
    return u - Y @ a


def beta_gls(model: GpModel, eta: float, solver: Solver) -> np.ndarray:
    """Generalized least squares coefficients (sigma^2 cancels, K_eta suffices)."""
    Y = solver.solve(eta, model.X.entries)
    return _xty_solve(model, Y, Y.T @ model.z)


def trace_m1(model: GpModel, eta: float, solver: Solver,
             trace_k_inv) -> float:
    """trace(M_{1,eta}) from trace(K_eta^{-1}) minus the exact m x m correction.

    ``trace_k_inv`` is either the scalar trace(K_eta^{-1}) or a callable
    eta -> trace(K_eta^{-1}) (a trace provider).
    """
    t_kinv = trace_k_inv(eta) if callable(trace_k_inv) else float(trace_k_inv)
    Y = solver.solve(eta, model.X.entries)
    C = _xty_solve(model, Y, Y.T @ Y)
    return t_kinv - float(np.trace(C))
