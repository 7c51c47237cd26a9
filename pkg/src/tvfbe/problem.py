"""
Time-varying composite problems.

A problem is the sum ``f(x; t) + g(x)`` of a smooth, strongly convex term
``f`` and a closed convex, possibly nonsmooth term ``g``. The smooth part is
described by a `SmoothOracle` (value, gradient, Hessian-vector product and the
mixed derivative ``d/dt grad_x f``), the nonsmooth part by a `NonsmoothTerm`
exposing its proximal operator.

Matrix-vector product accounting used throughout the package: one gradient
evaluation costs `GRAD_COST` units, one Hessian-vector product `HESS_VEC_COST`
units, a proximal step is free.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy import linalg as la


GRAD_COST = 2
HESS_VEC_COST = 2
GRAD_T_COST = 1


class DimensionError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Raised by iterative routines that hit their iteration cap.

    Attributes
    ----------
    point : ndarray or None
        Best point available when the routine gave up.
    residual : float
        Residual measure at `point`.
    """

    def __init__(self, message, point=None, residual=np.nan):
        super().__init__(message)
        self.point = point
        self.residual = residual


def _check_dim(x, n):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != n:
        raise DimensionError(f"expected a vector of length {n}, got shape {x.shape}")
    return x


#%% SMOOTH PART

class SmoothOracle:
    r"""
    Oracle for the smooth, time-varying term :math:`f(x; t)`.

    Subclasses implement `value`, `grad`, `hess_vec` and `grad_t_grad`.
    Oracles are immutable after construction.

    Attributes
    ----------
    n : int
        Dimension of the unknown.
    """

    n = None

    def value(self, x, t):
        raise NotImplementedError

    def grad(self, x, t):
        raise NotImplementedError

    def hess_vec(self, x, t, v):
        raise NotImplementedError

    def grad_t_grad(self, x, t):
        raise NotImplementedError

    def hessian(self, x, t):
        """Dense Hessian, assembled column by column from `hess_vec`."""
        cols = [self.hess_vec(x, t, e) for e in np.eye(self.n)]
        return np.column_stack(cols)

    def has_time_derivative(self, t):
        """False when `grad_t_grad` returns a placeholder at time `t`."""
        return True

    def at(self, t):
        """Freeze the time argument, returning a `FixedTimeSmooth`."""
        return FixedTimeSmooth(self, t)


class FixedTimeSmooth:
    """View of a `SmoothOracle` at a fixed time, exposing functions of x only."""

    def __init__(self, oracle, t):
        self.oracle = oracle
        self.t = t
        self.n = oracle.n

    def value(self, x):
        return self.oracle.value(x, self.t)

    def grad(self, x):
        return self.oracle.grad(x, self.t)

    def hess_vec(self, x, v):
        return self.oracle.hess_vec(x, self.t, v)


class Quadratic:
    r"""
    Static quadratic :math:`\varphi(x) = \frac12 x^\top Q x + q^\top x + c`.

    Exposes the fixed-time protocol (`value`, `grad`, `hess_vec`) directly.
    """

    def __init__(self, Q, q=None, c=0.0):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise DimensionError("Q must be square")
        self.Q = Q
        self.n = Q.shape[0]
        self.q = np.zeros(self.n) if q is None else _check_dim(q, self.n)
        self.c = float(c)

    def value(self, x):
        x = _check_dim(x, self.n)
        return 0.5 * x @ self.Q @ x + self.q @ x + self.c

    def grad(self, x):
        x = _check_dim(x, self.n)
        return self.Q @ x + self.q

    def hess_vec(self, x, v):
        return self.Q @ _check_dim(v, self.n)


class TargetTracking(SmoothOracle):
    r"""
    :math:`f(x; t) = \frac12 \|x - r(t)\|^2` for a differentiable target ``r``.

    Parameters
    ----------
    target : callable
        ``t -> r(t)``, returning a scalar or a vector of length `n`.
    target_rate : callable
        ``t -> r'(t)``.
    n : int, optional
        Dimension, 1 by default.
    """

    def __init__(self, target, target_rate, n=1):
        self.target = target
        self.target_rate = target_rate
        self.n = n

    def _r(self, t):
        return np.broadcast_to(np.asarray(self.target(t), dtype=float), (self.n,))

    def value(self, x, t):
        d = _check_dim(x, self.n) - self._r(t)
        return 0.5 * d @ d

    def grad(self, x, t):
        return _check_dim(x, self.n) - self._r(t)

    def hess_vec(self, x, t, v):
        return _check_dim(v, self.n).copy()

    def grad_t_grad(self, x, t):
        _check_dim(x, self.n)
        rate = np.asarray(self.target_rate(t), dtype=float)
        return -np.broadcast_to(rate, (self.n,)).copy()

    def hessian(self, x, t):
        return np.eye(self.n)


class LeastSquares(SmoothOracle):
    r"""
    Sampled regularized least squares
    :math:`f(x; t_k) = \frac12\|Ax - b_k\|^2 + \frac{\rho}{2}\|x\|^2`.

    The measurements are only known on the grid ``t_k = k T_s``, so the mixed
    derivative is replaced by the backward difference
    :math:`-A^\top (b_k - b_{k-1}) / T_s`, and by zero at ``k = 0``.

    Parameters
    ----------
    A : array_like
        Measurement matrix of shape ``(rows, n)``.
    measurements : sequence
        Indexable by ``k``, returning ``b_k``. A 2D array of shape
        ``(K + 1, rows)`` works, so does any object with ``__getitem__``.
    ridge : float
        Weight ``rho >= 0`` of the quadratic regularizer.
    Ts : float
        Sampling period.
    """

    def __init__(self, A, measurements, ridge=0.0, Ts=1.0):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.measurements = measurements
        self.ridge = float(ridge)
        if Ts <= 0:
            raise ValueError("sampling period must be positive")
        self.Ts = float(Ts)
        self.n = self.A.shape[1]
        self._gram = self.A.T @ self.A + self.ridge * np.eye(self.n)

    def index(self, t):
        k = int(round(t / self.Ts))
        if k < 0 or abs(k * self.Ts - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the sampling grid (Ts={self.Ts})")
        return k

    def b(self, t):
        return np.asarray(self.measurements[self.index(t)], dtype=float)

    def value(self, x, t):
        x = _check_dim(x, self.n)
        r = self.A @ x - self.b(t)
        return 0.5 * r @ r + 0.5 * self.ridge * x @ x

    def grad(self, x, t):
        x = _check_dim(x, self.n)
        return self.A.T @ (self.A @ x - self.b(t)) + self.ridge * x

    def hess_vec(self, x, t, v):
        v = _check_dim(v, self.n)
        return self.A.T @ (self.A @ v) + self.ridge * v

    def hessian(self, x, t):
        return self._gram.copy()

    def has_time_derivative(self, t):
        return self.index(t) > 0

    def grad_t_grad(self, x, t):
        _check_dim(x, self.n)
        k = self.index(t)
        if k == 0:
            return np.zeros(self.n)
        db = np.asarray(self.measurements[k], dtype=float) - np.asarray(
            self.measurements[k - 1], dtype=float)
        return -self.A.T @ db / self.Ts


#%% NONSMOOTH PART

class NonsmoothTerm:
    """Closed convex term ``g`` with a closed-form proximal operator."""

    tag = None

    def value(self, x):
        raise NotImplementedError

    def prox(self, u, step):
        raise NotImplementedError


class Zero(NonsmoothTerm):
    tag = "zero"

    def value(self, x):
        return 0.0

    def prox(self, u, step):
        if step <= 0:
            raise ValueError("proximal step must be positive")
        return np.array(u, dtype=float)


class L1(NonsmoothTerm):
    r"""Weighted :math:`\ell_1` norm :math:`\alpha\|x\|_1`, prox is soft-thresholding."""

    tag = "l1"

    def __init__(self, weight=1.0):
        if weight < 0:
            raise ValueError("l1 weight must be nonnegative")
        self.weight = float(weight)

    def value(self, x):
        return self.weight * np.sum(np.abs(x))

    def prox(self, u, step):
        if step <= 0:
            raise ValueError("proximal step must be positive")
        u = np.asarray(u, dtype=float)
        return np.sign(u) * np.maximum(np.abs(u) - step * self.weight, 0.0)


#%% COMPOSITE PROBLEM

@dataclass(frozen=True)
class CompositeProblem:
    """
    ``f(x; t) + g(x)`` together with the moduli of ``f``.

    `m` and `L` are the strong convexity and smoothness moduli; `C0` to `C3`
    optionally bound the mixed and third derivatives of ``f``.
    """

    smooth: SmoothOracle
    nonsmooth: NonsmoothTerm
    m: float
    L: float
    C0: Optional[float] = None
    C1: Optional[float] = None
    C2: Optional[float] = None
    C3: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.m <= self.L):
            raise ValueError(f"moduli must satisfy 0 < m <= L (got m={self.m}, L={self.L})")

    @property
    def n(self):
        return self.smooth.n


def grad_f(problem, x, t):
    """Gradient of the smooth part with respect to x."""
    return problem.smooth.grad(_check_dim(x, problem.n), t)


def grad_t_grad_f(problem, x, t):
    """Time derivative of the gradient of the smooth part."""
    return problem.smooth.grad_t_grad(_check_dim(x, problem.n), t)


def prox_g(term, point, step):
    """Proximal operator of the nonsmooth term with step `step`."""
    return term.prox(point, step)


#%% MODULI

def _power_iteration(apply, n, tol, max_iter, rng):
    v = rng.standard_normal(n)
    v /= la.norm(v)
    lam = 0.0
    resid = np.inf
    for _ in range(max_iter):
        w = apply(v)
        lam = v @ w
        resid = la.norm(w - lam * v)
        if resid <= tol * abs(lam):
            return lam, resid
        v = w / la.norm(w)
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(residual {resid:.3e})", point=v, residual=resid)


def estimate_moduli(hessian, tol=1e-8, max_iter=100000, seed=0):
    """
    Extreme eigenvalues ``(m, L)`` of a constant symmetric positive definite
    Hessian, by power iteration (largest) and inverse power iteration
    (smallest).

    Parameters
    ----------
    hessian : array_like
        Symmetric positive definite matrix.
    tol : float, optional
        Relative tolerance on the eigen-residual ``||H v - lambda v||``.
    max_iter : int, optional
        Iteration cap for each of the two iterations.

    Raises
    ------
    ConvergenceError
        If either iteration fails to meet `tol` within `max_iter` steps.
    numpy.linalg.LinAlgError
        If the matrix is not positive definite.
    """
    H = np.atleast_2d(np.asarray(hessian, dtype=float))
    if H.shape[0] != H.shape[1] or not np.allclose(H, H.T, rtol=1e-12, atol=1e-12):
        raise ValueError("hessian must be a symmetric square matrix")
    n = H.shape[0]
    rng = np.random.default_rng(seed)

    L, _ = _power_iteration(lambda v: H @ v, n, tol, max_iter, rng)

    chol = la.cholesky(H)
    def solve(v):
        return la.solve(chol.T, la.solve(chol, v))
    inv_m, _ = _power_iteration(solve, n, tol, max_iter, rng)
    # both estimates carry rounding; keep m <= L for well-conditioned inputs
    return min(1.0 / inv_m, L), L
