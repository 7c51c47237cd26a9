"""
Inner minimizers of the forward-backward envelope.

`quasi_newton_fbe` estimates the envelope curvature with BFGS updates and
closes every iteration with a forward-backward step; `gradient_descent_fbe`
takes plain steps along the envelope gradient; `fista_solve` is an accelerated
proximal-gradient method used as a high-accuracy reference.

All solvers take a fixed-time smooth object (``value``, ``grad``,
``hess_vec``), a nonsmooth term and `EnvelopeParams`.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy import linalg as la

from .envelope import evaluate, _fb
from .problem import GRAD_COST, HESS_VEC_COST, ConvergenceError

logger = logging.getLogger(__name__)

METHODS = ("qn-ls", "qn", "grad", "fista")


class DivergenceError(RuntimeError):
    def __init__(self, message, point=None, stats=None):
        super().__init__(message)
        self.point = point
        self.stats = stats


@dataclass(frozen=True)
class SolverConfig:
    """
    Inner solver settings.

    `max_iters` is the iteration budget (0 returns the initial point),
    `tol` an early-stopping threshold on the residual norm (0 disables early
    stopping, so the whole budget is spent and counted), `beta` and
    `sigma` the backtracking shrink factor and sufficient-decrease constant.
    `step` is the gradient-method step; None means ``gamma``.
    """

    method: str = "qn-ls"
    max_iters: int = 10
    tol: float = 1e-12
    beta: float = 0.5
    sigma: float = 1e-4
    step: float = None
    max_backtracks: int = 60

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver {self.method!r}, expected one of {METHODS}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")
        if not 0 < self.beta < 1 or not 0 < self.sigma < 1:
            raise ValueError("beta and sigma must lie in (0, 1)")


@dataclass
class SolveStats:
    iterations: int = 0
    residual_norm: float = np.nan
    initial_residual_norm: float = np.nan
    values: list = field(default_factory=list)
    matvecs: int = 0
    backtracks: int = 0
    resets: int = 0


def _bfgs_update(H, s, y):
    sy = s @ y
    if sy <= 1e-12 * la.norm(s) * la.norm(y):
        return H
    rho = 1.0 / sy
    Hy = H @ y
    # H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded
    return (H - rho * (np.outer(s, Hy) + np.outer(Hy, s))
            + (rho * rho * (y @ Hy) + rho) * np.outer(s, s))


def quasi_newton_fbe(smooth, nonsmooth, x0, params, cfg):
    """
    BFGS quasi-Newton minimization of the envelope.

    Each iteration computes ``d = -H grad M(x)`` with the inverse BFGS
    estimate ``H`` (initialized to ``gamma * I``), picks a step ``tau``
    and sets ``x+ = T(x + tau d)``. With ``cfg.method == "qn-ls"``,
    ``tau`` backtracks from 1 until
    ``M(x + tau d) <= M(x) - sigma * tau * ||d||^2``; with ``"qn"`` it is 1.

    Returns
    -------
    x : ndarray
    stats : SolveStats
    """
    if cfg.method not in ("qn-ls", "qn"):
        raise ValueError("quasi_newton_fbe needs method 'qn-ls' or 'qn'")
    line_search = cfg.method == "qn-ls"
    gamma = params.gamma
    n = np.size(x0)
    stats = SolveStats()

    ev = evaluate(smooth, nonsmooth, x0, params)
    stats.matvecs += GRAD_COST + HESS_VEC_COST
    stats.values.append(ev.value)
    stats.initial_residual_norm = stats.residual_norm = la.norm(ev.residual)
    H = gamma * np.eye(n)

    for _ in range(cfg.max_iters):
        if cfg.tol > 0 and stats.residual_norm <= cfg.tol:
            break
        x, gM = ev.x, ev.gradient
        d = -H @ gM
        if d @ gM >= 0:
            logger.debug("non-descent quasi-Newton direction, resetting curvature")
            stats.resets += 1
            H = gamma * np.eye(n)
            d = -gamma * gM

        tau = 1.0
        w = x + d
        grad_w = None
        if line_search:
            dd = d @ d
            for _ in range(cfg.max_backtracks):
                trial = evaluate(smooth, nonsmooth, w, params, gradient=False)
                stats.matvecs += GRAD_COST
                if trial.value <= ev.value - cfg.sigma * tau * dd:
                    grad_w = trial.grad_phi
                    break
                tau *= cfg.beta
                stats.backtracks += 1
                w = x + tau * d
            else:
                # no acceptable step; the forward-backward step from x itself
                # still decreases the envelope
                w, grad_w = x, ev.grad_phi

        if grad_w is None:
            grad_w = smooth.grad(w)
            stats.matvecs += GRAD_COST
        _, x_new = _fb(smooth, nonsmooth, w, gamma, grad_w)

        ev_new = evaluate(smooth, nonsmooth, x_new, params)
        stats.matvecs += GRAD_COST + HESS_VEC_COST
        H = _bfgs_update(H, x_new - x, ev_new.gradient - gM)
        ev = ev_new
        stats.iterations += 1
        stats.values.append(ev.value)
        stats.residual_norm = la.norm(ev.residual)

    return ev.x, stats


def gradient_descent_fbe(smooth, nonsmooth, x0, params, cfg, patience=5, max_halvings=30):
    """
    Fixed-step gradient method on the envelope, ``x+ = x - eta grad M(x)``.

    The step is ``cfg.step`` (``gamma`` by default). If the envelope value
    grows for `patience` consecutive iterations the step is halved; after
    `max_halvings` halvings a `DivergenceError` is raised.
    """
    if cfg.method != "grad":
        raise ValueError("gradient_descent_fbe needs method 'grad'")
    eta = params.gamma if cfg.step is None else cfg.step
    stats = SolveStats()

    ev = evaluate(smooth, nonsmooth, x0, params)
    stats.matvecs += GRAD_COST + HESS_VEC_COST
    stats.values.append(ev.value)
    stats.initial_residual_norm = stats.residual_norm = la.norm(ev.residual)

    growth, halvings = 0, 0
    for _ in range(cfg.max_iters):
        if cfg.tol > 0 and stats.residual_norm <= cfg.tol:
            break
        x_new = ev.x - eta * ev.gradient
        ev_new = evaluate(smooth, nonsmooth, x_new, params)
        stats.matvecs += GRAD_COST + HESS_VEC_COST
        growth = growth + 1 if ev_new.value > ev.value else 0
        ev = ev_new
        stats.iterations += 1
        stats.values.append(ev.value)
        stats.residual_norm = la.norm(ev.residual)
        if not np.isfinite(ev.value):
            raise DivergenceError("envelope value is not finite", ev.x, stats)
        if growth >= patience:
            halvings += 1
            if halvings > max_halvings:
                raise DivergenceError("gradient method diverges", ev.x, stats)
            eta *= 0.5
            growth = 0
            logger.debug("envelope grew for %d iterations, step halved to %g", patience, eta)

    return ev.x, stats


def fista_solve(smooth, nonsmooth, x0, params, tol=1e-10, iter_cap=100000, stats=None):
    """
    Accelerated proximal gradient with adaptive restart.

    Runs until the residual of the returned point is at most `tol`.

    Raises
    ------
    ConvergenceError
        When `iter_cap` is reached; carries the best point and its residual.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    gamma = params.gamma
    if stats is None:
        stats = SolveStats()

    x = np.array(x0, dtype=float)
    g = smooth.grad(x)
    stats.matvecs += GRAD_COST
    x_fb = nonsmooth.prox(x - gamma * g, gamma)
    r = la.norm(x - x_fb) / gamma
    stats.initial_residual_norm = stats.residual_norm = r
    if r <= tol:
        return x, stats
    best, best_r = x, r

    y, theta = x, 1.0
    for it in range(iter_cap):
        g = smooth.grad(y)
        stats.matvecs += GRAD_COST
        x_new = nonsmooth.prox(y - gamma * g, gamma)
        ry = la.norm(y - x_new) / gamma
        if ry <= tol:
            # certify the returned point itself
            g_new = smooth.grad(x_new)
            stats.matvecs += GRAD_COST
            r = la.norm(x_new - nonsmooth.prox(x_new - gamma * g_new, gamma)) / gamma
            if r < best_r:
                best, best_r = x_new, r
            if r <= tol:
                stats.iterations = it + 1
                stats.residual_norm = r
                return x_new, stats
        if (y - x_new) @ (x_new - x) > 0:
            theta = 1.0
            y = x_new
        else:
            theta_new = 0.5 * (1 + np.sqrt(1 + 4 * theta * theta))
            y = x_new + ((theta - 1) / theta_new) * (x_new - x)
            theta = theta_new
        x = x_new

    stats.iterations = iter_cap
    stats.residual_norm = best_r
    raise ConvergenceError(
        f"FISTA reached {iter_cap} iterations with residual {best_r:.3e} > {tol:.1e}",
        point=best, residual=best_r)


def minimize_fbe(smooth, nonsmooth, x0, params, cfg):
    """Dispatch a budgeted envelope solver on ``cfg.method``; returns ``(x, SolveStats)``."""
    if cfg.method in ("qn-ls", "qn"):
        return quasi_newton_fbe(smooth, nonsmooth, x0, params, cfg)
    if cfg.method == "grad":
        return gradient_descent_fbe(smooth, nonsmooth, x0, params, cfg)
    raise ValueError("FISTA is a reference solver, call fista_solve directly")
