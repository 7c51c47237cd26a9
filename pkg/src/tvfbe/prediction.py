"""
Prediction-correction tracking with the forward-backward envelope.

At each sampling time ``t_k`` the smooth term is replaced by its Taylor model
around ``(x_k, t_k)``, a quadratic whose envelope is minimized for `P`
iterations starting from ``x_k``. Once ``f(.; t_{k+1})`` is observed, `C`
iterations on the true envelope start from the prediction.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy import linalg as la

from .envelope import EnvelopeParams, residual
from .problem import GRAD_COST, GRAD_T_COST, HESS_VEC_COST, Quadratic
from .solvers import SolverConfig, SolveStats, fista_solve, minimize_fbe

logger = logging.getLogger(__name__)


class QuadraticModel(Quadratic):
    r"""
    Prediction model :math:`h_k(x) = \frac12 x^\top Q x + \ell^\top x` with
    ``Q`` the Hessian at ``(x_k, t_k)`` and
    :math:`\ell = \nabla_x f(x_k;t_k) - Q x_k + T_s \nabla_{tx} f(x_k;t_k)`.
    """

    def __init__(self, Q, linear, base_point):
        super().__init__(Q, linear)
        self.base_point = np.asarray(base_point, dtype=float)

    @property
    def linear(self):
        return self.q


def build_prediction_model(problem, x_k, t_k, Ts, stats=None):
    """
    Taylor model of the gradient of ``f`` around ``(x_k, t_k)`` one period ahead.

    The returned model's gradient is
    ``grad f(x_k; t_k) + Q (x - x_k) + Ts * d/dt grad f(x_k; t_k)``.
    If `stats` is given, the matrix-vector products used are added to it.
    """
    smooth = problem.smooth
    x_k = np.asarray(x_k, dtype=float)
    Q = smooth.hessian(x_k, t_k)
    g = smooth.grad(x_k, t_k)
    gt = smooth.grad_t_grad(x_k, t_k)
    linear = g - smooth.hess_vec(x_k, t_k, x_k) + Ts * gt
    if stats is not None:
        stats.matvecs += GRAD_COST + HESS_VEC_COST + GRAD_T_COST
    if not smooth.has_time_derivative(t_k):
        logger.debug("no time derivative available at t=%g, using zero", t_k)
    return QuadraticModel(Q, linear, x_k)


def predict(model, nonsmooth, x_k, params, P, cfg):
    """`P` inner iterations on the model envelope from `x_k`; ``P = 0`` returns `x_k`."""
    if P < 0:
        raise ValueError("P must be nonnegative")
    if P == 0:
        return np.array(x_k, dtype=float), SolveStats()
    return minimize_fbe(model, nonsmooth, x_k, params, _with_budget(cfg, P))


def correct(smooth, nonsmooth, x_pred, params, C, cfg):
    """`C` inner iterations on the envelope of the observed cost, from `x_pred`."""
    if C < 1:
        raise ValueError("C must be at least 1")
    return minimize_fbe(smooth, nonsmooth, x_pred, params, _with_budget(cfg, C))


def _with_budget(cfg, iters):
    if cfg.max_iters == iters:
        return cfg
    return SolverConfig(method=cfg.method, max_iters=iters, tol=cfg.tol, beta=cfg.beta,
                        sigma=cfg.sigma, step=cfg.step, max_backtracks=cfg.max_backtracks)


@dataclass(frozen=True)
class PCConfig:
    """
    Parameters of a tracking run.

    `gamma_factor` sets the envelope step ``gamma = gamma_factor / L``;
    `predict_gamma_factor` overrides it for the prediction phase (None uses
    the same step for both). `tol` is the inner early-stopping threshold; the
    default 0 spends the full ``P`` and ``C`` budgets at every step. `predict_method` and `correct_method` name the inner
    solvers. `steps` is the number of sampling periods simulated.
    """

    Ts: float = 0.1
    P: int = 10
    C: int = 5
    gamma_factor: float = 0.8
    predict_method: str = "qn"
    correct_method: str = "qn-ls"
    steps: int = 1200
    seed: int = 0
    tol: float = 0.0
    oracle_tol: float = 1e-10
    predict_gamma_factor: float = None

    def __post_init__(self):
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        if self.P < 0:
            raise ValueError("P must be nonnegative")
        if self.C < 1:
            raise ValueError("C must be at least 1")
        if not 0 < self.gamma_factor < 1:
            raise ValueError("gamma must lie in (0, 1/L): gamma_factor must be in (0, 1)")
        if self.predict_gamma_factor is not None and not 0 < self.predict_gamma_factor < 1:
            raise ValueError("gamma must lie in (0, 1/L): predict_gamma_factor must be in (0, 1)")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        for method in (self.predict_method, self.correct_method):
            SolverConfig(method=method)
        if "fista" in (self.predict_method, self.correct_method):
            raise ValueError("FISTA is reserved for the reference trajectory")

    def predict_solver(self):
        return SolverConfig(method=self.predict_method, max_iters=self.P, tol=self.tol)

    def correct_solver(self):
        return SolverConfig(method=self.correct_method, max_iters=self.C, tol=self.tol)


@dataclass
class TrajectoryRecord:
    """
    State at sample ``k``.

    `x` is the corrected iterate ``x_k``, `x_pred` the prediction
    ``x_{k|k-1}`` the correction started from (``x_0`` at ``k = 0``),
    `x_star` the reference optimum. Residual norms and matrix-vector counts
    refer to the prediction and correction that produced ``x_k``.
    """

    k: int
    t: float
    x: np.ndarray
    x_pred: np.ndarray
    x_star: np.ndarray = None
    err_norm: float = np.nan
    E_r: float = np.nan
    resid_pred: float = 0.0
    resid_corr: float = 0.0
    matvec_pred: int = 0
    matvec_corr: int = 0
    matvec_oracle: int = 0
    derivative_available: bool = True
    correct_values: list = field(default_factory=list)


def reference_trajectory(problem, Ts, steps, params, tol=1e-10, x0=None):
    """
    High-accuracy optima ``x*_k`` for ``k = 0..steps`` by warm-started FISTA.

    Returns
    -------
    x_star : ndarray, shape (steps + 1, n)
    matvecs : ndarray of int, per-step cost of the reference solves
    """
    x = np.zeros(problem.n) if x0 is None else np.asarray(x0, dtype=float)
    out = np.empty((steps + 1, problem.n))
    matvecs = np.zeros(steps + 1, dtype=int)
    for k in range(steps + 1):
        x, st = fista_solve(problem.smooth.at(k * Ts), problem.nonsmooth, x, params, tol=tol)
        out[k] = x
        matvecs[k] = st.matvecs
    return out, matvecs


def run(problem, cfg, oracle=True, active_count=1, x0=None):
    """
    Track the optimizer of `problem` over ``cfg.steps`` sampling periods.

    Parameters
    ----------
    problem : CompositeProblem
        Time-varying problem; its smooth oracle is queried at ``t_k = k Ts``.
    cfg : PCConfig
    oracle : bool or tuple, optional
        True computes reference optima with FISTA; a precomputed
        ``(x_star, matvecs)`` pair from `reference_trajectory` is used as is;
        False disables error reporting.
    active_count : int, optional
        Normalization of the tracking error ``E_r = ||x_k - x*_k|| / active_count``.
    x0 : array_like, optional
        Initial iterate, zero by default.

    Returns
    -------
    list of TrajectoryRecord
        ``cfg.steps + 1`` records. If a step fails, the exception is re-raised
        with the partial records attached as ``exc.records``.
    """
    params = EnvelopeParams.from_factor(cfg.gamma_factor, problem.L)
    pparams = params if cfg.predict_gamma_factor is None else EnvelopeParams.from_factor(
        cfg.predict_gamma_factor, problem.L)
    g = problem.nonsmooth
    Ts = cfg.Ts
    pcfg, ccfg = cfg.predict_solver(), cfg.correct_solver()

    x_star, oracle_mv = None, None
    if oracle is True:
        x_star, oracle_mv = reference_trajectory(problem, Ts, cfg.steps, params, cfg.oracle_tol)
    elif oracle is not False and oracle is not None:
        x_star, oracle_mv = oracle
        if len(x_star) < cfg.steps + 1:
            raise ValueError("reference trajectory is shorter than the run")

    x = np.zeros(problem.n) if x0 is None else np.array(x0, dtype=float)
    records = [_record(0, 0.0, x, x, x_star, oracle_mv, active_count)]
    try:
        for k in range(cfg.steps):
            t_k, t_next = k * Ts, (k + 1) * Ts
            pstats = SolveStats()
            if cfg.P > 0:
                model = build_prediction_model(problem, x, t_k, Ts, stats=pstats)
                x_pred, st = predict(model, g, x, pparams, cfg.P, pcfg)
                pstats.matvecs += st.matvecs
            else:
                x_pred = x
            smooth_next = problem.smooth.at(t_next)
            x, cstats = correct(smooth_next, g, x_pred, params, cfg.C, ccfg)

            rec = _record(k + 1, t_next, x, x_pred, x_star, oracle_mv, active_count)
            rec.resid_pred = cstats.initial_residual_norm
            rec.resid_corr = cstats.residual_norm
            rec.matvec_pred = pstats.matvecs
            rec.matvec_corr = cstats.matvecs
            rec.derivative_available = problem.smooth.has_time_derivative(t_k)
            rec.correct_values = cstats.values
            records.append(rec)
    except Exception as exc:
        exc.records = records
        raise
    return records


def _record(k, t, x, x_pred, x_star, oracle_mv, active_count):
    rec = TrajectoryRecord(k=k, t=t, x=x.copy(), x_pred=np.array(x_pred, copy=True))
    if x_star is not None:
        rec.x_star = x_star[k]
        rec.err_norm = la.norm(x - x_star[k])
        rec.E_r = rec.err_norm / active_count
        rec.matvec_oracle = int(oracle_mv[k])
    return rec


def steady_state(values, fraction=0.5):
    """Trailing `fraction` of a per-step series (the steady-state window)."""
    values = np.asarray(values, dtype=float)
    start = int(np.floor(len(values) * (1 - fraction)))
    return values[start:]
