r"""
Convergence constants of the prediction-correction scheme.

Notation: ``m``, ``L`` are the moduli of ``f``, ``gamma`` the envelope step,
``P`` and ``C`` the prediction and correction horizons, ``C0..C3`` bounds on
the derivatives of ``f``, ``Ts`` the sampling period.

* contraction factor of the inner quasi-Newton method,
  :math:`\zeta = \sqrt{\max\{1/2,\ 1 - \frac{m}{4}\min\{\gamma, 1/(4L)\}\}}`;
* :math:`\kappa = (1-\gamma m) / (m(1-\gamma L))`, which bounds the norm of
  the inverse envelope Hessian times the norm of ``I - gamma Q``;
* first-order error recursion ``e+ <= A1 e + A0`` (global, O(Ts));
* second-order recursion ``e+ <= A2 e^2 + A1 e + A0`` (local, O(Ts^2)),
  with the sampling-time bound ``Ts_bar`` and the convergence radius
  ``R_bar``.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np


class BoundsError(ValueError):
    pass


def _check_moduli(m, L, gamma):
    if not (m > 0 and L >= m):
        raise BoundsError(f"moduli must satisfy 0 < m <= L (got m={m}, L={L})")
    if not 0 < gamma < 1 / L:
        raise BoundsError(f"gamma must lie in (0, 1/L) = (0, {1 / L}), got {gamma}")


def contraction_factor(m, L, gamma):
    _check_moduli(m, L, gamma)
    return math.sqrt(max(0.5, 1 - m / 4 * min(gamma, 1 / (4 * L))))


def kappa(m, L, gamma):
    _check_moduli(m, L, gamma)
    return (1 - gamma * m) / (m * (1 - gamma * L))


def theorem1_check(zeta, P, C, m, L, gamma):
    """
    Global convergence condition.

    Returns
    -------
    A1 : float
        ``zeta^C [zeta^P + (zeta^P + 1) 2 L kappa]``.
    satisfied : bool
        ``A1 < 1``.
    """
    a1 = 2 * L * kappa(m, L, gamma)
    zp, zc = zeta ** P, zeta ** C
    A1 = zc * (zp + a1 * (zp + 1))
    return A1, A1 < 1


def first_order_coefficients(m, L, gamma, C0, Ts, P, C):
    """Coefficients ``a0, a1, A0, A1`` of the first-order error recursion."""
    k = kappa(m, L, gamma)
    zeta = contraction_factor(m, L, gamma)
    zp, zc = zeta ** P, zeta ** C
    a1 = 2 * L * k
    a0 = 2 * C0 * Ts * k * (L * k + 1)
    A1 = zc * (zp + a1 * (zp + 1))
    A0 = zc * (zp * k * Ts * C0 + (zp + 1) * a0)
    return {"a0": a0, "a1": a1, "A0": A0, "A1": A1}


def linear_asymptote(m, L, gamma, C0, Ts, P, C):
    """
    Asymptotic error bound ``A0 / (1 - A1)``.

    Raises
    ------
    BoundsError
        If ``A1 >= 1``, in which case the recursion gives no finite bound.
    """
    c = first_order_coefficients(m, L, gamma, C0, Ts, P, C)
    if c["A1"] >= 1:
        raise BoundsError(f"bound vacuous: A1 = {c['A1']:.6g} >= 1")
    return c["A0"] / (1 - c["A1"])


def second_order_coefficients(m, L, gamma, C0, C1, C2, C3, Ts, P, C):
    """Coefficients ``a2, a1, a0, A2, A1, A0`` of the second-order recursion."""
    k = kappa(m, L, gamma)
    zeta = contraction_factor(m, L, gamma)
    zp, zc = zeta ** P, zeta ** C
    a2 = k * C1 / 2
    a1 = Ts * k * (k * C0 * C1 + C2)
    a0 = Ts ** 2 * k * (k ** 2 * C1 * C0 ** 2 / 2 + k * C0 * C2 + C3 / 2)
    A2 = zc * (zp + 1) * a2
    A1 = zc * (zp + a1 * (zp + 1))
    A0 = zc * (zp * k * C0 * Ts + (zp + 1) * a0)
    return {"a2": a2, "a1": a1, "a0": a0, "A2": A2, "A1": A1, "A0": A0}


def _div(num, den):
    if den != 0:
        return num / den
    if num == 0:
        return math.nan
    return math.copysign(math.inf, num)


@dataclass
class BoundsReport:
    zeta: float
    kappa: float
    tau: float
    Ts: float
    a0: float
    a1: float
    A0: float
    A1: float
    a2_2: float
    a1_2: float
    a0_2: float
    A2_2: float
    A1_2: float
    A0_2: float
    Ts_bar: float
    R_bar: float
    R_bar_recursion: float
    R_bar_mismatch: bool
    theorem1_satisfied: bool
    asymptotic_bound_linear: float

    def to_dict(self):
        """Plain dict; non-finite floats become the strings "inf", "-inf", "nan"."""
        out = {}
        for key, v in asdict(self).items():
            if isinstance(v, float) and not math.isfinite(v):
                v = "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
            out[key] = v
        return out


def theorem2_bounds(m, L, gamma, C0, C1, C2, C3, P, C, tau, Ts=0.0):
    """
    All convergence constants for the given problem and horizons.

    ``Ts_bar`` is ``+inf`` when ``kappa (kappa C0 C1 + C2) = 0`` (no third
    derivatives, e.g. quadratic f). Two expressions for the convergence
    radius are reported: `R_bar` from the closed form
    ``2/C1 (kappa C0 C1 + C2)(Ts_bar - m Ts / zeta^C)`` and
    `R_bar_recursion` = ``(tau - A1) / A2`` from the second-order recursion;
    `R_bar_mismatch` is set when they differ by more than 1e-9 relative.
    The two coincide only when ``m = zeta^C``.

    Raises
    ------
    BoundsError
        If ``tau`` is not in (0, 1), or ``zeta^(P+C) >= tau``.
    """
    if not 0 < tau < 1:
        raise BoundsError(f"tau must lie in (0, 1), got {tau}")
    zeta = contraction_factor(m, L, gamma)
    if zeta ** (P + C) >= tau:
        raise BoundsError(
            f"horizons too short for Theorem 2: zeta^(P+C) = {zeta ** (P + C):.6g} >= tau = {tau}")
    k = kappa(m, L, gamma)
    zp, zc = zeta ** P, zeta ** C

    first = first_order_coefficients(m, L, gamma, C0, Ts, P, C)
    second = second_order_coefficients(m, L, gamma, C0, C1, C2, C3, Ts, P, C)
    A1_lin, ok = theorem1_check(zeta, P, C, m, L, gamma)

    growth = k * (k * C0 * C1 + C2)
    Ts_bar = _div(tau - zeta ** (P + C), zc * (zp + 1) * growth)
    if C1 == 0:
        R_bar = math.inf
    else:
        R_bar = 2 / C1 * (k * C0 * C1 + C2) * (Ts_bar - m / zc * Ts)
    R_rec = _div(tau - second["A1"], second["A2"])
    if math.isinf(R_bar) and math.isinf(R_rec):
        mismatch = R_bar != R_rec
    else:
        mismatch = not np.isclose(R_bar, R_rec, rtol=1e-9, atol=0.0)

    return BoundsReport(
        zeta=zeta, kappa=k, tau=tau, Ts=Ts,
        a0=first["a0"], a1=first["a1"], A0=first["A0"], A1=first["A1"],
        a2_2=second["a2"], a1_2=second["a1"], a0_2=second["a0"],
        A2_2=second["A2"], A1_2=second["A1"], A0_2=second["A0"],
        Ts_bar=Ts_bar, R_bar=R_bar, R_bar_recursion=R_rec, R_bar_mismatch=bool(mismatch),
        theorem1_satisfied=bool(ok),
        asymptotic_bound_linear=first["A0"] / (1 - A1_lin) if ok else math.nan,
    )


def correction_threshold(m, L, gamma, P, C_max=100000):
    """Smallest ``C`` for which the global condition holds at horizon `P`, or None."""
    zeta = contraction_factor(m, L, gamma)
    for C in range(C_max + 1):
        if theorem1_check(zeta, P, C, m, L, gamma)[1]:
            return C
    return None
