r"""
Forward-backward envelope.

For a smooth :math:`\varphi` and a nonsmooth :math:`g`, the envelope with
parameter :math:`\gamma \in (0, 1/L)` is

.. math::

    M(x) = \min_y \Big\{ \varphi(x) + \langle \nabla\varphi(x), y - x \rangle
           + g(y) + \frac{1}{2\gamma}\|y - x\|^2 \Big\},

attained at the forward-backward point
:math:`T(x) = \mathrm{prox}_{\gamma g}(x - \gamma\nabla\varphi(x))`.
Its gradient factors as :math:`\nabla M(x) = (I - \gamma\nabla^2\varphi(x)) R(x)`
with the residual :math:`R(x) = (x - T(x)) / \gamma`.

The smooth argument is any object exposing ``value(x)``, ``grad(x)`` and
(for the gradient) ``hess_vec(x, v)``, e.g. `problem.Quadratic`,
`problem.FixedTimeSmooth` or a prediction model.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvelopeParams:
    """Envelope step `gamma`; pass `L` to check ``0 < gamma < 1/L`` on construction."""

    gamma: float
    L: float = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must lie in (0, 1/L): got a nonpositive value")
        if self.L is not None and not self.gamma * self.L < 1:
            raise ValueError(f"gamma must lie in (0, 1/L): gamma={self.gamma}, 1/L={1 / self.L}")

    @classmethod
    def from_factor(cls, factor, L):
        """``gamma = factor / L`` with ``factor`` in (0, 1)."""
        if not 0 < factor < 1:
            raise ValueError(f"gamma must lie in (0, 1/L): factor {factor} not in (0, 1)")
        return cls(factor / L, L)


@dataclass
class EnvelopeEval:
    """Envelope quantities at a point `x`."""

    x: np.ndarray
    value: float
    grad_phi: np.ndarray
    fb_point: np.ndarray
    residual: np.ndarray
    gradient: np.ndarray = None


def _fb(smooth, nonsmooth, x, gamma, grad_phi=None):
    if grad_phi is None:
        grad_phi = smooth.grad(x)
    y = nonsmooth.prox(x - gamma * grad_phi, gamma)
    return grad_phi, y


def _value(smooth, nonsmooth, x, gamma, grad_phi, y):
    d = y - x
    return smooth.value(x) + grad_phi @ d + nonsmooth.value(y) + d @ d / (2 * gamma)


def forward_backward_step(smooth, nonsmooth, x, params):
    """Return ``prox_{gamma g}(x - gamma grad phi(x))``."""
    x = np.asarray(x, dtype=float)
    return _fb(smooth, nonsmooth, x, params.gamma)[1]


def residual(smooth, nonsmooth, x, params):
    """Fixed-point residual ``(x - T(x)) / gamma``."""
    x = np.asarray(x, dtype=float)
    return (x - forward_backward_step(smooth, nonsmooth, x, params)) / params.gamma


def fbe_value(smooth, nonsmooth, x, params):
    """Envelope value, with the inner minimization solved in closed form."""
    x = np.asarray(x, dtype=float)
    grad_phi, y = _fb(smooth, nonsmooth, x, params.gamma)
    return _value(smooth, nonsmooth, x, params.gamma, grad_phi, y)


def fbe_gradient(smooth, nonsmooth, x, params):
    """Envelope gradient ``R(x) - gamma * hess(x) R(x)``; needs ``hess_vec``."""
    return evaluate(smooth, nonsmooth, x, params).gradient


def evaluate(smooth, nonsmooth, x, params, gradient=True, grad_phi=None):
    """
    Compute every envelope quantity at `x` sharing one gradient evaluation.

    Parameters
    ----------
    gradient : bool, optional
        Also compute the envelope gradient (one Hessian-vector product).
    grad_phi : ndarray, optional
        Precomputed ``grad phi(x)``, reused instead of calling the oracle.

    Returns
    -------
    EnvelopeEval
    """
    gamma = params.gamma
    x = np.asarray(x, dtype=float)
    grad_phi, y = _fb(smooth, nonsmooth, x, gamma, grad_phi)
    value = _value(smooth, nonsmooth, x, gamma, grad_phi, y)
    res = (x - y) / gamma
    ev = EnvelopeEval(x=x, value=value, grad_phi=grad_phi, fb_point=y, residual=res)
    if gradient:
        ev.gradient = res - gamma * smooth.hess_vec(x, res)
    return ev
