"""Geometry and operator algebra of the spin-1/2 rotator on the Euler chart.

The chart is ``(alpha, beta, gamma)`` with ``alpha in [0, pi]``,
``beta in [0, 2 pi)`` and ``gamma in [0, 4 pi)``; the invariant measure is
``dOmega = sin(alpha) dalpha dbeta dgamma`` with total volume ``16 pi^2``.

All angular derivatives of spin-1/2 states are evaluated in closed form.
Functions accept scalars or numpy arrays for the three angles and
broadcast over them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidOrder, PoleSingularity

TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi
BASIS_NORM = 1.0 / (2.0 * np.sqrt(2.0) * np.pi)
DEFAULT_POLE_MARGIN = 1e-8

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

# u_a = BASIS_NORM * T_a(alpha) * exp(i (p_a beta + q_a gamma))
_BETA_FREQ = np.array([-0.5, 0.5])
_GAMMA_FREQ = np.array([-0.5, -0.5])


@dataclass(frozen=True)
class EulerTriple:
    """A point on the Euler chart; fields may be floats or equal-shape arrays."""

    alpha: float | np.ndarray
    beta: float | np.ndarray
    gamma: float | np.ndarray

    @classmethod
    def from_array(cls, arr) -> "EulerTriple":
        arr = np.asarray(arr, dtype=float)
        return cls(arr[..., 0], arr[..., 1], arr[..., 2])

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.alpha, self.beta, self.gamma), axis=-1)

    def wrapped(self) -> "EulerTriple":
        """Reduce beta mod 2 pi and gamma mod 4 pi; alpha is left alone."""
        return EulerTriple(self.alpha, np.mod(self.beta, TWO_PI), np.mod(self.gamma, FOUR_PI))


def as_angles(angles):
    """Return ``(alpha, beta, gamma)`` as float arrays from any accepted form."""
    if isinstance(angles, np.ndarray) and angles.dtype == np.float64 and angles.ndim == 2 \
            and angles.shape[1] == 3:
        return angles[:, 0], angles[:, 1], angles[:, 2]
    if isinstance(angles, EulerTriple):
        a, b, g = angles.alpha, angles.beta, angles.gamma
    else:
        arr = np.asarray(angles, dtype=float)
        if arr.shape[-1] != 3:
            raise ValueError("angles must have a trailing axis of length 3")
        a, b, g = arr[..., 0], arr[..., 1], arr[..., 2]
    return np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(g, float))


def wrap_angles(arr: np.ndarray) -> np.ndarray:
    """Wrap an ``(..., 3)`` angle array: beta mod 2 pi, gamma mod 4 pi."""
    out = np.array(arr, dtype=float, copy=True)
    out[..., 1] = np.mod(out[..., 1], TWO_PI)
    out[..., 2] = np.mod(out[..., 2], FOUR_PI)
    return out


def angle_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Chart difference ``a - b`` with beta/gamma reduced to the symmetric interval."""
    d = np.asarray(a, float) - np.asarray(b, float)
    d = np.array(d, copy=True)
    d[..., 1] = (d[..., 1] + np.pi) % TWO_PI - np.pi
    d[..., 2] = (d[..., 2] + TWO_PI) % FOUR_PI - TWO_PI
    return d


@dataclass(frozen=True)
class RotatorParams:
    """Physical constants of the rigid rotator.

    ``l`` is derived as ``sqrt(I / m)`` when omitted; when given it must
    satisfy ``I = m l^2``.
    """

    m: float = 1.0
    I: float = 1.0
    l: float | None = None
    mm: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("m", "I", "mm", "hbar"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"RotatorParams.{name} must be strictly positive, got {value}")
        if self.l is not None:
            if self.l <= 0:
                raise ValueError("RotatorParams.l must be strictly positive")
            if abs(self.I - self.m * self.l**2) > 1e-12 * self.I:
                raise ValueError("moment of inertia inconsistent with I = m l^2")

    @property
    def length(self) -> float:
        return float(self.l) if self.l is not None else float(np.sqrt(self.I / self.m))


@dataclass(frozen=True)
class AngularMetric:
    g_lower: np.ndarray
    g_upper: np.ndarray | None
    sqrt_g: np.ndarray | float


@dataclass(frozen=True)
class BasisPair:
    u1: np.ndarray | complex
    u2: np.ndarray | complex

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.u1, self.u2))


def _check_pole(sin_a, margin, what):
    if np.any(np.abs(sin_a) < margin):
        raise PoleSingularity(f"|sin(alpha)| below pole margin {margin:g} in {what}")


def su2_metric(angles, l: float = 1.0, *, pole_margin: float = DEFAULT_POLE_MARGIN,
               upper: bool = True) -> AngularMetric:
    """Lower and upper angular metric blocks and the density ``l^3 |sin alpha|``.

    Matrix axes come first: ``g_lower[r, s, ...]``.
    """
    a, _, _ = as_angles(angles)
    ca, sa = np.cos(a), np.sin(a)
    one, zero = np.ones_like(a), np.zeros_like(a)
    g_lower = l**2 * np.array([[one, zero, zero], [zero, one, ca], [zero, ca, one]])
    g_upper = None
    if upper:
        _check_pole(sa, pole_margin, "su2_metric")
        csc, cot = 1.0 / sa, ca / sa
        g_upper = l**-2 * np.array(
            [[one, zero, zero], [zero, csc**2, -cot * csc], [zero, -cot * csc, csc**2]]
        )
    return AngularMetric(g_lower=g_lower, g_upper=g_upper, sqrt_g=l**3 * np.abs(sa))


def basis_u(angles) -> BasisPair:
    """The two spin-1/2 transformation functions on the chart."""
    a, b, g = as_angles(angles)
    u1 = BASIS_NORM * np.cos(a / 2) * np.exp(-0.5j * (b + g))
    u2 = -1j * BASIS_NORM * np.sin(a / 2) * np.exp(0.5j * (b - g))
    return BasisPair(u1, u2)


def basis_jet(angles, order: int = 1):
    """Closed-form values and chart derivatives of ``u_a``.

    Returns
    -------
    u : ndarray, shape (2, ...)
    du : ndarray, shape (3, 2, ...)
        ``du[r, a] = d u_a / d alpha^r``.
    d2u : ndarray, shape (3, 3, 2, ...), only when ``order >= 2``
    """
    a, b, g = as_angles(angles)
    half = a / 2
    # alpha profile and its derivatives for each component
    T = np.array([np.cos(half), -1j * np.sin(half)])
    dT = np.array([-0.5 * np.sin(half), -0.5j * np.cos(half)])
    phase = np.exp(1j * (_BETA_FREQ.reshape((2,) + (1,) * a.ndim) * b
                         + _GAMMA_FREQ.reshape((2,) + (1,) * a.ndim) * g))
    shape = (2,) + (1,) * a.ndim
    ip = 1j * _BETA_FREQ.reshape(shape)
    iq = 1j * _GAMMA_FREQ.reshape(shape)
    u = BASIS_NORM * T * phase
    du_alpha = BASIS_NORM * dT * phase
    du = np.array([du_alpha, ip * u, iq * u])
    if order < 2:
        return u, du
    d2u = np.empty((3, 3) + u.shape, dtype=complex)
    d2u[0, 0] = -0.25 * u  # T'' = -T/4 for both profiles
    d2u[0, 1] = d2u[1, 0] = ip * du_alpha
    d2u[0, 2] = d2u[2, 0] = iq * du_alpha
    d2u[1, 1] = ip * ip * u
    d2u[1, 2] = d2u[2, 1] = ip * iq * u
    d2u[2, 2] = iq * iq * u
    return u, du, d2u


def a_matrix(angles, *, pole_margin: float = DEFAULT_POLE_MARGIN) -> np.ndarray:
    """The ``A_i^r`` matrix, rows indexed by space axis, columns by angle."""
    a, b, _ = as_angles(angles)
    sa, ca = np.sin(a), np.cos(a)
    _check_pole(sa, pole_margin, "a_matrix")
    cot, csc = ca / sa, 1.0 / sa
    sb, cb = np.sin(b), np.cos(b)
    zero = np.zeros_like(a)
    return np.array(
        [
            [-cb, sb * cot, -sb * csc],
            [sb, cb * cot, -cb * csc],
            [zero, -np.ones_like(a), zero],
        ]
    )


def a_matrix_jacobian(angles, *, pole_margin: float = DEFAULT_POLE_MARGIN) -> np.ndarray:
    """``dA[i, r, s] = d A_i^r / d alpha^s`` in closed form."""
    a, b, _ = as_angles(angles)
    sa, ca = np.sin(a), np.cos(a)
    _check_pole(sa, pole_margin, "a_matrix_jacobian")
    cot, csc = ca / sa, 1.0 / sa
    sb, cb = np.sin(b), np.cos(b)
    zero = np.zeros_like(a)
    d_alpha = np.array(
        [
            [zero, -sb * csc**2, sb * csc * cot],
            [zero, -cb * csc**2, cb * csc * cot],
            [zero, zero, zero],
        ]
    )
    d_beta = np.array(
        [
            [sb, cb * cot, -cb * csc],
            [cb, -sb * cot, sb * csc],
            [zero, zero, zero],
        ]
    )
    d_gamma = np.zeros_like(d_alpha)
    return np.stack([d_alpha, d_beta, d_gamma], axis=2)


def a_matrix_divergence(angles) -> np.ndarray:
    """``d_r (sin(alpha) A_i^r)`` for each axis ``i``; identically zero."""
    a, _, _ = as_angles(angles)
    A = a_matrix(angles, pole_margin=0.0)
    dA = a_matrix_jacobian(angles, pole_margin=0.0)
    trace = dA[:, 0, 0] + dA[:, 1, 1] + dA[:, 2, 2]
    return np.cos(a) * A[:, 0] + np.sin(a) * trace


def apply_angular_momentum(i: int, spinor, hbar: float = 1.0) -> np.ndarray:
    """Coefficients of ``M_i (Psi^a u_a)`` in the ``u_a`` basis.

    ``i`` is the space axis, 1-based.
    """
    if i not in (1, 2, 3):
        raise ValueError("axis must be 1, 2 or 3")
    spinor = np.asarray(spinor, dtype=complex)
    return 0.5 * hbar * np.tensordot(SIGMA[i - 1], spinor, axes=(1, 0))


def angular_momentum_on_basis(angles, hbar: float = 1.0, *,
                              pole_margin: float = DEFAULT_POLE_MARGIN) -> np.ndarray:
    """``M_i u_b`` by direct differentiation, shape ``(3, 2, ...)``."""
    A = a_matrix(angles, pole_margin=pole_margin)
    _, du = basis_jet(angles)
    return -1j * hbar * np.einsum("ir...,rb...->ib...", A, du)


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor rule on the chart; ``weights`` already include ``sin(alpha)``."""

    angles: EulerTriple
    weights: np.ndarray

    def integrate(self, values) -> np.ndarray:
        return np.tensordot(np.asarray(values), self.weights, axes=(-1, 0))


def quadrature_rule(order=(8, 6, 6)) -> QuadratureRule:
    """Gauss-Legendre in ``cos(alpha)``, uniform trapezoid in ``beta`` and ``gamma``."""
    if np.isscalar(order):
        order = (int(order),) * 3
    n_alpha, n_beta, n_gamma = (int(n) for n in order)
    if min(n_alpha, n_beta, n_gamma) < 2:
        raise InvalidOrder(f"quadrature node counts must be >= 2, got {order}")
    x, wx = np.polynomial.legendre.leggauss(n_alpha)
    alpha = np.arccos(x)
    beta = TWO_PI * np.arange(n_beta) / n_beta
    gamma = FOUR_PI * np.arange(n_gamma) / n_gamma
    A, B, G = np.meshgrid(alpha, beta, gamma, indexing="ij")
    W = (wx[:, None, None] * (TWO_PI / n_beta) * (FOUR_PI / n_gamma)
         * np.ones((1, n_beta, n_gamma)))
    return QuadratureRule(EulerTriple(A.ravel(), B.ravel(), G.ravel()), W.ravel())


def su2_quadrature(integrand: Callable, order=(8, 6, 6)):
    """Integrate ``integrand(EulerTriple) -> array`` against ``dOmega``.

    The integrand is called once with array-valued angles of shape ``(K,)``
    and may return shape ``(..., K)``.
    """
    rule = quadrature_rule(order)
    return rule.integrate(integrand(rule.angles))


def spinor_transform(direction: str, state, order=(8, 6, 6)):
    """Switch between the spinor and the angular representation.

    ``to_angular`` maps a 2-spinor (shape ``(2, ...)``) to a callable
    ``psi(angles)``; ``to_spinor`` projects such a callable back with
    ``Psi^a = int u_a^* psi dOmega``.
    """
    if direction == "to_angular":
        coeffs = np.asarray(state, dtype=complex)
        if coeffs.shape != (2,):
            raise ValueError("to_angular expects a single 2-spinor")

        def psi(angles):
            return np.tensordot(coeffs, basis_u(angles).as_array(), axes=(0, 0))
        return psi
    if direction == "to_spinor":
        def integrand(ang):
            u = basis_u(ang).as_array()
            return np.conj(u) * state(ang)
        return su2_quadrature(integrand, order)
    raise ValueError(f"unknown direction {direction!r}")


def sigma_from_integrals(hbar: float = 1.0, order=(8, 6, 6)) -> np.ndarray:
    """``int u_a^* M_i u_b dOmega`` for ``i = 1, 2, 3``, shape ``(3, 2, 2)``.

    Equals ``(hbar / 2) sigma_i``.
    """
    rule = quadrature_rule(order)
    u = basis_u(rule.angles).as_array()
    Mu = angular_momentum_on_basis(rule.angles, hbar, pole_margin=0.0)
    integrand = np.conj(u)[None, :, None, :] * Mu[:, None, :, :]
    return rule.integrate(integrand)
