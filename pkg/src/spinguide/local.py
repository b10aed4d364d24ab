"""Local quantities of the angular-representation wavefunction.

Coordinates on the six-dimensional configuration manifold are ordered
``(x1, x2, x3, alpha, beta, gamma)``.  The metric is flat in the spatial
block and the SU(2) metric (scaled by the rotator length ``l``) in the
angular block.  Spatial derivatives come from the state provider (spectral
interpolation for grid snapshots, exact formulas for analytic states);
angular derivatives are always closed form.

Providers are any object with ``spinor_jet(x, t, order)`` and
``density_scale(t)``, e.g. ``SpinorField``, ``StateSeries`` or
``FreeGaussianSpinor``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NodeSingularity
from .fields import as_points
from .su2 import (BASIS_NORM, DEFAULT_POLE_MARGIN, SIGMA, a_matrix, angular_momentum_on_basis,
                  as_angles, basis_jet, quadrature_rule)

DEFAULT_NODE_RTOL = 1e-12
ANGULAR_DENSITY_MAX = BASIS_NORM**2  # |u1|^2 + |u2|^2 = 1 / (8 pi^2)


@dataclass
class WaveJet:
    """Value and derivatives of a scalar field on the 6-D manifold.

    ``grad`` has shape ``(6, P)`` and ``hess`` ``(6, 6, P)``.
    """

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray | None = None
    dt: np.ndarray | None = None


def _points(x, angles):
    pts = as_points(x)
    if isinstance(angles, np.ndarray) and angles.ndim == 2 and angles.shape[1] == 3:
        ang = angles.astype(float, copy=False)
    else:
        ang = np.atleast_2d(np.stack(as_angles(angles), axis=-1)).reshape(-1, 3)
    if pts.shape[0] == 1 and ang.shape[0] > 1:
        pts = np.repeat(pts, ang.shape[0], axis=0)
    elif ang.shape[0] == 1 and pts.shape[0] > 1:
        ang = np.repeat(ang, pts.shape[0], axis=0)
    if pts.shape[0] != ang.shape[0]:
        raise ValueError("positions and angles must have matching point counts")
    return pts, ang


def _single(x, angles=None):
    xs = np.asarray(x, float)
    if angles is None:
        return xs.ndim <= 1
    return xs.ndim <= 1 and np.asarray(np.stack(as_angles(angles), -1)).ndim <= 1


def _maybe_squeeze(arr, single):
    return arr[..., 0] if single else arr


def wave_jet(state, x, angles, t=None, order: int = 2) -> WaveJet:
    """Jet of ``psi(x, alpha) = Psi^a(x) u_a(alpha)`` at matching point lists."""
    pts, ang = _points(x, angles)
    sj = state.spinor_jet(pts, t=t, order=order)
    if order >= 2:
        u, du, d2u = basis_jet(ang, order=2)
    else:
        u, du = basis_jet(ang, order=1)
    # basis arrays have the point axis last: u (2, P), du (3, 2, P)
    u, du = u.reshape(2, -1), du.reshape(3, 2, -1)
    value = (sj.psi * u).sum(0)
    grad = np.empty((6, pts.shape[0]), dtype=complex)
    grad[:3] = (sj.d1 * u[None]).sum(1)
    grad[3:] = (sj.psi[None] * du).sum(1)
    hess = None
    if order >= 2:
        d2u = d2u.reshape(3, 3, 2, -1)
        hess = np.empty((6, 6, pts.shape[0]), dtype=complex)
        hess[:3, :3] = (sj.d2 * u[None, None]).sum(2)
        mixed = np.einsum("iap,rap->irp", sj.d1, du)
        hess[:3, 3:] = mixed
        hess[3:, :3] = np.transpose(mixed, (1, 0, 2))
        hess[3:, 3:] = (sj.psi[None, None] * d2u).sum(2)
    dt = None if sj.dt is None else (sj.dt * u).sum(0)
    return WaveJet(value, grad, hess, dt)


def inverse_metric6(alpha, l: float) -> np.ndarray:
    """``g^{mu nu}`` on the 6-D manifold, shape ``(6, 6, P)``."""
    alpha = np.atleast_1d(np.asarray(alpha, float))
    sa, ca = np.sin(alpha), np.cos(alpha)
    out = np.zeros((6, 6) + alpha.shape)
    for i in range(3):
        out[i, i] = 1.0
    out[3, 3] = l**-2
    out[4, 4] = out[5, 5] = l**-2 / sa**2
    out[4, 5] = out[5, 4] = -l**-2 * ca / sa**2
    return out


def lb_drift(alpha, l: float) -> np.ndarray:
    """``(1/sqrt g) d_mu (sqrt g g^{mu nu})``, shape ``(6, P)``."""
    alpha = np.atleast_1d(np.asarray(alpha, float))
    out = np.zeros((6,) + alpha.shape)
    out[3] = np.cos(alpha) / np.sin(alpha) / l**2
    return out


def laplace_beltrami(grad, hess, alpha, l: float):
    """Laplace-Beltrami operator from a field's first and second derivatives."""
    ginv = inverse_metric6(alpha, l)
    return np.einsum("mnp,mnp->p", ginv, hess) + np.einsum("np,np->p", lb_drift(alpha, l), grad)


def metric_dot(g1, g2, alpha, l: float):
    """``g^{mu nu} a_mu b_nu`` for two gradient arrays."""
    return np.einsum("mnp,mp,np->p", inverse_metric6(alpha, l), g1, g2)


def log_density_jet(jet: WaveJet):
    """First and second derivatives of ``log |psi|^2``."""
    r1 = jet.grad / jet.value
    L1 = 2 * r1.real
    L2 = None
    if jet.hess is not None:
        L2 = 2 * (jet.hess / jet.value - r1[:, None] * r1[None, :]).real
    return L1, L2


def node_threshold(state, t=None, rtol: float = DEFAULT_NODE_RTOL, angular: bool = True):
    """Density floor below which phase kernels are refused."""
    scale = state.density_scale(t)
    return rtol * scale * (ANGULAR_DENSITY_MAX if angular else 1.0)


def _check_nodes(rho, floor, what):
    if np.any(rho < floor):
        raise NodeSingularity(f"density {np.min(rho):.3e} below node threshold {floor:.3e} in {what}")


def rho_at(state, x, angles, t=None):
    """``rho(x, alpha) = |Psi^a(x) u_a(alpha)|^2``."""
    single = _single(x, angles)
    pts, ang = _points(x, angles)
    sj = state.spinor_jet(pts, t=t, order=0)
    u = basis_jet(ang, order=1)[0].reshape(2, -1)
    rho = np.abs((sj.psi * u).sum(0)) ** 2
    return _maybe_squeeze(rho, single)


def quantum_potential(state, x, angles, params, t=None, *, node_rtol: float = DEFAULT_NODE_RTOL):
    """Quantum potential ``-(hbar^2 / 2m) Lap(sqrt rho) / sqrt rho`` on the 6-D manifold.

    Uses ``Lap(sqrt rho)/sqrt rho = Lap(log rho)/2 + |grad log rho|^2 / 4``
    with the log-density jet built from ``psi`` (so ``rho`` never has to
    be differentiated numerically).
    """
    single = _single(x, angles)
    pts, ang = _points(x, angles)
    jet = wave_jet(state, pts, ang, t=t, order=2)
    _check_nodes(np.abs(jet.value) ** 2, node_threshold(state, t, node_rtol), "quantum_potential")
    L1, L2 = log_density_jet(jet)
    l = params.length
    q = -(params.hbar**2 / (2 * params.m)) * (
        0.5 * laplace_beltrami(L1, L2, ang[:, 0], l) + 0.25 * metric_dot(L1, L1, ang[:, 0], l)
    )
    return _maybe_squeeze(q, single)


def quantum_potential_parts(state, x, angles, params, t=None):
    """Spatial and angular contributions to the quantum potential, separately."""
    pts, ang = _points(x, angles)
    jet = wave_jet(state, pts, ang, t=t, order=2)
    L1, L2 = log_density_jet(jet)
    l = params.length
    ginv = inverse_metric6(ang[:, 0], l)
    drift = lb_drift(ang[:, 0], l)
    pre = -(params.hbar**2 / (2 * params.m))
    parts = []
    for sl in (slice(0, 3), slice(3, 6)):
        lap = (np.einsum("mnp,mnp->p", ginv[sl, sl], L2[sl, sl])
               + np.einsum("np,np->p", drift[sl], L1[sl]))
        sq = np.einsum("mnp,mp,np->p", ginv[sl, sl], L1[sl], L1[sl])
        parts.append(pre * (0.5 * lap + 0.25 * sq))
    return parts[0], parts[1]


def spin_vector(state, x, hbar: float = 1.0, t=None, *, node_rtol: float = DEFAULT_NODE_RTOL):
    """``s_i = hbar Psi^dagger sigma_i Psi / (2 Psi^dagger Psi)``, shape ``(3,)`` or ``(3, P)``."""
    single = _single(x)
    pts = as_points(x)
    psi = state.spinor_jet(pts, t=t, order=0).psi
    dens = (np.abs(psi) ** 2).sum(0)
    _check_nodes(dens, node_threshold(state, t, node_rtol, angular=False), "spin_vector")
    s = 0.5 * hbar * np.einsum("ap,iab,bp->ip", psi.conj(), SIGMA, psi).real / dens
    return _maybe_squeeze(s, single)


def spin_vector_angular(state, x, hbar: float = 1.0, t=None, order=(8, 6, 6)):
    """Angular form ``int psi^* M_i psi dOmega / int |psi|^2 dOmega``.

    ``M_i psi`` is obtained by differentiating the basis functions directly,
    not through the Pauli matrices.
    """
    single = _single(x)
    pts = as_points(x)
    psi = state.spinor_jet(pts, t=t, order=0).psi  # (2, P)
    rule = quadrature_rule(order)
    u = basis_jet(rule.angles, order=1)[0]  # (2, K)
    Mu = angular_momentum_on_basis(rule.angles, hbar, pole_margin=0.0)  # (3, 2, K)
    field = np.einsum("ap,ak->pk", psi, u)
    m_field = np.einsum("ap,iak->ipk", psi, Mu)
    num = rule.integrate(np.conj(field)[None] * m_field).real
    den = rule.integrate(np.abs(field) ** 2)
    return _maybe_squeeze(num / den, single)


@dataclass
class LocalState:
    """Gauge-free phase kernels at ``(x, alpha)``.

    Attributes
    ----------
    rho : density ``|psi|^2``
    grad_log_rho : ``(6, P)`` derivatives of ``log rho``
    phase_gradient : ``(3, P)`` spatial ``d_i S = hbar Im(d_i psi / psi)``
    angle_phase_gradient : ``(3, P)`` chart ``d_r S``
    angular_kernel : ``(3, P)`` ``Re(M_i psi / psi) = A_i^r d_r S``
    """

    rho: np.ndarray
    grad_log_rho: np.ndarray
    phase_gradient: np.ndarray
    angle_phase_gradient: np.ndarray
    angular_kernel: np.ndarray


def velocity_kernels(state, x, angles, params, t=None, *, node_rtol: float = DEFAULT_NODE_RTOL,
                     pole_margin: float = DEFAULT_POLE_MARGIN) -> LocalState:
    """Phase-derivative kernels without ever forming the phase itself."""
    pts, ang = _points(x, angles)
    jet = wave_jet(state, pts, ang, t=t, order=1)
    rho = np.abs(jet.value) ** 2
    _check_nodes(rho, node_threshold(state, t, node_rtol), "velocity_kernels")
    ratio = jet.grad / jet.value
    dS = params.hbar * ratio.imag
    A = a_matrix(ang, pole_margin=pole_margin).reshape(3, 3, -1)
    kernel = np.einsum("irp,rp->ip", A, dS[3:])
    return LocalState(rho, 2 * ratio.real, dS[:3], dS[3:], kernel)
