"""Closed-form solutions of the free equations, used as oracles.

Each spinor component is a product over active axes of free Gaussian
packets (or plane waves) with exact space and time derivatives.  With
``rotor_phase=True`` the angular-representation wavefunction
``Psi^a u_a`` also solves the free six-dimensional equation, whose
rotational energy on the spin-1/2 subspace is ``3 hbar^2 / 8 I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import GridSpec, SpinorField, SpinorJet, as_points
from .su2 import RotatorParams


@dataclass(frozen=True)
class GaussianComponent:
    """One spinor component ``amplitude * prod_j phi_j(x_j, t)``.

    ``sigma[j] > 0`` gives a spreading Gaussian of initial width
    ``sigma[j]``; ``sigma[j] = 0`` gives a plane wave ``exp(i k x)``.
    """

    amplitude: complex
    center: tuple = (0.0, 0.0, 0.0)
    sigma: tuple = (1.0, 1.0, 1.0)
    k: tuple = (0.0, 0.0, 0.0)


def _pad3(v, fill=0.0):
    v = list(np.atleast_1d(np.asarray(v, dtype=float)))
    return tuple(v + [fill] * (3 - len(v)))


def packet_factor(x, t, x0, sigma, k, params: RotatorParams, period=None):
    """1-D free packet and its derivatives ``(f, f_x, f_xx, f_t)``.

    With ``period`` the periodic images at ``x0 + n L``, ``n = -1, 0, 1``
    are summed, which keeps the factor smooth on a periodic box.
    """
    hbar, m = params.hbar, params.m
    x = np.asarray(x, dtype=float)
    shifts = (0.0,) if period is None else (-period, 0.0, period)
    f = fx = fxx = ft = 0.0
    for s in shifts:
        X = x - x0 - s
        if sigma == 0:
            w = np.exp(1j * (k * X - hbar * k * k * t / (2 * m)))
            f = f + w
            fx = fx + 1j * k * w
            fxx = fxx - (k * k) * w
            ft = ft - 1j * hbar * k * k / (2 * m) * w
            if period is not None:
                break  # a commensurate plane wave is its own image
            continue
        tau_rate = hbar / (2 * m * sigma**2)
        tau = tau_rate * t
        z = 1 + 1j * tau
        N = -(X**2) / (4 * sigma**2) + 1j * k * X - 1j * sigma**2 * k * k * tau
        w = (2 * np.pi * sigma**2) ** -0.25 * z**-0.5 * np.exp(N / z)
        E1 = (-X / (2 * sigma**2) + 1j * k) / z
        E2 = -1.0 / (2 * sigma**2 * z)
        dlog_tau = -0.5j / z + (-1j * sigma**2 * k * k) / z - 1j * N / z**2
        f = f + w
        fx = fx + E1 * w
        fxx = fxx + (E2 + E1**2) * w
        ft = ft + tau_rate * dlog_tau * w
    return f, fx, fxx, ft


@dataclass(frozen=True)
class FreeGaussianSpinor:
    """Exact free solution ``Psi^a(x, t)`` built from Gaussian components.

    Parameters
    ----------
    components : sequence of two GaussianComponent (or None for a zero component)
    params : RotatorParams
    dims : int
        Number of active spatial axes; the remaining axes are constant.
    rotor_phase : bool
        Multiply by ``exp(-i 3 hbar t / 8 I)`` so that ``Psi^a u_a`` solves
        the free equation on the full six-dimensional manifold.
    period : tuple, optional
        Box lengths for periodic image summation.
    """

    components: tuple
    params: RotatorParams = field(default_factory=RotatorParams)
    dims: int = 1
    rotor_phase: bool = False
    period: tuple | None = None

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) != 2:
            raise ValueError("a spinor needs exactly two components")
        object.__setattr__(self, "components", comps)
        if not 1 <= self.dims <= 3:
            raise ValueError("dims must be 1, 2 or 3")

    @classmethod
    def polarized(cls, polarization, center=0.0, sigma=1.0, k=0.0, **kwargs):
        """Common spatial packet times a constant polarization ``c^a``."""
        c = np.asarray(polarization, complex)
        comps = [GaussianComponent(complex(ca), _pad3(center), _pad3(sigma, 1.0), _pad3(k))
                 if ca != 0 else None for ca in c]
        return cls(tuple(comps), **kwargs)

    def _rotor(self, t):
        if not self.rotor_phase:
            return 1.0, 0.0
        omega = 3 * self.params.hbar / (8 * self.params.I)
        return np.exp(-1j * omega * t), -1j * omega

    def spinor_jet(self, x, t=None, order: int = 2) -> SpinorJet:
        t = 0.0 if t is None else float(t)
        pts = as_points(x)
        P = pts.shape[0]
        psi = np.zeros((2, P), complex)
        d1 = np.zeros((3, 2, P), complex)
        d2 = np.zeros((3, 3, 2, P), complex) if order >= 2 else None
        dt = np.zeros((2, P), complex)
        D = self.dims
        for a, comp in enumerate(self.components):
            if comp is None:
                continue
            facs = [packet_factor(pts[:, j], t, comp.center[j], comp.sigma[j], comp.k[j],
                                  self.params, None if self.period is None else self.period[j])
                    for j in range(D)]
            vals = [f[0] for f in facs]

            def prod_except(*skip):
                out = comp.amplitude
                for n in range(D):
                    if n not in skip:
                        out = out * vals[n]
                return out

            psi[a] = prod_except()
            for j in range(D):
                others = prod_except(j)
                d1[j, a] = others * facs[j][1]
                dt[a] += others * facs[j][3]
                if d2 is not None:
                    d2[j, j, a] = others * facs[j][2]
                    for i in range(j + 1, D):
                        d2[i, j, a] = d2[j, i, a] = prod_except(i, j) * facs[i][1] * facs[j][1]
        if self.rotor_phase:
            rot, rate = self._rotor(t)
            psi, d1 = psi * rot, d1 * rot
            d2 = None if d2 is None else d2 * rot
            dt = dt * rot + rate * psi
        return SpinorJet(psi, d1, d2, dt)

    def density_scale(self, t=None) -> float:
        """Upper bound on ``Psi^dagger Psi`` (sum of component peaks)."""
        t = 0.0 if t is None else float(t)
        total = 0.0
        for comp in self.components:
            if comp is None:
                continue
            peak = abs(comp.amplitude) ** 2
            for j in range(self.dims):
                s = comp.sigma[j]
                if s > 0:
                    tau = self.params.hbar * t / (2 * self.params.m * s**2)
                    peak /= np.sqrt(2 * np.pi * s**2 * (1 + tau**2))
            total += peak
        return total

    def to_field(self, grid: GridSpec, t: float = 0.0, **kwargs) -> SpinorField:
        """Sample on ``grid`` (the grid must have ``dims`` axes)."""
        if grid.dims != self.dims:
            raise ValueError("grid dimensionality does not match the analytic state")
        psi = self.spinor_jet(grid.points3(), t, order=0).psi
        return SpinorField(grid, psi.reshape((2,) + grid.shape), t, **kwargs)
