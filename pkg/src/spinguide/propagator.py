"""Time evolution of the 2-spinor under the Pauli Hamiltonian.

The Hamiltonian acting on ``Psi^a`` is

    H = (p - A)^2 / 2m + V + mm (hbar / 2) B . sigma

with the rotor variant adding the scalar pieces ``3 hbar^2 / 8I`` and
``I mm^2 B^2 / 2`` obtained by reducing ``(M + mm I B)^2 / 2I`` on the
spin-1/2 subspace.  Two schemes are provided:

* ``split_step_spectral``: Strang splitting, half kinetic step in k-space,
  full potential-and-spin step as an exact pointwise 2x2 unitary, half
  kinetic step.  Needs a spatially uniform ``A``.
* ``crank_nicolson``: the Cayley form of the full Hamiltonian.  Solved
  exactly per wavevector when all fields are uniform, otherwise by GMRES
  with a kinetic preconditioner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .analytic import FreeGaussianSpinor
from .errors import PacketTooWide, UnstableStep
from .fields import ExternalFields, GridSpec, SpinorField, StateSeries
from .su2 import SIGMA, RotatorParams

SCHEMES = ("split_step_spectral", "crank_nicolson")
VARIANTS = ("pauli_eq29", "bopp_haag_eq27")
NORM_DRIFT_TOL = 1e-6


@dataclass(frozen=True)
class PropagatorConfig:
    """Time-stepping settings.

    Both schemes are unconditionally stable; accuracy requires
    ``dt * E_max / hbar`` small, where ``E_max`` is the largest kinetic
    energy resolved on the grid for the split-step phase error and the
    spectral width of the state for Crank-Nicolson.
    """

    dt: float
    scheme: str = "split_step_spectral"
    variant: str = "pauli_eq29"
    steps_per_output: int = 1
    gmres_tol: float = 1e-13

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.steps_per_output < 1:
            raise ValueError("steps_per_output must be >= 1")


@dataclass(frozen=True)
class InitialState:
    """Gaussian packet with a constant polarization."""

    center: tuple = (0.0,)
    width: float = 1.0
    wavevector: tuple = (0.0,)
    polarization: tuple = (1.0, 0.0)

    def __post_init__(self):
        pol = np.asarray(self.polarization, dtype=complex)
        if pol.shape != (2,):
            raise ValueError("polarization must be a 2-vector")
        if abs(np.linalg.norm(pol) - 1.0) > 1e-12:
            raise ValueError("polarization must have unit norm")
        if not self.width > 0:
            raise ValueError("packet width must be positive")


def _pad(v, n):
    v = list(np.atleast_1d(np.asarray(v, dtype=float)))
    return tuple((v + [0.0] * n)[:n])


def init_state(grid: GridSpec, init: InitialState, params: RotatorParams | None = None) -> SpinorField:
    """Sample a normalized polarized Gaussian packet on ``grid``."""
    if init.width < 2 * max(grid.spacing):
        raise PacketTooWide(f"packet width {init.width} is below two grid spacings")
    if init.width > min(grid.extent) / 8:
        raise PacketTooWide(f"packet width {init.width} exceeds extent/8 of the box")
    d = grid.dims
    spec = FreeGaussianSpinor.polarized(
        init.polarization, center=_pad(init.center, 3), sigma=[init.width] * d + [1.0] * (3 - d),
        k=_pad(init.wavevector, 3), params=params or RotatorParams(), dims=d, period=grid.extent)
    return spec.to_field(grid, 0.0).normalized()


# ---------------------------------------------------------------- Hamiltonian pieces

def _mesh_k(grid):
    return np.meshgrid(*grid.wavenumbers(), indexing="ij")


def _field_arrays(fields: ExternalFields, grid: GridSpec, t: float):
    """``A (3, *shape)``, ``B (3, *shape)``, ``V (*shape)`` on the grid."""
    A, B, V = fields.at(grid.points3(), t)
    shape = grid.shape
    return A.T.reshape((3,) + shape), B.T.reshape((3,) + shape), V.reshape(shape)


def _scalar_extra(B, params: RotatorParams, variant: str):
    """Scalar terms of the rotor variant (zero for the Pauli variant)."""
    if variant != "bopp_haag_eq27":
        return 0.0
    b2 = (B**2).sum(0)
    return 3 * params.hbar**2 / (8 * params.I) + 0.5 * params.I * params.mm**2 * b2


def _spin_unitary(values, B, V, params, dt):
    """Apply ``exp(-i dt (V + mm (hbar/2) B.sigma) / hbar)`` pointwise.

    Rodrigues form: ``exp(-i theta n.sigma) = cos(theta) - i sin(theta) n.sigma``.
    """
    bnorm = np.sqrt((B**2).sum(0))
    theta = 0.5 * params.mm * bnorm * dt
    safe = np.where(bnorm > 0, bnorm, 1.0)
    n = B / safe
    c, s = np.cos(theta), np.sin(theta)
    phase = np.exp(-1j * V * dt / params.hbar)
    up, dn = values[0], values[1]
    # n.sigma = [[n3, n1 - i n2], [n1 + i n2, -n3]]
    new_up = c * up - 1j * s * (n[2] * up + (n[0] - 1j * n[1]) * dn)
    new_dn = c * dn - 1j * s * ((n[0] + 1j * n[1]) * up - n[2] * dn)
    return phase * np.array([new_up, new_dn])


def _kinetic_symbol(grid, A_uniform, params):
    """``(hbar k - A)^2 / 2m`` on the k-grid."""
    ks = _mesh_k(grid)
    e = np.zeros(grid.shape)
    for j, kj in enumerate(ks):
        e += (params.hbar * kj - A_uniform[j]) ** 2
    return e / (2 * params.m)


def _fft(v, grid):
    return np.fft.fftn(v, axes=tuple(range(1, grid.dims + 1)))


def _ifft(v, grid):
    return np.fft.ifftn(v, axes=tuple(range(1, grid.dims + 1)))


def apply_hamiltonian(values, grid, A, B, V, params, variant="pauli_eq29"):
    """``H Psi`` with spectral derivatives, for arrays on ``grid``."""
    hbar, m = params.hbar, params.m
    ks = _mesh_k(grid)
    vk = _fft(values, grid)

    def p(j, arr_k):  # -i hbar d_j in k-space
        return hbar * ks[j] * arr_k

    out = np.zeros_like(values)
    for j in range(grid.dims):
        pPsi = _ifft(p(j, vk), grid)
        pApsi = _ifft(p(j, _fft(A[j] * values, grid)), grid)
        out += (_ifft(p(j, p(j, vk)), grid) - pApsi - A[j] * pPsi) / (2 * m)
    a2 = (A**2).sum(0)
    out += (a2 / (2 * m) + V + _scalar_extra(B, params, variant)) * values
    out += 0.5 * hbar * params.mm * np.einsum("i...,iab,b...->a...", B, SIGMA, values)
    return out


# ---------------------------------------------------------------- steppers

def _split_step(state, fields, params, cfg, dt):
    grid, t = state.grid, state.time
    A, B, V = _field_arrays(fields, grid, t + 0.5 * dt)
    A0 = A.reshape(3, -1)[:, 0]
    if np.abs(A - A0.reshape((3,) + (1,) * grid.dims)).max() > 1e-13 * max(1.0, np.abs(A).max()):
        raise ValueError("split_step_spectral needs a spatially uniform vector potential; "
                         "use crank_nicolson")
    kin = _kinetic_symbol(grid, A0, params)
    half = np.exp(-0.5j * dt * kin / params.hbar)
    psi = _ifft(half * _fft(state.values, grid), grid)
    psi = _spin_unitary(psi, B, V + _scalar_extra(B, params, cfg.variant), params, dt)
    psi = _ifft(half * _fft(psi, grid), grid)
    return psi


def _cayley_uniform(state, A0, B0, V0, params, cfg, dt):
    """Exact Cayley step per wavevector for uniform fields."""
    grid = state.grid
    kin = _kinetic_symbol(grid, A0, params)
    extra = _scalar_extra(B0.reshape(3, 1), params, cfg.variant)
    e0 = kin + V0 + float(np.atleast_1d(extra)[0])
    b = 0.5 * params.hbar * params.mm * B0
    bn = float(np.linalg.norm(b))
    r = 0.5j * dt / params.hbar

    def cay(lam):
        return (1 - r * lam) / (1 + r * lam)

    cp, cm = cay(e0 + bn), cay(e0 - bn)
    vk = _fft(state.values, grid)
    mean = 0.5 * (cp + cm) * vk
    if bn == 0:
        return _ifft(mean, grid)
    n = b / bn
    ns = np.einsum("i,iab->ab", n, SIGMA)
    diff = 0.5 * (cp - cm) * np.einsum("ab,b...->a...", ns, vk)
    return _ifft(mean + diff, grid)


def _cayley_gmres(state, fields, params, cfg, dt):
    grid = state.grid
    A, B, V = _field_arrays(fields, grid, state.time + 0.5 * dt)
    r = 0.5j * dt / params.hbar
    shape = state.values.shape

    def H(v):
        return apply_hamiltonian(v, grid, A, B, V, params, cfg.variant)

    rhs = state.values - r * H(state.values)
    A_mean = A.reshape(3, -1).mean(1)
    kin = _kinetic_symbol(grid, A_mean, params) + V.mean()
    precond = 1.0 / (1 + r * kin)

    op = LinearOperator((rhs.size, rhs.size), dtype=complex,
                        matvec=lambda v: (lambda w: (w + r * H(w)).ravel())(v.reshape(shape)))
    M = LinearOperator((rhs.size, rhs.size), dtype=complex,
                       matvec=lambda v: _ifft(precond * _fft(v.reshape(shape), grid), grid).ravel())
    sol, info = gmres(op, rhs.ravel(), x0=state.values.ravel(), M=M, rtol=cfg.gmres_tol,
                      atol=0.0, restart=60, maxiter=200)
    if info != 0:
        raise UnstableStep(f"GMRES did not converge (info={info})")
    return sol.reshape(shape)


def step(state: SpinorField, fields: ExternalFields, params: RotatorParams,
         cfg: PropagatorConfig, dt: float | None = None) -> SpinorField:
    """Advance ``state`` by one step ``dt`` (default ``cfg.dt``)."""
    dt = cfg.dt if dt is None else float(dt)
    if cfg.scheme == "split_step_spectral":
        new = _split_step(state, fields, params, cfg, dt)
    else:
        uni = fields.uniform_values(state.grid, state.time + 0.5 * dt)
        if uni is not None:
            new = _cayley_uniform(state, *uni, params, cfg, dt)
        else:
            new = _cayley_gmres(state, fields, params, cfg, dt)
    out = state.replace(values=new, time=state.time + dt)
    n0, n1 = state.norm(), out.norm()
    if not np.isfinite(n1) or abs(n1 - n0) > NORM_DRIFT_TOL * n0:
        raise UnstableStep(f"norm drifted from {n0:.12f} to {n1:.12f} in one step")
    return out


def propagate(state: SpinorField, fields: ExternalFields, params: RotatorParams,
              cfg: PropagatorConfig, t_final: float) -> StateSeries:
    """Evolve to ``t_final`` and return snapshots every ``steps_per_output`` steps.

    The step is shrunk uniformly so that an integer number of steps lands
    exactly on ``t_final``.
    """
    span = t_final - state.time
    if not span > 0:
        raise ValueError("t_final must be later than the state time")
    n = max(1, math.ceil(span / cfg.dt - 1e-9))
    dt = span / n
    frames = [state]
    cur = state
    for i in range(1, n + 1):
        cur = step(cur, fields, params, cfg, dt)
        if i == n:
            cur = cur.replace(time=t_final)
        if i % cfg.steps_per_output == 0 or i == n:
            frames.append(cur)
    return StateSeries(tuple(frames))


def observables(state: SpinorField, hbar: float = 1.0) -> dict:
    """Norm, mean position and mean spin ``<(hbar/2) sigma>`` of a snapshot."""
    grid = state.grid
    dens = state.density()
    dv = grid.cell_volume
    norm = float(dens.sum() * dv)
    mean_pos = np.zeros(3)
    for j, mj in enumerate(grid.mesh()):
        mean_pos[j] = float((mj * dens).sum() * dv / norm)
    psi = state.values.reshape(2, -1)
    spin = 0.5 * hbar * np.einsum("ap,iab,bp->i", psi.conj(), SIGMA, psi).real * dv / norm
    return {"time": state.time, "norm": norm, "mean_position": mean_pos, "mean_spin": spin}
