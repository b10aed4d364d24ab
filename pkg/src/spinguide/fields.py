"""Periodic grids, spinor field snapshots and prescribed external fields.

Snapshots are immutable; spectral coefficients and derivative arrays are
computed lazily and cached on the instance.  Off-grid evaluation uses
band-limited Fourier interpolation by default and periodic cubic splines
as a fallback.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
from scipy import ndimage

from .errors import CurlMismatch

MIN_POINTS = 8


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid in 1 to 3 spatial dimensions.

    ``origin`` is the coordinate of the first node and defaults to
    ``-extent / 2`` so that the box is centred on zero.
    """

    extent: tuple
    points: tuple
    origin: tuple | None = None

    def __post_init__(self):
        extent = tuple(float(e) for e in np.atleast_1d(self.extent))
        points = tuple(int(p) for p in np.atleast_1d(self.points))
        if not 1 <= len(extent) <= 3 or len(points) != len(extent):
            raise ValueError("grid needs 1 to 3 dimensions with matching extent/points")
        if any(p < MIN_POINTS for p in points):
            raise ValueError(f"grid needs at least {MIN_POINTS} points per dimension")
        if any(e <= 0 for e in extent):
            raise ValueError("grid extent must be positive")
        origin = (tuple(-e / 2 for e in extent) if self.origin is None
                  else tuple(float(o) for o in np.atleast_1d(self.origin)))
        if len(origin) != len(extent):
            raise ValueError("origin must match grid dimensions")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple:
        return self.points

    @property
    def spacing(self) -> tuple:
        return tuple(e / n for e, n in zip(self.extent, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def center(self) -> np.ndarray:
        return np.array([o + e / 2 for o, e in zip(self.origin, self.extent)])

    def axes(self) -> list:
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.points)]

    def mesh(self) -> list:
        return np.meshgrid(*self.axes(), indexing="ij")

    def wavenumbers(self) -> list:
        return [2 * np.pi * np.fft.fftfreq(n, d=h) for n, h in zip(self.points, self.spacing)]

    def points3(self) -> np.ndarray:
        """All grid nodes as an ``(N, 3)`` array, zero in inactive dimensions."""
        pts = np.zeros((int(np.prod(self.points)), 3))
        for j, m in enumerate(self.mesh()):
            pts[:, j] = m.ravel()
        return pts


class SpinorJet(NamedTuple):
    """Spinor values and spatial derivatives at a set of points.

    ``psi`` has shape ``(2, P)``, ``d1`` shape ``(3, 2, P)`` and ``d2`` shape
    ``(3, 3, 2, P)``.  Inactive dimensions carry zero derivatives.  ``dt``
    is the time derivative when the provider knows it.
    """

    psi: np.ndarray
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None
    dt: np.ndarray | None = None

    def scaled(self, weight: float) -> "SpinorJet":
        return SpinorJet(*(None if a is None else weight * a for a in self))

    def __add__(self, other):
        return SpinorJet(*(None if a is None or b is None else a + b
                           for a, b in zip(self, other)))


def as_points(x) -> np.ndarray:
    """Coerce positions to an ``(P, 3)`` float array, padding missing axes with 0."""
    if isinstance(x, np.ndarray) and x.ndim == 2 and x.shape[1] == 3 and x.dtype == np.float64:
        return x
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] < 3:
        x = np.concatenate([x, np.zeros(x.shape[:-1] + (3 - x.shape[-1],))], axis=-1)
    return x.reshape(-1, 3)


def _fourier_bases(xj, n, L, origin, max_order):
    """Per-dimension interpolation bases ``[B, B', B'']`` of shape ``(P, n)``."""
    k = 2 * np.pi * np.fft.fftfreq(n, d=L / n)
    phase = np.outer(xj - origin, k)
    E = np.exp(1j * phase)
    out = [E]
    if max_order >= 1:
        out.append(1j * k * E)
    if max_order >= 2:
        out.append(-(k**2) * E)
    if n % 2 == 0:
        # Nyquist mode as a real cosine so the interpolant is smooth
        j = n // 2
        kn = np.pi * n / L
        arg = kn * (xj - origin)
        out[0][:, j] = np.cos(arg)
        if max_order >= 1:
            out[1][:, j] = -kn * np.sin(arg)
        if max_order >= 2:
            out[2][:, j] = -(kn**2) * np.cos(arg)
    return out


def _contract(coeffs, bases):
    """Evaluate ``sum_k c[a, k...] prod_j B_j[p, k_j]`` -> ``(2, P)``."""
    d = len(bases)
    if d == 1:
        return (coeffs[:, None, :] * bases[0][None]).sum(-1)
    if d == 2:
        t = np.einsum("akl,pl->apk", coeffs, bases[1], optimize=False)
        return (t * bases[0][None]).sum(-1)
    t = np.einsum("aklm,pm->apkl", coeffs, bases[2], optimize=False)
    t = np.einsum("apkl,pl->apk", t, bases[1], optimize=False)
    return (t * bases[0][None]).sum(-1)


def spectral_derivative(values: np.ndarray, grid: GridSpec, axis: int, order: int = 1):
    """Spectral derivative of a periodic array whose trailing axes are the grid."""
    lead = values.ndim - grid.dims
    ax = lead + axis
    k = grid.wavenumbers()[axis]
    n = grid.points[axis]
    mult = (1j * k) ** order
    if n % 2 == 0 and order % 2 == 1:
        mult[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[ax] = n
    out = np.fft.ifft(np.fft.fft(values, axis=ax) * mult.reshape(shape), axis=ax)
    return out if np.iscomplexobj(values) else out.real


def fd4_derivative(values: np.ndarray, grid: GridSpec, axis: int, order: int = 1):
    """Fourth-order periodic central differences (first or second derivative)."""
    ax = values.ndim - grid.dims + axis
    h = grid.spacing[axis]
    r = lambda s: np.roll(values, -s, axis=ax)  # noqa: E731  value at i + s
    if order == 1:
        return (-r(2) + 8 * r(1) - 8 * r(-1) + r(-2)) / (12 * h)
    if order == 2:
        return (-r(2) + 16 * r(1) - 30 * values + 16 * r(-1) - r(-2)) / (12 * h * h)
    raise ValueError("fd4 supports first and second derivatives")


def grid_derivative(values, grid, axis, order=1, method="spectral"):
    if method == "spectral":
        return spectral_derivative(values, grid, axis, order)
    if method == "fd4":
        return fd4_derivative(values, grid, axis, order)
    raise ValueError(f"unknown derivative method {method!r}")


@dataclass(frozen=True, eq=False)
class SpinorField:
    """Two-component complex field on a periodic grid at a given time.

    Parameters
    ----------
    grid : GridSpec
    values : ndarray, shape (2, *grid.points)
    time : float
    derivative : {'spectral', 'fd4'}
        Scheme for grid derivatives.
    interpolation : {'fourier', 'cubic'}
        Scheme for off-grid evaluation.
    """

    grid: GridSpec
    values: np.ndarray
    time: float = 0.0
    derivative: str = "spectral"
    interpolation: str = "fourier"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (2,) + tuple(self.grid.points):
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.points}")
        if not np.all(np.isfinite(values)):
            raise ValueError("spinor field contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time", float(self.time))

    def replace(self, values=None, time=None) -> "SpinorField":
        return SpinorField(self.grid, self.values if values is None else values,
                           self.time if time is None else time,
                           self.derivative, self.interpolation)

    def density(self) -> np.ndarray:
        """``Psi^dagger Psi`` on the grid."""
        return (np.abs(self.values) ** 2).sum(axis=0)

    def norm(self) -> float:
        return float(self.density().sum() * self.grid.cell_volume)

    def normalized(self) -> "SpinorField":
        return self.replace(values=self.values / np.sqrt(self.norm()))

    @cached_property
    def max_density(self) -> float:
        return float(self.density().max())

    def density_scale(self, t=None) -> float:
        return self.max_density

    @cached_property
    def coefficients(self) -> np.ndarray:
        axes = tuple(range(1, self.grid.dims + 1))
        return np.fft.fftn(self.values, axes=axes) / np.prod(self.grid.points)

    @cached_property
    def gradient(self) -> np.ndarray:
        """``(dims, 2, *points)`` grid derivatives with the configured scheme."""
        return np.array([grid_derivative(self.values, self.grid, j, 1, self.derivative)
                         for j in range(self.grid.dims)])

    @cached_property
    def hessian(self) -> np.ndarray:
        d = self.grid.dims
        out = np.empty((d, d) + self.values.shape, dtype=complex)
        for i in range(d):
            for j in range(i, d):
                if i == j:
                    h = grid_derivative(self.values, self.grid, i, 2, self.derivative)
                else:
                    h = grid_derivative(self.gradient[i], self.grid, j, 1, self.derivative)
                out[i, j] = out[j, i] = h
        return out

    def spinor_jet(self, x, t=None, order: int = 1) -> SpinorJet:
        """Values and spatial derivatives of ``Psi`` at points ``x``."""
        pts = as_points(x)
        if self.interpolation == "fourier" and self.derivative == "spectral":
            return self._fourier_jet(pts, order)
        return self._array_jet(pts, order)

    def _fourier_jet(self, pts, order):
        g = self.grid
        d, P = g.dims, pts.shape[0]
        bases = [_fourier_bases(pts[:, j], g.points[j], g.extent[j], g.origin[j], max(order, 1))
                 for j in range(d)]
        c = self.coefficients

        def ev(orders):
            return _contract(c, [bases[j][orders[j]] for j in range(d)])

        zero = (0,) * d
        psi = ev(zero)
        d1 = np.zeros((3, 2, P), dtype=complex)
        for i in range(d):
            o = list(zero)
            o[i] = 1
            d1[i] = ev(o)
        d2 = None
        if order >= 2:
            d2 = np.zeros((3, 3, 2, P), dtype=complex)
            for i in range(d):
                for j in range(i, d):
                    o = list(zero)
                    o[i] += 1
                    o[j] += 1
                    d2[i, j] = d2[j, i] = ev(o)
        return SpinorJet(psi, d1, d2)

    def _sample(self, arr, pts):
        """Interpolate a ``(2, *points)`` array at ``pts``."""
        g = self.grid
        if self.interpolation == "fourier":
            axes = tuple(range(1, g.dims + 1))
            c = np.fft.fftn(arr, axes=axes) / np.prod(g.points)
            bases = [_fourier_bases(pts[:, j], g.points[j], g.extent[j], g.origin[j], 0)[0]
                     for j in range(g.dims)]
            return _contract(c, bases)
        if self.interpolation != "cubic":
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        coords = np.array([(pts[:, j] - g.origin[j]) / g.spacing[j] for j in range(g.dims)])
        out = np.empty((2, pts.shape[0]), dtype=complex)
        for a in range(2):
            re = ndimage.map_coordinates(arr[a].real, coords, order=3, mode="grid-wrap")
            im = ndimage.map_coordinates(arr[a].imag, coords, order=3, mode="grid-wrap")
            out[a] = re + 1j * im
        return out

    def _array_jet(self, pts, order):
        d, P = self.grid.dims, pts.shape[0]
        psi = self._sample(self.values, pts)
        d1 = np.zeros((3, 2, P), dtype=complex)
        for i in range(d):
            d1[i] = self._sample(self.gradient[i], pts)
        d2 = None
        if order >= 2:
            d2 = np.zeros((3, 3, 2, P), dtype=complex)
            for i in range(d):
                for j in range(i, d):
                    d2[i, j] = d2[j, i] = self._sample(self.hessian[i, j], pts)
        return SpinorJet(psi, d1, d2)


@dataclass(frozen=True, eq=False)
class StateSeries:
    """Time-ordered snapshots with linear interpolation in time.

    A stage time that coincides with a stored frame (within ``1e-12``
    relative) uses that frame directly.
    """

    frames: tuple

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a state series needs at least one frame")
        times = [f.time for f in frames]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("frame times must be strictly increasing")
        object.__setattr__(self, "frames", frames)

    @cached_property
    def times(self) -> np.ndarray:
        return np.array([f.time for f in self.frames])

    @property
    def grid(self) -> GridSpec:
        return self.frames[0].grid

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    def _bracket(self, t):
        times = self.times
        if len(times) == 1:
            return 0, 0, 0.0
        span = times[-1] - times[0]
        tol = 1e-12 * max(span, 1.0)
        if t < times[0] - tol or t > times[-1] + tol:
            raise ValueError(f"time {t} outside series range [{times[0]}, {times[-1]}]")
        i = bisect.bisect_right(times.tolist(), t) - 1
        i = min(max(i, 0), len(times) - 2)
        dt = times[i + 1] - times[i]
        s = (t - times[i]) / dt
        if abs(s) <= 1e-12:
            return i, i, 0.0
        if abs(1 - s) <= 1e-12:
            return i + 1, i + 1, 0.0
        return i, i + 1, float(s)

    def at(self, t) -> SpinorField:
        """Snapshot at time ``t`` (linearly blended between frames)."""
        i, j, s = self._bracket(t)
        if i == j:
            return self.frames[i]
        vals = (1 - s) * self.frames[i].values + s * self.frames[j].values
        return self.frames[i].replace(values=vals, time=t)

    def spinor_jet(self, x, t=None, order: int = 1) -> SpinorJet:
        if t is None:
            raise ValueError("a state series needs an explicit time")
        i, j, s = self._bracket(t)
        if i == j:
            return self.frames[i].spinor_jet(x, order=order)
        a = self.frames[i].spinor_jet(x, order=order)
        b = self.frames[j].spinor_jet(x, order=order)
        return a.scaled(1 - s) + b.scaled(s)

    def density_scale(self, t=None) -> float:
        if t is None:
            return max(f.max_density for f in self.frames)
        i, j, _ = self._bracket(t)
        return max(self.frames[i].max_density, self.frames[j].max_density)


# ---------------------------------------------------------------- external fields

def _zero_vector(x, t):
    return np.zeros((np.shape(x)[0], 3))


def _zero_scalar(x, t):
    return np.zeros(np.shape(x)[0])


def _vector_field(desc, where):
    kind = desc.get("type", "zero")
    if kind == "zero":
        return _zero_vector
    if kind == "constant":
        value = np.asarray(desc["value"], dtype=float).reshape(3)
        return lambda x, t: np.broadcast_to(value, (np.shape(x)[0], 3)).copy()
    if kind == "symmetric_gauge":
        # A = B0 x r / 2, curl A = B0
        b0 = np.asarray(desc["B0"], dtype=float).reshape(3)
        return lambda x, t: 0.5 * np.cross(np.broadcast_to(b0, np.shape(x)), x)
    if kind == "linear":
        mat = np.asarray(desc.get("matrix", np.zeros((3, 3))), dtype=float).reshape(3, 3)
        off = np.asarray(desc.get("offset", np.zeros(3)), dtype=float).reshape(3)
        return lambda x, t: np.asarray(x) @ mat.T + off
    raise ValueError(f"unknown {where} field type {kind!r}")


def _scalar_field(desc):
    kind = desc.get("type", "zero")
    if kind == "zero":
        return _zero_scalar
    if kind == "constant":
        value = float(desc["value"])
        return lambda x, t: np.full(np.shape(x)[0], value)
    if kind == "harmonic":
        k = float(desc["k"])
        c = np.asarray(desc.get("center", np.zeros(3)), dtype=float).reshape(3)
        return lambda x, t: 0.5 * k * ((np.asarray(x) - c) ** 2).sum(-1)
    if kind == "linear":
        grad = np.asarray(desc["gradient"], dtype=float).reshape(3)
        off = float(desc.get("offset", 0.0))
        return lambda x, t: np.asarray(x) @ grad + off
    raise ValueError(f"unknown V field type {kind!r}")


@dataclass(frozen=True)
class ExternalFields:
    """Prescribed vector potential ``A``, magnetic field ``B`` and scalar ``V``.

    Each is a callable ``f(x, t)`` on ``(P, 3)`` positions returning
    ``(P, 3)`` (``A``, ``B``) or ``(P,)`` (``V``).  With
    ``consistency_mode='curl_checked'`` every evaluation verifies
    ``B = curl A`` by central differences.
    """

    A: Callable = _zero_vector
    B: Callable = _zero_vector
    V: Callable = _zero_scalar
    consistency_mode: str = "independent"
    curl_tol: float = 1e-6
    descriptor: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.consistency_mode not in ("independent", "curl_checked"):
            raise ValueError(f"unknown consistency mode {self.consistency_mode!r}")

    @classmethod
    def from_descriptor(cls, desc: dict | None) -> "ExternalFields":
        """Build from a descriptor such as ``{"B": {"type": "constant", "value": [0, 0, 1]}}``.

        ``B`` of type ``curl_of_A`` is derived analytically from linear or
        symmetric-gauge ``A``.
        """
        desc = dict(desc or {})
        a_desc = desc.get("A", {"type": "zero"})
        b_desc = desc.get("B", {"type": "zero"})
        A = _vector_field(a_desc, "A")
        if b_desc.get("type") == "curl_of_A":
            b_desc = _curl_descriptor(a_desc)
        B = _vector_field(b_desc, "B")
        V = _scalar_field(desc.get("V", {"type": "zero"}))
        return cls(A, B, V, desc.get("consistency_mode", "independent"), descriptor=desc)

    def at(self, x, t: float = 0.0):
        x = as_points(x)
        return (np.asarray(self.A(x, t), float), np.asarray(self.B(x, t), float),
                np.asarray(self.V(x, t), float))

    def uniform_values(self, grid: GridSpec, t: float, rtol: float = 1e-13):
        """Return ``(A, B, V)`` if all three are constant over ``grid``, else ``None``."""
        A, B, V = self.at(grid.points3(), t)
        def flat(arr):
            scale = max(np.abs(arr).max(), 1.0)
            return np.all(np.abs(arr - arr[0]) <= rtol * scale)
        if flat(A) and flat(B) and flat(V):
            return A[0], B[0], V[0]
        return None


def _curl_descriptor(a_desc):
    kind = a_desc.get("type", "zero")
    if kind in ("zero", "constant"):
        return {"type": "zero"}
    if kind == "symmetric_gauge":
        return {"type": "constant", "value": list(np.asarray(a_desc["B0"], float))}
    if kind == "linear":
        m = np.asarray(a_desc.get("matrix", np.zeros((3, 3))), float).reshape(3, 3)
        curl = [m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]
        return {"type": "constant", "value": curl}
    raise ValueError(f"cannot derive curl of A type {kind!r}")


def curl_fd(A: Callable, x, t: float, h: float = 1e-4) -> np.ndarray:
    """Central-difference curl of a vector field at ``(P, 3)`` points."""
    x = as_points(x)
    jac = np.empty((x.shape[0], 3, 3))  # jac[p, i, j] = d A_i / d x_j
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        jac[:, :, j] = (np.asarray(A(x + e, t)) - np.asarray(A(x - e, t))) / (2 * h)
    return np.stack([jac[:, 2, 1] - jac[:, 1, 2], jac[:, 0, 2] - jac[:, 2, 0],
                     jac[:, 1, 0] - jac[:, 0, 1]], axis=-1)


def eval_external_fields(fields: ExternalFields, x, t: float = 0.0):
    """Evaluate ``(A, B, V)``; in curl-checked mode raise on ``B != curl A``."""
    A, B, V = fields.at(x, t)
    if fields.consistency_mode == "curl_checked":
        curl = curl_fd(fields.A, x, t)
        err = np.abs(curl - B).max()
        if err > fields.curl_tol * (1.0 + np.abs(B).max()):
            raise CurlMismatch(f"|B - curl A| = {err:.3e} exceeds tolerance")
    return A, B, V
