"""Inhomogeneous-equation machinery: source term, conserved densities and unified fields.

All scalar functions on the six-dimensional manifold are handled through
jets (value, gradient, Hessian and time derivative in the coordinates
``(x1, x2, x3, alpha, beta, gamma)``).  Delta functions are replaced by
normalized Gaussian mollifiers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PoleSingularity
from .fields import as_points
from .guidance import EnsembleSpec, integrate_batch, sample_initial, spinup_rate
from .local import (DEFAULT_NODE_RTOL, WaveJet, _check_nodes, _points, inverse_metric6,
                    laplace_beltrami, lb_drift, log_density_jet, metric_dot, node_threshold,
                    wave_jet)
from .su2 import (BASIS_NORM, DEFAULT_POLE_MARGIN, RotatorParams, angle_difference, basis_jet,
                  basis_u, quadrature_rule)

# ---------------------------------------------------------------- smooth densities


@dataclass(frozen=True)
class SpatialGaussian:
    amplitude: complex = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    width: tuple = (1.0, 1.0, 1.0)
    k: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class AngularTerm:
    """``coef * cos(n alpha) * exp(i (p beta + q gamma))``."""

    coef: complex = 1.0
    n: float = 0.0
    p: float = 0.0
    q: float = 0.0


@dataclass(frozen=True)
class SeparableDensity:
    """``f = exp(-i omega t) * S(x) * T(alpha)`` with closed-form jets.

    ``S`` is a sum of Gaussians (with optional plane-wave factors) over the
    first ``dims`` axes and ``T`` a finite trigonometric polynomial.
    """

    spatial: tuple = (SpatialGaussian(),)
    angular: tuple = (AngularTerm(),)
    omega: float = 0.0
    dims: int = 1

    def _spatial_jet(self, x):
        P = x.shape[0]
        val = np.zeros(P, complex)
        grad = np.zeros((3, P), complex)
        hess = np.zeros((3, 3, P), complex)
        D = self.dims
        for g in self.spatial:
            c = np.asarray(g.center, float)[:D]
            w = np.asarray(g.width, float)[:D]
            k = np.asarray(g.k, float)[:D]
            X = x[:, :D] - c
            e = np.exp(-(X**2 / (2 * w**2)).sum(1) + 1j * (X * k).sum(1)) * g.amplitude
            lin = -(X / w**2) + 1j * k  # d log / dx_j, shape (P, D)
            val += e
            grad[:D] += (lin * e[:, None]).T
            for i in range(D):
                for j in range(D):
                    hess[i, j] += (lin[:, i] * lin[:, j] - (i == j) / w[i] ** 2) * e
        return val, grad, hess

    def _angular_jet(self, ang):
        a, b, c = ang[:, 0], ang[:, 1], ang[:, 2]
        P = a.shape[0]
        val = np.zeros(P, complex)
        grad = np.zeros((3, P), complex)
        hess = np.zeros((3, 3, P), complex)
        for t in self.angular:
            ph = t.coef * np.exp(1j * (t.p * b + t.q * c))
            ca, sa = np.cos(t.n * a), np.sin(t.n * a)
            d = [1j * t.p, 1j * t.q]
            v = ca * ph
            val += v
            grad[0] += -t.n * sa * ph
            grad[1] += d[0] * v
            grad[2] += d[1] * v
            hess[0, 0] += -(t.n**2) * v
            for r in (1, 2):
                hess[0, r] += d[r - 1] * (-t.n * sa * ph)
                hess[r, 0] = hess[0, r]
                for s in (1, 2):
                    hess[r, s] += d[r - 1] * d[s - 1] * v
        return val, grad, hess

    def jet(self, x, angles, t: float = 0.0) -> WaveJet:
        pts, ang = _points(x, angles)
        sv, sg, sh = self._spatial_jet(pts)
        av, ag, ah = self._angular_jet(ang)
        tf = np.exp(-1j * self.omega * t)
        P = pts.shape[0]
        grad = np.empty((6, P), complex)
        hess = np.empty((6, 6, P), complex)
        grad[:3] = sg * av
        grad[3:] = sv * ag
        hess[:3, :3] = sh * av
        hess[3:, 3:] = sv * ah
        hess[:3, 3:] = sg[:, None] * ag[None]
        hess[3:, :3] = np.transpose(hess[:3, 3:], (1, 0, 2))
        value = sv * av
        return WaveJet(tf * value, tf * grad, tf * hess, -1j * self.omega * tf * value)


@dataclass(frozen=True)
class ModulusSquared:
    """``f = |psi|^2`` of a state provider, with exact jets."""

    state: object

    def jet(self, x, angles, t: float = 0.0) -> WaveJet:
        j = wave_jet(self.state, x, angles, t=t, order=2)
        return modulus_jet(j)


def modulus_jet(j: WaveJet) -> WaveJet:
    """Jet of ``|psi|^2`` from the jet of ``psi``."""
    c = np.conj(j.value)
    value = (c * j.value).real.astype(complex)
    grad = 2 * (c * j.grad).real.astype(complex)
    hess = 2 * (c * j.hess + np.conj(j.grad)[:, None] * j.grad[None, :]).real.astype(complex)
    dt = None if j.dt is None else 2 * (c * j.dt).real.astype(complex)
    return WaveJet(value, grad, hess, dt)


@dataclass(frozen=True)
class ZeroDensity:
    def jet(self, x, angles, t: float = 0.0) -> WaveJet:
        pts, _ = _points(x, angles)
        P = pts.shape[0]
        return WaveJet(np.zeros(P, complex), np.zeros((6, P), complex),
                       np.zeros((6, 6, P), complex), np.zeros(P, complex))


# ---------------------------------------------------------------- mollified particle


@dataclass(frozen=True)
class MollifiedParticle:
    """Gaussian stand-in for ``g^{-1/2} delta(x - q) delta(alpha - theta)``.

    ``f = D_x(x - q) D_a(alpha - theta) / sqrt(g)`` where ``D_x`` is a
    normalized Gaussian over the first ``dims`` axes and ``D_a`` a normalized
    Gaussian in the chart coordinates, so that ``f sqrt(g)`` integrates to
    one against ``d^dims x dalpha dbeta dgamma``.  The chart differences in
    ``beta`` and ``gamma`` use the nearest periodic image.
    """

    q: tuple
    theta: tuple
    width_x: float
    width_angle: float
    dims: int = 1
    l: float = 1.0

    def __post_init__(self):
        if not (self.width_x > 0 and self.width_angle > 0):
            raise ValueError("mollifier widths must be positive")
        th = np.asarray(self.theta, float)
        margin = 8 * self.width_angle
        if th[0] - margin < 0 or th[0] + margin > np.pi:
            raise PoleSingularity("angular mollifier overlaps a chart pole")

    def delta_jet(self, x, angles) -> WaveJet:
        """Jet of ``D_x D_a`` (the density ``f sqrt(g)``)."""
        pts, ang = _points(x, angles)
        P = pts.shape[0]
        D = self.dims
        q = as_points(self.q)[0]
        X = np.zeros((P, 6))
        X[:, :D] = pts[:, :D] - q[:D]
        X[:, 3:] = angle_difference(ang, np.asarray(self.theta, float))
        w = np.array([self.width_x] * 3 + [self.width_angle] * 3)
        active = np.array([i < D for i in range(3)] + [True] * 3)
        norm = np.prod((2 * np.pi * w[active] ** 2) ** -0.5)
        val = norm * np.exp(-(X[:, active] ** 2 / (2 * w[active] ** 2)).sum(1))
        lin = np.where(active, -X / w**2, 0.0)  # (P, 6)
        grad = (lin * val[:, None]).T
        hess = (lin.T[:, None] * lin.T[None, :] - np.diag(np.where(active, 1 / w**2, 0.0))[:, :, None])
        hess = hess * val
        return WaveJet(val.astype(complex), grad.astype(complex), hess.astype(complex),
                       np.zeros(P, complex))

    def jet(self, x, angles, t: float = 0.0) -> WaveJet:
        """Jet of ``f = D / sqrt(g)`` with ``sqrt(g) = l^3 sin(alpha)``."""
        pts, ang = _points(x, angles)
        d = self.delta_jet(pts, ang)
        a = ang[:, 0]
        s, c = np.sin(a), np.cos(a)
        h = 1 / (self.l**3 * s)
        h1 = -c / (self.l**3 * s**2)
        h2 = (1 + c**2) / (self.l**3 * s**3)
        P = a.shape[0]
        hg = np.zeros((6, P))
        hg[3] = h1
        grad = d.grad * h + d.value * hg
        hess = d.hess * h + d.grad[:, None] * hg[None] + hg[:, None] * d.grad[None]
        hess[3, 3] += d.value * h2
        return WaveJet(d.value * h, grad, hess, np.zeros(P, complex))

    def spatial_delta(self, x) -> np.ndarray:
        """Normalized spatial mollifier ``D_x(x - q)``."""
        pts = as_points(x)
        D = self.dims
        q = as_points(self.q)[0]
        r2 = ((pts[:, :D] - q[:D]) ** 2).sum(1)
        return (2 * np.pi * self.width_x**2) ** (-D / 2) * np.exp(-r2 / (2 * self.width_x**2))


# ---------------------------------------------------------------- source term


def _kappa(params):
    return params.hbar**2 / (2 * params.m)


def _source_from_jets(pj: WaveJet, fj: WaveJet, alpha, params):
    L1, L2 = log_density_jet(pj)
    l = params.length
    bracket = (fj.value * laplace_beltrami(L1, L2, alpha, l) + metric_dot(fj.grad, L1, alpha, l)
               - laplace_beltrami(fj.grad, fj.hess, alpha, l))
    return _kappa(params) * bracket / np.conj(pj.value)


def source_G(state, f, x, angles, params: RotatorParams, t=None, *,
             node_rtol: float = DEFAULT_NODE_RTOL):
    """Source ``G(psi, f) = hbar^2/(2m psi^*) [f Lap log rho + <grad f, grad log rho> - Lap f]``."""
    pts, ang = _points(x, angles)
    pj = wave_jet(state, pts, ang, t=t, order=2)
    _check_nodes(np.abs(pj.value) ** 2, node_threshold(state, t, node_rtol), "source_G")
    fj = f.jet(pts, ang, 0.0 if t is None else t)
    out = _source_from_jets(pj, fj, ang[:, 0], params)
    return out[0] if np.asarray(x).ndim <= 1 and np.asarray(angles).ndim <= 1 else out


def functional_derivative_source(state, particle: MollifiedParticle, x, angles,
                                 params: RotatorParams, t=None, **kwargs):
    """Mollified ``(2 / sqrt g) dQ(q) / d psi^*(x)`` evaluated as ``G(psi, f_particle)``."""
    return source_G(state, particle, x, angles, params, t, **kwargs)


# ---------------------------------------------------------------- identity check


def _quotient_jet(pj: WaveJet, fj: WaveJet) -> WaveJet:
    """Exact jet of ``u = psi - f / psi^*``."""
    c = np.conj(pj.value)
    cg = np.conj(pj.grad)
    ch = np.conj(pj.hess)
    r = fj.value / c
    rg = (fj.grad - r * cg) / c
    rh = (fj.hess - rg[:, None] * cg[None] - cg[:, None] * rg[None] - r * ch) / c
    rdt = (fj.dt - r * np.conj(pj.dt)) / c
    return WaveJet(pj.value - r, pj.grad - rg, pj.hess - rh, pj.dt - rdt)


def stencil_jet(exact_jet, x, ang, t, h, dims):
    """Replace the spatial derivatives of a jet by central differences of step ``h``.

    ``exact_jet(x, ang, t) -> WaveJet`` supplies values, closed-form angular
    derivatives and the time derivative; the spatial gradient, spatial
    Hessian and mixed space-angle block are rebuilt from second-order
    stencils, so the result carries an ``O(h^2)`` truncation error.
    """
    x = as_points(x)
    centre = exact_jet(x, ang, t)
    grad = centre.grad.copy()
    hess = centre.hess.copy()
    grad[:3] = 0
    hess[:3, :] = 0
    hess[:, :3] = 0

    def shifted(*moves):
        xs = x.copy()
        for j, s in moves:
            xs[:, j] += s * h
        return exact_jet(xs, ang, t)

    for j in range(dims):
        plus, minus = shifted((j, 1)), shifted((j, -1))
        grad[j] = (plus.value - minus.value) / (2 * h)
        hess[j, j] = (plus.value - 2 * centre.value + minus.value) / h**2
        mixed = (plus.grad[3:] - minus.grad[3:]) / (2 * h)
        hess[j, 3:] = mixed
        hess[3:, j] = mixed
        for i in range(j + 1, dims):
            pp, pm = shifted((i, 1), (j, 1)), shifted((i, 1), (j, -1))
            mp, mm = shifted((i, -1), (j, 1)), shifted((i, -1), (j, -1))
            hess[i, j] = hess[j, i] = (pp.value - pm.value - mp.value + mm.value) / (4 * h * h)
    return WaveJet(centre.value, grad, hess, centre.dt)


def schrodinger_F(uj: WaveJet, alpha, params: RotatorParams):
    """Free Schrodinger operator ``i hbar d_t u + (hbar^2 / 2m) Lap u`` from a jet."""
    return 1j * params.hbar * uj.dt + _kappa(params) * laplace_beltrami(uj.grad, uj.hess, alpha,
                                                                        params.length)


def continuity_bracket(pj: WaveJet, fj: WaveJet, alpha, params: RotatorParams):
    """``d_t f + (1/sqrt g) d_mu(f sqrt g v^mu)`` with ``v^mu = g^{mu nu} d_nu S / m``."""
    ratio = pj.grad / pj.value
    dS = params.hbar * ratio.imag
    d2S = params.hbar * (pj.hess / pj.value - ratio[:, None] * ratio[None, :]).imag
    l = params.length
    div_v = laplace_beltrami(dS, d2S, alpha, l) / params.m
    f_dot_v = metric_dot(fj.grad, dS, alpha, l) / params.m
    return fj.dt + f_dot_v + fj.value * div_v


def identity6_residual(psi, f, x, angles, params: RotatorParams, t: float, h: float,
                       dims: int | None = None):
    """Residual of ``F(u) = -(i hbar / psi^*)[d_t f + div(f v)] + G`` with ``u = psi - f / psi^*``.

    ``psi`` must be an exact free solution on the six-dimensional manifold
    (e.g. ``FreeGaussianSpinor(..., rotor_phase=True)``) so that its time
    derivative is exact.  Spatial derivatives of every term are taken by
    second-order central differences of step ``h``; the residual therefore
    vanishes like ``h^2``.

    Returns
    -------
    dict with ``max`` and ``mean`` absolute residual and the sample count.
    """
    pts, ang = _points(x, angles)
    dims = dims if dims is not None else getattr(psi, "dims", 3)
    alpha = ang[:, 0]

    def pjet(xs, an, tt):
        return wave_jet(psi, xs, an, t=tt, order=2)

    def fjet(xs, an, tt):
        return f.jet(xs, an, tt)

    def ujet(xs, an, tt):
        return _quotient_jet(pjet(xs, an, tt), fjet(xs, an, tt))

    pj = stencil_jet(pjet, pts, ang, t, h, dims)
    fj = stencil_jet(fjet, pts, ang, t, h, dims)
    uj = stencil_jet(ujet, pts, ang, t, h, dims)
    _check_nodes(np.abs(pj.value) ** 2, node_threshold(psi, t, DEFAULT_NODE_RTOL), "identity6")
    F = schrodinger_F(uj, alpha, params)
    rhs = (-1j * params.hbar / np.conj(pj.value) * continuity_bracket(pj, fj, alpha, params)
           + _source_from_jets(pj, fj, alpha, params))
    res = np.abs(F - rhs)
    return {"max": float(res.max()), "mean": float(res.mean()), "points": int(res.size)}


# ---------------------------------------------------------------- dual-route source check


def _rho_jets(pj: WaveJet):
    mj = modulus_jet(pj)
    return mj.value.real, mj.grad.real, mj.hess.real


def quantum_potential_variation(state, test, q, theta, params: RotatorParams, t=None):
    """``2 dQ(rho)(q, theta)`` along ``delta psi^* = phi``, from the partial derivatives of Q.

    With ``kappa = hbar^2 / 2m`` and ``Lap rho = g^{mn} d_mn rho + b^n d_n rho``::

        Q        = -kappa [Lap rho / 2 rho - |grad rho|^2 / 4 rho^2]
        dQ/drho  = -kappa [-Lap rho / 2 rho^2 + |grad rho|^2 / 2 rho^3]
        dQ/drho_m  = -kappa [b^m / 2 rho - g^{mn} rho_n / 2 rho^2]
        dQ/drho_mn = -kappa g^{mn} / 2 rho

    and the variation ``delta rho = psi phi`` is differentiated by the
    product rule.  This is the point-particle side of the weak-form check.
    """
    pts, ang = _points(q, theta)
    pj = wave_jet(state, pts, ang, t=t, order=2)
    phi = test.jet(pts, ang, 0.0 if t is None else t)
    rho, r1, r2 = _rho_jets(pj)
    alpha = ang[:, 0]
    l = params.length
    ginv = inverse_metric6(alpha, l)
    b = lb_drift(alpha, l)
    lap = np.einsum("mnp,mnp->p", ginv, r2) + np.einsum("np,np->p", b, r1)
    sq = np.einsum("mnp,mp,np->p", ginv, r1, r1)
    k = _kappa(params)
    Q_rho = -k * (-lap / (2 * rho**2) + sq / (2 * rho**3))
    Q_d1 = -k * (b / (2 * rho) - np.einsum("mnp,np->mp", ginv, r1) / (2 * rho**2))
    Q_d2 = -k * ginv / (2 * rho)
    # delta rho = psi * phi and its derivatives
    dr = pj.value * phi.value
    dr1 = pj.grad * phi.value + pj.value * phi.grad
    dr2 = (pj.hess * phi.value + pj.grad[:, None] * phi.grad[None]
           + phi.grad[:, None] * pj.grad[None] + pj.value * phi.hess)
    dQ = Q_rho * dr + np.einsum("mp,mp->p", Q_d1, dr1) + np.einsum("mnp,mnp->p", Q_d2, dr2)
    return 2 * dQ


def _gauss_hermite_nodes(centre, widths, n):
    """Tensor Gauss-Hermite nodes for a normalized Gaussian weight."""
    xi, wi = np.polynomial.hermite.hermgauss(n)
    grids = [c + np.sqrt(2) * w * xi for c, w in zip(centre, widths)]
    wts = [wi / np.sqrt(np.pi)] * len(centre)
    mesh = np.meshgrid(*grids, indexing="ij")
    wmesh = np.meshgrid(*wts, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    weights = np.prod([w.ravel() for w in wmesh], axis=0)
    return nodes, weights


def mollified_source_pairing(state, test, particle: MollifiedParticle, params: RotatorParams,
                             t=None, nodes: int = 12):
    """``int G(psi, f_particle) phi sqrt(g) d^dims x d^3 alpha`` by Gauss-Hermite quadrature.

    The integrand is the mollifier times a smooth factor, so the tensor
    Gauss-Hermite rule matched to the mollifier is spectrally accurate.
    """
    D = particle.dims
    q = as_points(particle.q)[0]
    centre = list(q[:D]) + list(np.asarray(particle.theta, float))
    widths = [particle.width_x] * D + [particle.width_angle] * 3
    pts_nd, wts = _gauss_hermite_nodes(centre, widths, nodes)
    x = np.zeros((pts_nd.shape[0], 3))
    x[:, :D] = pts_nd[:, :D]
    ang = pts_nd[:, D:]
    G = source_G(state, particle, x, ang, params, t, node_rtol=0.0)
    phi = test.jet(x, ang, 0.0 if t is None else t).value
    sqrt_g = params.length**3 * np.sin(ang[:, 0])
    dens = particle.delta_jet(x, ang).value.real
    return complex(np.sum(wts * G * phi * sqrt_g / dens))


def source_dual_route(state, test, q, theta, params: RotatorParams, widths, t=None,
                      nodes: int = 12, dims: int = 1, angle_ratio: float = 1.0):
    """Compare the mollified source with the exact point variation of Q.

    For each spatial width ``w`` (angular width ``angle_ratio * w``) returns
    the weak pairing of ``G(psi, f_w)``, the point-particle variation, their
    difference, and successive error ratios.
    """
    exact = complex(quantum_potential_variation(state, test, q, theta, params, t)[0])
    rows = []
    for w in widths:
        part = MollifiedParticle(tuple(as_points(q)[0]), tuple(theta), w, angle_ratio * w, dims,
                                 params.length)
        pair = mollified_source_pairing(state, test, part, params, t, nodes)
        rows.append({"width": float(w), "mollified": pair, "error": abs(pair - exact)})
    ratios = [rows[i]["error"] / rows[i + 1]["error"] for i in range(len(rows) - 1)]
    return {"point_variation": exact, "rows": rows, "ratios": ratios}


# ---------------------------------------------------------------- conserved density transport


@dataclass
class Cloud:
    """Weighted Lagrangian representation of a conserved density ``f sqrt(g)``."""

    times: np.ndarray
    q: np.ndarray  # (T, K, 3)
    theta: np.ndarray  # (T, K, 3)
    weights: np.ndarray  # (K,)
    status: list = field(default_factory=list)

    @property
    def total_weight(self) -> complex:
        return self.weights.sum()

    def centroid(self, i: int = -1):
        """Weighted centroid of positions and angles (angles relative to member 0's chart image)."""
        w = self.weights.real / self.weights.real.sum()
        qc = (w[:, None] * self.q[i]).sum(0)
        ref = self.theta[i, 0]
        dth = angle_difference(self.theta[i], ref)
        return qc, ref + (w[:, None] * dth).sum(0)

    def kde(self, x, angles, bandwidth_x: float, bandwidth_angle: float, dims: int = 1,
            i: int = -1):
        """Gaussian kernel estimate of ``f sqrt(g)`` at ``(x, angles)``."""
        pts, ang = _points(x, angles)
        out = np.zeros(pts.shape[0], complex)
        for k in range(self.weights.size):
            part = MollifiedParticle(tuple(self.q[i, k]), tuple(wrap_safe(self.theta[i, k])),
                                     bandwidth_x, bandwidth_angle, dims)
            out += self.weights[k] * part.delta_jet(pts, ang).value
        return out


def wrap_safe(theta):
    th = np.array(theta, float)
    th[1] = np.mod(th[1], 2 * np.pi)
    th[2] = np.mod(th[2], 4 * np.pi)
    return th


def evolve_conserved_density(f0, states, params: RotatorParams, t_span, dt: float, *,
                             fields=None, nodes: int = 5, count: int = 1000, seed: int = 0,
                             mode: str = "rotator", box=None, **kwargs) -> Cloud:
    """Transport ``f sqrt(g)`` with the guidance flow as a weighted particle cloud.

    A :class:`MollifiedParticle` is discretized by tensor Gauss-Hermite
    nodes (``nodes`` per active coordinate); weights are never modified,
    so the total weight is conserved exactly.  A
    :class:`ModulusSquared` density is sampled with ``count`` equal-weight
    members by the density-weighted ensemble sampler over ``box`` (default:
    the grid of ``f0.state``).
    """
    if isinstance(f0, MollifiedParticle):
        D = f0.dims
        q = as_points(f0.q)[0]
        centre = list(q[:D]) + list(np.asarray(f0.theta, float))
        widths = [f0.width_x] * D + [f0.width_angle] * 3
        pts_nd, weights = _gauss_hermite_nodes(centre, widths, nodes)
        q0 = np.zeros((pts_nd.shape[0], 3))
        q0[:, :D] = pts_nd[:, :D]
        th0 = pts_nd[:, D:]
        weights = weights.astype(complex)
    elif isinstance(f0, ModulusSquared):
        spec = EnsembleSpec(count, "density_weighted", seed, box=box)
        q0, th0 = sample_initial(spec, f0.state, float(t_span[0]))
        weights = np.full(count, 1.0 / count, complex)
    else:
        raise TypeError("cloud transport needs a MollifiedParticle or a ModulusSquared density")
    trajs = integrate_batch(q0, th0, mode, states, params, dt, t_span, fields, **kwargs)
    T = min(len(tr.times) for tr in trajs)
    qs = np.stack([tr.q[:T] for tr in trajs], axis=1)
    ths = np.stack([tr.theta[:T] for tr in trajs], axis=1)
    return Cloud(trajs[0].times[:T], qs, ths, weights, [tr.status for tr in trajs])


# ---------------------------------------------------------------- unified field


def modulation_functions(angles) -> np.ndarray:
    """``v[a, b] = u_b^*(alpha) / u_a^*(alpha)``, shape ``(2, 2, ...)``.

    The diagonal is identically one; ``|v[0, 1]| = tan(alpha / 2)`` and
    ``|v[1, 0]| = cot(alpha / 2)``.
    """
    u = np.conj(basis_u(angles).as_array())
    with np.errstate(divide="ignore", invalid="ignore"):
        v = u[None, :] / u[:, None]
    v[0, 0] = v[1, 1] = 1.0
    return v


def unified_field_discrete(state, particle: MollifiedParticle, x, t=None, *,
                           node_rtol: float = DEFAULT_NODE_RTOL):
    """``U^a = Psi^a - D_x(x - q) / (Psi^{b*}(x) v^a_b(theta))``, shape ``(2, P)``.

    The sum over ``b`` in the denominator reproduces the angular projection
    of the unified field: ``Psi^{b*} v^a_b = psi^*(x, theta) / u_a^*(theta)``.
    """
    pts = as_points(x)
    psi = state.spinor_jet(pts, t=t, order=0).psi
    dens = (np.abs(psi) ** 2).sum(0)
    _check_nodes(dens, node_threshold(state, t, node_rtol, angular=False), "unified_field")
    v = modulation_functions(np.asarray(particle.theta, float))  # (2, 2)
    denom = np.einsum("bp,ab->ap", np.conj(psi), v)
    return psi - particle.spatial_delta(pts)[None] / denom


def unified_field_projected(state, particle: MollifiedParticle, x, t=None, nodes: int = 10):
    """``int u_a^* u dOmega`` of the mollified angular unified field.

    The angular delta ``delta(alpha - theta) / sin(alpha)`` is replaced by
    the chart Gaussian over ``sin(alpha)``, and the angle integral is done
    by Gauss-Hermite quadrature about ``theta``.
    """
    pts = as_points(x)
    psi = state.spinor_jet(pts, t=t, order=0).psi  # (2, P)
    nodes_a, wts = _gauss_hermite_nodes(list(np.asarray(particle.theta, float)),
                                        [particle.width_angle] * 3, nodes)
    u = basis_u(nodes_a).as_array()  # (2, K)
    field_c = np.einsum("ap,ak->pk", np.conj(psi), np.conj(u))  # psi^*(x, alpha_k)
    integral = np.einsum("k,ak,pk->ap", wts, np.conj(u), 1.0 / field_c)
    return psi - particle.spatial_delta(pts)[None] * integral


def factorized_modulation_check(traj, params: RotatorParams, *,
                                margin: float = DEFAULT_POLE_MARGIN) -> dict:
    """Check the spin-up modulation ``u_2^*/u_1^*`` along an angular trajectory.

    Its modulus must stay at ``tan(theta0_1 / 2)`` and its phase must grow
    linearly at the spin-up rate ``nu``.
    """
    th = np.asarray(traj.theta, float)
    if abs(np.cos(0.5 * th[0, 0])) < margin:
        raise PoleSingularity("modulation undefined at alpha = pi")
    ratio = modulation_functions(th)[0, 1]
    mag = np.abs(ratio)
    expected = np.tan(0.5 * th[0, 0])
    phase = np.unwrap(np.angle(ratio))
    slope = np.polyfit(traj.times, phase, 1)[0]
    nu = spinup_rate(th[0, 0], params, margin)
    return {
        "magnitude_expected": float(expected),
        "magnitude_max_error": float(np.abs(mag - expected).max()),
        "phase_rate": float(slope),
        "nu": float(nu),
        "phase_rate_rel_error": float(abs(slope - nu) / nu),
    }


# the normalization of u_a, re-exported for tests of the modulation identities
BASIS_NORMALIZATION = BASIS_NORM
