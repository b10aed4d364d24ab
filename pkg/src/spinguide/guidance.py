"""Guidance velocities, trajectory integration and ensembles.

Positions ``q`` and Euler angles ``theta`` are integrated together with a
classical RK4 scheme.  The translational velocity comes from one of three
modes:

* ``rotator``: the phase gradient of ``psi(x, alpha) = Psi^a u_a``;
* ``pauli``: the spinor current divided by ``Psi^dagger Psi``;
* ``pauli_plus_spin``: the Pauli velocity plus the curl-type spin term.

The angular rates always follow the rotator law.  Trajectories that run
into a density node or a chart pole stop and report it in ``status``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PoleSingularity, SamplingFailure
from .fields import GridSpec, SpinorField, as_points, grid_derivative
from .local import (ANGULAR_DENSITY_MAX, DEFAULT_NODE_RTOL, _check_nodes, _maybe_squeeze, _points,
                    _single, node_threshold, velocity_kernels, wave_jet)
from .su2 import (DEFAULT_POLE_MARGIN, FOUR_PI, SIGMA, TWO_PI, EulerTriple, RotatorParams,
                  a_matrix, basis_u, quadrature_rule, wrap_angles)

MODES = ("rotator", "pauli", "pauli_plus_spin")
MAX_SAMPLING_ATTEMPTS = 1_000_000
ENVELOPE_SAFETY = 1.05


def _fields_at(fields, pts, t):
    if fields is None:
        P = pts.shape[0]
        return np.zeros((P, 3)), np.zeros((P, 3)), np.zeros(P)
    return fields.at(pts, 0.0 if t is None else t)


# ---------------------------------------------------------------- velocities

def velocity_translational(state, fields, x, angles, params: RotatorParams, t=None, *,
                           node_rtol: float = DEFAULT_NODE_RTOL):
    """Rotator translational velocity ``(hbar Im(d_i psi / psi) - A_i) / m``."""
    single = _single(x, angles)
    pts, ang = _points(x, angles)
    k = velocity_kernels(state, pts, ang, params, t, node_rtol=node_rtol, pole_margin=0.0)
    A, _, _ = _fields_at(fields, pts, t)
    v = (k.phase_gradient - A.T) / params.m
    return _maybe_squeeze(v, single)


def velocity_angular(state, fields, x, angles, params: RotatorParams, t=None, *,
                     node_rtol: float = DEFAULT_NODE_RTOL,
                     pole_margin: float = DEFAULT_POLE_MARGIN):
    """Euler-angle rates ``I^-1 A_i^r (Re(M_i psi / psi) + mm I B_i)``."""
    single = _single(x, angles)
    pts, ang = _points(x, angles)
    k = velocity_kernels(state, pts, ang, params, t, node_rtol=node_rtol, pole_margin=pole_margin)
    _, B, _ = _fields_at(fields, pts, t)
    A = a_matrix(ang, pole_margin=pole_margin).reshape(3, 3, -1)
    drive = k.angular_kernel + params.mm * params.I * B.T
    v = np.einsum("irp,ip->rp", A, drive) / params.I
    return _maybe_squeeze(v, single)


def _spinor_and_density(state, pts, t, order=1):
    sj = state.spinor_jet(pts, t=t, order=order)
    dens = (np.abs(sj.psi) ** 2).sum(0)
    return sj, dens


def velocity_pauli(state, fields, x, params: RotatorParams, t=None, *,
                   node_rtol: float = DEFAULT_NODE_RTOL):
    """Spinor velocity ``hbar Im(Psi^dagger d_i Psi) / (m Psi^dagger Psi) - A_i / m``."""
    single = _single(x)
    pts = as_points(x)
    sj, dens = _spinor_and_density(state, pts, t)
    _check_nodes(dens, node_threshold(state, t, node_rtol, angular=False), "velocity_pauli")
    cur = np.einsum("ap,iap->ip", sj.psi.conj(), sj.d1).imag
    A, _, _ = _fields_at(fields, pts, t)
    v = (params.hbar * cur / dens - A.T) / params.m
    return _maybe_squeeze(v, single)


def velocity_spin_supplement(state, x, params: RotatorParams, t=None, *,
                             node_rtol: float = DEFAULT_NODE_RTOL):
    """Curl-type term ``eps_ijk d_j(Psi^dagger Psi s_k) / (m Psi^dagger Psi)``.

    ``Psi^dagger Psi s_k = (hbar/2) Psi^dagger sigma_k Psi`` is differentiated
    through the spinor's (spectral) derivatives by the product rule.
    """
    single = _single(x)
    pts = as_points(x)
    sj, dens = _spinor_and_density(state, pts, t)
    _check_nodes(dens, node_threshold(state, t, node_rtol, angular=False), "velocity_spin_supplement")
    # grad[j, k] = d_j (rho s_k)
    grad = params.hbar * np.einsum("ap,kab,jbp->jkp", sj.psi.conj(), SIGMA, sj.d1).real
    curl = np.array([grad[1, 2] - grad[2, 1], grad[2, 0] - grad[0, 2], grad[0, 1] - grad[1, 0]])
    v = curl / (params.m * dens)
    return _maybe_squeeze(v, single)


def spin_density_grid(state: SpinorField, hbar: float = 1.0) -> np.ndarray:
    """``Psi^dagger Psi s_k`` on the grid, shape ``(3, *points)``."""
    return 0.5 * hbar * np.einsum("a...,kab,b...->k...", state.values.conj(), SIGMA,
                                  state.values).real


def spin_current_grid(state: SpinorField, params: RotatorParams, method: str | None = None):
    """``rho v_s = curl(rho s) / m`` on the grid with grid derivatives, shape ``(3, *points)``."""
    grid = state.grid
    method = method or state.derivative
    S = spin_density_grid(state, params.hbar)

    def d(j, arr):
        if j >= grid.dims:
            return np.zeros_like(arr)
        return grid_derivative(arr, grid, j, 1, method)

    curl = np.array([d(1, S[2]) - d(2, S[1]), d(2, S[0]) - d(0, S[2]), d(0, S[1]) - d(1, S[0])])
    return curl / params.m


def pauli_current_grid(state: SpinorField, fields, params: RotatorParams, t=None):
    """``rho v_P`` on the grid, shape ``(3, *points)``."""
    grid = state.grid
    psi = state.values
    cur = np.zeros((3,) + grid.shape)
    for j in range(grid.dims):
        cur[j] = params.hbar * (psi.conj() * state.gradient[j]).sum(0).imag / params.m
    if fields is not None:
        A, _, _ = fields.at(grid.points3(), state.time if t is None else t)
        cur -= A.T.reshape((3,) + grid.shape) * state.density() / params.m
    return cur


def divergence_grid(vec: np.ndarray, grid: GridSpec, method: str = "spectral") -> np.ndarray:
    out = np.zeros(grid.shape)
    for j in range(grid.dims):
        out += grid_derivative(vec[j], grid, j, 1, method)
    return out


def angular_average_velocity(state, fields, x, params: RotatorParams, t=None, order=(8, 6, 6)):
    """``int |psi|^2 v_i dOmega / int |psi|^2 dOmega`` by quadrature in the angles."""
    pts = as_points(x)
    rule = quadrature_rule(order)
    ang = np.stack([rule.angles.alpha, rule.angles.beta, rule.angles.gamma], axis=-1)
    K = ang.shape[0]
    out = np.empty((3, pts.shape[0]))
    for p, xp in enumerate(pts):
        xs = np.repeat(xp[None], K, axis=0)
        jet = wave_jet(state, xs, ang, t=t, order=1)
        rho = np.abs(jet.value) ** 2
        v = velocity_translational(state, fields, xs, ang, params, t, node_rtol=0.0)
        out[:, p] = rule.integrate(rho[None] * v) / rule.integrate(rho)
    return out[:, 0] if np.asarray(x).ndim <= 1 else out


# ---------------------------------------------------------------- trajectories

@dataclass
class Trajectory:
    """Sampled orbit ``(q(t), theta(t))`` with diagnostics.

    ``rho`` is ``|psi(q, theta)|^2`` along the orbit and ``body_spin`` is
    the angular momentum ``I A_i^r theta_dot^r`` of the body.
    """

    times: np.ndarray
    q: np.ndarray
    theta: np.ndarray
    status: str = "ok"
    rho: np.ndarray = field(default_factory=lambda: np.zeros(0))
    body_spin: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    message: str = ""

    @property
    def conserved_density_log(self) -> np.ndarray:
        return self.rho

    def table(self) -> np.ndarray:
        """Rows ``t, q1..q3, theta1..theta3, rho, s1..s3``."""
        return np.column_stack([self.times, self.q, self.theta, self.rho, self.body_spin])


def _rates(state, fields, params, t, q, th, mode, node_rtol, pole_margin):
    """Velocities for a batch, never raising: returns masks for nodes and poles."""
    P = q.shape[0]
    qdot = np.zeros((P, 3))
    thdot = np.zeros((P, 3))
    sa = np.abs(np.sin(th[:, 0]))
    pole = ~(sa >= pole_margin)
    jet = wave_jet(state, q, th, t=t, order=1)
    rho = np.abs(jet.value) ** 2
    node = ~(rho >= node_threshold(state, t, node_rtol))
    ok = ~(pole | node)
    if mode != "rotator":
        sj, dens = _spinor_and_density(state, q, t)
        node |= ~(dens >= node_threshold(state, t, node_rtol, angular=False))
        ok = ~(pole | node)
    spin = np.full((P, 3), np.nan)
    if not ok.any():
        return qdot, thdot, rho, node, pole, spin
    A_f, B_f, _ = _fields_at(fields, q[ok], t)
    ratio = jet.grad[:, ok] / jet.value[ok]
    dS = params.hbar * ratio.imag
    A = a_matrix(th[ok], pole_margin=0.0).reshape(3, 3, -1)
    kernel = np.einsum("irp,rp->ip", A, dS[3:])
    rates = np.einsum("irp,ip->rp", A, kernel + params.mm * params.I * B_f.T) / params.I
    thdot[ok] = rates.T
    spin[ok] = params.I * np.einsum("irp,rp->pi", A, rates)
    if mode == "rotator":
        qdot[ok] = ((dS[:3] - A_f.T) / params.m).T
    else:
        psi, d1, dn = sj.psi[:, ok], sj.d1[:, :, ok], dens[ok]
        cur = np.einsum("ap,iap->ip", psi.conj(), d1).imag
        v = (params.hbar * cur / dn - A_f.T) / params.m
        if mode == "pauli_plus_spin":
            grad = params.hbar * np.einsum("ap,kab,jbp->jkp", psi.conj(), SIGMA, d1).real
            v = v + np.array([grad[1, 2] - grad[2, 1], grad[2, 0] - grad[0, 2],
                              grad[0, 1] - grad[1, 0]]) / (params.m * dn)
        qdot[ok] = v.T
    return qdot, thdot, rho, node, pole, spin


def integrate_batch(q0, theta0, mode: str, states, params: RotatorParams, dt: float,
                    t_span, fields=None, *, node_rtol: float = DEFAULT_NODE_RTOL,
                    pole_margin: float = DEFAULT_POLE_MARGIN, record_every: int = 1):
    """RK4 for many initial conditions at once; returns a list of Trajectory."""
    if mode not in MODES:
        raise ValueError(f"unknown velocity mode {mode!r}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    q = as_points(q0).copy()
    th = np.atleast_2d(np.asarray(theta0, dtype=float)).reshape(-1, 3).copy()
    if q.shape[0] != th.shape[0]:
        raise ValueError("q0 and theta0 must have the same number of points")
    t0, t1 = (float(s) for s in t_span)
    n = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / n
    P = q.shape[0]
    status = np.array(["ok"] * P, dtype=object)
    alive = np.ones(P, bool)

    def rates(t, qq, tt, idx):
        return _rates(states, fields, params, t, qq, tt, mode, node_rtol, pole_margin)

    def kill(members, pole):
        for j, pl in zip(members, pole):
            status[j] = "pole_abort" if pl else "node_abort"
            alive[j] = False

    idx = np.arange(P)
    k1q, k1t, rho0, node, pole, spin0 = rates(t0, q, th, idx)
    bad = node | pole
    if bad.any():
        kill(idx[bad], pole[bad])
    times, Q, TH, RHO, SPIN = [t0], [q.copy()], [wrap_angles(th)], [rho0], [spin0]
    lengths = np.ones(P, int)
    for step_i in range(1, n + 1):
        t = t0 + (step_i - 1) * h
        live = idx[alive]
        if live.size == 0:
            break
        ql, tl = q[live], th[live]
        # first stage reuses the end-of-step evaluation of the previous step
        a_q, a_t = k1q[live], k1t[live]
        b_q, b_t, _, n2, p2, _ = rates(t + h / 2, ql + h / 2 * a_q, tl + h / 2 * a_t, live)
        c_q, c_t, _, n3, p3, _ = rates(t + h / 2, ql + h / 2 * b_q, tl + h / 2 * b_t, live)
        d_q, d_t, _, n4, p4, _ = rates(t + h, ql + h * c_q, tl + h * c_t, live)
        nq = ql + h / 6 * (a_q + 2 * b_q + 2 * c_q + d_q)
        nt = wrap_angles(tl + h / 6 * (a_t + 2 * b_t + 2 * c_t + d_t))
        tn = t0 + step_i * h
        e_q, e_t, rho_n, n5, p5, spin_n = rates(tn, nq, nt, live)
        node_any = n2 | n3 | n4 | n5
        pole_any = p2 | p3 | p4 | p5
        bad = node_any | pole_any
        good = ~bad
        q[live[good]] = nq[good]
        th[live[good]] = nt[good]
        k1q[live[good]], k1t[live[good]] = e_q[good], e_t[good]
        if bad.any():
            kill(live[bad], pole_any[bad])
        if step_i % record_every == 0 or step_i == n:
            times.append(tn)
            Q.append(q.copy())
            TH.append(th.copy())
            rho_full = np.full(P, np.nan)
            rho_full[live] = rho_n
            RHO.append(rho_full)
            spin_full = np.full((P, 3), np.nan)
            spin_full[live] = spin_n
            SPIN.append(spin_full)
            lengths[live[good]] = len(times)
    times = np.array(times)
    Q, TH, RHO, SPIN = np.array(Q), np.array(TH), np.array(RHO), np.array(SPIN)
    out = []
    for j in range(P):
        L = lengths[j]
        msg = "" if status[j] == "ok" else f"{status[j]} after t = {times[L - 1]:.6g}"
        out.append(Trajectory(times[:L].copy(), Q[:L, j].copy(), TH[:L, j].copy(), str(status[j]),
                              RHO[:L, j].copy(), SPIN[:L, j].copy(), msg))
    return out


def integrate_trajectory(q0, theta0, mode: str, states, params: RotatorParams, dt: float,
                         t_span, fields=None, **kwargs) -> Trajectory:
    """Integrate one orbit.  See :func:`integrate_batch` for the options."""
    return integrate_batch(np.atleast_2d(q0), np.atleast_2d(theta0), mode, states, params, dt,
                           t_span, fields, **kwargs)[0]


def spinup_rate(alpha0: float, params: RotatorParams, margin: float = DEFAULT_POLE_MARGIN) -> float:
    """``nu = hbar / (4 I cos^2(alpha0 / 2))``."""
    c = np.cos(0.5 * alpha0)
    if abs(c) < margin:
        raise PoleSingularity("spin-up rate diverges at alpha = pi")
    return params.hbar / (4 * params.I * c * c)


def free_spinup_analytic(theta0, params: RotatorParams, t, *, wrap: bool = True,
                         margin: float = DEFAULT_POLE_MARGIN) -> EulerTriple:
    """Closed-form orientation of a free spin-up rotator at times ``t``."""
    th0 = np.asarray(EulerTriple.from_array(theta0).as_array() if not isinstance(theta0, EulerTriple)
                     else theta0.as_array(), float)
    nu = spinup_rate(th0[0], params, margin)
    t = np.asarray(t, float)
    out = EulerTriple(np.full(t.shape, th0[0]) if t.ndim else th0[0],
                      th0[1] - nu * t, th0[2] - nu * t)
    return out.wrapped() if wrap else out


# ---------------------------------------------------------------- ensembles

@dataclass(frozen=True)
class EnsembleSpec:
    """How to draw initial conditions.

    ``box`` is ``(lower, upper)`` corner arrays for the spatial proposal
    region; it defaults to the grid of the state provider.
    """

    count: int
    sampling: str = "density_weighted"
    seed: int = 0
    explicit: tuple | None = None
    box: tuple | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("ensemble count must be >= 1")
        if self.sampling not in ("density_weighted", "uniform", "explicit"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.sampling == "explicit" and (self.explicit is None or len(self.explicit) != self.count):
            raise ValueError("explicit sampling needs one (q, theta) pair per member")


def _box(spec, states):
    if spec.box is not None:
        return tuple(as_points(b)[0] for b in spec.box)
    grid = getattr(states, "grid", None)
    if grid is None:
        raise ValueError("ensemble sampling needs a box when the state has no grid")
    lo = np.zeros(3)
    hi = np.zeros(3)
    lo[:grid.dims] = grid.origin
    hi[:grid.dims] = np.asarray(grid.origin) + np.asarray(grid.extent)
    return lo, hi


def _propose(rng, lo, hi, k):
    x = lo + (hi - lo) * rng.random((k, 3))
    cos_a = rng.uniform(-1.0, 1.0, k)
    ang = np.column_stack([np.arccos(cos_a), TWO_PI * rng.random(k), FOUR_PI * rng.random(k)])
    return x, ang


def sample_initial(spec: EnsembleSpec, states, t0: float = 0.0, batch: int = 64):
    """Draw ``(q0, theta0)`` arrays of shape ``(count, 3)`` per ``spec``.

    Density-weighted draws use rejection sampling against the bound
    ``|psi|^2 <= Psi^dagger Psi / (8 pi^2)`` with proposals uniform in the
    box and in ``(cos alpha, beta, gamma)``, i.e. uniform in the measure
    ``sqrt(g) d^3x dalpha dbeta dgamma``.  Member ``i`` uses the stream
    ``default_rng((seed, i))``.
    """
    if spec.sampling == "explicit":
        q = np.array([as_points(e[0])[0] for e in spec.explicit])
        th = np.array([np.asarray(e[1], float) for e in spec.explicit])
        return q, th
    lo, hi = _box(spec, states)
    qs, ths = np.empty((spec.count, 3)), np.empty((spec.count, 3))
    envelope = ENVELOPE_SAFETY * states.density_scale(t0) * ANGULAR_DENSITY_MAX
    attempts = 0
    for i in range(spec.count):
        rng = np.random.default_rng((spec.seed, i))
        if spec.sampling == "uniform":
            x, ang = _propose(rng, lo, hi, 1)
            qs[i], ths[i] = x[0], ang[0]
            continue
        while True:
            if attempts >= MAX_SAMPLING_ATTEMPTS:
                raise SamplingFailure(f"rejection sampling exceeded {MAX_SAMPLING_ATTEMPTS} attempts")
            k = min(batch, MAX_SAMPLING_ATTEMPTS - attempts)
            x, ang = _propose(rng, lo, hi, k)
            jet = states.spinor_jet(x, t=t0, order=0)
            u = basis_u(ang).as_array()
            rho = np.abs((jet.psi * u).sum(0)) ** 2
            accept = rng.random(k) * envelope < rho
            hit = np.flatnonzero(accept)
            if hit.size:
                attempts += hit[0] + 1
                qs[i], ths[i] = x[hit[0]], ang[hit[0]]
                break
            attempts += k
    return qs, ths


def run_ensemble(spec: EnsembleSpec, mode: str, states, params: RotatorParams, dt: float,
                 t_span, fields=None, **kwargs) -> list:
    """Sample initial conditions and integrate every member."""
    q0, th0 = sample_initial(spec, states, float(t_span[0]))
    return integrate_batch(q0, th0, mode, states, params, dt, t_span, fields, **kwargs)
