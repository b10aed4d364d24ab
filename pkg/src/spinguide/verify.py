"""Verification studies shared by the CLI modes and the acceptance tests."""

from __future__ import annotations

import numpy as np

from .analytic import FreeGaussianSpinor, GaussianComponent
from .su2 import (SIGMA, RotatorParams, a_matrix, a_matrix_divergence,
                  angular_momentum_on_basis, apply_angular_momentum, basis_u,
                  quadrature_rule, sigma_from_integrals, su2_metric)
from .unified import (AngularTerm, ModulusSquared, SeparableDensity, SpatialGaussian,
                      ZeroDensity, identity6_residual, source_dual_route)

ALGEBRA_TOL = 1e-12


def random_angles(rng, n: int, margin: float = 0.2) -> np.ndarray:
    """Chart points with ``alpha`` kept ``margin`` away from the poles."""
    return np.column_stack([rng.uniform(margin, np.pi - margin, n),
                            rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 4 * np.pi, n)])


def algebra_suite(hbar: float = 1.0, l: float = 1.0, n_points: int = 100, seed: int = 0,
                  order=(8, 6, 6)) -> dict:
    """Residuals of the spin-1/2 operator algebra on the rotation group.

    Covers orthonormality of ``u_a``, the Clifford and commutator relations
    of ``M_i`` on the spin-1/2 subspace, ``d_r(sin(alpha) A_i^r) = 0``, the
    metric relation ``l^-2 A_i^r A_i^s = g^{rs}``, the differential action
    ``M_i u_b = u_a (hbar/2) sigma_i[a, b]`` and the integral reduction to
    ``(hbar/2) sigma_i``.
    """
    rng = np.random.default_rng(seed)
    rule = quadrature_rule(order)
    u = basis_u(rule.angles).as_array()
    gram = np.einsum("ak,bk,k->ab", np.conj(u), u, rule.weights)
    ortho = float(np.abs(gram - np.eye(2)).max())

    spinors = rng.normal(size=(n_points, 2)) + 1j * rng.normal(size=(n_points, 2))
    cliff = comm = 0.0
    for psi in spinors:
        M = [lambda v, i=i: apply_angular_momentum(i, v, hbar) for i in (1, 2, 3)]
        for i in range(3):
            for j in range(3):
                anti = M[i](M[j](psi)) + M[j](M[i](psi))
                target = 2 * (hbar / 2) ** 2 * (i == j) * psi
                cliff = max(cliff, float(np.abs(anti - target).max()))
                com = M[i](M[j](psi)) - M[j](M[i](psi))
                k = 3 - i - j
                sign = 0 if i == j else (1 if (i, j) in ((0, 1), (1, 2), (2, 0)) else -1)
                target = 1j * hbar * sign * M[k](psi) if sign else 0 * psi
                comm = max(comm, float(np.abs(com - target).max()))

    ang = random_angles(rng, n_points)
    div = float(np.abs(a_matrix_divergence(ang)).max())
    A = a_matrix(ang)
    ginv = np.einsum("irp,isp->rsp", A, A) / l**2
    gm = su2_metric(ang, l)
    ident = np.einsum("rsp,stp->rtp", gm.g_lower, ginv)
    metric = float(max(np.abs(ginv - gm.g_upper).max(),
                       np.abs(ident - np.eye(3)[:, :, None]).max()))

    Mu = angular_momentum_on_basis(ang, hbar)  # (i, b, P)
    ub = basis_u(ang).as_array()
    expected = 0.5 * hbar * np.einsum("ap,iab->ibp", ub, SIGMA)
    action = float(np.abs(Mu - expected).max())

    sig = sigma_from_integrals(hbar, order)
    pauli = float(np.abs(sig - 0.5 * hbar * SIGMA).max())
    res = {"orthonormality": ortho, "clifford": cliff, "commutator": comm,
           "divergence": div, "metric": metric, "basis_action": action,
           "pauli_reduction": pauli}
    return {"residuals": res, "tolerance": ALGEBRA_TOL,
            "pass": bool(all(v <= ALGEBRA_TOL * max(1.0, hbar**2) for v in res.values()))}


# ---------------------------------------------------------------- identity study


def identity6_pairs(params: RotatorParams):
    """Three ``(psi, f)`` pairs: zero source, a separable density and ``|psi|^2``."""
    c1 = GaussianComponent(0.8, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (0.5, 0.0, 0.0))
    c2 = GaussianComponent(0.6j, (0.7, 0.0, 0.0), (0.8, 1.0, 1.0), (-0.3, 0.0, 0.0))
    mixed = FreeGaussianSpinor((c1, c2), params, dims=1, rotor_phase=True)
    up = FreeGaussianSpinor((c1, None), params, dims=1, rotor_phase=True)
    sep = SeparableDensity((SpatialGaussian(0.2, (0.2, 0, 0), (0.9, 1, 1), (0.4, 0, 0)),),
                           (AngularTerm(1.0, 1, 1, 0), AngularTerm(0.3, 2, 0, 1)), omega=0.3)
    return [("superposition-zero", mixed, ZeroDensity()),
            ("spin-up-separable", up, sep),
            ("superposition-modulus", mixed, ModulusSquared(mixed))]


def identity6_study(params: RotatorParams, steps=(0.1, 0.05, 0.025), n_points: int = 20,
                    seed: int = 0, t: float = 0.4, order: int = 2) -> dict:
    """Refinement study of the six-dimensional identity for the three pairs."""
    rng = np.random.default_rng(seed)
    x = np.zeros((n_points, 3))
    x[:, 0] = rng.uniform(-1, 1, n_points)
    ang = random_angles(rng, n_points, margin=0.4)
    target = 2.0**order
    out = {"steps": list(steps), "order": order, "pairs": {}}
    ok = True
    for name, psi, f in identity6_pairs(params):
        res = [identity6_residual(psi, f, x, ang, params, t, h)["max"] for h in steps]
        ratios = [res[i] / res[i + 1] for i in range(len(res) - 1)]
        good = all(abs(r - target) <= 0.1 * target for r in ratios)
        ok &= good
        out["pairs"][name] = {"residuals": res, "ratios": ratios, "pass": bool(good)}
    out["pass"] = bool(ok)
    return out


def source_study(params: RotatorParams, widths=(0.08, 0.04, 0.02), t: float = 0.2,
                 nodes: int = 12) -> dict:
    """Mollified source against the point variation of ``Q`` for shrinking widths."""
    c1 = GaussianComponent(0.8, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (0.5, 0.0, 0.0))
    c2 = GaussianComponent(0.6j, (0.7, 0.0, 0.0), (0.8, 1.0, 1.0), (-0.3, 0.0, 0.0))
    psi = FreeGaussianSpinor((c1, c2), params, dims=1)
    test = SeparableDensity((SpatialGaussian(1.0, (0.0, 0, 0), (1.5, 1, 1)),),
                            (AngularTerm(1.0, 1, 1, 0), AngularTerm(0.5, 0, 0, 0)))
    rep = source_dual_route(psi, test, (0.1, 0.0, 0.0), (1.1, 0.4, 2.0), params, widths, t=t,
                            nodes=nodes)
    rep["pass"] = bool(all(abs(r - 4) <= 0.8 for r in rep["ratios"]))
    rep["point_variation"] = [rep["point_variation"].real, rep["point_variation"].imag]
    for row in rep["rows"]:
        row["mollified"] = [row["mollified"].real, row["mollified"].imag]
    return rep


# ---------------------------------------------------------------- equivariance


def grid_moments(state) -> dict:
    """Mean, variance and fourth central moment of ``Psi^dagger Psi`` per active axis."""
    dens = state.density()
    norm = dens.sum()
    out = {"mean": [], "var": [], "mu4": []}
    for mj in state.grid.mesh():
        mean = (mj * dens).sum() / norm
        c = mj - mean
        out["mean"].append(float(mean))
        out["var"].append(float((c**2 * dens).sum() / norm))
        out["mu4"].append(float((c**4 * dens).sum() / norm))
    return out


def ensemble_moment_check(trajs, series, checkpoints: int = 5, bands: float = 3.0) -> dict:
    """Compare ensemble moments of ``q`` with those of ``|Psi_t|^2`` at evenly spaced times.

    The Monte-Carlo standard errors are ``sqrt(var / N)`` for the mean and
    ``sqrt((mu4 - var^2) / N)`` for the variance.
    """
    alive = [tr for tr in trajs if tr.status == "ok"]
    N = len(alive)
    times = alive[0].times
    idx = np.unique(np.linspace(0, len(times) - 1, checkpoints + 1).round().astype(int)[1:])
    dims = series.grid.dims
    rows, ok = [], N == len(trajs)
    for i in idx:
        t = float(times[i])
        q = np.array([tr.q[i, :dims] for tr in alive])
        mom = grid_moments(series.at(t))
        mean, var, mu4 = (np.asarray(mom[k]) for k in ("mean", "var", "mu4"))
        e_mean, e_var = q.mean(0), q.var(0)
        band_mean = bands * np.sqrt(var / N)
        band_var = bands * np.sqrt(np.maximum(mu4 - var**2, 0) / N)
        good = bool(np.all(np.abs(e_mean - mean) <= band_mean)
                    and np.all(np.abs(e_var - var) <= band_var))
        ok &= good
        rows.append({"t": t, "ensemble_mean": e_mean, "density_mean": mean,
                     "mean_band": band_mean, "ensemble_var": e_var, "density_var": var,
                     "var_band": band_var, "pass": good})
    return {"members": len(trajs), "alive": N, "checkpoints": rows, "pass": bool(ok)}
