import numpy as np
import pytest

from spinguide.analytic import FreeGaussianSpinor, GaussianComponent
from spinguide.errors import CurlMismatch, NodeSingularity
from spinguide.fields import (ExternalFields, GridSpec, SpinorField, eval_external_fields,
                              fd4_derivative, spectral_derivative)
from spinguide.local import (quantum_potential, quantum_potential_parts, rho_at, spin_vector,
                             spin_vector_angular, velocity_kernels)
from spinguide.su2 import RotatorParams, quadrature_rule


def uniform_field(spinor, n=16, extent=8.0, k=0.0):
    grid = GridSpec((extent,), (n,))
    x = grid.axes()[0]
    phase = np.exp(1j * k * x)
    values = np.array(spinor, complex)[:, None] * phase[None]
    return SpinorField(grid, values)


# ---------------------------------------------------------------- grid and derivatives


def test_grid_invariants():
    g = GridSpec((10.0, 4.0), (32, 8))
    assert g.spacing == pytest.approx((10.0 / 32, 0.5))
    assert g.dims == 2 and g.shape == (32, 8)
    with pytest.raises(ValueError):
        GridSpec((10.0,), (4,))


def test_spectral_and_fd4_orders():
    def err(n, fn):
        g = GridSpec((2 * np.pi,), (n,), origin=(0.0,))
        x = g.axes()[0]
        f = np.exp(np.sin(x))
        return np.abs(fn(f, g, 0) - np.cos(x) * f).max()

    assert err(32, spectral_derivative) < 1e-12
    ratio = err(32, fd4_derivative) / err(64, fd4_derivative)
    assert ratio == pytest.approx(16.0, rel=0.1)


# ---------------------------------------------------------------- external fields


def test_constant_fields():
    f = ExternalFields.from_descriptor({"B": {"type": "constant", "value": [0, 0, 1.5]}})
    A, B, V = eval_external_fields(f, np.zeros((2, 3)))
    assert np.all(A == 0) and np.allclose(B, [[0, 0, 1.5]] * 2) and np.all(V == 0)


def test_symmetric_gauge_curl_checked():
    b0 = 0.7
    f = ExternalFields.from_descriptor({
        "A": {"type": "linear", "matrix": [[0, -b0 / 2, 0], [b0 / 2, 0, 0], [0, 0, 0]]},
        "B": {"type": "constant", "value": [0, 0, b0]}, "consistency_mode": "curl_checked"})
    _, B, _ = eval_external_fields(f, np.random.default_rng(0).normal(size=(5, 3)))
    assert np.allclose(B, [0, 0, b0])
    derived = ExternalFields.from_descriptor({"A": {"type": "symmetric_gauge", "B0": [0, 0, b0]},
                                              "B": {"type": "curl_of_A"}})
    assert np.allclose(derived.at(np.zeros((1, 3)))[1], [0, 0, b0])


def test_curl_mismatch():
    f = ExternalFields.from_descriptor({
        "A": {"type": "linear", "matrix": [[1, 0, 0], [0, 0, 0], [0, 0, 0]]},
        "B": {"type": "constant", "value": [0, 0, 1]}, "consistency_mode": "curl_checked"})
    with pytest.raises(CurlMismatch):
        eval_external_fields(f, np.zeros((1, 3)))


def test_unknown_descriptor():
    with pytest.raises(ValueError):
        ExternalFields.from_descriptor({"V": {"type": "wobbly"}})


# ---------------------------------------------------------------- densities


def test_rho_examples():
    s = uniform_field((1, 0))
    assert rho_at(s, [0.3, 0, 0], (0.0, 0.0, 0.0)) == pytest.approx(1 / (8 * np.pi**2))
    assert rho_at(s, [0.3, 0, 0], (np.pi, 0.0, 0.0)) == pytest.approx(0.0, abs=1e-30)


def test_rho_integrates_to_spinor_density(rng):
    grid = GridSpec((8.0,), (16,))
    vals = rng.normal(size=(2, 16)) + 1j * rng.normal(size=(2, 16))
    s = SpinorField(grid, vals)
    rule = quadrature_rule()
    ang = np.stack([rule.angles.alpha, rule.angles.beta, rule.angles.gamma], -1)
    pts = grid.points3()
    for i in range(0, 16, 3):
        rho = rho_at(s, np.repeat(pts[i:i + 1], len(ang), 0), ang)
        assert rule.integrate(rho) == pytest.approx((np.abs(vals[:, i]) ** 2).sum(), rel=1e-10)


def test_quantum_potential_gaussian():
    p = RotatorParams(m=2.0, I=0.5, hbar=0.9)
    sigma = 0.7
    s = FreeGaussianSpinor.polarized((1, 0), sigma=(sigma, 1, 1), params=p)
    q_x, _ = quantum_potential_parts(s, [0, 0, 0], (1.0, 0.2, 0.3), p, t=0)
    assert q_x[0] == pytest.approx(p.hbar**2 / (4 * p.m * sigma**2), rel=1e-12)


def test_quantum_potential_uniform_density_and_scaling():
    p = RotatorParams()
    s = uniform_field((1, 0), k=2 * np.pi / 8.0)
    x = np.zeros((4, 3))
    x[:, 0] = [-2, -0.5, 1, 3]
    q = quantum_potential(s, x, np.tile([1.1, 0.4, 0.2], (4, 1)), p)
    assert np.ptp(q) < 1e-12
    sc = SpinorField(s.grid, 3.0 * s.values)
    q3 = quantum_potential(sc, x, np.tile([1.1, 0.4, 0.2], (4, 1)), p)
    assert np.abs(q3 - q).max() < 1e-10


def test_quantum_potential_converges_on_grid():
    p = RotatorParams()
    s = FreeGaussianSpinor.polarized((0.6, 0.8), sigma=(1.0, 1, 1), k=(0.3, 0, 0), params=p)
    x, ang = np.array([[0.2, 0, 0]]), (1.0, 0.3, 0.4)
    exact = quantum_potential(s, x, ang, p, t=0)
    errs = []
    for n in (32, 64):
        grid = GridSpec((20.0,), (n,))
        f = SpinorField(grid, s.to_field(grid, 0.0).values, derivative="fd4")
        errs.append(abs(quantum_potential(f, x, ang, p) - exact)[0])
    assert errs[0] / errs[1] > 10  # fd4 grid derivatives


def test_quantum_potential_node():
    s = uniform_field((1, 0))
    with pytest.raises(NodeSingularity):
        quantum_potential(s, [0.0, 0, 0], (np.pi, 0.3, 0.1), RotatorParams())


# ---------------------------------------------------------------- spin and kernels


def test_spin_vector_examples():
    assert np.allclose(spin_vector(uniform_field((1, 0)), [0.0, 0, 0], 0.7), [0, 0, 0.35])
    h = 1 / np.sqrt(2)
    assert np.allclose(spin_vector(uniform_field((h, h)), [0.0, 0, 0], 0.7), [0.35, 0, 0])


def test_spin_vector_both_forms(rng):
    grid = GridSpec((8.0,), (16,))
    for _ in range(50):
        vals = rng.normal(size=(2, 16)) + 1j * rng.normal(size=(2, 16))
        s = SpinorField(grid, vals)
        x = [[rng.uniform(-4, 4), 0, 0]]
        assert np.abs(spin_vector(s, x) - spin_vector_angular(s, x)).max() < 1e-10


def test_velocity_kernel_examples():
    p = RotatorParams(hbar=0.8)
    k = 2 * np.pi * 3 / 8.0
    lk = velocity_kernels(uniform_field((0.6, 0.8j), k=k), [0.1, 0, 0], (1.0, 0.3, 0.2), p)
    assert lk.phase_gradient[0] == pytest.approx(p.hbar * k)

    real = SpinorField(GridSpec((8.0,), (16,)), np.array([np.ones(16), np.ones(16)], complex))
    lk = velocity_kernels(real, [0.1, 0, 0], (1.0, 0.0, 0.0), p)
    assert np.abs(lk.phase_gradient).max() < 1e-14

    # spin-up: arg u_1 = -(beta + gamma)/2
    lk = velocity_kernels(uniform_field((1, 0)), [0.1, 0, 0], (1.2, 0.4, 0.3), p)
    assert np.allclose(lk.angle_phase_gradient[1:].ravel(), [-p.hbar / 2, -p.hbar / 2])
    assert lk.angle_phase_gradient[0] == pytest.approx(0.0, abs=1e-14)


def test_kernels_global_phase_invariant(rng):
    p = RotatorParams()
    c = (GaussianComponent(0.8, (0.2, 0, 0), (1.0, 1, 1), (0.7, 0, 0)),
         GaussianComponent(0.6j, (-0.3, 0, 0), (0.8, 1, 1), (-0.4, 0, 0)))
    grid = GridSpec((16.0,), (64,))
    s = FreeGaussianSpinor(c, p).to_field(grid, 0.2)
    s2 = SpinorField(grid, np.exp(1.234j) * s.values)
    x, ang = [[0.3, 0, 0]], (1.0, 0.5, 2.0)
    a, b = velocity_kernels(s, x, ang, p), velocity_kernels(s2, x, ang, p)
    for name in ("phase_gradient", "angle_phase_gradient", "angular_kernel"):
        assert np.abs(getattr(a, name) - getattr(b, name)).max() < 1e-12
