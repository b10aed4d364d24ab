import numpy as np
import pytest

from spinguide.analytic import FreeGaussianSpinor, GaussianComponent
from spinguide.errors import PoleSingularity
from spinguide.fields import ExternalFields, GridSpec, SpinorField
from spinguide.guidance import (EnsembleSpec, angular_average_velocity, free_spinup_analytic,
                                integrate_trajectory, run_ensemble, sample_initial, spinup_rate,
                                velocity_angular, velocity_pauli, velocity_spin_supplement,
                                velocity_translational)
from spinguide.su2 import RotatorParams, angle_difference, basis_u, su2_metric


def plane_wave(spinor, k_index=2, n=32, extent=8.0):
    grid = GridSpec((extent,), (n,))
    k = 2 * np.pi * k_index / extent
    vals = np.array(spinor, complex)[:, None] * np.exp(1j * k * grid.axes()[0])[None]
    return SpinorField(grid, vals), k


def test_translational_examples(params, rng):
    s, k = plane_wave((0.6, 0.8j))
    ang = np.column_stack([rng.uniform(0.3, 2.8, 5), rng.uniform(0, 6, 5), rng.uniform(0, 12, 5)])
    x = np.tile([0.3, 0, 0], (5, 1))
    v = velocity_translational(s, None, x, ang, params)
    assert np.allclose(v[0], params.hbar * k / params.m) and np.allclose(v[1:], 0)

    grid = s.grid
    standing = SpinorField(grid, np.array([np.cos(2 * np.pi * grid.axes()[0] / 8.0) + 2, 0 * grid.axes()[0]], complex))
    assert np.abs(velocity_translational(standing, None, x, ang, params)).max() < 1e-13

    A = ExternalFields.from_descriptor({"A": {"type": "constant", "value": [0.4, 0, 0]}})
    vA = velocity_translational(s, A, x[:1], ang[:1], params)
    assert vA[0, 0] == pytest.approx((params.hbar * k - 0.4) / params.m)


def test_factorized_translational_is_angle_independent(spin_up, params, rng):
    ang = np.column_stack([rng.uniform(0.3, 2.8, 8), rng.uniform(0, 6, 8), rng.uniform(0, 12, 8)])
    v = velocity_translational(spin_up, None, np.tile([0.4, 0, 0], (8, 1)), ang, params, t=0.5)
    assert np.ptp(v, axis=1).max() < 1e-13


def test_angular_spin_up_rate():
    p = RotatorParams(I=1.0)
    s = FreeGaussianSpinor.polarized((1, 0), params=p)
    v = velocity_angular(s, None, [0.1, 0, 0], (np.pi / 2, 0.3, 0.2), p, t=0.0)
    assert np.allclose(v, [0, -0.5, -0.5], atol=1e-14)
    assert spinup_rate(np.pi / 2, p) == pytest.approx(0.5)
    assert spinup_rate(0.0, p) == pytest.approx(0.25)


@pytest.mark.parametrize("pol", [(1, 0), (0, 1)])
def test_angular_rates_against_metric_oracle(pol, params):
    """v^r = l^2 g^{rs} d_s S / I with d_s S from finite differences of arg u_a."""
    s = FreeGaussianSpinor.polarized(pol, params=params)
    ang = np.array([1.0, 0.3, 0.2])
    a = int(np.argmax(pol))
    h = 1e-5
    dS = np.zeros(3)
    for r in range(3):
        e = np.zeros(3)
        e[r] = h
        up = basis_u(ang + e).as_array()[a]
        dn = basis_u(ang - e).as_array()[a]
        dS[r] = params.hbar * np.angle(up / dn) / (2 * h)
    l = params.length
    oracle = l**2 * su2_metric(ang, l).g_upper @ dS / params.I
    v = velocity_angular(s, None, [0.1, 0, 0], ang, params, t=0.0)
    assert np.allclose(v, oracle, atol=1e-8)


def test_angular_pole():
    p = RotatorParams()
    s = FreeGaussianSpinor.polarized((1, 0), params=p)
    with pytest.raises(PoleSingularity):
        velocity_angular(s, None, [0.1, 0, 0], (0.0, 0.3, 0.2), p)


def test_pauli_examples(params):
    s, k = plane_wave((0.6, 0.8j))
    A = ExternalFields.from_descriptor({"A": {"type": "constant", "value": [0.2, -0.1, 0.0]}})
    v = velocity_pauli(s, A, [0.3, 0, 0], params)
    assert np.allclose(v, [(params.hbar * k - 0.2) / params.m, 0.1 / params.m, 0])
    real = SpinorField(s.grid, np.abs(s.values) + 0.1)
    assert np.allclose(velocity_pauli(real, A, [0.3, 0, 0], params), [-0.2, 0.1, 0])


def test_pauli_equals_angular_average(superposition, params, rng):
    x = np.zeros((10, 3))
    x[:, 0] = rng.uniform(-1, 1, 10)
    vp = velocity_pauli(superposition, None, x, params, t=0.3)
    va = angular_average_velocity(superposition, None, x, params, t=0.3)
    assert np.abs(vp - va).max() <= 1e-10 * np.abs(vp).max()


def test_spin_supplement_examples(params):
    s, _ = plane_wave((0.6, 0.8j), k_index=0)
    assert np.abs(velocity_spin_supplement(s, [[0.1, 0, 0]], params)).max() < 1e-13

    sigma = 0.9
    c = GaussianComponent(1.0, (0.0, 0, 0), (sigma, sigma, 1), (0, 0, 0))
    st = FreeGaussianSpinor((c, None), params, dims=2)
    x = np.array([[0.4, -0.3, 0.0]])
    v = velocity_spin_supplement(st, x, params, t=0.0)[:, 0]
    # rho ~ exp(-r^2 / 2 sigma^2), s = (0, 0, hbar/2): v = (hbar/2m)(d_y log rho, -d_x log rho, 0)
    dlx, dly = -x[0, 0] / sigma**2, -x[0, 1] / sigma**2
    assert np.allclose(v, [params.hbar / (2 * params.m) * dly, -params.hbar / (2 * params.m) * dlx, 0])


def test_free_spinup_analytic_examples(params):
    th0 = (0.7, 0.2, 0.5)
    np.testing.assert_allclose(free_spinup_analytic(th0, params, 0.0).as_array(), th0)
    with pytest.raises(PoleSingularity):
        free_spinup_analytic((np.pi, 0, 0), params, 1.0)


def test_plane_wave_trajectory(params):
    s, k = plane_wave((1, 0))
    tr = integrate_trajectory([0.2, 0, 0], [1.0, 0.3, 0.2], "rotator", s, params, 0.01, (0, 1.0))
    assert tr.status == "ok"
    assert tr.q[-1, 0] == pytest.approx(0.2 + params.hbar * k / params.m, abs=1e-10)
    exact = free_spinup_analytic([1.0, 0.3, 0.2], params, tr.times).as_array()
    assert np.abs(angle_difference(tr.theta, exact)).max() < 1e-9


def test_pauli_mode_matches_rotator_on_factorized(spin_up, params):
    kw = dict(states=spin_up, params=params, dt=0.01, t_span=(0, 2.0))
    a = integrate_trajectory([0.1, 0, 0], [1.0, 0.3, 0.2], "rotator", **kw)
    b = integrate_trajectory([0.1, 0, 0], [1.0, 0.3, 0.2], "pauli", **kw)
    assert np.abs(a.q - b.q).max() < 1e-12


def test_trajectory_table_and_spin(spin_up, params):
    tr = integrate_trajectory([0.1, 0, 0], [1.0, 0.3, 0.2], "rotator", spin_up, params, 0.01, (0, 0.2))
    tab = tr.table()
    assert tab.shape == (len(tr.times), 11)
    assert np.all(np.diff(tr.times) > 0)
    assert np.all(tr.rho > 0)


def test_pole_abort_records_status():
    p = RotatorParams()
    s = FreeGaussianSpinor.polarized((0, 1), params=p)
    # spin-down rate grows without bound near alpha = 0, a chart pole
    tr = integrate_trajectory([0.0, 0, 0], [1e-7, 0.3, 0.2], "rotator", s, p, 0.01, (0, 1.0))
    assert tr.status in ("pole_abort", "node_abort")
    assert np.all(np.isfinite(tr.q))


def test_ensemble_explicit_and_determinism(spin_up, params):
    q0, th0 = (0.1, 0, 0), (1.0, 0.3, 0.2)
    spec = EnsembleSpec(1, "explicit", explicit=((q0, th0),))
    one = run_ensemble(spec, "rotator", spin_up, params, 0.01, (0, 0.5))[0]
    ref = integrate_trajectory(q0, th0, "rotator", spin_up, params, 0.01, (0, 0.5))
    assert np.array_equal(one.q, ref.q) and np.array_equal(one.theta, ref.theta)

    box = ((-5, 0, 0), (5, 0, 0))
    a = sample_initial(EnsembleSpec(20, seed=3, box=box), spin_up)
    b = sample_initial(EnsembleSpec(20, seed=3, box=box), spin_up)
    c = sample_initial(EnsembleSpec(20, seed=4, box=box), spin_up)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(a[0], c[0])


def test_density_sampling_matches_moments(params):
    s = FreeGaussianSpinor.polarized((1, 0), sigma=(0.8, 1, 1), params=params)
    q, th = sample_initial(EnsembleSpec(2000, seed=11, box=((-6, 0, 0), (6, 0, 0))), s)
    n = len(q)
    assert abs(q[:, 0].mean()) < 3 * 0.8 / np.sqrt(n)
    # spin-up angular density ~ cos^2(alpha/2) sin(alpha): <cos alpha> = 1/3
    assert abs(np.cos(th[:, 0]).mean() - 1 / 3) < 3 * np.sqrt(1 / 3 - 1 / 9) / np.sqrt(n)
