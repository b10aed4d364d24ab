import numpy as np
import pytest

from spinguide.errors import ResampleOutOfBand
from spinguide.fields import ExternalFields, GridSpec
from spinguide.galileo import (COVARIANCE_BUDGET, RESIDUAL_KEYS, CovarianceScenario, GalileoElement,
                               SpinHalfRotation, angular_momentum_conjugation_residual,
                               basis_shift_residual, correspondence_check_40, covariance_residual,
                               density_factor_residual, transform_angles, transform_fields,
                               transform_spinor_state, transform_trajectory)
from spinguide.guidance import Trajectory
from spinguide.local import spin_vector
from spinguide.propagator import InitialState, PropagatorConfig, init_state
from spinguide.su2 import RotatorParams


def random_angles(rng, n=100):
    return np.column_stack([rng.uniform(0.3, 2.8, n), rng.uniform(0, 2 * np.pi, n),
                            rng.uniform(0, 4 * np.pi, n)])


def second_order(fn, eps):
    """Ratio fn(eps) / fn(eps / 2), 4 for a second-order quantity."""
    return fn(eps) / fn(0.5 * eps)


def test_element_guards():
    with pytest.raises(ValueError):
        GalileoElement(epsilon=(0.2, 0, 0))
    assert np.allclose(GalileoElement(epsilon=(0, 0, 0.05)).eta_vector, [0, 0, -0.05])


def test_rotation_pair_defects():
    eps = np.array([0.01, -0.02, 0.015])
    for name in ("unitarity_defect", "orthogonality_defect", "intertwining_residual"):
        r = second_order(lambda e: getattr(SpinHalfRotation(e), name)(), eps)
        assert r == pytest.approx(4.0, rel=0.05), name
    assert SpinHalfRotation(np.zeros(3)).intertwining_residual() == 0


def test_transform_angles_examples(rng):
    ang = random_angles(rng, 5)
    assert np.array_equal(transform_angles(ang, np.zeros(3)), ang)
    shifted = transform_angles(ang, np.array([0, 0, 0.03]))
    assert np.allclose(shifted - ang, [0, -0.03, 0])


def test_density_factor_and_basis_shift_second_order(rng):
    ang = random_angles(rng)
    eta = np.array([0.02, -0.01, 0.015])
    r = second_order(lambda e: np.abs(density_factor_residual(ang, e)).max(), eta)
    assert r == pytest.approx(4.0, rel=0.1)
    r = second_order(lambda e: basis_shift_residual(ang, e).max(), eta)
    assert r == pytest.approx(4.0, rel=0.1)


def test_correspondence_40(rng):
    ang = random_angles(rng)
    zero = correspondence_check_40(np.zeros(3), ang)
    assert zero["generator"] == 0 and zero["shifted"] == 0
    eps = np.array([0, 0, 0.01])
    rep = correspondence_check_40(eps, ang)
    assert rep["generator"] < 1e-15
    assert rep["shifted"] <= np.linalg.norm(eps) ** 2
    r = second_order(lambda e: correspondence_check_40(e, ang)["shifted"], np.array([0.01, 0.02, -0.01]))
    assert r == pytest.approx(4.0, rel=0.1)


def test_angular_momentum_conjugation(rng):
    ang = random_angles(rng, 30)
    spinor = rng.normal(size=2) + 1j * rng.normal(size=2)
    eta = np.array([0.02, 0.01, -0.01])
    r = second_order(lambda e: angular_momentum_conjugation_residual(e, ang, spinor), eta)
    assert r == pytest.approx(4.0, rel=0.1)


# ---------------------------------------------------------------- fields and trajectories


def test_transform_fields_examples():
    B0, eps = 0.8, 0.01
    f = ExternalFields.from_descriptor({"B": {"type": "constant", "value": [0, 0, B0]}})
    B = transform_fields(f, GalileoElement(epsilon=(eps, 0, 0))).at(np.zeros((1, 3)))[1][0]
    # a = 1 + eps_k e_ijk maps z-hat to z-hat + eps e_{y z x} y-hat
    assert np.allclose(B, [0, eps * B0, B0])
    V = ExternalFields.from_descriptor({"V": {"type": "harmonic", "k": 0.3}})
    g = GalileoElement(w=(0.4, 0, 0))
    x = np.array([[0.5, 0.1, 0.0]])
    assert np.allclose(transform_fields(V, g).V(x, 0.0), V.V(g.inverse_space_map(x, 0.0), 0.0))
    ident = transform_fields(f, GalileoElement())
    assert np.allclose(ident.at(x)[1], f.at(x)[1])


def test_transform_trajectory_examples():
    t = np.linspace(0, 1, 11)
    q = np.column_stack([t, 0 * t, 0 * t])
    th = np.tile([1.0, 0.2, 0.3], (11, 1))
    tr = Trajectory(t, q, th)
    same = transform_trajectory(tr, GalileoElement())
    assert np.allclose(same.q, q) and np.allclose(same.theta, th)
    moved = transform_trajectory(tr, GalileoElement(c=(0.5, 0, 0)))
    assert np.allclose(moved.q - q, [0.5, 0, 0]) and np.allclose(moved.theta, th)
    boosted = transform_trajectory(tr, GalileoElement(w=(0.3, 0, 0)))
    assert np.allclose(boosted.q[:, 0], q[:, 0] - 0.3 * t)


# ---------------------------------------------------------------- states


@pytest.fixture(scope="module")
def packet():
    p = RotatorParams(m=1.0, I=0.5)
    grid = GridSpec((24.0,), (128,))
    state = init_state(grid, InitialState(center=(0.3,), width=1.0, wavevector=(0.6,),
                                          polarization=(0.8, 0.6j)), p)
    return p, grid, state


def test_state_identity_and_norm(packet):
    p, grid, state = packet
    same = transform_spinor_state(state, GalileoElement(), p)
    assert np.abs(same.values - state.values).max() < 1e-12
    for g in (GalileoElement(c=(0.7, 0, 0)), GalileoElement(w=(0.4, 0, 0)), GalileoElement(d=0.3)):
        assert abs(transform_spinor_state(state, g, p).norm() - state.norm()) < 1e-10
    # the first-order S is unitary only to O(eps^2)
    r = second_order(lambda e: abs(transform_spinor_state(state, GalileoElement(epsilon=(e, 0, 0)), p)
                                   .norm() - 1), 0.02)
    assert r == pytest.approx(4.0, rel=0.05)


def test_boost_phase_vanishes_at_origin():
    g = GalileoElement(w=(0.4, -0.2, 0.1))
    assert g.chi(np.zeros((1, 3)), 0.0, 1.7)[0] == 0


def test_spin_vector_rotates(packet):
    p, grid, state = packet
    eps = 0.01
    g = GalileoElement(epsilon=(eps, 0, 0))
    new = transform_spinor_state(state, g, p)
    x = [[0.3, 0, 0]]
    s0, s1 = spin_vector(state, x, p.hbar), spin_vector(new, x, p.hbar)
    assert np.abs(s1 - g.rotation.a @ s0).max() < 5 * eps**2


def test_out_of_band_guards():
    p = RotatorParams()
    grid = GridSpec((8.0,), (32,))
    state = init_state(grid, InitialState(width=0.8), p)
    with pytest.raises(ResampleOutOfBand):
        transform_spinor_state(state, GalileoElement(w=(9.0, 0, 0)), p)
    with pytest.raises(ValueError):
        transform_spinor_state(state, GalileoElement(epsilon=(0, 0, 0.01)), p)


def covariance_1d(state, p, dt):
    fields = ExternalFields.from_descriptor({"A": {"type": "constant", "value": [0.1, 0, 0]},
                                             "B": {"type": "constant", "value": [0.3, 0, 0.5]},
                                             "V": {"type": "harmonic", "k": 0.05}})
    return CovarianceScenario(state, fields, p, PropagatorConfig(dt=dt), 0.5, (0.4, 0, 0),
                              (1.1, 0.4, 0.9), dt)


def test_covariance_exact_elements_1d(packet):
    p, grid, state = packet
    sc = covariance_1d(state, p, 0.005)
    for g in (GalileoElement(d=0.4), GalileoElement(c=(0.6, 0, 0)), GalileoElement(w=(0.3, 0, 0))):
        rep = covariance_residual(sc, g)
        assert rep["trajectory_status"] == ["ok", "ok"]
        for k in RESIDUAL_KEYS:
            assert rep[k] <= COVARIANCE_BUDGET[k], (g, k, rep[k])


def test_boost_trajectory_residual_is_integrator_error(packet):
    p, grid, state = packet
    g = GalileoElement(w=(0.3, 0, 0))
    r = [covariance_residual(covariance_1d(state, p, dt), g)["trajectory_q"] for dt in (0.01, 0.005)]
    assert r[0] / r[1] == pytest.approx(4.0, rel=0.1)
