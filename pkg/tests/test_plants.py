from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddpc.errors import DimensionMismatch, StepTooLong
from ddpc.plants import (LipWalker, LipWalkerState, LtiSystem, PerturbationSchedule, WalkerParams,
                         analytic_lip, clamp_cop, impact_swap, integrate, lip_dynamics, lti_step,
                         observe, orbit_state, orbital_energy, random_stable_system,
                         randomize_model, stance_frame_output)
from ddpc.reference import Stance

W = np.sqrt(9.81 / 0.8)


def state_at(com, vel=(0, 0, 0), p_left=(0, 0.1, 0), p_right=(0, -0.1, 0), stance=Stance.LEFT,
             cop=(0, 0)):
    return LipWalkerState(com, vel, p_left, p_right, stance, 0.0, np.asarray(p_right)[:2],
                          0.0, cop)


def rk4_rollout(s, cop, dt, T, force=(0, 0, 0), mass=82.0):
    for _ in range(int(round(T / dt))):
        s = integrate(s, cop, force, dt, mass)
    return s


# -- LTI ----------------------------------------------------------------------

def test_pure_feedthrough():
    sys = LtiSystem(np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2), np.eye(2))
    _, eta = lti_step(sys, [0.3, -0.7])
    np.testing.assert_array_equal(eta, [0.3, -0.7])


def test_geometric_decay():
    sys = LtiSystem([[0.5]], [[1.0]], [[1.0]], [[0.0]], [1.0])
    out = []
    for _ in range(5):
        sys, eta = lti_step(sys, [0.0])
        out.append(eta[0])
    assert out == [1.0, 0.5, 0.25, 0.125, 0.0625]


def test_rollout_matches_convolution():
    rng = np.random.default_rng(4)
    sys = random_stable_system(rng, 4, 2, 3)
    u = rng.standard_normal((200, 2))
    y, _ = sys.rollout(u)
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    powers = [np.linalg.matrix_power(A, i) for i in range(201)]
    for k in (0, 1, 57, 199):
        ref = C @ powers[k] @ sys.theta + D @ u[k]
        ref = ref + sum(C @ powers[k - 1 - i] @ B @ u[i] for i in range(k))
        np.testing.assert_allclose(y[k], ref, atol=1e-10)


def test_lti_dimension_checks():
    sys = LtiSystem([[0.5]], [[1.0]], [[1.0]], [[0.0]])
    with pytest.raises(DimensionMismatch):
        lti_step(sys, [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        LtiSystem(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), [[0.0]], theta=[1.0])


@settings(max_examples=30)
@given(seed=st.integers(0, 10_000), beta=st.integers(1, 5), kappa=st.integers(1, 3),
       nu=st.integers(1, 3))
def test_random_systems_are_stable(seed, beta, kappa, nu):
    sys = random_stable_system(np.random.default_rng(seed), beta, kappa, nu)
    assert sys.spectral_radius() <= 1 + 1e-9
    assert (sys.beta, sys.kappa, sys.nu) == (beta, kappa, nu)


# -- LIP dynamics -------------------------------------------------------------

def test_upright_pendulum_has_no_acceleration():
    s = state_at([0.05, 0.02, 0.8])
    np.testing.assert_array_equal(lip_dynamics(s, [0.05, 0.02], np.zeros(3), 82.0), [0, 0])


def test_acceleration_by_substitution():
    s = state_at([0.1, 0.0, 0.8])
    a = lip_dynamics(s, [0.0, 0.0], np.zeros(3), 82.0)
    assert a[0] == pytest.approx(1.22625, abs=1e-12)
    a = lip_dynamics(s, [0.1, 0.0], [8.2, 0, 0], 82.0)
    np.testing.assert_allclose(a, [0.1, 0.0], atol=1e-14)


def test_rk4_matches_analytic_half_second():
    s0 = state_at([0.03, -0.02, 0.8], vel=[0.2, 0.1, 0.0])
    s = rk4_rollout(s0, [0.0, 0.01], 1e-3, 0.5)
    p, v = analytic_lip(s0.com[:2], s0.com_vel[:2], [0.0, 0.01], 0.5, W)
    np.testing.assert_allclose(s.com[:2], p, atol=1e-6)
    np.testing.assert_allclose(s.com_vel[:2], v, atol=1e-6)


def test_rk4_matches_analytic_with_force():
    s0 = state_at([0.03, 0.0, 0.8], vel=[0.2, 0.0, 0.0])
    f = np.array([-11.0, 3.0, 0.0])
    s = rk4_rollout(s0, [0.0, 0.0], 1e-3, 1.0, force=f)
    p, _ = analytic_lip(s0.com[:2], s0.com_vel[:2], [0.0, 0.0], 1.0, W, accel=f[:2] / 82.0)
    np.testing.assert_allclose(s.com[:2], p, atol=1e-6)


def test_zero_dynamics_fixed_point():
    s0 = state_at([0.02, 0.01, 0.8], cop=[0.02, 0.01])
    s = rk4_rollout(s0, [0.02, 0.01], 0.005, 0.5)
    np.testing.assert_array_equal(s.com, s0.com)
    np.testing.assert_array_equal(s.com_vel, s0.com_vel)


def test_fourth_order_convergence():
    s0 = state_at([0.05, 0.0, 0.8], vel=[0.1, 0.0, 0.0])
    p_ref, _ = analytic_lip(s0.com[:2], s0.com_vel[:2], [0, 0], 1.0, W)
    errs = [np.max(np.abs(rk4_rollout(s0, [0, 0], dt, 1.0).com[:2] - p_ref))
            for dt in (0.04, 0.02, 0.01)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(14 <= r <= 18 for r in ratios), ratios


def test_orbital_energy_conserved():
    s0 = state_at([0.04, -0.03, 0.8], vel=[-0.1, 0.15, 0.0])
    cop = np.array([0.01, -0.01])
    e0 = orbital_energy(s0.com[:2], s0.com_vel[:2], cop, W)
    s = rk4_rollout(s0, cop, 1e-3, 1.0)
    np.testing.assert_allclose(orbital_energy(s.com[:2], s.com_vel[:2], cop, W), e0, atol=1e-8)


def test_integrate_keeps_feet_and_clock():
    s0 = state_at([0.04, 0.0, 0.8])
    s = integrate(s0, [0, 0], np.zeros(3), 0.01)
    assert s.t0 == s0.t0 and s.stance is s0.stance
    np.testing.assert_array_equal(s.p_left, s0.p_left)
    assert s.time == pytest.approx(0.01)
    with pytest.raises(ValueError):
        integrate(s0, [0, 0], np.zeros(3), 0.0)


@given(x=st.floats(-1, 1), y=st.floats(-1, 1))
def test_cop_clamp_inside_box(x, y):
    c = clamp_cop([x, y], [0.2, 0.1, 0.0])
    assert 0.11 - 1e-15 <= c[0] <= 0.29 + 1e-15
    assert 0.05 - 1e-15 <= c[1] <= 0.15 + 1e-15
    if abs(x - 0.2) <= 0.09 and abs(y - 0.1) <= 0.05:
        np.testing.assert_array_equal(c, [x, y])


# -- impacts and observation --------------------------------------------------

def test_impact_in_place_changes_only_label_and_clock():
    s = replace(state_at([0.0, 0.0, 0.8]), time=1.0)
    post = impact_swap(s, s.swing_foot[:2])
    assert post.stance is Stance.RIGHT and post.t0 == 1.0
    np.testing.assert_array_equal(post.p_left, s.p_left)
    np.testing.assert_array_equal(post.p_right, s.p_right)
    np.testing.assert_array_equal(post.com, s.com)
    np.testing.assert_array_equal(post.swing_start, s.p_left[:2])


def test_impact_symmetric_relabel():
    # feet mirrored about the CoM: swapping them swaps the observation blocks
    s = state_at([0.0, 0.0, 0.8], p_left=(0.06, 0.1, 0), p_right=(-0.06, -0.1, 0))
    post = impact_swap(s, [0.06, -0.1])
    post = post.with_feet([0.06, -0.1, 0.0], [-0.06, 0.1, 0.0])
    mirrored = state_at([0.0, 0.0, 0.8], p_left=(0.06, -0.1, 0), p_right=(-0.06, 0.1, 0))
    _, e1 = observe(s)
    _, e2 = observe(mirrored)
    np.testing.assert_array_equal(e1[:3] * [1, -1, 1], e2[:3])


def test_impact_step_too_long():
    s = state_at([0.0, 0.0, 0.8])
    with pytest.raises(StepTooLong):
        impact_swap(s, [0.25, -0.1])


def scripted_impact(step_length, stance=Stance.LEFT):
    """Integrate one orbit domain, land the swing foot on the target, apply the reset."""
    p = WalkerParams()
    s = orbit_state(p, step_length, stance)
    for _ in range(int(round(p.step_duration / p.control_dt))):
        s = integrate(s, s.stance_foot[:2], np.zeros(3), p.control_dt, p.mass)
    target = s.stance_foot[:2] + [step_length, s.stance.lateral_sign * p.step_width]
    pre = s.with_feet(s.stance_foot, np.array([target[0], target[1], 0.0]))
    return pre, impact_swap(pre, target)


@pytest.mark.parametrize("i,step_length", list(enumerate(np.linspace(0.08, 0.17, 10))))
def test_scripted_impacts_redundancy(i, step_length):
    pre, post = scripted_impact(step_length, Stance.LEFT if i % 2 else Stance.RIGHT)
    assert post.stance is not pre.stance
    eta_jump = observe(post)[1] - observe(pre)[1]
    assert np.max(np.abs(eta_jump)) <= 1e-9
    sf_jump = stance_frame_output(pre) - stance_frame_output(post)
    assert abs(sf_jump[0]) == pytest.approx(step_length, abs=1e-12)
    assert abs(sf_jump[1]) == pytest.approx(0.2, abs=1e-12)


@settings(max_examples=50)
@given(seed=st.integers(0, 100_000))
def test_observation_identity(seed):
    rng = np.random.default_rng(seed)
    s = state_at(rng.standard_normal(3), p_left=rng.standard_normal(3),
                 p_right=rng.standard_normal(3), cop=rng.standard_normal(2))
    mu, eta = observe(s)
    np.testing.assert_allclose(eta[:3] - eta[3:], s.p_right - s.p_left, atol=1e-14)
    np.testing.assert_allclose(mu[:2] - mu[2:], (s.p_right - s.p_left)[:2], atol=1e-14)


def test_observe_geometry():
    s = state_at([0.0, 0.1, 0.8], p_left=(0, 0.1, 0), p_right=(0.1, -0.1, 0), cop=(0, 0.1))
    mu, eta = observe(s)
    np.testing.assert_allclose(eta, [0, 0, 0.8, -0.1, 0.2, 0.8], atol=1e-15)
    np.testing.assert_allclose(mu[:2], 0.0, atol=1e-15)


def test_observe_noise_needs_rng():
    with pytest.raises(ValueError):
        observe(state_at([0, 0, 0.8]), noise_std=0.1)
    a = observe(state_at([0, 0, 0.8]), noise_std=0.1, rng=np.random.default_rng(1))
    b = observe(state_at([0, 0, 0.8]), noise_std=0.1, rng=np.random.default_rng(1))
    np.testing.assert_array_equal(a[1], b[1])


# -- perturbation and model randomization -------------------------------------

def test_perturbation_staircase():
    p = PerturbationSchedule()
    assert p.magnitude(0.0) == 5.0 and p.magnitude(2.99) == 5.0
    assert p.magnitude(3.0) == 8.0 and p.magnitude(9.5) == 14.0
    np.testing.assert_allclose(p.force(0.0), [-5.0, 0, 0])
    assert PerturbationSchedule.none().magnitude(100.0) == 0.0


def test_perturbation_validation():
    with pytest.raises(ValueError):
        PerturbationSchedule(period=0.0)
    with pytest.raises(ValueError):
        PerturbationSchedule(direction=(0, 0, 0))
    assert np.linalg.norm(PerturbationSchedule(direction=(3, 4, 0)).direction) == pytest.approx(1)


def test_randomize_deterministic():
    assert randomize_model(5) == randomize_model(5)
    assert randomize_model(5) != randomize_model(6)


def test_randomized_offsets_in_device_range():
    offs = [randomize_model(s).com_offset for s in range(50)]
    assert all(-0.122 <= o <= -0.106 for o in offs)


def test_zero_width_interval_gives_nominal():
    p = randomize_model(3, offset_range=(-0.114, -0.114), height_range=(1.0, 1.0))
    assert p == WalkerParams()


def test_nominal_orbit_is_periodic():
    p = WalkerParams()
    walker = LipWalker.on_orbit(p, 0.12)
    for _ in range(int(round(2.0 / p.control_dt))):
        s = walker.state
        walker.step(s.stance_foot[:2], [0.12, s.stance.lateral_sign * p.step_width])
    assert not walker.fallen
    assert len(walker.steps) == 2
    assert all(r.achieved == 0.12 for r in walker.steps)
    s = walker.state
    np.testing.assert_allclose(s.com[0] - s.stance_foot[0], -0.06, atol=1e-6)


def test_reach_clamps_touchdown():
    p = WalkerParams()
    walker = LipWalker.on_orbit(p, 0.12)
    for _ in range(int(round(1.0 / p.control_dt))):
        s = walker.state
        walker.step(s.stance_foot[:2], [0.19, s.stance.lateral_sign * p.step_width])
    # CoM sits 0.06 ahead of the stance foot at touchdown, so the foot reaches 0.16
    assert walker.steps[0].desired == pytest.approx(0.19)
    assert walker.steps[0].achieved == pytest.approx(0.16, abs=1e-6)


def test_walker_perturbation_logged_and_fall():
    p = WalkerParams()
    walker = LipWalker.on_orbit(p, 0.12, perturbation=PerturbationSchedule(400.0, 0.0))
    for _ in range(int(round(4.0 / p.control_dt))):
        s = walker.state
        walker.step(s.stance_foot[:2], [0.12, s.stance.lateral_sign * p.step_width])
    assert walker.events[0] == {"type": "perturbation", "time": 0.0, "force": 400.0}
    assert walker.fallen and walker.events[-1]["type"] == "fall"


def test_walker_deterministic():
    def run():
        p = replace(randomize_model(2), switch_jitter=0.02, noise_std=1e-3)
        w = LipWalker.on_orbit(p, 0.14, seed=9)
        out = []
        for _ in range(400):
            s = w.state
            w.step(s.stance_foot[:2] + [0.01, 0.0], [0.14, s.stance.lateral_sign * 0.2])
            out.append(w.measure().eta)
        return np.array(out)
    assert np.array_equal(run(), run())


def test_flat_ground_after_impacts():
    p = WalkerParams()
    walker = LipWalker.on_orbit(p, 0.12)
    for _ in range(int(round(3.0 / p.control_dt))):
        s = walker.state
        walker.step(s.stance_foot[:2], [0.12, s.stance.lateral_sign * p.step_width])
        assert walker.state.stance_foot[2] == 0.0
