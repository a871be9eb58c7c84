import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nmqj.linalg import EXCITED, GROUND
from nmqj.model import (
    Constant,
    DampedOscillation,
    DecayChannel,
    ModelSpec,
    build_two_level_model,
    effective_hamiltonian,
    excited_state,
    superposition_state,
)
from nmqj.oracle import running_integral
from nmqj.propagator import (
    StateAnnihilatedError,
    StepControl,
    UnnormalizedState,
    deterministic_step,
    no_jump_trajectory,
    propagate_batch,
    renormalize,
    step_maps,
)

from conftest import random_hermitian, random_matrix, random_state


def test_step_control_validation():
    with pytest.raises(ValueError):
        StepControl(0.0)
    with pytest.raises(ValueError):
        StepControl(1e-3, max_jump_prob=0.6)
    with pytest.raises(ValueError):
        StepControl(1e-3, integrator_order="second")
    assert StepControl(1e-3).max_jump_prob == 0.1


def test_zero_hamiltonian_step_is_identity():
    m = build_two_level_model(Constant(0.0), None, superposition_state())
    for order in ("first", "fourth"):
        out = deterministic_step(m.initial_state, m, 0.0, StepControl(0.1, integrator_order=order))
        assert np.array_equal(out.amps, m.initial_state)
        assert out.norm_sq == pytest.approx(1.0, abs=1e-15)


def test_first_order_literal_step():
    m = build_two_level_model(Constant(1.0), None, excited_state())
    out = deterministic_step(EXCITED, m, 0.0, StepControl(0.01, integrator_order="first"))
    assert out.amps[1] == pytest.approx(1 - 0.005, abs=1e-15)
    assert out.norm_sq == pytest.approx(0.990025, abs=1e-12)


def test_fourth_order_norm_decay():
    # closed form |phi(t)|^2 = e^{-t}
    m = build_two_level_model(Constant(1.0), None, excited_state())
    ctrl = StepControl(1e-3)
    psi = EXCITED.reshape(1, 2).astype(complex)
    for i in range(1000):
        psi = propagate_batch(psi, step_maps(m, i * 1e-3, 1e-3), 1e-3)
    assert float(np.vdot(psi[0], psi[0]).real) == pytest.approx(math.exp(-1.0), abs=1e-8)
    one = deterministic_step(EXCITED, m, 0.0, ctrl)
    assert one.norm_sq == pytest.approx(math.exp(-1e-3), abs=1e-15)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_first_order_matches_hand_multiply(seed, d):
    rng = np.random.default_rng(seed)
    hs = random_hermitian(rng, d)
    c = random_matrix(rng, d)
    m = ModelSpec(d, hs, (DecayChannel(c, Constant(float(abs(rng.normal())))),), random_state(rng, d))
    dt = 1e-3
    h = effective_hamiltonian(m, 0.2)
    a = np.eye(d) - 1j * dt * h
    v = m.initial_state
    # hand-rolled product, split into real and imaginary parts, summed left to right
    ref = np.empty(d, dtype=complex)
    for i in range(d):
        re = a[i, 0].real * v[0].real - a[i, 0].imag * v[0].imag
        im = a[i, 0].real * v[0].imag + a[i, 0].imag * v[0].real
        for k in range(1, d):
            re = re + (a[i, k].real * v[k].real - a[i, k].imag * v[k].imag)
            im = im + (a[i, k].real * v[k].imag + a[i, k].imag * v[k].real)
        ref[i] = complex(re, im)
    out = deterministic_step(v, m, 0.2, StepControl(dt, integrator_order="first"))
    assert np.array_equal(out.amps, ref)


@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.sampled_from(["first", "fourth"]))
def test_norm_never_grows_under_positive_rates(seed, d, order):
    rng = np.random.default_rng(seed)
    chans = tuple(DecayChannel(random_matrix(rng, d), Constant(float(abs(rng.normal()))), f"c{j}") for j in range(2))
    m = ModelSpec(d, random_hermitian(rng, d), chans, random_state(rng, d))
    out = deterministic_step(m.initial_state, m, 0.0, StepControl(1e-2, integrator_order=order))
    assert out.norm_sq <= 1.0 + 1e-12


def test_norm_grows_under_negative_rate():
    m = build_two_level_model(Constant(-0.5), None, superposition_state())
    for order in ("first", "fourth"):
        out = deterministic_step(m.initial_state, m, 0.0, StepControl(1e-2, integrator_order=order))
        assert out.norm_sq > 1.0


def test_renormalize_examples():
    assert np.array_equal(renormalize(UnnormalizedState.from_amps(EXCITED)), EXCITED)
    assert np.array_equal(renormalize(UnnormalizedState.from_amps(2 * EXCITED)), EXCITED)
    phased = UnnormalizedState.from_amps(np.array([0.0, 3j]))
    assert np.array_equal(renormalize(phased), np.array([0.0, 1j]))  # phase kept
    with pytest.raises(StateAnnihilatedError, match="state annihilated"):
        renormalize(UnnormalizedState.from_amps(np.zeros(2)))


def test_unnormalized_state_norm_cache():
    v = np.array([0.3 + 0.1j, -2.0j, 0.5])
    u = UnnormalizedState.from_amps(v)
    assert u.norm_sq == pytest.approx(float(np.vdot(v, v).real), abs=1e-12)


def test_no_jump_constant_when_idle():
    m = build_two_level_model(Constant(0.0), None, superposition_state())
    traj = no_jump_trajectory(m, np.linspace(0, 2, 5))
    # renormalizing 1/sqrt(2) amplitudes moves them by a few ulps at most
    assert np.max(np.abs(traj - m.initial_state)) <= 1e-13


def test_no_jump_matches_closed_form(osc_rate):
    # superposition start: P_e^nj = e^{-G}/(1 + e^{-G}), G = int Delta
    m = build_two_level_model(osc_rate, None, superposition_state())
    grid = np.linspace(0, 6, 25)
    traj = no_jump_trajectory(m, grid, StepControl(1e-3))
    pe = np.abs(traj[:, 1]) ** 2
    gam = np.array([running_integral(osc_rate, t) for t in grid])
    expect = np.exp(-gam) / (1 + np.exp(-gam))
    assert np.max(np.abs(pe - expect)) < 1e-9
    # decays while Delta > 0, partially revives while Delta < 0
    k1 = np.argmin(np.abs(grid - np.pi / 2))
    k2 = np.argmin(np.abs(grid - np.pi))
    assert pe[k1] < pe[0] and pe[k2] > pe[k1]


@pytest.mark.parametrize("order,p", [("first", 1), ("fourth", 4)])
def test_dt_halving_convergence_order(order, p):
    m = build_two_level_model(DampedOscillation(1.0, 0.25, 2.0), Constant(0.4), superposition_state())
    grid = np.array([0.0, 1.0])
    ref = no_jump_trajectory(m, grid, StepControl(1e-4, integrator_order="fourth"))[-1]
    dts = (0.04, 0.02) if order == "fourth" else (4e-3, 2e-3)
    errs = [np.max(np.abs(no_jump_trajectory(m, grid, StepControl(dt, integrator_order=order))[-1] - ref)) for dt in dts]
    ratio = errs[0] / errs[1]
    assert 2**p * 0.7 < ratio < 2**p * 1.4
