import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmqj.model import (
    Constant,
    DampedOscillation,
    DecayChannel,
    ModelSpec,
    PiecewiseConstant,
    build_two_level_model,
    excited_state,
    superposition_state,
)
from nmqj.oracle import (
    analytic_two_level,
    analytic_two_level_series,
    compare_to_oracle,
    integrate_master_equation,
    rate_integral,
)

from conftest import PE, random_hermitian, random_matrix, random_state

RHO_E = np.diag([0.0, 1.0]).astype(complex)
RHO_SUP = np.full((2, 2), 0.5, dtype=complex)


def test_idle_model_constant():
    m = build_two_level_model(Constant(0.0), None, superposition_state())
    sol = integrate_master_equation(m, [0.0, 1.0, 3.0])
    assert np.max(np.abs(sol.densities - RHO_SUP)) <= 1e-15


def test_markov_decay():
    m = build_two_level_model(Constant(1.0), None, excited_state())
    sol = integrate_master_equation(m, [0.0, 1.0])
    assert sol.densities[-1, 1, 1].real == pytest.approx(math.exp(-1), abs=1e-8)  # [DERIVED]


def test_sine_rate_decay():
    m = build_two_level_model(DampedOscillation(1.0, 0.0, 1.0), None, excited_state())
    sol = integrate_master_equation(m, [0.0, math.pi])
    assert sol.densities[-1, 1, 1].real == pytest.approx(math.exp(-2), abs=1e-8)  # [DERIVED]


def test_analytic_examples():
    assert np.array_equal(analytic_two_level(Constant(0.0), Constant(0.0), RHO_SUP, 4.0), RHO_SUP)
    rho = analytic_two_level(Constant(1.0), Constant(0.0), RHO_SUP, 2.0)
    assert rho[1, 1].real == pytest.approx(0.5 * math.exp(-2), abs=1e-12)  # [DERIVED]
    assert abs(rho[1, 0]) == pytest.approx(0.5 * math.exp(-1), abs=1e-12)  # [DERIVED]
    m = build_two_level_model(Constant(1.0), None, superposition_state())
    num = integrate_master_equation(m, [0.0, 2.0]).densities[-1]
    assert np.max(np.abs(num - rho)) < 1e-8


def test_piecewise_rate():
    r = PiecewiseConstant([1.0], [1.0, -0.8])
    assert rate_integral(r, 0.0, 2.0) == pytest.approx(0.2, abs=1e-12)  # [TRIVIAL]
    rho = analytic_two_level(r, None, RHO_E, 2.0)
    assert rho[1, 1].real == pytest.approx(math.exp(-0.2), abs=1e-12)  # [DERIVED]
    m = build_two_level_model(r, None, excited_state())
    sol = integrate_master_equation(m, [0.0, 0.5, 1.0, 1.5, 2.0])
    assert sol.densities[-1, 1, 1].real == pytest.approx(math.exp(-0.2), abs=1e-8)  # [DERIVED]


@settings(max_examples=8)
@given(
    st.floats(-5, 5), st.floats(0, 1), st.floats(0.2, 3), st.floats(0, 6.3),
    st.floats(-5, 5), st.sampled_from(["e", "sup"]),
)
def test_analytic_matches_integrator(amp, decay, freq, phase, s, start):
    delta = DampedOscillation(amp, decay, freq, phase)
    lamb = Constant(s)
    psi = excited_state() if start == "e" else superposition_state()
    m = build_two_level_model(delta, lamb, psi)
    grid = np.linspace(0.0, 10.0, 11)
    num = integrate_master_equation(m, grid)
    ana = analytic_two_level_series(delta, lamb, np.outer(psi, psi.conj()), grid)
    assert np.max(np.abs(num.densities - ana.densities)) < 1e-7


def test_lamb_shift_phase_convention():
    delta, lamb = DampedOscillation(1.0, 0.25, 2.0), Constant(0.7)
    m = build_two_level_model(delta, lamb, superposition_state())
    grid = np.linspace(0, 3, 7)
    num = integrate_master_equation(m, grid)
    # rho_eg picks up exp(-i Phi / 2) with Phi = S t
    phase = np.angle(num.densities[:, 1, 0])
    expect = np.angle(np.exp(-0.5j * 0.7 * grid))
    assert np.max(np.abs(phase - expect)) < 1e-8  # [DERIVED]


@settings(max_examples=6)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_trace_and_hermiticity_preserved(seed, d):
    rng = np.random.default_rng(seed)
    chans = (
        DecayChannel(random_matrix(rng, d, 0.7), DampedOscillation(1.0, 0.3, 2.0), "a"),
        DecayChannel(random_matrix(rng, d, 0.7), Constant(0.8), "b"),
    )
    m = ModelSpec(d, random_hermitian(rng, d), chans, random_state(rng, d))
    sol = integrate_master_equation(m, np.linspace(0, 3, 7))
    for rho in sol.densities:
        assert abs(np.trace(rho) - 1.0) <= 1e-10
        assert np.max(np.abs(rho - rho.conj().T)) <= 1e-12


def test_revival_with_negative_rate(osc_rate):
    m = build_two_level_model(osc_rate, None, excited_state())
    grid = np.linspace(0, 6, 121)
    pe = integrate_master_equation(m, grid).expectation(PE).real
    d = np.diff(pe)
    assert np.any(d < 0) and np.any(d > 1e-6)  # decays and revives


def test_compare_examples():
    m = build_two_level_model(Constant(1.0), None, excited_state())
    grid = np.linspace(0, 1, 11)
    sol = integrate_master_equation(m, grid)
    exact = sol.expectation(PE).real
    rep = compare_to_oracle(grid, exact, sol, PE)
    assert rep.max_error == 0.0 and rep.ok

    var = exact * (1 - exact)
    n = 100_000
    bad = exact.copy()
    bad[5] += 0.05
    rep = compare_to_oracle(grid, bad, sol, PE, variances=var, n_members=n)
    assert not rep.ok and rep.exceeded.tolist().count(True) == 1
    assert rep.bound[5] == pytest.approx(5 * math.sqrt(var[5] / n))
    doc = rep.to_dict()
    assert doc["n_exceeded"] == 1 and len(doc["points"]) == 11

    with pytest.raises(ValueError, match="grids differ"):
        compare_to_oracle(grid + 0.01, exact, sol, PE)


def test_grid_validation():
    m = build_two_level_model(Constant(1.0), None, excited_state())
    with pytest.raises(ValueError):
        integrate_master_equation(m, [0.5, 1.0])
    with pytest.raises(ValueError):
        integrate_master_equation(m, [0.0, 1.0, 0.5])
