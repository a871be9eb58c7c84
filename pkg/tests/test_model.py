import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nmqj.linalg import DimensionError, SIGMA_MINUS
from nmqj.model import (
    Constant,
    DampedOscillation,
    DecayChannel,
    ModelError,
    ModelSpec,
    PiecewiseConstant,
    RateDomainError,
    Tabulated,
    build_two_level_model,
    effective_hamiltonian,
    evaluate_rate,
    excited_state,
    ground_state,
    load_rate_table,
    superposition_state,
    validate,
    write_rate_table,
)

from conftest import PE, random_hermitian, random_matrix, random_state


def chan(rate):
    return DecayChannel(SIGMA_MINUS, rate)


def test_rate_examples():
    assert evaluate_rate(chan(Constant(1.0)), 123.4) == 1.0
    assert evaluate_rate(chan(DampedOscillation(1.0, 0.0, 1.0, 0.0)), math.pi) == pytest.approx(0.0, abs=1e-15)
    assert evaluate_rate(chan(Tabulated([0.0, 1.0], [0.0, 2.0])), 0.25) == 0.5  # [TRIVIAL]


def test_damped_oscillation_formula():
    r = DampedOscillation(2.0, 0.3, 1.5, 0.4)
    t = 1.7
    assert r(t) == pytest.approx(2.0 * math.exp(-0.3 * t) * math.sin(1.5 * t + 0.4), rel=1e-15)  # [DERIVED]
    with pytest.raises(ValueError):
        DampedOscillation(1.0, -0.1, 1.0)


def test_tabulated_exact_at_breakpoints_and_domain():
    times = [0.0, 0.3, 1.1, 2.0]
    vals = [0.5, -0.25, 1.75, 0.125]
    r = Tabulated(times, vals)
    for t, v in zip(times, vals):
        assert r(t) == v
    with pytest.raises(RateDomainError):
        r(2.0000001)
    with pytest.raises(RateDomainError):
        r(-1e-9)
    with pytest.raises(ValueError):
        Tabulated([0.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_piecewise_constant():
    r = PiecewiseConstant([1.0], [1.0, -0.8])
    assert r(0.5) == 1.0
    assert r(1.0) == -0.8
    assert r(1.5) == -0.8
    assert r.breakpoints() == (1.0,)
    with pytest.raises(ValueError):
        PiecewiseConstant([1.0], [1.0])


def test_rate_table_roundtrip(tmp_path):
    r = Tabulated(np.linspace(0, 1, 11), np.sin(np.linspace(0, 1, 11)))
    p = tmp_path / "rate.csv"
    write_rate_table(p, r)
    back = load_rate_table(p)
    assert back.times == r.times and back.values == r.values


def test_rate_table_rejects_non_ascending(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("time,rate\n0.0,1.0\n0.5,0.2\n0.4,0.1\n")
    with pytest.raises(ValueError, match="ascending"):
        load_rate_table(p)


def test_effective_hamiltonian_examples():
    m = build_two_level_model(Constant(1.0), None, excited_state())
    h = effective_hamiltonian(m, 0.3)
    assert np.array_equal(np.diag(h), np.array([0.0, -0.5j]))
    assert h[0, 1] == 0 and h[1, 0] == 0

    hs = np.array([[0.0, 0.3], [0.3, 1.0]], dtype=complex)
    m0 = ModelSpec(2, hs, (chan(Constant(0.0)),), ground_state())
    assert np.array_equal(effective_hamiltonian(m0, 1.0), hs)

    mneg = build_two_level_model(Constant(-0.5), None, excited_state())
    assert effective_hamiltonian(mneg, 0.0)[1, 1] == 0.25j  # norm grows along |e>


def test_lamb_shift_enters_hermitian_part():
    m = build_two_level_model(Constant(0.0), Constant(0.8), superposition_state())
    h = effective_hamiltonian(m, 0.0)
    assert np.array_equal(h, 0.4 * PE)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 3), st.floats(0, 10))
def test_anti_hermitian_part_matches_rates(seed, d, nch, t):
    rng = np.random.default_rng(seed)
    chans = tuple(
        DecayChannel(random_matrix(rng, d), DampedOscillation(float(rng.normal()), 0.1, float(rng.normal()), 0.0), f"c{j}")
        for j in range(nch)
    )
    m = ModelSpec(d, random_hermitian(rng, d), chans, random_state(rng, d), Constant(0.3), random_hermitian(rng, d))
    h = effective_hamiltonian(m, t)
    expect = -1j * sum(ch.rate(t) * ch.operator.conj().T @ ch.operator for ch in chans)
    assert np.max(np.abs((h - h.conj().T) - expect)) <= 1e-12


def test_zero_rates_give_system_hamiltonian():
    rng = np.random.default_rng(5)
    hs = random_hermitian(rng, 3)
    m = ModelSpec(3, hs, (DecayChannel(random_matrix(rng, 3), Constant(0.0)),), random_state(rng, 3))
    for t in (0.0, 0.7, 5.0):
        assert np.array_equal(effective_hamiltonian(m, t), hs)


def test_build_two_level_model():
    for psi in (excited_state(), superposition_state()):
        m = build_two_level_model(Constant(0.5), Constant(0.0), psi)
        assert validate(m) == []
        assert len(m.channels) == 1
        assert np.array_equal(m.channels[0].operator, SIGMA_MINUS)
        assert np.array_equal(m.lamb_shift_operator, PE)
    with pytest.raises(DimensionError):
        build_two_level_model(Constant(1.0), None, np.ones(3) / np.sqrt(3))


def test_markovian_limit_is_amplitude_damping():
    from nmqj.oracle import integrate_master_equation

    m = build_two_level_model(Constant(0.7), Constant(0.0), excited_state())
    sol = integrate_master_equation(m, [0.0, 1.0, 2.0])
    assert np.allclose(sol.densities[:, 1, 1].real, np.exp(-0.7 * np.array([0.0, 1.0, 2.0])), atol=1e-8)  # [DERIVED]


def test_validate_diagnostics():
    bad_h = ModelSpec(2, np.array([[0, 1], [0, 0]]), (chan(Constant(1.0)),), excited_state())
    assert "hamiltonian not Hermitian" in validate(bad_h)

    bad_op = ModelSpec(2, np.zeros((2, 2)), (DecayChannel(np.eye(3), Constant(1.0), "big"),), excited_state())
    assert any("'big'" in d and "shape" in d for d in validate(bad_op))

    no_chan = ModelSpec(2, np.zeros((2, 2)), (), excited_state())
    assert any("at least one" in d for d in validate(no_chan))

    unnorm = ModelSpec(2, np.zeros((2, 2)), (chan(Constant(1.0)),), np.array([1.0, 1.0]))
    assert any("unit-norm" in d for d in validate(unnorm))

    short = build_two_level_model(Tabulated([0.0, 1.0], [1.0, 1.0]), None, excited_state())
    assert validate(short) == []
    assert any("does not cover" in d for d in validate(short, t_max=2.0))
    with pytest.raises(ModelError):
        short.check(t_max=2.0)
