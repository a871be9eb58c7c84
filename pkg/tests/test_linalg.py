import numpy as np
import pytest
from hypothesis import given, strategies as st

from nmqj.linalg import (
    EXCITED,
    GROUND,
    SIGMA_MINUS,
    SIGMA_PLUS,
    DimensionError,
    adjoint,
    apply,
    as_state,
    check_density,
    expectation,
    is_hermitian,
    overlap_fidelity,
    projector,
)

from conftest import PE, random_hermitian, random_matrix, random_state

SUP = (GROUND + EXCITED) / np.sqrt(2)


def test_apply_identity():
    v = np.array([0.6, 0.8j])
    assert np.array_equal(apply(np.eye(2), v), v)


def test_apply_basis_action():
    assert np.array_equal(apply(SIGMA_MINUS, EXCITED), GROUND)
    assert np.array_equal(apply(SIGMA_MINUS, GROUND), np.zeros(2))


def test_apply_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply(np.eye(3), GROUND)


def test_adjoint_examples():
    assert np.array_equal(adjoint(SIGMA_MINUS), SIGMA_PLUS)
    h = np.array([[1.0, 2 - 1j], [2 + 1j, -0.5]])
    assert np.array_equal(adjoint(h), h)
    a = random_matrix(np.random.default_rng(1), 4)
    assert np.array_equal(adjoint(adjoint(a)), a)


def test_expectation_examples():
    assert expectation(EXCITED, PE) == 1.0
    assert expectation(GROUND, PE) == 0.0
    assert expectation(SUP, PE) == pytest.approx(0.5, abs=1e-15)  # [TRIVIAL]


def test_expectation_dimension_mismatch():
    with pytest.raises(DimensionError):
        expectation(GROUND, np.eye(3))


def test_overlap_fidelity_examples():
    assert overlap_fidelity(SUP, SUP) == pytest.approx(1.0, abs=1e-15)
    assert overlap_fidelity(np.exp(0.7j) * SUP, SUP) == pytest.approx(1.0, abs=1e-15)
    assert overlap_fidelity(GROUND, EXCITED) == 0.0
    with pytest.raises(DimensionError):
        overlap_fidelity(GROUND, np.ones(3) / np.sqrt(3))


@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.floats(0, 2 * np.pi))
def test_fidelity_symmetric_and_phase_invariant(seed, d, theta):
    rng = np.random.default_rng(seed)
    u, v = random_state(rng, d), random_state(rng, d)
    f = overlap_fidelity(u, v)
    assert 0.0 <= f <= 1.0
    assert f == pytest.approx(overlap_fidelity(v, u), abs=1e-14)
    assert f == pytest.approx(overlap_fidelity(np.exp(1j * theta) * u, v), abs=1e-14)


@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_hermitian_expectation_is_real(seed, d):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, d)
    v = random_state(rng, d)
    assert abs(expectation(v, h).imag) <= 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_apply_is_linear(seed, d):
    rng = np.random.default_rng(seed)
    a = random_matrix(rng, d)
    u, v = random_state(rng, d), random_state(rng, d)
    alpha, beta = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
    lhs = apply(a, alpha * u + beta * v)
    rhs = alpha * apply(a, u) + beta * apply(a, v)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_as_state_checks_norm():
    with pytest.raises(ValueError):
        as_state([1.0, 1.0])
    assert np.allclose(as_state([1.0, 1.0], normalize=True), SUP)


def test_check_density():
    assert check_density(projector(SUP)) == []
    assert check_density(np.diag([0.5, 0.5])) == []
    assert any("trace" in m for m in check_density(np.diag([0.6, 0.5])))
    assert any("Hermitian" in m for m in check_density(np.array([[0.5, 0.1], [0.0, 0.5]])))
    assert any("positive" in m for m in check_density(np.diag([1.2, -0.2])))


def test_is_hermitian():
    assert is_hermitian(PE)
    assert not is_hermitian(SIGMA_MINUS)
