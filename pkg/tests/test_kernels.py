"""Compiled and numpy kernel backends must agree bit for bit."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from nmqj import kernels
from nmqj.model import DampedOscillation, build_two_level_model, superposition_state
from nmqj.propagator import StepControl
from nmqj.simulate import simulate_ensemble, simulate_naive

from conftest import PE, random_matrix

BACKENDS = kernels.available_backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")


def batch(rng, n, d):
    psi = rng.normal(size=(n, d)) + 1j * rng.normal(size=(n, d))
    return psi / np.linalg.norm(psi, axis=1, keepdims=True)


def outputs(mod, rng_seed, n, d):
    rng = np.random.default_rng(rng_seed)
    psi = batch(rng, n, d)
    a0, am, a1 = (random_matrix(rng, d) for _ in range(3))
    cdc = np.array([m.conj().T @ m for m in (random_matrix(rng, d), random_matrix(rng, d))])
    labels = rng.integers(0, 3, size=n)
    rev = rng.random((3, 2)) * 0.05
    u = rng.random(n)
    normed = psi.copy()
    ns = mod.normalize_batch(normed)
    return {
        "matvec": mod.matvec_batch(a0, psi),
        "rk4": mod.rk4_batch(psi, a0, am, a1, 1e-2),
        "norm_sq": mod.norm_sq_batch(psi),
        "normalize": (normed, ns),
        "expect": mod.expect_batch(psi, cdc[0]),
        "uniforms": mod.counter_uniforms(2**63 + 17, 99, n),
        "branches": mod.member_branches(psi, labels, cdc, np.array([0.02, 0.03]), rev, u),
        "branches_no_pos": mod.member_branches(psi, labels, np.zeros((0, d, d), complex), np.zeros(0), rev, u),
    }


def test_default_backend_and_switching():
    assert kernels.BACKEND in BACKENDS
    with kernels.backend("python"):
        assert kernels.BACKEND == "python"
        assert kernels.rk4_batch is kernels.backend_module("python").rk4_batch
    with pytest.raises(ValueError):
        kernels.backend_module("fortran")


@needs_both
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(1, 7))
def test_backends_bit_identical(seed, n, d):
    py = outputs(kernels.backend_module("python"), seed, n, d)
    cc = outputs(kernels.backend_module("compiled"), seed, n, d)
    for key in py:
        a, b = py[key], cc[key]
        if isinstance(a, tuple):
            for x, y in zip(a, b):
                assert np.array_equal(x, y), key
        else:
            assert np.array_equal(a, b), key


def test_counter_uniforms_properties():
    for name in BACKENDS:
        mod = kernels.backend_module(name)
        u = mod.counter_uniforms(1, 0, 200_000)
        assert u.min() >= 0.0 and u.max() < 1.0
        assert abs(u.mean() - 0.5) < 5 * np.sqrt(1 / 12 / u.size)
        assert not np.array_equal(u[:100], mod.counter_uniforms(1, 1, 100))
        assert np.array_equal(u[:100], mod.counter_uniforms(1, 0, 100))


def test_member_branch_codes():
    mod = kernels.backend_module("python")
    psi = np.array([[0, 1], [0, 1], [1, 0]], dtype=complex)
    cdc = np.array([PE])
    labels = np.array([0, 0, 1])
    rev = np.array([[0.0], [0.5]])
    u = np.array([0.005, 0.5, 0.25])
    br = mod.member_branches(psi, labels, cdc, np.array([0.01]), rev, u)
    assert br.tolist() == [0, -1, 1]


@needs_both
def test_runs_identical_across_backends():
    m = build_two_level_model(DampedOscillation(1.0, 0.25, 2.0), None, superposition_state())
    grid = np.linspace(0, 2.0, 5)
    res = {}
    for name in BACKENDS:
        with kernels.backend(name):
            a = simulate_ensemble(m, 5000, StepControl(2e-3), grid, 4, {"P_e": PE})
            b = simulate_naive(m, 500, StepControl(2e-3), grid, 4, {"P_e": PE})
        res[name] = (a.values["P_e"], [e.to_record() for e in a.events], b.values["P_e"])
    assert np.array_equal(res["python"][0], res["compiled"][0])
    assert res["python"][1] == res["compiled"][1]
    assert np.array_equal(res["python"][2], res["compiled"][2])
