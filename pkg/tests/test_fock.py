import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from nmtele import fock
from nmtele.errors import (
    DegenerateStateError,
    InadequateTruncationError,
    InvalidDimensionError,
    InvalidParameterError,
    ShapeError,
    ValidationError,
)
from nmtele.metrics import log_negativity


def random_density(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    m = a @ a.conj().T
    return fock.DensityMatrix(m / np.trace(m), [n])


# --- elementary operators -------------------------------------------------

def test_destroy_smallest():
    np.testing.assert_array_equal(fock.destroy(2).data, [[0, 1], [0, 0]])


def test_destroy_entry():
    assert fock.destroy(4).data[2, 3] == pytest.approx(math.sqrt(3))


def test_number_from_ladder():
    a = fock.destroy(5)
    np.testing.assert_allclose((a.dag() @ a).data, np.diag(np.arange(5)), atol=1e-14)


def test_destroy_rejects_small_dim():
    with pytest.raises(InvalidDimensionError):
        fock.destroy(1)


def test_displacement_zero_is_identity():
    np.testing.assert_allclose(fock.displacement(6, 0).data, np.eye(6), atol=1e-15)


def test_displacement_coherent_amplitudes():
    d = fock.displacement(30, 1.0).data
    for n in range(6):
        exact = math.exp(-0.5) / math.sqrt(math.factorial(n))
        assert abs(d[n, 0] - exact) <= 1e-6


def test_displacement_unitary_away_from_edge():
    d = fock.displacement(30, 1.0).data
    np.testing.assert_allclose((d @ d.conj().T)[:15, :15], np.eye(15), atol=1e-6)


def test_two_displacement_forms_agree():
    rng = np.random.default_rng(3)
    x, p = fock.quadratures(15)
    for _ in range(3):
        x0, p0 = rng.normal(size=2)
        lhs = scipy.linalg.expm(2j * (p0 * x.data - x0 * p.data))
        np.testing.assert_allclose(lhs, fock.displacement(15, complex(x0, p0)).data, atol=1e-10)


def test_exact_displacement_elements_match_large_truncation():
    beta = 1.3 - 0.7j
    big = scipy.linalg.expm(beta * fock.destroy(120).data.T - np.conj(beta) * fock.destroy(120).data)
    np.testing.assert_allclose(fock.displacement_elements(beta, 10, 12), big[:10, :12], atol=1e-13)


def test_exact_displacement_elements_vectorized():
    betas = np.array([0, 0.5j, -2 + 1j])
    block = fock.displacement_elements(betas, 5, 4)
    assert block.shape == (3, 5, 4)
    for b, m in zip(betas, block):
        np.testing.assert_allclose(m, fock.displacement_elements(b, 5, 4), atol=1e-15)
    np.testing.assert_allclose(block[0], np.eye(5, 4), atol=1e-15)


def test_squeeze_zero_is_identity():
    np.testing.assert_allclose(fock.squeeze(8, 0).data, np.eye(8), atol=1e-15)


def test_squeezed_vacuum_variance():
    v = fock.squeeze(40, 1.0).data[:, 0]
    x, _ = fock.quadratures(40)
    var = (v.conj() @ x.data @ x.data @ v).real - (v.conj() @ x.data @ v).real ** 2
    assert abs(var - math.exp(-2) / 4) <= 1e-4


def test_squeezed_vacuum_has_no_odd_amplitudes():
    v = fock.squeeze(20, 0.7 + 0.2j).data[:, 0]
    assert np.all(v[1::2] == 0)


# --- states ---------------------------------------------------------------

def test_coherent_zero_is_vacuum():
    np.testing.assert_allclose(fock.coherent(10, 0).amplitudes, fock.vacuum(10).amplitudes, atol=1e-15)


def test_coherent_mean_photon_number():
    psi = fock.coherent(20, 1.0)
    assert abs(fock.expect(fock.number(20), psi.dm()) - 1.0) <= 1e-6


def test_coherent_is_normalized():
    assert abs(np.linalg.norm(fock.coherent(12, 0.8 - 0.3j).amplitudes) - 1) <= 1e-10


def test_coherent_truncation_guard():
    with pytest.raises(InadequateTruncationError):
        fock.coherent(8, 1.5)
    fock.coherent(8, 1.5, check=False)


def test_odd_cat_has_no_even_amplitudes():
    v = fock.cat(30, 1.0, math.pi).amplitudes
    assert np.max(np.abs(v[0::2])) <= 1e-12


def test_even_cat_normalized():
    assert abs(np.linalg.norm(fock.cat(30, 1.0, 0).amplitudes) - 1) <= 1e-10


def test_cat_matches_direct_construction():
    a = fock.coherent(25, 1.0).amplitudes
    b = fock.coherent(25, -1.0).amplitudes
    ref = a + 1j * b
    ref /= np.linalg.norm(ref)
    assert abs(abs(np.vdot(ref, fock.cat(25, 1.0, math.pi / 2).amplitudes)) - 1) <= 1e-10


def test_degenerate_cat():
    with pytest.raises(DegenerateStateError):
        fock.cat(10, 0.0, math.pi)


def test_tmsv_zero_squeezing_is_vacuum():
    v = fock.tmsv(4, 5, 0.0).amplitudes
    assert v[0] == 1 and np.count_nonzero(v) == 1


def test_tmsv_amplitude_ratio():
    v = fock.tmsv(8, 8, 0.346).amplitudes.reshape(8, 8)
    diag = np.diag(v).real
    np.testing.assert_allclose(diag[1:] / diag[:-1], math.tanh(0.346), rtol=1e-12)
    assert np.count_nonzero(v - np.diag(np.diag(v))) == 0


def test_tmsv_log_negativity_closed_form():
    assert abs(log_negativity(fock.tmsv(10, 10, 0.346).dm()) - 2 * 0.346 / math.log(2)) <= 5e-3


def test_tmsv_rejects_negative_r():
    with pytest.raises(InvalidParameterError):
        fock.tmsv(4, 4, -0.1)


def test_state_vector_is_immutable():
    psi = fock.vacuum(3)
    with pytest.raises(AttributeError):
        psi.amplitudes = np.zeros(3)
    with pytest.raises(ValueError):
        psi.amplitudes[0] = 2


def test_density_matrix_invariants():
    with pytest.raises(ValidationError):
        fock.DensityMatrix(np.diag([0.5, 0.6]), [2])
    with pytest.raises(ValidationError):
        fock.DensityMatrix(np.diag([1.5, -0.5]), [2])
    with pytest.raises(ValidationError):
        fock.DensityMatrix(np.array([[0.5, 0.1], [0.2, 0.5]]), [2])
    with pytest.raises(ShapeError):
        fock.Operator(np.eye(6), [2, 2])


def test_operator_acting_on_state():
    psi = fock.fock_state(4, 2)
    np.testing.assert_allclose(fock.destroy(4) @ psi, [0, math.sqrt(2), 0, 0])


# --- composition ----------------------------------------------------------

def test_tensor_identities():
    out = fock.tensor(fock.identity([2]), fock.identity([3]))
    np.testing.assert_array_equal(out.data, np.eye(6))
    assert out.dims == (2, 3)


def test_tensor_basis_states():
    v = fock.tensor(fock.fock_state(2, 0), fock.fock_state(2, 1)).amplitudes
    assert np.flatnonzero(v).tolist() == [1]


def test_tensor_mixed_kinds():
    with pytest.raises(TypeError):
        fock.tensor(fock.vacuum(2), fock.identity([2]))


def test_tensor_mixed_product_rule():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    b = rng.normal(size=(2, 2))
    x, y = rng.normal(size=3), rng.normal(size=2)
    ab = fock.tensor(fock.Operator(a, [3]), fock.Operator(b, [2]))
    np.testing.assert_allclose(ab.data @ np.kron(x, y), np.kron(a @ x, b @ y), atol=1e-12)


def test_ptrace_product_state():
    rng = np.random.default_rng(1)
    r1, r2 = random_density(rng, 3), random_density(rng, 4)
    joint = fock.tensor(r1, r2)
    np.testing.assert_allclose(fock.ptrace(joint, 0).data, r1.data, atol=1e-12)
    np.testing.assert_allclose(fock.ptrace(joint, [1]).data, r2.data, atol=1e-12)


def test_ptrace_tmsv_marginal_is_thermal():
    red = fock.ptrace(fock.tmsv(10, 10, 0.5).dm(), 1)
    assert abs(fock.expect(fock.number(10), red).real - math.sinh(0.5) ** 2) <= 1e-4
    assert abs(red.tr() - 1) <= 1e-10
    assert np.count_nonzero(np.abs(red.data - np.diag(np.diag(red.data))) > 1e-15) == 0


def test_ptrace_bad_index():
    with pytest.raises(IndexError):
        fock.ptrace(fock.tmsv(3, 3, 0.1).dm(), 2)


def test_ptranspose_involution_and_product():
    rng = np.random.default_rng(2)
    rho = fock.tensor(random_density(rng, 2), random_density(rng, 3))
    twice = fock.ptranspose(fock.ptranspose(rho, 1), 1)
    np.testing.assert_allclose(twice.data, rho.data, atol=0)
    real_prod = fock.tensor(fock.DensityMatrix(np.diag([0.3, 0.7]), [2]), fock.DensityMatrix(np.diag([0.1, 0.4, 0.5]), [3]))
    np.testing.assert_allclose(fock.ptranspose(real_prod, 0).data, real_prod.data, atol=0)


def test_ptranspose_bell_state_spectrum():
    v = np.array([1, 0, 0, 1]) / math.sqrt(2)
    rho = fock.DensityMatrix(np.outer(v, v), [2, 2])
    ev = np.linalg.eigvalsh(fock.ptranspose(rho, 1).data)
    np.testing.assert_allclose(ev, [-0.5, 0.5, 0.5, 0.5], atol=1e-12)


def test_ptranspose_bad_index():
    with pytest.raises(IndexError):
        fock.ptranspose(fock.tmsv(3, 3, 0.1).dm(), 5)


def test_trace_norm_examples():
    rng = np.random.default_rng(4)
    assert abs(fock.trace_norm(random_density(rng, 5)) - 1) <= 1e-8
    assert fock.trace_norm(np.diag([1.0, -2.0])) == pytest.approx(3.0)
    q = math.tanh(0.346)
    pt = fock.ptranspose(fock.tmsv(8, 8, 0.346).dm(), 1)
    assert abs(fock.trace_norm(pt) - (1 + q) / (1 - q)) <= 5e-3


def test_expm_matches_taylor_reference():
    rng = np.random.default_rng(5)
    m = (rng.normal(size=(40, 40)) + 1j * rng.normal(size=(40, 40))) / 10
    # scaled Taylor series with squaring as an independent reference
    s = 6
    a = m / 2**s
    term = np.eye(40, dtype=complex)
    ref = term.copy()
    for k in range(1, 25):
        term = term @ a / k
        ref = ref + term
    for _ in range(s):
        ref = ref @ ref
    got = fock.expm(fock.Operator(m, [40])).data
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) <= 1e-10


def test_embed_pads_with_zeros():
    rho = fock.coherent(6, 0.5).dm()
    big = fock.embed(rho, 9)
    assert big.dims == (9,)
    np.testing.assert_array_equal(big.data[:6, :6], rho.data)
    assert np.all(big.data[6:] == 0)


# --- properties -----------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_ptrace_inverts_tensor(n1, n2, seed):
    rng = np.random.default_rng(seed)
    r1, r2 = random_density(rng, n1), random_density(rng, n2)
    np.testing.assert_allclose(fock.ptrace(fock.tensor(r1, r2), 1).data, r2.data, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_trace_norm_bounds_trace(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    assert fock.trace_norm(x) >= abs(np.trace(x)) - 1e-12


@settings(max_examples=30, deadline=None)
@given(
    st.floats(-1.5, 1.5),
    st.floats(-1.5, 1.5),
    st.integers(4, 12),
)
def test_coherent_states_are_valid(re, im, dim):
    alpha = complex(re, im)
    if abs(alpha) ** 2 > dim / 4:
        with pytest.raises(InadequateTruncationError):
            fock.coherent(dim, alpha)
        return
    psi = fock.coherent(dim, alpha)
    assert abs(np.linalg.norm(psi.amplitudes) - 1) <= 1e-10
    fock.DensityMatrix.from_state(psi)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 1.2), st.integers(2, 9), st.integers(2, 9))
def test_tmsv_is_valid_and_symmetric(r, nr, nb):
    rho = fock.tmsv(nr, nb, r).dm()
    a = fock.ptrace(rho, 0).data
    b = fock.ptrace(rho, 1).data
    n = min(nr, nb)
    np.testing.assert_allclose(np.diag(a)[:n], np.diag(b)[:n], atol=1e-12)
