import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from nmtele import fock, master
from nmtele.channels import generator_terms, lorentzian_channel, markovian_reference, reference_lorentzian
from nmtele.errors import InvalidParameterError, NumericalInstabilityError, ShapeError, ValidationError
from nmtele.master import Superoperator, TimeGrid, liouvillian, propagator, unvec, vec
from nmtele.metrics import trace_distance


def random_density(rng, n, dims=None):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    m = a @ a.conj().T
    return fock.DensityMatrix(m / np.trace(m), dims or [n])


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


def random_lindblad(rng, n, n_ops=2):
    h = random_hermitian(rng, n)
    cs = [0.3 * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) for _ in range(n_ops)]
    return h, cs


def taylor_expm(m, terms=60):
    # scaling and squaring around a plain Taylor series
    s = max(0, int(np.ceil(np.log2(max(np.linalg.norm(m, 1), 1e-300)))) + 1)
    a = m / 2**s
    out = np.eye(m.shape[0], dtype=complex)
    term = np.eye(m.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


# --- vectorization --------------------------------------------------------

def test_vec_round_trip():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    np.testing.assert_array_equal(unvec(vec(x)), x)


def test_vec_is_column_stacking():
    x = np.arange(9).reshape(3, 3)
    np.testing.assert_array_equal(vec(x), [0, 3, 6, 1, 4, 7, 2, 5, 8])


def test_vec_sandwich_identity():
    rng = np.random.default_rng(1)
    a, x, b = (rng.normal(size=(4, 4)) for _ in range(3))
    np.testing.assert_allclose(vec(a @ x @ b), np.kron(b.T, a) @ vec(x), atol=1e-12)


# --- Liouvillian ----------------------------------------------------------

def test_zero_generator():
    np.testing.assert_array_equal(liouvillian(np.zeros((3, 3))).data, np.zeros((9, 9)))


def test_pure_commutator():
    rng = np.random.default_rng(2)
    h = random_hermitian(rng, 4)
    rho = random_density(rng, 4)
    l = liouvillian(h)
    np.testing.assert_allclose(l(rho).data, -1j * (h @ rho.data - rho.data @ h), atol=1e-12)


def test_dissipator_commutator_form():
    rng = np.random.default_rng(3)
    h, cs = random_lindblad(rng, 4)
    r = random_density(rng, 4).data
    expected = -1j * (h @ r - r @ h)
    for c in cs:
        cd = c.conj().T
        expected = expected + 0.5 * ((c @ r) @ cd - cd @ (c @ r)) + 0.5 * (c @ (r @ cd) - (r @ cd) @ c)
    np.testing.assert_allclose(liouvillian(h, cs)(fock.DensityMatrix(r, [4])).data, expected, atol=1e-12)


def test_amplitude_damping_decay():
    n = 8
    a = fock.destroy(n)
    l = liouvillian(np.zeros((n, n)), [a])
    rho1 = fock.fock_state(n, 1).dm()
    out = propagator(l, 1.0)(rho1)
    assert out.data[1, 1].real == pytest.approx(math.exp(-1.0), abs=1e-6)


def test_identity_shift_is_irrelevant():
    rng = np.random.default_rng(4)
    h, cs = random_lindblad(rng, 5)
    l1 = liouvillian(h, cs).data
    l2 = liouvillian(h + 3.7 * np.eye(5), cs).data
    assert np.max(np.abs(l1 - l2)) <= 1e-12


def test_trace_preserving_generator():
    rng = np.random.default_rng(5)
    h, cs = random_lindblad(rng, 5)
    left = vec(np.eye(5)).conj() @ liouvillian(h, cs).data
    assert np.max(np.abs(left)) <= 1e-12


def test_non_hermitian_hamiltonian_rejected():
    with pytest.raises(ValidationError):
        liouvillian(np.array([[0, 1], [0, 0]]))


def test_collapse_shape_mismatch():
    with pytest.raises(ShapeError):
        liouvillian(np.eye(3), [np.eye(4)])


def test_nonsquare_hamiltonian():
    with pytest.raises(ShapeError):
        liouvillian(np.zeros((2, 3)))


def test_superoperator_shape_check():
    with pytest.raises(ShapeError):
        Superoperator(np.eye(5), [2])


# --- propagators ----------------------------------------------------------

def test_zero_generator_propagator_is_identity():
    p = propagator(liouvillian(np.zeros((3, 3))), 0.7)
    np.testing.assert_array_equal(p.data, np.eye(9))


def test_semigroup():
    rng = np.random.default_rng(6)
    h, cs = random_lindblad(rng, 4)
    l = liouvillian(h, cs)
    p1, p2, p12 = propagator(l, 0.3), propagator(l, 0.5), propagator(l, 0.8)
    assert np.max(np.abs((p1 @ p2).data - p12.data)) <= 1e-9


def test_propagator_against_taylor_series():
    rng = np.random.default_rng(7)
    h, cs = random_lindblad(rng, 16)
    l = liouvillian(h, cs)
    dt = 0.05
    assert np.max(np.abs(propagator(l, dt).data - taylor_expm(dt * l.data))) <= 1e-10


@pytest.mark.parametrize("dt", [0.0, -0.1])
def test_propagator_rejects_nonpositive_step(dt):
    with pytest.raises(InvalidParameterError):
        propagator(liouvillian(np.eye(2)), dt)


def test_block_propagator_matches_dense():
    gen, _ = master.channel_generator(lorentzian_channel(0.8, 4.0, mode_dim=4, anc_dim=3))
    bp = master.BlockPropagator(gen, 0.4)
    assert len(bp.blocks) > 1
    np.testing.assert_allclose(bp.toarray(), scipy.linalg.expm(0.4 * gen.toarray()), atol=1e-12)


# --- time grids and evolution ---------------------------------------------

def test_time_grid():
    g = TimeGrid(0, 1, 4)
    np.testing.assert_allclose(g.times, [0, 0.25, 0.5, 0.75, 1.0])
    assert g.refined().n_steps == 8
    assert TimeGrid.with_max_step(0, 1, 0.1).n_steps == 10


@pytest.mark.parametrize("args", [(0, 1, 0), (1, 0, 4)])
def test_time_grid_validation(args):
    with pytest.raises(InvalidParameterError):
        TimeGrid(*args)


def test_degenerate_grid_returns_initial_state():
    rng = np.random.default_rng(8)
    h, cs = random_lindblad(rng, 3)
    rho = random_density(rng, 3)
    out = master.evolve(rho, liouvillian(h, cs), TimeGrid(2.0, 2.0, 5))
    assert len(out) == 1 and out[0] is rho


def test_evolution_preserves_trace_and_hermiticity():
    rng = np.random.default_rng(9)
    h, cs = random_lindblad(rng, 6)
    out = master.evolve(random_density(rng, 6), liouvillian(h, cs), TimeGrid(0, 5, 50))
    for s in out:
        assert abs(np.trace(s.data) - 1) <= 1e-8
        assert np.max(np.abs(s.data - s.data.conj().T)) <= 1e-9


def test_evolution_step_refinement():
    rng = np.random.default_rng(10)
    h, cs = random_lindblad(rng, 5)
    l = liouvillian(h, cs)
    rho = random_density(rng, 5)
    coarse = master.evolve(rho, l, TimeGrid(0, 2, 20))
    fine = master.evolve(rho, l, TimeGrid(0, 2, 40))[::2]
    assert max(np.max(np.abs(a.data - b.data)) for a, b in zip(coarse, fine)) <= 1e-8


def test_evolution_dims_mismatch():
    with pytest.raises(ShapeError):
        master.evolve(fock.vacuum(3).dm(), liouvillian(np.eye(4)), TimeGrid(0, 1, 2))


def test_trace_drift_is_reported():
    leaky = Superoperator(-0.1 * np.eye(9), [3])
    with pytest.raises(NumericalInstabilityError, match="step 1"):
        master.evolve(fock.vacuum(3).dm(), leaky, TimeGrid(0, 1, 4))


def test_default_grid_step_bound():
    spec = reference_lorentzian(4, 3)
    g = master.default_grid(spec, 0, 3)
    gen, _ = master.channel_generator(spec)
    assert g.dt * master.spectral_norm_bound(gen) <= 1 + 1e-12


# --- channel maps ---------------------------------------------------------

def test_channel_map_at_zero_is_identity():
    np.testing.assert_array_equal(master.channel_map(reference_lorentzian(4, 3), 0.0).data, np.eye(16))


def test_channel_map_rejects_negative_time():
    with pytest.raises(InvalidParameterError):
        master.ChannelEvolution(reference_lorentzian(3, 2)).at(-1.0)


def choi(e, n):
    c = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            eij = np.zeros((n, n))
            eij[i, j] = 1
            c += np.kron(eij, unvec(e @ vec(eij), n))
    return c


@pytest.mark.parametrize("t", [0.5, 2.0, 7.0])
def test_channel_map_is_cptp(t):
    n = 4
    e = master.channel_map(lorentzian_channel(0.8, 4.0, mode_dim=n, anc_dim=3, omega_b=10.0), t).data
    c = choi(e, n)
    assert np.min(np.linalg.eigvalsh((c + c.conj().T) / 2)) >= -1e-7
    # trace preservation: partial trace of the Choi matrix over the output is the identity
    assert np.max(np.abs(np.einsum("iaja->ij", c.reshape(n, n, n, n)) - np.eye(n))) <= 1e-10


def dense_channel_oracle(spec, rho_b, t):
    h, cs, dims = generator_terms(spec)
    l = np.zeros((h.size, h.size), dtype=complex)
    d = h.shape[0]
    eye = np.eye(d)
    l += -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for c in cs:
        cdc = c.conj().T @ c
        l += np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
    na = d // spec.mode_dim
    vac = np.zeros((na, na))
    vac[0, 0] = 1
    out = unvec(scipy.linalg.expm(t * l) @ vec(np.kron(rho_b, vac)), d)
    return np.einsum("iaja->ij", out.reshape(spec.mode_dim, na, spec.mode_dim, na))


def test_channel_map_matches_dense_joint_evolution():
    spec = lorentzian_channel(0.8, 4.0, mode_dim=4, anc_dim=3, omega_b=10.0)
    rho = random_density(np.random.default_rng(11), 4)
    got = master.channel_map(spec, 1.3)(rho).data
    assert np.max(np.abs(got - dense_channel_oracle(spec, rho.data, 1.3))) <= 1e-9


def test_series_matches_pointwise_maps():
    spec = reference_lorentzian(4, 3)
    ev = master.ChannelEvolution(spec)
    grid = TimeGrid(0.5, 2.5, 10)
    for t, m in zip(grid.times[::5], ev.series(grid)[::5]):
        assert np.max(np.abs(m - ev.at(t))) <= 1e-10


def test_extension_matches_joint_evolution():
    spec = lorentzian_channel(0.8, 4.0, mode_dim=4, anc_dim=3, omega_b=10.0)
    rho_rb = random_density(np.random.default_rng(12), 12, [3, 4])
    (via_joint,) = master.augmented_evolution(spec, rho_rb, [2.0])
    via_map = master.extend_on_left(master.channel_map(spec, 2.0).data, rho_rb)
    assert np.max(np.abs(via_map.data - via_joint.data)) <= 1e-10


def test_apply_map_on_products():
    rng = np.random.default_rng(13)
    e = master.channel_map(lorentzian_channel(0.8, 4.0, mode_dim=3, anc_dim=2), 1.0)
    a, b = random_density(rng, 2), random_density(rng, 3)
    prod = fock.tensor(a, b)
    np.testing.assert_allclose(master.apply_map(e, prod, 1), np.kron(a.data, e(b).data), atol=1e-12)
    prod2 = fock.tensor(b, a)
    np.testing.assert_allclose(master.apply_map(e, prod2, 0), np.kron(e(b).data, a.data), atol=1e-12)


def test_apply_map_errors():
    rho = fock.tensor(fock.vacuum(2).dm(), fock.vacuum(3).dm())
    with pytest.raises(ShapeError):
        master.apply_map(np.eye(9), rho, 0)
    with pytest.raises(IndexError):
        master.apply_map(np.eye(9), rho, 2)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), t=st.floats(0.1, 4.0))
def test_markov_channel_is_contractive(seed, t):
    rng = np.random.default_rng(seed)
    spec = markovian_reference([2.0], mode_dim=4)
    ev = master.ChannelEvolution(spec)
    r1, r2 = random_density(rng, 4), random_density(rng, 4)
    grid = TimeGrid(0, t, 8)
    ds = []
    for m in ev.series(grid):
        e = Superoperator(m, [4])
        ds.append(trace_distance(e(r1), e(r2)))
    assert np.all(np.diff(ds) <= 1e-10)
