"""Lindblad generators, matrix-exponential propagation and channel maps.

Vectorization is column stacking: ``vec(rho)[i + d*j] = rho[i, j]``, so that
``vec(A X B) = (B^T kron A) vec(X)``.

Generators here are time independent, so one step matrix ``exp(dt * L)`` is
built once and applied repeatedly.  Liouvillians of the channel models are
very sparse and split into many invariant blocks (they conserve the
difference of total excitation numbers between ket and bra); propagators are
exponentiated block by block, which is exact and avoids forming dense
``d^2 x d^2`` matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .channels import ChannelSpec, generator_terms
from .errors import (
    InvalidParameterError,
    NumericalInstabilityError,
    ShapeError,
    ValidationError,
)
from .fock import DensityMatrix, Operator

TRACE_DRIFT_TOL = 1e-6


def vec(rho) -> np.ndarray:
    m = rho.data if isinstance(rho, Operator) else np.asarray(rho)
    return m.reshape(-1, order="F")


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if d is None:
        d = math.isqrt(v.size)
    return v.reshape(d, d, order="F")


@dataclass(frozen=True, eq=False)
class Superoperator:
    data: np.ndarray
    hilbert_dims: tuple[int, ...]

    def __post_init__(self):
        data = np.array(self.data, dtype=complex, copy=True)
        data.flags.writeable = False
        dims = tuple(int(d) for d in self.hilbert_dims)
        side = math.prod(dims) ** 2
        if data.shape != (side, side):
            raise ShapeError(f"superoperator for dims {dims} must be {side}x{side}, got {data.shape}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "hilbert_dims", dims)

    @property
    def hilbert_size(self) -> int:
        return math.prod(self.hilbert_dims)

    def __call__(self, rho: Operator) -> Operator:
        if rho.dims != self.hilbert_dims:
            raise ShapeError(f"state dims {rho.dims} do not match superoperator dims {self.hilbert_dims}")
        return Operator(unvec(self.data @ vec(rho), self.hilbert_size), rho.dims)

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.data @ other.data, self.hilbert_dims)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0, t0 + dt, ..., t_end`` in dimensionless time."""

    t0: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise InvalidParameterError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.t_end < self.t0:
            raise InvalidParameterError(f"t_end ({self.t_end}) must not precede t0 ({self.t0})")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t0) / self.n_steps

    @property
    def degenerate(self) -> bool:
        return self.t_end == self.t0

    @property
    def times(self) -> np.ndarray:
        if self.degenerate:
            return np.array([self.t0])
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.t_end, self.n_steps * factor)

    @classmethod
    def with_max_step(cls, t0: float, t_end: float, max_dt: float) -> "TimeGrid":
        return cls(t0, t_end, max(1, math.ceil((t_end - t0) / max_dt - 1e-9)))


# --- generators -----------------------------------------------------------

def _as_matrix(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Operator) else x, dtype=complex)


def _dims_of(h) -> tuple[int, ...]:
    if isinstance(h, Operator):
        return h.dims
    return (np.asarray(h).shape[0],)


def _validate_terms(h, collapse) -> tuple[np.ndarray, list[np.ndarray]]:
    hm = _as_matrix(h)
    if hm.ndim != 2 or hm.shape[0] != hm.shape[1]:
        raise ShapeError(f"Hamiltonian must be square, got {hm.shape}")
    if hm.size and np.max(np.abs(hm - hm.conj().T)) > 1e-10:
        raise ValidationError("Hamiltonian is not Hermitian")
    cs = []
    for c in collapse:
        cm = _as_matrix(c)
        if cm.shape != hm.shape:
            raise ShapeError(f"collapse operator shape {cm.shape} != Hamiltonian shape {hm.shape}")
        if isinstance(h, Operator) and isinstance(c, Operator) and c.dims != h.dims:
            raise ShapeError(f"collapse operator dims {c.dims} != Hamiltonian dims {h.dims}")
        cs.append(cm)
    return hm, cs


def liouvillian_sparse(h, collapse: Sequence = ()) -> sp.csr_matrix:
    """Sparse generator of ``-i[H, rho] + sum_L (L rho L^dag - {L^dag L, rho}/2)``."""
    hm, cs = _validate_terms(h, collapse)
    d = hm.shape[0]
    eye = sp.identity(d, dtype=complex, format="csr")
    hs = sp.csr_matrix(hm)
    gen = -1j * (sp.kron(eye, hs) - sp.kron(hs.T, eye))
    for c in cs:
        cs_ = sp.csr_matrix(c)
        cdc = (cs_.conj().T @ cs_).tocsr()
        gen = gen + sp.kron(cs_.conj(), cs_) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye)
    gen = sp.csr_matrix(gen)
    gen.eliminate_zeros()
    return gen


def liouvillian(h, collapse: Sequence = ()) -> Superoperator:
    """Dense Liouvillian; the dissipator is ``[L rho, L^dag]/2 + [L, rho L^dag]/2``."""
    return Superoperator(liouvillian_sparse(h, collapse).toarray(), _dims_of(h))


def spectral_norm_bound(gen) -> float:
    """Cheap upper bound ``sqrt(|L|_1 |L|_inf)`` on the spectral norm."""
    a = abs(sp.csr_matrix(gen))
    n1 = a.sum(axis=0).max() if a.nnz else 0.0
    ninf = a.sum(axis=1).max() if a.nnz else 0.0
    return float(math.sqrt(n1 * ninf))


def channel_generator(spec: ChannelSpec, left_dims: Sequence[int] = ()) -> tuple[sp.csr_matrix, tuple[int, ...]]:
    h, collapse, dims = generator_terms(spec, left_dims)
    return liouvillian_sparse(h, collapse), dims


def default_grid(spec: ChannelSpec, t0: float, t_end: float) -> TimeGrid:
    """Grid with ``dt * |L| <= 1`` for the channel's own generator."""
    gen, _ = channel_generator(spec)
    norm = spectral_norm_bound(gen)
    if norm == 0 or t_end == t0:
        return TimeGrid(t0, t_end, 1)
    return TimeGrid(t0, t_end, max(1, math.ceil((t_end - t0) * norm)))


# --- propagators ----------------------------------------------------------

class BlockPropagator:
    """``exp(dt * L)`` stored as exponentials of the invariant blocks of ``L``.

    Blocks are the connected components of the sparsity graph of ``L``, so the
    result equals the dense matrix exponential.
    """

    def __init__(self, gen, dt: float, active: np.ndarray | None = None):
        gen = sp.csr_matrix(gen)
        n = gen.shape[0]
        self.size = n
        pattern = abs(gen) + abs(gen).T
        _, labels = connected_components(pattern, directed=False)
        order = np.argsort(labels, kind="stable")
        bounds = np.flatnonzero(np.diff(labels[order])) + 1
        groups = np.split(order, bounds)
        if active is not None:
            mask = np.zeros(n, dtype=bool)
            mask[np.asarray(active)] = True
            groups = [g for g in groups if mask[g].any()]
        self.blocks: list[tuple[np.ndarray, np.ndarray]] = []
        csc = gen.tocsc()
        for idx in groups:
            sub = csc[:, idx].tocsr()[idx, :].toarray()
            self.blocks.append((idx, scipy.linalg.expm(dt * sub)))

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v, dtype=complex)
        for idx, m in self.blocks:
            out[idx] = m @ v[idx]
        return out

    def toarray(self) -> np.ndarray:
        out = np.zeros((self.size, self.size), dtype=complex)
        for idx, m in self.blocks:
            out[np.ix_(idx, idx)] = m
        return out


def propagator(l: Superoperator, dt: float) -> Superoperator:
    if not dt > 0:
        raise InvalidParameterError(f"time step must be > 0, got {dt}")
    return Superoperator(BlockPropagator(sp.csr_matrix(l.data), dt).toarray(), l.hilbert_dims)


def _checked_state(m: np.ndarray, dims, step: int, t: float) -> DensityMatrix:
    tr = np.trace(m).real
    if abs(tr - 1.0) > TRACE_DRIFT_TOL:
        raise NumericalInstabilityError(f"trace drifted to {tr:.10g} at step {step} (t={t:.6g})")
    try:
        return DensityMatrix(0.5 * (m + m.conj().T), dims)
    except ValidationError as exc:
        raise NumericalInstabilityError(f"invalid state at step {step} (t={t:.6g}): {exc}") from exc


def evolve(rho0: DensityMatrix, l: Superoperator, grid: TimeGrid) -> list[DensityMatrix]:
    """Snapshots ``rho(t_n) = M^n rho(t0)`` with one precomputed step ``M = exp(dt L)``."""
    if rho0.dims != l.hilbert_dims:
        raise ShapeError(f"state dims {rho0.dims} do not match generator dims {l.hilbert_dims}")
    if grid.degenerate:
        return [rho0]
    step = BlockPropagator(sp.csr_matrix(l.data), grid.dt)
    d = l.hilbert_size
    v = vec(rho0)
    out = [rho0]
    for n, t in enumerate(grid.times[1:], start=1):
        v = step.apply(v)
        out.append(_checked_state(unvec(v, d), rho0.dims, n, t))
    return out


# --- channel maps ---------------------------------------------------------

def _map_indices(spec: ChannelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Embedding columns ``|i><j| (x) |0><0|_A`` and the ancilla-trace gather index."""
    nb = spec.mode_dim
    na = math.prod(spec.ancilla_dims) if spec.ancillas else 1
    d = nb * na
    i, j = np.meshgrid(np.arange(nb), np.arange(nb), indexing="ij")
    i, j = i.ravel(order="F"), j.ravel(order="F")  # column-stacked B index i + nb*j
    embed = (i * na) + d * (j * na)
    a = np.arange(na)
    gather = (i[:, None] * na + a[None, :]) + d * (j[:, None] * na + a[None, :])
    return embed, gather


class ChannelEvolution:
    """Channel maps ``E_t`` on mode B, from joint B+ancilla evolution."""

    def __init__(self, spec: ChannelSpec):
        self.spec = spec
        self.gen, self.dims = channel_generator(spec)
        self.embed, self.gather = _map_indices(spec)
        self.nb2 = spec.mode_dim**2

    def _initial(self) -> np.ndarray:
        s = np.zeros((self.gen.shape[0], self.nb2), dtype=complex)
        s[self.embed, np.arange(self.nb2)] = 1.0
        return s

    def _reduce(self, s: np.ndarray) -> np.ndarray:
        return s[self.gather].sum(axis=1)

    def at(self, t: float) -> np.ndarray:
        if t < 0:
            raise InvalidParameterError(f"time must be >= 0, got {t}")
        if t == 0:
            return np.eye(self.nb2, dtype=complex)
        prop = BlockPropagator(self.gen, t, active=self.embed)
        return self._reduce(prop.apply(self._initial()))

    def series(self, grid: TimeGrid) -> list[np.ndarray]:
        """Maps at every grid time, reusing one step propagator."""
        s = self._initial()
        if grid.t0 > 0:
            s = BlockPropagator(self.gen, grid.t0, active=self.embed).apply(s)
        out = [self._reduce(s)]
        if grid.degenerate:
            return out
        step = BlockPropagator(self.gen, grid.dt, active=self.embed)
        for _ in range(grid.n_steps):
            s = step.apply(s)
            out.append(self._reduce(s))
        return out


def channel_map(spec: ChannelSpec, t: float) -> Superoperator:
    """``E_t(X) = tr_A[exp(t L_BA)(X (x) |0><0|_A)]`` as a superoperator on mode B."""
    return Superoperator(ChannelEvolution(spec).at(t), [spec.mode_dim])


def channel_map_series(spec: ChannelSpec, grid: TimeGrid) -> list[np.ndarray]:
    return ChannelEvolution(spec).series(grid)


def apply_map(e: np.ndarray | Superoperator, rho: Operator, subsystem: int) -> np.ndarray:
    """Apply a single-mode map to one subsystem of a multi-mode operator.

    Returns the resulting matrix (the identity acts on every other subsystem).
    """
    em = e.data if isinstance(e, Superoperator) else np.asarray(e)
    dims = rho.dims
    n = len(dims)
    k = subsystem
    if not 0 <= k < n:
        raise IndexError(f"subsystem {k} out of range for dims {dims}")
    nk = dims[k]
    if em.shape != (nk * nk, nk * nk):
        raise ShapeError(f"map of shape {em.shape} does not act on a mode of dimension {nk}")
    t = rho.data.reshape(dims + dims)
    rest = [i for i in range(2 * n) if i not in (k, k + n)]
    perm = [k + n, k] + rest  # (bra_k, ket_k, ...) flattens to the column-stacked index
    moved = t.transpose(perm).reshape(nk * nk, -1)
    res = (em @ moved).reshape([nk, nk] + [t.shape[i] for i in rest])
    return res.transpose(np.argsort(perm)).reshape(rho.shape)


def extend_on_left(e: np.ndarray, rho_rb: DensityMatrix) -> DensityMatrix:
    """``(id_R (x) E)(rho_RB)`` for a two-mode state ordered ``[R, B]``."""
    return DensityMatrix.from_operator(Operator(apply_map(e, rho_rb, len(rho_rb.dims) - 1), rho_rb.dims))


def augmented_evolution(spec: ChannelSpec, rho_left: DensityMatrix, times: Sequence[float]) -> list[DensityMatrix]:
    """Evolve ``rho_left (x) |0><0|_A`` under the full joint generator and trace out ancillas.

    ``rho_left`` is ordered ``[spectators..., B]``; the spectator modes enter the
    generator with zero Hamiltonian. This is the direct route that
    :func:`channel_map` factorizes.
    """
    if rho_left.dims[-1] != spec.mode_dim:
        raise ShapeError(f"last subsystem of {rho_left.dims} must be mode B of dim {spec.mode_dim}")
    left = rho_left.dims[:-1]
    gen, dims = channel_generator(spec, left)
    na = math.prod(spec.ancilla_dims) if spec.ancillas else 1
    vac = np.zeros((na, na))
    vac[0, 0] = 1.0
    v0 = vec(np.kron(rho_left.data, vac))
    d = math.prod(dims)
    nl = math.prod(rho_left.dims)
    out = []
    for t in times:
        if t == 0:
            v = v0
        else:
            v = BlockPropagator(gen, t, active=np.flatnonzero(v0)).apply(v0[:, None])[:, 0]
        m = unvec(v, d).reshape(nl, na, nl, na)
        out.append(DensityMatrix.from_operator(Operator(np.einsum("iaja->ij", m), rho_left.dims)))
    return out
