"""Truncated Fock-space linear algebra.

Every object carries its subsystem dimensions. Subsystems are indexed from 0
and, throughout the package, ordered as ``[R, B, ancillas...]``.

Quadrature convention (fixed package-wide)::

    x = (a + a^dag) / 2,     p = (a - a^dag) / (2i)

so the vacuum has variance 1/4 in each quadrature and the displacement
``exp[2i(p0 x - x0 p)]`` equals ``exp[beta a^dag - conj(beta) a]`` with
``beta = x0 + i p0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from .errors import (
    DegenerateStateError,
    InadequateTruncationError,
    InvalidDimensionError,
    InvalidParameterError,
    ShapeError,
    ValidationError,
)

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-8
PSD_SLACK = -1e-8
NORM_TOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


def _check_dims(dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise InvalidDimensionError(f"dims must be a non-empty list of positive integers, got {dims}")
    return dims


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense square matrix acting on the tensor product of ``dims``."""

    data: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        data = _frozen(self.data)
        dims = _check_dims(self.dims)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ShapeError(f"operator matrix must be square, got shape {data.shape}")
        if math.prod(dims) != data.shape[0]:
            raise ShapeError(f"product of dims {dims} != matrix side {data.shape[0]}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", dims)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def dag(self) -> "Operator":
        return Operator(self.data.conj().T, self.dims)

    def tr(self) -> complex:
        return complex(np.trace(self.data))

    def __matmul__(self, other):
        """Operator product, or the (unnormalized) amplitude array ``A|psi>``."""
        if isinstance(other, StateVector):
            if other.dims != self.dims:
                raise ShapeError(f"dims mismatch {self.dims} vs {other.dims}")
            return self.data @ other.amplitudes
        if isinstance(other, Operator):
            if other.dims != self.dims:
                raise ShapeError(f"dims mismatch {self.dims} vs {other.dims}")
            return Operator(self.data @ other.data, self.dims)
        return NotImplemented

    def __add__(self, other: "Operator") -> "Operator":
        if not isinstance(other, Operator):
            return NotImplemented
        if other.dims != self.dims:
            raise ShapeError(f"dims mismatch {self.dims} vs {other.dims}")
        return Operator(self.data + other.data, self.dims)

    def __sub__(self, other: "Operator") -> "Operator":
        if not isinstance(other, Operator):
            return NotImplemented
        if other.dims != self.dims:
            raise ShapeError(f"dims mismatch {self.dims} vs {other.dims}")
        return Operator(self.data - other.data, self.dims)

    def __mul__(self, scalar) -> "Operator":
        if not np.isscalar(scalar):
            return NotImplemented
        return Operator(scalar * self.data, self.dims)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(-self.data, self.dims)


class DensityMatrix(Operator):
    """Hermitian, unit-trace, positive semidefinite operator."""

    def __post_init__(self):
        super().__post_init__()
        d = self.data
        herm = np.max(np.abs(d - d.conj().T)) if d.size else 0.0
        if herm > HERMITIAN_TOL:
            raise ValidationError(f"density matrix not Hermitian (max |rho - rho^dag| = {herm:.3g})")
        tr = np.trace(d)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"density matrix trace {tr.real:.12g} differs from 1")
        lam = np.linalg.eigvalsh(0.5 * (d + d.conj().T))[0]
        if lam < PSD_SLACK:
            raise ValidationError(f"density matrix has eigenvalue {lam:.3g} < {PSD_SLACK}")

    @classmethod
    def from_state(cls, psi: "StateVector") -> "DensityMatrix":
        v = psi.amplitudes
        return cls(np.outer(v, v.conj()), psi.dims)

    @classmethod
    def from_operator(cls, op: Operator, hermitize: bool = True) -> "DensityMatrix":
        d = op.data
        if hermitize:
            d = 0.5 * (d + d.conj().T)
        return cls(d, op.dims)


class StateVector:
    """Normalized pure state on the tensor product of ``dims``."""

    __slots__ = ("amplitudes", "dims")

    def __init__(self, amplitudes, dims: Sequence[int], normalize: bool = True):
        v = np.array(amplitudes, dtype=complex).ravel()
        dims = _check_dims(dims)
        if math.prod(dims) != v.size:
            raise ShapeError(f"product of dims {dims} != vector length {v.size}")
        n = np.linalg.norm(v)
        if normalize:
            if n == 0:
                raise DegenerateStateError("cannot normalize the zero vector")
            v = v / n
        elif abs(n - 1.0) > NORM_TOL:
            raise ValidationError(f"state vector norm {n:.12g} differs from 1")
        v.flags.writeable = False
        object.__setattr__(self, "amplitudes", v)
        object.__setattr__(self, "dims", dims)

    def __setattr__(self, name, value):
        raise AttributeError("StateVector is immutable")

    def __repr__(self) -> str:
        return f"StateVector(dims={self.dims})"

    def dm(self) -> DensityMatrix:
        return DensityMatrix.from_state(self)

    def overlap(self, other: "StateVector") -> complex:
        if other.dims != self.dims:
            raise ShapeError(f"dims mismatch {self.dims} vs {other.dims}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


# --- elementary operators -------------------------------------------------

def _require_dim(dim: int) -> int:
    dim = int(dim)
    if dim < 2:
        raise InvalidDimensionError(f"Fock truncation must be >= 2, got {dim}")
    return dim


def destroy(dim: int) -> Operator:
    dim = _require_dim(dim)
    return Operator(np.diag(np.sqrt(np.arange(1, dim)), 1), [dim])


def number(dim: int) -> Operator:
    return Operator(np.diag(np.arange(_require_dim(dim), dtype=float)), [dim])


def identity(dims: Sequence[int]) -> Operator:
    dims = _check_dims(dims)
    return Operator(np.eye(math.prod(dims)), dims)


def quadratures(dim: int) -> tuple[Operator, Operator]:
    """Return ``(x, p)`` under the package quadrature convention."""
    a = destroy(dim).data
    ad = a.conj().T
    return Operator((a + ad) / 2, [dim]), Operator((a - ad) / 2j, [dim])


def expm(op: Operator) -> Operator:
    """Matrix exponential (scaling and squaring with Pade approximants)."""
    return Operator(scipy.linalg.expm(op.data), op.dims)


def displacement(dim: int, beta: complex) -> Operator:
    """``exp(beta a^dag - conj(beta) a)`` exponentiated on the truncated space."""
    a = destroy(dim).data
    gen = beta * a.conj().T - np.conj(beta) * a
    return Operator(scipy.linalg.expm(gen), [dim])


def displacement_elements(betas, n_rows: int, n_cols: int) -> np.ndarray:
    """Exact (untruncated) matrix elements ``<m|D(beta)|n>``, m < n_rows, n < n_cols.

    Unlike :func:`displacement`, the result is the corresponding block of the
    infinite-dimensional unitary, so it stays correct for large ``|beta|``.
    Columns are generated by ``D|n> = (a^dag - conj(beta)) D|n-1> / sqrt(n)``
    starting from the coherent amplitudes of ``D|0>``.

    Returns an array of shape ``(len(betas), n_rows, n_cols)`` (leading axis
    dropped for a scalar ``betas``).
    """
    scalar = np.ndim(betas) == 0
    b = np.atleast_1d(np.asarray(betas, dtype=complex)).ravel()
    n_rows, n_cols = int(n_rows), int(n_cols)
    ext = n_rows + n_cols
    k = np.arange(ext)
    mag = np.abs(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = np.log(mag)
        logamp = -0.5 * mag[:, None] ** 2 + k[None, :] * logmag[:, None] - 0.5 * gammaln(k + 1)[None, :]
    col = np.exp(logamp) * np.exp(1j * np.outer(np.angle(b), k))
    zero = mag == 0
    col[zero] = 0.0
    col[zero, 0] = 1.0
    out = np.empty((b.size, n_rows, n_cols), dtype=complex)
    sqrt_k = np.sqrt(k[1:])
    bc = np.conj(b)[:, None]
    for n in range(n_cols):
        if n:
            raised = np.zeros_like(col)
            raised[:, 1:] = col[:, :-1] * sqrt_k
            col = (raised - bc * col) / math.sqrt(n)
        out[:, :, n] = col[:, :n_rows]
    return out[0] if scalar else out


def squeeze(dim: int, xi: complex, pad: int | None = None) -> Operator:
    """``exp[(conj(xi) a^2 - xi a^dag^2) / 2]``, leading ``dim x dim`` block.

    The exponential is taken on ``dim + pad`` levels (default ``dim + 20``)
    so the returned block is free of edge effects from truncating the
    generator.
    """
    dim = _require_dim(dim)
    pad = dim + 20 if pad is None else int(pad)
    a = destroy(dim + pad).data
    ad = a.conj().T
    gen = 0.5 * (np.conj(xi) * (a @ a) - xi * (ad @ ad))
    return Operator(scipy.linalg.expm(gen)[:dim, :dim], [dim])


# --- states ---------------------------------------------------------------

def fock_state(dim: int, n: int) -> StateVector:
    dim = _require_dim(dim)
    if not 0 <= n < dim:
        raise InvalidParameterError(f"Fock level {n} outside truncation {dim}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return StateVector(v, [dim])


def vacuum(dim: int) -> StateVector:
    return fock_state(dim, 0)


def _guard(dim: int, mean_photons: float, check: bool, what: str) -> None:
    if check and mean_photons > dim / 4:
        raise InadequateTruncationError(
            f"{what}: mean photon number {mean_photons:.3g} exceeds dim/4 = {dim / 4:.3g}; "
            "increase the truncation or pass check=False"
        )


def coherent(dim: int, alpha: complex, check: bool = True) -> StateVector:
    dim = _require_dim(dim)
    _guard(dim, abs(alpha) ** 2, check, "coherent")
    return StateVector(displacement(dim, alpha).data[:, 0], [dim])


def squeezed_coherent(dim: int, alpha: complex, xi: complex, check: bool = True) -> StateVector:
    """``D(alpha) S(xi) |0>``."""
    dim = _require_dim(dim)
    _guard(dim, abs(alpha) ** 2 + math.sinh(abs(xi)) ** 2, check, "squeezed")
    v = squeeze(dim, xi).data[:, 0]
    return StateVector(displacement(dim, alpha).data @ v, [dim])


def cat(dim: int, alpha_c: complex, theta_c: float, check: bool = True) -> StateVector:
    """Normalized ``|alpha_c> + exp(i theta_c) |-alpha_c>``."""
    dim = _require_dim(dim)
    norm_sq = 2.0 * (1.0 + math.exp(-2.0 * abs(alpha_c) ** 2) * math.cos(theta_c))
    if norm_sq < 1e-12:
        raise DegenerateStateError(f"cat state with alpha_c={alpha_c}, theta_c={theta_c} has zero norm")
    _guard(dim, abs(alpha_c) ** 2, check, "cat")
    plus = coherent(dim, alpha_c, check=False).amplitudes
    minus = coherent(dim, -alpha_c, check=False).amplitudes
    return StateVector(plus + np.exp(1j * theta_c) * minus, [dim])


def tmsv(dim_r: int, dim_b: int, r: float) -> StateVector:
    """Two-mode squeezed vacuum ``sqrt(1-q^2) sum_n q^n |n,n>``, ``q = tanh r``."""
    dim_r, dim_b = _require_dim(dim_r), _require_dim(dim_b)
    if r < 0:
        raise InvalidParameterError(f"squeezing parameter must be >= 0, got {r}")
    q = math.tanh(r)
    v = np.zeros(dim_r * dim_b, dtype=complex)
    for n in range(min(dim_r, dim_b)):
        v[n * dim_b + n] = q**n
    return StateVector(v, [dim_r, dim_b])


# --- composition ----------------------------------------------------------

Part = Union[Operator, StateVector]


def tensor(*parts) -> Part:
    """Kronecker product in the given order; accepts varargs or one sequence."""
    if len(parts) == 1 and isinstance(parts[0], (list, tuple)):
        parts = tuple(parts[0])
    if not parts:
        raise ValidationError("tensor needs at least one part")
    if all(isinstance(p, StateVector) for p in parts):
        v = parts[0].amplitudes
        dims = list(parts[0].dims)
        for p in parts[1:]:
            v = np.kron(v, p.amplitudes)
            dims += p.dims
        return StateVector(v, dims)
    if all(isinstance(p, Operator) for p in parts):
        m = parts[0].data
        dims = list(parts[0].dims)
        for p in parts[1:]:
            m = np.kron(m, p.data)
            dims += p.dims
        if all(isinstance(p, DensityMatrix) for p in parts):
            return DensityMatrix(m, dims)
        return Operator(m, dims)
    raise TypeError("tensor parts must be all Operators or all StateVectors")


def _check_index(dims: tuple[int, ...], k: int) -> int:
    if not isinstance(k, (int, np.integer)) or not 0 <= k < len(dims):
        raise IndexError(f"subsystem index {k} out of range for dims {dims}")
    return int(k)


def ptrace(rho: Operator, keep) -> DensityMatrix | Operator:
    """Partial trace keeping the subsystems in ``keep`` (order preserved)."""
    dims = rho.dims
    keep = sorted({_check_index(dims, k) for k in np.atleast_1d(keep).tolist()})
    if not keep:
        raise IndexError("keep must name at least one subsystem")
    n = len(dims)
    t = rho.data.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    ket = list(letters[:n])
    bra = list(letters[n : 2 * n])
    for i in range(n):
        if i not in keep:
            bra[i] = ket[i]
    out = "".join(ket[i] for i in keep) + "".join(bra[i] for i in keep)
    red = np.einsum("".join(ket) + "".join(bra) + "->" + out, t)
    kd = [dims[i] for i in keep]
    m = math.prod(kd)
    red = red.reshape(m, m)
    cls = DensityMatrix if isinstance(rho, DensityMatrix) else Operator
    return cls(red, kd)


def ptranspose(rho: Operator, subsystem: int) -> Operator:
    """Transpose the indices of one subsystem."""
    dims = rho.dims
    k = _check_index(dims, subsystem)
    n = len(dims)
    t = rho.data.reshape(dims + dims)
    axes = list(range(2 * n))
    axes[k], axes[k + n] = axes[k + n], axes[k]
    return Operator(t.transpose(axes).reshape(rho.shape), dims)


def trace_norm(x: Operator | np.ndarray) -> float:
    """Sum of singular values."""
    m = x.data if isinstance(x, Operator) else np.asarray(x)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"trace norm needs a square matrix, got {m.shape}")
    if np.allclose(m, m.conj().T, atol=1e-13, rtol=0):
        return float(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T))).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def expect(op: Operator, rho: Operator) -> complex:
    if op.dims != rho.dims:
        raise ShapeError(f"dims mismatch {op.dims} vs {rho.dims}")
    return complex(np.einsum("ij,ji->", op.data, rho.data))


def embed(rho: Operator, dim: int) -> Operator:
    """Zero-pad a single-mode operator into a larger truncation."""
    if len(rho.dims) != 1:
        raise ShapeError("embed only applies to single-mode operators")
    n = rho.dims[0]
    if dim < n:
        raise ShapeError(f"cannot embed dim {n} into smaller dim {dim}")
    out = np.zeros((dim, dim), dtype=complex)
    out[:n, :n] = rho.data
    return type(rho)(out, [dim]) if isinstance(rho, DensityMatrix) else Operator(out, [dim])
