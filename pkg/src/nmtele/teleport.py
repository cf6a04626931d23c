"""Continuous-variable teleportation through a noisy two-mode squeezed resource.

The sender holds the input mode E and the reference mode R; mode B travels
through the channel.  A Bell measurement on E and R with outcome
``beta = x_minus + i p_plus`` leaves B in the unnormalized state

    sigma(beta) = (1/pi) sum_{n,m} G_nm(beta) <n|_R rho_RB |m>_R,
    G(beta) = [D(beta)^dag rho_E D(beta)] restricted to the R truncation,

and the receiver applies ``D(beta)``.  The average fidelity is the integral
of ``tr[rho_E D sigma D^dag]`` over all outcomes.  It is linear in
``rho_RB``, so it is written as ``tr[K rho_RB]`` with a kernel ``K`` that
depends only on the input state and the quadrature grid; ``K`` is computed
once and reused at every transit time.

All displacement matrix elements are exact (see
:func:`nmtele.fock.displacement_elements`), so input states may be stored at a
larger truncation than the resource modes without clipping at large
``|beta|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .channels import ChannelSpec
from .errors import (
    InvalidBaselineError,
    InvalidParameterError,
    NegligibleProbabilityError,
    NumericalInstabilityError,
    ResolutionError,
    ShapeError,
    ValidationError,
)
from .fock import (
    DensityMatrix,
    Operator,
    StateVector,
    displacement_elements,
    embed,
    quadratures,
    squeeze,
    tmsv,
)
from .master import ChannelEvolution, TimeGrid, apply_map
from .metrics import MetricSeries, log_negativity

PROB_CUTOFF = 1e-14
GRID_TOL = 1e-3
_BATCH = 1024


# --- input states ---------------------------------------------------------

@dataclass(frozen=True)
class InputState:
    """Coherent ``|alpha>``, squeezed ``D(alpha) S(r_s e^{i theta}) |0>`` or cat state.

    For a cat, ``alpha`` is ``alpha_c`` and ``theta`` is the relative phase
    ``theta_c``.
    """

    kind: str
    alpha: complex = 1.0
    r_s: float = 0.0
    theta: float = 0.0

    KINDS = ("coherent", "squeezed", "cat")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidParameterError(f"input kind must be one of {self.KINDS}, got {self.kind!r}")
        object.__setattr__(self, "alpha", complex(self.alpha))
        if self.r_s < 0:
            raise InvalidParameterError(f"squeezing r_s must be >= 0, got {self.r_s}")
        if self.kind == "cat":
            n2 = 2.0 * (1.0 + math.exp(-2.0 * abs(self.alpha) ** 2) * math.cos(self.theta))
            if n2 < 1e-12:
                raise InvalidParameterError("cat state with these parameters has zero norm")

    @classmethod
    def coherent(cls, alpha: complex) -> "InputState":
        return cls("coherent", alpha)

    @classmethod
    def squeezed(cls, alpha: complex, r_s: float, theta: float = 0.0) -> "InputState":
        return cls("squeezed", alpha, r_s, theta)

    @classmethod
    def cat(cls, alpha_c: complex, theta_c: float) -> "InputState":
        return cls("cat", alpha_c, 0.0, theta_c)

    @property
    def label(self) -> str:
        if self.kind == "coherent":
            return f"coherent(alpha={self.alpha.real:g}{self.alpha.imag:+g}j)"
        if self.kind == "squeezed":
            return f"squeezed(alpha={self.alpha.real:g}{self.alpha.imag:+g}j,r_s={self.r_s:g},theta={self.theta:g})"
        return f"cat(alpha_c={self.alpha.real:g}{self.alpha.imag:+g}j,theta_c={self.theta:g})"

    def source_dim(self) -> int:
        """A truncation at which the state's Fock tail is below double precision."""
        a2 = abs(self.alpha) ** 2
        base = int(math.ceil(a2 + 12 * math.sqrt(a2) + 40))
        if self.kind == "squeezed" and self.r_s > 0:
            # squeezed-vacuum amplitudes fall off like tanh(r_s)^(n/2); keep them above 1e-12
            tail = int(math.ceil(2 * 28 / -math.log(math.tanh(self.r_s))))
            base += tail
        return base

    def vector(self, dim: int | None = None) -> StateVector:
        dim = self.source_dim() if dim is None else int(dim)
        if self.kind == "squeezed":
            vac = squeeze(dim, self.r_s * np.exp(1j * self.theta)).data[:, 0]
            v = displacement_elements(self.alpha, dim, dim) @ vac
        else:
            v = displacement_elements(self.alpha, dim, 1)[:, 0]
            if self.kind == "cat":
                v = v + np.exp(1j * self.theta) * displacement_elements(-self.alpha, dim, 1)[:, 0]
        return StateVector(v, [dim])

    def default_half_width(self) -> float:
        return abs(self.alpha) + 4.0 * math.exp(self.r_s)


# --- quadrature -----------------------------------------------------------

@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product rule on ``[-L, L]^2`` for ``beta = x_minus + i p_plus``."""

    half_width: float
    points: int = 61
    rule: str = "trapezoid"

    RULES = ("trapezoid",)

    def __post_init__(self):
        if not self.half_width > 0:
            raise InvalidParameterError(f"quadrature half width must be > 0, got {self.half_width}")
        if self.points < 21 or self.points % 2 == 0:
            raise InvalidParameterError(f"points per axis must be odd and >= 21, got {self.points}")
        if self.rule not in self.RULES:
            raise InvalidParameterError(f"unknown quadrature rule {self.rule!r}; known: {self.RULES}")

    @classmethod
    def for_input(cls, state: InputState, points: int = 61) -> "QuadratureGrid":
        return cls(state.default_half_width(), points)

    def axis(self) -> tuple[np.ndarray, np.ndarray]:
        xs = np.linspace(-self.half_width, self.half_width, self.points)
        w = np.full(self.points, xs[1] - xs[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return xs, w

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened complex nodes ``x + i p`` and their weights."""
        xs, w = self.axis()
        x, p = np.meshgrid(xs, xs, indexing="ij")
        return (x + 1j * p).ravel(), np.outer(w, w).ravel()

    def refined(self) -> "QuadratureGrid":
        """Halve the spacing; the old nodes are a subset of the new ones."""
        return QuadratureGrid(self.half_width, 2 * self.points - 1, self.rule)


# --- config ---------------------------------------------------------------

@dataclass(frozen=True)
class TeleportConfig:
    input: InputState
    r: float
    channel: ChannelSpec
    times: TimeGrid
    grid: QuadratureGrid | None = None
    dim_r: int | None = None
    wigner_times: tuple[float, ...] = ()
    wigner_half_width: float = 3.0
    wigner_points: int = 61
    check_grid: bool = True

    def __post_init__(self):
        if self.r < 0:
            raise InvalidParameterError(f"resource squeezing r must be >= 0, got {self.r}")
        if self.grid is None:
            object.__setattr__(self, "grid", QuadratureGrid.for_input(self.input))
        if self.dim_r is None:
            object.__setattr__(self, "dim_r", self.channel.mode_dim)
        if self.dim_r < 2:
            raise InvalidParameterError(f"dim_r must be >= 2, got {self.dim_r}")
        object.__setattr__(self, "wigner_times", tuple(float(t) for t in self.wigner_times))

    @property
    def dims(self) -> tuple[int, int, tuple[int, ...]]:
        return self.dim_r, self.channel.mode_dim, self.channel.ancilla_dims


# --- single outcomes ------------------------------------------------------

def _rb_blocks(rho_rb: Operator) -> np.ndarray:
    if len(rho_rb.dims) != 2:
        raise ShapeError(f"resource state must have two modes [R, B], got dims {rho_rb.dims}")
    nr, nb = rho_rb.dims
    return rho_rb.data.reshape(nr, nb, nr, nb)


def _g_block(rho_e: np.ndarray, betas, n: int) -> np.ndarray:
    """``[D(beta)^dag rho_E D(beta)]`` restricted to the lowest ``n`` levels.

    ``rho_e`` may be a density matrix or, for pure inputs, a state vector.
    """
    dm = displacement_elements(betas, rho_e.shape[0], n)
    dh = np.swapaxes(dm.conj(), -1, -2)
    if rho_e.ndim == 1:
        phi = dh @ rho_e
        return phi[..., :, None] * phi[..., None, :].conj()
    return dh @ rho_e @ dm


def bell_project(rho_e: Operator, rho_rb: Operator, x_minus: float, p_plus: float) -> tuple[Operator, float]:
    """Unnormalized conditional state of B and the outcome probability density."""
    if len(rho_e.dims) != 1:
        raise ShapeError("input state must be single-mode")
    blocks = _rb_blocks(rho_rb)
    nr, nb = rho_rb.dims
    if rho_e.dims[0] < nr:
        raise ShapeError(f"input truncation {rho_e.dims[0]} is smaller than the R truncation {nr}")
    g = _g_block(_as_density(rho_e), complex(x_minus, p_plus), nr)
    sigma = np.einsum("nm,nkml->kl", g, blocks) / math.pi
    prob = float(np.trace(sigma).real)
    return Operator(sigma, [nb]), prob


def _out_dim(beta: complex, nb: int) -> int:
    b = abs(beta)
    return nb + int(math.ceil(b * b + 10 * b + 30))


def reconstruct(sigma_b: Operator, x_minus: float, p_plus: float, out_dim: int | None = None) -> DensityMatrix:
    """``D(beta) sigma D(beta)^dag`` after normalization by ``tr sigma``.

    ``out_dim`` defaults to a truncation large enough that the displaced state
    keeps its trace to 1e-9.
    """
    beta = complex(x_minus, p_plus)
    prob = float(np.trace(sigma_b.data).real)
    if prob < PROB_CUTOFF:
        raise NegligibleProbabilityError(f"outcome probability density {prob:.3g} at beta={beta} is negligible")
    s = sigma_b.data / prob
    nb = s.shape[0]
    dim = _out_dim(beta, nb) if out_dim is None else int(out_dim)
    while True:
        d = displacement_elements(beta, dim, nb)
        out = d @ s @ d.conj().T
        deficit = abs(1.0 - np.trace(out).real)
        if deficit <= 1e-9 or out_dim is not None:
            break
        dim *= 2
    if deficit > 1e-9:
        raise ShapeError(f"out_dim {dim} loses {deficit:.3g} of the trace; increase it")
    return DensityMatrix.from_operator(Operator(out, [dim]))


def fidelity_single(rho_e: Operator, rho_out: Operator) -> float:
    """``Re tr[rho_E rho_out]``; single-mode states of different truncation are zero-padded."""
    if rho_e.dims != rho_out.dims:
        if len(rho_e.dims) == 1 and len(rho_out.dims) == 1:
            n = max(rho_e.dims[0], rho_out.dims[0])
            rho_e, rho_out = embed(rho_e, n), embed(rho_out, n)
        else:
            raise ShapeError(f"dims mismatch {rho_e.dims} vs {rho_out.dims}")
    f = np.einsum("ij,ji->", rho_e.data, rho_out.data)
    if abs(f.imag) > 1e-10:
        raise NumericalInstabilityError(f"fidelity has imaginary part {f.imag:.3g}")
    return float(f.real)


# --- kernels --------------------------------------------------------------

def _as_density(state) -> np.ndarray:
    """Matrix of a mixed input, or the amplitude vector of a pure one."""
    if isinstance(state, StateVector):
        return state.amplitudes
    if isinstance(state, Operator):
        return state.data
    if isinstance(state, InputState):
        return state.vector().amplitudes
    raise TypeError(f"cannot interpret {type(state).__name__} as an input state")


ObservableBlock = Callable[[np.ndarray], np.ndarray]


def observable_kernel(
    rho_e: np.ndarray, dim_r: int, dim_b: int, grid: QuadratureGrid, block: ObservableBlock
) -> np.ndarray:
    """Kernel ``K`` with ``tr[K rho_RB] = integral of tr[O D sigma D^dag]``.

    ``block(betas)`` returns ``[D(beta)^dag O D(beta)]`` restricted to the B
    truncation, shape ``(len(betas), dim_b, dim_b)``.
    """
    betas, weights = grid.nodes()
    k = np.zeros((dim_r, dim_b, dim_r, dim_b), dtype=complex)
    for s in range(0, betas.size, _BATCH):
        b = betas[s : s + _BATCH]
        g = _g_block(rho_e, b, dim_r)
        h = block(b)
        # K[(m,l),(n,k)] = sum_b w_b G_nm H_lk so that tr[K rho] = sum G_nm H_lk rho[(n,k),(m,l)]
        k += np.einsum("b,bnm,blk->mlnk", weights[s : s + _BATCH], g, h)
    return k.reshape(dim_r * dim_b, dim_r * dim_b) / math.pi


def fidelity_kernel(state, dim_r: int, dim_b: int, grid: QuadratureGrid) -> np.ndarray:
    rho_e = _as_density(state)
    return observable_kernel(rho_e, dim_r, dim_b, grid, lambda b: _g_block(rho_e, b, dim_b))


def parity_kernel(state, dim_r: int, dim_b: int, grid: QuadratureGrid) -> np.ndarray:
    """Kernel for the photon-number parity of the averaged output state.

    Uses ``D(beta)^dag Pi D(beta) = Pi D(2 beta)``.
    """
    rho_e = _as_density(state)
    sign = (-1.0) ** np.arange(dim_b)

    def block(b):
        return sign[None, :, None] * displacement_elements(2 * b, dim_b, dim_b)

    return observable_kernel(rho_e, dim_r, dim_b, grid, block)


@lru_cache(maxsize=32)
def _cached_fidelity_kernel(state: InputState, dim_r: int, dim_b: int, grid: QuadratureGrid) -> np.ndarray:
    k = fidelity_kernel(state, dim_r, dim_b, grid)
    k.flags.writeable = False
    return k


def kernel_expectation(kernel: np.ndarray, rho_rb: Operator) -> float:
    return float(np.sum(kernel * rho_rb.data.T).real)


def _gated_kernel(state: InputState, dim_r: int, dim_b: int, grid: QuadratureGrid, states, check: bool):
    k = _cached_fidelity_kernel(state, dim_r, dim_b, grid)
    if check:
        k2 = _cached_fidelity_kernel(state, dim_r, dim_b, grid.refined())
        worst = max(abs(kernel_expectation(k - k2, r)) for r in states)
        if worst > GRID_TOL:
            raise ResolutionError(
                f"average fidelity changes by {worst:.3g} when the quadrature grid is refined "
                f"(L={grid.half_width:g}, points={grid.points}); widen or refine the grid"
            )
    return k


def average_fidelity(cfg: TeleportConfig, rho_rb_t: Operator) -> float:
    """Average fidelity over Bell outcomes for one resource state."""
    nr, nb = cfg.dim_r, cfg.channel.mode_dim
    if rho_rb_t.dims != (nr, nb):
        raise ShapeError(f"resource dims {rho_rb_t.dims} do not match config dims {(nr, nb)}")
    k = _gated_kernel(cfg.input, nr, nb, cfg.grid, [rho_rb_t], cfg.check_grid)
    return kernel_expectation(k, rho_rb_t)


def relative_fidelity(series: MetricSeries) -> MetricSeries:
    base = series.values[0]
    if not base > 0:
        raise InvalidBaselineError(f"relative fidelity needs a positive baseline, got {base}")
    return MetricSeries(series.times, series.values / base, "F_r")


# --- phase space ----------------------------------------------------------

def averaged_output(state, rho_rb: Operator, grid: QuadratureGrid, out_dim: int = 40) -> DensityMatrix:
    """Outcome-averaged corrected output ``integral of D sigma D^dag``, renormalized."""
    rho_e = _as_density(state)
    blocks = _rb_blocks(rho_rb)
    nr, nb = rho_rb.dims
    betas, weights = grid.nodes()
    out = np.zeros((out_dim, out_dim), dtype=complex)
    for s in range(0, betas.size, _BATCH):
        b = betas[s : s + _BATCH]
        g = _g_block(rho_e, b, nr)
        sigma = np.einsum("bnm,nkml->bkl", g, blocks) / math.pi
        d = displacement_elements(b, out_dim, nb)
        out += np.einsum("b,bik,bkl,bjl->ij", weights[s : s + _BATCH], d, sigma, d.conj())
    tr = np.trace(out).real
    if not tr > 0:
        raise NumericalInstabilityError("averaged output has non-positive trace")
    return DensityMatrix.from_operator(Operator(out / tr, [out_dim]))


def wigner(rho: Operator, xs: Sequence[float], ps: Sequence[float]) -> np.ndarray:
    """``W(x, p) = (2/pi) tr[rho D(beta) Pi D(beta)^dag]``, ``beta = x + i p``; rows follow ``xs``."""
    if len(rho.dims) != 1:
        raise ShapeError("wigner needs a single-mode state")
    n = rho.dims[0]
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    beta = (xs[:, None] + 1j * ps[None, :]).ravel()
    sign = (-1.0) ** np.arange(n)
    # tr[rho D(2 beta) Pi] = sum_{m,m'} rho_{m m'} <m'|D(2 beta)|m> (-1)^m
    w = np.empty(beta.size)
    rs = rho.data * sign[:, None]
    for s in range(0, beta.size, _BATCH):
        d = displacement_elements(2 * beta[s : s + _BATCH], n, n)
        w[s : s + _BATCH] = np.einsum("mk,bkm->b", rs, d).real
    return (2 / math.pi) * w.reshape(xs.size, ps.size)


@dataclass(frozen=True)
class Ellipse:
    """Moments of a single-mode state: centre ``d``, axes ``h >= w``, flattening, orientation."""

    d: float
    h: float
    w: float
    flattening: float
    angle_deg: float


def ellipse(rho: Operator) -> Ellipse:
    n = rho.dims[0]
    x, p = quadratures(n)
    mx = np.trace(x.data @ rho.data).real
    mp = np.trace(p.data @ rho.data).real
    xx = np.trace(x.data @ x.data @ rho.data).real - mx * mx
    pp = np.trace(p.data @ p.data @ rho.data).real - mp * mp
    xp = 0.5 * np.trace((x.data @ p.data + p.data @ x.data) @ rho.data).real - mx * mp
    vals, vecs = np.linalg.eigh(np.array([[xx, xp], [xp, pp]]))
    h, w = math.sqrt(max(vals[1], 0.0)), math.sqrt(max(vals[0], 0.0))
    major = vecs[:, 1]
    angle = math.degrees(math.atan2(major[1], major[0])) % 180.0
    return Ellipse(math.hypot(mx, mp), h, w, (h - w) / w if w > 0 else math.inf, angle)


# --- pipeline -------------------------------------------------------------

@dataclass
class TeleportResult:
    fidelity: MetricSeries
    relative: MetricSeries
    entanglement: MetricSeries
    wigner_axis: np.ndarray | None = None
    wigner: dict[float, np.ndarray] = field(default_factory=dict)
    ellipses: dict[float, Ellipse] = field(default_factory=dict)


def resource_series(
    channel: ChannelSpec, r: float, times: TimeGrid, dim_r: int | None = None, maps: Sequence[np.ndarray] | None = None
) -> list[DensityMatrix]:
    """``(id_R x E_t)(tmsv)`` at every grid time."""
    dim_r = channel.mode_dim if dim_r is None else dim_r
    rho0 = tmsv(dim_r, channel.mode_dim, r).dm()
    if maps is None:
        maps = ChannelEvolution(channel).series(times)
    out = []
    for t, e in zip(times.times, maps):
        try:
            out.append(DensityMatrix.from_operator(Operator(apply_map(e, rho0, 1), rho0.dims)))
        except ValidationError as exc:
            raise NumericalInstabilityError(f"resource state invalid at t={t:.6g}: {exc}") from exc
    return out


def run_teleportation(cfg: TeleportConfig) -> TeleportResult:
    times = cfg.times.times
    states = resource_series(cfg.channel, cfg.r, cfg.times, cfg.dim_r)
    k = _gated_kernel(cfg.input, cfg.dim_r, cfg.channel.mode_dim, cfg.grid, states, cfg.check_grid)
    fid = MetricSeries(times, [kernel_expectation(k, s) for s in states], "F")
    en = MetricSeries(times, [log_negativity(s) for s in states], "E_N")
    res = TeleportResult(fid, relative_fidelity(fid), en)
    if cfg.wigner_times:
        axis = np.linspace(-cfg.wigner_half_width, cfg.wigner_half_width, cfg.wigner_points)
        res.wigner_axis = axis
        for tw in cfg.wigner_times:
            i = int(np.argmin(np.abs(times - tw)))
            if abs(times[i] - tw) > 1e-9 * max(1.0, abs(tw)):
                raise InvalidParameterError(f"Wigner time {tw} is not on the time grid")
            out = averaged_output(cfg.input, states[i], cfg.grid)
            res.wigner[tw] = wigner(out, axis, axis)
            res.ellipses[tw] = ellipse(out)
    return res
