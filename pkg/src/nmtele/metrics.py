"""Entanglement and non-Markovianity quantifiers."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channels import ChannelSpec
from .errors import InvalidSplitError, ResolutionWarning, ShapeError, ValidationError
from .fock import DensityMatrix, Operator, coherent, fock_state, ptranspose, trace_norm
from .master import ChannelEvolution, TimeGrid, unvec, vec

BLP_STEP_WARN = 0.1


@dataclass(frozen=True, eq=False)
class MetricSeries:
    times: np.ndarray
    values: np.ndarray
    label: str

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).copy()
        v = np.asarray(self.values, dtype=float).copy()
        if t.ndim != 1 or t.shape != v.shape:
            raise ShapeError(f"{self.label}: times and values must be 1-D and equal length, got {t.shape}, {v.shape}")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValidationError(f"{self.label}: times must be strictly increasing")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.times.size

    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def rebounds(self, threshold: float) -> np.ndarray:
        """Step indices ``k`` with ``values[k+1] - values[k] > threshold``."""
        return np.flatnonzero(self.increments() > threshold)

    def window(self, t_min: float, t_max: float) -> "MetricSeries":
        m = (self.times >= t_min - 1e-12) & (self.times <= t_max + 1e-12)
        return MetricSeries(self.times[m], self.values[m], self.label)


def log_negativity(rho: Operator, split: int = 1) -> float:
    """``log2 ||rho^T_B||_1`` for the cut ``subsystems[:split] | subsystems[split:]``."""
    n = len(rho.dims)
    if n < 2 or not 1 <= split < n:
        raise InvalidSplitError(f"split {split} does not bipartition subsystems {rho.dims}")
    dims = rho.dims
    left = math.prod(dims[:split])
    right = math.prod(dims[split:])
    grouped = Operator(rho.data, (left, right))
    pt = ptranspose(grouped, 1).data
    norm = float(np.abs(np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))).sum())
    return max(0.0, math.log2(norm))


def trace_distance(rho1: Operator, rho2: Operator) -> float:
    if rho1.dims != rho2.dims:
        raise ShapeError(f"dims mismatch {rho1.dims} vs {rho2.dims}")
    return 0.5 * trace_norm(rho1.data - rho2.data)


def default_candidates(dim: int) -> list[tuple[DensityMatrix, DensityMatrix]]:
    """Fock pair ``(|0>, |1>)`` and coherent pairs ``(|a>, |-a>)`` for ``a`` in 0.5, 1."""
    pairs = [(fock_state(dim, 0).dm(), fock_state(dim, 1).dm())]
    for a in (0.5, 1.0):
        pairs.append((coherent(dim, a, check=False).dm(), coherent(dim, -a, check=False).dm()))
    return pairs


CANDIDATE_LABELS = ("fock(0,1)", "coherent(+-0.5)", "coherent(+-1)")


def _distance_series(maps: Sequence[np.ndarray], pair) -> np.ndarray:
    r1, r2 = pair
    diff = vec(r1) - vec(r2)
    d = r1.dims[0]
    return np.array([0.5 * trace_norm(unvec(e @ diff, d)) for e in maps])


def _blp_from_distance(times, dist, label_suffix="") -> tuple[MetricSeries, MetricSeries]:
    inc = np.diff(dist)
    if inc.size and np.max(np.abs(inc)) > BLP_STEP_WARN:
        warnings.warn(
            f"trace distance changes by {np.max(np.abs(inc)):.3g} in one step; refine the time grid",
            ResolutionWarning,
            stacklevel=3,
        )
    n = np.concatenate([[0.0], np.cumsum(np.maximum(inc, 0.0))])
    return MetricSeries(times, dist, "D" + label_suffix), MetricSeries(times, n, "N" + label_suffix)


def _check_pair(spec: ChannelSpec, pair) -> None:
    if len(pair) != 2:
        raise ValidationError("a candidate must be a pair of states")
    for r in pair:
        if r.dims != (spec.mode_dim,):
            raise ShapeError(f"pair state dims {r.dims} do not match mode B dim {spec.mode_dim}")


def blp_series(
    spec: ChannelSpec,
    pair: tuple[DensityMatrix, DensityMatrix],
    grid: TimeGrid,
    maps: Sequence[np.ndarray] | None = None,
) -> tuple[MetricSeries, MetricSeries]:
    """Trace distance of the evolved pair and the cumulative sum of its positive increments."""
    _check_pair(spec, pair)
    if maps is None:
        maps = ChannelEvolution(spec).series(grid)
    return _blp_from_distance(grid.times, _distance_series(maps, pair))


def blp_scan(spec: ChannelSpec, candidates, grid: TimeGrid, maps=None) -> np.ndarray:
    """``N(t_end)`` for each candidate pair (maps computed once and shared)."""
    candidates = list(candidates)
    if not candidates:
        raise ValidationError("candidate set must be nonempty")
    for p in candidates:
        _check_pair(spec, p)
    if maps is None:
        maps = ChannelEvolution(spec).series(grid)
    return np.array([blp_series(spec, p, grid, maps)[1].values[-1] for p in candidates])


def blp_max(spec: ChannelSpec, candidates, grid: TimeGrid) -> float:
    return float(np.max(blp_scan(spec, candidates, grid)))


def unmatched_rebounds(
    series: MetricSeries, reference: MetricSeries, threshold: float = 1e-4, window: int = 1
) -> np.ndarray:
    """Rebounds of ``series`` with no positive ``reference`` increment within ``window`` steps."""
    rb = series.rebounds(threshold)
    pos = np.flatnonzero(reference.increments() > 0)
    if pos.size == 0:
        return rb
    return np.array([k for k in rb if np.min(np.abs(pos - k)) > window], dtype=int)
