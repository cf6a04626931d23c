"""Augmented-system models of quantum channels with Lorentzian noise.

A channel acts on the transmitted mode B.  Its colored noise is produced by
damped ancilla oscillators driven by white noise; each ancilla k couples to B
through ``H_BA = i(c_k^dag z - z^dag c_k)`` with fictitious output
``c_k = -(sqrt(gamma_k)/2) a_k`` and coupling ``z = sqrt(kappa_k) a_B``.

Units: frequencies and rates are given in the same (arbitrary) unit as
``omega_b``.  Generators are divided by ``omega_b`` so that evolution times
are the dimensionless ``omega_b * t``.  The principal Hamiltonian
``H_B = omega_b * I`` (and ``H_R``) is proportional to the identity and is
omitted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InvalidDimensionError, InvalidParameterError, UnsupportedError


@dataclass(frozen=True)
class AncillaSpec:
    omega: float
    gamma: float
    kappa: float
    dim: int = 5

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidParameterError(f"ancilla damping gamma must be > 0, got {self.gamma}")
        if self.kappa < 0:
            raise InvalidParameterError(f"ancilla coupling kappa must be >= 0, got {self.kappa}")
        if int(self.dim) < 2:
            raise InvalidDimensionError(f"ancilla truncation must be >= 2, got {self.dim}")


@dataclass(frozen=True)
class ChannelSpec:
    """One principal mode B plus ancillas, or a Markovian reference.

    ``markov_kappas`` holds the direct white-noise couplings of a Markovian
    reference channel; it is empty for augmented (non-Markovian) channels.
    """

    mode_dim: int
    omega_b: float = 1.0
    ancillas: tuple[AncillaSpec, ...] = ()
    markovian_reference: bool = False
    markov_kappas: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "ancillas", tuple(self.ancillas))
        object.__setattr__(self, "markov_kappas", tuple(float(k) for k in self.markov_kappas))
        if int(self.mode_dim) < 2:
            raise InvalidDimensionError(f"mode_dim must be >= 2, got {self.mode_dim}")
        if not self.omega_b > 0:
            raise InvalidParameterError(f"omega_b must be > 0, got {self.omega_b}")
        if self.markovian_reference:
            if self.ancillas:
                raise InvalidParameterError("a Markovian reference channel has no ancillas")
            if not self.markov_kappas:
                raise InvalidParameterError("a Markovian reference channel needs at least one kappa")
            if any(k < 0 for k in self.markov_kappas):
                raise InvalidParameterError(f"kappas must be >= 0, got {self.markov_kappas}")
        elif not self.ancillas:
            raise InvalidParameterError("a non-Markovian channel needs at least one ancilla")

    @property
    def ancilla_dims(self) -> tuple[int, ...]:
        return tuple(int(a.dim) for a in self.ancillas)

    @property
    def hilbert_dims(self) -> tuple[int, ...]:
        """Dimensions of the space the channel generator acts on: ``[B, A1, ...]``."""
        return (int(self.mode_dim),) + self.ancilla_dims

    def markovian(self) -> "ChannelSpec":
        """White-noise limit: same couplings, ancillas removed."""
        if self.markovian_reference:
            return self
        return markovian_reference([a.kappa for a in self.ancillas], self.mode_dim, omega_b=self.omega_b)

    def with_dims(self, mode_dim: int | None = None, anc_dim: int | Sequence[int] | None = None) -> "ChannelSpec":
        anc = self.ancillas
        if anc_dim is not None:
            dims = [anc_dim] * len(anc) if np.isscalar(anc_dim) else list(anc_dim)
            anc = tuple(replace(a, dim=int(d)) for a, d in zip(anc, dims))
        return replace(self, mode_dim=int(mode_dim or self.mode_dim), ancillas=anc)

    def to_dict(self) -> dict:
        d = {"mode_dim": int(self.mode_dim), "omega_b": float(self.omega_b)}
        if self.markovian_reference:
            d["markovian_reference"] = True
            d["kappas"] = list(self.markov_kappas)
        else:
            d["ancillas"] = [
                {"omega": a.omega, "gamma": a.gamma, "kappa": a.kappa, "dim": int(a.dim)} for a in self.ancillas
            ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelSpec":
        if d.get("markovian_reference"):
            return markovian_reference(d["kappas"], d["mode_dim"], omega_b=d.get("omega_b", 1.0))
        anc = tuple(AncillaSpec(**a) for a in d["ancillas"])
        return cls(mode_dim=d["mode_dim"], omega_b=d.get("omega_b", 1.0), ancillas=anc)


def lorentzian_channel(
    gamma0: float,
    kappa0: float,
    omega0: float | None = None,
    mode_dim: int = 8,
    anc_dim: int = 5,
    omega_b: float = 1.0,
) -> ChannelSpec:
    """Single damped ancilla, resonant with the carrier (``omega0 = omega_b``)."""
    if omega0 is None:
        omega0 = omega_b
    if not math.isclose(omega0, omega_b, rel_tol=1e-12):
        raise InvalidParameterError(f"Lorentzian channel is resonant: omega0 ({omega0}) must equal omega_b ({omega_b})")
    if gamma0 <= 0 or kappa0 < 0:
        raise InvalidParameterError(f"need gamma0 > 0 and kappa0 >= 0, got {gamma0}, {kappa0}")
    return ChannelSpec(mode_dim, omega_b, (AncillaSpec(omega0, gamma0, kappa0, anc_dim),))


def two_lorentzian_channel(
    omegas: Sequence[float],
    gammas: Sequence[float],
    kappas: Sequence[float],
    mode_dim: int = 8,
    anc_dims: Sequence[int] | int = 4,
    omega_b: float = 1.0,
) -> ChannelSpec:
    if not (len(omegas) == len(gammas) == len(kappas) == 2):
        raise InvalidParameterError("two-Lorentzian channel needs exactly two (omega, gamma, kappa) triples")
    dims = [anc_dims] * 2 if np.isscalar(anc_dims) else list(anc_dims)
    anc = tuple(AncillaSpec(w, g, k, d) for w, g, k, d in zip(omegas, gammas, kappas, dims))
    return ChannelSpec(mode_dim, omega_b, anc)


def markovian_reference(kappas: Sequence[float], mode_dim: int = 8, omega_b: float = 1.0) -> ChannelSpec:
    return ChannelSpec(mode_dim, omega_b, (), True, tuple(kappas))


def psd(spec: ChannelSpec, omegas) -> np.ndarray:
    """Noise power spectral density: a sum of unit-peak Lorentzians, one per ancilla."""
    if spec.markovian_reference:
        raise UnsupportedError("a Markovian reference channel has a flat (white) spectrum")
    w = np.asarray(omegas, dtype=float)
    s = np.zeros_like(w)
    for a in spec.ancillas:
        hw2 = (a.gamma / 2) ** 2
        s += hw2 / (hw2 + (w - a.omega) ** 2)
    return s


# --- generator assembly ---------------------------------------------------

def _ladder(dims: Sequence[int], k: int) -> np.ndarray:
    out = np.ones((1, 1))
    for i, d in enumerate(dims):
        m = np.diag(np.sqrt(np.arange(1, d)), 1) if i == k else np.eye(d)
        out = np.kron(out, m)
    return out.astype(complex)


def generator_terms(spec: ChannelSpec, left_dims: Sequence[int] = ()) -> tuple[np.ndarray, list[np.ndarray], tuple[int, ...]]:
    """Hamiltonian and collapse operators in dimensionless time units.

    The operators act on ``left_dims + [B, A1, ...]``; ``left_dims`` are
    spectator modes (e.g. R) that the channel leaves untouched.
    """
    left = tuple(int(d) for d in left_dims)
    dims = left + spec.hilbert_dims
    ib = len(left)
    a_b = _ladder(dims, ib)
    n = a_b.shape[0]
    h = np.zeros((n, n), dtype=complex)
    collapse = []
    scale = 1.0 / spec.omega_b
    if spec.markovian_reference:
        for kappa in spec.markov_kappas:
            collapse.append(math.sqrt(kappa * scale) * a_b)
        return h, collapse, dims
    for k, anc in enumerate(spec.ancillas):
        a_k = _ladder(dims, ib + 1 + k)
        h += anc.omega * scale * (a_k.conj().T @ a_k)
        c = -(math.sqrt(anc.gamma) / 2) * a_k
        z = math.sqrt(anc.kappa) * a_b
        h += 1j * scale * (c.conj().T @ z - z.conj().T @ c)
        collapse.append(math.sqrt(anc.gamma * scale) * a_k)
    return h, collapse, dims


# Reference instances (frequencies and rates in GHz, carrier at 10 GHz).
REFERENCE_OMEGA_B = 10.0
LORENTZIAN_GAMMA0 = 0.8
LORENTZIAN_KAPPA0 = 4.0
TWO_LORENTZIAN = {"omegas": (8.0, 12.0), "gammas": (0.6, 0.6), "kappas": (2.0, 5.0)}


def reference_lorentzian(mode_dim: int = 8, anc_dim: int = 4) -> ChannelSpec:
    return lorentzian_channel(
        LORENTZIAN_GAMMA0, LORENTZIAN_KAPPA0, mode_dim=mode_dim, anc_dim=anc_dim, omega_b=REFERENCE_OMEGA_B
    )


def reference_two_lorentzian(mode_dim: int = 6, anc_dims: int | Sequence[int] = 4) -> ChannelSpec:
    return two_lorentzian_channel(mode_dim=mode_dim, anc_dims=anc_dims, omega_b=REFERENCE_OMEGA_B, **TWO_LORENTZIAN)
