"""Experiment configuration files (YAML) and their validation.

Every field has a default except ``study``; validation collects all problems
before reporting, each tagged with its dotted field path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..channels import (
    LORENTZIAN_GAMMA0,
    LORENTZIAN_KAPPA0,
    REFERENCE_OMEGA_B,
    TWO_LORENTZIAN,
    ChannelSpec,
    lorentzian_channel,
    markovian_reference,
    two_lorentzian_channel,
)
from ..errors import NmteleError, ValidationError
from ..master import TimeGrid
from ..teleport import InputState, QuadratureGrid

STUDIES = ("entanglement", "fidelity", "blp_surface", "wigner", "compare_inputs", "psd")
CHANNEL_KINDS = ("lorentzian", "two_lorentzian", "markovian")
DEFAULT_R = 0.346
DEFAULT_R_CAT = 0.4
TMSV_TAIL_TOL = 1e-5


class ConfigFileError(NmteleError, OSError):
    """The config file is missing or unreadable."""


class ConfigParseError(ValidationError):
    """The config file is not well-formed YAML."""


class ConfigValidationError(ValidationError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass(frozen=True)
class SweepSpec:
    gamma0: tuple[float, ...]
    kappa0: tuple[float, ...]
    mode_dim: int
    anc_dim: int
    candidates: tuple[str, ...]


@dataclass(frozen=True)
class WignerSpec:
    times: tuple[float, ...]
    half_width: float
    points: int


@dataclass(frozen=True)
class PsdSpec:
    omega_min: float
    omega_max: float
    points: int


@dataclass
class ExperimentConfig:
    study: str
    channel: ChannelSpec
    times: TimeGrid
    compare_markovian: bool = True
    inputs: tuple[InputState, ...] = ()
    r: tuple[float, ...] = ()
    quadrature_points: int = 61
    quadrature_half_width: float | None = None
    dim_r: int | None = None
    blp: SweepSpec | None = None
    wigner: WignerSpec | None = None
    psd: PsdSpec | None = None
    output_path: str | None = None
    metadata: dict = field(default_factory=dict)
    resolved: dict = field(default_factory=dict)

    def grid_for(self, state: InputState) -> QuadratureGrid:
        if self.quadrature_half_width is None:
            return QuadratureGrid.for_input(state, self.quadrature_points)
        return QuadratureGrid(self.quadrature_half_width, self.quadrature_points)


class _Reader:
    """Typed lookups into nested dicts that record errors instead of raising."""

    def __init__(self):
        self.errors: list[str] = []

    def section(self, d: dict, key: str, path: str) -> dict:
        v = d.get(key, {})
        if v is None:
            return {}
        if not isinstance(v, dict):
            self.errors.append(f"{path}{key}: expected a mapping")
            return {}
        return v

    def number(self, d, key, path, default, *, minimum=None, strict=False, integer=False):
        v = d.get(key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.errors.append(f"{path}{key}: expected a number, got {v!r}")
            return default
        if integer and int(v) != v:
            self.errors.append(f"{path}{key}: expected an integer, got {v!r}")
            return default
        if not math.isfinite(v):
            self.errors.append(f"{path}{key}: must be finite")
            return default
        if minimum is not None and (v <= minimum if strict else v < minimum):
            op = ">" if strict else ">="
            self.errors.append(f"{path}{key}: must be {op} {minimum}, got {v}")
        return int(v) if integer else float(v)

    def numbers(self, d, key, path, default, *, minimum=None, strict=False, length=None):
        v = d.get(key, default)
        if isinstance(v, dict) and {"start", "stop", "num"} <= set(v):
            try:
                v = list(np.linspace(float(v["start"]), float(v["stop"]), int(v["num"])))
            except (TypeError, ValueError):
                self.errors.append(f"{path}{key}: start/stop/num must be numbers")
                return ()
        if not isinstance(v, (list, tuple)) or not v:
            self.errors.append(f"{path}{key}: expected a nonempty list of numbers")
            return ()
        out = []
        for i, x in enumerate(v):
            out.append(self.number({"x": x}, "x", f"{path}{key}[{i}]", 0.0, minimum=minimum, strict=strict) or 0.0)
        if length is not None and len(out) != length:
            self.errors.append(f"{path}{key}: expected {length} values, got {len(out)}")
        return tuple(out)

    def boolean(self, d, key, path, default):
        v = d.get(key, default)
        if not isinstance(v, bool):
            self.errors.append(f"{path}{key}: expected true or false")
            return default
        return v

    def choice(self, d, key, path, default, options):
        v = d.get(key, default)
        if v not in options:
            self.errors.append(f"{path}{key}: {v!r} is not one of {', '.join(options)}")
            return None
        return v


def _channel(rd: _Reader, d: dict) -> tuple[ChannelSpec | None, dict]:
    p = "channel."
    n_err = len(rd.errors)
    kind = rd.choice(d, "kind", p, "lorentzian", CHANNEL_KINDS)
    omega_b = rd.number(d, "omega_b", p, REFERENCE_OMEGA_B, minimum=0, strict=True)
    mode_dim = rd.number(d, "mode_dim", p, 8 if kind != "two_lorentzian" else 6, minimum=2, integer=True)
    resolved: dict[str, Any] = {"kind": kind, "omega_b": omega_b, "mode_dim": mode_dim}
    if kind == "lorentzian":
        g = rd.number(d, "gamma0", p, LORENTZIAN_GAMMA0, minimum=0, strict=True)
        k = rd.number(d, "kappa0", p, LORENTZIAN_KAPPA0, minimum=0)
        na = rd.number(d, "anc_dim", p, 4, minimum=2, integer=True)
        resolved.update(gamma0=g, kappa0=k, anc_dim=na)
        if len(rd.errors) == n_err:
            return lorentzian_channel(g, k, mode_dim=mode_dim, anc_dim=na, omega_b=omega_b), resolved
    elif kind == "two_lorentzian":
        w = rd.numbers(d, "omegas", p, TWO_LORENTZIAN["omegas"], length=2)
        g = rd.numbers(d, "gammas", p, TWO_LORENTZIAN["gammas"], minimum=0, strict=True, length=2)
        k = rd.numbers(d, "kappas", p, TWO_LORENTZIAN["kappas"], minimum=0, length=2)
        na = rd.numbers(d, "anc_dims", p, (4, 4), minimum=2, length=2)
        resolved.update(omegas=list(w), gammas=list(g), kappas=list(k), anc_dims=[int(x) for x in na])
        if len(rd.errors) == n_err:
            return two_lorentzian_channel(w, g, k, mode_dim, [int(x) for x in na], omega_b), resolved
    elif kind == "markovian":
        k = rd.numbers(d, "kappas", p, (LORENTZIAN_KAPPA0,), minimum=0)
        resolved.update(kappas=list(k))
        if len(rd.errors) == n_err:
            return markovian_reference(k, mode_dim, omega_b), resolved
    return None, resolved


def _input(rd: _Reader, d: Any, path: str) -> tuple[InputState | None, dict]:
    if not isinstance(d, dict):
        rd.errors.append(f"{path}: expected a mapping")
        return None, {}
    kind = rd.choice(d, "kind", path + ".", "coherent", InputState.KINDS)
    alpha = rd.number(d, "alpha", path + ".", 1.0)
    res: dict[str, Any] = {"kind": kind, "alpha": alpha}
    r_s = theta = 0.0
    if kind == "squeezed":
        r_s = rd.number(d, "r_s", path + ".", 1.0, minimum=0)
        theta = rd.number(d, "theta", path + ".", 0.0)
        res.update(r_s=r_s, theta=theta)
    elif kind == "cat":
        theta = rd.number(d, "theta_c", path + ".", math.pi)
        res.update(theta_c=theta)
    if kind is None:
        return None, res
    try:
        return InputState(kind, alpha, r_s, theta), res
    except ValidationError as exc:
        rd.errors.append(f"{path}: {exc}")
        return None, res


def _default_inputs(r_s: float) -> list[dict]:
    return [
        {"kind": "coherent", "alpha": 1.0},
        {"kind": "squeezed", "alpha": 1.0, "r_s": r_s},
        {"kind": "cat", "alpha": 1.0, "theta_c": 0.0},
        {"kind": "cat", "alpha": 1.0, "theta_c": math.pi},
    ]


def config_from_dict(raw: Any, study: str | None = None) -> ExperimentConfig:
    """Validate a parsed config mapping; raise :class:`ConfigValidationError` listing every problem."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigValidationError(["<root>: expected a mapping"])
    rd = _Reader()
    name = raw.get("study", study)
    if study is not None and name != study:
        rd.errors.append(f"study: config names {name!r} but the command asked for {study!r}")
    if name not in STUDIES:
        rd.errors.append(f"study: {name!r} is not one of {', '.join(STUDIES)}")

    channel, ch_res = _channel(rd, rd.section(raw, "channel", ""))

    tsec = rd.section(raw, "time", "")
    t0 = rd.number(tsec, "t0", "time.", 0.0, minimum=0)
    default_end = {"compare_inputs": 60.0, "wigner": 10.0}.get(name, 100.0)
    t_end = rd.number(tsec, "t_end", "time.", default_end, minimum=0)
    dt = rd.number(tsec, "dt", "time.", 0.1, minimum=0, strict=True)
    times = None
    if t0 is not None and t_end is not None and dt:
        if t_end < t0:
            rd.errors.append(f"time.t_end: must be >= t0 ({t0}), got {t_end}")
        else:
            times = TimeGrid.with_max_step(t0, t_end, dt)
            if times.n_steps > 20000:
                rd.errors.append(f"time: {times.n_steps} steps exceeds the limit of 20000")

    tp = rd.section(raw, "teleport", "")
    qsec = rd.section(tp, "quadrature", "teleport.")
    qpoints = rd.number(qsec, "points", "teleport.quadrature.", 61, minimum=21, integer=True)
    if qpoints is not None and qpoints % 2 == 0:
        rd.errors.append(f"teleport.quadrature.points: must be odd, got {qpoints}")
    qwidth = rd.number(qsec, "half_width", "teleport.quadrature.", None, minimum=0, strict=True)
    dim_r = rd.number(tp, "dim_r", "teleport.", None, minimum=2, integer=True)

    inputs: list[InputState] = []
    in_res: list[dict] = []
    if name == "compare_inputs":
        cmp_ = rd.section(raw, "compare_inputs", "")
        r_s = rd.number(cmp_, "r_s", "compare_inputs.", 1.0, minimum=0)
        items = cmp_.get("inputs", _default_inputs(r_s))
        if not isinstance(items, list) or not items:
            rd.errors.append("compare_inputs.inputs: expected a nonempty list")
            items = []
        for i, it in enumerate(items):
            s, res = _input(rd, it, f"compare_inputs.inputs[{i}]")
            inputs.append(s)
            in_res.append(res)
    else:
        default_in = {"kind": "cat", "alpha": 1.0, "theta_c": math.pi} if name == "wigner" else {}
        s, res = _input(rd, tp.get("input", default_in), "teleport.input")
        inputs.append(s)
        in_res.append(res)

    r_given = rd.number(tp, "r", "teleport.", None, minimum=0)
    rs = []
    for i, s in enumerate(inputs):
        default = DEFAULT_R_CAT if (s is not None and s.kind == "cat") else DEFAULT_R
        r = default if r_given is None else r_given
        rs.append(r)
        in_res[i]["r"] = r

    if channel is not None:
        nr = dim_r or channel.mode_dim
        for r in set(rs):
            if r is not None and math.tanh(r) ** (2 * min(nr, channel.mode_dim)) > TMSV_TAIL_TOL:
                rd.errors.append(
                    f"teleport.r: resource squeezing {r} is not adequately represented at truncation "
                    f"{min(nr, channel.mode_dim)}; increase channel.mode_dim"
                )

    blp = wig = psd = None
    if name == "blp_surface":
        b = rd.section(raw, "blp", "")
        g = rd.numbers(b, "gamma0", "blp.", {"start": 0.1, "stop": 5.0, "num": 50}, minimum=0, strict=True)
        k = rd.numbers(b, "kappa0", "blp.", [1.0], minimum=0)
        md = rd.number(b, "mode_dim", "blp.", 6, minimum=4, integer=True)
        na = rd.number(b, "anc_dim", "blp.", 4, minimum=2, integer=True)
        cands = b.get("candidates", ["fock(0,1)", "coherent(+-0.5)", "coherent(+-1)"])
        from ..metrics import CANDIDATE_LABELS

        if not isinstance(cands, list) or not cands or any(c not in CANDIDATE_LABELS for c in cands):
            rd.errors.append(f"blp.candidates: must be a nonempty subset of {', '.join(CANDIDATE_LABELS)}")
            cands = list(CANDIDATE_LABELS)
        blp = SweepSpec(g, k, md, na, tuple(cands))
        if ch_res.get("kind") != "lorentzian":
            rd.errors.append("channel.kind: blp_surface sweeps a lorentzian channel")
    if name == "wigner":
        w = rd.section(raw, "wigner", "")
        wt = rd.numbers(w, "times", "wigner.", [0.0, 10.0], minimum=0)
        hw = rd.number(w, "half_width", "wigner.", 3.0, minimum=0, strict=True)
        pts = rd.number(w, "points", "wigner.", 61, minimum=3, integer=True)
        wig = WignerSpec(wt, hw, pts)
        if times is not None:
            for i, t in enumerate(wt):
                if np.min(np.abs(times.times - t)) > 1e-9 * max(1.0, t):
                    rd.errors.append(f"wigner.times[{i}]: {t} is not on the time grid")
    if name == "psd":
        ps = rd.section(raw, "psd", "")
        ob = ch_res.get("omega_b") or REFERENCE_OMEGA_B
        lo = rd.number(ps, "omega_min", "psd.", 0.0)
        hi = rd.number(ps, "omega_max", "psd.", 2.0 * ob)
        n = rd.number(ps, "points", "psd.", 401, minimum=2, integer=True)
        if lo is not None and hi is not None and hi <= lo:
            rd.errors.append("psd.omega_max: must exceed omega_min")
        psd = PsdSpec(lo, hi, n)
        if ch_res.get("kind") == "markovian":
            rd.errors.append("channel.kind: a Markovian channel has a flat spectrum; psd needs ancillas")

    compare = rd.boolean(raw, "compare_markovian", "", True)
    out = raw.get("output")
    if out is not None and not isinstance(out, str):
        rd.errors.append("output: expected a path string")
    meta = raw.get("metadata", {}) or {}
    if not isinstance(meta, dict):
        rd.errors.append("metadata: expected a mapping")
        meta = {}

    known = {"study", "channel", "time", "teleport", "compare_inputs", "blp", "wigner", "psd",
             "compare_markovian", "output", "metadata"}
    for key in raw:
        if key not in known:
            rd.errors.append(f"{key}: unknown field")

    if rd.errors:
        raise ConfigValidationError(rd.errors)

    resolved = {
        "study": name,
        "channel": ch_res,
        "time": {"t0": t0, "t_end": t_end, "n_steps": times.n_steps},
        "teleport": {"quadrature": {"points": qpoints, "half_width": qwidth}, "dim_r": dim_r},
        "inputs": in_res,
        "compare_markovian": compare,
    }
    if blp:
        resolved["blp"] = {"gamma0": list(blp.gamma0), "kappa0": list(blp.kappa0), "mode_dim": blp.mode_dim,
                           "anc_dim": blp.anc_dim, "candidates": list(blp.candidates)}
    if wig:
        resolved["wigner"] = {"times": list(wig.times), "half_width": wig.half_width, "points": wig.points}
    if psd:
        resolved["psd"] = {"omega_min": psd.omega_min, "omega_max": psd.omega_max, "points": psd.points}
    return ExperimentConfig(
        study=name,
        channel=channel,
        times=times,
        compare_markovian=compare,
        inputs=tuple(inputs),
        r=tuple(rs),
        quadrature_points=qpoints,
        quadrature_half_width=qwidth,
        dim_r=dim_r,
        blp=blp,
        wigner=wig,
        psd=psd,
        output_path=out,
        metadata=dict(meta),
        resolved=resolved,
    )


def parse_config(path: str | Path, study: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ConfigFileError(f"config file not found: {path}") from exc
    except OSError as exc:
        raise ConfigFileError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{path}: not valid YAML: {exc}") from exc
    return config_from_dict(raw, study)
