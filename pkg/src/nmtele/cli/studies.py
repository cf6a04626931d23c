"""Named studies: each turns a validated config into one result table."""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from ..channels import ChannelSpec, lorentzian_channel, psd
from ..errors import NmteleError
from ..master import ChannelEvolution
from ..metrics import CANDIDATE_LABELS, blp_scan, blp_series, default_candidates, log_negativity
from ..teleport import InputState, TeleportConfig, resource_series, run_teleportation
from .config import ExperimentConfig
from .results import ResultTable

CONVENTIONS = {
    "quadratures": "x=(a+a^dag)/2, p=(a-a^dag)/(2i), vacuum variance 1/4",
    "time": "dimensionless omega_b*t",
    "vectorization": "column stacking",
    "fidelity": "average over Bell outcomes, trapezoid rule on [-L,L]^2",
    "wigner": "(2/pi) tr[rho D(beta) Pi D(beta)^dag], beta=x+ip",
    "log_negativity": "log2 of the trace norm of the partial transpose",
}


class StudyAborted(NmteleError):
    """A study failed part-way; ``partial`` holds the rows completed before the failure."""

    def __init__(self, message: str, partial: ResultTable, cause: BaseException):
        super().__init__(message)
        self.partial = partial
        self.cause = cause


def artifact_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from .. import __version__

        return __version__


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _provenance(cfg: ExperimentConfig, **extra) -> dict:
    prov = {
        "study": cfg.study,
        "config_hash": config_hash(cfg),
        "artifact_version": artifact_version(),
        "config": cfg.resolved,
        "conventions": CONVENTIONS,
    }
    if cfg.metadata:
        prov["metadata"] = cfg.metadata
    prov.update(extra)
    return prov


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    """Ordered map; each item returns ``(ok, value_or_exception)``.

    BLAS is pinned to one thread so results do not depend on ``threads``.
    """

    def safe(x):
        try:
            return True, fn(x)
        except NmteleError as exc:
            return False, exc

    with threadpool_limits(limits=1):
        if threads <= 1 or len(items) <= 1:
            return [safe(x) for x in items]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(safe, items))


def _first_failure(results, labels, build_partial) -> None:
    for i, (ok, val) in enumerate(results):
        if not ok:
            partial = build_partial([v for _, v in results[:i]])
            raise StudyAborted(f"{labels[i]} failed: {val}", partial, val)


def _channels(cfg: ExperimentConfig) -> list[tuple[str, ChannelSpec]]:
    out = [("", cfg.channel)]
    if cfg.compare_markovian and not cfg.channel.markovian_reference:
        out.append(("_markov", cfg.channel.markovian()))
    return out


def _dims_note(cfg: ExperimentConfig) -> dict:
    nb = cfg.channel.mode_dim
    return {"dims": {"R": cfg.dim_r or nb, "B": nb, "A": list(cfg.channel.ancilla_dims)}}


def _time_note(cfg: ExperimentConfig) -> dict:
    g = cfg.times
    return {"time_grid": {"t0": g.t0, "t_end": g.t_end, "n_steps": g.n_steps, "dt": g.dt}}


# --- studies --------------------------------------------------------------

def entanglement_study(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    r = cfg.r[0]
    chans = _channels(cfg)

    pair = default_candidates(cfg.channel.mode_dim)[0]

    def one(item):
        suffix, ch = item
        maps = ChannelEvolution(ch).series(cfg.times)
        states = resource_series(ch, r, cfg.times, cfg.dim_r, maps)
        dist, nmk = blp_series(ch, pair, cfg.times, maps)
        return {"E_N" + suffix: [log_negativity(s) for s in states], "D" + suffix: dist.values, "N" + suffix: nmk.values}

    res = _pmap(one, chans, threads)
    prov = _provenance(cfg, r=r, trace_distance_pair=CANDIDATE_LABELS[0], **_dims_note(cfg), **_time_note(cfg))

    def build(vals):
        cols = {"t": cfg.times.times}
        for v in vals:
            cols.update(v)
        return ResultTable.from_columns(cols, prov)

    _first_failure(res, [c[0] or "channel" for c in chans], build)
    return build([v for _, v in res])


def _teleport_cfg(cfg: ExperimentConfig, state: InputState, r: float, channel: ChannelSpec, **kw) -> TeleportConfig:
    return TeleportConfig(state, r, channel, cfg.times, cfg.grid_for(state), cfg.dim_r, **kw)


def fidelity_study(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    state, r = cfg.inputs[0], cfg.r[0]
    chans = _channels(cfg)
    res = _pmap(lambda item: run_teleportation(_teleport_cfg(cfg, state, r, item[1])), chans, threads)
    prov = _provenance(cfg, input=state.label, r=r, quadrature=_grid_note(cfg, state), **_dims_note(cfg), **_time_note(cfg))

    def build(vals):
        cols = {"t": cfg.times.times}
        for (suffix, _), v in zip(chans, vals):
            cols["F" + suffix] = v.fidelity.values
            cols["F_r" + suffix] = v.relative.values
            cols["E_N" + suffix] = v.entanglement.values
        return ResultTable.from_columns(cols, prov)

    _first_failure(res, [c[0] or "channel" for c in chans], build)
    return build([v for _, v in res])


def _grid_note(cfg: ExperimentConfig, state: InputState) -> dict:
    g = cfg.grid_for(state)
    return {"half_width": g.half_width, "points": g.points, "rule": g.rule}


def blp_surface_study(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    sw = cfg.blp
    points = [(k, g) for k in sw.kappa0 for g in sw.gamma0]
    labels = list(CANDIDATE_LABELS)
    idx = [labels.index(c) for c in sw.candidates]
    omega_b = cfg.channel.omega_b

    def one(pt):
        k, g = pt
        spec = lorentzian_channel(g, k, mode_dim=sw.mode_dim, anc_dim=sw.anc_dim, omega_b=omega_b)
        cands = default_candidates(sw.mode_dim)
        return blp_scan(spec, [cands[i] for i in idx], cfg.times)

    res = _pmap(one, points, threads)
    prov = _provenance(
        cfg,
        candidates=list(sw.candidates),
        dims={"B": sw.mode_dim, "A": [sw.anc_dim]},
        omega_b=omega_b,
        **_time_note(cfg),
    )

    def build(vals):
        n = len(vals)
        cols = {"gamma0": [p[1] for p in points[:n]], "kappa0": [p[0] for p in points[:n]]}
        arr = np.array(vals).reshape(n, len(idx))
        cols["N"] = arr.max(axis=1) if n else []
        for j, c in enumerate(sw.candidates):
            cols[f"N[{c}]"] = arr[:, j]
        return ResultTable.from_columns(cols, prov)

    _first_failure(res, [f"gamma0={g:g}, kappa0={k:g}" for k, g in points], build)
    return build([v for _, v in res])


def wigner_study(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    state, r = cfg.inputs[0], cfg.r[0]
    w = cfg.wigner
    chans = _channels(cfg)

    def one(item):
        tc = _teleport_cfg(cfg, state, r, item[1], wigner_times=w.times, wigner_half_width=w.half_width,
                           wigner_points=w.points)
        return run_teleportation(tc)

    res = _pmap(one, chans, threads)
    prov = _provenance(cfg, input=state.label, r=r, quadrature=_grid_note(cfg, state),
                       wigner_state="outcome-averaged corrected output", **_dims_note(cfg), **_time_note(cfg))

    def build(vals):
        blocks = []
        for (suffix, _), v in zip(chans, vals):
            x, p = np.meshgrid(v.wigner_axis, v.wigner_axis, indexing="ij")
            for t in w.times:
                e = v.ellipses[t]
                n = x.size
                blocks.append(np.column_stack([
                    np.full(n, 1.0 if suffix else 0.0), np.full(n, t), x.ravel(), p.ravel(),
                    v.wigner[t].ravel(), np.full(n, e.d), np.full(n, e.h), np.full(n, e.w),
                    np.full(n, e.flattening), np.full(n, e.angle_deg),
                ]))
        cols = ["markovian", "t", "x", "p", "W", "d", "h", "w", "flattening", "angle_deg"]
        rows = np.vstack(blocks) if blocks else np.zeros((0, len(cols)))
        return ResultTable(cols, rows, prov)

    _first_failure(res, [c[0] or "channel" for c in chans], build)
    return build([v for _, v in res])


def _short_label(state: InputState) -> str:
    if state.kind == "cat":
        if math.isclose(state.theta % (2 * math.pi), 0.0, abs_tol=1e-12):
            return "even_cat"
        if math.isclose(state.theta % (2 * math.pi), math.pi, abs_tol=1e-12):
            return "odd_cat"
        return f"cat(theta_c={state.theta:g})"
    return state.kind


def compare_inputs_study(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    names = []
    for s in cfg.inputs:
        base = _short_label(s)
        name = base
        i = 2
        while name in names:
            name = f"{base}_{i}"
            i += 1
        names.append(name)
    jobs = list(zip(cfg.inputs, cfg.r))
    res = _pmap(lambda job: run_teleportation(_teleport_cfg(cfg, job[0], job[1], cfg.channel)), jobs, threads)
    prov = _provenance(
        cfg,
        inputs={n: {"state": s.label, "r": r, "quadrature": _grid_note(cfg, s)} for n, (s, r) in zip(names, jobs)},
        **_dims_note(cfg),
        **_time_note(cfg),
    )

    def build(vals):
        cols = {"t": cfg.times.times}
        for n, v in zip(names, vals):
            cols[f"F_r[{n}]"] = v.relative.values
        for n, v in zip(names, vals):
            cols[f"F[{n}]"] = v.fidelity.values
        return ResultTable.from_columns(cols, prov)

    _first_failure(res, names, build)
    return build([v for _, v in res])


def psd_study(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    p = cfg.psd
    w = np.linspace(p.omega_min, p.omega_max, p.points)
    return ResultTable.from_columns({"omega": w, "S": psd(cfg.channel, w)}, _provenance(cfg))


STUDY_RUNNERS = {
    "entanglement": entanglement_study,
    "fidelity": fidelity_study,
    "blp_surface": blp_surface_study,
    "wigner": wigner_study,
    "compare_inputs": compare_inputs_study,
    "psd": psd_study,
}


def run_study(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    return STUDY_RUNNERS[cfg.study](cfg, max(1, int(threads)))
