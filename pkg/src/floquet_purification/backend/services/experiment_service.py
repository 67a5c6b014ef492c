# src/floquet_purification/backend/services/experiment_service.py
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import toml
from tqdm import tqdm

from floquet_purification.backend.infra.settings import get_settings
from floquet_purification.backend.services import bethe_solver as bethe
from floquet_purification.backend.services import data_contracts as dc
from floquet_purification.backend.services import dense_evolution as ed
from floquet_purification.backend.services import free_fermion as ff
from floquet_purification.backend.services.errors import ParameterError
from floquet_purification.backend.services.model_core import (
    HALF_PI,
    CircuitParams,
    Region,
    derive_params,
    phase_label,
    symmetry_ops,
)
from floquet_purification.backend.services.result_frame import ResultTable, make_table
from floquet_purification.backend.services.scaling_fit import fit_log_law

"""
experiment_service.py

[역할]
- RunConfig (설정 파일 + flag 병합, 검증)
- 명령별 실험 실행 → ResultTable
- sweep 점은 worker pool 로 나눠 돌리고 입력 순서대로 병합

[원칙]
- 출력(print)은 하지 않는다. 진행 표시는 tqdm(stderr)만.
"""

LATE_FRACTION = 0.25
DEFAULT_STEPS_PER_SITE = 40


@dataclass
class RunConfig:
    command: str
    gammas: List[float] = field(default_factory=lambda: [0.5])
    Ts: List[float] = field(default_factory=lambda: [1.0])
    Ls: List[int] = field(default_factory=lambda: [8])
    delta: float = 0.0
    delta_prime: float = 0.0
    variant: Optional[str] = None
    steps: Optional[int] = None
    seeds: List[int] = field(default_factory=lambda: [0])
    n_up: Optional[int] = None
    epsilons: List[float] = field(default_factory=list)
    M: Optional[int] = None
    edge: str = "upper"
    offsets: List[float] = field(default_factory=lambda: list(bethe.NU_OFFSETS))
    shift: float = 0.5
    out: Optional[str] = None
    fmt: str = "csv"
    workers: Optional[int] = None
    progress: bool = True

    def resolved_variant(self) -> ed.Variant:
        if self.variant:
            try:
                return ed.Variant(self.variant)
            except ValueError:
                raise ParameterError(f"unknown variant: {self.variant!r}")
        if self.delta_prime > 0:
            return ed.Variant.TILTED
        if self.delta > 0:
            return ed.Variant.SANDWICHED
        return ed.Variant.PLAIN

    def echo(self) -> Dict[str, Any]:
        return asdict(self)


_LIST_KEYS = {"gammas": float, "Ts": float, "Ls": int, "seeds": int, "epsilons": float, "offsets": float}
_ALIASES = {"gamma": "gammas", "T": "Ts", "L": "Ls", "seed": "seeds", "epsilon": "epsilons", "format": "fmt"}


def load_run_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """flat TOML key-value 파일 → dict (값 검증은 build_run_config 에서)."""
    data = toml.load(str(path))
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ParameterError(f"config file must be flat key = value pairs, got tables {nested}")
    return data


def build_run_config(command: str, file_values: Optional[Dict[str, Any]] = None, **flags: Any) -> RunConfig:
    """
    ✅ 설정 병합: 파일 값 < flag 값 (None 인 flag 는 무시)
    - gamma/T/L/seed/epsilon 단수 키는 목록 키로 흡수
    """
    merged: Dict[str, Any] = {}
    for source in (file_values or {}, flags):
        for key, value in source.items():
            if value is None:
                continue
            merged[_ALIASES.get(key, key)] = value

    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(merged) - known - {"command"})
    if unknown:
        raise ParameterError(f"unknown config keys: {unknown}")

    for key, cast in _LIST_KEYS.items():
        if key in merged:
            raw = merged[key]
            items = raw if isinstance(raw, (list, tuple)) else [raw]
            try:
                merged[key] = [cast(v) for v in items]
            except (TypeError, ValueError):
                raise ParameterError(f"{key} must be a list of {cast.__name__}, got {raw!r}")

    merged.pop("command", None)
    cfg = RunConfig(command=command, **merged)
    validate_run_config(cfg)
    return cfg


def validate_run_config(cfg: RunConfig) -> None:
    """grid 의 모든 점을 CircuitParams 로 미리 검증 (계산 전)."""
    if cfg.fmt not in ("csv", "json"):
        raise ParameterError(f"format must be csv or json, got {cfg.fmt!r}")
    if cfg.steps is not None and cfg.steps < 1:
        raise ParameterError(f"steps must be >= 1, got {cfg.steps}")
    if not cfg.gammas or not cfg.Ts or not cfg.Ls:
        raise ParameterError("gamma, T and L grids must be non-empty")
    cfg.resolved_variant()
    for L in cfg.Ls:
        for gamma in cfg.gammas:
            for T in cfg.Ts:
                CircuitParams(L=L, gamma=gamma, T=T, delta=cfg.delta, delta_prime=cfg.delta_prime)


# =========================
# Worker pool
# =========================
def _run_jobs(fn: Callable, jobs: Sequence[tuple], cfg: RunConfig, desc: str) -> List[Any]:
    """입력 순서대로 결과 병합. workers ≤ 1 이면 순차 실행."""
    workers = cfg.workers if cfg.workers is not None else get_settings().workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in tqdm(jobs, desc=desc, disable=not cfg.progress)]
    with Pool(processes=min(workers, len(jobs))) as pool:
        handles = [pool.apply_async(fn, job) for job in jobs]
        return [h.get() for h in tqdm(handles, desc=desc, disable=not cfg.progress)]


def _grid(cfg: RunConfig) -> List[tuple]:
    return [(L, g, T) for L in cfg.Ls for g in cfg.gammas for T in cfg.Ts]


# =========================
# phase-diagram
# =========================
def cmd_phase_diagram(cfg: RunConfig) -> ResultTable:
    rows = []
    L = cfg.Ls[0]
    for gamma in cfg.gammas:
        for T in cfg.Ts:
            p = CircuitParams(L=L, gamma=gamma, T=T, delta=cfg.delta, delta_prime=cfg.delta_prime)
            d = derive_params(p)
            rows.append({
                "gamma": gamma,
                "T": T,
                "delta": cfg.delta,
                "delta_prime": cfg.delta_prime,
                "region": d.region.value,
                "phase": phase_label(p, d),
                "alpha_re": d.alpha.real,
                "alpha_im": d.alpha.imag,
                "t_c_minus": d.t_c_minus,
                "t_c_plus": d.t_c_plus,
                "period": d.period,
            })
    return make_table("phase-diagram", dc.normalize_phase_df(pd.DataFrame(rows)), cfg.echo())


# =========================
# purity / spectrum / gap
# =========================
def _purity_job(L, gamma, T, delta, delta_prime, variant, steps):
    p = CircuitParams(L=L, gamma=gamma, T=T, delta=delta, delta_prime=delta_prime)
    op = ed.build_block_operator(p, ed.Variant(variant))
    trace = ed.evolve_purity(op, steps)
    return [
        {"L": L, "gamma": gamma, "T": T, "variant": variant, "N": n, "purity": pur, "log_norm": ln}
        for n, pur, ln in trace.steps
    ]


def cmd_purity(cfg: RunConfig) -> ResultTable:
    variant = cfg.resolved_variant().value
    steps = cfg.steps or 400
    jobs = [(L, g, T, cfg.delta, cfg.delta_prime, variant, steps) for L, g, T in _grid(cfg)]
    chunks = _run_jobs(_purity_job, jobs, cfg, "purity")
    rows = [r for chunk in chunks for r in chunk]
    return make_table("purity", dc.normalize_purity_df(pd.DataFrame(rows)), cfg.echo())


def _spectrum_job(L, gamma, T, delta, delta_prime, variant):
    p = CircuitParams(L=L, gamma=gamma, T=T, delta=delta, delta_prime=delta_prime)
    return ed.full_spectrum(ed.build_block_operator(p, ed.Variant(variant)))


def cmd_spectrum(cfg: RunConfig) -> ResultTable:
    variant = cfg.resolved_variant().value
    jobs = [(L, g, T, cfg.delta, cfg.delta_prime, variant) for L, g, T in _grid(cfg)]
    specs = _run_jobs(_spectrum_job, jobs, cfg, "spectrum")
    rows = []
    for (L, g, T, *_), spec in zip(jobs, specs):
        for rank, (ev, n_up) in enumerate(zip(spec.eigenvalues, spec.sectors)):
            rows.append({
                "L": L, "gamma": g, "T": T, "variant": variant, "rank": rank, "n_up": int(n_up),
                "re": ev.real, "im": ev.imag, "modulus": abs(ev),
            })
    return make_table("spectrum", dc.normalize_spectrum_df(pd.DataFrame(rows)), cfg.echo())


def _gap_job(L, gamma, T, delta, delta_prime, variant):
    p = CircuitParams(L=L, gamma=gamma, T=T, delta=delta, delta_prime=delta_prime)
    spec = ed.full_spectrum(ed.build_block_operator(p, ed.Variant(variant)))
    census = pd.NA
    d = derive_params(p)
    if p.is_gaussian and variant == ed.Variant.PLAIN.value and d.region is not Region.CRITICAL:
        census = ff.ff_max_modulus_census(L, d.beta).degeneracy
    return {
        "L": L, "gamma": gamma, "T": T, "epsilon": HALF_PI - gamma, "variant": variant,
        "gap": spec.gap, "degeneracy_count": spec.degeneracy_count,
        "purification_time_est": ed.purification_time_from_gap(spec.gap),
        "census_degeneracy": census,
    }


def cmd_gap(cfg: RunConfig) -> ResultTable:
    """
    - epsilons 미지정: grid 점마다 gap 요약
    - epsilons 지정: γ = π/2 − ε 로 Δ ∼ ε/L scaling fit (provenance 에 계수)
    """
    variant = cfg.resolved_variant().value
    if not cfg.epsilons:
        jobs = [(L, g, T, cfg.delta, cfg.delta_prime, variant) for L, g, T in _grid(cfg)]
        rows = _run_jobs(_gap_job, jobs, cfg, "gap")
        return make_table("gap", dc.normalize_gap_df(pd.DataFrame(rows)), cfg.echo())

    T = cfg.Ts[0]
    fit = ff.gap_scaling_epsilon(cfg.Ls, cfg.epsilons, T)
    rows = [
        {
            "L": int(L), "gamma": HALF_PI - e, "T": T, "epsilon": e, "variant": variant,
            "gap": g, "degeneracy_count": pd.NA,
            "purification_time_est": ed.purification_time_from_gap(g), "census_degeneracy": pd.NA,
        }
        for L, e, g in zip(fit.data["L"], fit.data["eps"], fit.data["gap"])
    ]
    table = make_table("gap", dc.normalize_gap_df(pd.DataFrame(rows)), cfg.echo())
    fit_rows = [{"parameter": k, "value": v, "stderr": fit.stderr.get(k, math.nan)} for k, v in fit.params.items()]
    table.extra.append(make_table("fit", dc.normalize_fit_df(pd.DataFrame(fit_rows)), cfg.echo()))
    return table


# =========================
# entropy
# =========================
def _entropy_job(L, gamma, T, delta, delta_prime, variant, n_up, seed, steps):
    p = CircuitParams(L=L, gamma=gamma, T=T, delta=delta, delta_prime=delta_prime)
    op = ed.circuit_operator(p, ed.Variant(variant))
    series = ed.trajectory_entropy(op, n_up=n_up, seed=seed, n_steps=steps)
    values = np.array([s for n, s in series if n >= (1 - LATE_FRACTION) * steps])
    return {
        "L": L, "gamma": gamma, "T": T, "seed": seed, "n_up": n_up, "steps": steps,
        "entropy_late_mean": float(values.mean()), "entropy_late_std": float(values.std()),
    }


def cmd_entropy(cfg: RunConfig) -> ResultTable:
    """
    late-time 은 마지막 25% step 평균.
    steps 미지정 시 40·L (정화 시간의 수 배가 되도록).
    L 이 3개 이상이면 S = a·log L + b 동반 표를 붙인다.
    """
    variant = cfg.resolved_variant().value
    gamma, T = cfg.gammas[0], cfg.Ts[0]
    jobs = []
    for L in cfg.Ls:
        n_up = cfg.n_up if cfg.n_up is not None else L // 2 + 1
        steps = cfg.steps or DEFAULT_STEPS_PER_SITE * L
        for seed in cfg.seeds:
            jobs.append((L, gamma, T, cfg.delta, cfg.delta_prime, variant, n_up, seed, steps))
    rows = _run_jobs(_entropy_job, jobs, cfg, "entropy")
    frame = dc.normalize_entropy_df(pd.DataFrame(rows))
    table = make_table("entropy", frame, cfg.echo())

    if frame["L"].nunique() >= 3:
        means = frame.groupby("L")["entropy_late_mean"].mean()
        fit = fit_log_law(means.index.astype(float), means.values)
        fit_rows = [{"parameter": k, "value": v, "stderr": fit.stderr[k]} for k, v in fit.params.items()]
        table.extra.append(make_table("fit", dc.normalize_fit_df(pd.DataFrame(fit_rows)), cfg.echo()))
    return table


# =========================
# bethe
# =========================
def _roots_rows(gamma: float, T: float, state: bethe.BetheState) -> List[Dict[str, Any]]:
    return [
        {
            "gamma": gamma, "T": T, "L": state.L, "M": state.M, "index": i,
            "quantum_number": q, "re_lambda": lam.real, "im_lambda": lam.imag,
        }
        for i, (q, lam) in enumerate(zip(state.quantum_numbers, bethe._arc_order(state.roots)))
    ]


def _solve_job(gamma, T, L, M, shift):
    return bethe.solve_family(gamma, T, L, M, shift=shift)


def _path_job(gamma, T, L_start, L_end, shift):
    return bethe.run_continuation(gamma, T, L_start, L_end, shift=shift)


def _nu_job(gamma, edge, offsets, L_start, L_end, shift):
    return bethe.fit_nu(gamma, bethe.Edge(edge), offsets, L_start, L_end, shift)


def cmd_bethe(cfg: RunConfig, mode: str) -> ResultTable:
    """
    - solve: root dump (Re λ, Im λ)
    - tau: t_L, τ_L vs L
    - extrapolate: τ_∞
    - fit-nu: ν(γ) 와 offset 별 τ_∞
    """
    if mode == "solve":
        jobs = [(g, T, L, cfg.M if cfg.M is not None else L // 2, cfg.shift) for L, g, T in _grid(cfg)]
        states = _run_jobs(_solve_job, jobs, cfg, "bethe solve")
        rows = [r for (g, T, *_), st in zip(jobs, states) for r in _roots_rows(g, T, st)]
        return make_table("bethe-solve", dc.normalize_root_df(pd.DataFrame(rows)), cfg.echo())

    if mode in ("tau", "extrapolate"):
        L_start, L_end = min(cfg.Ls), max(cfg.Ls)
        jobs = [(g, T, L_start, L_end, cfg.shift) for g in cfg.gammas for T in cfg.Ts]
        paths = _run_jobs(_path_job, jobs, cfg, f"bethe {mode}")
        if mode == "tau":
            rows = []
            for path in paths:
                for g_state, e_state, t_L, swapped in zip(path.ground, path.excited, path.t_L, path.swapped):
                    rows.append({
                        "gamma": path.gamma, "T": path.T, "L": g_state.L,
                        "log_ratio": g_state.log_modulus - e_state.log_modulus,
                        "t_L": t_L, "tau_L": t_L / g_state.L, "swapped": swapped,
                    })
            return make_table("bethe-tau", dc.normalize_tau_df(pd.DataFrame(rows)), cfg.echo())

        rows = []
        for path in paths:
            fit = bethe.extrapolate_tau(path)
            rows.append({
                "gamma": path.gamma, "T": path.T, "n_sizes": fit.n_points,
                "a": fit.params["a"], "a_err": fit.stderr["a"],
                "b": fit.params["b"], "b_err": fit.stderr["b"],
                "tau_inf": fit.params["tau_inf"], "tau_inf_err": fit.stderr["tau_inf"],
            })
        return make_table("bethe-extrapolate", dc.normalize_extrapolation_df(pd.DataFrame(rows)), cfg.echo())

    if mode == "fit-nu":
        L_start, L_end = min(cfg.Ls), max(cfg.Ls)
        jobs = [(g, cfg.edge, tuple(cfg.offsets), L_start, L_end, cfg.shift) for g in cfg.gammas]
        results = _run_jobs(_nu_job, jobs, cfg, "bethe fit-nu")
        rows = []
        for g, (fit, per_offset) in zip(cfg.gammas, results):
            for r in per_offset:
                rows.append(dict(
                    r,
                    gamma=g,
                    edge=cfg.edge,
                    nu=fit.params["nu"],
                    nu_err=fit.stderr["nu"],
                    nu_analytic=bethe.nu_analytic(g),
                ))
        return make_table("bethe-fit-nu", dc.normalize_nu_df(pd.DataFrame(rows)), cfg.echo())

    raise ParameterError(f"unknown bethe mode: {mode!r}")


# =========================
# free fermion
# =========================
def _gaussian_beta(L: int, T: float) -> complex:
    d = derive_params(CircuitParams(L=L, gamma=HALF_PI, T=T))
    if d.region is Region.CRITICAL:
        raise ParameterError(f"T={T} is critical on the Gaussian line")
    return d.beta


def cmd_ff(cfg: RunConfig, mode: str) -> ResultTable:
    """γ = π/2 전용. gamma grid 는 무시하고 L × T 를 돈다."""
    if mode == "census":
        rows = []
        for L in cfg.Ls:
            for T in cfg.Ts:
                beta = _gaussian_beta(L, T)
                c = ff.ff_max_modulus_census(L, beta)
                rows.append({
                    "L": L, "T": T, "beta": beta.real, "max_modulus": c.max_modulus,
                    "degeneracy": c.degeneracy,
                    "degeneracy_integer_grid": c.grid_counts.get("integer"),
                    "degeneracy_half_integer_grid": c.grid_counts.get("half-integer"),
                    "n_type_ii": c.n_type_ii,
                })
        return make_table("ff-census", dc.normalize_census_df(pd.DataFrame(rows)), cfg.echo())

    if mode == "perturb":
        rows = []
        for L in cfg.Ls:
            for T in cfg.Ts:
                beta = _gaussian_beta(L, T)
                if abs(beta.imag) > 1e-12:
                    raise ParameterError(f"ff perturb needs the broken phase (T > 1), got T={T}")
                b = beta.real
                top = ff.ff_perturbative_top(L, b)
                chosen = {(r.k, r.sign) for r in top.selection.roots}
                for integer_grid in (True, False):
                    for r in ff.ff_roots(L, b, 1 if integer_grid else 0):
                        if r.kind is not ff.RootKind.TYPE_II:
                            continue
                        sign = 1 if r.lam.imag > 0 else -1
                        mu = r.lam.real
                        rows.append({
                            "L": L, "T": T, "beta": b, "k": r.k, "sign": sign,
                            "re_lambda": mu, "im_lambda": r.lam.imag,
                            "f_sum": ff.f_pm(mu, sign, L, b, "finite_sum", integer_grid),
                            "f_edge_corrected": ff.f_pm(mu, sign, L, b, "edge_corrected", integer_grid),
                            "f_integral": ff.f_pm(mu, sign, L, b, "integral", integer_grid),
                            "in_top": (r.k, r.sign) in chosen and top.selection.integer_grid == integer_grid,
                        })
        return make_table("ff-perturb", dc.normalize_perturb_df(pd.DataFrame(rows)), cfg.echo())

    raise ParameterError(f"unknown ff mode: {mode!r}")


# =========================
# symmetry
# =========================
def antiunitary_deviation(L: int, gamma: float, T: float, delta: float = 0.0, delta_prime: float = 0.0) -> float:
    """variant 를 δ, δ' 로 고른 뒤 ‖A U − U A‖ (δ' > 0 이면 tilted, δ > 0 이면 sandwiched)."""
    p = CircuitParams(L=L, gamma=gamma, T=T, delta=delta, delta_prime=delta_prime)
    variant = ed.Variant.TILTED if delta_prime > 0 else (ed.Variant.SANDWICHED if delta > 0 else ed.Variant.PLAIN)
    return ed.check_antiunitary(ed.build_block_operator(p, variant), symmetry_ops(L))


COMMANDS = {
    "phase-diagram": cmd_phase_diagram,
    "purity": cmd_purity,
    "spectrum": cmd_spectrum,
    "gap": cmd_gap,
    "entropy": cmd_entropy,
}
