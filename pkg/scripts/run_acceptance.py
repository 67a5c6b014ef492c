from __future__ import annotations

import math
import sys
import traceback
from pathlib import Path
from typing import Callable, List, Tuple

import numpy as np

# ✅ src 를 PYTHONPATH 에 추가 (설치 없이 실행)
ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from floquet_purification.backend.services import bethe_solver as bethe
from floquet_purification.backend.services import dense_evolution as ed
from floquet_purification.backend.services import experiment_service as svc
from floquet_purification.backend.services import free_fermion as ff
from floquet_purification.backend.services.model_core import HALF_PI, CircuitParams, derive_params
from floquet_purification.backend.services.scaling_fit import fit_log_law

T_WEAK = math.pi / (2 * math.cos(0.5))


def _symmetric_unimodular() -> str:
    worst = 0.0
    for gamma, T in [(0.5, 1.0), (1.0, 0.9), (0.3, 3.0)]:
        spec = ed.full_spectrum(ed.build_block_operator(CircuitParams(L=10, gamma=gamma, T=T)))
        worst = max(worst, float(np.max(np.abs(np.abs(spec.eigenvalues) - 1))))
    assert worst < 1e-8, worst
    return f"max ||λ|-1| = {worst:.2e}"


def _mixed_purity() -> str:
    trace = ed.evolve_purity(ed.build_block_operator(CircuitParams(L=10, gamma=0.5, T=1.0)), 500)
    top = max(trace.purity)
    assert top <= 0.5, top
    return f"max purity = {top:.4f}"


def _weak_scaling() -> str:
    steps = {}
    for L in (6, 8, 10, 12):
        trace = ed.evolve_purity(ed.build_block_operator(CircuitParams(L=L, gamma=0.5, T=T_WEAK)), 40 * L)
        steps[L] = ed.steps_to_purity(trace)
    assert all(steps[a] < steps[b] for a, b in [(6, 8), (8, 10), (10, 12)]), steps
    ratio = steps[12] / steps[6]
    assert 1.5 <= ratio <= 3.0, ratio
    return f"steps={steps}, ratio={ratio:.2f}"


def _gaussian_census() -> str:
    out = []
    for T in (1.5, 3.0):
        p = CircuitParams(L=12, gamma=HALF_PI, T=T)
        spec = ed.full_spectrum(ed.build_block_operator(p))
        census = ff.ff_max_modulus_census(12, derive_params(p).beta)
        assert spec.gap < 1e-8 and spec.degeneracy_count > 1
        assert spec.degeneracy_count == census.degeneracy, (spec.degeneracy_count, census.degeneracy)
        out.append(f"T={T}: {census.degeneracy}")
    return ", ".join(out)


def _strong_purification() -> str:
    steps = []
    for L in (8, 10, 12):
        p = CircuitParams(L=L, gamma=0.5, T=T_WEAK, delta=0.2)
        trace = ed.evolve_purity(ed.build_block_operator(p, ed.Variant.SANDWICHED), 400)
        steps.append(ed.steps_to_purity(trace))
    spread = (max(steps) - min(steps)) / max(steps)
    assert spread < 0.3, steps

    p = CircuitParams(L=8, gamma=0.5, T=1.0, delta_prime=0.2)
    overlap = ed.ferromagnetic_overlap(ed.build_block_operator(p, ed.Variant.TILTED), 400)[-1]
    assert overlap > 0.99, overlap
    return f"sandwiched steps={steps}, tilted overlap={overlap:.4f}"


def _bethe_oracle() -> str:
    alpha = bethe.bethe_alpha(0.5, 1.5)
    worst = 0.0
    for L in (8, 10, 12):
        spec = ed.full_spectrum(ed.build_block_operator(CircuitParams(L=L, gamma=0.5, T=1.5)))
        top2 = spec.eigenvalues[:2]
        for M in (L // 2, L // 2 - 1):
            st = bethe.solve_packed(0.5, 1.5, L, M)
            lam = bethe.eigenvalue_from_roots(st, 0.5, alpha)
            worst = max(worst, float(np.min(np.abs(top2 - lam)) / abs(lam)))
    assert worst < 1e-8, worst
    return f"max relative deviation = {worst:.2e}"


def _perturbation() -> str:
    L, eps, beta = 8, 1e-3, derive_params(CircuitParams(L=8, gamma=HALF_PI, T=1.5)).beta.real
    top = ff.ff_perturbative_top(L, beta)
    hi = ed.full_spectrum(ed.build_block_operator(CircuitParams(L=L, gamma=HALF_PI - eps, T=1.5)))
    base = ed.full_spectrum(ed.build_block_operator(CircuitParams(L=L, gamma=HALF_PI, T=1.5)))
    fd = (math.log(abs(hi.eigenvalues[0])) - math.log(abs(base.eigenvalues[0]))) / eps
    rel = abs(fd - top.slope) / max(abs(top.slope), 1e-12)
    assert rel < 1e-2, (fd, top.slope)

    beta_big = derive_params(CircuitParams(L=2048, gamma=HALF_PI, T=1.5)).beta.real
    mu, diff = 0.5, 0.0
    for sign in (1, -1):
        corrected = ff.f_pm(mu, sign, 2048, beta_big, "edge_corrected")
        diff = max(diff, abs(corrected - ff.f_pm(mu, sign, 2048, beta_big, "integral")))
    assert diff < 1e-3, diff
    return f"slope rel err = {rel:.2e}, f± edge-corrected vs integral = {diff:.2e}"


def _gap_scaling() -> str:
    fit = ff.gap_scaling_epsilon([8, 10, 12], [0.005, 0.01, 0.02], T=1.5)
    p, q = fit.params["p"], fit.params["q"]
    assert 0.9 <= p <= 1.1 and 0.85 <= -q <= 1.15, fit.params
    assert fit.params["max_rel_residual"] < 0.1, fit.params
    return (
        f"c={fit.params['c']:.4f}±{fit.stderr['c']:.1e}, rel residual={fit.params['max_rel_residual']:.2e}, "
        f"eps exponent={p:.3f}, L exponent={q:.3f}"
    )


def _nu() -> str:
    out = []
    for gamma, target in [(0.523599, 0.615), (0.785398, 0.685), (1.0472, 0.762)]:
        fit, _ = bethe.fit_nu(gamma, bethe.Edge.UPPER, L_start=48, L_end=288)
        nu = fit.params["nu"]
        assert abs(nu - target) / target < 0.07, (gamma, nu)
        assert abs(nu - bethe.nu_analytic(gamma)) / bethe.nu_analytic(gamma) < 0.10
        out.append(f"γ={gamma}: ν={nu:.3f}")
    return ", ".join(out)


def _root_structure() -> str:
    out = []
    for gamma in (1.04, 0.52):
        st = bethe.solve_family(gamma, 1.5, 48, 24)
        dev = bethe.reflection_deviation(st)
        assert dev < 1e-8, (gamma, dev)
        out.append(f"γ={gamma}: reflection dev={dev:.1e}")

    st = bethe.solve_family(HALF_PI, 1.5, 48, 24)
    beta = derive_params(CircuitParams(L=48, gamma=HALF_PI, T=1.5)).beta
    closed = ff.ff_roots(48, beta, 0)
    lams = np.array([r.lam for r in closed])
    kinds = {ff.RootKind.TYPE_I: 0, ff.RootKind.TYPE_II: 0}
    worst = 0.0
    for lam in st.roots:
        d = lam - lams
        d = d - 1j * math.pi * np.round(d.imag / math.pi)
        j = int(np.argmin(np.abs(d)))
        worst = max(worst, float(abs(d[j])))
        kinds[closed[j].kind] += 1
    assert worst < 1e-10, worst
    assert kinds[ff.RootKind.TYPE_I] > 0 and kinds[ff.RootKind.TYPE_II] > 0, kinds
    out.append(f"γ=π/2: closed-form dev={worst:.1e}, type i/ii = {kinds[ff.RootKind.TYPE_I]}/{kinds[ff.RootKind.TYPE_II]}")
    return ", ".join(out)


def _entropy_log_law() -> str:
    Ls = [8, 10, 12, 14, 16]
    means = []
    for L in Ls:
        op = ed.circuit_operator(CircuitParams(L=L, gamma=1.0, T=1.5))
        vals = []
        for seed in range(8):
            series = ed.trajectory_entropy(op, n_up=L // 2 + 1, seed=seed, n_steps=40 * L, record_every=L)
            late = [s for n, s in series if n >= 30 * L]
            vals.append(float(np.mean(late)))
        means.append(float(np.mean(vals)))
    assert all(m > 0 for m in means) and all(a < b for a, b in zip(means, means[1:])), means
    fit = fit_log_law(Ls, means)
    assert 0.1 <= fit.params["a"] <= 0.4, fit.params
    return f"S = {fit.params['a']:.3f} log L + {fit.params['b']:.3f}"


def _xxz_limit() -> str:
    reports = bethe.xxz_approach(0.5, 8, (0.05, 0.02, 0.01))
    residuals = [r.residual for r in reports]
    assert residuals[0] > residuals[1] > residuals[2], residuals
    return "xxz residuals " + ", ".join(f"{r:.2e}" for r in residuals)


def _symmetry() -> str:
    rng = np.random.default_rng(0)
    worst_plain, best_tilted, worst_pairing = 0.0, math.inf, 0.0
    for _ in range(5):
        gamma, T = float(rng.uniform(0.1, 1.4)), float(rng.uniform(0.2, 3.0))
        worst_plain = max(worst_plain, svc.antiunitary_deviation(6, gamma, T))
        best_tilted = min(best_tilted, svc.antiunitary_deviation(6, gamma, T, delta_prime=0.2))
        for variant, extra in ((ed.Variant.PLAIN, {}), (ed.Variant.SANDWICHED, {"delta": 0.2})):
            op = ed.build_block_operator(CircuitParams(L=6, gamma=gamma, T=T, **extra), variant)
            worst_pairing = max(worst_pairing, ed.spectral_pairing_deviation(ed.full_spectrum(op)))
    assert worst_plain < 1e-10 and best_tilted > 0.1, (worst_plain, best_tilted)
    assert worst_pairing < 1e-8, worst_pairing
    return f"plain={worst_plain:.1e}, tilted>={best_tilted:.2f}, pairing={worst_pairing:.1e}"


CHECKS: List[Tuple[str, Callable[[], str]]] = [
    ("symmetric unimodular", _symmetric_unimodular),
    ("mixed purity", _mixed_purity),
    ("weak purification scaling", _weak_scaling),
    ("gaussian census", _gaussian_census),
    ("strong purification", _strong_purification),
    ("bethe vs ED", _bethe_oracle),
    ("first-order perturbation", _perturbation),
    ("gap ~ eps/L", _gap_scaling),
    ("critical exponent nu", _nu),
    ("root structure", _root_structure),
    ("entropy log law", _entropy_log_law),
    ("xxz limit", _xxz_limit),
    ("symmetry identities", _symmetry),
]


def main(selected: List[str]) -> int:
    failed = 0
    for name, check in CHECKS:
        if selected and not any(s in name for s in selected):
            continue
        print(f"[JOB] {name}")
        try:
            print(f"[OK] {name}: {check()}")
        except Exception:
            failed += 1
            print(f"[FAILED] {name}")
            print(traceback.format_exc())
    print(f"[JOB] done. failed={failed}")
    return 1 if failed else 0


if __name__ == "__main__":
    try:
        sys.exit(main(sys.argv[1:]))
    except Exception:
        print("[FATAL] acceptance run failed")
        print(traceback.format_exc())
        raise
