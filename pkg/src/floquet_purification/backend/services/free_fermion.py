# src/floquet_purification/backend/services/free_fermion.py
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, special

from floquet_purification.backend.infra.settings import Settings
from floquet_purification.backend.services.dense_evolution import build_block_operator, full_spectrum
from floquet_purification.backend.services.errors import (
    FitError,
    ParameterError,
    SingularConfigurationError,
)
from floquet_purification.backend.services.model_core import HALF_PI, CircuitParams
from floquet_purification.backend.services.scaling_fit import ScalingFit, fit_two_variable_power_law

"""
free_fermion.py

[역할]
- γ = π/2 (Gaussian line) 의 closed-form root, eigenvalue, 최대 modulus census
- ε = π/2 − γ 1차 섭동: ∂_ε log|Λ|, f±(μ), 섭동 top selection
- ED gap 의 Δ ∼ ε/L scaling fit

[규약]
- momentum k ∈ (−L/4, L/4], M 홀수 ↔ 정수 grid, M 짝수 ↔ 반정수 grid
- k = L/4 (tan = ∞) 는 Re λ = ±∞ 인 neutral mode 2개로만 센다 (ff_roots 에는 없음)
- root 는 Im λ ∈ (−π/2, π/2] strip 에 둔다
"""

LOG_TIE_TOL = 1e-9
ENUMERATE_MAX_MODES = 16
QUAD_EPSREL = 1e-9


class RootKind(str, Enum):
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"


@dataclass(frozen=True)
class FreeFermionRoot:
    k: float
    sign: int           # +1 / −1
    lam: complex
    kind: RootKind


@dataclass(frozen=True)
class RootSelection:
    roots: Tuple[FreeFermionRoot, ...]
    integer_grid: bool
    n_edge: int = 0     # 선택된 k = L/4 neutral mode 수

    @property
    def M(self) -> int:
        return len(self.roots) + self.n_edge

    @property
    def parity_consistent(self) -> bool:
        return (self.M % 2 == 1) == self.integer_grid


@dataclass(frozen=True)
class Census:
    max_modulus: float
    degeneracy: int
    grid_counts: Dict[str, int] = field(default_factory=dict)
    n_type_ii: int = 0


@dataclass(frozen=True)
class PerturbativeTop:
    selection: RootSelection
    log_modulus: float      # ε = 0 에서 log|Λ|
    slope: float            # ∂_ε log|Λ|


# =========================
# Grids and roots
# =========================
def _integer_grid(m_parity: int) -> bool:
    return int(m_parity) % 2 == 1


def momentum_grid(L: int, integer_grid: bool) -> Tuple[np.ndarray, bool]:
    """(내부 k 배열, k = L/4 포함 여부). k ∈ (−L/4, L/4]."""
    if L < 4 or L % 2:
        raise ParameterError(f"L must be even and >= 4, got {L}")
    offset = 0.0 if integer_grid else 0.5
    quarter = L / 4
    start = math.floor(-quarter - offset) + 1 + offset
    ks = np.arange(start, quarter + 1e-9, 1.0)
    ks = ks[ks > -quarter + 1e-9]
    has_edge = bool(np.any(np.abs(ks - quarter) < 1e-9))
    return ks[np.abs(ks - quarter) > 1e-9], has_edge


def _check_beta(beta: complex) -> complex:
    beta = complex(beta)
    if not (np.isfinite(beta.real) and np.isfinite(beta.imag)):
        raise ParameterError(f"beta must be finite, got {beta}")
    if abs(beta) < 1e-14:
        raise ParameterError("beta = 0 is singular (tanh beta = 0)")
    return beta


def ff_roots(L: int, beta: complex, m_parity: int) -> List[FreeFermionRoot]:
    """
    e^{2λ} = −i t sinhβ ± sqrt(1 − t² sinh²β), t = tan(2πk/L)
    - type (i): t² sinh²β < 1 → λ 순허수
    - type (ii): 반대 → Im λ = ±π/4
    """
    beta = _check_beta(beta)
    ks, _ = momentum_grid(L, _integer_grid(m_parity))
    s = np.sinh(beta)
    out: List[FreeFermionRoot] = []
    for k in ks:
        t = math.tan(2 * math.pi * k / L)
        ts2 = (t * s) ** 2
        disc = np.sqrt(1 - ts2 + 0j)
        kind = RootKind.TYPE_I if ts2.real < 1 else RootKind.TYPE_II
        for sign in (+1, -1):
            z = -1j * t * s + sign * disc
            lam = 0.5 * np.log(z)
            out.append(FreeFermionRoot(k=float(k), sign=sign, lam=complex(lam), kind=kind))
    return out


def single_particle_residual(root: FreeFermionRoot, L: int, beta: complex) -> float:
    """|(sinhβ − sinh2λ)/(sinhβ + sinh2λ) − e^{4πik/L}|"""
    s = np.sinh(complex(beta))
    sh = np.sinh(2 * root.lam)
    lhs = (s - sh) / (s + sh)
    return float(abs(lhs - np.exp(4j * math.pi * root.k / L)))


# =========================
# Eigenvalue assembly
# =========================
def _factor(lam: complex, cosh_beta: complex) -> complex:
    c2 = np.cosh(2 * lam)
    den = c2 - cosh_beta
    if abs(den) < 1e-14:
        raise SingularConfigurationError(
            f"[free_fermion] root {lam} sits on the pole cosh(2λ) = cosh β"
        )
    return complex((c2 + cosh_beta) / den)


def ff_eigenvalue(sel: RootSelection, beta: complex) -> complex:
    """Λ = Π (cosh2λ + coshβ)/(cosh2λ − coshβ). neutral mode 는 factor 1."""
    if not sel.parity_consistent:
        raise ParameterError("[free_fermion] selection size does not match its k-grid parity")
    cb = np.cosh(_check_beta(beta))
    value = 1.0 + 0j
    for r in sel.roots:
        if not (np.isfinite(r.lam.real) and np.isfinite(r.lam.imag)):
            continue
        value *= _factor(r.lam, cb)
    return value


def log_modulus(root: FreeFermionRoot, beta: complex) -> float:
    return float(math.log(abs(_factor(root.lam, np.cosh(complex(beta))))))


def top_selection(L: int, beta: complex, integer_grid: bool) -> RootSelection:
    """해당 grid 의 type (i) + root 전부 (parity 는 호출자가 확인)."""
    roots = ff_roots(L, beta, 1 if integer_grid else 0)
    chosen = tuple(r for r in roots if r.kind is RootKind.TYPE_I and r.sign == +1)
    return RootSelection(roots=chosen, integer_grid=integer_grid)


# =========================
# Census
# =========================
def _best_by_enumeration(values: np.ndarray, parity: int, tol: float) -> Tuple[float, int]:
    n = values.size
    masks = np.arange(1 << n, dtype=np.int64)
    bits = (masks[:, None] >> np.arange(n)) & 1
    ok = bits.sum(axis=1) % 2 == parity
    if not np.any(ok):
        return -math.inf, 0
    sums = bits[ok] @ values
    best = float(sums.max())
    return best, int(np.sum(sums >= best - tol))


def _best_closed_form(values: np.ndarray, parity: int, tol: float) -> Tuple[float, int]:
    if values.size == 0:
        return (0.0, 1) if parity == 0 else (-math.inf, 0)
    pos = values > tol
    n_neutral = int(np.sum(np.abs(values) <= tol))
    base = float(values[pos].sum())
    if n_neutral > 0:
        return base, 2 ** (n_neutral - 1)
    if int(pos.sum()) % 2 == parity:
        return base, 1
    mags = np.abs(values)
    amin = float(mags.min())
    return base - amin, int(np.sum(mags - amin <= tol))


def best_with_parity(values: Sequence[float], parity: int, tol: float = LOG_TIE_TOL) -> Tuple[float, int]:
    """선택 크기 parity 고정 하 최대 합과 그 동률 개수."""
    v = np.asarray(values, dtype=float)
    if v.size <= ENUMERATE_MAX_MODES:
        return _best_by_enumeration(v, parity, tol)
    return _best_closed_form(v, parity, tol)


def ff_max_modulus_census(L: int, beta: complex) -> Census:
    """
    ✅ γ = π/2 최대 |Λ| 와 그 축퇴도
    - grid 별로 mode log-modulus 위에서 parity 고정 선택을 세고 두 grid 합산
    - symmetric phase (β 복소) 는 모든 |Λ| = 1 → 축퇴도 2^L
    """
    beta = _check_beta(beta)
    if abs(beta.imag) > 1e-12:
        return Census(max_modulus=1.0, degeneracy=2 ** L, grid_counts={"integer": 2 ** (L - 1), "half-integer": 2 ** (L - 1)})

    per_grid: Dict[str, Tuple[float, int]] = {}
    n_type_ii = 0
    for integer_grid in (True, False):
        roots = ff_roots(L, beta, 1 if integer_grid else 0)
        _, has_edge = momentum_grid(L, integer_grid)
        values = [log_modulus(r, beta) for r in roots]
        values += [0.0, 0.0] if has_edge else []
        n_type_ii += sum(1 for r in roots if r.kind is RootKind.TYPE_II)
        per_grid["integer" if integer_grid else "half-integer"] = best_with_parity(values, 1 if integer_grid else 0)

    top = max(best for best, _ in per_grid.values())
    degeneracy = sum(count for best, count in per_grid.values() if best >= top - LOG_TIE_TOL)
    return Census(
        max_modulus=float(math.exp(top)),
        degeneracy=int(degeneracy),
        grid_counts={name: count for name, (_, count) in per_grid.items()},
        n_type_ii=n_type_ii,
    )


# =========================
# First order in ε
# =========================
def _as_complex(roots: Sequence[Union[complex, FreeFermionRoot]]) -> np.ndarray:
    vals = np.array([r.lam if isinstance(r, FreeFermionRoot) else complex(r) for r in roots], dtype=complex)
    return vals[np.isfinite(vals.real) & np.isfinite(vals.imag)]


def depsilon_log_lambda(roots: Sequence[Union[complex, FreeFermionRoot]], beta: complex, L: int) -> float:
    """
    ∂_ε log|Λ| = −(2/(L tanhβ)) Im Σ_{m,n} (tanh2λ_m − tanh2λ_n) tanh(λ_m − λ_n)
    - 같은 k 의 ± 쌍 (λ_m − λ_n = iπ/2 mod iπ) 은 실수 기여라 제외
    """
    lam = _as_complex(roots)
    if lam.size < 2:
        return 0.0
    beta = _check_beta(beta)
    t2 = np.tanh(2 * lam)
    diff = lam[:, None] - lam[None, :]
    pole = np.abs(np.cosh(diff)) < 1e-10
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (t2[:, None] - t2[None, :]) * np.tanh(diff)
    terms = np.where(pole, 0.0, terms)
    total = complex(np.sum(terms))
    return float(-2.0 / (L * np.tanh(beta).real) * total.imag)


def hurwitz_zeta(s: float, a: float, n_direct: int = 12, n_terms: int = 6) -> float:
    """
    ζ(s, a) = Σ_n (a + n)^{−s},  a > 0, s ≠ 1.
    scipy.special.zeta 는 s > 1 만 받으므로 앞 n_direct 항 직접합 + Euler–Maclaurin 꼬리로 연장한다.
    """
    if not a > 0 or s == 1:
        raise ParameterError(f"hurwitz_zeta needs a > 0 and s != 1, got s={s}, a={a}")
    head = float(np.sum((a + np.arange(n_direct)) ** (-s)))
    z = a + n_direct
    tail = z ** (1 - s) / (s - 1) + 0.5 * z ** (-s)
    bern = special.bernoulli(2 * n_terms)
    for j in range(1, n_terms + 1):
        tail += bern[2 * j] / math.factorial(2 * j) * special.poch(s, 2 * j - 1) * z ** (-s - 2 * j + 1)
    return head + float(tail)


def _sum_weight(mu: float, sign: int, L: int, b: float, kappa: float) -> float:
    """연속 k = kappa 에서의 finite_sum 피가수 (type (i) 영역, sin θ = −sinhβ·tan(2πk/L))."""
    x = -math.sinh(b) * math.tan(2 * math.pi * kappa / L)
    cos_t = math.sqrt(max(1.0 - x * x, 0.0))
    sh2, ch2, th2 = math.sinh(2 * mu), math.cosh(2 * mu), math.tanh(2 * mu)
    term = (sh2 * x / cos_t - sign * cos_t / th2) / (ch2 + sign * x)
    return 4.0 / (L * math.tanh(b)) * term


def band_edge_correction(
    mu: float,
    sign: int,
    L: int,
    beta: float,
    integer_grid: bool = True,
    fd_step: float = 0.05,
) -> float:
    """
    finite_sum − integral 의 type I/II 경계 기여.
    - 경계 κ_c = (L/2π)·atan(1/|sinhβ|) 근처 피가수 = u^{−1/2}·H(u), u = 경계까지 k 거리
    - 격자 offset θ 에 대해 H(0)·ζ(1/2, θ) + H′(0)·ζ(−1/2, θ), 양쪽 경계 합
    - 남는 오차 O(L^{−5/2}); μ 가 작아 ch2 − 1 이 격자 간격만큼 작으면 근사가 나빠진다
    """
    b = _check_beta(beta).real
    s = math.sinh(b)
    sh2, ch2 = math.sinh(2 * mu), math.cosh(2 * mu)
    kappa_c = L / (2 * math.pi) * math.atan(1.0 / abs(s))
    slope = 2 * math.pi / L * (abs(s) + 1.0 / abs(s))
    ks, _ = momentum_grid(L, integer_grid)

    total = 0.0
    for side in (+1, -1):
        inside = ks[side * ks < kappa_c]
        if inside.size == 0:
            continue
        theta = kappa_c - float(np.max(side * inside))
        x_edge = -math.copysign(1.0, s) * side
        h0 = 4.0 / (L * math.tanh(b)) * sh2 * x_edge / (ch2 + sign * x_edge) / math.sqrt(2 * slope)

        def h(u: float) -> float:
            return _sum_weight(mu, sign, L, b, side * (kappa_c - u)) * math.sqrt(u)

        # H(u) − H(0) = H′(0)u + O(u²), 두 점 Richardson
        h1 = 2 * (h(fd_step) - h0) / fd_step - (h(2 * fd_step) - h0) / (2 * fd_step)
        total += h0 * hurwitz_zeta(0.5, theta) + h1 * hurwitz_zeta(-0.5, theta)
    return total


def f_pm(
    mu: float,
    sign: int,
    L: int,
    beta: float,
    mode: str = "finite_sum",
    integer_grid: bool = True,
) -> float:
    """
    type (ii) root λ = μ + sign·iπ/4 한 개가 ∂_ε log|Λ| 에 주는 기여.
    - finite_sum: grid 위 type (i) + root 합 (유한 L 의 실제 값)
    - edge_corrected: finite_sum 에서 band_edge_correction 을 뺀 값 (integral 과 O(L^{−5/2}) 로 일치)
    - integral: 열역학 극한 적분 (x = sin φ 치환, 끝점 특이성 제거)
    """
    if sign not in (+1, -1):
        raise ParameterError(f"sign must be +1 or -1, got {sign}")
    if mode not in ("finite_sum", "edge_corrected", "integral"):
        raise ParameterError(f"mode must be 'finite_sum', 'edge_corrected' or 'integral', got {mode!r}")
    beta = _check_beta(beta)
    if abs(beta.imag) > 1e-12:
        raise ParameterError("f_pm requires the broken phase (real beta)")
    b = beta.real
    tb = math.tanh(b)

    if mu == 0:
        return math.copysign(math.inf, -sign * tb)

    sh2, ch2, th2 = math.sinh(2 * mu), math.cosh(2 * mu), math.tanh(2 * mu)

    if mode in ("finite_sum", "edge_corrected"):
        sel = top_selection(L, b, integer_grid)
        theta = np.array([2 * r.lam.imag for r in sel.roots])
        terms = (sh2 * np.tan(theta) - sign * np.cos(theta) / th2) / (ch2 + sign * np.sin(theta))
        total = float(4.0 / (L * tb) * np.sum(terms))
        if mode == "edge_corrected":
            total -= band_edge_correction(mu, sign, L, b, integer_grid)
        return total

    s2 = math.sinh(b) ** 2

    def integrand(phi: float) -> float:
        x = math.sin(phi)
        num = sh2 * x - sign * math.cos(phi) ** 2 / th2
        return num / ((ch2 + sign * x) * (1 + x * x / s2))

    val, _ = integrate.quad(integrand, -HALF_PI, HALF_PI, epsrel=QUAD_EPSREL, limit=200)
    return float(2.0 / (math.pi * tb * abs(math.sinh(b))) * val)


def _fix_parity(chosen: List[int], values: np.ndarray) -> List[int]:
    """chosen 을 하나 토글해 parity 를 맞춘다 (|값| 최소 mode)."""
    idx = int(np.argmin(np.abs(values)))
    if idx in chosen:
        return [i for i in chosen if i != idx]
    return chosen + [idx]


def ff_perturbative_top(L: int, beta: float) -> PerturbativeTop:
    """
    ✅ ε > 0 에서 최대 |Λ| selection (1차 섭동)
    - 모든 type (i) + root 와 f > 0 인 type (ii) root
    - parity 는 neutral(k = L/4) mode, 그 다음 |f| 최소 root 로 맞춘다
    """
    beta = _check_beta(beta)
    if abs(beta.imag) > 1e-12:
        raise ParameterError("ff_perturbative_top requires the broken phase (real beta)")

    best: Optional[PerturbativeTop] = None
    for integer_grid in (True, False):
        roots = ff_roots(L, beta, 1 if integer_grid else 0)
        _, has_edge = momentum_grid(L, integer_grid)
        base = [r for r in roots if r.kind is RootKind.TYPE_I and r.sign == +1]
        extra = [r for r in roots if r.kind is RootKind.TYPE_II]
        slopes = np.array([depsilon_log_lambda(base + [r], beta, L) for r in extra])

        chosen = [i for i, f in enumerate(slopes) if f > LOG_TIE_TOL]
        n_edge = 0
        parity_target = 1 if integer_grid else 0
        if (len(base) + len(chosen)) % 2 != parity_target:
            if has_edge:
                n_edge = 1
            elif slopes.size:
                chosen = _fix_parity(chosen, slopes)
            else:
                weakest = min(base, key=lambda r: log_modulus(r, beta))
                base = [r for r in base if r is not weakest]

        picked = base + [extra[i] for i in sorted(chosen)]
        sel = RootSelection(roots=tuple(picked), integer_grid=integer_grid, n_edge=n_edge)
        log0 = float(sum(log_modulus(r, beta) for r in base))
        slope = depsilon_log_lambda(list(sel.roots), beta, L)
        cand = PerturbativeTop(selection=sel, log_modulus=log0, slope=slope)

        if best is None or log0 > best.log_modulus + LOG_TIE_TOL or (
            abs(log0 - best.log_modulus) <= LOG_TIE_TOL and slope > best.slope
        ):
            best = cand
    return best


# =========================
# Δ ∼ ε/L
# =========================
def ed_gap(L: int, gamma: float, T: float, settings: Optional[Settings] = None) -> float:
    p = CircuitParams(L=L, gamma=gamma, T=T)
    return full_spectrum(build_block_operator(p, settings=settings)).gap


def gap_scaling_epsilon(
    L_list: Sequence[int],
    epsilon_list: Sequence[float],
    T: float,
    settings: Optional[Settings] = None,
) -> ScalingFit:
    """
    ED gap Δ(L, ε), γ = π/2 − ε 를 c·ε/L 로 fit.
    - params: c (선형 모델, stderr 포함), p (ε 지수), q (L 지수), max_rel_residual (max |y − c·ε/L| / y)
    - data: L, eps, gap 배열 (ε = 0 점 포함, fit 에서는 제외)
    """
    Ls, eps, gaps = [], [], []
    for L in L_list:
        for e in epsilon_list:
            if e < 0:
                raise ParameterError(f"epsilon must be >= 0, got {e}")
            Ls.append(L)
            eps.append(e)
            gaps.append(ed_gap(L, HALF_PI - e, T, settings=settings))

    Ls_a, eps_a, gaps_a = np.array(Ls, float), np.array(eps, float), np.array(gaps, float)
    use = (eps_a > 0) & (gaps_a > 0) & np.isfinite(gaps_a)
    if use.sum() < 3:
        raise FitError(
            "[free_fermion] gap scaling needs >= 3 points with eps > 0 and a non-zero gap",
            {"L": Ls, "eps": eps, "gap": gaps},
        )

    x = eps_a[use] / Ls_a[use]
    y = gaps_a[use]
    coef, ssr, _, _ = np.linalg.lstsq(x[:, None], y, rcond=None)
    c = float(coef[0])
    dof = max(x.size - 1, 1)
    ssr_val = float(ssr[0]) if ssr.size else float(np.sum((y - c * x) ** 2))

    params = {"c": c}
    stderr: Dict[str, float] = {"c": math.sqrt(ssr_val / dof / float(np.dot(x, x)))}
    if len(set(eps_a[use])) > 1 and len(set(Ls_a[use])) > 1:
        power = fit_two_variable_power_law(eps_a[use], Ls_a[use], y)
        params.update({"p": power.params["p"], "q": power.params["q"]})

    fit = ScalingFit(
        model="gap = c * eps / L",
        params=params,
        stderr=stderr,
        residuals=y - c * x,
        n_points=int(use.sum()),
        data={"L": Ls_a, "eps": eps_a, "gap": gaps_a},
    )
    return replace(fit, params=dict(params, max_rel_residual=fit.max_relative_residual(y)))
