# src/floquet_purification/backend/services/model_core.py
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from floquet_purification.backend.services.errors import ParameterError

"""
model_core.py

[역할]
- 회로 파라미터 (L, γ, T, δ, δ′) 검증과 파생량 (α, β, T_c^±, period, region)
- 2-site gate, 섭동 layer(U₃, U₃′)의 site-local factor, 대칭 연산자 정의
- evolution 로직은 두지 않는다 (dense_evolution 담당)

[규약]
- site 번호 1..L, periodic boundary
- spin basis 순서 ↑ → ↓  (gate basis: |↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩)
"""

HALF_PI = math.pi / 2
GAMMA_TOL = 1e-12
CRITICAL_TOL = 1e-12
REAL_ALPHA_TOL = 1e-10


class Region(str, Enum):
    SYMMETRIC = "Symmetric"
    BROKEN = "Broken"
    CRITICAL = "Critical"


@dataclass(frozen=True)
class CircuitParams:
    L: int
    gamma: float
    T: float
    delta: float = 0.0
    delta_prime: float = 0.0

    def __post_init__(self):
        validate_params(self)

    @property
    def is_gaussian(self) -> bool:
        return is_gaussian_line(self.gamma)

    @property
    def is_unitary(self) -> bool:
        return abs(self.gamma) < GAMMA_TOL


@dataclass(frozen=True)
class DerivedParams:
    alpha: complex
    beta: complex
    t_c_minus: float
    t_c_plus: float
    period: float
    region: Region
    T_reduced: float


@dataclass(frozen=True)
class GateMatrix:
    """2-site gate (4×4). basis |↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩."""
    entries: np.ndarray


@dataclass(frozen=True)
class SymmetryOps:
    """
    A = S·P·K (U_θ 는 sector 마다 scalar 라 따로 두지 않는다).
    - shift: i → i+1 (0-based)
    - parity: i → L−1−i (0-based, 1-based 로는 j → L+1−j)
    - 합성 S∘P: i → −i mod L
    """
    L: int
    shift: Tuple[int, ...]
    parity: Tuple[int, ...]
    conjugation: bool = True

    def composite(self) -> Tuple[int, ...]:
        return tuple(self.shift[self.parity[i]] for i in range(self.L))

    def a_squared_is_identity(self) -> bool:
        perm = self.composite()
        return all(perm[perm[i]] == i for i in range(self.L))


def is_gaussian_line(gamma: float) -> bool:
    return abs(gamma - HALF_PI) < GAMMA_TOL


def validate_params(p: CircuitParams) -> None:
    if not isinstance(p.L, (int, np.integer)) or isinstance(p.L, bool):
        raise ParameterError(f"L must be an integer, got {p.L!r}")
    if p.L < 4 or p.L % 2:
        raise ParameterError(f"L must be even and >= 4, got {p.L}")

    for name in ("gamma", "T", "delta", "delta_prime"):
        v = getattr(p, name)
        if not np.isfinite(v):
            raise ParameterError(f"{name} must be finite, got {v!r}")

    if p.gamma < -GAMMA_TOL or p.gamma > HALF_PI + GAMMA_TOL:
        raise ParameterError(f"gamma must lie in [0, pi/2], got {p.gamma}")
    if p.T < 0:
        raise ParameterError(f"T must be >= 0, got {p.T}")
    if is_gaussian_line(p.gamma) and p.T <= 0:
        raise ParameterError("gamma = pi/2 requires T > 0")
    if p.delta < 0 or p.delta_prime < 0:
        raise ParameterError("delta and delta_prime must be >= 0")


def critical_times(gamma: float) -> Tuple[float, float]:
    """T_c^∓ = (π ∓ 2γ) / (2 cos γ). γ = π/2 에서는 (1, +∞)."""
    if is_gaussian_line(gamma):
        return 1.0, math.inf
    c = math.cos(gamma)
    return (math.pi - 2 * gamma) / (2 * c), (math.pi + 2 * gamma) / (2 * c)


def gate_period(gamma: float) -> float:
    if is_gaussian_line(gamma):
        return math.inf
    return math.pi / math.cos(gamma)


def reduce_period(gamma: float, T: float) -> float:
    """T를 기본 주기 [0, π/cos γ) 로 접는다. (γ = π/2 는 비주기)"""
    period = gate_period(gamma)
    if not math.isfinite(period):
        return T
    reduced = math.fmod(T, period)
    # fmod 경계 반올림으로 period 자체가 남는 경우 정리
    if period - reduced < 1e-15 * period:
        reduced = 0.0
    return reduced


def _alpha_from_ratio(ratio: float) -> complex:
    # 음수 비율은 Im α = +π/2 쪽 branch (β = α − iπ/2 가 실수)
    if ratio == 0 or not math.isfinite(ratio):
        return complex(math.nan, math.nan)
    imag = HALF_PI if ratio < 0 else 0.0
    return complex(-0.5 * math.log(abs(ratio)), imag)


def derive_params(p: CircuitParams) -> DerivedParams:
    t_c_minus, t_c_plus = critical_times(p.gamma)
    period = gate_period(p.gamma)

    if p.is_unitary:
        return DerivedParams(
            alpha=0j,
            beta=complex(0.0, -HALF_PI),
            t_c_minus=t_c_minus,
            t_c_plus=t_c_plus,
            period=period,
            region=Region.SYMMETRIC,
            T_reduced=reduce_period(p.gamma, p.T),
        )

    T = reduce_period(p.gamma, p.T)

    if abs(T - t_c_minus) < CRITICAL_TOL or abs(T - t_c_plus) < CRITICAL_TOL:
        region = Region.CRITICAL
    elif t_c_minus < T < t_c_plus:
        region = Region.BROKEN
    else:
        region = Region.SYMMETRIC

    if region is Region.CRITICAL:
        alpha = complex(math.nan, math.nan)
    elif is_gaussian_line(p.gamma):
        alpha = _alpha_from_ratio((1 + T) / (1 - T))
    else:
        c = math.cos(p.gamma)
        alpha = _alpha_from_ratio(math.cos(p.gamma - T * c) / math.cos(p.gamma + T * c))

    return DerivedParams(
        alpha=alpha,
        beta=alpha - 1j * HALF_PI,
        t_c_minus=t_c_minus,
        t_c_plus=t_c_plus,
        period=period,
        region=region,
        T_reduced=T,
    )


def phase_label(p: CircuitParams, d: DerivedParams) -> str:
    """
    정화(purification) 위상 판정표
    - δ′ > 0 → strongly-purifying (A 명시적 파괴)
    - γ = 0, γ = π/2, Symmetric → mixed
    - Broken & δ = 0 → weakly-purifying / δ > 0 → strongly-purifying
    """
    if p.delta_prime > 0:
        return "strongly-purifying"
    if d.region is Region.CRITICAL:
        return "critical"
    if p.is_unitary or p.is_gaussian or d.region is Region.SYMMETRIC:
        return "mixed"
    if p.delta > 0:
        return "strongly-purifying"
    return "weakly-purifying"


def gate_generator(gamma: float) -> np.ndarray:
    """
    h = −½(σˣσˣ + σʸσʸ + cosγ σᶻσᶻ) + ½cosγ − (i/2)(σᶻ_m − σᶻ_n) sinγ
    - 정렬된 쌍(↑↑, ↓↓)은 0, 중앙 block 고유값은 {0, 2cosγ}  → h² = 2cosγ·h
    """
    c = math.cos(gamma)
    s = math.sin(gamma)
    if is_gaussian_line(gamma):
        c, s = 0.0, 1.0
    h = np.zeros((4, 4), dtype=complex)
    h[1, 1] = c - 1j * s   # ↑↓ : σᶻ_m − σᶻ_n = +2
    h[2, 2] = c + 1j * s   # ↓↑ : σᶻ_m − σᶻ_n = −2
    h[1, 2] = h[2, 1] = -1.0
    return h


def two_site_gate(p: CircuitParams) -> GateMatrix:
    """
    G = 1 + (e^{2iT cosγ} − 1)/(2 cosγ) · h
    - γ = π/2: h 가 nilpotent 이므로 G = 1 + iT h (정확)
    """
    h = gate_generator(p.gamma)
    if p.is_gaussian:
        coef = 1j * p.T
    else:
        c = math.cos(p.gamma)
        coef = np.expm1(2j * p.T * c) / (2 * c)
    return GateMatrix(entries=np.eye(4, dtype=complex) + coef * h)


def perturbation_gate_u3(p: CircuitParams) -> np.ndarray:
    """
    U₃ = Π_m exp(δ(−1)^m σᶻ_m) 의 site 별 대각 성분.
    반환 shape (L, 2): [m−1, 0] = ↑ 성분, [m−1, 1] = ↓ 성분 (m = 1..L)
    """
    m = np.arange(1, p.L + 1)
    stagger = np.where(m % 2 == 0, 1.0, -1.0)
    return np.exp(p.delta * np.outer(stagger, [1.0, -1.0]))


def perturbation_gate_u3prime(p: CircuitParams) -> np.ndarray:
    """U₃′ = Π_m exp(δ′ σᶻ_m) 의 site 별 대각 성분, shape (L, 2)."""
    row = np.exp(p.delta_prime * np.array([1.0, -1.0]))
    return np.tile(row, (p.L, 1))


def symmetry_ops(L: int) -> SymmetryOps:
    return SymmetryOps(
        L=L,
        shift=tuple((i + 1) % L for i in range(L)),
        parity=tuple(L - 1 - i for i in range(L)),
        conjugation=True,
    )
