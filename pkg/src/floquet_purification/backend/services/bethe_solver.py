# src/floquet_purification/backend/services/bethe_solver.py
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from floquet_purification.backend.services import free_fermion as ff
from floquet_purification.backend.services.errors import (
    ConvergenceError,
    FitError,
    ParameterError,
    RootCollisionError,
    SingularConfigurationError,
)
from floquet_purification.backend.services.model_core import (
    CircuitParams,
    Region,
    critical_times,
    derive_params,
    gate_period,
    is_gaussian_line,
    reduce_period,
)
from floquet_purification.backend.services.scaling_fit import (
    ScalingFit,
    fit_linear_in_inverse_l,
    fit_power_law,
)

"""
bethe_solver.py

[역할]
- log 형태 Bethe 방정식의 residual / 해석적 Jacobian
- 감쇠 complex Newton, κ-homotopy seed, γ = π/2 자유 fermion seed
- T-continuation (anchor T 에서 임계선 쪽으로), L → L+2 continuation
- Λ (root 곱), 유한 크기 정화 시간 t_L, τ_∞ 외삽, 임계 지수 ν
- T_c^− 근처 XXZ 극한 비교

[T 거울]
- G(π/cosγ − T) = G(T)^{-1} 이고 λ ↔ 1/λ̄ 짝이 있으므로 |Λ| 스펙트럼은 T ↔ period − T 에서 같다
- 상반부 (β > 0) 의 T 는 하반부 거울 T 에서 푼다

[log 형태]
  F_i = s(λ_i) − I_i/L − (1/L) Σ_j r(λ_i − λ_j)
  s(λ) = −(1/2π)[arctan(a/tanh(λ+α/2)) + arctan(a/tanh(λ−α/2))],  a = tan(γ/2)
  r(λ) = (1/π) arctan(tanh λ / tan γ)
"""

NEWTON_TOL = 1e-12
CONVERGED_TOL = 1e-10
MAX_ITER = 50
MAX_HALVINGS = 8
COND_WARN = 1e14
POLE_TOL = 1e-12
BRANCH_HOP = 0.5
PAIRING_TOL = 1e-6

# T-continuation: 변수 s = ln(T − T_c^−)
ANCHOR_BETA = 0.6       # anchor T 에서 |β|
T_STEP_MAX = 0.25
T_STEP_MIN = 1.0 / 4096
JUMP_GUARD = 0.25

NU_OFFSETS = (0.0125, 0.00625, 0.003125, 0.0015625)


class Edge(str, Enum):
    LOWER = "lower"     # T = T_c^− + offset
    UPPER = "upper"     # T = T_c^+ − offset


@dataclass(frozen=True)
class BetheState:
    L: int
    quantum_numbers: np.ndarray
    roots: np.ndarray
    residual: float = math.inf
    log_lambda: complex = 0j
    converged: bool = False
    iterations: int = 0
    ill_conditioned: bool = False

    @property
    def M(self) -> int:
        return int(self.roots.size)

    @property
    def lambda_eig(self) -> complex:
        with np.errstate(over="ignore"):
            return complex(np.exp(self.log_lambda))

    @property
    def log_modulus(self) -> float:
        return float(self.log_lambda.real)


@dataclass
class ContinuationPath:
    gamma: float
    T: float
    shift: float = 0.5
    T_solved: float = math.nan                                # 거울 적용 후 실제로 푼 T
    ground: List[BetheState] = field(default_factory=list)    # M = L/2
    excited: List[BetheState] = field(default_factory=list)   # M = L/2 − 1
    t_L: List[float] = field(default_factory=list)
    swapped: List[bool] = field(default_factory=list)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([s.L for s in self.ground], dtype=int)


@dataclass(frozen=True)
class TauResult:
    L: int
    t_L: float
    tau_L: float
    swapped: bool
    ground: BetheState
    excited: BetheState
    T_solved: float = math.nan


@dataclass(frozen=True)
class XXZReport:
    residual: float             # 극한 방정식 residual (I 단위, 정수 wrap)
    lambda_lim: complex
    modulus_deviation: float    # | |Λ_lim| − 1 |
    lambda_deviation: float     # |Λ − Λ_lim| / |Λ_lim|
    n_shifted: int
    cluster_sizes: Tuple[int, int] = (0, 0)


# =========================
# Kernels
# =========================
def _arctan(z):
    """arctan z = (1/(2i)) log((1+iz)/(1−iz)), principal log."""
    z = np.asarray(z, dtype=complex)
    return np.log((1 + 1j * z) / (1 - 1j * z)) / 2j


def _s(lam, gamma: float, alpha: complex):
    a = math.tan(gamma / 2)
    lam = np.asarray(lam, dtype=complex)
    return -(_arctan(a / np.tanh(lam + alpha / 2)) + _arctan(a / np.tanh(lam - alpha / 2))) / (2 * math.pi)


def _s_prime(lam, gamma: float, alpha: complex):
    a = math.tan(gamma / 2)
    lam = np.asarray(lam, dtype=complex)
    out = 0j
    for u in (lam + alpha / 2, lam - alpha / 2):
        out = out + a / (np.sinh(u) ** 2 + a * a * np.cosh(u) ** 2)
    return out / (2 * math.pi)


def _r(z, gamma: float):
    return _arctan(np.tanh(z) / math.tan(gamma)) / math.pi


def _r_prime(z, gamma: float):
    b = math.tan(gamma)
    return b / (b * b * np.cosh(z) ** 2 + np.sinh(z) ** 2) / math.pi


def _check_collisions(roots: np.ndarray, gamma: float) -> None:
    m = roots.size
    if m < 2:
        return
    diff = roots[:, None] - roots[None, :]
    w = np.tanh(diff) / math.tan(gamma)
    near_pole = (np.abs(1 + 1j * w) < POLE_TOL) | (np.abs(1 - 1j * w) < POLE_TOL) | (np.abs(diff) < POLE_TOL)
    np.fill_diagonal(near_pole, False)
    if np.any(near_pole):
        i, j = (int(v) for v in np.argwhere(near_pole)[0])
        raise RootCollisionError(i, j, float(abs(diff[i, j])))


def _residual_vec(
    roots: np.ndarray,
    qn: np.ndarray,
    L: int,
    gamma: float,
    alpha: complex,
    kappa: float = 1.0,
    scale: float = 1.0,
) -> np.ndarray:
    _check_collisions(roots, gamma)
    out = _s(roots, gamma, alpha) - scale * qn / L
    if kappa != 0 and roots.size > 1:
        out = out - kappa / L * np.sum(_r(roots[:, None] - roots[None, :], gamma), axis=1)
    return np.asarray(out, dtype=complex)


def _jacobian_mat(roots: np.ndarray, L: int, gamma: float, alpha: complex, kappa: float = 1.0) -> np.ndarray:
    m = roots.size
    jac = np.diag(np.asarray(_s_prime(roots, gamma, alpha), dtype=complex).reshape(m))
    if kappa != 0 and m > 1:
        rp = _r_prime(roots[:, None] - roots[None, :], gamma)
        np.fill_diagonal(rp, 0.0)
        jac = jac + kappa / L * rp
        jac[np.diag_indices(m)] -= kappa / L * rp.sum(axis=1)
    return jac


def log_bethe_residual(state: BetheState, gamma: float, alpha: complex) -> np.ndarray:
    """F_i, i = 1..M. root 쌍이 r 의 pole 에 닿으면 RootCollisionError."""
    return _residual_vec(state.roots, state.quantum_numbers, state.L, gamma, alpha)


def jacobian(state: BetheState, gamma: float, alpha: complex) -> np.ndarray:
    """∂F_i/∂λ_k (해석적)."""
    return _jacobian_mat(state.roots, state.L, gamma, alpha)


# =========================
# Eigenvalue
# =========================
def _log_lambda(roots: np.ndarray, gamma: float, alpha: complex) -> complex:
    if roots.size == 0:
        return 0j
    c2 = np.cosh(2 * roots)
    num = c2 - np.cosh(alpha + 1j * gamma)
    den = c2 - np.cosh(alpha - 1j * gamma)
    if np.any(np.abs(den) < 1e-14):
        raise SingularConfigurationError("[bethe_solver] a root sits on the pole of the eigenvalue factor")
    return complex(np.sum(np.log(num) - np.log(den)))


def eigenvalue_from_roots(state: BetheState, gamma: float, alpha: complex) -> complex:
    """Λ = Π (cosh2λ − cosh(α+iγ))/(cosh2λ − cosh(α−iγ)), log-modulus 합으로 계산."""
    with np.errstate(over="ignore"):
        return complex(np.exp(_log_lambda(state.roots, gamma, alpha)))


# =========================
# Newton
# =========================
def _newton(
    roots: np.ndarray,
    qn: np.ndarray,
    L: int,
    gamma: float,
    alpha: complex,
    kappa: float = 1.0,
    scale: float = 1.0,
    tol: float = NEWTON_TOL,
    max_iter: int = MAX_ITER,
) -> Tuple[np.ndarray, float, int, bool, List[float]]:
    roots = np.array(roots, dtype=complex)
    res = _residual_vec(roots, qn, L, gamma, alpha, kappa, scale)
    norm = float(np.max(np.abs(res))) if res.size else 0.0
    history = [norm]
    ill = False
    it = 0

    while norm >= tol and it < max_iter:
        jac = _jacobian_mat(roots, L, gamma, alpha, kappa)
        if not np.all(np.isfinite(jac)):
            raise ConvergenceError(
                f"[bethe_solver] non-finite Jacobian at L={L}", last_residual=norm, history=history
            )
        try:
            cond = float(np.linalg.cond(jac))
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as e:
            raise ConvergenceError(f"[bethe_solver] singular Jacobian: {e}", last_residual=norm, history=history) from e
        if cond > COND_WARN and not ill:
            warnings.warn(f"[bethe_solver] ill-conditioned Jacobian (cond={cond:.3e}) at L={L}", RuntimeWarning)
            ill = True

        step = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            trial = roots + step * delta
            try:
                res_t = _residual_vec(trial, qn, L, gamma, alpha, kappa, scale)
            except RootCollisionError:
                step /= 2
                continue
            norm_t = float(np.max(np.abs(res_t)))
            # 예측 변화량(−step·F)과 어긋나는 정수성 점프는 branch hop 으로 본다
            hop = float(np.max(np.abs(L * (res_t - res + step * res)))) > BRANCH_HOP
            if np.isfinite(norm_t) and not hop and norm_t < norm:
                accepted = True
                break
            step /= 2

        if not accepted:
            break
        roots, res, norm = trial, res_t, norm_t
        it += 1
        history.append(norm)

    return roots, norm, it, ill, history


def newton_solve(seed: BetheState, gamma: float, alpha: complex) -> BetheState:
    """
    ✅ 감쇠 complex Newton (해석적 M×M Jacobian)
    - tol 1e−12 또는 50회, residual 이 줄지 않으면 step 반감 (최대 8회)
    - 최종 residual < 1e−10 이면 converged, 아니면 ConvergenceError
    """
    _check_gamma(gamma)
    if seed.roots.size != seed.quantum_numbers.size:
        raise ParameterError("roots and quantum_numbers differ in length")
    roots, norm, it, ill, history = _newton(seed.roots, seed.quantum_numbers, seed.L, gamma, alpha)
    if not norm < CONVERGED_TOL:
        raise ConvergenceError(
            f"[bethe_solver] Newton stalled at L={seed.L}, M={seed.M} (residual={norm:.3e})",
            last_residual=norm,
            history=history,
        )
    return replace(
        seed,
        roots=roots,
        residual=norm,
        log_lambda=_log_lambda(roots, gamma, alpha),
        converged=True,
        iterations=it,
        ill_conditioned=ill,
    )


# =========================
# Seeds
# =========================
def _check_gamma(gamma: float) -> None:
    if not (0 < gamma < math.pi / 2 or is_gaussian_line(gamma)):
        raise ParameterError(f"[bethe_solver] gamma must lie in (0, pi/2], got {gamma}")


def packed_quantum_numbers(M: int) -> np.ndarray:
    """I_i = −(M−1)/2, …, (M−1)/2"""
    if M < 0:
        raise ParameterError(f"M must be >= 0, got {M}")
    return np.arange(M, dtype=float) - (M - 1) / 2


def bethe_alpha(gamma: float, T: float) -> complex:
    d = derive_params(CircuitParams(L=4, gamma=gamma, T=T))
    if d.region is Region.CRITICAL:
        raise ParameterError(f"[bethe_solver] T={T} sits on a critical line")
    return d.alpha


def homotopy_seed(
    L: int,
    quantum_numbers: Sequence[float],
    gamma: float,
    alpha: complex,
    n_stages: int = 16,
    min_stage: float = 1.0 / 1024,
) -> BetheState:
    """
    산란 세기 κ ∈ [0, 1] homotopy.
    - κ = 0: 각 root 독립 1D 역문제 s(λ) = ρ I/L  (ρ 로 s 의 치역 안에 둔다)
    - κ, 그리고 I 배율 (1−κ)ρ + κ 를 함께 1 까지 올리며 Newton 반복
    - 실패한 stage 는 보폭을 절반으로 다시 시도
    """
    _check_gamma(gamma)
    qn = np.asarray(quantum_numbers, dtype=float)
    if qn.size == 0:
        return newton_solve(BetheState(L=L, quantum_numbers=qn, roots=np.zeros(0, complex)), gamma, alpha)

    top = float(np.max(np.abs(qn))) / L
    rho = 1.0 if top == 0 else min(1.0, 0.8 * (gamma / (2 * math.pi)) / top)

    roots = np.empty(qn.size, dtype=complex)
    slope0 = complex(_s_prime(0.0, gamma, alpha))
    for i, q in enumerate(qn):
        target = rho * q / L
        lam, norm, _, _, hist = _newton(
            np.array([target / slope0]), np.array([q]), L, gamma, alpha, kappa=0.0, scale=rho
        )
        if not norm < CONVERGED_TOL:
            raise ConvergenceError(
                f"[bethe_solver] homotopy start failed for I={q}", last_residual=norm, history=hist
            )
        roots[i] = lam[0]

    kappa = 0.0
    step = 1.0 / n_stages
    while kappa < 1.0:
        nxt = min(1.0, kappa + step)
        scale = (1 - nxt) * rho + nxt
        try:
            trial, norm, _, _, hist = _newton(roots, qn, L, gamma, alpha, kappa=nxt, scale=scale)
            ok = norm < CONVERGED_TOL
        except (ConvergenceError, RootCollisionError):
            ok, norm, hist = False, math.inf, []
        if ok:
            roots, kappa = trial, nxt
            continue
        step /= 2
        if step < min_stage:
            raise ConvergenceError(
                f"[bethe_solver] homotopy stalled at kappa={kappa:.6f}", last_residual=norm, history=hist
            )

    return newton_solve(BetheState(L=L, quantum_numbers=qn, roots=roots), gamma, alpha)


def gaussian_seed(L: int, quantum_numbers: Sequence[float], T: float) -> BetheState:
    """
    γ = π/2: r ≡ 0 이라 방정식이 root 별로 분리된다.
    각 I 에 대해 같은 grid 의 자유 fermion root 중 s(λ) = I/L 에 가장 가까운 것을 골라 Newton 으로 마무리.
    """
    gamma = math.pi / 2
    qn = np.asarray(quantum_numbers, dtype=float)
    alpha = bethe_alpha(gamma, T)
    pool = np.array([r.lam for r in ff.ff_roots(L, alpha - 0.5j * math.pi, qn.size % 2)], dtype=complex)
    pool = pool[np.isfinite(pool.real) & np.isfinite(pool.imag)]
    if qn.size and pool.size == 0:
        raise ParameterError(f"[bethe_solver] no free-fermion roots at L={L}, T={T}")

    roots = np.empty(qn.size, dtype=complex)
    s_pool = np.asarray(_s(pool, gamma, alpha), dtype=complex)
    for i, q in enumerate(qn):
        roots[i] = pool[int(np.argmin(np.abs(s_pool - q / L)))]
    return newton_solve(BetheState(L=L, quantum_numbers=qn, roots=roots), gamma, alpha)


def anchor_temperature(gamma: float) -> float:
    """
    하반부 broken phase 에서 |β| = ANCHOR_BETA 인 T (homotopy 가 잘 듣는 곳).
    tan(T cosγ) = coth|β| · cot γ,  γ = π/2 에서는 T = coth|β|.
    """
    _check_gamma(gamma)
    coth = 1.0 / math.tanh(ANCHOR_BETA)
    if is_gaussian_line(gamma):
        return coth
    return math.atan(coth / math.tan(gamma)) / math.cos(gamma)


def mirror_temperature(gamma: float, T: float) -> float:
    """주기로 접은 뒤 상반부 (T > period/2) 면 period − T, 아니면 그대로."""
    period = gate_period(gamma)
    T = reduce_period(gamma, T)
    if math.isfinite(period) and T > period / 2:
        return period - T
    return T


def _log_offset(gamma: float, T: float) -> float:
    t_minus = critical_times(gamma)[0]
    period = gate_period(gamma)
    upper = period / 2 if math.isfinite(period) else math.inf
    if not t_minus < T <= upper + 1e-12:
        raise ParameterError(f"[bethe_solver] T-continuation needs T in (T_c^-, period/2], got {T}")
    return math.log(T - t_minus)


def continue_in_T(
    state: BetheState,
    gamma: float,
    T_from: float,
    T_to: float,
    max_step: float = T_STEP_MAX,
    min_step: float = T_STEP_MIN,
) -> BetheState:
    """
    ✅ T_from 에서 푼 state 를 T_to 까지 끌고 간다 (quantum number 고정).
    - 변수 s = ln(T − T_c^−): 임계선 근처에서 root 가 ±α/2 를 따라 s 에 선형으로 움직인다
    - secant predictor, 성공하면 보폭 ×2 (max_step 까지), 실패하면 ½ (min_step 미만이면 ConvergenceError)
    - 예측에서 JUMP_GUARD 이상 벗어나거나 λ → −λ 짝이 깨지면 실패로 본다
    """
    _check_gamma(gamma)
    s_from, s_to = _log_offset(gamma, T_from), _log_offset(gamma, T_to)
    t_minus = critical_times(gamma)[0]
    cur = newton_solve(state, gamma, bethe_alpha(gamma, T_from))
    cur_s = s_from
    prev: Optional[BetheState] = None
    prev_s = s_from
    direction = 1.0 if s_to > s_from else -1.0
    step = max_step

    while cur_s != s_to:
        nxt_s = cur_s + direction * step
        if (nxt_s - s_to) * direction >= 0:
            nxt_s = s_to
        if prev is None:
            pred = cur.roots
        else:
            pred = cur.roots + (cur.roots - prev.roots) * (nxt_s - cur_s) / (cur_s - prev_s)

        try:
            trial = newton_solve(replace(cur, roots=pred), gamma, bethe_alpha(gamma, t_minus + math.exp(nxt_s)))
            ok = bool(np.max(np.abs(trial.roots - pred), initial=0.0) < JUMP_GUARD) and (
                reflection_deviation(trial) < PAIRING_TOL
            )
        except (ConvergenceError, RootCollisionError, SingularConfigurationError):
            ok = False

        if ok:
            prev, prev_s = cur, cur_s
            cur, cur_s = trial, nxt_s
            step = min(max_step, 2 * step)
            continue
        step /= 2
        if step < min_step:
            raise ConvergenceError(
                f"[bethe_solver] T-continuation stalled at T={t_minus + math.exp(cur_s):.6f} "
                f"(target {T_to:.6f}, L={state.L})",
                last_residual=cur.residual,
            )
    return cur


def _arc_order(roots: np.ndarray) -> np.ndarray:
    return roots[np.lexsort((roots.imag, roots.real))]


def continuation_step(prev: BetheState, shift: float = 0.5) -> BetheState:
    """
    L → L+2 seed.
    - arc 순 정렬 후 중앙 간격 h 기준으로 위쪽 절반 +shift·h, 아래쪽 절반 −shift·h
    - M 홀수: 0 근처 root 를 빼고 ±h/2 삽입 / M 짝수: 0 삽입
    """
    roots = _arc_order(prev.roots)
    M = roots.size
    if M == 0:
        new_roots = np.zeros(1, dtype=complex)
    elif M == 1:
        new_roots = np.array([-0.5, 0.5], dtype=complex) * (1.0 / prev.L)
    elif M % 2 == 1:
        c = M // 2
        h = roots[c + 1] - roots[c]
        lower = roots[:c] - shift * h
        upper = roots[c + 1:] + shift * h
        new_roots = np.concatenate([lower, [-h / 2, h / 2], upper])
    else:
        c = M // 2
        h = roots[c] - roots[c - 1]
        lower = roots[:c] - shift * h
        upper = roots[c:] + shift * h
        new_roots = np.concatenate([lower, [0.0], upper])

    return BetheState(
        L=prev.L + 2,
        quantum_numbers=packed_quantum_numbers(M + 1),
        roots=new_roots.astype(complex),
    )


def solve_family(
    gamma: float,
    T: float,
    L: int,
    M: int,
    L_seed: int = 16,
    shift: float = 0.5,
) -> BetheState:
    """
    packed 상태 (L, M) 풀이.
    - γ = π/2: gaussian_seed
    - L ≤ L_seed 는 homotopy 로 바로, 그 위는 L_seed 에서 시작해 continuation
    """
    _check_gamma(gamma)
    if not 0 <= M <= L // 2:
        raise ParameterError(f"M must lie in [0, L/2], got {M}")
    if is_gaussian_line(gamma):
        return gaussian_seed(L, packed_quantum_numbers(M), T)
    alpha = bethe_alpha(gamma, T)
    n_steps = (L - L_seed) // 2
    if L <= L_seed or M - n_steps < 0 or L % 2:
        return homotopy_seed(L, packed_quantum_numbers(M), gamma, alpha)

    state = homotopy_seed(L - 2 * n_steps, packed_quantum_numbers(M - n_steps), gamma, alpha)
    for _ in range(n_steps):
        state = newton_solve(continuation_step(state, shift), gamma, alpha)
    return state


def reflection_deviation(state: BetheState) -> float:
    """root 집합의 λ → −λ 닫힘 편차."""
    if state.M == 0:
        return 0.0
    r = state.roots
    return float(np.max(np.min(np.abs(-r[:, None] - r[None, :]), axis=1)))


# =========================
# Purification time
# =========================
def _pair_time(ground: BetheState, excited: BetheState) -> Tuple[float, bool]:
    y = ground.log_modulus - excited.log_modulus
    swapped = y < 0
    y = abs(y)
    return (math.inf if y == 0 else 1.0 / y), swapped


def _anchored_state(gamma: float, T: float, L: int, M: int) -> BetheState:
    anchor = anchor_temperature(gamma)
    return continue_in_T(solve_family(gamma, anchor, L, M), gamma, anchor, T)


def solve_packed(gamma: float, T: float, L: int, M: int) -> BetheState:
    """
    하반부 T 의 packed 상태.
    homotopy 가 실패하거나 λ → −λ 짝이 깨진 해를 주면 anchor T 에서 T-continuation.
    """
    if is_gaussian_line(gamma):
        return gaussian_seed(L, packed_quantum_numbers(M), T)
    try:
        state = homotopy_seed(L, packed_quantum_numbers(M), gamma, bethe_alpha(gamma, T))
        if reflection_deviation(state) < PAIRING_TOL:
            return state
    except (ConvergenceError, RootCollisionError, SingularConfigurationError):
        pass
    return _anchored_state(gamma, T, L, M)


def ground_pair_tau(gamma: float, T: float, L: int) -> TauResult:
    """
    M = L/2 (packed) 와 M = L/2 − 1 (packed) 상태로 t_L = 1/log(|Λ₀|/|Λ₁|).
    - 상반부 T 는 거울 T 에서 푼다 (T_solved)
    - 작은 L 에서 순서가 뒤집히면 swapped 플래그만 세운다
    """
    _check_gamma(gamma)
    if L < 8 or L % 2:
        raise ParameterError(f"L must be even and >= 8, got {L}")
    d = derive_params(CircuitParams(L=L, gamma=gamma, T=T))
    if d.region is not Region.BROKEN:
        raise ParameterError(f"[bethe_solver] purification time needs the broken phase, got {d.region.value}")

    T_solved = mirror_temperature(gamma, T)
    ground = solve_packed(gamma, T_solved, L, L // 2)
    excited = solve_packed(gamma, T_solved, L, L // 2 - 1)
    t_L, swapped = _pair_time(ground, excited)
    return TauResult(
        L=L, t_L=t_L, tau_L=t_L / L, swapped=swapped, ground=ground, excited=excited, T_solved=T_solved
    )


@dataclass
class _AnchorChain:
    """anchor T 에서 L 을 늘려가는 packed family (M = L/2 − deficit). 필요할 때만 전진."""
    gamma: float
    deficit: int
    T: float = math.nan
    state: Optional[BetheState] = None

    def at(self, L: int) -> BetheState:
        if math.isnan(self.T):
            self.T = anchor_temperature(self.gamma)
        if self.state is None or self.state.L > L:
            self.state = solve_family(self.gamma, self.T, L, L // 2 - self.deficit)
        alpha = bethe_alpha(self.gamma, self.T)
        while self.state.L < L:
            self.state = newton_solve(continuation_step(self.state), self.gamma, alpha)
        return self.state


def _advance_l(prev: BetheState, gamma: float, T: float, alpha: complex, shift: float, chain: _AnchorChain) -> BetheState:
    """
    L → L+2 한 칸.
    continuation_step(shift) → shift/2 → 2·shift, 모두 실패하면 anchor chain 의 L+2 state 를 T 로 끌고 온다.
    """
    for sh in (shift, shift / 2, 2 * shift):
        try:
            state = newton_solve(continuation_step(prev, sh), gamma, alpha)
        except (ConvergenceError, RootCollisionError, SingularConfigurationError):
            continue
        if reflection_deviation(state) < PAIRING_TOL:
            return state
    return continue_in_T(chain.at(prev.L + 2), gamma, chain.T, T)


def run_continuation(
    gamma: float,
    T: float,
    L_start: int,
    L_end: int,
    shift: float = 0.5,
    progress=None,
) -> ContinuationPath:
    """
    L_start 의 ground pair 에서 시작해 L += 2 로 두 family 를 이어간다.
    - 상반부 T 는 거울 T 에서 푼다
    - 매 단계 _advance_l 사다리 (continuation_step 변형 → anchor T-continuation)
    """
    first = ground_pair_tau(gamma, T, L_start)
    T_solved = first.T_solved
    alpha = bethe_alpha(gamma, T_solved)
    path = ContinuationPath(gamma=gamma, T=T, shift=shift, T_solved=T_solved)
    path.ground.append(first.ground)
    path.excited.append(first.excited)
    path.t_L.append(first.t_L)
    path.swapped.append(first.swapped)
    chains = (_AnchorChain(gamma, deficit=0), _AnchorChain(gamma, deficit=1))

    for _ in range(L_start + 2, L_end + 1, 2):
        g = _advance_l(path.ground[-1], gamma, T_solved, alpha, shift, chains[0])
        e = _advance_l(path.excited[-1], gamma, T_solved, alpha, shift, chains[1])
        t_L, swapped = _pair_time(g, e)
        path.ground.append(g)
        path.excited.append(e)
        path.t_L.append(t_L)
        path.swapped.append(swapped)
        if progress is not None:
            progress(g.L)
    return path


def extrapolate_tau_from(L: Sequence[float], y: Sequence[float]) -> ScalingFit:
    """
    y_L = log(|Λ₀|/|Λ₁|) ≈ a/L + b/L²  →  τ_∞ = 1/a
    - 부호가 바뀌거나 a ≤ 0 이면 FitError
    """
    L = np.asarray(L, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size and (np.any(y <= 0) or not np.all(np.isfinite(y))):
        raise FitError("[bethe_solver] log-ratio changes sign or is not finite", {"L": L.tolist(), "y": y.tolist()})
    fit = fit_linear_in_inverse_l(L, y, min_points=4)
    a, sa = fit.params["a"], fit.stderr["a"]
    if a <= 0:
        raise FitError("[bethe_solver] extrapolated 1/L coefficient is not positive", {"a": a, "b": fit.params["b"]})
    params = dict(fit.params, tau_inf=1.0 / a)
    stderr = dict(fit.stderr, tau_inf=sa / a ** 2)
    return replace(fit, params=params, stderr=stderr, data={"L": L, "y": y})


def extrapolate_tau(path: ContinuationPath) -> ScalingFit:
    """마지막 swapped 크기 이후 꼬리만 fit."""
    L = path.sizes
    y = np.array([g.log_modulus - e.log_modulus for g, e in zip(path.ground, path.excited)])
    swapped = np.asarray(path.swapped, dtype=bool)
    start = int(np.nonzero(swapped)[0][-1]) + 1 if swapped.any() else 0
    return extrapolate_tau_from(L[start:], y[start:])


def nu_analytic(gamma: float) -> float:
    """ν(γ) = 1 / (2(1 − γ/π))  (γ = π/2 에서 1)"""
    return 1.0 / (2.0 * (1.0 - gamma / math.pi))


def edge_temperature(gamma: float, edge: Edge, offset: float) -> float:
    t_minus, t_plus = critical_times(gamma)
    if edge is Edge.LOWER:
        return t_minus + offset
    return t_plus - offset


def fit_nu(
    gamma: float,
    edge: Edge = Edge.UPPER,
    offsets: Sequence[float] = NU_OFFSETS,
    L_start: int = 48,
    L_end: int = 288,
    shift: float = 0.5,
) -> Tuple[ScalingFit, List[Dict[str, float]]]:
    """
    ✅ 임계 지수 ν: log τ_∞ vs log(offset) 기울기의 부호 반대
    - 각 offset 은 continuation + extrapolate_tau 로 τ_∞ 계산 (UPPER 는 거울 T_c^− + offset 에서 풀림)
    - 내부 실패는 해당 T 를 담은 FitError 로 중단
    """
    _check_gamma(gamma)
    rows: List[Dict[str, float]] = []
    for off in offsets:
        T = edge_temperature(gamma, edge, off)
        try:
            path = run_continuation(gamma, T, L_start, L_end, shift=shift)
            ext = extrapolate_tau(path)
        except (FitError, ConvergenceError, ParameterError, RootCollisionError, SingularConfigurationError) as e:
            raise FitError(f"[bethe_solver] extrapolation failed at T={T!r}: {e}", {"T": T, "offset": off}) from e
        rows.append({
            "offset": off,
            "T": T,
            "T_solved": path.T_solved,
            "tau_inf": ext.params["tau_inf"],
            "tau_inf_err": ext.stderr["tau_inf"],
        })

    power = fit_power_law([r["offset"] for r in rows], [r["tau_inf"] for r in rows])
    nu = -power.params["p"]
    fit = replace(
        power,
        params=dict(power.params, nu=nu),
        stderr=dict(power.stderr, nu=power.stderr["p"]),
    )
    return fit, rows


# =========================
# XXZ limit near T_c^−
# =========================
def xxz_limit_lambda(mu: Sequence[complex], gamma: float) -> complex:
    """
    Λ_lim = e^{−iMγ} Π sinh(μ − iγ/2)/sinh(μ + iγ/2)
    - μ: 두 묶음 (λ = α/2 + μ, λ = −α/2 − μ) 의 μ 전부
    """
    mu = np.asarray(mu, dtype=complex)
    if mu.size == 0:
        return 1 + 0j
    log_lim = np.sum(np.log(np.sinh(mu - 0.5j * gamma)) - np.log(np.sinh(mu + 0.5j * gamma))) - 1j * gamma * mu.size
    return complex(np.exp(log_lim))


def _s_lim(mu, gamma: float):
    a = math.tan(gamma / 2)
    return -_arctan(a / np.tanh(mu)) / (2 * math.pi) + gamma / (4 * math.pi)


def xxz_residual(mu: Sequence[complex], quantum_numbers: Sequence[float], n_other: int, gamma: float, L: int) -> float:
    """
    한 묶음의 극한 log 방정식 (I 단위):
      L·s_lim(μ_i) − I_i − Σ_j r(μ_i − μ_j) + n_other·(π/2 − γ)/π = 0
      s_lim(μ) = −(1/2π) arctan(a/tanh μ) + γ/(4π)
    다른 묶음은 r → −(π/2 − γ)/π 상수로만 남는다. 실수부는 가장 가까운 정수로 wrap.
    """
    mu = np.asarray(mu, dtype=complex)
    if mu.size == 0:
        return 0.0
    qn = np.asarray(quantum_numbers, dtype=float)
    d = L * _s_lim(mu, gamma) - qn + n_other * (math.pi / 2 - gamma) / math.pi
    if mu.size > 1:
        d = d - np.sum(_r(mu[:, None] - mu[None, :], gamma), axis=1)
    wrapped = (d.real - np.round(d.real)) + 1j * d.imag
    return float(np.max(np.abs(wrapped)))


def xxz_limit_check(gamma: float, L: int, state: BetheState, alpha: complex) -> XXZReport:
    """
    root 를 ±α/2 중 가까운 쪽 묶음으로 나눈다.
    - A: μ = λ − α/2,  B: μ = −λ − α/2 (I → −I, λ → −λ 대칭)
    - 두 묶음의 극한 방정식 residual 최대값, Λ_lim 과 실제 Λ 의 상대 차이를 보고
    """
    roots = np.asarray(state.roots, dtype=complex)
    qn = np.asarray(state.quantum_numbers, dtype=float)
    in_a = np.abs(roots - alpha / 2) <= np.abs(roots + alpha / 2)
    mu_a = roots[in_a] - alpha / 2
    mu_b = -roots[~in_a] - alpha / 2
    n_a, n_b = int(mu_a.size), int(mu_b.size)

    residual = max(
        xxz_residual(mu_a, qn[in_a], n_b, gamma, L),
        xxz_residual(mu_b, -qn[~in_a], n_a, gamma, L),
    )
    lam_lim = xxz_limit_lambda(np.concatenate([mu_a, mu_b]), gamma)
    with np.errstate(over="ignore"):
        lam = complex(np.exp(_log_lambda(roots, gamma, alpha)))
    return XXZReport(
        residual=residual,
        lambda_lim=lam_lim,
        modulus_deviation=float(abs(abs(lam_lim) - 1.0)),
        lambda_deviation=float(abs(lam - lam_lim) / abs(lam_lim)),
        n_shifted=n_a + n_b,
        cluster_sizes=(n_a, n_b),
    )


def xxz_approach(gamma: float, L: int, offsets: Sequence[float]) -> List[XXZReport]:
    """
    ✅ packed M = L/2 상태를 anchor T 에서 T_c^− + offset 들로 차례로 끌고 가며 xxz_limit_check.
    - offsets 는 큰 것부터 (T_c^− 쪽으로 다가감)
    - L ≡ 0 mod 4 (두 묶음 크기가 같다)
    """
    _check_gamma(gamma)
    if is_gaussian_line(gamma):
        raise ParameterError("[bethe_solver] the XXZ limit needs gamma < pi/2")
    if L < 4 or L % 4:
        raise ParameterError(f"L must be a multiple of 4, got {L}")
    if any(b >= a for a, b in zip(offsets, offsets[1:])):
        raise ParameterError(f"offsets must decrease, got {list(offsets)}")

    T_prev = anchor_temperature(gamma)
    state = solve_family(gamma, T_prev, L, L // 2)
    reports: List[XXZReport] = []
    for off in offsets:
        T = edge_temperature(gamma, Edge.LOWER, off)
        state = continue_in_T(state, gamma, T_prev, T)
        reports.append(xxz_limit_check(gamma, L, state, bethe_alpha(gamma, T)))
        T_prev = T
    return reports
