# src/floquet_purification/backend/services/dense_evolution.py
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from floquet_purification.backend.infra.settings import Settings, get_settings
from floquet_purification.backend.services.errors import (
    CapacityError,
    NumericError,
    ParameterError,
)
from floquet_purification.backend.services.model_core import (
    CircuitParams,
    SymmetryOps,
    perturbation_gate_u3,
    perturbation_gate_u3prime,
    two_site_gate,
)

"""
dense_evolution.py

[역할]
- magnetization sector 별 dense Floquet block 조립 (sparse 2-site operator → densify)
- 최대 혼합 상태의 purity trace, 전체 spectrum, gap Δ
- pure-state trajectory 의 half-chain entanglement entropy

[비트 규약]
- site m (1..L) ↔ tensor axis m−1, site 1 이 최상위 비트
- ↑ = 0, ↓ = 1  →  n_up = L − popcount(x)
"""

COMPLEX_BYTES = 16
MODULUS_RTOL = 1e-8


class Variant(str, Enum):
    PLAIN = "plain"              # U_F = U₂U₁
    SANDWICHED = "sandwiched"    # U₃ U_F U₃
    TILTED = "tilted"            # U₃′ U_F


@dataclass(frozen=True)
class SectorBasis:
    L: int
    n_up: int
    states: np.ndarray                    # 정렬된 configuration 정수
    index_of: np.ndarray = field(repr=False)  # 2^L lookup, sector 밖은 −1

    @property
    def dim(self) -> int:
        return int(self.states.size)


@dataclass
class BlockOperator:
    params: CircuitParams
    variant: Variant
    blocks: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def sectors(self) -> List[int]:
        return sorted(self.blocks)


@dataclass
class PurityTrace:
    steps: List[Tuple[int, float, float]] = field(default_factory=list)  # (N, purity, log_norm)

    @property
    def n(self) -> np.ndarray:
        return np.array([s[0] for s in self.steps], dtype=int)

    @property
    def purity(self) -> np.ndarray:
        return np.array([s[1] for s in self.steps], dtype=float)


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray   # |λ| 내림차순, 동률은 phase → sector 순
    sectors: np.ndarray
    gap: float
    degeneracy_count: int


# =========================
# Bit helpers
# =========================
def _bit_shift(L: int, site: int) -> int:
    return L - site


def popcount(x: np.ndarray, L: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    out = np.zeros_like(x)
    for b in range(L):
        out += (x >> b) & 1
    return out


def sector_basis(L: int, n_up: int) -> SectorBasis:
    if not 0 <= n_up <= L:
        raise ParameterError(f"n_up must lie in [0, {L}], got {n_up}")
    configs = np.arange(1 << L, dtype=np.int64)
    states = configs[popcount(configs, L) == L - n_up]
    index_of = np.full(1 << L, -1, dtype=np.int64)
    index_of[states] = np.arange(states.size)
    return SectorBasis(L=L, n_up=n_up, states=states, index_of=index_of)


def _bonds(L: int) -> Tuple[List[Tuple[int, int]], List[Tuple[int, int]]]:
    """U₁: (2m, 2m+1) (wrap (L, 1) 포함), U₂: (2m−1, 2m). 1-based site."""
    layer1 = [(2 * m, 2 * m + 1 if 2 * m < L else 1) for m in range(1, L // 2 + 1)]
    layer2 = [(2 * m - 1, 2 * m) for m in range(1, L // 2 + 1)]
    return layer1, layer2


def _diag_factor(states: np.ndarray, L: int, factors: np.ndarray) -> np.ndarray:
    out = np.ones(states.size, dtype=complex)
    for site in range(1, L + 1):
        bit = (states >> _bit_shift(L, site)) & 1
        out *= factors[site - 1][bit]
    return out


def _sector_gate(basis: SectorBasis, gate: np.ndarray, site_a: int, site_b: int) -> sp.csr_matrix:
    """site_a, site_b 위 4×4 gate 의 sector 제한 sparse 행렬 (gate 는 U(1) 보존)."""
    L = basis.L
    states = basis.states
    sa, sb = _bit_shift(L, site_a), _bit_shift(L, site_b)
    ba = (states >> sa) & 1
    bb = (states >> sb) & 1
    local_in = 2 * ba + bb
    cleared = states & ~((1 << sa) | (1 << sb))
    cols = np.arange(states.size)

    rows_all, cols_all, data_all = [], [], []
    for local_out in range(4):
        coeff = gate[local_out, local_in]
        mask = coeff != 0
        if not np.any(mask):
            continue
        target = cleared[mask] | ((local_out >> 1) << sa) | ((local_out & 1) << sb)
        rows = basis.index_of[target]
        if np.any(rows < 0):
            raise NumericError("[dense_evolution] gate leaked amplitude outside the sector")
        rows_all.append(rows)
        cols_all.append(cols[mask])
        data_all.append(coeff[mask])

    d = states.size
    return sp.csr_matrix(
        (np.concatenate(data_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(d, d),
    )


# =========================
# Block construction
# =========================
def estimate_block_bytes(L: int, sectors: Iterable[int]) -> int:
    return sum(math.comb(L, n) ** 2 for n in sectors) * COMPLEX_BYTES


def _check_capacity(L: int, sectors: Sequence[int], settings: Settings) -> None:
    if L > settings.l_max_ed:
        raise CapacityError(
            f"[dense_evolution] L={L} exceeds FLOQUET_L_MAX_ED={settings.l_max_ed}",
            required_bytes=estimate_block_bytes(L, sectors),
            budget_bytes=settings.memory_budget_bytes,
        )
    required = estimate_block_bytes(L, sectors)
    if required > settings.memory_budget_bytes:
        raise CapacityError(
            f"[dense_evolution] dense blocks for L={L} do not fit the memory budget",
            required_bytes=required,
            budget_bytes=settings.memory_budget_bytes,
        )


def build_sector_block(p: CircuitParams, variant: Variant, n_up: int) -> np.ndarray:
    basis = sector_basis(p.L, n_up)
    gate = two_site_gate(p).entries
    layer1, layer2 = _bonds(p.L)

    mat = np.eye(basis.dim, dtype=complex)
    if variant is Variant.SANDWICHED:
        mat = _diag_factor(basis.states, p.L, perturbation_gate_u3(p))[:, None] * mat

    for a, b in layer1 + layer2:
        mat = _sector_gate(basis, gate, a, b) @ mat

    if variant is Variant.SANDWICHED:
        mat = _diag_factor(basis.states, p.L, perturbation_gate_u3(p))[:, None] * mat
    elif variant is Variant.TILTED:
        mat = _diag_factor(basis.states, p.L, perturbation_gate_u3prime(p))[:, None] * mat
    return np.asarray(mat)


def build_block_operator(
    p: CircuitParams,
    variant: Variant = Variant.PLAIN,
    sectors: Optional[Sequence[int]] = None,
    settings: Optional[Settings] = None,
) -> BlockOperator:
    """
    ✅ sector 별 dense U_F block
    - sectors 미지정 시 n_up = 0..L 전체
    - capacity 초과 시 CapacityError (필요 메모리 추정치 포함)
    """
    settings = settings or get_settings()
    sectors = list(range(p.L + 1)) if sectors is None else sorted(set(sectors))
    _check_capacity(p.L, sectors, settings)

    blocks = {n: build_sector_block(p, variant, n) for n in sectors}
    return BlockOperator(params=p, variant=variant, blocks=blocks)


def circuit_operator(p: CircuitParams, variant: Variant = Variant.PLAIN) -> BlockOperator:
    """block 없이 gate 단위 적용만 쓰는 handle (trajectory 용)."""
    return BlockOperator(params=p, variant=variant, blocks={})


# =========================
# Gate-level evolution on the 2^L tensor
# =========================
def _apply_two_site(psi: np.ndarray, gate4: np.ndarray, ax_a: int, ax_b: int) -> np.ndarray:
    out = np.tensordot(gate4, psi, axes=([2, 3], [ax_a, ax_b]))
    return np.moveaxis(out, [0, 1], [ax_a, ax_b])


def _apply_diag(psi: np.ndarray, factors: np.ndarray) -> np.ndarray:
    L = psi.ndim
    for axis in range(L):
        shape = [1] * L
        shape[axis] = 2
        psi = psi * factors[axis].reshape(shape)
    return psi


def apply_floquet(op: BlockOperator, psi: np.ndarray) -> np.ndarray:
    """한 주기 U_F (variant 포함) 를 shape (2,)*L tensor 에 적용."""
    p = op.params
    psi = np.asarray(psi, dtype=complex).reshape((2,) * p.L)
    gate4 = two_site_gate(p).entries.reshape(2, 2, 2, 2)
    layer1, layer2 = _bonds(p.L)

    if op.variant is Variant.SANDWICHED:
        psi = _apply_diag(psi, perturbation_gate_u3(p))
    for a, b in layer1 + layer2:
        psi = _apply_two_site(psi, gate4, a - 1, b - 1)
    if op.variant is Variant.SANDWICHED:
        psi = _apply_diag(psi, perturbation_gate_u3(p))
    elif op.variant is Variant.TILTED:
        psi = _apply_diag(psi, perturbation_gate_u3prime(p))
    return psi


# =========================
# Purity
# =========================
def _power_iterate(op: BlockOperator, n_steps: int) -> Iterator[Tuple[int, Dict[int, np.ndarray], float]]:
    if n_steps < 1:
        raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
    if not op.blocks:
        raise ParameterError("operator has no dense blocks; use build_block_operator")

    mats = {n: np.eye(b.shape[0], dtype=complex) for n, b in op.blocks.items()}
    log_norm = 0.0
    yield 0, mats, log_norm

    for step in range(1, n_steps + 1):
        mats = {n: op.blocks[n] @ a for n, a in mats.items()}
        scale = max(float(np.max(np.linalg.norm(a, axis=0))) for a in mats.values())
        if not np.isfinite(scale) or scale <= 0:
            raise NumericError(f"[dense_evolution] rescaling failed at step {step} (scale={scale})")
        mats = {n: a / scale for n, a in mats.items()}
        log_norm += math.log(scale)
        yield step, mats, log_norm


def purity_of_blocks(mats: Dict[int, np.ndarray]) -> float:
    """Π = Σ Tr[(AA†)²] / (Σ Tr AA†)²  (block 공통 배율에 불변)"""
    num = 0.0
    den = 0.0
    for a in mats.values():
        aad = a @ a.conj().T
        num += float(np.sum(np.abs(aad) ** 2))
        den += float(np.real(np.trace(aad)))
    if den <= 0 or not np.isfinite(num):
        raise NumericError("[dense_evolution] degenerate purity denominator")
    return num / den ** 2


def evolve_purity(op: BlockOperator, n_steps: int) -> PurityTrace:
    trace = PurityTrace()
    for step, mats, log_norm in _power_iterate(op, n_steps):
        trace.steps.append((step, purity_of_blocks(mats), log_norm))
    return trace


def steps_to_purity(trace: PurityTrace, threshold: float = 0.99) -> Optional[int]:
    for n, purity, _ in trace.steps:
        if purity >= threshold:
            return n
    return None


def ferromagnetic_overlap(op: BlockOperator, n_steps: int) -> np.ndarray:
    """정규화된 ρ_N ∝ A A† 에서 |↑…↑⟩ 의 가중치, N = 0..n_steps."""
    L = op.params.L
    if L not in op.blocks:
        raise ParameterError("all-up sector (n_up = L) must be among the blocks")
    out = np.empty(n_steps + 1)
    for step, mats, _ in _power_iterate(op, n_steps):
        total = sum(float(np.sum(np.abs(a) ** 2)) for a in mats.values())
        out[step] = float(np.sum(np.abs(mats[L]) ** 2)) / total
    return out


def purification_time_from_gap(gap: float, threshold: float = 0.99) -> float:
    """1 − Π ∼ e^{−2ΔN} 가정 하의 threshold 도달 step 추정."""
    if gap <= 0:
        return math.inf
    return math.log(1.0 / (1.0 - threshold)) / (2.0 * gap)


# =========================
# Spectrum
# =========================
def full_spectrum(op: BlockOperator) -> SpectrumResult:
    vals, secs = [], []
    for n in op.sectors:
        try:
            ev = scipy.linalg.eigvals(op.blocks[n], check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise NumericError(f"[dense_evolution] eigensolver failed in sector n_up={n}: {e}") from e
        vals.append(ev)
        secs.append(np.full(ev.size, n))

    eig = np.concatenate(vals)
    sector = np.concatenate(secs)
    mod = np.abs(eig)
    top = float(mod.max())

    # 상대 1e−8 이내 modulus 는 동률로 보고 phase → sector 순으로 정렬
    mod_key = -np.round(mod / top, 8) if top > 0 else -mod
    order = np.lexsort((sector, np.angle(eig), mod_key))
    eig = eig[order]
    sector = sector[order]
    mod = mod[order]

    if eig.size < 2 or mod[1] == 0:
        gap = math.inf
    else:
        gap = float(math.log(mod[0] / mod[1]))
    if abs(gap) < MODULUS_RTOL:
        gap = 0.0
    degeneracy = int(np.sum(mod >= top * (1 - MODULUS_RTOL)))
    return SpectrumResult(eigenvalues=eig, sectors=sector, gap=gap, degeneracy_count=degeneracy)


def spectral_pairing_deviation(spec: SpectrumResult, floor: float = 1e-12) -> float:
    """λ → 1/conj(λ) 닫힘의 최대 편차 (|λ| < floor 는 제외)."""
    ev = spec.eigenvalues[np.abs(spec.eigenvalues) > floor]
    partners = 1.0 / np.conj(ev)
    dist = np.abs(partners[:, None] - ev[None, :]).min(axis=1)
    return float(np.max(dist / np.maximum(1.0, np.abs(partners))))


# =========================
# Antiunitary check
# =========================
def _permutation_matrix(basis: SectorBasis, perm: Sequence[int]) -> sp.csr_matrix:
    L = basis.L
    target = np.zeros_like(basis.states)
    for i in range(L):
        bit = (basis.states >> _bit_shift(L, i + 1)) & 1
        target |= bit << _bit_shift(L, perm[i] + 1)
    rows = basis.index_of[target]
    d = basis.dim
    return sp.csr_matrix((np.ones(d), (rows, np.arange(d))), shape=(d, d))


def check_antiunitary(op: BlockOperator, s: SymmetryOps) -> float:
    """
    max_n ‖R conj(U) R⁻¹ U − 1‖_max, R = S∘P (sector 내 permutation).
    U_θ 는 sector 마다 scalar 라 결과에 영향 없음.
    """
    if s.L != op.params.L:
        raise ParameterError("symmetry size does not match the operator")
    perm = s.composite()
    worst = 0.0
    for n in op.sectors:
        basis = sector_basis(s.L, n)
        r = _permutation_matrix(basis, perm)
        u = op.blocks[n]
        lhs = np.asarray(r @ np.conj(u) @ r.T)
        prod = lhs @ u - np.eye(basis.dim)
        worst = max(worst, float(np.max(np.abs(prod))))
    return worst


# =========================
# Entanglement
# =========================
def half_chain_entropy(psi: np.ndarray, L: int, cut: Optional[int] = None) -> float:
    cut = L // 2 if cut is None else cut
    if not 0 < cut < L:
        raise ParameterError(f"cut must lie in (0, {L}), got {cut}")
    mat = np.asarray(psi).reshape(1 << cut, 1 << (L - cut))
    sv = scipy.linalg.svdvals(mat)
    prob = sv ** 2
    prob = prob[prob > 1e-300]
    prob = prob / prob.sum()
    return float(-np.sum(prob * np.log(prob)))


def random_sector_state(L: int, n_up: int, seed: int) -> np.ndarray:
    """sector 내 Haar-random 정규화 상태를 2^L tensor 로 embed."""
    basis = sector_basis(L, n_up)
    rng = np.random.default_rng(seed)
    amp = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    amp /= np.linalg.norm(amp)
    psi = np.zeros(1 << L, dtype=complex)
    psi[basis.states] = amp
    return psi.reshape((2,) * L)


def trajectory_entropy(
    op: BlockOperator,
    n_up: int,
    seed: int,
    n_steps: int,
    cut: Optional[int] = None,
    record_every: int = 1,
) -> List[Tuple[int, float]]:
    """
    ✅ pure-state trajectory 의 half-chain entropy (natural log)
    - 매 step 정규화, record_every 간격으로 기록 (N = 0 포함)
    """
    L = op.params.L
    if n_steps < 1 or record_every < 1:
        raise ParameterError("n_steps and record_every must be >= 1")
    psi = random_sector_state(L, n_up, seed)
    out = [(0, half_chain_entropy(psi, L, cut))]
    for step in range(1, n_steps + 1):
        psi = apply_floquet(op, psi)
        norm = float(np.linalg.norm(psi))
        if norm == 0 or not np.isfinite(norm):
            raise NumericError(f"[dense_evolution] state norm collapsed at step {step}")
        psi = psi / norm
        if step % record_every == 0 or step == n_steps:
            out.append((step, half_chain_entropy(psi, L, cut)))
    return out
