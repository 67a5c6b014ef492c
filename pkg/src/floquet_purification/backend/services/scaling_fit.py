# src/floquet_purification/backend/services/scaling_fit.py
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np
from scipy import stats

from floquet_purification.backend.services.errors import FitError

"""
scaling_fit.py
- finite-size 외삽, power-law, log-law 회귀 공통 모듈
- 모든 fit 은 ScalingFit 하나로 반환
"""


@dataclass(frozen=True)
class ScalingFit:
    model: str
    params: Dict[str, float]
    stderr: Dict[str, float]
    residuals: np.ndarray = field(repr=False)
    n_points: int = 0
    data: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def max_relative_residual(self, y: Sequence[float]) -> float:
        y = np.asarray(y, dtype=float)
        return float(np.max(np.abs(self.residuals) / np.abs(y)))


def _as_clean_arrays(x: Sequence[float], y: Sequence[float], min_points: int, tag: str):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise FitError(f"[scaling_fit] {tag}: x and y differ in length", {"nx": x.size, "ny": y.size})
    if x.size < min_points:
        raise FitError(
            f"[scaling_fit] {tag}: need at least {min_points} points, got {x.size}",
            {"n_points": int(x.size)},
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise FitError(f"[scaling_fit] {tag}: non-finite input", {"x": x.tolist(), "y": y.tolist()})
    return x, y


def fit_linear_in_inverse_l(L: Sequence[float], y: Sequence[float], min_points: int = 4) -> ScalingFit:
    """L·y = a + b/L  →  params a, b (a = y 의 1/L 계수의 극한)."""
    L, y = _as_clean_arrays(L, y, min_points, "linear-in-1/L")
    ly = L * y
    res = stats.linregress(1.0 / L, ly)
    pred = res.intercept + res.slope / L
    return ScalingFit(
        model="L*y = a + b/L",
        params={"a": float(res.intercept), "b": float(res.slope)},
        stderr={"a": float(res.intercept_stderr), "b": float(res.stderr)},
        residuals=ly - pred,
        n_points=int(L.size),
    )


def fit_power_law(x: Sequence[float], y: Sequence[float], min_points: int = 3) -> ScalingFit:
    """y = c · x^p  (log-log 선형회귀)."""
    x, y = _as_clean_arrays(x, y, min_points, "power-law")
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("[scaling_fit] power-law: inputs must be positive", {"x": x.tolist(), "y": y.tolist()})
    res = stats.linregress(np.log(x), np.log(y))
    pred = np.exp(res.intercept) * x ** res.slope
    return ScalingFit(
        model="y = c * x^p",
        params={"c": float(np.exp(res.intercept)), "p": float(res.slope)},
        stderr={"log_c": float(res.intercept_stderr), "p": float(res.stderr)},
        residuals=y - pred,
        n_points=int(x.size),
    )


def fit_log_law(L: Sequence[float], s: Sequence[float], min_points: int = 3) -> ScalingFit:
    """S = a · log L + b."""
    L, s = _as_clean_arrays(L, s, min_points, "log-law")
    if np.any(L <= 0):
        raise FitError("[scaling_fit] log-law: L must be positive", {"L": L.tolist()})
    res = stats.linregress(np.log(L), s)
    pred = res.intercept + res.slope * np.log(L)
    return ScalingFit(
        model="S = a*log(L) + b",
        params={"a": float(res.slope), "b": float(res.intercept)},
        stderr={"a": float(res.stderr), "b": float(res.intercept_stderr)},
        residuals=s - pred,
        n_points=int(L.size),
    )


def fit_two_variable_power_law(
    eps: Sequence[float],
    L: Sequence[float],
    y: Sequence[float],
    min_points: int = 3,
) -> ScalingFit:
    """y = c · ε^p · L^q  (log 공간 최소제곱)."""
    eps, y = _as_clean_arrays(eps, y, min_points, "two-variable power-law")
    L = np.asarray(L, dtype=float)
    if L.shape != eps.shape:
        raise FitError("[scaling_fit] two-variable power-law: L has wrong length", {"nL": L.size})
    if np.any(eps <= 0) or np.any(L <= 0) or np.any(y <= 0):
        raise FitError(
            "[scaling_fit] two-variable power-law: inputs must be positive",
            {"eps": eps.tolist(), "L": L.tolist(), "y": y.tolist()},
        )
    design = np.column_stack([np.ones_like(eps), np.log(eps), np.log(L)])
    coef, _, rank, _ = np.linalg.lstsq(design, np.log(y), rcond=None)
    if rank < 3:
        raise FitError("[scaling_fit] two-variable power-law: degenerate design (vary both eps and L)", {"rank": int(rank)})
    pred = np.exp(design @ coef)
    return ScalingFit(
        model="y = c * eps^p * L^q",
        params={"c": float(np.exp(coef[0])), "p": float(coef[1]), "q": float(coef[2])},
        stderr={},
        residuals=y - pred,
        n_points=int(eps.size),
    )
