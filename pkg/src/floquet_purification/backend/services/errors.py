from __future__ import annotations

from typing import List, Optional, Sequence


class FloquetError(Exception):
    """패키지 공통 예외의 루트."""


class ParameterError(FloquetError, ValueError):
    """파라미터 검증 실패 / 정의역 밖 입력 (CLI exit code 2)."""


class CapacityError(FloquetError, MemoryError):
    """
    ED 용량 초과.
    - required_bytes: 필요한 메모리 추정치 (dense block 기준)
    """

    def __init__(self, message: str, required_bytes: int, budget_bytes: int):
        super().__init__(
            f"{message} (required≈{required_bytes / 2**20:.1f} MiB, "
            f"budget={budget_bytes / 2**20:.1f} MiB)"
        )
        self.required_bytes = required_bytes
        self.budget_bytes = budget_bytes


class NumericError(FloquetError, ArithmeticError):
    """수치 계산 실패 (CLI exit code 3)."""


class ConvergenceError(NumericError):
    """
    Newton / eigensolver 비수렴.
    - last_residual: 마지막 residual max-norm
    - history: iteration 별 residual 기록
    """

    def __init__(
        self,
        message: str,
        last_residual: float = float("nan"),
        history: Optional[Sequence[float]] = None,
    ):
        super().__init__(f"{message} (last_residual={last_residual:.3e})")
        self.last_residual = last_residual
        self.history: List[float] = list(history or [])


class RootCollisionError(NumericError):
    """두 Bethe root 차이가 r(λ)의 pole에 닿은 경우."""

    def __init__(self, i: int, j: int, distance: float):
        super().__init__(f"[bethe_solver] roots {i} and {j} hit a pole of r (|Δ|={distance:.3e})")
        self.pair = (i, j)


class SingularConfigurationError(NumericError):
    """고유값 곱 공식의 분모가 0에 가까운 root 배치."""


class FitError(NumericError):
    """
    fit 전제조건 위반 (점 부족, 부호 반전 등).
    - diagnostics: 실패 판단에 사용한 값들
    """

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
