# backend/infra/settings.py
import os
from dataclasses import dataclass

from dotenv import load_dotenv

# -------------------------------------------------------------------
# 1. 실행 환경 설정 초기화 (.env → os.environ)
# -------------------------------------------------------------------
load_dotenv()


@dataclass(frozen=True)
class Settings:
    l_max_ed: int
    memory_budget_mb: int
    workers: int
    output_dir: str

    @property
    def memory_budget_bytes(self) -> int:
        return self.memory_budget_mb * 2**20


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError:
        raise RuntimeError(f"{name} must be an integer, got {raw!r}")


def get_settings() -> Settings:
    return Settings(
        l_max_ed=_env_int("FLOQUET_L_MAX_ED", 16),
        memory_budget_mb=_env_int("FLOQUET_MEMORY_BUDGET_MB", 2048),
        workers=_env_int("FLOQUET_WORKERS", os.cpu_count() or 1),
        output_dir=os.environ.get("FLOQUET_OUTPUT_DIR", "."),
    )
