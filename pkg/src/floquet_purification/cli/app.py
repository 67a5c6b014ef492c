# src/floquet_purification/cli/app.py
from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path
from typing import Callable, List, Optional, Sequence

from floquet_purification.backend.infra.settings import get_settings
from floquet_purification.backend.services import experiment_service as svc
from floquet_purification.backend.services.errors import CapacityError, NumericError, ParameterError
from floquet_purification.backend.services.result_frame import write_table

"""
floquet-purification CLI

  floquet-purification phase-diagram --gamma 0.5 --T 0,0.5,1,2
  floquet-purification purity --L 8,10 --gamma 0.7 --T 1.5 --steps 400
  floquet-purification bethe tau --gamma 0.7 --T 1.5 --L 16,32
  floquet-purification ff census --L 16 --T 2

exit code: 0 성공 / 2 파라미터 오류 / 3 수치·용량 오류
"""

EXIT_OK = 0
EXIT_PARAMETER = 2
EXIT_NUMERIC = 3


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma", type=_float_list, default=None, help="γ 목록 (comma)")
    p.add_argument("--T", type=_float_list, default=None, help="T 목록 (comma)")
    p.add_argument("--L", type=_int_list, default=None, help="L 목록 (comma, 짝수)")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--delta-prime", dest="delta_prime", type=float, default=None)
    p.add_argument("--variant", choices=["plain", "sandwiched", "tilted"], default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=_int_list, default=None)
    p.add_argument("--n-up", dest="n_up", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--config", default=None, help="flat TOML 설정 파일 (flag 가 우선)")
    p.add_argument("--out", default=None, help="출력 경로 (생략 시 stdout)")
    p.add_argument("--format", dest="fmt", choices=["csv", "json"], default=None)
    p.add_argument("--no-progress", dest="progress", action="store_false", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floquet-purification",
        description="integrable non-unitary Floquet circuit: purification phase toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("phase-diagram", "purity", "spectrum", "entropy"):
        _add_common(sub.add_parser(name))

    gap = sub.add_parser("gap")
    _add_common(gap)
    gap.add_argument("--epsilon", type=_float_list, default=None, help="γ = π/2 − ε scaling")

    bethe = sub.add_parser("bethe")
    bethe_sub = bethe.add_subparsers(dest="mode", required=True)
    for mode in ("solve", "tau", "extrapolate", "fit-nu"):
        p = bethe_sub.add_parser(mode)
        _add_common(p)
        p.add_argument("--M", type=int, default=None, help="magnon 수 (solve, 기본 L/2)")
        p.add_argument("--shift", type=float, default=None, help="continuation root shift (기본 0.5)")
        p.add_argument("--edge", choices=["lower", "upper"], default=None)
        p.add_argument("--offsets", type=_float_list, default=None)

    ff = sub.add_parser("ff")
    ff_sub = ff.add_subparsers(dest="mode", required=True)
    for mode in ("census", "perturb"):
        _add_common(ff_sub.add_parser(mode))

    return parser


_FLAG_KEYS = (
    "gamma", "T", "L", "delta", "delta_prime", "variant", "steps", "seed", "n_up",
    "workers", "out", "fmt", "progress", "epsilon", "M", "shift", "edge", "offsets",
)


def _config_from_args(args: argparse.Namespace) -> svc.RunConfig:
    file_values = svc.load_run_config_file(args.config) if args.config else None
    flags = {k: getattr(args, k) for k in _FLAG_KEYS if hasattr(args, k)}
    command = args.command if not getattr(args, "mode", None) else f"{args.command} {args.mode}"
    return svc.build_run_config(command, file_values, **flags)


def _resolve_out(out: Optional[str]) -> Optional[Path]:
    """상대 경로는 FLOQUET_OUTPUT_DIR 기준."""
    if out is None:
        return None
    path = Path(out)
    return path if path.is_absolute() else Path(get_settings().output_dir) / path


def _dispatch(args: argparse.Namespace, cfg: svc.RunConfig):
    if args.command == "bethe":
        return svc.cmd_bethe(cfg, args.mode)
    if args.command == "ff":
        return svc.cmd_ff(cfg, args.mode)
    run: Callable = svc.COMMANDS[args.command]
    return run(cfg)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        cfg = _config_from_args(args)
        print(f"[JOB] {cfg.command}: L={cfg.Ls} gamma={cfg.gammas} T={cfg.Ts}", file=sys.stderr)
        table = _dispatch(args, cfg)
        written = write_table(table, _resolve_out(cfg.out), cfg.fmt)
    except ParameterError as e:
        print(f"[FAILED] invalid parameters: {e}", file=sys.stderr)
        return EXIT_PARAMETER
    except (NumericError, CapacityError) as e:
        print(f"[FAILED] {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception:
        print("[FATAL] unexpected failure", file=sys.stderr)
        print(traceback.format_exc(), file=sys.stderr)
        raise

    for path in written:
        print(f"[OK] wrote {path}", file=sys.stderr)
    print(f"[OK] {cfg.command}: rows={len(table.frame)}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
