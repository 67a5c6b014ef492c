from __future__ import annotations

from typing import Iterable, List

import pandas as pd


PHASE_COLUMNS = [
    "gamma",
    "T",
    "delta",
    "delta_prime",
    "region",
    "phase",
    "alpha_re",
    "alpha_im",
    "t_c_minus",
    "t_c_plus",
    "period",
]

PURITY_COLUMNS = [
    "L",
    "gamma",
    "T",
    "variant",
    "N",
    "purity",
    "log_norm",
]

SPECTRUM_COLUMNS = [
    "L",
    "gamma",
    "T",
    "variant",
    "rank",
    "n_up",
    "re",
    "im",
    "modulus",
]

GAP_COLUMNS = [
    "L",
    "gamma",
    "T",
    "epsilon",
    "variant",
    "gap",
    "degeneracy_count",
    "purification_time_est",
    "census_degeneracy",
]

ENTROPY_COLUMNS = [
    "L",
    "gamma",
    "T",
    "seed",
    "n_up",
    "steps",
    "entropy_late_mean",
    "entropy_late_std",
]

ENTROPY_FIT_COLUMNS = [
    "parameter",
    "value",
    "stderr",
]

ROOT_COLUMNS = [
    "gamma",
    "T",
    "L",
    "M",
    "index",
    "quantum_number",
    "re_lambda",
    "im_lambda",
]

TAU_COLUMNS = [
    "gamma",
    "T",
    "L",
    "log_ratio",
    "t_L",
    "tau_L",
    "swapped",
]

EXTRAPOLATION_COLUMNS = [
    "gamma",
    "T",
    "n_sizes",
    "a",
    "a_err",
    "b",
    "b_err",
    "tau_inf",
    "tau_inf_err",
]

NU_COLUMNS = [
    "gamma",
    "edge",
    "offset",
    "T",
    "T_solved",
    "tau_inf",
    "tau_inf_err",
    "nu",
    "nu_err",
    "nu_analytic",
]

CENSUS_COLUMNS = [
    "L",
    "T",
    "beta",
    "max_modulus",
    "degeneracy",
    "degeneracy_integer_grid",
    "degeneracy_half_integer_grid",
    "n_type_ii",
]

PERTURB_COLUMNS = [
    "L",
    "T",
    "beta",
    "k",
    "sign",
    "re_lambda",
    "im_lambda",
    "f_sum",
    "f_edge_corrected",
    "f_integral",
    "in_top",
]


def _ensure_columns(df: pd.DataFrame, columns: Iterable[str]) -> pd.DataFrame:
    for col in columns:
        if col not in df.columns:
            df[col] = pd.NA
    return df


def _ensure_unique_columns(df: pd.DataFrame) -> pd.DataFrame:
    if df.columns.duplicated().any():
        df = df.loc[:, ~df.columns.duplicated()].copy()
    return df


def _prepare(df: pd.DataFrame, columns: List[str]) -> pd.DataFrame:
    out = _ensure_unique_columns(df.copy())
    return _ensure_columns(out, columns)


def _to_float(out: pd.DataFrame, cols: Iterable[str]) -> None:
    for col in cols:
        out[col] = pd.to_numeric(out[col], errors="coerce").astype(float)


def _to_int(out: pd.DataFrame, cols: Iterable[str]) -> None:
    for col in cols:
        out[col] = pd.to_numeric(out[col], errors="coerce").astype("Int64")


def _to_label(out: pd.DataFrame, cols: Iterable[str]) -> None:
    for col in cols:
        out[col] = out[col].fillna("").astype(str).str.strip()


def normalize_phase_df(df: pd.DataFrame) -> pd.DataFrame:
    """
    phase-diagram 결과 정규화.
    - region/phase 는 문자열 label
    - 나머지는 float (발산값 inf 유지)
    """
    if df is None or df.empty:
        return pd.DataFrame(columns=PHASE_COLUMNS)

    out = _prepare(df, PHASE_COLUMNS)
    _to_label(out, ["region", "phase"])
    _to_float(out, [c for c in PHASE_COLUMNS if c not in ("region", "phase")])
    return out[PHASE_COLUMNS]


def normalize_purity_df(df: pd.DataFrame) -> pd.DataFrame:
    if df is None or df.empty:
        return pd.DataFrame(columns=PURITY_COLUMNS)

    out = _prepare(df, PURITY_COLUMNS)
    _to_int(out, ["L", "N"])
    _to_label(out, ["variant"])
    _to_float(out, ["gamma", "T", "purity", "log_norm"])
    return out[PURITY_COLUMNS]


def normalize_spectrum_df(df: pd.DataFrame) -> pd.DataFrame:
    if df is None or df.empty:
        return pd.DataFrame(columns=SPECTRUM_COLUMNS)

    out = _prepare(df, SPECTRUM_COLUMNS)
    _to_int(out, ["L", "rank", "n_up"])
    _to_label(out, ["variant"])
    _to_float(out, ["gamma", "T", "re", "im", "modulus"])
    return out[SPECTRUM_COLUMNS]


def normalize_gap_df(df: pd.DataFrame) -> pd.DataFrame:
    """census_degeneracy 는 γ = π/2 에서만 채워지고 나머지는 NA."""
    if df is None or df.empty:
        return pd.DataFrame(columns=GAP_COLUMNS)

    out = _prepare(df, GAP_COLUMNS)
    _to_int(out, ["L", "degeneracy_count", "census_degeneracy"])
    _to_label(out, ["variant"])
    _to_float(out, ["gamma", "T", "epsilon", "gap", "purification_time_est"])
    return out[GAP_COLUMNS]


def normalize_entropy_df(df: pd.DataFrame) -> pd.DataFrame:
    if df is None or df.empty:
        return pd.DataFrame(columns=ENTROPY_COLUMNS)

    out = _prepare(df, ENTROPY_COLUMNS)
    _to_int(out, ["L", "seed", "n_up", "steps"])
    _to_float(out, ["gamma", "T", "entropy_late_mean", "entropy_late_std"])
    return out[ENTROPY_COLUMNS]


def normalize_fit_df(df: pd.DataFrame) -> pd.DataFrame:
    if df is None or df.empty:
        return pd.DataFrame(columns=ENTROPY_FIT_COLUMNS)

    out = _prepare(df, ENTROPY_FIT_COLUMNS)
    _to_label(out, ["parameter"])
    _to_float(out, ["value", "stderr"])
    return out[ENTROPY_FIT_COLUMNS]


def normalize_root_df(df: pd.DataFrame) -> pd.DataFrame:
    if df is None or df.empty:
        return pd.DataFrame(columns=ROOT_COLUMNS)

    out = _prepare(df, ROOT_COLUMNS)
    _to_int(out, ["L", "M", "index"])
    _to_float(out, ["gamma", "T", "quantum_number", "re_lambda", "im_lambda"])
    return out[ROOT_COLUMNS]


def normalize_tau_df(df: pd.DataFrame) -> pd.DataFrame:
    if df is None or df.empty:
        return pd.DataFrame(columns=TAU_COLUMNS)

    out = _prepare(df, TAU_COLUMNS)
    _to_int(out, ["L"])
    _to_float(out, ["gamma", "T", "log_ratio", "t_L", "tau_L"])
    out["swapped"] = out["swapped"].fillna(False).astype(bool)
    return out[TAU_COLUMNS]


def normalize_extrapolation_df(df: pd.DataFrame) -> pd.DataFrame:
    if df is None or df.empty:
        return pd.DataFrame(columns=EXTRAPOLATION_COLUMNS)

    out = _prepare(df, EXTRAPOLATION_COLUMNS)
    _to_int(out, ["n_sizes"])
    _to_float(out, [c for c in EXTRAPOLATION_COLUMNS if c != "n_sizes"])
    return out[EXTRAPOLATION_COLUMNS]


def normalize_nu_df(df: pd.DataFrame) -> pd.DataFrame:
    if df is None or df.empty:
        return pd.DataFrame(columns=NU_COLUMNS)

    out = _prepare(df, NU_COLUMNS)
    _to_label(out, ["edge"])
    _to_float(out, [c for c in NU_COLUMNS if c != "edge"])
    return out[NU_COLUMNS]


def normalize_census_df(df: pd.DataFrame) -> pd.DataFrame:
    if df is None or df.empty:
        return pd.DataFrame(columns=CENSUS_COLUMNS)

    out = _prepare(df, CENSUS_COLUMNS)
    _to_int(out, ["L", "degeneracy", "degeneracy_integer_grid", "degeneracy_half_integer_grid", "n_type_ii"])
    _to_float(out, ["T", "beta", "max_modulus"])
    return out[CENSUS_COLUMNS]


def normalize_perturb_df(df: pd.DataFrame) -> pd.DataFrame:
    """type (ii) root 별 f±(μ) 표. in_top 은 섭동 top selection 포함 여부."""
    if df is None or df.empty:
        return pd.DataFrame(columns=PERTURB_COLUMNS)

    out = _prepare(df, PERTURB_COLUMNS)
    _to_int(out, ["L", "sign"])
    _to_float(out, ["T", "beta", "k", "re_lambda", "im_lambda", "f_sum", "f_edge_corrected", "f_integral"])
    out["in_top"] = out["in_top"].fillna(False).astype(bool)
    return out[PERTURB_COLUMNS]
