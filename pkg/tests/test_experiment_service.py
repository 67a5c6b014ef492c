import math

import pytest

from floquet_purification.backend.services import data_contracts as dc
from floquet_purification.backend.services import experiment_service as svc
from floquet_purification.backend.services.errors import ParameterError

T_WEAK = math.pi / (2 * math.cos(0.5))


def _cfg(command, **kw):
    kw.setdefault("workers", 1)
    kw.setdefault("progress", False)
    return svc.build_run_config(command, None, **kw)


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('gamma = [0.5, 0.7]\nT = [1.0]\nL = [6]\nsteps = 12\n', encoding="utf-8")
    cfg = svc.build_run_config("purity", svc.load_run_config_file(path), T=[2.0], steps=None)
    assert cfg.gammas == [0.5, 0.7]
    assert cfg.Ts == [2.0]
    assert cfg.Ls == [6]
    assert cfg.steps == 12


def test_nested_config_file_is_rejected(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("[grid]\ngamma = 0.5\n", encoding="utf-8")
    with pytest.raises(ParameterError):
        svc.load_run_config_file(path)


def test_validation_happens_before_work():
    with pytest.raises(ParameterError):
        _cfg("purity", L=[6, 7])
    with pytest.raises(ParameterError):
        _cfg("purity", unknown_key=1)
    with pytest.raises(ParameterError):
        _cfg("purity", fmt="xml")
    with pytest.raises(ParameterError):
        _cfg("purity", variant="twisted")


def test_variant_follows_perturbation_strengths():
    assert _cfg("purity").resolved_variant().value == "plain"
    assert _cfg("purity", delta=0.2).resolved_variant().value == "sandwiched"
    assert _cfg("purity", delta_prime=0.2).resolved_variant().value == "tilted"


def test_phase_diagram_rows():
    cfg = _cfg("phase-diagram", gamma=[0.5], T=[1.0, T_WEAK])
    table = svc.cmd_phase_diagram(cfg)
    assert table.columns == dc.PHASE_COLUMNS
    assert table.frame["phase"].tolist() == ["mixed", "weakly-purifying"]
    assert table.frame["region"].tolist() == ["Symmetric", "Broken"]
    assert table.provenance["rows"] == 2


def test_purity_table_is_deterministic():
    cfg = _cfg("purity", L=[4], gamma=[0.5], T=[1.0], steps=3)
    a = svc.cmd_purity(cfg)
    b = svc.cmd_purity(cfg)
    assert a.columns == dc.PURITY_COLUMNS
    assert a.frame["N"].tolist() == [0, 1, 2, 3]
    assert a.provenance["content_sha256"] == b.provenance["content_sha256"]


def test_spectrum_and_gap_tables():
    cfg = _cfg("spectrum", L=[4], gamma=[0.5], T=[1.0])
    spec = svc.cmd_spectrum(cfg)
    assert spec.columns == dc.SPECTRUM_COLUMNS
    assert len(spec.frame) == 16
    assert (spec.frame["modulus"] - 1).abs().max() < 1e-8

    gap = svc.cmd_gap(_cfg("gap", L=[4], gamma=[0.5], T=[1.0]))
    assert gap.columns == dc.GAP_COLUMNS
    assert gap.frame.loc[0, "gap"] == 0.0
    assert gap.frame.loc[0, "purification_time_est"] == math.inf


def test_entropy_table_and_fit_companion():
    cfg = _cfg("entropy", L=[4, 6, 8], gamma=[1.0], T=[1.5], steps=8, seed=[0, 1])
    table = svc.cmd_entropy(cfg)
    assert table.columns == dc.ENTROPY_COLUMNS
    assert len(table.frame) == 6
    assert table.frame["n_up"].tolist() == [3, 3, 4, 4, 5, 5]
    assert len(table.extra) == 1
    assert table.extra[0].frame["parameter"].tolist() == ["a", "b"]


def test_ff_census_table():
    table = svc.cmd_ff(_cfg("ff census", L=[8], T=[0.5, 2.0]), "census")
    assert table.columns == dc.CENSUS_COLUMNS
    assert table.frame.loc[0, "degeneracy"] == 2 ** 8
    with pytest.raises(ParameterError):
        svc.cmd_ff(_cfg("ff perturb", L=[8], T=[0.5]), "perturb")


def test_bethe_solve_dump():
    cfg = _cfg("bethe solve", L=[8], gamma=[0.5], T=[1.5], M=4)
    table = svc.cmd_bethe(cfg, "solve")
    assert table.columns == dc.ROOT_COLUMNS
    assert len(table.frame) == 4
    assert table.frame["quantum_number"].tolist() == [-1.5, -0.5, 0.5, 1.5]


def test_unknown_modes():
    with pytest.raises(ParameterError):
        svc.cmd_bethe(_cfg("bethe"), "plot")
    with pytest.raises(ParameterError):
        svc.cmd_ff(_cfg("ff"), "plot")


def test_antiunitary_deviation_picks_variant_from_strengths():
    assert svc.antiunitary_deviation(6, 0.6, 1.7) < 1e-10
    assert svc.antiunitary_deviation(6, 0.6, 1.7, delta_prime=0.2) > 0.1
    assert svc.antiunitary_deviation(6, 0.5, 1.3, delta=0.2) > 1.0
