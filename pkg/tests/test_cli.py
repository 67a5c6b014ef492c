import json

import pytest

from floquet_purification.backend.services import data_contracts as dc
from floquet_purification.backend.services.result_frame import read_csv_table
from floquet_purification.cli.app import EXIT_NUMERIC, EXIT_OK, EXIT_PARAMETER, build_parser, main

COMMON = ["--workers", "1", "--no-progress"]


def test_phase_diagram_csv_golden_columns(tmp_path):
    out = tmp_path / "phase.csv"
    code = main(["phase-diagram", "--gamma", "0.5", "--T", "1.0,2.0", "--out", str(out), *COMMON])
    assert code == EXIT_OK
    table = read_csv_table(out)
    assert list(table.frame.columns) == dc.PHASE_COLUMNS
    assert table.provenance["command"] == "phase-diagram"
    assert len(table.frame) == 2


def test_purity_json_to_stdout(capsys):
    code = main(["purity", "--L", "4", "--gamma", "0.5", "--T", "1.0", "--steps", "2", "--format", "json", *COMMON])
    assert code == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["columns"] == dc.PURITY_COLUMNS
    assert len(doc["rows"]) == 3


def test_invalid_parameters_exit_2(capsys):
    assert main(["purity", "--L", "5", *COMMON]) == EXIT_PARAMETER
    assert "[FAILED]" in capsys.readouterr().err


def test_capacity_exit_3(monkeypatch):
    monkeypatch.setenv("FLOQUET_L_MAX_ED", "4")
    assert main(["spectrum", "--L", "6", "--gamma", "0.5", "--T", "1.0", *COMMON]) == EXIT_NUMERIC


def test_parser_knows_every_subcommand():
    parser = build_parser()
    for argv in (
        ["phase-diagram"],
        ["purity"],
        ["spectrum"],
        ["gap", "--epsilon", "0.01,0.02"],
        ["entropy"],
        ["bethe", "solve"],
        ["bethe", "tau"],
        ["bethe", "extrapolate"],
        ["bethe", "fit-nu", "--edge", "lower"],
        ["ff", "census"],
        ["ff", "perturb"],
    ):
        args = parser.parse_args(argv)
        assert args.command == argv[0]


def test_bad_list_flag_is_usage_error():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["purity", "--L", "4,x"])
