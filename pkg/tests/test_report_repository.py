import json

import pandas as pd
import pytest

from histoad.config import CONFIG_ECHO_NAME
from histoad.errors import ConfigurationError, DataError
from histoad.repositories.report_repository import ReportRepository


def test_tables_and_logs(tmp_path):
    reports = ReportRepository(tmp_path / "out")
    reports.write_table("t.csv", pd.DataFrame({"a": [1, 2], "b": [0.5, 0.25]}))
    assert ReportRepository.read_csv(reports.path("t.csv"))["b"].tolist() == [0.5, 0.25]

    reports.start_log("log.csv", ["epoch", "loss"])
    reports.append_log("log.csv", {"epoch": 1, "loss": 2.5})
    reports.append_log("log.csv", {"epoch": 2, "loss": 1.5})
    assert ReportRepository.read_csv(reports.path("log.csv")).to_dict("list") == {"epoch": [1, 2], "loss": [2.5, 1.5]}


def test_missing_or_empty_table_is_a_data_error(tmp_path):
    with pytest.raises(DataError):
        ReportRepository.read_csv(tmp_path / "none.csv")
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(DataError):
        ReportRepository.read_csv(tmp_path / "empty.csv")


def test_record_and_config_echo(tmp_path):
    reports = ReportRepository(tmp_path)
    reports.write_record("r.json", {"b": 1, "a": [1.5]})
    assert json.loads(reports.path("r.json").read_text()) == {"a": [1.5], "b": 1}

    reports.write_config({"nu": "0.1", "gamma": "auto", "aux_classes": ""})
    assert reports.path(CONFIG_ECHO_NAME).read_text().splitlines()[0] == "aux_classes="
    assert ReportRepository.read_config(reports.path(CONFIG_ECHO_NAME)) == {
        "aux_classes": "",
        "gamma": "auto",
        "nu": "0.1",
    }
    with pytest.raises(ConfigurationError):
        ReportRepository.read_config(tmp_path / "missing.env")
