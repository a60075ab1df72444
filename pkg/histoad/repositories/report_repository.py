import json
from pathlib import Path
from typing import Any, Dict, List, Mapping

import pandas as pd
from dotenv import dotenv_values

from histoad.config import CONFIG_ECHO_NAME
from histoad.errors import ConfigurationError, DataError


class ReportRepository:
    """Plain-text outputs of a run directory: delimited tables, JSON records and the config echo"""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.root / name

    def write_table(self, name: str, table: pd.DataFrame) -> Path:
        target = self.path(name)
        table.to_csv(target, index=False, float_format="%.10g")
        return target

    @staticmethod
    def read_csv(path) -> pd.DataFrame:
        try:
            return pd.read_csv(path)
        except FileNotFoundError as e:
            raise DataError(f"Table {path} does not exist") from e
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
            raise DataError(f"Table {path} is empty or malformed: {e}") from e

    def start_log(self, name: str, columns: List[str]) -> Path:
        target = self.path(name)
        pd.DataFrame(columns=columns).to_csv(target, index=False)
        return target

    def append_log(self, name: str, row: Mapping[str, Any]) -> None:
        """Append one row; the header was written by start_log"""
        pd.DataFrame([dict(row)]).to_csv(self.path(name), mode="a", header=False, index=False, float_format="%.10g")

    def write_record(self, name: str, record: Dict[str, Any]) -> Path:
        target = self.path(name)
        target.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
        return target

    def write_config(self, values: Mapping[str, str]) -> Path:
        target = self.path(CONFIG_ECHO_NAME)
        lines = [f"{key}={value}" for key, value in sorted(values.items())]
        target.write_text("\n".join(lines) + "\n")
        return target

    @staticmethod
    def read_config(path) -> Dict[str, str]:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"Config file {path} does not exist")
        return {k: ("" if v is None else v) for k, v in dotenv_values(path).items()}
