from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import click
from marshmallow import Schema, ValidationError

from histoad.errors import ConfigurationError
from histoad.models.run_config import RunConfig
from histoad.repositories.report_repository import ReportRepository
from histoad.schemas.run_schemas import RunConfigSchema

config_option = click.option(
    "--config", "config_path", type=click.Path(dir_okay=False), help="key=value config file; flags override it."
)
set_option = click.option(
    "--set", "assignments", multiple=True, metavar="KEY=VALUE", help="Override any config key (repeatable)."
)


def parse_assignments(assignments: Iterable[str]) -> Dict[str, str]:
    values = {}
    for item in assignments:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"Expected KEY=VALUE, got '{item}'")
        values[key.strip()] = value.strip()
    return values


def collect_values(config_path: Optional[str], assignments: Iterable[str], flags: Dict[str, Any]) -> Dict[str, Any]:
    """File values, then --set assignments, then named flags that were given"""
    values: Dict[str, Any] = ReportRepository.read_config(config_path) if config_path else {}
    values.update(parse_assignments(assignments))
    values.update({k: v for k, v in flags.items() if v is not None})
    return values


def load_with(schema: Schema, values: Dict[str, Any]):
    try:
        return schema.load(values)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e.messages}") from e


def load_run_config(config_path: Optional[str], assignments: Iterable[str], **flags) -> RunConfig:
    return load_with(RunConfigSchema(), collect_values(config_path, assignments, flags))


def echo_config(out_dir, *dumps: Dict[str, Any]) -> Path:
    """Write the effective configuration next to a command's outputs"""
    merged: Dict[str, str] = {}
    for dump in dumps:
        merged.update({k: str(v) for k, v in dump.items()})
    return ReportRepository(out_dir).write_config(merged)


def echo_run_config(out_dir, config: RunConfig) -> Path:
    return echo_config(out_dir, RunConfigSchema().dump(config))
