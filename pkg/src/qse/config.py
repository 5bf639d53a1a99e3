"""YAML/JSON config loading with versioning and readable validation errors."""
from __future__ import annotations

from pathlib import Path
from typing import TypeVar

import yaml
from pydantic import BaseModel, ValidationError

from .errors import ConfigError

SUPPORTED_VERSION = 1
M = TypeVar("M", bound=BaseModel)


def read_document(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)  # JSON is a subset of YAML
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: not valid YAML/JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    version = doc.get("version")
    if version != SUPPORTED_VERSION:
        raise ConfigError(f"{p}: unsupported config version {version!r} (expected {SUPPORTED_VERSION})")
    return doc


def validate_document(doc: dict, model: type[M], source: str = "<config>") -> M:
    try:
        return model.model_validate(doc)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            where = ".".join(str(x) for x in err["loc"]) or "<root>"
            lines.append(f"  {where}: {err['msg']}")
        raise ConfigError(f"{source}: invalid configuration\n" + "\n".join(lines)) from exc


def load_config(path, model: type[M], section: str | None = None) -> M:
    """Load ``path`` and validate it (or one top-level ``section`` of it) against ``model``."""
    doc = read_document(path)
    if section is not None:
        if section not in doc:
            raise ConfigError(f"{path}: missing section {section!r}")
        doc = doc[section]
    return validate_document(doc, model, str(path))
