"""Service configuration: YAML/JSON file with environment-variable overrides.

Environment variables (SPIRAL_PORT, SPIRAL_DATABASE_URL, SPIRAL_BLOB_ROOT,
SPIRAL_RASTER_DPI) override the corresponding file entries. Worker tokens are
bootstrapped from the ``tokens`` list; converter adapters from ``converters``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigInvalid
from .model import SourceFormat


@dataclass(frozen=True)
class ConverterConfig:
    """External converter: command template with {input}/{output} placeholders."""

    formats: frozenset[str]
    command: str
    timeout_s: float = 60.0

    def __post_init__(self):
        if "pdf" in self.formats:
            raise ConfigInvalid("converter must not claim the pdf format")
        unknown = self.formats - {f.value for f in SourceFormat}
        if unknown:
            raise ConfigInvalid(f"converter formats unknown: {sorted(unknown)}")
        if "{input}" not in self.command or "{output}" not in self.command:
            raise ConfigInvalid("converter command needs {input} and {output}")
        if self.timeout_s <= 0:
            raise ConfigInvalid("converter timeout_s must be positive")


@dataclass(frozen=True)
class TokenConfig:
    id: str
    secret: str
    scopes: frozenset[str]


@dataclass(frozen=True)
class AppConfig:
    port: int = 8000
    database_url: str = "memory://"
    blob_root: Optional[str] = None
    raster_dpi: int = 150
    zip_max_bytes: int = 1 << 30  # 1 GiB decompressed cap
    zip_max_members: int = 10_000
    ingest_workers: int = 2  # 0 runs ingest jobs inline
    converters: tuple[ConverterConfig, ...] = ()
    tokens: tuple[TokenConfig, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.raster_dpi <= 0:
            raise ConfigInvalid("raster_dpi must be positive")
        if not self.database_url.startswith("memory://"):
            raise ConfigInvalid(
                f"unsupported database backend {self.database_url!r}; "
                "only memory:// is built in"
            )

    def converter_for(self, fmt: SourceFormat) -> Optional[ConverterConfig]:
        for conv in self.converters:
            if fmt.value in conv.formats:
                return conv
        return None


def _parse_converters(raw) -> tuple[ConverterConfig, ...]:
    out = []
    for item in raw or ():
        out.append(
            ConverterConfig(
                formats=frozenset(item.get("formats", ())),
                command=item.get("command", ""),
                timeout_s=float(item.get("timeout_s", 60.0)),
            )
        )
    return tuple(out)


def _parse_tokens(raw) -> tuple[TokenConfig, ...]:
    out = []
    for item in raw or ():
        out.append(
            TokenConfig(
                id=str(item["id"]),
                secret=str(item["secret"]),
                scopes=frozenset(item.get("scopes", ())),
            )
        )
    return tuple(out)


def load_config(path: Optional[str] = None) -> AppConfig:
    raw: dict = {}
    if path:
        text = Path(path).read_text()
        if path.endswith(".json"):
            raw = json.loads(text)
        else:
            raw = yaml.safe_load(text) or {}
        if not isinstance(raw, dict):
            raise ConfigInvalid(f"config root must be a mapping, got {type(raw).__name__}")
    env = os.environ
    return AppConfig(
        port=int(env.get("SPIRAL_PORT", raw.get("port", 8000))),
        database_url=env.get("SPIRAL_DATABASE_URL", raw.get("database_url", "memory://")),
        blob_root=env.get("SPIRAL_BLOB_ROOT", raw.get("blob_root")),
        raster_dpi=int(env.get("SPIRAL_RASTER_DPI", raw.get("raster_dpi", 150))),
        zip_max_bytes=int(raw.get("zip_max_bytes", 1 << 30)),
        zip_max_members=int(raw.get("zip_max_members", 10_000)),
        ingest_workers=int(raw.get("ingest_workers", 2)),
        converters=_parse_converters(raw.get("converters")),
        tokens=_parse_tokens(raw.get("tokens")),
    )
