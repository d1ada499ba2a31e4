"""Tool configuration, loaded from a JSON file.

Unknown keys are rejected with their dotted location so typos never pass
silently.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Any, Optional

from .extract import SizeThresholds
from .genai.client import BackendConfig
from .watch import DEFAULT_DEBOUNCE


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WatchConfig:
    debounce: float = DEFAULT_DEBOUNCE
    annotate_on_first_sight: bool = False
    polling: bool = False


@dataclass(frozen=True)
class TemplateConfig:
    textt: Optional[str] = None
    mmt: Optional[str] = None
    classifier: Optional[str] = None


@dataclass(frozen=True)
class ToolConfig:
    backend: BackendConfig = BackendConfig()
    mode: str = "mmt"
    image_scope: str = "icon"
    ablate: tuple[str, ...] = ()
    ocr: Optional[str] = None
    ocr_min_confidence: float = 0.4
    ocr_on_standardized: bool = True
    upscaler: Optional[str] = None
    cache_dir: Optional[str] = ".altgen-cache"
    size_filter: SizeThresholds = SizeThresholds()
    watch: WatchConfig = WatchConfig()
    templates: TemplateConfig = TemplateConfig()
    label_fallback: Optional[str] = "unknown"
    seed: int = 0
    max_workers: int = 4

    def __post_init__(self):
        if self.mode not in ("textt", "mmt"):
            raise ConfigError(f"mode: expected 'textt' or 'mmt', got {self.mode!r}")
        if self.image_scope not in ("icon", "container"):
            raise ConfigError(f"image_scope: expected 'icon' or 'container', got {self.image_scope!r}")
        object.__setattr__(self, "ablate", tuple(self.ablate))

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Decimal):
        return str(value)
    return value


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        loc = f"{where}.{key}" if where else key
        if key not in fields:
            raise ConfigError(f"{loc}: unknown key")
        default = fields[key].default
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, loc)
        elif isinstance(default, bool) and not isinstance(value, bool):
            raise ConfigError(f"{loc}: expected true/false")
        elif isinstance(default, (int, float, Decimal)) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, (int, float, str)):
                raise ConfigError(f"{loc}: expected a number")
            try:
                kwargs[key] = type(default)(value) if not isinstance(default, Decimal) else Decimal(str(value))
            except (ValueError, ArithmeticError):
                raise ConfigError(f"{loc}: expected a number") from None
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def config_from_dict(data: dict[str, Any]) -> ToolConfig:
    return _build(ToolConfig, data, "")


def load_config(path=None) -> ToolConfig:
    if path is None:
        return ToolConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return config_from_dict(data)
