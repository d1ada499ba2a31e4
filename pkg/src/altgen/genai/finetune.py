"""Export of chat-format fine-tuning data."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import jsonschema

from ..model import FULL_INPUT, GenerationMode, IconContext, Variant
from .prompts import BUILTIN, ImagePart, PromptTemplates, build_prompt

DEFAULT_EPOCHS = 3
PER_CLASS_CAP = 15


class FinetuneValidationError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingExample:
    context: IconContext
    label: str
    image: Optional[ImagePart] = None
    icon_class: str = "other"
    icon_ref: str = ""


@dataclass(frozen=True)
class FinetuneRecord:
    mode: GenerationMode
    messages: tuple[dict, ...]
    target: str

    def to_line(self) -> str:
        return json.dumps({"messages": list(self.messages)}, ensure_ascii=False)


def make_record(example: TrainingExample, mode: GenerationMode,
                templates: PromptTemplates = BUILTIN) -> FinetuneRecord:
    image = example.image if mode.variant is Variant.MMT else None
    if mode.variant is Variant.MMT and image is None:
        raise FinetuneValidationError(f"{example.icon_ref}: multimodal record without an image")
    payload = build_prompt(example.context, mode, FULL_INPUT, image=image, templates=templates)
    target = example.label.strip()
    if not target:
        raise FinetuneValidationError(f"{example.icon_ref}: empty target label")
    messages = tuple(payload.messages()) + ({"role": "assistant", "content": target},)
    return FinetuneRecord(mode, messages, target)


def chat_schema() -> dict[str, Any]:
    text = resources.files("altgen.resources").joinpath("finetune_chat_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_finetune_file(path) -> int:
    """Check every line against the chat schema; returns the line count."""
    schema = chat_schema()
    n = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            try:
                jsonschema.validate(json.loads(line), schema)
            except (ValueError, jsonschema.ValidationError) as exc:
                raise FinetuneValidationError(f"{path}:{lineno}: {exc}") from None
            n += 1
    return n


def export_finetune_dataset(examples: Sequence[TrainingExample], mode: GenerationMode, out_path, *,
                            per_class_cap: int = PER_CLASS_CAP, epochs: int = DEFAULT_EPOCHS,
                            base_model: str = "gpt-4o-2024-08-06", provenance: Optional[dict] = None,
                            templates: PromptTemplates = BUILTIN) -> Path:
    """Write ``out_path`` (one chat example per line) plus a ``.config.json`` sidecar.

    Returns the sidecar path.
    """
    counts = Counter(ex.icon_class for ex in examples)
    over = {c: n for c, n in counts.items() if n > per_class_cap}
    if over:
        raise FinetuneValidationError(f"classes over the cap of {per_class_cap}: {dict(sorted(over.items()))}")
    records = [make_record(ex, mode, templates) for ex in examples]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_line() + "\n")
    sidecar = out_path.with_suffix(".config.json")
    config = {
        "training_file": out_path.name,
        "base_model": base_model,
        "mode": mode.to_dict(),
        "epochs": epochs,
        "records": len(records),
        "per_class_cap": per_class_cap,
        "class_counts": dict(sorted(counts.items())),
        "template_version": templates.version,
        "sampling": provenance or {},
    }
    sidecar.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return sidecar


def estimate_training_tokens(lines: Iterable[str], chars_per_token: float = 4.0,
                             tokens_per_image: int = 255) -> int:
    """Rough token count of an export; images count a flat per-image amount."""
    total = 0
    for line in lines:
        for msg in json.loads(line)["messages"]:
            content = msg["content"]
            if isinstance(content, str):
                total += round(len(content) / chars_per_token)
                continue
            for part in content:
                if part["type"] == "text":
                    total += round(len(part["text"]) / chars_per_token)
                else:
                    total += tokens_per_image
    return total
