"""Prompt templates and payload construction."""

from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from ..model import FULL_INPUT, AblationConfig, GenerationMode, IconContext, Variant

LABEL_SLOT = "{icon-only label}"
CONTEXT_SLOT = "{icon context}"
TEMPLATE_VERSION = "builtin-1"


class MissingIconLabelError(ValueError):
    """A text-only prompt was requested without an icon-only label."""


def _resource(name: str) -> str:
    return resources.files("altgen.resources").joinpath(name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class PromptTemplates:
    textt: str
    mmt: str
    classifier: str
    version: str = TEMPLATE_VERSION

    @classmethod
    def builtin(cls) -> "PromptTemplates":
        return cls(_resource("prompt_textt.txt"), _resource("prompt_mmt.txt"),
                   _resource("prompt_classifier.txt"))

    def override(self, textt=None, mmt=None, classifier=None) -> "PromptTemplates":
        """Swap in templates from files; the version string then records their hashes."""
        changed = {}
        for name, path in (("textt", textt), ("mmt", mmt), ("classifier", classifier)):
            if path:
                changed[name] = Path(path).read_text(encoding="utf-8")
        if not changed:
            return self
        out = replace(self, **changed)
        digest = hashlib.sha256("\0".join((out.textt, out.mmt, out.classifier)).encode()).hexdigest()[:12]
        return replace(out, version=f"override-{digest}")


BUILTIN = PromptTemplates.builtin()


@dataclass(frozen=True)
class ImagePart:
    data: bytes
    media_type: str = "image/png"

    def data_url(self) -> str:
        return f"data:{self.media_type};base64," + base64.b64encode(self.data).decode("ascii")


@dataclass(frozen=True)
class PromptPayload:
    text: str
    mode: GenerationMode
    image: Optional[ImagePart] = None
    model: str = ""
    fingerprint: str = ""

    def __post_init__(self):
        if self.mode.variant is Variant.TEXTT and self.image is not None:
            raise ValueError("text-only prompts never carry an image")
        object.__setattr__(self, "fingerprint", fingerprint(self.text, self.image, self.model))

    def with_image(self, image: Optional[ImagePart]) -> "PromptPayload":
        return replace(self, image=image)

    def for_model(self, model: str) -> "PromptPayload":
        return replace(self, model=model)

    def messages(self) -> list[dict]:
        if self.image is None:
            return [{"role": "user", "content": self.text}]
        return [{"role": "user", "content": [
            {"type": "text", "text": self.text},
            {"type": "image_url", "image_url": {"url": self.image.data_url()}},
        ]}]


def fingerprint(text: str, image: Optional[ImagePart], model: str) -> str:
    h = hashlib.sha256()
    h.update(model.encode("utf-8") + b"\0")
    h.update(text.encode("utf-8") + b"\0")
    if image is not None:
        h.update(image.media_type.encode() + b"\0" + image.data)
    return h.hexdigest()


def apply_ablation(ctx: IconContext, ablation: AblationConfig) -> IconContext:
    if ablation.omit_ocr_text:
        ctx = ctx.with_ocr(())
    if ablation.omit_resource_id:
        ctx = replace(ctx, ui_element_info=ctx.ui_element_info.without_resource_id())
    if ablation.omit_parent_sibling:
        ctx = replace(ctx, parent_node=None, sibling_nodes=())
    return ctx


def render_context(ctx: IconContext, ablation: AblationConfig = FULL_INPUT) -> str:
    """The ``{icon context}`` block. The icon-only label is excluded: it has its own slot."""
    ctx = apply_ablation(ctx, ablation)
    return ctx.to_json(include_label=False, include_relatives=not ablation.omit_parent_sibling)


def build_prompt(ctx: IconContext, mode: GenerationMode, ablation: AblationConfig = FULL_INPUT, *,
                 image: Optional[ImagePart] = None, model: str = "",
                 label_fallback: Optional[str] = None,
                 templates: PromptTemplates = BUILTIN) -> PromptPayload:
    block = render_context(ctx, ablation)
    if mode.variant is Variant.TEXTT:
        label = ctx.icon_label or label_fallback
        if not label:
            raise MissingIconLabelError("text-only prompt needs an icon-only label")
        text = templates.textt.replace(LABEL_SLOT, label).replace(CONTEXT_SLOT, block)
    else:
        text = templates.mmt.replace(CONTEXT_SLOT, block)
    return PromptPayload(text=text, mode=mode, image=image, model=model)
