"""Zero-shot icon labelling and alt-text generation."""

from __future__ import annotations

import logging
from decimal import Decimal
from typing import Optional

from PIL import Image

from ..model import FULL_INPUT, AblationConfig, AltTextResult, GenerationMode, IconContext, Variant
from ..vision import to_png
from .client import ChatClient, ResultCache
from .prompts import BUILTIN, ImagePart, PromptPayload, PromptTemplates, build_prompt

log = logging.getLogger(__name__)

MAX_LABEL_WORDS = 6
_QUOTES = "\"'`“”‘’"


class EmptyGenerationError(RuntimeError):
    pass


def first_line(text: str) -> str:
    return next((ln.strip() for ln in text.splitlines() if ln.strip()), "")


def clean_alt_text(reply: str) -> str:
    """Single line, without wrapping quotes or trailing periods."""
    text = first_line(reply)
    prev = None
    while text != prev:
        prev = text
        text = text.strip().strip(_QUOTES).rstrip(".").strip()
    return text


def _image_part(image) -> Optional[ImagePart]:
    if image is None:
        return None
    if isinstance(image, ImagePart):
        return image
    if isinstance(image, Image.Image):
        return ImagePart(to_png(image))
    return ImagePart(bytes(image))


def classify_icon(icon_image, client: ChatClient, cache: Optional[ResultCache] = None,
                  templates: PromptTemplates = BUILTIN) -> str:
    """Ask the backend for a one- or two-word class of the icon."""
    payload = PromptPayload(templates.classifier, GenerationMode(Variant.MMT),
                            image=_image_part(icon_image), model=client.config.model)
    if cache is None:
        return _classify(payload, client, None)
    with cache.claim(payload.fingerprint):
        hit = cache.get(payload.fingerprint)
        if hit is not None:
            return hit["label"]
        return _classify(payload, client, cache)


def _classify(payload: PromptPayload, client: ChatClient, cache: Optional[ResultCache]) -> str:
    label = first_line(client.complete(payload).text)
    words = label.split()
    if len(words) > MAX_LABEL_WORDS:
        log.warning("classifier answered with %d words; keeping %r", len(words), " ".join(words[:2]))
        label = " ".join(words[:2])
    if cache is not None and label:
        cache.put(payload.fingerprint, {"label": label})
    return label


def generate_alt_text(ctx: IconContext, image, mode: GenerationMode, ablation: AblationConfig = FULL_INPUT, *,
                      client: ChatClient, cache: Optional[ResultCache] = None, icon_ref: str = "",
                      label_fallback: Optional[str] = None,
                      templates: PromptTemplates = BUILTIN) -> AltTextResult:
    part = _image_part(image) if mode.variant is Variant.MMT else None
    if mode.variant is Variant.MMT and part is None:
        raise ValueError("multimodal generation needs an icon image")
    payload = build_prompt(ctx, mode, ablation, image=part, model=client.config.model,
                           label_fallback=label_fallback, templates=templates)
    if cache is None:
        return _send(payload, mode, client, None, icon_ref)
    with cache.claim(payload.fingerprint):
        hit = cache.get(payload.fingerprint)
        if hit is not None:
            return AltTextResult(icon_ref=icon_ref, alt_text=hit["alt_text"], mode=mode,
                                 prompt_fingerprint=payload.fingerprint, token_usage=(0, 0),
                                 cost_usd=Decimal(0), cached=True)
        return _send(payload, mode, client, cache, icon_ref)


def _send(payload: PromptPayload, mode: GenerationMode, client: ChatClient,
          cache: Optional[ResultCache], icon_ref: str) -> AltTextResult:
    reply = client.complete(payload)
    alt = clean_alt_text(reply.text)
    if not alt:
        raise EmptyGenerationError(f"{icon_ref or 'icon'}: backend returned no alt-text")
    result = AltTextResult(
        icon_ref=icon_ref,
        alt_text=alt,
        mode=mode,
        prompt_fingerprint=payload.fingerprint,
        token_usage=(reply.prompt_tokens, reply.completion_tokens),
        cost_usd=client.config.cost(reply.prompt_tokens, reply.completion_tokens),
    )
    if cache is not None:
        cache.put(payload.fingerprint, result.to_dict())
    return result
