"""Glue between dataset records, image preparation, generation and scoring."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from PIL import Image

from .dataset import AnnotatedIcon
from .extract import IconCandidate, extract_context
from .genai.client import BackendError, ChatClient, ResultCache
from .genai.generate import EmptyGenerationError, classify_icon, generate_alt_text
from .genai.prompts import BUILTIN, MissingIconLabelError, PromptTemplates
from .metrics.report import MetricReport, evaluate
from .model import (FULL_INPUT, AblationConfig, AltTextResult, BoundingBox, EvalRecord, GenerationMode,
                    IconContext, ImageScope, Screen, Variant, node_at_path)
from .vision import OcrEngine, container_image, crop_icon, load_image, ocr_in_icon_text, standardize

log = logging.getLogger(__name__)

GENERATION_ERRORS = (BackendError, EmptyGenerationError, MissingIconLabelError, ValueError)


@dataclass(frozen=True)
class EvalSample:
    icon_ref: str
    context: IconContext
    references: tuple[str, ...]
    icon_image: Optional[Image.Image] = field(default=None, compare=False)
    container_image: Optional[Image.Image] = field(default=None, compare=False)


def scale_box(box: BoundingBox, dims: tuple[int, int], size: tuple[int, int]) -> BoundingBox:
    """Map hierarchy coordinates onto a screenshot of another resolution."""
    if dims == size:
        return box
    sx, sy = size[0] / dims[0], size[1] / dims[1]
    return BoundingBox(math.floor(box.left * sx), math.floor(box.top * sy),
                       max(math.ceil(box.right * sx), math.floor(box.left * sx) + 1),
                       max(math.ceil(box.bottom * sy), math.floor(box.top * sy) + 1))


def prepare_sample(icon: AnnotatedIcon, screen: Screen, *, ocr: Optional[OcrEngine] = None, upscaler=None,
                   ocr_on_standardized: bool = True, min_confidence: float = 0.4) -> EvalSample:
    node = node_at_path(screen, icon.path)
    parent = node_at_path(screen, icon.path[:-1]) if icon.path else None
    ctx = extract_context(screen, IconCandidate(screen.screen_id, icon.path, node, parent))
    icon_img = cont_img = None
    if screen.screenshot is not None and node.bounds is not None:
        shot = load_image(screen.screenshot)
        dims = screen.screen_dims or shot.size
        raw = crop_icon(shot, scale_box(node.bounds, dims, shot.size))
        icon_img = standardize(raw, upscaler)
        texts = ocr_in_icon_text(icon_img if ocr_on_standardized else raw, ocr, min_confidence)
        ctx = ctx.with_ocr(texts)
        if parent is not None and parent.bounds is not None:
            try:
                cont_img = container_image(shot, scale_box(parent.bounds, dims, shot.size),
                                           scale_box(node.bounds, dims, shot.size))
            except ValueError as exc:
                log.warning("%s: no container image (%s)", icon.icon_ref, exc)
    return EvalSample(icon.icon_ref, ctx, icon.labels, icon_img, cont_img)


def prepare_samples(icons: Sequence[AnnotatedIcon], screens: Mapping[str, Screen], **kwargs) -> list[EvalSample]:
    return [prepare_sample(i, screens[i.screen_id], **kwargs) for i in icons]


def generate_one(sample: EvalSample, mode: GenerationMode, ablation: AblationConfig, client: ChatClient,
                 cache: Optional[ResultCache], *, label_fallback: Optional[str] = None,
                 templates: PromptTemplates = BUILTIN) -> AltTextResult:
    ctx = sample.context
    image = None
    if mode.variant is Variant.TEXTT:
        if sample.icon_image is not None:
            try:
                ctx = ctx.with_label(classify_icon(sample.icon_image, client, cache, templates) or None)
            except BackendError as exc:
                log.warning("%s: icon label unavailable (%s)", sample.icon_ref, exc)
    else:
        image = sample.container_image if mode.image_scope is ImageScope.CONTAINER else sample.icon_image
    return generate_alt_text(ctx, image, mode, ablation, client=client, cache=cache, icon_ref=sample.icon_ref,
                             label_fallback=label_fallback, templates=templates)


@dataclass
class GenerationRun:
    results: list[Union[AltTextResult, Exception]]
    records: list[EvalRecord]
    report: MetricReport

    @property
    def failures(self) -> list[tuple[str, str]]:
        return [(rec.icon_ref, str(r)) for rec, r in zip(self.records, self.results) if isinstance(r, Exception)]

    @property
    def successes(self) -> list[AltTextResult]:
        return [r for r in self.results if isinstance(r, AltTextResult)]


def run_generation(samples: Sequence[EvalSample], mode: GenerationMode, ablation: AblationConfig = FULL_INPUT, *,
                   client: ChatClient, cache: Optional[ResultCache] = None, max_workers: int = 4,
                   label_fallback: Optional[str] = None, templates: PromptTemplates = BUILTIN) -> GenerationRun:
    """Generate for every sample and score the outcome; failed items score as empty candidates."""

    def work(sample):
        try:
            return generate_one(sample, mode, ablation, client, cache, label_fallback=label_fallback,
                                templates=templates)
        except GENERATION_ERRORS as exc:
            log.warning("%s: generation failed: %s", sample.icon_ref, exc)
            return exc

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(work, samples))
    records = [EvalRecord(s.icon_ref, r.alt_text if isinstance(r, AltTextResult) else "", s.references)
               for s, r in zip(samples, results)]
    report = evaluate(records, extra_config={"mode": mode.to_dict(), "ablation": ablation.to_dict(),
                                             "template_version": templates.version,
                                             "failures": sum(isinstance(r, Exception) for r in results)})
    return GenerationRun(results, records, report)
