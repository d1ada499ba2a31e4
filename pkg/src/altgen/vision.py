"""Icon image preparation and the OCR adapter."""

from __future__ import annotations

import io
import json
import logging
import shlex
import subprocess
import tempfile
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol, Sequence, Union

import httpx
from PIL import Image, ImageDraw

from .model import BoundingBox

log = logging.getLogger(__name__)

STANDARD_SIZE = 128
RED = (255, 0, 0)
FRAME_WIDTH = 3
MIN_OCR_CONFIDENCE = 0.4


class OcrUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class OcrLine:
    text: str
    confidence: float

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("OCR line text is blank")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


def load_image(source: Union[str, Path, bytes, Image.Image]) -> Image.Image:
    if isinstance(source, Image.Image):
        return source
    if isinstance(source, bytes):
        img = Image.open(io.BytesIO(source))
    else:
        img = Image.open(source)
    img.load()
    return img


def to_png(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def crop_icon(screenshot: Image.Image, bounds: BoundingBox) -> Image.Image:
    """Exact pixel crop; boxes leaking past the image edge are clamped."""
    w, h = screenshot.size
    box = (min(bounds.left, w), min(bounds.top, h), min(bounds.right, w), min(bounds.bottom, h))
    if box != bounds.as_tuple():
        log.warning("crop %s clamped to image %dx%d -> %s", bounds.as_tuple(), w, h, box)
    if box[0] >= box[2] or box[1] >= box[3]:
        raise ValueError(f"crop {bounds.as_tuple()} lies outside the {w}x{h} image")
    return screenshot.crop(box)


def _pad_color(img: Image.Image):
    w, h = img.size
    corners = [img.getpixel(p) for p in ((0, 0), (w - 1, 0), (0, h - 1), (w - 1, h - 1))]
    color, votes = Counter(corners).most_common(1)[0]
    return color if votes >= 3 else (0, 0, 0, 0)


def _fit(img: Image.Image, size: int = STANDARD_SIZE) -> Image.Image:
    img = img.convert("RGBA")
    w, h = img.size
    if (w, h) == (size, size):
        return img
    scale = size / max(w, h)
    nw, nh = max(1, round(w * scale)), max(1, round(h * scale))
    resized = img.resize((nw, nh), Image.Resampling.BICUBIC)
    if (nw, nh) == (size, size):
        return resized
    canvas = Image.new("RGBA", (size, size), _pad_color(img))
    canvas.paste(resized, ((size - nw) // 2, (size - nh) // 2))
    return canvas


Upscaler = Callable[[Image.Image], Image.Image]


class CommandUpscaler:
    """Run an external super-resolution tool, e.g. ``realesrgan-ncnn-vulkan -i {input} -o {output}``."""

    def __init__(self, command: str, timeout: float = 120.0):
        self.command = command
        self.timeout = timeout

    def __call__(self, img: Image.Image) -> Image.Image:
        with tempfile.TemporaryDirectory() as tmp:
            src, dst = Path(tmp) / "in.png", Path(tmp) / "out.png"
            img.save(src)
            argv = [a.format(input=src, output=dst) for a in shlex.split(self.command)]
            subprocess.run(argv, check=True, capture_output=True, timeout=self.timeout)
            return load_image(dst).copy()


def standardize(icon: Image.Image, upscaler: Optional[Upscaler] = None) -> Image.Image:
    """Bring an icon to 128x128.

    Without an upscaler the icon is resized keeping its aspect ratio and
    centred on a canvas filled with the corner colour (transparent when the
    corners disagree).
    """
    if icon.width < 1 or icon.height < 1:
        raise ValueError("empty icon")
    if icon.size == (STANDARD_SIZE, STANDARD_SIZE) and upscaler is None:
        return icon.copy()
    if upscaler is not None:
        try:
            return _fit(upscaler(icon))
        except Exception as exc:
            log.warning("upscaler failed (%s); using built-in resize", exc)
    return _fit(icon)


def mark_bbox(container: Image.Image, icon_bounds_relative: BoundingBox) -> Image.Image:
    """Draw a 3 px pure-red frame just inside ``icon_bounds_relative``."""
    out = container.copy()
    if out.mode not in ("RGB", "RGBA"):
        out = out.convert("RGBA" if "A" in out.getbands() or out.mode == "P" else "RGB")
    color = RED if out.mode == "RGB" else RED + (255,)
    draw = ImageDraw.Draw(out)
    b = icon_bounds_relative
    for t in range(FRAME_WIDTH):
        x0, y0, x1, y1 = b.left + t, b.top + t, b.right - 1 - t, b.bottom - 1 - t
        if x0 > x1 or y0 > y1:
            break
        draw.rectangle((x0, y0, x1, y1), outline=color)
    return out


def container_image(screenshot: Image.Image, container: BoundingBox, icon: BoundingBox) -> Image.Image:
    """Crop the icon's container and mark the icon inside it."""
    crop = crop_icon(screenshot, container)
    return mark_bbox(crop, icon.relative_to(container))


class OcrEngine(Protocol):
    def recognize(self, png: bytes) -> list[OcrLine]: ...


def _parse_lines(payload) -> list[OcrLine]:
    lines = []
    for item in payload:
        text = str(item.get("text", ""))
        if text.strip():
            lines.append(OcrLine(text, float(item.get("confidence", 0.0))))
    return lines


class SubprocessOcr:
    """OCR through an external command: PNG bytes on stdin, JSON array on stdout."""

    def __init__(self, command: Union[str, Sequence[str]], timeout: float = 60.0):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout

    def recognize(self, png: bytes) -> list[OcrLine]:
        try:
            proc = subprocess.run(self.argv, input=png, capture_output=True, timeout=self.timeout, check=True)
        except (OSError, subprocess.SubprocessError) as exc:
            raise OcrUnavailable(str(exc)) from exc
        return _parse_lines(json.loads(proc.stdout))


class HttpOcr:
    """OCR through an HTTP endpoint accepting ``image/png`` and returning a JSON array."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def recognize(self, png: bytes) -> list[OcrLine]:
        try:
            resp = httpx.post(self.url, content=png, headers={"Content-Type": "image/png"}, timeout=self.timeout)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise OcrUnavailable(str(exc)) from exc
        return _parse_lines(resp.json())


class StubOcr:
    """Canned OCR answers, keyed by a function of the PNG bytes."""

    def __init__(self, answer: Callable[[bytes], Iterable[tuple[str, float]]]):
        self.answer = answer

    def recognize(self, png: bytes) -> list[OcrLine]:
        return [OcrLine(t, c) for t, c in self.answer(png) if t.strip()]


def engine_from_spec(spec: Optional[str]) -> Optional[OcrEngine]:
    """``http(s)://...`` selects the HTTP adapter; anything else is a command line."""
    if not spec:
        return None
    if spec.startswith(("http://", "https://")):
        return HttpOcr(spec)
    return SubprocessOcr(spec)


def ocr_in_icon_text(icon: Image.Image, engine: Optional[OcrEngine],
                     min_confidence: float = MIN_OCR_CONFIDENCE) -> list[str]:
    """Confident, trimmed, case-insensitively unique OCR strings in reading order.

    A missing or failing engine yields ``[]``; OCR only enriches the context.
    """
    if engine is None:
        return []
    try:
        lines = engine.recognize(to_png(icon))
    except Exception as exc:
        log.warning("OCR unavailable: %s", exc)
        return []
    seen = set()
    out = []
    for line in lines:
        text = line.text.strip()
        key = text.casefold()
        if line.confidence < min_confidence or not text or key in seen:
            continue
        seen.add(key)
        out.append(text)
    return out


def ocr_many(icons: Sequence[Image.Image], engine: Optional[OcrEngine], max_workers: int = 4,
             min_confidence: float = MIN_OCR_CONFIDENCE) -> list[list[str]]:
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda im: ocr_in_icon_text(im, engine, min_confidence), icons))
