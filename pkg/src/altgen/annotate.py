"""Annotating Android projects: detect unlabeled icons, generate, inject."""

from __future__ import annotations

import logging
import os
import queue
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .extract import IconCandidate, detect_icons, extract_context
from .genai.client import BackendError, ChatClient, ResultCache
from .genai.generate import classify_icon, generate_alt_text
from .genai.prompts import BUILTIN, PromptTemplates
from .layout import LayoutParseError, find_layout_files, inject_alt_text, parse_layout, resolve_drawable
from .model import FULL_INPUT, TEXTT, AblationConfig, GenerationMode, Screen, Variant
from .vision import OcrEngine, load_image, ocr_in_icon_text, standardize
from .watch import LayoutWatcher, WatchEvent

log = logging.getLogger(__name__)

_file_locks: dict[Path, threading.Lock] = {}
_file_locks_guard = threading.Lock()


def _file_lock(path: Path) -> threading.Lock:
    with _file_locks_guard:
        return _file_locks.setdefault(path.resolve(), threading.Lock())


@dataclass
class Annotator:
    client: ChatClient
    cache: Optional[ResultCache] = None
    mode: GenerationMode = GenerationMode()
    ablation: AblationConfig = FULL_INPUT
    ocr: Optional[OcrEngine] = None
    ocr_min_confidence: float = 0.4
    ocr_on_standardized: bool = True
    upscaler: Optional[Callable] = None
    label_fallback: Optional[str] = "unknown"
    templates: PromptTemplates = BUILTIN
    force: bool = False
    dry_run: bool = False
    max_workers: int = 4


@dataclass
class IconOutcome:
    file: Path
    path: tuple[int, ...]
    resource_id: Optional[str]
    alt_text: Optional[str] = None
    error: Optional[str] = None
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None


def _project_root(layout_file: Path) -> Path:
    # <root>/res/layout*/x.xml
    return layout_file.parent.parent.parent


def generate_for_icon(ann: Annotator, screen: Screen, cand: IconCandidate, raw_attrs: dict[str, str],
                      project_root: Path) -> str:
    ctx = extract_context(screen, cand)
    image = None
    drawable = resolve_drawable(cand.node, raw_attrs, project_root)
    if drawable is not None:
        raw = load_image(drawable)
        image = standardize(raw, ann.upscaler)
        ctx = ctx.with_ocr(ocr_in_icon_text(image if ann.ocr_on_standardized else raw, ann.ocr,
                                            ann.ocr_min_confidence))
    mode = ann.mode
    if mode.variant is Variant.MMT and image is None:
        log.info("%s: no raster drawable; falling back to text-only prompt", cand.node.resource_id or cand.path)
        mode = TEXTT
    if mode.variant is Variant.TEXTT and image is not None:
        ctx = ctx.with_label(classify_icon(image, ann.client, ann.cache, ann.templates) or None)
    result = generate_alt_text(ctx, image, mode, ann.ablation, client=ann.client, cache=ann.cache,
                               icon_ref=f"{screen.screen_id}:{'.'.join(map(str, cand.path))}",
                               label_fallback=ann.label_fallback, templates=ann.templates)
    return result.alt_text


def _write_atomic(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def annotate_file(ann: Annotator, layout_file, report: Optional[Callable[[str], None]] = None) -> list[IconOutcome]:
    layout_file = Path(layout_file)
    data = layout_file.read_bytes()
    parsed = parse_layout(data, source=str(layout_file))
    screen = parsed.screen
    todo = [c for c in detect_icons(screen) if ann.force or not c.node.content_description]
    if not todo:
        return []
    root = _project_root(layout_file)

    def work(cand: IconCandidate) -> IconOutcome:
        start = time.monotonic()
        out = IconOutcome(layout_file, cand.path, cand.node.resource_id)
        try:
            out.alt_text = generate_for_icon(ann, screen, cand, parsed.attrs[cand.path], root)
        except Exception as exc:
            out.error = f"{type(exc).__name__}: {exc}"
        out.seconds = time.monotonic() - start
        return out

    with ThreadPoolExecutor(max_workers=ann.max_workers) as pool:
        outcomes = list(pool.map(work, todo))
    done = [(c, o) for c, o in zip(todo, outcomes) if o.ok]
    if done and not ann.dry_run:
        with _file_lock(layout_file):
            current = layout_file.read_bytes()
            for cand, out in done:
                try:
                    current = inject_alt_text(current, cand.path, out.alt_text, force=ann.force,
                                              expect_class=cand.node.class_name,
                                              expect_id=cand.node.resource_id)
                except (ValueError, LookupError) as exc:
                    out.error = f"{type(exc).__name__}: {exc}"
            _write_atomic(layout_file, current)
    return outcomes


def annotate_paths(ann: Annotator, target) -> tuple[list[IconOutcome], list[str]]:
    """Annotate one layout file or every layout under a project directory."""
    outcomes: list[IconOutcome] = []
    errors: list[str] = []
    for f in find_layout_files(target):
        try:
            outcomes.extend(annotate_file(ann, f))
        except (OSError, LayoutParseError) as exc:
            errors.append(f"{f}: {exc}")
    return outcomes, errors


class WatchAnnotator:
    """Feeds newly added icons from a :class:`LayoutWatcher` into generation and injection.

    Icons whose generation fails are re-queued with exponential backoff, so a
    backend outage delays annotation without stopping the watcher.
    """

    def __init__(self, ann: Annotator, root, *, debounce: float = 0.3, annotate_on_first_sight: bool = False,
                 polling: bool = False, max_retries: int = 5, retry_base: float = 1.0,
                 on_outcome: Optional[Callable[[IconOutcome], None]] = None,
                 on_diagnostic: Optional[Callable[[str], None]] = None):
        self.ann = ann
        self.root = Path(root)
        self.max_retries = max_retries
        self.retry_base = retry_base
        self.on_outcome = on_outcome or (lambda o: None)
        self.on_diagnostic = on_diagnostic or (lambda m: log.warning("%s", m))
        self._queue: "queue.PriorityQueue" = queue.PriorityQueue()
        self._seq = 0
        self._stop = threading.Event()
        self._worker = threading.Thread(target=self._run, name="watch-annotator", daemon=True)
        self.watcher = LayoutWatcher(self.root, self._on_event, debounce=debounce,
                                     annotate_on_first_sight=annotate_on_first_sight, polling=polling)

    def start(self) -> "WatchAnnotator":
        self._worker.start()
        self.watcher.start()
        return self

    def stop(self, flush_timeout: float = 5.0) -> None:
        self.watcher.stop()
        deadline = time.monotonic() + flush_timeout
        while not self._queue.empty() and time.monotonic() < deadline:
            time.sleep(0.05)
        self._stop.set()
        self._worker.join(flush_timeout)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _on_event(self, event: WatchEvent) -> None:
        if event.kind == "diagnostic":
            self.on_diagnostic(event.message)
            return
        if event.candidate.node.content_description and not self.ann.force:
            return
        self._push(time.monotonic(), (event, 0))

    def _push(self, when: float, item) -> None:
        self._seq += 1
        self._queue.put((when, self._seq, item))

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                when, seq, (event, tries) = self._queue.get(timeout=0.1)
            except queue.Empty:
                continue
            delay = when - time.monotonic()
            if delay > 0:
                self._queue.put((when, seq, (event, tries)))
                time.sleep(min(delay, 0.1))
                continue
            self._handle(event, tries)

    def _handle(self, event: WatchEvent, tries: int) -> None:
        cand = event.candidate
        start = time.monotonic()
        out = IconOutcome(event.path, cand.path, cand.node.resource_id)
        try:
            parsed = parse_layout(event.path.read_bytes(), source=str(event.path))
            alt = generate_for_icon(self.ann, event.screen, cand, parsed.attrs.get(cand.path, {}),
                                    _project_root(event.path))
            out.alt_text = alt
            if not self.ann.dry_run:
                with _file_lock(event.path):
                    current = event.path.read_bytes()
                    new = inject_alt_text(current, cand.path, alt, force=self.ann.force,
                                          expect_class=cand.node.class_name, expect_id=cand.node.resource_id)
                    _write_atomic(event.path, new)
        except BackendError as exc:
            if tries < self.max_retries:
                wait = self.retry_base * 2 ** tries
                log.warning("backend unavailable for %s; retrying in %.1fs", cand.node.resource_id, wait)
                self._push(time.monotonic() + wait, (event, tries + 1))
                return
            out.error = f"{type(exc).__name__}: {exc}"
        except Exception as exc:
            out.error = f"{type(exc).__name__}: {exc}"
        out.seconds = time.monotonic() - start
        self.on_outcome(out)
