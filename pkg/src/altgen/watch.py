"""Debounced watching of layout files for newly added icons."""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from watchdog.events import FileSystemEventHandler
from watchdog.observers import Observer
from watchdog.observers.polling import PollingObserver

from .extract import IconCandidate, detect_icons, diff_new_icons
from .layout import LayoutParseError, find_layout_files, is_layout_file, parse_layout
from .model import Screen

log = logging.getLogger(__name__)

DEFAULT_DEBOUNCE = 0.3


@dataclass(frozen=True)
class WatchEvent:
    kind: str  # "icon" or "diagnostic"
    path: Path
    candidate: Optional[IconCandidate] = None
    screen: Optional[Screen] = None
    message: str = ""


class _Handler(FileSystemEventHandler):
    def __init__(self, watcher: "LayoutWatcher"):
        self.watcher = watcher

    def on_any_event(self, event):
        if event.is_directory:
            return
        for attr in ("src_path", "dest_path"):
            p = getattr(event, attr, None)
            if p and event.event_type in ("created", "modified", "moved", "closed"):
                self.watcher.notify(Path(p))


class LayoutWatcher:
    """Watch ``root`` and call ``callback`` once per icon added to a layout.

    Saves are coalesced per file: a file is re-parsed only after it has been
    quiet for ``debounce`` seconds. All callbacks run on one worker thread in
    event order.
    """

    def __init__(self, root, callback: Callable[[WatchEvent], None], *,
                 debounce: float = DEFAULT_DEBOUNCE, annotate_on_first_sight: bool = False,
                 polling: bool = False):
        self.root = Path(root)
        if not self.root.is_dir():
            raise NotADirectoryError(self.root)
        self.callback = callback
        self.debounce = debounce
        self.annotate_on_first_sight = annotate_on_first_sight
        self._observer = PollingObserver(timeout=0.1) if polling else Observer()
        self._baseline: dict[Path, Screen] = {}
        self._last_bytes: dict[Path, bytes] = {}
        self._due: dict[Path, float] = {}
        self._cond = threading.Condition()
        self._stopping = False
        self._worker = threading.Thread(target=self._run, name="layout-watcher", daemon=True)

    def start(self) -> "LayoutWatcher":
        for path in find_layout_files(self.root):
            self._prime(path.resolve())
        self._observer.schedule(_Handler(self), str(self.root), recursive=True)
        self._observer.start()
        self._worker.start()
        return self

    def stop(self, timeout: float = 5.0) -> None:
        with self._cond:
            self._stopping = True
            self._cond.notify_all()
        self._observer.stop()
        self._observer.join(timeout)
        if self._worker.is_alive():
            self._worker.join(timeout)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def notify(self, path: Path) -> None:
        if not is_layout_file(path):
            return
        with self._cond:
            self._due[path.resolve()] = time.monotonic() + self.debounce
            self._cond.notify_all()

    def _prime(self, path: Path) -> None:
        try:
            data = path.read_bytes()
            self._baseline[path] = parse_layout(data, source=str(path)).screen
            self._last_bytes[path] = data
        except (OSError, LayoutParseError) as exc:
            log.debug("initial parse of %s failed: %s", path, exc)

    def _run(self) -> None:
        while True:
            with self._cond:
                while not self._stopping:
                    now = time.monotonic()
                    ready = sorted((t, p) for p, t in self._due.items() if t <= now)
                    if ready:
                        break
                    wait = min(self._due.values(), default=now + 1.0) - now
                    self._cond.wait(max(wait, 0.01))
                if self._stopping:
                    return
                for _, p in ready:
                    del self._due[p]
            for _, p in ready:
                try:
                    self._process(p)
                except Exception:  # a buggy callback must not kill the watcher
                    log.exception("watch callback failed for %s", p)

    def _process(self, path: Path) -> None:
        try:
            data = path.read_bytes()
        except OSError as exc:
            log.debug("unreadable %s (%s); waiting for next event", path, exc)
            return
        if self._last_bytes.get(path) == data:
            return
        self._last_bytes[path] = data
        try:
            screen = parse_layout(data, source=str(path)).screen
        except LayoutParseError as exc:
            self.callback(WatchEvent("diagnostic", path, message=str(exc)))
            return
        previous = self._baseline.get(path)
        self._baseline[path] = screen
        if previous is None:
            if not self.annotate_on_first_sight:
                return
            new = detect_icons(screen)
        else:
            new = diff_new_icons(previous, screen)
        for cand in new:
            self.callback(WatchEvent("icon", path, cand, screen))


def watch_layouts(root, callback: Callable[[WatchEvent], None], **kwargs) -> LayoutWatcher:
    """Start a :class:`LayoutWatcher`; the caller owns ``stop()``."""
    return LayoutWatcher(root, callback, **kwargs).start()
