"""Rico / widget-caption ingestion, icon filtering, and label sampling."""

from __future__ import annotations

import csv
import json
import logging
import random
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Optional, Sequence

from .extract import SizeThresholds, detect_icons, size_filter
from .model import BoundingBox, Screen, ViewNode

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
_SPLIT_ALIASES = {"train": "train", "training": "train", "valid": "valid", "validation": "valid",
                  "dev": "valid", "val": "valid", "test": "test"}
MAX_LABELS = 3


class RicoSchemaError(ValueError):
    def __init__(self, message: str, path: Sequence[int] = ()):
        self.path = list(path)
        super().__init__(f"node {self.path}: {message}")


@dataclass(frozen=True)
class AnnotatedIcon:
    screen_id: str
    path: tuple[int, ...]
    bounds: Optional[BoundingBox]
    split: str
    labels: tuple[str, ...]
    class_name: str = ""
    resource_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(self.path))
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if not 1 <= len(self.labels) <= MAX_LABELS:
            raise ValueError(f"{self.icon_ref}: expected 1-3 labels, got {len(self.labels)}")

    @property
    def icon_ref(self) -> str:
        return f"{self.screen_id}:{'.'.join(map(str, self.path))}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "screen_id": self.screen_id,
            "path": list(self.path),
            "bounds": list(self.bounds.as_tuple()) if self.bounds else None,
            "split": self.split,
            "labels": list(self.labels),
            "class_name": self.class_name,
            "resource_id": self.resource_id,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AnnotatedIcon":
        return cls(d["screen_id"], tuple(d["path"]), BoundingBox.maybe(d.get("bounds")), d["split"],
                   tuple(d["labels"]), d.get("class_name", ""), d.get("resource_id"))


@dataclass
class DatasetStats:
    icons: dict[str, int] = field(default_factory=lambda: dict.fromkeys(SPLITS, 0))
    labels: dict[str, int] = field(default_factory=lambda: dict.fromkeys(SPLITS, 0))
    screens: int = 0

    @classmethod
    def of(cls, icons: Iterable[AnnotatedIcon]) -> "DatasetStats":
        stats = cls()
        screens = set()
        for icon in icons:
            stats.icons[icon.split] += 1
            stats.labels[icon.split] += len(icon.labels)
            screens.add(icon.screen_id)
        stats.screens = len(screens)
        return stats

    @property
    def total_icons(self) -> int:
        return sum(self.icons.values())

    @property
    def total_labels(self) -> int:
        return sum(self.labels.values())

    def to_dict(self) -> dict[str, Any]:
        return {"icons": dict(self.icons, total=self.total_icons),
                "labels": dict(self.labels, total=self.total_labels),
                "screens": self.screens}


@dataclass
class DatasetBuild:
    icons: list[AnnotatedIcon]
    stats: DatasetStats
    diagnostics: Counter = field(default_factory=Counter)


# -- Rico view hierarchies ---------------------------------------------------

def _rid(raw: Any) -> Optional[str]:
    if not raw:
        return None
    return str(raw).rsplit("/", 1)[-1]


def _desc(raw: Any) -> Optional[str]:
    if isinstance(raw, list):
        raw = next((r for r in raw if r), None)
    return str(raw) if raw else None


def _rico_node(doc: Any, path: tuple[int, ...]) -> ViewNode:
    if not isinstance(doc, dict):
        raise RicoSchemaError(f"expected an object, got {type(doc).__name__}", path)
    cls = doc.get("class")
    if not isinstance(cls, str) or not cls.strip():
        raise RicoSchemaError("missing 'class'", path)
    bounds = doc.get("bounds")
    if bounds is not None and (not isinstance(bounds, list) or len(bounds) != 4):
        raise RicoSchemaError(f"malformed bounds {bounds!r}", path)
    children_doc = doc.get("children") or []
    if not isinstance(children_doc, list):
        raise RicoSchemaError("'children' is not a list", path)
    # Rico hierarchies contain null placeholders among children
    children = []
    for child in children_doc:
        if child is not None:
            children.append(_rico_node(child, path + (len(children),)))
    clickable = doc.get("clickable")
    text = doc.get("text")
    return ViewNode(
        class_name=cls,
        resource_id=_rid(doc.get("resource-id")),
        text=str(text) if text is not None else None,
        content_description=_desc(doc.get("content-desc")),
        clickable=bool(clickable) if clickable is not None else None,
        bounds=BoundingBox.maybe(bounds),
        children=tuple(children),
    )


def activity_of(raw: Any) -> str:
    """``pkg/pkg.ui.Main`` and ``pkg/.ui.Main`` both become ``pkg.ui.Main``."""
    name = str(raw or "")
    if "/" not in name:
        return name
    package, _, cls = name.partition("/")
    return package + cls if cls.startswith(".") else cls


def load_rico_screen(doc: dict[str, Any], screen_id: Optional[str] = None, screenshot=None) -> Screen:
    """Map a Rico view-hierarchy document onto a :class:`Screen`.

    Accepts both the plain ``{"activity_name", "root"}`` shape and Rico's
    ``{"activity": {"root": ...}}`` nesting. Degenerate or negative bounds
    (common in Rico for off-screen nodes) are dropped rather than rejected.
    """
    if not isinstance(doc, dict):
        raise RicoSchemaError("document is not an object")
    root_doc = doc.get("root")
    if root_doc is None:
        root_doc = (doc.get("activity") or {}).get("root")
    if root_doc is None:
        raise RicoSchemaError("no root node")
    root = _rico_node(root_doc, ())
    dims = None
    if root.bounds is not None:
        dims = (root.bounds.right, root.bounds.bottom)
    if screenshot is not None and dims is None:
        from PIL import Image
        with Image.open(screenshot) as im:
            dims = im.size
    return Screen(
        screen_id=str(screen_id if screen_id is not None else doc.get("screen_id", "")),
        activity_name=activity_of(doc.get("activity_name")),
        root=root,
        screenshot=screenshot,
        screen_dims=dims,
    )


def load_rico_dir(directory) -> Iterator[Screen]:
    """Yield screens from ``<id>.json`` files, pairing ``<id>.png``/``.jpg`` screenshots."""
    directory = Path(directory)
    for path in sorted(directory.glob("*.json")):
        shot = next((p for p in (path.with_suffix(".png"), path.with_suffix(".jpg")) if p.exists()), None)
        doc = json.loads(path.read_text(encoding="utf-8"))
        yield load_rico_screen(doc, screen_id=path.stem, screenshot=shot)


# -- captions and splits -----------------------------------------------------

@dataclass(frozen=True)
class CaptionRow:
    screen_id: str
    bounds: Optional[tuple[int, int, int, int]]
    node_path: Optional[tuple[int, ...]]
    captions: tuple[str, ...]


def _parse_bounds(raw: str) -> Optional[tuple[int, int, int, int]]:
    nums = re.findall(r"-?\d+", raw or "")
    return tuple(int(n) for n in nums) if len(nums) == 4 else None


def _parse_path(raw: str) -> Optional[tuple[int, ...]]:
    raw = (raw or "").strip()
    if not raw:
        return None
    parts = raw.split(".")
    return tuple(int(p) for p in parts if p != "")


def read_captions(path) -> list[CaptionRow]:
    """Read a caption CSV.

    Columns: ``screen_id`` (or ``screenId``); ``bounds`` as ``[l, t, r, b]``
    and/or ``node_id`` (or ``nodeId``) as a dotted child-index path;
    ``captions`` separated by ``|``.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            sid = rec.get("screen_id") or rec.get("screenId")
            if not sid:
                continue
            node = rec.get("node_id") or rec.get("nodeId")
            caps = tuple(c.strip() for c in (rec.get("captions") or "").split("|") if c.strip())
            rows.append(CaptionRow(sid.strip(), _parse_bounds(rec.get("bounds", "")), _parse_path(node), caps))
    return rows


def read_splits(path) -> dict[str, str]:
    """Screen-id -> split, from a ``screen_id,split`` CSV or a directory of ``train/valid|dev/test.txt`` lists."""
    path = Path(path)
    out: dict[str, str] = {}
    if path.is_dir():
        for name in ("train", "valid", "dev", "val", "test"):
            f = path / f"{name}.txt"
            if f.exists():
                for line in f.read_text(encoding="utf-8").split():
                    out[line.strip()] = _SPLIT_ALIASES[name]
        return out
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.reader(fh):
            if len(rec) < 2 or rec[0] in ("screen_id", "screenId"):
                continue
            split = _SPLIT_ALIASES.get(rec[1].strip().lower())
            if split is None:
                raise ValueError(f"{path}: unknown split {rec[1]!r}")
            out[rec[0].strip()] = split
    return out


def build_icon_dataset(screens: Iterable[Screen], caption_file, split_file, seed: int = 0,
                       thresholds: SizeThresholds = SizeThresholds()) -> DatasetBuild:
    """Join captioned widgets to filtered icons.

    A caption row joins to the icon with equal bounds on its screen (the
    first in document order on ties), or to the node path when the row
    carries no bounds. Rows that do not land on a kept icon are counted in
    ``diagnostics`` and skipped.
    """
    by_id = {s.screen_id: s for s in screens}
    splits = read_splits(split_file)
    diag: Counter = Counter()
    icon_index: dict[str, list] = {}
    for sid, screen in by_id.items():
        kept = []
        for cand in detect_icons(screen):
            if screen.screen_dims and not size_filter(cand, screen.screen_dims, thresholds):
                continue
            kept.append(cand)
        icon_index[sid] = kept

    joined: dict[tuple[str, tuple[int, ...]], AnnotatedIcon] = {}
    for row in read_captions(caption_file):
        if row.screen_id not in by_id:
            diag["unknown_screen"] += 1
            continue
        split = splits.get(row.screen_id)
        if split is None:
            diag["no_split"] += 1
            continue
        if not row.captions:
            diag["no_caption"] += 1
            continue
        cands = icon_index[row.screen_id]
        if row.bounds is not None:
            hit = next((c for c in cands if c.node.bounds and c.node.bounds.as_tuple() == row.bounds), None)
        else:
            hit = next((c for c in cands if c.path == row.node_path), None)
        if hit is None:
            diag["not_an_icon"] += 1
            continue
        key = (row.screen_id, hit.path)
        if key in joined:
            diag["duplicate_row"] += 1
            continue
        if len(row.captions) > MAX_LABELS:
            diag["labels_truncated"] += 1
        joined[key] = AnnotatedIcon(row.screen_id, hit.path, hit.node.bounds, split, row.captions[:MAX_LABELS],
                                    hit.node.class_name, hit.node.resource_id)
    icons = [joined[k] for k in sorted(joined)]
    if diag:
        log.info("dataset build skipped rows: %s (seed %s)", dict(diag), seed)
    return DatasetBuild(icons, DatasetStats.of(icons), diag)


def sample_r1(icons: Sequence[AnnotatedIcon], seed: int) -> list[AnnotatedIcon]:
    """Keep one random label per train/valid icon; test icons keep all of theirs."""
    out = []
    for icon in icons:
        if icon.split == "test" or len(icon.labels) == 1:
            out.append(icon)
            continue
        rng = random.Random(f"{seed}:{icon.icon_ref}")
        out.append(replace(icon, labels=(rng.choice(icon.labels),)))
    return out


# -- icon classes for the fine-tune subset ---------------------------------

def _id_words(resource_id: Optional[str]) -> set[str]:
    if not resource_id:
        return set()
    spaced = re.sub(r"([a-z0-9])([A-Z])", r"\1 \2", resource_id)
    words = [w.lower() for w in re.split(r"[^A-Za-z0-9]+", spaced) if w]
    joined = {"_".join(words[i:i + 2]) for i in range(len(words) - 1)}
    return set(words) | joined


@dataclass(frozen=True)
class KeywordClassifier:
    """Assigns icons to classes by keywords in their resource ids; unmatched icons are ``other``."""

    classes: tuple[tuple[str, tuple[str, ...]], ...]
    fallback: str = "other"

    @classmethod
    def load(cls, path=None) -> "KeywordClassifier":
        if path is None:
            text = resources.files("altgen.resources").joinpath("icon_classes.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        doc = json.loads(text)
        return cls(tuple((c["name"], tuple(c["keywords"])) for c in doc["classes"]), doc.get("fallback", "other"))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.classes] + [self.fallback]

    def __call__(self, icon: AnnotatedIcon) -> str:
        words = _id_words(icon.resource_id)
        for name, keywords in self.classes:
            if words.intersection(keywords):
                return name
        return self.fallback


def sample_finetune_subset(train_icons: Sequence[AnnotatedIcon], classify: Optional[Callable[[AnnotatedIcon], str]] = None,
                           cap: int = 15, seed: int = 0) -> tuple[list[AnnotatedIcon], dict[str, str]]:
    """Up to ``cap`` seeded-random icons per class.

    Returns the subset (grouped by class) and an icon_ref -> class map.
    """
    classify = classify or KeywordClassifier.load()
    groups: dict[str, list[AnnotatedIcon]] = defaultdict(list)
    for icon in train_icons:
        groups[classify(icon)].append(icon)
    subset = []
    assigned = {}
    for name in sorted(groups):
        members = sorted(groups[name], key=lambda i: i.icon_ref)
        rng = random.Random(f"{seed}:{name}")
        chosen = members if len(members) <= cap else sorted(rng.sample(members, cap), key=lambda i: i.icon_ref)
        subset.extend(chosen)
        assigned.update((i.icon_ref, name) for i in chosen)
    return subset, assigned


def write_manifest(icons: Iterable[AnnotatedIcon], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for icon in icons:
            fh.write(json.dumps(icon.to_dict(), ensure_ascii=False) + "\n")


def read_manifest(path) -> list[AnnotatedIcon]:
    with open(path, encoding="utf-8") as fh:
        return [AnnotatedIcon.from_dict(json.loads(line)) for line in fh if line.strip()]
