"""Android layout XML: parsing with byte spans, drawable lookup, attribute injection.

Injection edits the raw bytes rather than re-serializing a DOM, so every
byte outside the inserted attribute survives untouched.
"""

from __future__ import annotations

import re
import xml.parsers.expat
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

from .model import BadPathError, Screen, ViewNode

CONTENT_DESCRIPTION = "android:contentDescription"
DENSITY_ORDER = ("", "-mdpi", "-hdpi", "-xhdpi", "-xxhdpi", "-xxxhdpi")
RASTER_EXTENSIONS = (".png", ".webp", ".jpg")

_WS = b" \t\r\n"


class LayoutParseError(ValueError):
    def __init__(self, message: str, line: int, column: int, source: str = "<layout>"):
        self.line = line
        self.column = column
        self.source = source
        super().__init__(f"{source}:{line}:{column}: {message}")


class AlreadyAnnotatedError(ValueError):
    """The element already carries a content description."""


class StaleLayoutError(LookupError):
    """The target element moved or vanished since the layout was parsed."""


@dataclass(frozen=True)
class SourceSpan:
    byte_start: int
    byte_end: int
    element_path: tuple[int, ...]


@dataclass
class ParsedLayout:
    screen: Screen
    spans: dict[tuple[int, ...], SourceSpan] = field(default_factory=dict)
    attrs: dict[tuple[int, ...], dict[str, str]] = field(default_factory=dict)


@dataclass
class _Attr:
    name: str
    name_start: int
    value_start: int  # first byte inside the quotes
    value_end: int  # closing quote
    ws_start: int  # whitespace run before the name


@dataclass
class _StartTag:
    name: str
    end: int  # one past '>'
    self_closing: bool
    attrs: list[_Attr]
    name_end: int


def _scan_start_tag(data: bytes, start: int) -> _StartTag:
    """Tokenize the start tag beginning at ``data[start] == '<'``."""
    i = start + 1
    n = len(data)
    while i < n and data[i] not in _WS and data[i:i + 1] not in (b"/", b">"):
        i += 1
    name = data[start + 1:i].decode("utf-8")
    name_end = i
    attrs = []
    while True:
        ws_start = i
        while data[i] in _WS:
            i += 1
        if data[i:i + 2] == b"/>":
            return _StartTag(name, i + 2, True, attrs, name_end)
        if data[i:i + 1] == b">":
            return _StartTag(name, i + 1, False, attrs, name_end)
        name_start = i
        while data[i] not in _WS and data[i:i + 1] != b"=":
            i += 1
        attr_name = data[name_start:i].decode("utf-8")
        while data[i] in _WS:
            i += 1
        i += 1  # '='
        while data[i] in _WS:
            i += 1
        quote = data[i]
        close = data.index(bytes([quote]), i + 1)
        attrs.append(_Attr(attr_name, name_start, i + 1, close, ws_start))
        i = close + 1


def _attr(attrs: dict[str, str], local: str, prefix: str = "android") -> Optional[str]:
    if f"{prefix}:{local}" in attrs:
        return attrs[f"{prefix}:{local}"]
    for k, v in attrs.items():
        if k.rsplit(":", 1)[-1] == local:
            return v
    return None


def strip_id(raw: Optional[str]) -> Optional[str]:
    """``@+id/rewind_button`` -> ``rewind_button``."""
    if raw is None:
        return None
    return raw.rsplit("/", 1)[-1] if raw.startswith("@") else raw


def _node_from(tag: str, attrs: dict[str, str], children: list[ViewNode]) -> ViewNode:
    clickable_raw = _attr(attrs, "clickable")
    if clickable_raw is not None:
        clickable: Optional[bool] = clickable_raw.strip().lower() == "true"
    elif tag.endswith("ImageButton"):
        clickable = True
    else:
        clickable = None
    return ViewNode(
        class_name=tag,
        resource_id=strip_id(_attr(attrs, "id")),
        text=_attr(attrs, "text"),
        content_description=_attr(attrs, "contentDescription"),
        clickable=clickable,
        children=tuple(children),
    )


def parse_layout(xml_bytes: bytes, activity_hint: Optional[str] = None,
                 source: str = "layout.xml") -> ParsedLayout:
    """Parse a layout into a ``Screen`` plus per-element byte spans and raw attributes.

    The activity name falls back to the stem of ``source``.
    """
    parser = xml.parsers.expat.ParserCreate()
    parser.ordered_attributes = True
    spans: dict[tuple[int, ...], SourceSpan] = {}
    raw_attrs: dict[tuple[int, ...], dict[str, str]] = {}
    # frame: [path, tag, attrs, start, start_tag, children, child_count]
    stack: list[list] = []
    root: list[ViewNode] = []

    def on_start(name, attr_list):
        start = parser.CurrentByteIndex
        if stack:
            parent = stack[-1]
            path = parent[0] + (parent[6],)
            parent[6] += 1
        else:
            path = ()
        attrs = dict(zip(attr_list[::2], attr_list[1::2]))
        stack.append([path, name, attrs, start, _scan_start_tag(xml_bytes, start), [], 0])

    def on_end(name):
        path, tag, attrs, start, stag, children, _ = stack.pop()
        cur = parser.CurrentByteIndex
        if stag.self_closing and cur == stag.end:
            end = cur
        else:
            end = xml_bytes.index(b">", cur) + 1
        node = _node_from(tag, attrs, children)
        spans[path] = SourceSpan(start, end, path)
        raw_attrs[path] = attrs
        if stack:
            stack[-1][5].append(node)
        else:
            root.append(node)

    parser.StartElementHandler = on_start
    parser.EndElementHandler = on_end
    try:
        parser.Parse(xml_bytes, True)
    except xml.parsers.expat.ExpatError as exc:
        raise LayoutParseError(xml.parsers.expat.ErrorString(exc.code), exc.lineno, exc.offset, source) from None
    if not root:
        raise LayoutParseError("no root element", 1, 0, source)
    activity = activity_hint or Path(source).stem
    screen = Screen(screen_id=source, activity_name=activity, root=root[0])
    return ParsedLayout(screen, spans, raw_attrs)


def _res_roots(project_root: Path) -> list[Path]:
    roots = [project_root / "res", project_root / "src" / "main" / "res",
             project_root / "app" / "src" / "main" / "res"]
    if project_root.name == "res":
        roots.insert(0, project_root)
    return [r for r in roots if r.is_dir()]


def resolve_drawable(node: ViewNode, raw_attrs: dict[str, str], project_root) -> Optional[Path]:
    """Find the raster file behind ``android:src`` / ``app:srcCompat``.

    Vector (XML) drawables deliberately resolve to None.
    """
    ref = raw_attrs.get("android:src") or raw_attrs.get("app:srcCompat") or _attr(raw_attrs, "srcCompat", "app")
    if not ref:
        return None
    m = re.fullmatch(r"@(drawable|mipmap)/([\w.]+)", ref.strip())
    if not m:
        return None
    kind, name = m.groups()
    kinds = [kind] + [k for k in ("drawable", "mipmap") if k != kind]
    for res in _res_roots(Path(project_root)):
        for k in kinds:
            folders = [res / f"{k}{suffix}" for suffix in DENSITY_ORDER]
            extra = sorted(p for p in res.glob(f"{k}-*") if p not in folders)
            for folder in folders + extra:
                for ext in RASTER_EXTENSIONS:
                    candidate = folder / f"{name}{ext}"
                    if candidate.is_file():
                        return candidate
    return None


def _escape_attr(text: str) -> str:
    return escape(text, {'"': "&quot;", "\n": "&#10;", "\r": "&#13;", "\t": "&#9;"})


def _locate(parsed: ParsedLayout, path: tuple[int, ...], expect_class: Optional[str],
            expect_id: Optional[str]) -> tuple[int, ...]:
    from .model import node_at_path

    try:
        node = node_at_path(parsed.screen, path)
    except BadPathError:
        node = None
    if node is not None and (expect_class is None or node.class_name == expect_class) \
            and (expect_id is None or node.resource_id == expect_id):
        return path
    if expect_id is None:
        if node is None:
            raise BadPathError(path, _failing_depth(parsed.screen.root, path))
        raise StaleLayoutError(f"element at {list(path)} is {node.class_name}, expected {expect_class}")
    hits = [p for p, _, n in parsed.screen.root.walk()
            if n.resource_id == expect_id and (expect_class is None or n.class_name == expect_class)]
    if len(hits) != 1:
        raise StaleLayoutError(f"cannot re-locate element {expect_id!r} ({len(hits)} matches)")
    return hits[0]


def _failing_depth(root: ViewNode, path: Sequence[int]) -> int:
    node = root
    for depth, idx in enumerate(path):
        if not 0 <= idx < len(node.children):
            return depth
        node = node.children[idx]
    return len(path) - 1


@dataclass(frozen=True)
class Injection:
    data: bytes
    offset: int  # where the new bytes start
    inserted: bytes  # empty when an existing value was overwritten


def inject(xml_bytes: bytes, element_path: Sequence[int], alt_text: str, *, force: bool = False,
           expect_class: Optional[str] = None, expect_id: Optional[str] = None) -> Injection:
    """Insert a content description on one element; see :func:`inject_alt_text`."""
    parsed = parse_layout(xml_bytes)
    path = _locate(parsed, tuple(element_path), expect_class, expect_id)
    span = parsed.spans[path]
    stag = _scan_start_tag(xml_bytes, span.byte_start)
    value = _escape_attr(alt_text).encode("utf-8")
    existing = next((a for a in stag.attrs if a.name.rsplit(":", 1)[-1] == "contentDescription"), None)
    if existing is not None:
        if not force:
            raise AlreadyAnnotatedError(f"element {list(path)} <{stag.name}> already has {existing.name}")
        data = xml_bytes[:existing.value_start] + value + xml_bytes[existing.value_end:]
        return Injection(data, existing.value_start, b"")
    if stag.attrs:
        last = stag.attrs[-1]
        anchor = last.value_end + 1
        ws = xml_bytes[last.ws_start:last.name_start]
        nl = ws.rfind(b"\n")
        if nl > 0 and ws[nl - 1:nl] == b"\r":
            nl -= 1
        sep = ws[nl:] if nl >= 0 else b" "
    else:
        anchor = stag.name_end
        sep = b" "
    inserted = sep + CONTENT_DESCRIPTION.encode() + b'="' + value + b'"'
    return Injection(xml_bytes[:anchor] + inserted + xml_bytes[anchor:], anchor, inserted)


def inject_alt_text(xml_bytes: bytes, element_path: Sequence[int], alt_text: str, *,
                    force: bool = False, expect_class: Optional[str] = None,
                    expect_id: Optional[str] = None) -> bytes:
    """Return ``xml_bytes`` with ``android:contentDescription`` added to one element.

    The attribute lands right after the element's last attribute, on its own
    line when the attributes are laid out one per line. Existing descriptions
    raise :class:`AlreadyAnnotatedError` unless ``force`` is set. With
    ``expect_class``/``expect_id`` the element is re-located by resource id if
    the path no longer points at it.
    """
    return inject(xml_bytes, element_path, alt_text, force=force,
                  expect_class=expect_class, expect_id=expect_id).data


def is_layout_file(path) -> bool:
    p = Path(path)
    return p.suffix == ".xml" and p.parent.name.startswith("layout") and p.parent.parent.name == "res"


def find_layout_files(root) -> list[Path]:
    root = Path(root)
    if root.is_file():
        return [root] if is_layout_file(root) else []
    return sorted(p for p in root.rglob("*.xml") if is_layout_file(p))
