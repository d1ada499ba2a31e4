"""Core value types shared across the pipeline.

Everything here is immutable after construction and free of I/O.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Any, Iterable, Optional, Sequence


class BadPathError(LookupError):
    """A child-index path does not address a node."""

    def __init__(self, path: Sequence[int], depth: int):
        self.path = list(path)
        self.depth = depth
        super().__init__(f"bad path {self.path}: index {self.path[depth]} out of range at depth {depth}")


@dataclass(frozen=True)
class BoundingBox:
    """Pixel rectangle; ``right`` and ``bottom`` are exclusive."""

    left: int
    top: int
    right: int
    bottom: int

    def __post_init__(self):
        if min(self.left, self.top, self.right, self.bottom) < 0:
            raise ValueError(f"negative coordinate in {self}")
        if self.left >= self.right or self.top >= self.bottom:
            raise ValueError(f"empty box {self}")

    @property
    def width(self) -> int:
        return self.right - self.left

    @property
    def height(self) -> int:
        return self.bottom - self.top

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.left, self.top, self.right, self.bottom)

    def relative_to(self, outer: "BoundingBox") -> "BoundingBox":
        return BoundingBox(self.left - outer.left, self.top - outer.top,
                           self.right - outer.left, self.bottom - outer.top)

    @classmethod
    def maybe(cls, coords: Optional[Sequence[int]]) -> Optional["BoundingBox"]:
        """Build a box from ``[l, t, r, b]``, or None when degenerate or off-screen."""
        if coords is None or len(coords) != 4:
            return None
        try:
            return cls(*(int(c) for c in coords))
        except (TypeError, ValueError):
            return None


@dataclass(frozen=True)
class ViewNode:
    class_name: str
    resource_id: Optional[str] = None
    text: Optional[str] = None
    content_description: Optional[str] = None
    clickable: Optional[bool] = None
    bounds: Optional[BoundingBox] = None
    children: tuple["ViewNode", ...] = ()

    def __post_init__(self):
        if not self.class_name or not self.class_name.strip():
            raise ValueError("class_name must be non-empty")
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))

    @property
    def simple_class(self) -> str:
        """Class name without its package, e.g. ``AppCompatImageButton``."""
        return self.class_name.rsplit(".", 1)[-1]

    def walk(self, path: tuple[int, ...] = ()):
        """Yield ``(path, parent, node)`` in document (pre-)order."""
        stack = [(path, None, self)]
        while stack:
            p, parent, node = stack.pop()
            yield p, parent, node
            for i in range(len(node.children) - 1, -1, -1):
                stack.append((p + (i,), node, node.children[i]))


@dataclass(frozen=True)
class Screen:
    screen_id: str
    activity_name: str
    root: ViewNode
    screenshot: Any = None  # path or PIL image
    screen_dims: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.screenshot is not None and self.screen_dims is None:
            raise ValueError("screen_dims required when a screenshot is attached")


def node_at_path(screen: Screen, path: Sequence[int]) -> ViewNode:
    node = screen.root
    for depth, idx in enumerate(path):
        if not 0 <= idx < len(node.children):
            raise BadPathError(path, depth)
        node = node.children[idx]
    return node


def _clean(value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    value = str(value)
    return value if value.strip() else None


@dataclass(frozen=True)
class NodeProps:
    """The textual properties of one node that may enter a prompt.

    Blank values are dropped at construction and a content description is
    never carried, so neither can leak into a rendered context.
    """

    cls: Optional[str] = None
    resource_id: Optional[str] = None
    text: Optional[str] = None

    def __post_init__(self):
        for name in ("cls", "resource_id", "text"):
            object.__setattr__(self, name, _clean(getattr(self, name)))

    @classmethod
    def of(cls, node: ViewNode) -> "NodeProps":
        return cls(node.simple_class, node.resource_id, node.text)

    def __bool__(self) -> bool:
        return any((self.cls, self.resource_id, self.text))

    def has_identity_text(self) -> bool:
        """True when the node carries more than its class name."""
        return bool(self.resource_id or self.text)

    def without_resource_id(self) -> "NodeProps":
        return replace(self, resource_id=None)

    # Three shapes appear in the canonical context: the icon uses
    # ``class_name`` first, the parent is a list of one-key objects and the
    # siblings lead with ``resource_id``.
    def element_info(self) -> dict[str, str]:
        return _drop_none({"class_name": self.cls, "resource_id": self.resource_id, "text": self.text})

    def entry_list(self) -> list[dict[str, str]]:
        return [{k: v} for k, v in self.sibling_info().items()]

    def sibling_info(self) -> dict[str, str]:
        return _drop_none({"resource_id": self.resource_id, "class": self.cls, "text": self.text})

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "NodeProps":
        return cls(data.get("class_name", data.get("class")), data.get("resource_id"), data.get("text"))

    @classmethod
    def from_entry_list(cls, entries: Iterable[dict[str, Any]]) -> "NodeProps":
        merged: dict[str, Any] = {}
        for entry in entries:
            merged.update(entry)
        return cls.from_mapping(merged)


def _drop_none(d: dict[str, Optional[str]]) -> dict[str, str]:
    return {k: v for k, v in d.items() if v is not None}


@dataclass(frozen=True)
class IconContext:
    app_activity_name: str
    ui_element_info: NodeProps
    parent_node: Optional[NodeProps] = None
    sibling_nodes: tuple[NodeProps, ...] = ()
    in_icon_text: tuple[str, ...] = ()
    icon_label: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "sibling_nodes", tuple(self.sibling_nodes))
        texts = tuple(t.strip() for t in self.in_icon_text if t and t.strip())
        object.__setattr__(self, "in_icon_text", texts)
        if self.parent_node is not None and not self.parent_node:
            object.__setattr__(self, "parent_node", None)

    def with_ocr(self, texts: Iterable[str]) -> "IconContext":
        return replace(self, in_icon_text=tuple(texts))

    def with_label(self, label: Optional[str]) -> "IconContext":
        return replace(self, icon_label=label)

    def to_dict(self, *, include_label: bool = True, include_relatives: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {
            "app_activity_name": self.app_activity_name,
            "UI_element_info": self.ui_element_info.element_info(),
        }
        if include_relatives:
            out["parent_node"] = self.parent_node.entry_list() if self.parent_node else []
            out["sibling_nodes"] = [s.sibling_info() for s in self.sibling_nodes]
        if self.in_icon_text:
            out["in_icon_text"] = list(self.in_icon_text)
        if include_label and self.icon_label:
            out["icon_label"] = self.icon_label
        return out

    def to_json(self, **kwargs) -> str:
        return canonical_json(self.to_dict(**kwargs))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "IconContext":
        parent = data.get("parent_node") or []
        return cls(
            app_activity_name=data["app_activity_name"],
            ui_element_info=NodeProps.from_mapping(data.get("UI_element_info", {})),
            parent_node=NodeProps.from_entry_list(parent) if parent else None,
            sibling_nodes=tuple(NodeProps.from_mapping(s) for s in data.get("sibling_nodes", [])),
            in_icon_text=tuple(data.get("in_icon_text", [])),
            icon_label=data.get("icon_label"),
        )

    @classmethod
    def from_json(cls, text: str) -> "IconContext":
        return cls.from_dict(json.loads(text))


def canonical_json(value: Any, indent: int = 2) -> str:
    """Two-space JSON where one-key objects with a scalar value stay inline.

    This reproduces the hand-formatted layout used for icon contexts, e.g.
    ``{ "class": "LinearLayout" }`` inside the parent list.
    """
    return _render(value, 0, indent)


def _render(value: Any, level: int, indent: int) -> str:
    pad = " " * (indent * (level + 1))
    close = " " * (indent * level)
    if isinstance(value, dict):
        if not value:
            return "{}"
        if len(value) == 1:
            (k, v), = value.items()
            if not isinstance(v, (dict, list)):
                return "{ " + _scalar(k) + ": " + _scalar(v) + " }"
        items = [pad + _scalar(k) + ": " + _render(v, level + 1, indent) for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + close + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        items = [pad + _render(v, level + 1, indent) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + close + "]"
    return _scalar(value)


def _scalar(v: Any) -> str:
    return json.dumps(v, ensure_ascii=False)


class Variant(str, enum.Enum):
    TEXTT = "TextT"
    MMT = "MMT"


class ImageScope(str, enum.Enum):
    ICON = "icon"
    CONTAINER = "container"


@dataclass(frozen=True)
class GenerationMode:
    variant: Variant = Variant.MMT
    image_scope: ImageScope = ImageScope.ICON

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "image_scope", ImageScope(self.image_scope))

    @property
    def label(self) -> str:
        if self.variant is Variant.TEXTT:
            return "TextT"
        return "MMT_" + self.image_scope.value[0]

    @classmethod
    def parse(cls, text: str) -> "GenerationMode":
        """Accept ``textt``, ``mmt``, ``mmt_i`` or ``mmt_c``."""
        t = text.strip().lower()
        if t == "textt":
            return cls(Variant.TEXTT)
        if t in ("mmt", "mmt_i"):
            return cls(Variant.MMT, ImageScope.ICON)
        if t == "mmt_c":
            return cls(Variant.MMT, ImageScope.CONTAINER)
        raise ValueError(f"unknown mode {text!r}")

    def to_dict(self) -> dict[str, str]:
        return {"variant": self.variant.value, "image_scope": self.image_scope.value}


TEXTT = GenerationMode(Variant.TEXTT)
MMT_I = GenerationMode(Variant.MMT, ImageScope.ICON)
MMT_C = GenerationMode(Variant.MMT, ImageScope.CONTAINER)


@dataclass(frozen=True)
class AblationConfig:
    omit_ocr_text: bool = False
    omit_resource_id: bool = False
    omit_parent_sibling: bool = False

    @property
    def label(self) -> str:
        parts = []
        if self.omit_ocr_text:
            parts.append("w/o in-icon text (OCR)")
        if self.omit_resource_id:
            parts.append("w/o icon's resource-id")
        if self.omit_parent_sibling:
            parts.append("w/o parent & sibling DOM info")
        return ", ".join(parts) or "all"

    def to_dict(self) -> dict[str, bool]:
        return {"omit_ocr_text": self.omit_ocr_text, "omit_resource_id": self.omit_resource_id,
                "omit_parent_sibling": self.omit_parent_sibling}

    @classmethod
    def from_flags(cls, flags: Iterable[str]) -> "AblationConfig":
        names = {"ocr": "omit_ocr_text", "resource-id": "omit_resource_id",
                 "parent-sibling": "omit_parent_sibling"}
        kwargs = {}
        for f in flags:
            if f not in names:
                raise ValueError(f"unknown ablation {f!r}; expected one of {sorted(names)}")
            kwargs[names[f]] = True
        return cls(**kwargs)


FULL_INPUT = AblationConfig()

# Rows of the component-removal study, in report order.
ABLATION_ROWS = (
    AblationConfig(),
    AblationConfig(omit_ocr_text=True),
    AblationConfig(omit_resource_id=True),
    AblationConfig(omit_parent_sibling=True),
)


@dataclass(frozen=True)
class AltTextResult:
    icon_ref: str
    alt_text: str
    mode: GenerationMode
    prompt_fingerprint: str
    token_usage: tuple[int, int] = (0, 0)
    cost_usd: Decimal = Decimal(0)
    cached: bool = False

    def __post_init__(self):
        if not self.alt_text:
            raise ValueError("alt_text must be non-empty")
        if self.cost_usd < 0:
            raise ValueError("cost_usd must be >= 0")
        if self.cached and self.cost_usd != 0:
            raise ValueError("cached results cost nothing")

    def to_dict(self) -> dict[str, Any]:
        return {
            "icon_ref": self.icon_ref,
            "alt_text": self.alt_text,
            "mode": self.mode.to_dict(),
            "prompt_fingerprint": self.prompt_fingerprint,
            "token_usage": list(self.token_usage),
            "cost_usd": str(self.cost_usd),
            "cached": self.cached,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AltTextResult":
        return cls(
            icon_ref=d["icon_ref"],
            alt_text=d["alt_text"],
            mode=GenerationMode(**d["mode"]),
            prompt_fingerprint=d["prompt_fingerprint"],
            token_usage=tuple(d.get("token_usage", (0, 0))),
            cost_usd=Decimal(d.get("cost_usd", "0")),
            cached=bool(d.get("cached", False)),
        )


@dataclass(frozen=True)
class EvalRecord:
    icon_ref: str
    candidate: str
    references: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "references", tuple(self.references))
        if not 1 <= len(self.references) <= 3:
            raise ValueError(f"{self.icon_ref}: expected 1-3 references, got {len(self.references)}")

    def to_dict(self) -> dict[str, Any]:
        return {"icon_ref": self.icon_ref, "candidate": self.candidate, "references": list(self.references)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvalRecord":
        return cls(d["icon_ref"], d["candidate"], tuple(d["references"]))
