"""Icon detection and DOM-context extraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import IconContext, NodeProps, Screen, ViewNode

ICON_BUTTON_SUFFIX = "ImageButton"
ICON_VIEW_SUFFIX = "ImageView"


@dataclass(frozen=True)
class IconCandidate:
    screen_ref: str
    path: tuple[int, ...]
    node: ViewNode
    parent: Optional[ViewNode] = None

    @property
    def key(self) -> tuple[tuple[int, ...], str]:
        return (self.path, self.node.class_name)


@dataclass(frozen=True)
class SizeThresholds:
    """Drop rules for abnormally large or narrow elements."""

    max_screen_fraction: float = 0.5
    max_aspect_ratio: float = 4.0
    min_side: int = 8


def is_icon_class(node: ViewNode) -> bool:
    name = node.class_name
    return name.endswith(ICON_BUTTON_SUFFIX) or (name.endswith(ICON_VIEW_SUFFIX) and node.clickable is True)


def detect_icons(screen: Screen) -> list[IconCandidate]:
    """Clickable icons of ``screen`` in document order.

    Any ``*ImageButton`` qualifies; ``*ImageView`` only when clickable.
    """
    return [
        IconCandidate(screen.screen_id, path, node, parent)
        for path, parent, node in screen.root.walk()
        if is_icon_class(node)
    ]


def size_filter(candidate: IconCandidate, screen_dims: tuple[int, int],
                thresholds: SizeThresholds = SizeThresholds()) -> bool:
    """Return True to keep the candidate."""
    box = candidate.node.bounds
    if box is None:
        return True
    sw, sh = screen_dims
    if sw <= 0 or sh <= 0:
        raise ValueError(f"screen dims must be positive, got {screen_dims}")
    w, h = box.width, box.height
    if w > thresholds.max_screen_fraction * sw or h > thresholds.max_screen_fraction * sh:
        return False
    if min(w, h) < thresholds.min_side:
        return False
    return max(w, h) / min(w, h) <= thresholds.max_aspect_ratio


def extract_context(screen: Screen, candidate: IconCandidate) -> IconContext:
    parent = candidate.parent
    siblings: list[NodeProps] = []
    if parent is not None:
        own_index = candidate.path[-1]
        for i, child in enumerate(parent.children):
            if i == own_index:
                continue
            props = NodeProps.of(child)
            # a sibling known only by its class says nothing useful
            if props.has_identity_text():
                siblings.append(props)
    return IconContext(
        app_activity_name=screen.activity_name,
        ui_element_info=NodeProps.of(candidate.node),
        parent_node=NodeProps.of(parent) if parent is not None else None,
        sibling_nodes=tuple(siblings),
    )


def diff_new_icons(old: Screen, new: Screen) -> list[IconCandidate]:
    """Icons in ``new`` without a counterpart in ``old``.

    Candidates sharing a resource id and class are paired first, which keeps
    an icon matched when an insertion shifts its path; the rest pair by
    (path, class).
    """
    unmatched_old = list(detect_icons(old))
    fresh = []
    pending = []
    for cand in detect_icons(new):
        rid = cand.node.resource_id
        hit = None
        if rid:
            hit = next((o for o in unmatched_old
                        if o.node.resource_id == rid and o.node.class_name == cand.node.class_name), None)
        if hit is not None:
            unmatched_old.remove(hit)
        else:
            pending.append(cand)
    for cand in pending:
        hit = next((o for o in unmatched_old if o.key == cand.key), None)
        if hit is not None:
            unmatched_old.remove(hit)
        else:
            fresh.append(cand)
    return fresh
