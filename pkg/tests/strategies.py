"""Shared hypothesis strategies for random view trees."""

from hypothesis import strategies as st

from altgen.model import IconContext, NodeProps, Screen, ViewNode

CLASSES = ["android.widget.ImageButton", "AppCompatImageButton", "ImageView", "android.widget.ImageView",
           "TextView", "LinearLayout", "FrameLayout", "ToggleButton", "Button", "ImageViewer", "MyImageButtonX"]

maybe_text = st.one_of(st.none(), st.just(""), st.just("   "), st.text(min_size=1, max_size=12))
ident = st.one_of(st.none(), st.just(""), st.from_regex(r"[a-z][a-z_]{0,12}", fullmatch=True))


@st.composite
def view_nodes(draw, depth=3):
    children = ()
    if depth > 0:
        children = tuple(draw(st.lists(view_nodes(depth=depth - 1), max_size=4)))
    return ViewNode(
        class_name=draw(st.sampled_from(CLASSES)),
        resource_id=draw(ident),
        text=draw(maybe_text),
        content_description=draw(maybe_text),
        clickable=draw(st.one_of(st.none(), st.booleans())),
        children=children,
    )


def screens():
    return st.builds(lambda root, act: Screen("s", act, root), view_nodes(),
                     st.from_regex(r"[a-z]{1,5}(\.[a-z]{1,5}){0,2}\.[A-Z][a-z]{1,8}", fullmatch=True))


safe_text = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=10).filter(lambda s: s.strip())
props = st.builds(NodeProps, st.one_of(st.none(), safe_text), st.one_of(st.none(), safe_text),
                  st.one_of(st.none(), safe_text))


@st.composite
def icon_contexts(draw):
    element = draw(props.filter(bool))
    parent = draw(st.one_of(st.none(), props.filter(bool)))
    return IconContext(
        app_activity_name=draw(safe_text),
        ui_element_info=element,
        parent_node=parent,
        sibling_nodes=tuple(draw(st.lists(props.filter(bool), max_size=3))),
        in_icon_text=tuple(draw(st.lists(safe_text, max_size=2))),
        icon_label=draw(st.one_of(st.none(), safe_text)),
    )
