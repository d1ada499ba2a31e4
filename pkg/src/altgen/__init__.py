"""Context-aware alt-text for mobile UI icons, with an offline evaluation harness."""

from .annotate import Annotator, IconOutcome, WatchAnnotator, annotate_file, annotate_paths
from .extract import detect_icons, extract_context
from .genai.client import BackendConfig, ChatClient, ResultCache
from .genai.generate import classify_icon, generate_alt_text
from .layout import inject_alt_text, parse_layout
from .metrics.report import evaluate
from .model import (MMT_C, MMT_I, TEXTT, AblationConfig, AltTextResult, BoundingBox, GenerationMode, IconContext,
                    Screen, ViewNode)

__version__ = "0.1.0"

__all__ = [
    "Annotator", "BackendConfig", "ChatClient", "IconOutcome", "ResultCache", "WatchAnnotator", "annotate_file",
    "annotate_paths", "classify_icon", "evaluate", "generate_alt_text",
    "MMT_C", "MMT_I", "TEXTT", "AblationConfig", "AltTextResult", "BoundingBox", "GenerationMode", "IconContext",
    "Screen", "ViewNode", "detect_icons", "extract_context", "inject_alt_text", "parse_layout",
]
