"""Component-removal study: one generation + evaluation per (mode, ablation) cell."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from ..model import ABLATION_ROWS, MMT_I, TEXTT, AblationConfig, GenerationMode

log = logging.getLogger(__name__)

DEFAULT_MODES = (TEXTT, MMT_I)


@dataclass
class AblationCell:
    mode: str
    input: str
    ablation: dict[str, bool]
    cider: Optional[float] = None
    spice: str = "n/a"
    corpus: dict[str, float] = field(default_factory=dict)
    failures: int = 0
    error: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {"mode": self.mode, "input": self.input, "ablation": self.ablation, "cider": self.cider,
                "spice": self.spice, "corpus": self.corpus, "failures": self.failures, "error": self.error}


@dataclass
class AblationGrid:
    cells: list[AblationCell]

    def to_json(self) -> str:
        return json.dumps({"cells": [c.to_dict() for c in self.cells]}, indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        lines = [f"{'Mode':<8} {'Input':<32} {'CIDEr':>7} {'SPICE':>6}"]
        for c in self.cells:
            score = "error" if c.cider is None else f"{c.cider * 100:.1f}"
            lines.append(f"{c.mode:<8} {c.input:<32} {score:>7} {c.spice:>6}")
        return "\n".join(lines)


def run_ablation_suite(samples, modes: Sequence[GenerationMode] = DEFAULT_MODES,
                       ablations: Sequence[AblationConfig] = ABLATION_ROWS, *, client, cache=None,
                       max_workers: int = 4, **kwargs) -> AblationGrid:
    """Fill the (mode x ablation) grid; a cell that cannot run is kept with its error."""
    from ..pipeline import run_generation

    cells = []
    for mode in modes:
        for ablation in ablations:
            cell = AblationCell(mode.label, ablation.label, ablation.to_dict())
            try:
                run = run_generation(samples, mode, ablation, client=client, cache=cache,
                                     max_workers=max_workers, **kwargs)
                cell.cider = run.report.corpus["cider"]
                cell.corpus = run.report.corpus
                cell.failures = len(run.failures)
            except Exception as exc:
                log.warning("ablation cell %s / %s failed: %s", cell.mode, cell.input, exc)
                cell.error = str(exc)
            cells.append(cell)
    return AblationGrid(cells)
