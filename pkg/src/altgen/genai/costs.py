"""Cost accounting for generation runs and fine-tune exports."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable

from ..model import AltTextResult

TRAINING_PRICE_PER_M = Decimal("25.00")


@dataclass
class CostSummary:
    inference_usd: Decimal = Decimal(0)
    finetune_estimate_usd: Decimal = Decimal(0)
    by_mode: dict[str, Decimal] = field(default_factory=dict)
    calls: int = 0
    cached: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @property
    def total_usd(self) -> Decimal:
        return self.inference_usd + self.finetune_estimate_usd

    def to_dict(self) -> dict:
        return {
            "inference_usd": str(self.inference_usd),
            "finetune_estimate_usd": str(self.finetune_estimate_usd),
            "total_usd": str(self.total_usd),
            "by_mode": {k: str(v) for k, v in sorted(self.by_mode.items())},
            "calls": self.calls,
            "cached": self.cached,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }


def account_costs(results: Iterable[AltTextResult], finetune_estimate_usd: Decimal = Decimal(0)) -> CostSummary:
    summary = CostSummary(finetune_estimate_usd=Decimal(finetune_estimate_usd))
    for r in results:
        if r.cached:
            summary.cached += 1
            continue
        summary.calls += 1
        summary.inference_usd += r.cost_usd
        summary.by_mode[r.mode.label] = summary.by_mode.get(r.mode.label, Decimal(0)) + r.cost_usd
        summary.prompt_tokens += r.token_usage[0]
        summary.completion_tokens += r.token_usage[1]
    return summary


def finetune_cost(training_tokens: int, epochs: int = 3, price_per_m: Decimal = TRAINING_PRICE_PER_M) -> Decimal:
    return Decimal(training_tokens) * epochs * price_per_m / Decimal(1_000_000)
