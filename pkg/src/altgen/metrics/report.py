"""Corpus evaluation and report rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from ..model import EvalRecord
from .cider import CiderConfig, cider
from .scores import TOKENIZER_VERSION, BleuStats, MeteorConfig, bleu_stats, meteor_lite, rouge_l, tokenize

METRICS = ("bleu1", "bleu2", "rougeL", "meteor_lite", "cider")
# Tables print every corpus score x100, the usual presentation for caption metrics.
HEADINGS = {"bleu1": "BLEU-1", "bleu2": "BLEU-2", "rougeL": "ROUGE-L", "meteor_lite": "METEOR-lite",
            "cider": "CIDEr", "spice": "SPICE"}


class EmptyEvaluationError(ValueError):
    pass


@dataclass
class MetricReport:
    items: list[dict[str, Any]]
    corpus: dict[str, float]
    count: int
    config: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"count": self.count, "corpus": self.corpus, "config": self.config, "items": self.items}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MetricReport":
        return cls(items=d["items"], corpus=d["corpus"], count=d["count"], config=d.get("config", {}))

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls.from_dict(json.loads(text))

    def table(self) -> str:
        head = " ".join(f"{HEADINGS[m]:>11}" for m in METRICS) + f" {'SPICE':>11}"
        row = " ".join(f"{_display(m, self.corpus[m]):>11.1f}" for m in METRICS) + f" {'n/a':>11}"
        return f"{'n':>6} {head}\n{self.count:>6} {row}"


def _display(metric: str, value: float) -> float:
    return value * 100


def evaluate(records: Sequence[EvalRecord], *, cider_config: CiderConfig = CiderConfig(),
             meteor_config: MeteorConfig = MeteorConfig(), extra_config: Optional[dict] = None) -> MetricReport:
    """Score candidates against their references.

    BLEU is aggregated at corpus level; the other corpus figures are means of
    the per-item scores.
    """
    if not records:
        raise EmptyEvaluationError("nothing to evaluate")
    tokenized = [(tokenize(r.candidate), [tokenize(x) for x in r.references]) for r in records]
    cider_scores = cider(tokenized, cider_config)
    corpus_b1, corpus_b2 = BleuStats(1), BleuStats(2)
    items = []
    for rec, (cand, refs), c in zip(records, tokenized, cider_scores):
        s1, s2 = bleu_stats(cand, refs, 1), bleu_stats(cand, refs, 2)
        corpus_b1 += s1
        corpus_b2 += s2
        items.append({
            "icon_ref": rec.icon_ref,
            "bleu1": s1.score(),
            "bleu2": s2.score(),
            "rougeL": rouge_l(cand, refs),
            "meteor_lite": meteor_lite(cand, refs, meteor_config),
            "cider": c,
        })
    n = len(items)
    corpus = {
        "bleu1": corpus_b1.score(),
        "bleu2": corpus_b2.score(),
        "rougeL": sum(i["rougeL"] for i in items) / n,
        "meteor_lite": sum(i["meteor_lite"] for i in items) / n,
        "cider": sum(i["cider"] for i in items) / n,
    }
    config = {
        "tokenizer": TOKENIZER_VERSION,
        "cider": cider_config.to_dict(),
        "meteor": {"alpha": meteor_config.alpha, "beta": meteor_config.beta, "gamma": meteor_config.gamma,
                   "synonyms": bool(meteor_config.synonyms)},
        "spice": "n/a",
    }
    config.update(extra_config or {})
    return MetricReport(items=items, corpus=corpus, count=n, config=config)


def read_eval_records(path) -> list[EvalRecord]:
    with open(path, encoding="utf-8") as fh:
        return [EvalRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_eval_records(records: Iterable[EvalRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")
