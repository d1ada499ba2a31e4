"""CIDEr-D with document frequencies taken from the evaluated corpus."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .scores import ngrams


@dataclass(frozen=True)
class CiderConfig:
    n: int = 4
    sigma: float = 6.0
    # idf = log((N + idf_epsilon) / df); keeps a one-item corpus from zeroing every weight
    idf_epsilon: float = 1.0
    scale: float = 10.0

    def to_dict(self) -> dict:
        return {"n": self.n, "sigma": self.sigma, "idf_epsilon": self.idf_epsilon, "scale": self.scale,
                "df": "corpus-references"}


def _counts(tokens: Sequence[str], n: int) -> Counter:
    out: Counter = Counter()
    for k in range(1, n + 1):
        out.update(ngrams(tokens, k))
    return out


def document_frequency(corpus: Sequence[tuple[Sequence[str], Sequence[Sequence[str]]]], n: int = 4) -> Counter:
    """Number of items whose reference set contains each n-gram."""
    df: Counter = Counter()
    for _, refs in corpus:
        seen = set()
        for ref in refs:
            seen.update(_counts(ref, n))
        df.update(seen)
    return df


def _vector(counts: Counter, df: Counter, log_n: float, n: int):
    vec = [dict() for _ in range(n)]
    norm = [0.0] * n
    for gram, tf in counts.items():
        k = len(gram) - 1
        w = tf * (log_n - math.log(max(1.0, df[gram])))
        vec[k][gram] = w
        norm[k] += w * w
    return vec, [math.sqrt(x) for x in norm]


def cider(corpus: Sequence[tuple[Sequence[str], Sequence[Sequence[str]]]],
          config: CiderConfig = CiderConfig()) -> list[float]:
    """Per-item CIDEr-D scores (scaled by ``config.scale``).

    ``corpus`` holds ``(candidate_tokens, [reference_tokens, ...])`` pairs.
    """
    if not corpus:
        raise ValueError("CIDEr needs at least one item")
    n = config.n
    df = document_frequency(corpus, n)
    log_n = math.log(len(corpus) + config.idf_epsilon)
    scores = []
    for cand, refs in corpus:
        if not refs:
            raise ValueError("every item needs at least one reference")
        vc, nc = _vector(_counts(cand, n), df, log_n, n)
        total = 0.0
        for ref in refs:
            vr, nr = _vector(_counts(ref, n), df, log_n, n)
            penalty = math.exp(-((len(cand) - len(ref)) ** 2) / (2 * config.sigma ** 2))
            per_n = 0.0
            for k in range(n):
                dot = sum(min(w, vr[k].get(g, 0.0)) * vr[k].get(g, 0.0) for g, w in vc[k].items())
                if nc[k] != 0 and nr[k] != 0:
                    dot /= nc[k] * nr[k]
                per_n += dot * penalty
            total += per_n / n
        scores.append(config.scale * total / len(refs))
    return scores
