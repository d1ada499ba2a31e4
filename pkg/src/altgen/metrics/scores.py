"""Sentence-level caption metrics: BLEU-n, ROUGE-L and a lightweight METEOR."""

from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

TOKENIZER_VERSION = "ws-punct-1"
_PUNCT = string.punctuation

TokenSeq = list[str]


def tokenize(s: str) -> TokenSeq:
    """Lowercase, split on whitespace, strip ASCII punctuation at token edges."""
    out = []
    for tok in s.lower().split():
        tok = tok.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def closest_ref_length(cand_len: int, ref_lens: Sequence[int]) -> int:
    """Reference length nearest the candidate's; the shorter one wins ties."""
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


@dataclass
class BleuStats:
    """Clipped n-gram counts; add them up across items for corpus BLEU."""

    n: int
    matches: list[int] = field(default_factory=list)
    totals: list[int] = field(default_factory=list)
    cand_len: int = 0
    ref_len: int = 0

    def __post_init__(self):
        self.matches = self.matches or [0] * self.n
        self.totals = self.totals or [0] * self.n

    def __iadd__(self, other: "BleuStats") -> "BleuStats":
        for k in range(self.n):
            self.matches[k] += other.matches[k]
            self.totals[k] += other.totals[k]
        self.cand_len += other.cand_len
        self.ref_len += other.ref_len
        return self

    def score(self) -> float:
        if self.cand_len == 0:
            return 0.0
        logs = []
        for m, t in zip(self.matches, self.totals):
            if m == 0 or t == 0:
                return 0.0
            logs.append(math.log(m / t))
        c, r = self.cand_len, self.ref_len
        bp = 1.0 if c > r else math.exp(1 - r / c)
        return bp * math.exp(sum(logs) / len(logs))


def bleu_stats(candidate: Sequence[str], refs: Sequence[Sequence[str]], n: int) -> BleuStats:
    if not refs:
        raise ValueError("at least one reference is required")
    stats = BleuStats(n)
    for k in range(1, n + 1):
        cand = ngrams(candidate, k)
        ceiling: Counter = Counter()
        for ref in refs:
            ceiling |= ngrams(ref, k)
        stats.matches[k - 1] = sum(min(c, ceiling[g]) for g, c in cand.items())
        stats.totals[k - 1] = sum(cand.values())
    stats.cand_len = len(candidate)
    stats.ref_len = closest_ref_length(len(candidate), [len(r) for r in refs])
    return stats


def bleu_n(candidate: Sequence[str], refs: Sequence[Sequence[str]], n: int) -> float:
    if n not in (1, 2, 3, 4):
        raise ValueError(f"unsupported BLEU order {n}")
    return bleu_stats(candidate, refs, n).score()


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], refs: Sequence[Sequence[str]], beta: float = 1.2) -> float:
    """LCS F-measure per reference, best reference wins."""
    if not refs:
        raise ValueError("at least one reference is required")
    if not candidate:
        return 0.0
    best = 0.0
    for ref in refs:
        lcs = lcs_length(candidate, ref)
        if lcs == 0 or not ref:
            continue
        p, r = lcs / len(candidate), lcs / len(ref)
        best = max(best, (1 + beta ** 2) * p * r / (r + beta ** 2 * p))
    return best


# -- METEOR-lite -------------------------------------------------------------

_SUFFIXES = ("ing", "ed", "es", "s", "e")
MIN_STEM = 3


def stem(word: str) -> str:
    """Strip the first of ing/ed/es/s/e that leaves at least three letters."""
    for suf in _SUFFIXES:
        if word.endswith(suf) and len(word) - len(suf) >= MIN_STEM:
            return word[:-len(suf)]
    return word


def load_synonyms(path) -> dict[str, frozenset[str]]:
    """One synonym group per line, words separated by commas or whitespace; ``#`` starts a comment."""
    table: dict[str, frozenset[str]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0]
        words = [w.strip().lower() for w in line.replace(",", " ").split() if w.strip()]
        group = frozenset(words)
        for w in words:
            table[w] = table.get(w, frozenset()) | group
    return table


@dataclass(frozen=True)
class MeteorConfig:
    alpha: float = 0.9
    beta: float = 3.0
    gamma: float = 0.5
    synonyms: Optional[dict[str, frozenset[str]]] = field(default=None, hash=False, compare=False)


EXACT, STEM, SYNONYM = 0, 1, 2


def match_stage(a: str, b: str, synonyms: Optional[dict[str, frozenset[str]]] = None) -> Optional[int]:
    if a == b:
        return EXACT
    if stem(a) == stem(b):
        return STEM
    if synonyms and b in synonyms.get(a, ()):
        return SYNONYM
    return None


def align(candidate: Sequence[str], ref: Sequence[str], synonyms=None) -> tuple[int, int]:
    """Return ``(matches, chunks)`` of the best staged unigram alignment.

    Exact matches are maximised first, then stem matches, then synonym
    matches; among those alignments the fewest chunks wins.
    """
    stages = [[match_stage(c, r, synonyms) for r in ref] for c in candidate]
    n_cand = len(candidate)

    @lru_cache(maxsize=None)
    def best(i: int, used: int, prev: int) -> tuple[int, int, int, int]:
        # (-exact, -stem, -synonym, chunks), minimised
        if i == n_cand:
            return (0, 0, 0, 0)
        options = [best(i + 1, used, -1)]
        for j, stage in enumerate(stages[i]):
            if stage is None or used >> j & 1:
                continue
            rest = best(i + 1, used | 1 << j, j)
            gain = [0, 0, 0]
            gain[stage] = -1
            new_chunk = 0 if prev >= 0 and j == prev + 1 else 1
            options.append((rest[0] + gain[0], rest[1] + gain[1], rest[2] + gain[2], rest[3] + new_chunk))
        return min(options)

    e, s, y, chunks = best(0, 0, -1)
    return -(e + s + y), chunks


def meteor_lite(candidate: Sequence[str], refs: Sequence[Sequence[str]],
                config: MeteorConfig = MeteorConfig()) -> float:
    if not refs:
        raise ValueError("at least one reference is required")
    best = 0.0
    for ref in refs:
        if not candidate or not ref:
            continue
        m, chunks = align(candidate, ref, config.synonyms)
        if m == 0:
            continue
        p, r = m / len(candidate), m / len(ref)
        fmean = p * r / (config.alpha * p + (1 - config.alpha) * r)
        penalty = config.gamma * (chunks / m) ** config.beta
        best = max(best, fmean * (1 - penalty))
    return best
