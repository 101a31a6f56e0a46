"""Keyphrase patterns, narrative matching, annotation sampling, and the
two-stage keyphrase recall estimator."""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .corpus import CaseRecord
from .textnorm import words_of


class KeyphraseError(Exception):
    pass


@dataclass(frozen=True)
class KeyphrasePattern:
    """A lowercase word or word sequence, optionally prefix-wildcarded.

    A trailing `*` makes the final word match any word sharing its prefix
    ("messag*" matches "message", "messaging"). Plain words match whole
    words only.
    """

    pattern: str

    def __post_init__(self) -> None:
        p = self.pattern
        if not p or not p.strip():
            raise KeyphraseError("empty keyphrase pattern")
        if p != p.lower():
            raise KeyphraseError(f"pattern must be lowercase: {p!r}")
        if "*" in p[:-1] or p == "*":
            raise KeyphraseError(f"wildcard only allowed at the end: {p!r}")

    @property
    def words(self) -> tuple:
        return tuple(self.pattern.rstrip("*").split())

    @property
    def wildcard(self) -> bool:
        return self.pattern.endswith("*")

    def matches_at(self, words: Sequence[str], start: int) -> bool:
        pwords = self.words
        if start + len(pwords) > len(words):
            return False
        for offset, pword in enumerate(pwords):
            word = words[start + offset]
            last = offset == len(pwords) - 1
            if self.wildcard and last:
                if not word.startswith(pword):
                    return False
            elif word != pword:
                return False
        return True


def parse_patterns(lines: Iterable[str]) -> list:
    """One pattern per line; blank lines and `#` comments ignored."""
    patterns = []
    for line in lines:
        text = line.split("#", 1)[0].strip().lower()
        if text:
            patterns.append(KeyphrasePattern(text))
    return patterns


def load_patterns(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_patterns(fh)


def match_keyphrases(narrative: str, patterns: Sequence[KeyphrasePattern]) -> set:
    """Case-insensitive whole-word matching; returns the matched pattern strings."""
    words = words_of(narrative)
    matched = set()
    for pattern in patterns:
        if pattern.pattern in matched:
            continue
        for start in range(len(words)):
            if pattern.matches_at(words, start):
                matched.add(pattern.pattern)
                break
    return matched


def case_has_keyphrase(case: CaseRecord, patterns: Sequence[KeyphrasePattern]) -> bool:
    return bool(match_keyphrases(case.narrative, patterns))


def sample_annotation_set(
    cases: Sequence[CaseRecord],
    patterns: Sequence[KeyphrasePattern],
    n_with: int,
    n_without: int,
    seed: int,
) -> tuple:
    """Stratified annotation sample: keyphrase hits vs non-hits.

    Uniform without-replacement sampling within each stratum, deterministic
    per seed. Raises KeyphraseError when a stratum is too small.
    """
    if n_with < 0 or n_without < 0:
        raise KeyphraseError("sample sizes must be non-negative")
    with_hits = [c for c in cases if case_has_keyphrase(c, patterns)]
    without_hits_pool = [c for c in cases if not case_has_keyphrase(c, patterns)]
    if len(with_hits) < n_with:
        raise KeyphraseError(
            f"keyphrase stratum too small: need {n_with}, have {len(with_hits)}"
        )
    if len(without_hits_pool) < n_without:
        raise KeyphraseError(
            f"no-keyphrase stratum too small: need {n_without}, have {len(without_hits_pool)}"
        )
    rng = random.Random(seed)
    sampled_with = rng.sample(with_hits, n_with)
    sampled_without = rng.sample(without_hits_pool, n_without)
    return sampled_with, sampled_without


def estimate_keyphrase_recall(
    share_flagged_without_kp: float,
    precision_without_kp: float,
    share_flagged_with_kp: float,
    precision_with_kp: float,
) -> float:
    """Recall of the keyphrase filter among flagged cases.

    Splits the flagged population into the keyphrase-containing share and
    the rest; each share times its precision gives the true positives it
    contributes, and recall is the keyphrase share's fraction of all of
    them.
    """
    values = (
        share_flagged_without_kp,
        precision_without_kp,
        share_flagged_with_kp,
        precision_with_kp,
    )
    if any(not 0.0 <= v <= 1.0 for v in values):
        raise KeyphraseError("all inputs must lie in [0, 1]")
    if abs(share_flagged_without_kp + share_flagged_with_kp - 1.0) > 1e-9:
        raise KeyphraseError("shares must sum to 1")
    covered = share_flagged_with_kp * precision_with_kp
    missed = share_flagged_without_kp * precision_without_kp
    if covered + missed == 0.0:
        raise KeyphraseError("no true positives in either subset; recall undefined")
    return covered / (covered + missed)


def write_expansion_report(path, candidates: Sequence) -> None:
    """CSV of (source_phrase, candidate, similarity), grouped and rank-ordered."""
    rows = sorted(candidates, key=lambda c: (c.source_phrase, -c.similarity, c.token))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_phrase", "candidate", "similarity"])
        for cand in rows:
            writer.writerow([cand.source_phrase, cand.token, f"{cand.similarity:.6f}"])


def default_patterns() -> list:
    """The packaged keyphrase file (editable copy lives in data/)."""
    from importlib import resources

    ref = resources.files("themekit.data").joinpath("keyphrases_default.txt")
    return parse_patterns(ref.read_text(encoding="utf-8").splitlines())


def default_starter_phrases() -> list:
    from importlib import resources

    ref = resources.files("themekit.data").joinpath("starter_phrases_default.txt")
    out = []
    for line in ref.read_text(encoding="utf-8").splitlines():
        text = line.split("#", 1)[0].strip().lower()
        if text:
            out.append(text)
    return out
