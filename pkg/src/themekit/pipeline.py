"""The staged narrative-classification pipeline.

Per case: (1) split the narrative into sentences, (2) flag online activity
per sentence with a four-question chain-of-thought prompt, (3) merge
consecutive related sentences into units, (4) run the forced-choice theme
prompts and the source-of-information prompt on each online unit, then
aggregate to a case-level result.

Every malformed model answer gets one re-ask, then degrades to the neutral
outcome with a diagnostic flag; nothing is silently dropped.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from . import prompts
from .corpus import CaseRecord
from .llmclient import (
    ChatRequest,
    EndpointConfig,
    LlmError,
    as_bool,
    as_tristate,
    complete,
    extract_json_array,
    extract_json_object,
)
from .textnorm import words_of
from .themes import (
    ACTIVITY_ALPHABET,
    ACTIVITY_LETTER_MAP,
    DEFAULT_TECHNOLOGY_KINDS,
    HARM_ALPHABET,
    HARM_LETTER_MAP,
    INTERPERSONAL_ALPHABET,
    INTERPERSONAL_LETTER_MAP,
    SOURCE_PRIORITY,
    SourceOfInformation,
)


class PipelineError(Exception):
    pass


@dataclass(frozen=True)
class OnlineFlags:
    """Step-2 answers for one sentence or unit."""

    technology: bool = False
    phrases: tuple = ()
    internet: bool = False
    participate: str = "no"  # yes | no | unknown

    def __post_init__(self) -> None:
        if self.participate not in ("yes", "no", "unknown"):
            raise PipelineError(f"bad participate value: {self.participate!r}")
        if not self.technology and (self.phrases or self.internet or self.participate != "no"):
            raise PipelineError("technology=false forces empty phrases, internet=no, participate=no")

    @property
    def online(self) -> bool:
        """The narrative-level rule: all three of questions 1, 3, 4 are Yes."""
        return self.technology and self.internet and self.participate == "yes"


def merge_flags(parts: Sequence[OnlineFlags]) -> OnlineFlags:
    """Field-wise OR across unit members; phrase lists concatenate."""
    technology = any(p.technology for p in parts)
    if not technology:
        return OnlineFlags()
    phrases: list = []
    for p in parts:
        phrases.extend(p.phrases)
    participate = "no"
    for p in parts:
        if p.participate == "yes":
            participate = "yes"
            break
        if p.participate == "unknown":
            participate = "unknown"
    return OnlineFlags(
        technology=True,
        phrases=tuple(phrases),
        internet=any(p.internet for p in parts),
        participate=participate,
    )


@dataclass(frozen=True)
class SentenceUnit:
    unit_id: str
    case_id: str
    sentence_indices: tuple
    text: str
    flags: OnlineFlags

    def __post_init__(self) -> None:
        idx = self.sentence_indices
        if not idx or list(idx) != list(range(idx[0], idx[0] + len(idx))):
            raise PipelineError("sentence_indices must be contiguous ascending")
        if not self.text:
            raise PipelineError("unit text must be non-empty")


@dataclass(frozen=True)
class UnitResult:
    unit: SentenceUnit
    themes: tuple  # ThemeLabel, at most one per prompt
    source: SourceOfInformation


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    online_mentioned: bool
    technology_kinds: tuple
    themes: tuple  # ThemeLabel
    source: SourceOfInformation
    per_unit: tuple  # (unit_id, sentence_indices, theme-name tuple)
    flags: tuple = ()

    def theme_names(self) -> tuple:
        return tuple(t.name for t in self.themes)

    def to_obj(self) -> dict:
        return {
            "case_id": self.case_id,
            "online_mentioned": self.online_mentioned,
            "technology_kinds": sorted(self.technology_kinds),
            "themes": sorted(t.name for t in self.themes),
            "source": self.source.value,
            "per_unit": [
                {
                    "unit_id": unit_id,
                    "sentence_indices": list(indices),
                    "themes": sorted(names),
                }
                for unit_id, indices, names in self.per_unit
            ],
        }


@dataclass(frozen=True)
class PipelineConfig:
    model: str = "default"
    max_tokens: int = 1024
    rejoin_tolerance: float = 0.01
    technology_kinds: tuple = DEFAULT_TECHNOLOGY_KINDS


class LlmRunner:
    """One model endpoint plus the fixed system prompt; counts requests."""

    def __init__(self, cfg: EndpointConfig, config: PipelineConfig = PipelineConfig()):
        self.cfg = cfg
        self.config = config
        self.system_prompt = prompts.load_prompt("system").strip()
        self._count = 0

    @property
    def request_count(self) -> int:
        return self._count

    def ask(self, user_text: str) -> str:
        req = ChatRequest.build(
            self.config.model, self.system_prompt, user_text, self.config.max_tokens
        )
        self._count += 1
        return complete(self.cfg, req).content


# --- step 1: sentence splitting -------------------------------------------

_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\(?\d{1,3}[.)])\s*")
_SENTENCE_END_RE = re.compile(r"([.!?]+)(\s+|$)")
_NO_SPLIT_BEFORE = frozenset(
    {"mr", "mrs", "ms", "dr", "jr", "sr", "st", "vs", "etc", "approx", "no"}
)


def fallback_split_sentences(narrative: str) -> list:
    """Deterministic rule-based splitter used when the model output is unusable."""
    text = " ".join(narrative.split())
    if not text:
        return []
    parts = []
    start = 0
    for match in _SENTENCE_END_RE.finditer(text):
        end = match.end(1)
        tail = re.search(r"([A-Za-z]+)[.!?]+$", text[start:end])
        word = tail.group(1) if tail else ""
        if word.lower() in _NO_SPLIT_BEFORE or (len(word) == 1 and word.isupper() and word != "V"):
            continue
        rest = text[match.end() :]
        if rest and not (rest[0].isupper() or rest[0].isdigit() or rest[0] in "\"'("):
            continue
        piece = text[start:end].strip()
        if piece:
            parts.append(piece)
        start = match.end()
    rest = text[start:].strip()
    if rest:
        parts.append(rest)
    return parts


def _squash_ws(text: str) -> str:
    return " ".join(text.split())


def edit_distance_within(a: str, b: str, limit: int) -> Optional[int]:
    """Levenshtein distance if it is <= limit, else None (banded DP)."""
    n, m = len(a), len(b)
    if abs(n - m) > limit:
        return None
    if a == b:
        return 0
    big = limit + 1
    width = 2 * limit + 1
    # prev[k] = distance for column j = i - 1 + (k - limit) at row i - 1
    prev = [big] * width
    for k in range(limit, min(limit + m, width - 1) + 1):
        if k - limit <= m:
            prev[k] = k - limit  # row 0: distance = j
    for i in range(1, n + 1):
        cur = [big] * width
        lo = max(0, i - limit)
        hi = min(m, i + limit)
        for j in range(lo, hi + 1):
            k = j - i + limit
            if j == 0:
                cur[k] = i
                continue
            cost = 0 if a[i - 1] == b[j - 1] else 1
            best = big
            if 0 <= k < width and prev[k] != big:  # diagonal (i-1, j-1)
                best = prev[k] + cost
            if k + 1 < width and prev[k + 1] + 1 < best:  # deletion (i-1, j)
                best = prev[k + 1] + 1
            if k - 1 >= 0 and cur[k - 1] + 1 < best:  # insertion (i, j-1)
                best = cur[k - 1] + 1
            cur[k] = best
        if min(cur) > limit:
            return None
        prev = cur
    result = prev[m - n + limit]
    return result if result <= limit else None


def rejoin_matches(sentences: Sequence[str], narrative: str, tolerance: float) -> bool:
    """Whitespace-insensitive normalized edit distance strictly under tolerance."""
    joined = _squash_ws(" ".join(sentences))
    original = _squash_ws(narrative)
    if joined == original:
        return True
    length = max(1, len(original))
    limit = int(tolerance * length)
    if limit >= tolerance * length:
        limit -= 1
    if limit < 0:
        return False
    return edit_distance_within(joined, original, limit) is not None


def parse_sentence_list(content: str) -> list:
    """Model output to a list of sentences: JSON array or one per line."""
    array = extract_json_array(content)
    if array is not None:
        return [str(item).strip() for item in array if str(item).strip()]
    sentences = []
    for line in content.splitlines():
        line = _BULLET_RE.sub("", line).strip()
        if not line:
            continue
        if line.endswith(":") and not sentences:
            continue  # preamble like "Here are the sentences:"
        sentences.append(line.strip('"'))
    return sentences


def split_sentences(narrative: str, llm: LlmRunner) -> tuple:
    """Step 1. Returns (sentences, flags); falls back to the rule splitter
    when the model answer cannot reproduce the narrative."""
    if not narrative.strip():
        raise PipelineError("cannot split an empty narrative")
    tolerance = llm.config.rejoin_tolerance
    try:
        content = llm.ask(prompts.render(prompts.load_prompt("step1_split"), narrative=narrative))
    except LlmError:
        return fallback_split_sentences(narrative), ("split_fallback:llm_error",)
    sentences = parse_sentence_list(content)
    if sentences and rejoin_matches(sentences, narrative, tolerance):
        return sentences, ()
    return fallback_split_sentences(narrative), ("split_fallback:rejoin_mismatch",)


# --- step 2: online-activity detection ------------------------------------


def _parse_online_obj(obj: dict) -> OnlineFlags:
    technology = as_bool(obj.get("technology"))
    if not technology:
        return OnlineFlags()
    raw_phrases = obj.get("phrases", [])
    if isinstance(raw_phrases, str):
        raw_phrases = [p.strip() for p in raw_phrases.split(",")]
    phrases = tuple(str(p) for p in raw_phrases if str(p).strip())
    return OnlineFlags(
        technology=True,
        phrases=phrases,
        internet=as_bool(obj.get("internet")),
        participate=as_tristate(obj.get("participate")),
    )


def detect_online(sentence: str, llm: LlmRunner) -> tuple:
    """Step 2. Returns (OnlineFlags, flags); all-false after a failed re-ask."""
    prompt = prompts.render(prompts.load_prompt("step2_online"), sentence=sentence)
    for _attempt in range(2):
        try:
            obj = extract_json_object(llm.ask(prompt))
            return _parse_online_obj(obj), ()
        except LlmError:
            continue
    return OnlineFlags(), ("online_parse_failure",)


# --- step 3: related-sentence linking --------------------------------------


def _parse_yes_no(content: str) -> Optional[bool]:
    word = content.strip().split()[0].strip(".,:;!\"'").lower() if content.strip() else ""
    if word == "yes":
        return True
    if word == "no":
        return False
    return None


def link_related(
    sentences: Sequence[str],
    sentence_flags: Sequence[OnlineFlags],
    llm: LlmRunner,
    case_id: str = "case",
) -> tuple:
    """Step 3. Merge consecutive related sentences into units.

    Each consecutive pair is queried once; Yes answers chain transitively.
    Returns (units, flags).
    """
    if not sentences:
        raise PipelineError("link_related requires at least one sentence")
    if len(sentence_flags) != len(sentences):
        raise PipelineError("one OnlineFlags per sentence required")
    template = prompts.load_prompt("step3_related")
    linked = []
    diag: list = []
    for i in range(len(sentences) - 1):
        prompt = prompts.render(template, first=sentences[i], second=sentences[i + 1])
        answer: Optional[bool] = None
        try:
            answer = _parse_yes_no(llm.ask(prompt))
        except LlmError:
            answer = None
        if answer is None:
            diag.append(f"link_failure:{i}")
            answer = False
        linked.append(answer)

    units = []
    start = 0
    for i in range(len(sentences)):
        if i == len(sentences) - 1 or not linked[i]:
            indices = tuple(range(start, i + 1))
            units.append(
                SentenceUnit(
                    unit_id=f"{case_id}:u{len(units)}",
                    case_id=case_id,
                    sentence_indices=indices,
                    text=" ".join(sentences[j] for j in indices),
                    flags=merge_flags([sentence_flags[j] for j in indices]),
                )
            )
            start = i + 1
    return units, tuple(diag)


# --- step 4: forced-choice theme prompts -----------------------------------

_LETTER_RE = re.compile(r"[^A-Za-z0-9]*([A-Za-z])[^A-Za-z0-9]*")


def _parse_letter(content: str) -> Optional[str]:
    match = _LETTER_RE.fullmatch(content.strip())
    return match.group(1).upper() if match else None


def _classify_letter(
    unit: SentenceUnit,
    llm: LlmRunner,
    prompt_name: str,
    alphabet: tuple,
    letter_map: dict,
    tag: str,
) -> tuple:
    prompt = prompts.render(prompts.load_prompt(prompt_name), sentence=unit.text)
    letter: Optional[str] = None
    for _attempt in range(2):
        try:
            letter = _parse_letter(llm.ask(prompt))
        except LlmError:
            letter = None
        if letter is not None:
            break
    if letter is None:
        return None, (f"invalid_letter:{tag}",)
    if letter not in alphabet:
        return None, (f"letter_outside_alphabet:{tag}:{letter}",)
    return letter_map.get(letter), ()


def classify_harm(unit: SentenceUnit, llm: LlmRunner) -> tuple:
    """Step 4a: harm-to-self and harm-to-others themes."""
    return _classify_letter(unit, llm, "step4a_harm", HARM_ALPHABET, HARM_LETTER_MAP, "4a")


def classify_interpersonal(unit: SentenceUnit, llm: LlmRunner) -> tuple:
    """Step 4b: interpersonal themes."""
    return _classify_letter(
        unit, llm, "step4b_interpersonal", INTERPERSONAL_ALPHABET, INTERPERSONAL_LETTER_MAP, "4b"
    )


def classify_activity(unit: SentenceUnit, llm: LlmRunner) -> tuple:
    """Step 4c: activity-level and schooling themes."""
    return _classify_letter(
        unit, llm, "step4c_activity", ACTIVITY_ALPHABET, ACTIVITY_LETTER_MAP, "4c"
    )


def resolve_source_evidence(obj: dict) -> SourceOfInformation:
    """Map the source prompt's JSON answer to a source category."""
    sm = as_bool(obj.get("sm"))
    nok = as_bool(obj.get("nok"))
    source_known = as_bool(obj.get("source_known"))
    source = str(obj.get("source", "")).strip().strip(".)").upper()
    if source_known and source == "B":
        return SourceOfInformation.LE_SEARCHES
    if source_known and source == "A":
        return SourceOfInformation.NOK_EXPLICIT
    if not source_known and (sm or nok):
        return SourceOfInformation.NOK_IMPLICIT
    return SourceOfInformation.UNKNOWN


def classify_source(unit: SentenceUnit, llm: LlmRunner) -> tuple:
    """Step 4d: per-unit source-of-information evidence."""
    prompt = prompts.render(prompts.load_prompt("step4d_source"), sentence=unit.text)
    for _attempt in range(2):
        try:
            obj = extract_json_object(llm.ask(prompt))
            return resolve_source_evidence(obj), ()
        except LlmError:
            continue
    return SourceOfInformation.UNKNOWN, ("source_parse_failure",)


# --- aggregation ------------------------------------------------------------


def classify_phrase_kind(phrase: str, table: tuple = DEFAULT_TECHNOLOGY_KINDS) -> str:
    from .keyphrase import KeyphrasePattern

    words = words_of(phrase)
    for kind, patterns in table:
        for raw in patterns:
            pattern = KeyphrasePattern(raw)
            if any(pattern.matches_at(words, start) for start in range(len(words))):
                return kind
    return "other"


def aggregate_case(
    case_id: str,
    unit_results: Sequence[UnitResult],
    flags: Sequence[str] = (),
    kinds_table: tuple = DEFAULT_TECHNOLOGY_KINDS,
) -> CaseResult:
    """Union unit themes, resolve the source by priority, derive tech kinds."""
    themes: list = []
    for ur in unit_results:
        for t in ur.themes:
            if t not in themes:
                themes.append(t)
    online_units = [ur for ur in unit_results if ur.unit.flags.online]
    online = bool(online_units)
    source = SourceOfInformation.UNKNOWN
    unit_sources = {ur.source for ur in online_units}
    for candidate in SOURCE_PRIORITY:
        if candidate in unit_sources:
            source = candidate
            break
    kinds: list = []
    for ur in online_units:
        for phrase in ur.unit.flags.phrases:
            kind = classify_phrase_kind(phrase, kinds_table)
            if kind not in kinds:
                kinds.append(kind)
    per_unit = tuple(
        (ur.unit.unit_id, ur.unit.sentence_indices, tuple(sorted(t.name for t in ur.themes)))
        for ur in unit_results
    )
    return CaseResult(
        case_id=case_id,
        online_mentioned=online,
        technology_kinds=tuple(sorted(kinds)),
        themes=tuple(sorted(themes, key=lambda t: t.name)),
        source=source,
        per_unit=per_unit,
        flags=tuple(flags),
    )


def process_case(case: CaseRecord, llm: LlmRunner) -> CaseResult:
    """Run steps 1-4 for one case."""
    narrative = case.narrative
    if not narrative.strip():
        return CaseResult(
            case_id=case.case_id,
            online_mentioned=False,
            technology_kinds=(),
            themes=(),
            source=SourceOfInformation.UNKNOWN,
            per_unit=(),
            flags=("empty_narrative",),
        )
    flags: list = []
    sentences, split_flags = split_sentences(narrative, llm)
    flags.extend(split_flags)
    if not sentences:
        sentences = [narrative.strip()]

    sentence_flags = []
    for sentence in sentences:
        online_flags, detect_flags = detect_online(sentence, llm)
        sentence_flags.append(online_flags)
        flags.extend(detect_flags)

    units, link_flags = link_related(sentences, sentence_flags, llm, case_id=case.case_id)
    flags.extend(link_flags)

    unit_results = []
    for unit in units:
        if not unit.flags.online:
            unit_results.append(
                UnitResult(unit=unit, themes=(), source=SourceOfInformation.UNKNOWN)
            )
            continue
        themes: list = []
        for classify in (classify_harm, classify_interpersonal, classify_activity):
            label, step_flags = classify(unit, llm)
            flags.extend(step_flags)
            if label is not None:
                themes.append(label)
        source, source_flags = classify_source(unit, llm)
        flags.extend(source_flags)
        unit_results.append(UnitResult(unit=unit, themes=tuple(themes), source=source))

    return aggregate_case(
        case.case_id, unit_results, flags=flags, kinds_table=llm.config.technology_kinds
    )


@dataclass
class PipelineRun:
    results: list
    manifest: dict


def run_pipeline(
    cases: Sequence[CaseRecord],
    endpoint: EndpointConfig,
    config: PipelineConfig = PipelineConfig(),
) -> PipelineRun:
    """Classify every case; per-case failures are isolated into flags."""
    runner = LlmRunner(endpoint, config)
    started_at = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())

    def one(case: CaseRecord) -> CaseResult:
        try:
            return process_case(case, runner)
        except Exception as exc:  # spec: isolate and report, keep running
            return CaseResult(
                case_id=case.case_id,
                online_mentioned=False,
                technology_kinds=(),
                themes=(),
                source=SourceOfInformation.UNKNOWN,
                per_unit=(),
                flags=(f"case_error:{type(exc).__name__}:{exc}",),
            )

    if endpoint.max_parallel > 1 and len(cases) > 1:
        with ThreadPoolExecutor(max_workers=endpoint.max_parallel) as pool:
            results = list(pool.map(one, cases))
    else:
        results = [one(case) for case in cases]

    online_count = sum(1 for r in results if r.online_mentioned)
    manifest = {
        "model": config.model,
        "endpoint": endpoint.base_url,
        "prompt_hashes": prompts.prompt_hashes(),
        "config": {
            "max_tokens": config.max_tokens,
            "rejoin_tolerance": config.rejoin_tolerance,
            "max_parallel": endpoint.max_parallel,
        },
        "started_at": started_at,
        "counts": {
            "cases": len(results),
            "online_cases": online_count,
            "flagged_cases": sum(1 for r in results if r.flags),
        },
        "case_flags": {r.case_id: sorted(r.flags) for r in results if r.flags},
    }
    return PipelineRun(results=results, manifest=manifest)


def save_results(results: Sequence[CaseResult], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result.to_obj(), sort_keys=True) + "\n")


def save_manifest(manifest: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_results(path) -> list:
    """Results JSONL back as plain dicts (themes as name lists)."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def content_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
