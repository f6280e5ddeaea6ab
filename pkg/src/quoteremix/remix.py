"""Four-step quote remixing: prompt, transcript parsing, validation, retries.

The generator model is asked to walk through quote matching, structure
breakdown, vocabulary replacement and remix generation in one completion.
Everything downstream of the completion is deterministic: the transcript is
parsed strictly, the final slogan is diffed against the starred quote and
checked against the hard constraints, and only then accepted.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from . import prompts
from .config import STRICT, Config, RemixConfig
from .edits import EditSpan, word_edit_count
from .gateway import ChatRequest, Gateway, GatewayError
from .model import (
    REMIX,
    Brand,
    Persona,
    Quote,
    QuoteSegmentation,
    RemixTrace,
    Replacement,
    Segment,
    SloganCandidate,
    SloganSet,
    ends_with_terminal_punctuation,
    normalize_words,
    validate_segmentation,
)

logger = logging.getLogger(__name__)

SENTINEL = "END_OF_REMIX"
STEP_TITLES = {
    1: "Step 1 Quote Matching",
    2: "Step 2 Structure Breakdown",
    3: "Step 3 Vocabulary Replacement",
    4: "Step 4 Remix Slogan",
}
STAR_CHARS = "*★☆⭐"
FIRST_PERSON_CLAUSE = "Do not use first-person words (I, we, me, my, our)."

PASS, WARN, FAIL = "pass", "warn", "fail"


class TranscriptError(ValueError):
    """Base for transcript parse failures; keeps the raw text for audit."""
    code = "transcript_error"

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class MissingSentinel(TranscriptError):
    code = "missing_sentinel"


class MissingStep(TranscriptError):
    code = "missing_step"

    def __init__(self, step: int, raw: str):
        super().__init__(f"transcript has no Step {step} section", raw)
        self.step = step


class TooFewQuotes(TranscriptError):
    code = "too_few_quotes"


class NoStarredQuote(TranscriptError):
    code = "no_starred_quote"


class UnparseableSegmentation(TranscriptError):
    code = "unparseable_segmentation"


class EmptyFinalSlogan(TranscriptError):
    code = "empty_final_slogan"


class MissingGuideline(ValueError):
    pass


class PipelineExhausted(RuntimeError):
    def __init__(self, attempts: int, discards: Sequence["Discard"]):
        reasons = ", ".join(d.reason for d in discards) or "none recorded"
        super().__init__(f"no acceptable slogan after {attempts} attempts ({reasons})")
        self.attempts = attempts
        self.discards = list(discards)


class CellShortfall(RuntimeError):
    def __init__(self, partial: SloganSet, wanted: int, attempts: int):
        super().__init__(f"only {len(partial)} of {wanted} slogans after {attempts} attempts")
        self.partial = partial
        self.wanted = wanted
        self.attempts = attempts


# --- prompt -----------------------------------------------------------------

@dataclass(frozen=True)
class RemixPrompt:
    rendered: str
    brand: Brand
    persona: Persona
    template_version: str = prompts.REMIX

    def with_nonce(self, nonce: int) -> str:
        if nonce <= 0:
            return self.rendered
        return f"{self.rendered}\nAttempt: {nonce}\n"


def build_remix_prompt(brand: Brand, persona: Optional[Persona]) -> RemixPrompt:
    if persona is None or not getattr(persona, "guideline", "").strip():
        raise MissingGuideline("persona guideline missing from configuration")
    text = prompts.render(prompts.REMIX, {
        "Brand": brand.name,
        "Persona": persona.label,
        "persona_guidelines[Persona]": persona.guideline,
    })
    return RemixPrompt(text, brand, persona)


# --- transcript -------------------------------------------------------------

@dataclass(frozen=True)
class StepTranscript:
    step1_quotes: tuple[Quote, ...]
    starred: Quote
    step2_segmentation: QuoteSegmentation
    step3_replacements: tuple[Replacement, ...]
    step4_slogan: str
    sentinel_seen: bool = True
    raw: str = field(default="", compare=False, repr=False)


_HEADER = re.compile(r"^[\s#>*_`-]*step\s*([1-4])\b[^:\n]*:?", re.IGNORECASE)
_QUOTED = re.compile(r'"([^"\n]+)"|“([^”\n]+)”')
_AUTHOR_LEAD = re.compile(r"^\s*(?:[—–-]+|by\b|\()\s*", re.IGNORECASE)
_AUTHOR_END = re.compile(r"\s*(?:[();|:,]|\s[—–-]\s|(?<=[a-z]{2})\.(?:\s|$))")
_TAG = re.compile(r"\s*[(\[]\s*(editable|fixed)\s*[)\]]\s*", re.IGNORECASE)
_BRACKETED = re.compile(r"^\[(.+)\]$")
_ANNOTATION = re.compile(r"^[\W_]*(editable|fixed)\b[^:]*:\s*(.+)$", re.IGNORECASE)
_ARROW = r"(?:→|->|=>|⟶)"
_PAIR = re.compile(
    r'(?:"(?P<lq>[^"]+)"|“(?P<lc>[^”]+)”|(?P<lu>[\w’\'& ]+?))\s*' + _ARROW +
    r'\s*(?:"(?P<rq>[^"]+)"|“(?P<rc>[^”]+)”|(?P<ru>[\w’\'& ]+))'
)
_SET_NO = re.compile(r"^\W*(?:set\s*(\d+)|(\d+)[.)])", re.IGNORECASE)


def _quoted(text: str) -> Optional[re.Match]:
    return _QUOTED.search(text)


def _qtext(m: re.Match) -> str:
    return (m.group(1) or m.group(2) or "").strip()


def _split_steps(raw: str) -> tuple[dict[int, list[str]], bool]:
    blocks: dict[int, list[str]] = {}
    current = None
    sentinel = False
    for line in raw.splitlines():
        line = line.replace("**", "")
        if line.strip().strip("`*_ ") == SENTINEL:
            sentinel = True
            break
        m = _HEADER.match(line)
        if m and int(m.group(1)) not in blocks:
            current = int(m.group(1))
            blocks[current] = [line[m.end():]]
        elif current is not None:
            blocks[current].append(line)
    return blocks, sentinel


def _norm_key(text: str) -> str:
    return " ".join(normalize_words(text))


def _parse_quotes(lines: list[str], raw: str, min_quotes: int) -> tuple[list[Quote], Quote]:
    quotes: list[Quote] = []
    index: dict[str, Quote] = {}
    starred_key = None
    for line in lines:
        m = _quoted(line)
        if not m:
            continue
        text = _qtext(m)
        outside = line[: m.start()] + line[m.end():]
        is_star = any(c in outside for c in STAR_CHARS)
        rest = line[m.end():]
        author, rationale = "", ""
        lead = _AUTHOR_LEAD.match(rest)
        if lead:
            tail = rest[lead.end():]
            end = _AUTHOR_END.search(tail)
            author = (tail[: end.start()] if end else tail).strip()
            rationale = tail[end.end():] if end else ""
            rationale = rationale.lstrip(" ;:,.—–-(").rstrip()
            if rationale.endswith(")") and "(" not in rationale:
                rationale = rationale[:-1].rstrip()
        key = _norm_key(text)
        if is_star and starred_key is None:
            starred_key = key
        if key in index or not author:
            continue
        try:
            quote = Quote(text, author, rationale)
        except ValueError:
            continue
        index[key] = quote
        quotes.append(quote)
    if len(quotes) < min_quotes:
        raise TooFewQuotes(f"found {len(quotes)} quotes with authors, need {min_quotes}", raw)
    if starred_key is None:
        raise NoStarredQuote("no quote is marked with a star", raw)
    if starred_key not in index:
        raise NoStarredQuote("the starred quote is not among the proposed quotes", raw)
    return quotes, index[starred_key]


def _segment_words_match(seg_words: list[str], phrase: str) -> bool:
    hay = " " + _norm_key(phrase) + " "
    return (" " + " ".join(seg_words) + " ") in hay


def _parse_segmentation(lines: list[str], starred: Quote, raw: str) -> QuoteSegmentation:
    seg_line = next((ln for ln in lines if "|" in ln), None)
    if seg_line is None:
        raise UnparseableSegmentation("Step 2 has no '|'-delimited line", raw)
    body = seg_line.strip().strip("`")
    body = re.sub(r"^[\W_]*(?:segments?|breakdown|structure)\s*:", "", body, flags=re.IGNORECASE)
    parts = []
    for chunk in body.split("|"):
        tag = _TAG.search(chunk)
        editable = None
        if tag:
            editable = tag.group(1).lower() == "editable"
            chunk = _TAG.sub(" ", chunk)
        chunk = chunk.strip().strip('"“”')
        bracket = _BRACKETED.match(chunk.strip())
        if bracket:
            chunk = bracket.group(1)
            if editable is None:
                editable = True
        parts.append([chunk.strip(), editable])

    notes = {"editable": [], "fixed": []}
    for ln in lines:
        if ln is seg_line:
            continue
        m = _ANNOTATION.match(ln.replace("**", ""))
        if m:
            notes[m.group(1).lower()].append(m.group(2))
    words = [normalize_words(text) for text, _ in parts]
    for part, seg_words in zip(parts, words):
        if part[1] is not None:
            continue
        if any(_segment_words_match(seg_words, n) for n in notes["editable"]):
            part[1] = True
        elif any(_segment_words_match(seg_words, n) for n in notes["fixed"]):
            part[1] = False
        elif notes["editable"]:
            part[1] = False
        elif notes["fixed"]:
            part[1] = True
        else:
            raise UnparseableSegmentation(f"cannot tell whether {part[0]!r} is editable", raw)

    if any(not w for w in words):
        raise UnparseableSegmentation("empty segment in Step 2", raw)
    if [w for ws in words for w in ws] != normalize_words(starred.text):
        raise UnparseableSegmentation("Step 2 segments do not spell out the starred quote", raw)

    # re-slice the quote itself so segments keep its original punctuation
    need = [len(w) for w in words]
    pieces: list[list[str]] = [[] for _ in parts]
    k = 0
    for token in starred.text.split():
        if normalize_words(token):
            while need[k] == 0:
                k += 1
            need[k] -= 1
        pieces[k].append(token)
    segs = tuple(Segment(" ".join(p), bool(part[1])) for p, part in zip(pieces, parts))
    seg = QuoteSegmentation(segs, starred)
    problems = validate_segmentation(seg)
    if problems:
        raise UnparseableSegmentation(f"invalid segmentation: {', '.join(problems)}", raw)
    return seg


def _target_segment(seg: QuoteSegmentation, original: str) -> Optional[int]:
    target = normalize_words(original)
    if not target:
        return None
    for i, s in enumerate(seg.segments):
        words = normalize_words(s.text)
        k = len(target)
        if s.editable and any(words[j : j + k] == target for j in range(len(words) - k + 1)):
            return i
    return None


def _parse_replacements(lines: list[str], seg: QuoteSegmentation) -> list[Replacement]:
    out = []
    counter = 0
    for line in lines:
        matches = list(_PAIR.finditer(line))
        if not matches:
            continue
        counter += 1
        num = _SET_NO.match(line)
        set_index = int(num.group(1) or num.group(2)) if num else counter
        for k, m in enumerate(matches):
            left = (m.group("lq") or m.group("lc") or m.group("lu") or "").strip()
            right = (m.group("rq") or m.group("rc") or m.group("ru") or "").strip()
            if not left or not right:
                continue
            stop = matches[k + 1].start() if k + 1 < len(matches) else len(line)
            reason = line[m.end():stop].strip().strip(" ;,:—–-").strip()
            if reason.startswith("(") and reason.endswith(")"):
                reason = reason[1:-1].strip()
            out.append(Replacement(_target_segment(seg, left), left, right, reason, set_index))
    return out


def _parse_slogan(lines: list[str], raw: str) -> str:
    for line in lines:
        m = _quoted(line)
        if m and _qtext(m):
            return _qtext(m)
    raise EmptyFinalSlogan("Step 4 contains no quoted slogan", raw)


def parse_transcript(raw: str, min_quotes: int = 3) -> StepTranscript:
    """Parse a full remix completion.

    Raises a specific :class:`TranscriptError` subclass for each way the
    completion can be malformed.
    """
    blocks, sentinel = _split_steps(raw)
    if not sentinel:
        raise MissingSentinel(f"transcript lacks the {SENTINEL} line", raw)
    for step in (1, 2, 3, 4):
        if step not in blocks:
            raise MissingStep(step, raw)
    quotes, starred = _parse_quotes(blocks[1], raw, min_quotes)
    seg = _parse_segmentation(blocks[2], starred, raw)
    replacements = _parse_replacements(blocks[3], seg)
    slogan = _parse_slogan(blocks[4], raw)
    return StepTranscript(tuple(quotes), starred, seg, tuple(replacements), slogan, True, raw)


def render_transcript(t: StepTranscript) -> str:
    """Serialize a transcript in the canonical format :func:`parse_transcript` reads."""
    lines = [f"{STEP_TITLES[1]}:"]
    for i, q in enumerate(t.step1_quotes, 1):
        star = " ★" if q == t.starred else ""
        lines.append(f'{i}.{star} "{q.text}" — {q.author}' + (f"; {q.rationale}" if q.rationale else ""))
    lines.append(f'★ "{t.starred.text}" — {t.starred.author}'
                 + (f"; {t.starred.rationale}" if t.starred.rationale else ""))
    lines.append(f"{STEP_TITLES[2]}:")
    lines.append(" | ".join(f"{s.text} ({'editable' if s.editable else 'fixed'})"
                            for s in t.step2_segmentation.segments))
    lines.append(f"{STEP_TITLES[3]}:")
    by_set: dict[int, list[Replacement]] = {}
    for r in t.step3_replacements:
        by_set.setdefault(r.set_index, []).append(r)
    for set_index, reps in by_set.items():
        pairs = "; ".join(f'"{r.original}" → "{r.replacement}"' + (f" ({r.reason})" if r.reason else "")
                          for r in reps)
        lines.append(f"- Set {set_index}: {pairs}")
    lines.append(f'{STEP_TITLES[4]}: "{t.step4_slogan}"')
    lines.append(SENTINEL)
    return "\n".join(lines) + "\n"


# --- validation -------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintReport:
    edit_count: int
    edit_spans: tuple[EditSpan, ...]
    brand_present: bool
    first_person_found: tuple[str, ...]
    ends_with_punctuation: bool
    word_count: int
    rules: dict

    @property
    def overall(self) -> str:
        verdicts = set(self.rules.values())
        if FAIL in verdicts:
            return FAIL
        return WARN if WARN in verdicts else PASS

    def failed_rules(self) -> list[str]:
        return [r for r, v in self.rules.items() if v == FAIL]

    def format_table(self) -> str:
        details = {
            "max_edits": f"edit_count={self.edit_count}",
            "brand": f"brand_present={self.brand_present}",
            "first_person": f"found={list(self.first_person_found)}",
            "punctuation": f"ends_with_punctuation={self.ends_with_punctuation}",
            "max_words": f"word_count={self.word_count}",
            "replacement_length": "span widths " + ", ".join(
                f"{len(s.original)}->{len(s.replacement)}" for s in self.edit_spans),
        }
        rows = [f"{rule:<20} {verdict:<5} {details.get(rule, '')}" for rule, verdict in self.rules.items()]
        rows.append(f"{'overall':<20} {self.overall}")
        return "\n".join(rows)


def _is_banned(word: str, banned: set[str]) -> bool:
    return word in banned or re.split(r"['’]", word)[0] in banned


def check_slogan(source: str, slogan: str, brand: Brand, cfg: RemixConfig) -> ConstraintReport:
    edits = word_edit_count(source, slogan, unit=cfg.edit_unit)
    words = normalize_words(slogan)
    banned = {w.lower() for w in cfg.banned_words}
    first_person = tuple(w for j, w in enumerate(words)
                         if j not in edits.matched_remix_positions and _is_banned(w, banned))
    brand_present = brand.mentioned_in(slogan)
    punct = ends_with_terminal_punctuation(slogan)
    slack_ok = all(abs(len(s.original) - len(s.replacement)) <= cfg.replacement_length_slack
                   for s in edits.spans)
    outcomes = {
        "max_edits": edits.count <= cfg.max_edits,
        "brand": brand_present,
        "first_person": not first_person,
        "punctuation": punct,
        "max_words": len(words) <= cfg.max_words,
        "replacement_length": slack_ok,
    }
    rules = {rule: PASS if ok else (FAIL if cfg.mode(rule) == STRICT else WARN)
             for rule, ok in outcomes.items()}
    return ConstraintReport(edits.count, edits.spans, brand_present, first_person,
                            punct, len(words), rules)


def validate_candidate(transcript: StepTranscript, brand: Brand,
                       config: Optional[RemixConfig] = None) -> ConstraintReport:
    """Check the final slogan against the starred quote it was remixed from.

    First-person words count only where they were introduced by an edit;
    words carried over unchanged from the quote are the quote's own voice.
    """
    cfg = config or RemixConfig()
    return check_slogan(transcript.starred.text, transcript.step4_slogan, brand, cfg)


# --- running ----------------------------------------------------------------

@dataclass(frozen=True)
class Discard:
    brand: str
    persona: str
    nonce: int
    stage: str
    reason: str
    detail: str = ""
    slogan: str = ""


_VERDICT_LINE = re.compile(r"^\s*verdict\s*:\s*(pass|fail)\b", re.IGNORECASE | re.MULTILINE)
_SLOGAN_LINE = re.compile(r"^\s*slogan\s*:\s*(.+)$", re.IGNORECASE | re.MULTILINE)


def parse_refinement(text: str) -> tuple[bool, Optional[str]]:
    """Return (passed, polished slogan or None). Raises ValueError if no verdict."""
    v = _VERDICT_LINE.search(text)
    if not v:
        raise ValueError("refinement output has no Verdict line")
    slogan = None
    s = _SLOGAN_LINE.search(text)
    if s:
        m = _quoted(s.group(1))
        slogan = _qtext(m) if m else s.group(1).strip()
    return v.group(1).lower() == "pass", slogan or None


def _annotate(exc: Exception, stage: str) -> Exception:
    exc.stage = stage
    return exc


def remix_request(prompt: RemixPrompt, nonce: int, config: Config,
                  model: Optional[str] = None) -> ChatRequest:
    return ChatRequest(user_text=prompt.with_nonce(nonce),
                       temperature=config.temperature.generation,
                       max_output_tokens=config.remix.max_output_tokens,
                       model_id=model or config.models.generator)


def run_remix(brand: Brand, persona: Persona, gateway: Gateway, config: Optional[Config] = None,
              *, nonce: int = 0, retry_cap: Optional[int] = None, model: Optional[str] = None,
              on_discard: Optional[Callable[[Discard], None]] = None) -> SloganCandidate:
    """Produce one validated remix slogan, retrying with fresh nonces.

    Attempt ``k`` (0-based) uses nonce ``nonce + k``. Raises
    :class:`PipelineExhausted` when every attempt is discarded.
    """
    config = config or Config()
    rc = config.remix
    cap = rc.retry_cap if retry_cap is None else retry_cap
    prompt = build_remix_prompt(brand, persona)
    discards: list[Discard] = []

    def discard(n, stage, reason, detail="", slogan=""):
        d = Discard(brand.name, persona.label, n, stage, reason, detail, slogan)
        discards.append(d)
        logger.info("discarded %s/%s nonce %d: %s", brand.name, persona.label, n, reason)
        if on_discard:
            on_discard(d)

    for attempt in range(cap):
        n = nonce + attempt
        req = remix_request(prompt, n, config, model)
        try:
            raw = gateway.complete(req).text
        except GatewayError as exc:
            raise _annotate(exc, "remix") from None
        try:
            transcript = parse_transcript(raw, min_quotes=rc.min_quotes)
        except TranscriptError as exc:
            discard(n, "parse", exc.code, str(exc))
            continue
        report = validate_candidate(transcript, brand, rc)
        if report.overall == FAIL:
            discard(n, "validate", "constraint_failure", report.format_table(),
                    transcript.step4_slogan)
            continue

        slogan = transcript.step4_slogan
        refined = False
        if rc.refine:
            refine_req = ChatRequest(
                user_text=prompts.render(prompts.REFINE, {
                    "Brand": brand.name, "Persona": persona.label,
                    "Quote": transcript.starred.text, "Slogan": slogan,
                    "Rubric": rc.safety_rubric,
                }),
                temperature=config.temperature.judging,
                max_output_tokens=256,
                model_id=model or config.models.generator,
            )
            try:
                refine_text = gateway.complete(refine_req).text
            except GatewayError as exc:
                raise _annotate(exc, "refine") from None
            try:
                ok, polished = parse_refinement(refine_text)
            except ValueError as exc:
                discard(n, "refine", "refinement_unparseable", str(exc), slogan)
                continue
            if not ok:
                discard(n, "refine", "refinement_rejected", refine_text.strip(), slogan)
                continue
            if polished and polished != slogan:
                again = check_slogan(transcript.starred.text, polished, brand, rc)
                if again.overall != FAIL:
                    slogan, refined = polished, True
                else:
                    logger.info("refined slogan %r failed re-validation; keeping %r", polished, slogan)

        try:
            trace = RemixTrace(
                matched_quotes=transcript.step1_quotes,
                starred_quote=transcript.starred,
                segmentation=transcript.step2_segmentation,
                replacements=[r for r in transcript.step3_replacements if r.segment_index is not None],
                final_slogan=slogan,
                raw_transcript=raw,
                nonce=n,
                refined=refined,
                pre_refinement=transcript.step4_slogan,
            )
            return SloganCandidate(slogan, brand, persona, REMIX, trace)
        except ValueError as exc:
            discard(n, "validate", "invalid_candidate", str(exc), slogan)
    raise PipelineExhausted(cap, discards)


def generate_cell(brand: Brand, persona: Persona, n: int, gateway: Gateway,
                  config: Optional[Config] = None, *, nonce_base: Optional[int] = None,
                  model: Optional[str] = None,
                  on_discard: Optional[Callable[[Discard], None]] = None) -> SloganSet:
    """Collect ``n`` distinct remix slogans for one brand-persona cell.

    The attempt budget is ``n * remix.attempts_per_slogan`` completions.
    Raises :class:`CellShortfall` (carrying the partial set) if the budget
    runs out first.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    config = config or Config()
    rc = config.remix
    budget = n * rc.attempts_per_slogan
    next_nonce = config.seed_nonce_base if nonce_base is None else nonce_base
    used = 0
    accepted: list[SloganCandidate] = []
    seen: set[tuple[str, ...]] = set()
    while len(accepted) < n and used < budget:
        cap = min(rc.retry_cap, budget - used)
        try:
            cand = run_remix(brand, persona, gateway, config, nonce=next_nonce, retry_cap=cap,
                             model=model, on_discard=on_discard)
        except PipelineExhausted as exc:
            used += exc.attempts
            next_nonce += exc.attempts
            continue
        consumed = cand.trace.nonce - next_nonce + 1
        used += consumed
        next_nonce += consumed
        key = tuple(normalize_words(cand.text))
        if key in seen:
            if on_discard:
                on_discard(Discard(brand.name, persona.label, cand.trace.nonce, "dedup",
                                   "duplicate", slogan=cand.text))
            continue
        seen.add(key)
        accepted.append(cand)
    result = SloganSet(brand, persona, tuple(accepted))
    if len(accepted) < n:
        raise CellShortfall(result, n, used)
    return result
