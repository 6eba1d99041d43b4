"""Parsers and serializers for the annotated task formats.

Covers the slash-tag POS format, structured NER output (tolerant of the
quoted-list schema, JSON objects, and Chinese key aliases), and the
line-delimited instruction record files, plus validation helpers shared by
the data pipeline and the benchmark loader.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .textnorm import PunctInventory, strip_punctuation

# The 17 admitted POS codes.
POS_TAGS = frozenset(
    {"nr", "v", "n", "r", "w", "c", "p", "d", "t", "y", "u", "m", "a", "f", "ns", "j", "q"}
)

TASKS = (
    "punctuation",
    "pos",
    "ner",
    "translation",
    "word_explanation",
    "reverse_dictionary",
    "other",
)
STAGES = ("seed", "expanded", "reverse_reasoned", "generated", "integrated")

ENTITY_CATEGORIES = ("characters", "place", "time", "official_positions")

# Canonical category -> accepted key spellings (matched case- and
# spacing-insensitively; models often answer with the Chinese keys).
DEFAULT_ENTITY_ALIASES: Mapping[str, tuple[str, ...]] = {
    "characters": ("characters", "人物"),
    "place": ("place", "places", "地点"),
    "time": ("time", "时间"),
    "official_positions": ("official positions", "official_positions", "官职"),
}


class FormatError(ValueError):
    """Base class for parse/serialize failures."""


class MissingSlash(FormatError):
    def __init__(self, token: str):
        super().__init__(f"token without slash: {token!r}")
        self.token = token


class EmptySegment(FormatError):
    def __init__(self, token: str):
        super().__init__(f"token with empty segment: {token!r}")
        self.token = token


class UnknownTag(FormatError):
    def __init__(self, token: str, tag: str):
        super().__init__(f"unknown tag {tag!r} in token {token!r}")
        self.token = token
        self.tag = tag


class InvalidSegment(FormatError):
    def __init__(self, segment: str):
        super().__init__(f"segment not serializable: {segment!r}")
        self.segment = segment


class NoStructureFound(FormatError):
    """Raised when no entity category key is present in a response."""


@dataclass(frozen=True)
class TaggedSequence:
    """Ordered (segment, tag) pairs in the slash-tag POS format.

    ``unknown_tags`` lists tags outside the closed set that a lenient parse
    kept; they score as automatic mismatches downstream.
    """

    items: tuple[tuple[str, str], ...]
    unknown_tags: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def text(self) -> str:
        """The sentence reconstructed by concatenating segments."""
        return "".join(seg for seg, _ in self.items)


EMPTY_TAGGED = TaggedSequence(())


def parse_slash_tags(line: str, strict: bool = True) -> TaggedSequence:
    """Parse a ``segment/tag`` line, splitting tokens at their last slash.

    Tokens are split on runs of whitespace. Strict mode rejects tags outside
    the 17-code set; lenient mode keeps them and records them in
    ``unknown_tags``.
    """
    items = []
    unknown = []
    for token in line.split():
        if "/" not in token:
            raise MissingSlash(token)
        segment, tag = token.rsplit("/", 1)
        if not segment:
            raise EmptySegment(token)
        if tag not in POS_TAGS:
            if strict:
                raise UnknownTag(token, tag)
            unknown.append(tag)
        items.append((segment, tag))
    return TaggedSequence(tuple(items), tuple(unknown))


def serialize_slash_tags(seq: TaggedSequence) -> str:
    """Render a TaggedSequence as a single-space-joined slash-tag line."""
    for segment, _ in seq.items:
        if not segment or "/" in segment or any(ch.isspace() for ch in segment):
            raise InvalidSegment(segment)
    return " ".join(f"{segment}/{tag}" for segment, tag in seq.items)


@dataclass(frozen=True)
class EntitySet:
    """The four-category NER result. Duplicates reflect repeated mentions."""

    characters: tuple[str, ...] = ()
    place: tuple[str, ...] = ()
    time: tuple[str, ...] = ()
    official_positions: tuple[str, ...] = ()

    def category(self, name: str) -> tuple[str, ...]:
        return getattr(self, name)

    def total(self) -> int:
        return sum(len(self.category(c)) for c in ENTITY_CATEGORIES)

    def to_dict(self) -> dict[str, list[str]]:
        return {c: list(self.category(c)) for c in ENTITY_CATEGORIES}


EMPTY_ENTITIES = EntitySet()


def _normalize_key(key: str) -> str:
    return re.sub(r"[\s_]+", "", key).lower()


def _alias_lookup(aliases: Mapping[str, tuple[str, ...]]) -> dict[str, str]:
    lookup = {}
    for canonical, names in aliases.items():
        lookup[_normalize_key(canonical)] = canonical
        for name in names:
            lookup[_normalize_key(name)] = canonical
    return lookup


_QUOTED_ITEM = re.compile(r"'([^']*)'|\"([^\"]*)\"")


def _parse_bracket_items(inner: str) -> list[str]:
    quoted = [a or b for a, b in _QUOTED_ITEM.findall(inner)]
    if quoted:
        return [item for item in quoted if item]
    return [part.strip() for part in re.split(r"[,，、]", inner) if part.strip()]


def _alias_pattern(alias: str) -> re.Pattern:
    # Spacing/underscore-insensitive key match followed by a bracketed list.
    key = r"[\s_]*".join(re.escape(ch) for ch in alias if ch not in (" ", "_"))
    return re.compile(r"['\"]?\s*" + key + r"\s*['\"]?\s*[:：]\s*\[([^\]]*)\]", re.IGNORECASE)


def _entities_from_mapping(
    obj: Mapping, lookup: Mapping[str, str]
) -> dict[str, list[str]] | None:
    found: dict[str, list[str]] = {}
    for key, value in obj.items():
        canonical = lookup.get(_normalize_key(str(key)))
        if canonical is None:
            continue
        if isinstance(value, str):
            value = [value] if value else []
        if isinstance(value, (list, tuple)):
            found[canonical] = [str(v) for v in value if str(v)]
    return found or None


def parse_entity_output(
    text: str,
    aliases: Mapping[str, tuple[str, ...]] = DEFAULT_ENTITY_ALIASES,
) -> EntitySet:
    """Extract an EntitySet from a model response.

    Accepts the quoted-list schema (``'characters': [...], ...``), a JSON
    object with the same keys, or either embedded in surrounding prose.
    Missing categories yield empty lists. Raises :class:`NoStructureFound`
    when no category key with a bracketed value is present.
    """
    lookup = _alias_lookup(aliases)
    candidates = [text.strip()]
    brace = re.search(r"\{.*\}", text, re.DOTALL)
    if brace:
        candidates.append(brace.group(0))
    for candidate in candidates:
        try:
            obj = json.loads(candidate)
        except (json.JSONDecodeError, ValueError):
            continue
        if isinstance(obj, Mapping):
            found = _entities_from_mapping(obj, lookup)
            if found:
                return EntitySet(**{c: tuple(found.get(c, ())) for c in ENTITY_CATEGORIES})
    found = {}
    for canonical, names in aliases.items():
        for alias in (canonical, *names):
            match = _alias_pattern(alias).search(text)
            if match:
                found[canonical] = _parse_bracket_items(match.group(1))
                break
    if not found:
        raise NoStructureFound("no entity category key detected")
    return EntitySet(**{c: tuple(found.get(c, ())) for c in ENTITY_CATEGORIES})


@dataclass(frozen=True)
class InstructionRecord:
    """One (instruction, input, output) fine-tuning triple with provenance."""

    instruction: str
    input: str
    output: str
    task: str
    source: str = ""
    stage: str = "seed"

    def __post_init__(self) -> None:
        if not self.instruction:
            raise ValueError("instruction must be non-empty")
        if self.task not in TASKS:
            raise ValueError(f"unknown task: {self.task!r}")
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage: {self.stage!r}")
        if self.stage == "integrated" and not self.output:
            raise ValueError("integrated records must have a non-empty output")

    def to_dict(self) -> dict[str, str]:
        return {
            "instruction": self.instruction,
            "input": self.input,
            "output": self.output,
            "task": self.task,
            "source": self.source,
            "stage": self.stage,
        }


@dataclass(frozen=True)
class MalformedLine:
    line_no: int
    reason: str


_RECORD_KEYS = ("instruction", "input", "output", "task", "source", "stage")


def record_from_dict(obj: Mapping) -> InstructionRecord:
    missing = [k for k in _RECORD_KEYS if k not in obj]
    if missing:
        raise ValueError(f"missing keys: {', '.join(missing)}")
    return InstructionRecord(**{k: obj[k] for k in _RECORD_KEYS})


def read_records(path: str | Path) -> tuple[list[InstructionRecord], list[MalformedLine]]:
    """Read line-delimited instruction records; never raises on content.

    Every physical line becomes either a record or a MalformedLine report,
    so the two counts always sum to the line count.
    """
    data = Path(path).read_bytes()
    if data.endswith(b"\n"):
        data = data[:-1]
    if not data:
        return [], []
    records: list[InstructionRecord] = []
    errors: list[MalformedLine] = []
    for line_no, raw in enumerate(data.split(b"\n"), start=1):
        try:
            line = raw.decode("utf-8")
        except UnicodeDecodeError:
            errors.append(MalformedLine(line_no, "not valid UTF-8"))
            continue
        if not line.strip():
            errors.append(MalformedLine(line_no, "empty line"))
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(MalformedLine(line_no, f"invalid JSON: {exc.msg}"))
            continue
        if not isinstance(obj, dict):
            errors.append(MalformedLine(line_no, "not a JSON object"))
            continue
        try:
            records.append(record_from_dict(obj))
        except (ValueError, TypeError) as exc:
            errors.append(MalformedLine(line_no, str(exc)))
    return records, errors


def write_records(records: Iterable[InstructionRecord], path: str | Path) -> None:
    """Write records as line-delimited JSON (UTF-8, stable key order)."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False))
            fh.write("\n")


def validate_task_output(
    task: str, output: str, inventory: PunctInventory | None = None
) -> str | None:
    """Check that ``output`` parses under its task's format.

    Returns None when valid, else a short reason. Structured tasks must
    parse strictly; the punctuation task requires at least one inventory
    mark; generation tasks only require non-empty output.
    """
    if not output or not output.strip():
        return "empty output"
    if task == "pos":
        try:
            seq = parse_slash_tags(output, strict=True)
        except FormatError as exc:
            return str(exc)
        if not seq.items:
            return "no tagged segments"
    elif task == "ner":
        try:
            parse_entity_output(output)
        except NoStructureFound:
            return "no entity structure"
    elif task == "punctuation":
        if not strip_punctuation(output, inventory).marks:
            return "no punctuation marks"
    return None
