"""Canonicalization and punctuation primitives for Classical Chinese text.

Everything downstream (task parsers, scoring, the corpus pipeline) assumes
text has gone through :func:`normalize_text`, and uses the punctuation
inventory defined here to strip, classify, and re-insert marks.

All functions are pure; inventories and script maps are immutable once
built, so concurrent use is safe.
"""
from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

SCRIPT_PRESERVE = "preserve"
SCRIPT_TO_SIMPLIFIED = "to-simplified"
SCRIPT_TO_TRADITIONAL = "to-traditional"
_SCRIPT_MODES = (SCRIPT_PRESERVE, SCRIPT_TO_SIMPLIFIED, SCRIPT_TO_TRADITIONAL)

UNICODE_COMPOSED = "composed-canonical"


@dataclass(frozen=True)
class NormPolicy:
    """Normalization policy. Applying it twice equals applying it once."""

    unicode_form: str = UNICODE_COMPOSED
    width_folding: bool = True
    script_mapping: str = SCRIPT_PRESERVE
    strip_controls: bool = True

    def __post_init__(self) -> None:
        if self.unicode_form != UNICODE_COMPOSED:
            raise ValueError(f"unsupported unicode_form: {self.unicode_form!r}")
        if self.script_mapping not in _SCRIPT_MODES:
            raise ValueError(f"unsupported script_mapping: {self.script_mapping!r}")


DEFAULT_POLICY = NormPolicy()


def is_cjk(ch: str) -> bool:
    """True for CJK ideographs (incl. extensions and 〇)."""
    cp = ord(ch)
    return (
        0x4E00 <= cp <= 0x9FFF
        or 0x3400 <= cp <= 0x4DBF
        or 0xF900 <= cp <= 0xFAFF
        or 0x20000 <= cp <= 0x3134F
        or cp == 0x3007
    )


def _build_width_fold() -> dict[str, str]:
    # ASCII punctuation -> fullwidth forms; halfwidth CJK forms -> regular forms.
    fold: dict[str, str] = {}
    for cp in range(0x21, 0x7F):
        ch = chr(cp)
        if not ch.isalnum():
            fold[ch] = chr(cp + 0xFEE0)
    fold.update({"｡": "。", "｢": "「", "｣": "」", "､": "、", "･": "・"})
    return fold


_WIDTH_FOLD = _build_width_fold()

# Stripped when strip_controls is on: C0/C1 controls except tab/newline,
# plus invisible format characters. CR is handled by newline folding first.
_KEEP_CONTROLS = {"\t", "\n"}


def _is_stripped_control(ch: str) -> bool:
    if ch in _KEEP_CONTROLS:
        return False
    return unicodedata.category(ch) in ("Cc", "Cf")


class ScriptMap:
    """Single-character script conversion table (traditional -> simplified).

    The reverse direction uses the inverted table; targets reachable from
    more than one source are ambiguous and left unchanged (counted in the
    normalization tally as ``unmappable``).
    """

    def __init__(self, pairs: Iterable[tuple[str, str]]):
        forward: dict[str, str] = {}
        target_sources: dict[str, list[str]] = {}
        for src, dst in pairs:
            if len(src) != 1 or len(dst) != 1:
                raise ValueError(f"script map entries must be single characters: {src!r} -> {dst!r}")
            if src in forward:
                raise ValueError(f"duplicate script map source: {src!r}")
            forward[src] = dst
            target_sources.setdefault(dst, []).append(src)
        self.forward: Mapping[str, str] = forward
        self.inverse: Mapping[str, str] = {
            dst: srcs[0] for dst, srcs in target_sources.items() if len(srcs) == 1
        }
        self.ambiguous_targets = frozenset(
            dst for dst, srcs in target_sources.items() if len(srcs) > 1
        )

    @classmethod
    def load(cls, path: str | Path) -> "ScriptMap":
        """Load a tab-separated ``source<TAB>target`` table (UTF-8)."""
        pairs = []
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ValueError(f"bad script map line: {raw!r}")
            pairs.append((fields[0], fields[1]))
        return cls(pairs)


def _default_script_map() -> ScriptMap:
    ref = resources.files("wenyankit.data") / "script_map.tsv"
    with resources.as_file(ref) as path:
        return ScriptMap.load(path)


_DEFAULT_SCRIPT_MAP: ScriptMap | None = None


def default_script_map() -> ScriptMap:
    global _DEFAULT_SCRIPT_MAP
    if _DEFAULT_SCRIPT_MAP is None:
        _DEFAULT_SCRIPT_MAP = _default_script_map()
    return _DEFAULT_SCRIPT_MAP


def normalize_text(
    raw: str,
    policy: NormPolicy = DEFAULT_POLICY,
    *,
    script_map: ScriptMap | None = None,
    tally: Counter | None = None,
) -> str:
    """Canonicalize ``raw`` under ``policy``. Total: never raises on content.

    Steps, in order: NFC composition; newline folding (CRLF/CR -> LF) and
    control stripping when ``strip_controls``; half-width punctuation
    folding when ``width_folding``; script conversion per ``script_mapping``.
    Characters the script table cannot convert unambiguously pass through
    unchanged and are counted under ``tally["unmappable"]``.
    """
    text = unicodedata.normalize("NFC", raw)
    if policy.strip_controls:
        text = text.replace("\r\n", "\n").replace("\r", "\n")
        kept = []
        stripped = 0
        for ch in text:
            if _is_stripped_control(ch):
                stripped += 1
            else:
                kept.append(ch)
        if stripped:
            text = "".join(kept)
            if tally is not None:
                tally["controls_stripped"] += stripped
    if policy.width_folding:
        folded = []
        n_folded = 0
        for ch in text:
            repl = _WIDTH_FOLD.get(ch)
            if repl is not None:
                folded.append(repl)
                n_folded += 1
            else:
                folded.append(ch)
        if n_folded:
            text = "".join(folded)
            if tally is not None:
                tally["width_folded"] += n_folded
    if policy.script_mapping != SCRIPT_PRESERVE:
        smap = script_map or default_script_map()
        table = smap.forward if policy.script_mapping == SCRIPT_TO_SIMPLIFIED else smap.inverse
        out = []
        mapped = 0
        unmappable = 0
        for ch in text:
            repl = table.get(ch)
            if repl is not None:
                out.append(repl)
                mapped += 1
            else:
                if (
                    policy.script_mapping == SCRIPT_TO_TRADITIONAL
                    and ch in smap.ambiguous_targets
                ):
                    unmappable += 1
                out.append(ch)
        text = "".join(out)
        if tally is not None:
            tally["script_mapped"] += mapped
            tally["unmappable"] += unmappable
    return text


@dataclass(frozen=True)
class PunctClass:
    """One of the punctuation classes: an id plus its surface tokens.

    ``tokens`` may contain multi-codepoint surfaces (ellipsis, em-dash run);
    ``members`` is the set of individual codepoints the class claims.
    """

    id: str
    tokens: tuple[str, ...]
    paired: bool

    @property
    def members(self) -> frozenset[str]:
        return frozenset(ch for token in self.tokens for ch in token)


@dataclass(frozen=True)
class PunctMark:
    offset: int  # count of base characters preceding the mark
    class_id: str
    surface: str


@dataclass(frozen=True)
class PunctAnnotation:
    """Punctuation-free base text plus position-anchored marks."""

    base_text: str
    marks: tuple[PunctMark, ...]

    def reinsert(self) -> str:
        """Rebuild the punctuated text; inverse of ``strip_punctuation``."""
        out = []
        mark_idx = 0
        for pos, ch in enumerate(self.base_text):
            while mark_idx < len(self.marks) and self.marks[mark_idx].offset == pos:
                out.append(self.marks[mark_idx].surface)
                mark_idx += 1
            out.append(ch)
        for mark in self.marks[mark_idx:]:
            out.append(mark.surface)
        return "".join(out)


class PunctInventory:
    """The punctuation mark inventory: classes with disjoint member sets."""

    def __init__(self, classes: Iterable[PunctClass]):
        self.classes = tuple(classes)
        by_codepoint: dict[str, PunctClass] = {}
        for cls in self.classes:
            for ch in cls.members:
                if ch in by_codepoint:
                    raise ValueError(
                        f"codepoint {ch!r} claimed by both {by_codepoint[ch].id} and {cls.id}"
                    )
                by_codepoint[ch] = cls
        self._by_codepoint = by_codepoint
        # Longest-first so multi-codepoint surfaces win over their prefixes.
        self._tokens = sorted(
            ((token, cls) for cls in self.classes for token in cls.tokens),
            key=lambda pair: (-len(pair[0]), pair[0]),
        )

    @property
    def codepoints(self) -> frozenset[str]:
        return frozenset(self._by_codepoint)

    def classify(self, cp: str) -> PunctClass | None:
        """Class of a single codepoint, or None if it is not punctuation."""
        return self._by_codepoint.get(cp)

    def strip(self, text: str) -> PunctAnnotation:
        """Split ``text`` into base characters and anchored marks.

        Non-inventory symbols stay in the base text. Reinserting the marks
        reproduces ``text`` exactly.
        """
        base: list[str] = []
        marks: list[PunctMark] = []
        i = 0
        n = len(text)
        while i < n:
            if text[i] in self._by_codepoint:
                for token, cls in self._tokens:
                    if text.startswith(token, i):
                        marks.append(PunctMark(len(base), cls.id, token))
                        i += len(token)
                        break
                else:  # pragma: no cover - members always have a 1-char token
                    base.append(text[i])
                    i += 1
            else:
                base.append(text[i])
                i += 1
        return PunctAnnotation("".join(base), tuple(marks))

    @classmethod
    def load(cls, path: str | Path) -> "PunctInventory":
        """Load ``class_id<TAB>tokens (space-separated)<TAB>paired|single`` lines."""
        classes = []
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3 or fields[2] not in ("paired", "single"):
                raise ValueError(f"bad inventory line: {raw!r}")
            tokens = tuple(tok for tok in fields[1].split(" ") if tok)
            if not tokens:
                raise ValueError(f"inventory class {fields[0]!r} has no tokens")
            classes.append(PunctClass(fields[0], tokens, fields[2] == "paired"))
        return cls(classes)


_DEFAULT_INVENTORY: PunctInventory | None = None


def default_inventory() -> PunctInventory:
    """The built-in 14-class inventory."""
    global _DEFAULT_INVENTORY
    if _DEFAULT_INVENTORY is None:
        ref = resources.files("wenyankit.data") / "punct_inventory.tsv"
        with resources.as_file(ref) as path:
            _DEFAULT_INVENTORY = PunctInventory.load(path)
    return _DEFAULT_INVENTORY


def strip_punctuation(text: str, inventory: PunctInventory | None = None) -> PunctAnnotation:
    """Strip inventory punctuation from normalized ``text``."""
    return (inventory or default_inventory()).strip(text)


def classify_punct(cp: str, inventory: PunctInventory | None = None) -> PunctClass | None:
    """Class containing codepoint ``cp``, or None for non-punctuation."""
    if len(cp) != 1:
        raise ValueError("classify_punct expects a single codepoint")
    return (inventory or default_inventory()).classify(cp)
