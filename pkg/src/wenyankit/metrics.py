"""Every score the benchmark reports.

Multiset P/R/F1 for POS, alignment-based P/R/F1 for punctuation,
category-wise P/R/F1 for NER, character-level BLEU-1..4, the
embedding-based (greedy max-cosine) P/R/F1, and micro/corpus aggregation
with per-category breakdowns.

All functions are pure. ``embed_score`` is the one operation with an
external effect (the provider call); callers bound its parallelism.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence

from .formats import ENTITY_CATEGORIES, EntitySet, TaggedSequence
from .textnorm import PunctInventory, is_cjk, strip_punctuation


class EmptyInput(ValueError):
    """A metric was asked to score an empty candidate or reference."""


class EmptyList(ValueError):
    """aggregate() was called with no items."""


# ---------------------------------------------------------------------------
# P/R/F1
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PRF:
    """Precision/recall/F1 with the counts they were computed from.

    F1 is computed as 2*tp/(predicted+gold), which equals 2PR/(P+R) and
    stays exact for small rationals. ``by_category`` carries per-class,
    per-tag, or per-entity-category sub-counts when the metric has them.
    """

    precision: float
    recall: float
    f1: float
    true_positives: int
    predicted: int
    gold: int
    by_category: Mapping[str, "PRF"] | None = None

    @classmethod
    def from_counts(
        cls,
        tp: int,
        predicted: int,
        gold: int,
        by_category: Mapping[str, "PRF"] | None = None,
    ) -> "PRF":
        precision = tp / predicted if predicted else 0.0
        recall = tp / gold if gold else 0.0
        f1 = 2 * tp / (predicted + gold) if (predicted + gold) and tp else 0.0
        return cls(precision, recall, f1, tp, predicted, gold, by_category)

    @classmethod
    def vacuous(cls, by_category: Mapping[str, "PRF"] | None = None) -> "PRF":
        """The empty-equals-empty convention: perfect score, zero counts."""
        return cls(1.0, 1.0, 1.0, 0, 0, 0, by_category)


def _multiset_prf(gold: Counter, pred: Counter, categories=None, key_category=None) -> PRF:
    tp = sum((gold & pred).values())
    by_category = None
    if categories is not None and key_category is not None:
        by_category = {}
        for cat in categories:
            g = Counter({k: v for k, v in gold.items() if key_category(k) == cat})
            p = Counter({k: v for k, v in pred.items() if key_category(k) == cat})
            by_category[cat] = PRF.from_counts(
                sum((g & p).values()), sum(p.values()), sum(g.values())
            )
    return PRF.from_counts(tp, sum(pred.values()), sum(gold.values()), by_category)


def prf_pos(gold: TaggedSequence, pred: TaggedSequence, *, anchored: bool = False) -> PRF:
    """Score a POS prediction against gold.

    Default semantics are multiset over (segment, tag) pairs, which stays
    well-defined when the prediction re-segments the sentence. ``anchored``
    additionally requires identical character spans (strict positional
    matching). Per-tag counts are reported in ``by_category``.
    """
    if anchored:
        gold_ms = Counter(_anchored_items(gold))
        pred_ms = Counter(_anchored_items(pred))
        tags = {t for *_, t in gold_ms} | {t for *_, t in pred_ms}
        return _multiset_prf(gold_ms, pred_ms, sorted(tags), lambda k: k[3])
    gold_ms = Counter(gold.items)
    pred_ms = Counter(pred.items)
    tags = {t for _, t in gold_ms} | {t for _, t in pred_ms}
    return _multiset_prf(gold_ms, pred_ms, sorted(tags), lambda k: k[1])


def _anchored_items(seq: TaggedSequence) -> list[tuple[int, int, str, str]]:
    items = []
    pos = 0
    for segment, tag in seq.items:
        items.append((pos, pos + len(segment), segment, tag))
        pos += len(segment)
    return items


def _lcs_pairs(a: str, b: str) -> list[tuple[int, int]]:
    """Aligned index pairs of one longest common subsequence of a and b."""
    la, lb = len(a), len(b)
    dp = [[0] * (lb + 1) for _ in range(la + 1)]
    for i in range(la - 1, -1, -1):
        row, nxt = dp[i], dp[i + 1]
        for j in range(lb - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = nxt[j + 1] + 1
            else:
                row[j] = nxt[j] if nxt[j] >= row[j + 1] else row[j + 1]
    pairs = []
    i = j = 0
    while i < la and j < lb:
        if a[i] == b[j]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs


@dataclass(frozen=True)
class PunctResult:
    """prf_punct output; ``base_mismatch`` flags altered base characters."""

    prf: PRF
    base_mismatch: bool


def prf_punct(
    gold_text: str, pred_text: str, inventory: PunctInventory | None = None
) -> PunctResult:
    """Score predicted punctuation against gold.

    Both texts are stripped to (base text, marks). With identical base
    texts a predicted mark is a true positive iff a gold mark of the same
    class sits at the same offset. When the prediction altered base
    characters, base texts are aligned by longest common subsequence and
    marks match through aligned positions only.
    """
    gold_ann = strip_punctuation(gold_text, inventory)
    pred_ann = strip_punctuation(pred_text, inventory)
    mismatch = gold_ann.base_text != pred_ann.base_text
    if not mismatch:
        pred_keys = [(m.offset, m.class_id) for m in pred_ann.marks]
    else:
        # Canonical orientation keeps the alignment symmetric under swap.
        if pred_ann.base_text <= gold_ann.base_text:
            pairs = _lcs_pairs(pred_ann.base_text, gold_ann.base_text)
        else:
            pairs = [(p, g) for g, p in _lcs_pairs(gold_ann.base_text, pred_ann.base_text)]
        offset_map = {0: 0}
        for pred_idx, gold_idx in pairs:
            offset_map[pred_idx + 1] = gold_idx + 1
        pred_keys = [
            (offset_map[m.offset], m.class_id)
            for m in pred_ann.marks
            if m.offset in offset_map
        ]
    gold_ms = Counter((m.offset, m.class_id) for m in gold_ann.marks)
    pred_ms = Counter(pred_keys)
    classes = {c for _, c in gold_ms} | {m.class_id for m in pred_ann.marks}
    by_class = {}
    for cls_id in sorted(classes):
        g = Counter({k: v for k, v in gold_ms.items() if k[1] == cls_id})
        p = Counter({k: v for k, v in pred_ms.items() if k[1] == cls_id})
        pred_total = sum(1 for m in pred_ann.marks if m.class_id == cls_id)
        by_class[cls_id] = PRF.from_counts(sum((g & p).values()), pred_total, sum(g.values()))
    tp = sum((gold_ms & pred_ms).values())
    prf = PRF.from_counts(tp, len(pred_ann.marks), len(gold_ann.marks), by_class)
    return PunctResult(prf, mismatch)


def prf_entities(gold: EntitySet, pred: EntitySet) -> PRF:
    """Category-wise exact-string matching; micro counts over 4 categories.

    When gold and prediction are both completely empty the item is
    vacuously correct (P=R=F1=1 with zero counts), so corpus-level micro
    aggregation is unaffected by the convention.
    """
    by_category = {}
    tp = predicted = gold_n = 0
    for cat in ENTITY_CATEGORIES:
        g = Counter(gold.category(cat))
        p = Counter(pred.category(cat))
        cat_tp = sum((g & p).values())
        if not g and not p:
            by_category[cat] = PRF.vacuous()
        else:
            by_category[cat] = PRF.from_counts(cat_tp, sum(p.values()), sum(g.values()))
        tp += cat_tp
        predicted += sum(p.values())
        gold_n += sum(g.values())
    if predicted == 0 and gold_n == 0:
        return PRF.vacuous(by_category)
    return PRF.from_counts(tp, predicted, gold_n, by_category)


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------


def cjk_tokens(text: str) -> list[str]:
    """Character-level CJK tokenization.

    Each ideograph and each punctuation/symbol character is its own token;
    runs of other non-space characters (Latin, digits) group into single
    tokens; whitespace separates.
    """
    tokens: list[str] = []
    run: list[str] = []
    for ch in text:
        if ch.isspace():
            if run:
                tokens.append("".join(run))
                run = []
        elif is_cjk(ch):
            if run:
                tokens.append("".join(run))
                run = []
            tokens.append(ch)
        elif not ch.isalnum():
            if run:
                tokens.append("".join(run))
                run = []
            tokens.append(ch)
        else:
            run.append(ch)
    if run:
        tokens.append("".join(run))
    return tokens


@dataclass(frozen=True)
class BleuScores:
    """BLEU-1..max_n plus the counts needed for corpus pooling."""

    bleu: tuple[float, ...]
    brevity_penalty: float
    candidate_len: int
    reference_len: int
    matches: tuple[int, ...]
    totals: tuple[int, ...]
    smoothed_orders: tuple[int, ...] = ()

    @property
    def bleu_1(self) -> float:
        return self.bleu[0]

    @property
    def bleu_2(self) -> float:
        return self.bleu[1]

    @property
    def bleu_3(self) -> float:
        return self.bleu[2]

    @property
    def bleu_4(self) -> float:
        return self.bleu[3]


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped_counts(
    cand: Sequence[str], ref: Sequence[str], max_n: int
) -> tuple[list[int], list[int]]:
    matches, totals = [], []
    for n in range(1, max_n + 1):
        cand_grams = _ngram_counts(cand, n)
        ref_grams = _ngram_counts(ref, n)
        matches.append(sum((cand_grams & ref_grams).values()))
        totals.append(sum(cand_grams.values()))
    return matches, totals


def _brevity_penalty(candidate_len: int, reference_len: int) -> float:
    if candidate_len == 0:
        return 0.0
    if candidate_len < reference_len:
        return math.exp(1.0 - reference_len / candidate_len)
    return 1.0


def _cumulative_bleu(
    precisions: Sequence[float], brevity_penalty: float, max_n: int
) -> tuple[float, ...]:
    scores = []
    log_sum = 0.0
    dead = False
    for k in range(max_n):
        if precisions[k] <= 0.0:
            dead = True
        if dead:
            scores.append(0.0)
            continue
        log_sum += math.log(precisions[k])
        scores.append(brevity_penalty * math.exp(log_sum / (k + 1)))
    return tuple(scores)


def bleu(candidate: str, reference: str, max_n: int = 4) -> BleuScores:
    """Sentence-level character BLEU with add-1 smoothing for orders > 1.

    Modified n-gram precision with reference clipping; the brevity penalty
    is exp(1 - r/c) when the candidate is shorter. A zero precision at an
    order above 1 is smoothed to (matches+1)/(totals+1); a zero unigram
    precision zeroes every score.
    """
    cand = cjk_tokens(candidate)
    ref = cjk_tokens(reference)
    if not cand or not ref:
        raise EmptyInput("both candidate and reference must tokenize to at least one token")
    matches, totals = _clipped_counts(cand, ref, max_n)
    bp = _brevity_penalty(len(cand), len(ref))
    precisions = []
    smoothed = []
    for k in range(max_n):
        if totals[k] > 0 and matches[k] > 0:
            precisions.append(matches[k] / totals[k])
        elif k == 0:
            precisions.append(0.0)
        else:
            precisions.append((matches[k] + 1) / (totals[k] + 1))
            smoothed.append(k + 1)
    return BleuScores(
        _cumulative_bleu(precisions, bp, max_n),
        bp,
        len(cand),
        len(ref),
        tuple(matches),
        tuple(totals),
        tuple(smoothed),
    )


def bleu_zero(reference: str, max_n: int = 4) -> BleuScores:
    """The all-zero score an empty prediction contributes to a corpus."""
    ref_len = len(cjk_tokens(reference))
    return BleuScores(
        (0.0,) * max_n, 0.0, 0, ref_len, (0,) * max_n, (0,) * max_n
    )


def bleu_corpus(items: Sequence[BleuScores]) -> BleuScores:
    """Corpus-level BLEU: pool counts and lengths, no smoothing."""
    if not items:
        raise EmptyList("no BLEU items to aggregate")
    max_n = len(items[0].bleu)
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = ref_len = 0
    for item in items:
        for k in range(max_n):
            matches[k] += item.matches[k]
            totals[k] += item.totals[k]
        cand_len += item.candidate_len
        ref_len += item.reference_len
    bp = _brevity_penalty(cand_len, ref_len)
    precisions = [matches[k] / totals[k] if totals[k] else 0.0 for k in range(max_n)]
    return BleuScores(
        _cumulative_bleu(precisions, bp, max_n),
        bp,
        cand_len,
        ref_len,
        tuple(matches),
        tuple(totals),
    )


# ---------------------------------------------------------------------------
# Embedding score
# ---------------------------------------------------------------------------


class EmbeddingProvider(Protocol):
    """Returns per-token contextual vectors for each input text."""

    def embed(self, texts: Sequence[str]) -> list[list[list[float]]]: ...


@dataclass(frozen=True)
class EmbedScore:
    """Greedy max-cosine token matching summarized as P/R/F1."""

    precision: float
    recall: float
    f1: float

    def __post_init__(self) -> None:
        eps = 1e-12
        assert self.f1 <= max(self.precision, self.recall) + eps
        assert self.f1 <= (self.precision + self.recall) / 2 + eps


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine similarity; identical vectors are exactly 1.0, zero vectors 0.0."""
    if list(u) == list(v):
        nu = math.sqrt(sum(x * x for x in u))
        return 1.0 if nu > 0.0 else 0.0
    dot = sum(x * y for x, y in zip(u, v))
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(x * x for x in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / (nu * nv)))


def embed_score(candidate: str, reference: str, provider: EmbeddingProvider) -> EmbedScore:
    """BERTScore-style P/R/F1 from provider token embeddings.

    Recall is the mean over reference tokens of the max cosine similarity
    to any candidate token; precision is symmetric; F1 the harmonic mean.
    No IDF weighting, no baseline rescaling. Provider failures propagate
    (callers mark the item unscored, never silently zero).
    """
    if not candidate or not reference:
        raise EmptyInput("candidate and reference must be non-empty")
    cand_vecs, ref_vecs = provider.embed([candidate, reference])
    if not cand_vecs or not ref_vecs:
        raise EmptyInput("provider returned no token vectors")
    precision = sum(max(cosine(c, r) for r in ref_vecs) for c in cand_vecs) / len(cand_vecs)
    recall = sum(max(cosine(r, c) for c in cand_vecs) for r in ref_vecs) / len(ref_vecs)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EmbedScore(precision, recall, f1)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricReport:
    """Corpus-level aggregate of one metric family.

    ``prf`` is the micro aggregation (summed counts, recomputed rates);
    ``bleu_corpus``/``bleu_mean`` are the pooled and the mean-sentence
    variants; ``embed`` is the arithmetic mean of per-item scores.
    """

    kind: str
    n_items: int
    prf: PRF | None = None
    bleu_corpus: BleuScores | None = None
    bleu_mean: tuple[float, ...] | None = None
    embed: EmbedScore | None = None


def _aggregate_prf(items: Sequence[PRF]) -> PRF:
    tp = sum(i.true_positives for i in items)
    predicted = sum(i.predicted for i in items)
    gold = sum(i.gold for i in items)
    categories: dict[str, list[int]] = {}
    for item in items:
        for cat, sub in (item.by_category or {}).items():
            acc = categories.setdefault(cat, [0, 0, 0])
            acc[0] += sub.true_positives
            acc[1] += sub.predicted
            acc[2] += sub.gold
    by_category = {
        cat: PRF.from_counts(*counts) for cat, counts in sorted(categories.items())
    } or None
    return PRF.from_counts(tp, predicted, gold, by_category)


def aggregate(per_item: Iterable) -> MetricReport:
    """Aggregate a homogeneous list of PRF, BleuScores, or EmbedScore items.

    PRF aggregates micro (permutation- and chunking-invariant: aggregating
    partial aggregates equals aggregating the items). BLEU aggregates at
    corpus level, with the mean-sentence variant reported alongside.
    """
    items = list(per_item)
    if not items:
        raise EmptyList("nothing to aggregate")
    first = items[0]
    if isinstance(first, PunctResult):
        items = [i.prf for i in items]
        first = items[0]
    if isinstance(first, PRF):
        return MetricReport("prf", len(items), prf=_aggregate_prf(items))
    if isinstance(first, BleuScores):
        max_n = len(first.bleu)
        mean = tuple(
            sum(item.bleu[k] for item in items) / len(items) for k in range(max_n)
        )
        return MetricReport(
            "bleu", len(items), bleu_corpus=bleu_corpus(items), bleu_mean=mean
        )
    if isinstance(first, EmbedScore):
        n = len(items)
        return MetricReport(
            "embed",
            n,
            embed=EmbedScore(
                sum(i.precision for i in items) / n,
                sum(i.recall for i in items) / n,
                sum(i.f1 for i in items) / n,
            ),
        )
    raise TypeError(f"cannot aggregate items of type {type(first).__name__}")
