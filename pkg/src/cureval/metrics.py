"""Sentence-level n-gram metrics: BLEU-1..4, GLEU, ROUGE-1/2/L.

All functions take a prediction TokenSequence and a non-empty list of
reference TokenSequences under the same tokenization policy.  Scores are
kept in [0, 1] internally; reports multiply by 100 at the presentation
layer only.

Multi-reference rules (configurable via ``multi_ref`` on score_example,
recorded in report metadata):
  max   - BLEU clips counts by the per-n-gram maximum over all
          references and takes the closest-length reference for the
          brevity penalty (ties toward the shorter); GLEU and ROUGE
          score each reference separately and keep the best.
  first - all metrics see only the first listed reference.

Token sequences are encoded to int ids per call and handed to the
kernels package, so the heavy counting runs in C when the compiled
extension is present.
"""
from __future__ import annotations

import math
from array import array
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .errors import DataError
from .kernels import clipped_matches, lcs_length, ngram_overlap
from .records import EvalExample
from .tokenization import DEFAULT_POLICY, TokenSequence, tokenize

# Stand-in for zero precisions under add_epsilon smoothing.  Diagnostics
# only; the reported default is smoothing=none.
EPSILON = 1e-9

SMOOTHING_MODES = ("none", "add_epsilon")
MULTI_REF_MODES = ("max", "first")

# flat-key order used by aggregation and the report table
METRIC_KEYS = (
    "bleu_1", "bleu_2", "bleu_3", "bleu_4", "gleu",
    "rouge1_p", "rouge1_r", "rouge1_f",
    "rouge2_p", "rouge2_r", "rouge2_f",
    "rougeL_p", "rougeL_r", "rougeL_f",
)


@dataclass(frozen=True)
class FMeasure:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "FMeasure":
        if precision + recall == 0.0:
            return cls(precision, recall, 0.0)
        return cls(precision, recall,
                   2.0 * precision * recall / (precision + recall))

    def to_obj(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


ZERO_FMEASURE = FMeasure(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SentenceScores:
    """One example's scores.  bleu holds cumulative orders 1..4."""
    bleu: tuple[float, float, float, float]
    gleu: float
    rouge1: FMeasure
    rouge2: FMeasure
    rougeL: FMeasure

    def flat(self) -> dict[str, float]:
        out = {f"bleu_{i}": v for i, v in enumerate(self.bleu, start=1)}
        out["gleu"] = self.gleu
        for name, fm in (("rouge1", self.rouge1), ("rouge2", self.rouge2),
                         ("rougeL", self.rougeL)):
            out[f"{name}_p"] = fm.precision
            out[f"{name}_r"] = fm.recall
            out[f"{name}_f"] = fm.f1
        return out

    def to_obj(self) -> dict:
        return {
            "bleu": list(self.bleu),
            "gleu": self.gleu,
            "rouge1": self.rouge1.to_obj(),
            "rouge2": self.rouge2.to_obj(),
            "rougeL": self.rougeL.to_obj(),
        }


def _check_inputs(pred: TokenSequence, refs: Sequence[TokenSequence]) -> None:
    if not refs:
        raise ValueError("refs must be non-empty")
    for ref in refs:
        if ref.policy != pred.policy:
            raise ValueError(
                f"policy mismatch: prediction uses {pred.policy!r}, "
                f"reference uses {ref.policy!r}")


def _encode(seqs: Sequence[Sequence[str]]) -> list[array]:
    """Map token strings to dense int ids (one shared vocabulary)."""
    vocab: dict[str, int] = {}
    out = []
    for toks in seqs:
        out.append(array("i", [vocab.setdefault(t, len(vocab)) for t in toks]))
    return out


def _prep(pred: TokenSequence, refs: Sequence[TokenSequence]):
    _check_inputs(pred, refs)
    enc = _encode([pred.tokens, *(r.tokens for r in refs)])
    return enc[0], enc[1:]


def _closest_ref_len(pred_len: int, ref_lens: Sequence[int]) -> int:
    best = ref_lens[0]
    for rl in ref_lens[1:]:
        d, bd = abs(rl - pred_len), abs(best - pred_len)
        if d < bd or (d == bd and rl < best):
            best = rl
    return best


def _bleu_cumulative(pred_ids, ref_ids, k: int, smoothing: str) -> tuple[float, ...]:
    """BLEU for every cumulative order 1..k in one pass.

    Order K combines the first K modified precisions with uniform 1/K
    weights under the brevity penalty.  With smoothing=none, a zero
    precision at order n zeroes orders n..k and leaves lower orders
    untouched.
    """
    if smoothing not in SMOOTHING_MODES:
        raise ValueError(f"smoothing must be one of {SMOOTHING_MODES}, got {smoothing!r}")
    c = len(pred_ids)
    if c == 0:
        return (0.0,) * k
    r = _closest_ref_len(c, [len(ri) for ri in ref_ids])
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    out = []
    log_sum = 0.0
    dead = False
    for n in range(1, k + 1):
        matches, total = clipped_matches(pred_ids, ref_ids, n)
        if matches == 0 or total == 0:
            if smoothing == "none":
                dead = True
            else:
                log_sum += math.log(EPSILON)
        else:
            log_sum += math.log(matches / total)
        out.append(0.0 if dead else bp * math.exp(log_sum / n))
    return tuple(out)


def _gleu(pred_ids, ref_ids, max_n: int) -> float:
    c = len(pred_ids)
    if c == 0:
        return 0.0
    pred_total = sum(c - n + 1 for n in range(1, max_n + 1) if c >= n)
    best = 0.0
    for ref in ref_ids:
        ov = 0
        ref_total = 0
        for n in range(1, max_n + 1):
            o, _, rt = ngram_overlap(pred_ids, ref, n)
            ov += o
            ref_total += rt
        precision = ov / pred_total if pred_total else 0.0
        recall = ov / ref_total if ref_total else 0.0
        score = min(precision, recall)
        if score > best:
            best = score
    return best


def _rouge_n(pred_ids, ref_ids, n: int) -> FMeasure:
    best = ZERO_FMEASURE
    for ref in ref_ids:
        ov, pred_total, ref_total = ngram_overlap(pred_ids, ref, n)
        precision = ov / pred_total if pred_total else 0.0
        recall = ov / ref_total if ref_total else 0.0
        fm = FMeasure.from_pr(precision, recall)
        if fm.f1 > best.f1:
            best = fm
    return best


def _rouge_l(pred_ids, ref_ids) -> FMeasure:
    best = ZERO_FMEASURE
    plen = len(pred_ids)
    for ref in ref_ids:
        rlen = len(ref)
        lcs = lcs_length(pred_ids, ref) if plen and rlen else 0
        precision = lcs / plen if plen else 0.0
        recall = lcs / rlen if rlen else 0.0
        fm = FMeasure.from_pr(precision, recall)
        if fm.f1 > best.f1:
            best = fm
    return best


def bleu_k(pred: TokenSequence, refs: Sequence[TokenSequence], k: int,
           smoothing: str = "none") -> float:
    """Cumulative BLEU-k with multi-reference clipping and closest-length
    brevity penalty.  Empty prediction scores 0 (not an error)."""
    if not 1 <= k <= 4:
        raise ValueError(f"k must be in 1..4, got {k}")
    pred_ids, ref_ids = _prep(pred, refs)
    return _bleu_cumulative(pred_ids, ref_ids, k, smoothing)[k - 1]


def gleu(pred: TokenSequence, refs: Sequence[TokenSequence], max_n: int = 4) -> float:
    """Pooled-order GLEU: min(precision, recall) over the union multiset
    of n-grams of orders 1..max_n, best reference wins."""
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    pred_ids, ref_ids = _prep(pred, refs)
    return _gleu(pred_ids, ref_ids, max_n)


def rouge_n(pred: TokenSequence, refs: Sequence[TokenSequence], n: int) -> FMeasure:
    """ROUGE-n precision/recall/f1; the triple comes from the reference
    with the highest f1 (first such reference on ties)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    pred_ids, ref_ids = _prep(pred, refs)
    return _rouge_n(pred_ids, ref_ids, n)


def rouge_l(pred: TokenSequence, refs: Sequence[TokenSequence]) -> FMeasure:
    """ROUGE-L over the longest common subsequence; max-f1 reference."""
    pred_ids, ref_ids = _prep(pred, refs)
    return _rouge_l(pred_ids, ref_ids)


def score_sequences(pred: TokenSequence, refs: Sequence[TokenSequence], *,
                    max_n: int = 4, smoothing: str = "none",
                    multi_ref: str = "max") -> SentenceScores:
    """All metrics for one already-tokenized example, encoding the token
    strings exactly once."""
    if multi_ref not in MULTI_REF_MODES:
        raise ValueError(f"multi_ref must be one of {MULTI_REF_MODES}, got {multi_ref!r}")
    if multi_ref == "first":
        refs = refs[:1]
    pred_ids, ref_ids = _prep(pred, refs)
    return SentenceScores(
        bleu=_bleu_cumulative(pred_ids, ref_ids, 4, smoothing),
        gleu=_gleu(pred_ids, ref_ids, max_n),
        rouge1=_rouge_n(pred_ids, ref_ids, 1),
        rouge2=_rouge_n(pred_ids, ref_ids, 2),
        rougeL=_rouge_l(pred_ids, ref_ids),
    )


def score_example(ex: EvalExample, policy: str = DEFAULT_POLICY, *,
                  max_n: int = 4, smoothing: str = "none",
                  multi_ref: str = "max") -> SentenceScores:
    """Tokenize an example's prediction and references, then score."""
    if ex.prediction is None:
        raise DataError(f"example {ex.id!r} has no prediction to score")
    pred = tokenize(ex.prediction, policy)
    refs = [tokenize(r, policy) for r in ex.references]
    return score_sequences(pred, refs, max_n=max_n, smoothing=smoothing,
                           multi_ref=multi_ref)


def corpus_bleu(pairs: Iterable[tuple[TokenSequence, Sequence[TokenSequence]]],
                k: int = 4, smoothing: str = "none") -> tuple[float, ...]:
    """Corpus-level BLEU (pooled counts, not per-example averaging) for
    cumulative orders 1..k.  Offered for comparison with the default
    per-example averages; zero pairs → all zeros."""
    if not 1 <= k <= 4:
        raise ValueError(f"k must be in 1..4, got {k}")
    if smoothing not in SMOOTHING_MODES:
        raise ValueError(f"smoothing must be one of {SMOOTHING_MODES}, got {smoothing!r}")
    matches_total = [0] * k
    pred_total = [0] * k
    c_total = 0
    r_total = 0
    seen = False
    for pred, refs in pairs:
        seen = True
        pred_ids, ref_ids = _prep(pred, refs)
        c = len(pred_ids)
        c_total += c
        r_total += _closest_ref_len(c, [len(ri) for ri in ref_ids])
        for n in range(1, k + 1):
            m, t = clipped_matches(pred_ids, ref_ids, n)
            matches_total[n - 1] += m
            pred_total[n - 1] += t
    if not seen or c_total == 0:
        return (0.0,) * k
    bp = 1.0 if c_total >= r_total else math.exp(1.0 - r_total / c_total)
    out = []
    log_sum = 0.0
    dead = False
    for n in range(1, k + 1):
        m, t = matches_total[n - 1], pred_total[n - 1]
        if m == 0 or t == 0:
            if smoothing == "none":
                dead = True
            else:
                log_sum += math.log(EPSILON)
        else:
            log_sum += math.log(m / t)
        out.append(0.0 if dead else bp * math.exp(log_sum / n))
    return tuple(out)
