"""Pure-Python kernel implementations.

Same contracts as the compiled module ``cureval.kernels._fast``; used as
the fallback when the extension is unavailable.  Sequences are any
indexable collections of non-negative ints (the metric layer passes
``array.array('i')`` buffers).
"""
from __future__ import annotations

from collections import Counter


def lcs_length(a, b):
    """Length of the longest common subsequence of two int sequences."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    if m > n:
        a, b, n, m = b, a, m, n
    prev = [0] * (m + 1)
    curr = [0] * (m + 1)
    for i in range(1, n + 1):
        ai = a[i - 1]
        for j in range(1, m + 1):
            if b[j - 1] == ai:
                curr[j] = prev[j - 1] + 1
            else:
                pj = prev[j]
                cj = curr[j - 1]
                curr[j] = pj if pj >= cj else cj
        prev, curr = curr, prev
    return prev[m]


def _counts(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def ngram_overlap(pred, ref, n):
    """(overlap, pred_total, ref_total) for order-n n-grams.

    overlap is the multiset intersection size: sum over distinct n-grams
    of min(count in pred, count in ref).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pred_total = max(0, len(pred) - n + 1)
    ref_total = max(0, len(ref) - n + 1)
    if pred_total == 0 or ref_total == 0:
        return 0, pred_total, ref_total
    shared = _counts(pred, n) & _counts(ref, n)
    return sum(shared.values()), pred_total, ref_total


def clipped_matches(pred, refs, n):
    """(matches, pred_total) with counts clipped at the per-n-gram max over refs."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pred_total = max(0, len(pred) - n + 1)
    if pred_total == 0:
        return 0, 0
    clip = Counter()
    for ref in refs:
        clip |= _counts(ref, n)
    shared = _counts(pred, n) & clip
    return sum(shared.values()), pred_total
