# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for LCS length and exact n-gram overlap counting.

n-grams over int token ids are packed into 64-bit keys (positional
base-V encoding, V = max id + 1), which is injective for a fixed order
n as long as V**n fits in 64 bits.  Callers fall back to the pure
implementation when OverflowError is raised.
"""
from cython.operator cimport dereference as deref, preincrement as inc
from libc.stdlib cimport calloc, free
from libcpp.unordered_map cimport unordered_map

ctypedef unsigned long long u64
ctypedef long long i64

cdef u64 U64_MAX = <u64> 0xFFFFFFFFFFFFFFFF


cdef inline Py_ssize_t _imax(Py_ssize_t a, Py_ssize_t b) noexcept:
    return a if a > b else b


def lcs_length(const int[:] a, const int[:] b):
    """Length of the longest common subsequence of two int sequences."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0 or m == 0:
        return 0
    if m > n:
        return lcs_length(b, a)
    cdef int *prev = <int *> calloc(m + 1, sizeof(int))
    cdef int *curr = <int *> calloc(m + 1, sizeof(int))
    if prev == NULL or curr == NULL:
        free(prev)
        free(curr)
        raise MemoryError()
    cdef Py_ssize_t i, j
    cdef int ai, pj, cj
    cdef int *tmp
    with nogil:
        for i in range(1, n + 1):
            ai = a[i - 1]
            for j in range(1, m + 1):
                if b[j - 1] == ai:
                    curr[j] = prev[j - 1] + 1
                else:
                    pj = prev[j]
                    cj = curr[j - 1]
                    curr[j] = pj if pj >= cj else cj
            tmp = prev
            prev = curr
            curr = tmp
    cdef int result = prev[m]
    free(prev)
    free(curr)
    return result


cdef u64 _vocab_base(const int[:] seq, u64 base) noexcept:
    cdef Py_ssize_t i
    for i in range(seq.shape[0]):
        if <u64> seq[i] + 1 > base:
            base = <u64> seq[i] + 1
    return base


cdef int _base_fits(u64 base, int n) noexcept:
    # True iff base**n <= U64_MAX
    cdef u64 acc = 1
    cdef int i
    if base <= 1:
        return 1
    for i in range(n):
        if acc > U64_MAX / base:
            return 0
        acc *= base
    return 1


cdef inline u64 _pack(const int[:] seq, Py_ssize_t start, int n, u64 base) noexcept nogil:
    cdef u64 key = 0
    cdef int j
    for j in range(n):
        key = key * base + <u64> seq[start + j]
    return key


def ngram_overlap(const int[:] pred, const int[:] ref, int n):
    """(overlap, pred_total, ref_total) for order-n n-grams.

    overlap is the multiset intersection size: sum over distinct n-grams
    of min(count in pred, count in ref).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    cdef Py_ssize_t pred_total = _imax(0, pred.shape[0] - n + 1)
    cdef Py_ssize_t ref_total = _imax(0, ref.shape[0] - n + 1)
    if pred_total == 0 or ref_total == 0:
        return 0, pred_total, ref_total
    cdef u64 base = _vocab_base(ref, _vocab_base(pred, 1))
    if not _base_fits(base, n):
        raise OverflowError("n-gram key space exceeds 64 bits")
    cdef unordered_map[u64, i64] counts
    cdef unordered_map[u64, i64].iterator it
    cdef Py_ssize_t i
    cdef Py_ssize_t overlap = 0
    for i in range(ref_total):
        counts[_pack(ref, i, n, base)] += 1
    for i in range(pred_total):
        it = counts.find(_pack(pred, i, n, base))
        if it != counts.end() and deref(it).second > 0:
            # in-place -= through deref() mutates a pair copy; assign instead
            deref(it).second = deref(it).second - 1
            overlap += 1
    return overlap, pred_total, ref_total


def clipped_matches(const int[:] pred, list refs, int n):
    """(matches, pred_total) with counts clipped at the per-n-gram max over refs."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cdef Py_ssize_t pred_total = _imax(0, pred.shape[0] - n + 1)
    if pred_total == 0:
        return 0, 0
    cdef u64 base = _vocab_base(pred, 1)
    cdef const int[:] ref
    for obj in refs:
        ref = obj
        base = _vocab_base(ref, base)
    if not _base_fits(base, n):
        raise OverflowError("n-gram key space exceeds 64 bits")
    cdef unordered_map[u64, i64] clip
    cdef unordered_map[u64, i64] local
    cdef unordered_map[u64, i64].iterator it
    cdef unordered_map[u64, i64].iterator lit
    cdef Py_ssize_t i, total
    cdef u64 key
    cdef i64 cnt
    for obj in refs:
        ref = obj
        total = _imax(0, ref.shape[0] - n + 1)
        if total == 0:
            continue
        local.clear()
        for i in range(total):
            local[_pack(ref, i, n, base)] += 1
        lit = local.begin()
        while lit != local.end():
            key = deref(lit).first
            cnt = deref(lit).second
            it = clip.find(key)
            if it == clip.end():
                clip[key] = cnt
            elif deref(it).second < cnt:
                deref(it).second = cnt
            inc(lit)
    cdef Py_ssize_t matches = 0
    for i in range(pred_total):
        it = clip.find(_pack(pred, i, n, base))
        if it != clip.end() and deref(it).second > 0:
            deref(it).second = deref(it).second - 1
            matches += 1
    return matches, pred_total
