"""Benchmark the compiled kernels against the pure-Python fallback.

Runs the three hot operations (LCS length, per-reference n-gram overlap,
multi-reference clipped matching) over identical synthetic token-id
sequences and reports throughput for each backend.

Usage: python benchmarks/bench_kernels.py [--length N] [--pairs N]
       [--vocab N] [--seed N]
"""
from __future__ import annotations

import argparse
import random
import time
from array import array

from cureval.kernels import pure

try:
    from cureval.kernels import _fast
except ImportError:
    _fast = None


def make_pairs(count: int, length: int, vocab: int, seed: int):
    rng = random.Random(seed)
    pairs = []
    for _ in range(count):
        pred = array("i", (rng.randrange(vocab) for _ in range(length)))
        refs = [array("i", (rng.randrange(vocab) for _ in range(length)))
                for _ in range(3)]
        pairs.append((pred, refs))
    return pairs


def timed(label: str, fn, pairs) -> float:
    start = time.perf_counter()
    sink = 0
    for pred, refs in pairs:
        sink += fn(pred, refs)
    elapsed = time.perf_counter() - start
    rate = len(pairs) / elapsed if elapsed else float("inf")
    print(f"  {label:<22} {elapsed:8.3f} s   {rate:10.1f} pairs/s   (checksum {sink})")
    return elapsed


def run(backend_name: str, mod, pairs):
    print(f"{backend_name}:")
    results = {}
    results["lcs"] = timed(
        "lcs_length", lambda p, rs: sum(mod.lcs_length(p, r) for r in rs), pairs)
    results["overlap"] = timed(
        "ngram_overlap n=1..4",
        lambda p, rs: sum(mod.ngram_overlap(p, rs[0], n)[0] for n in range(1, 5)),
        pairs)
    results["clipped"] = timed(
        "clipped_matches n=1..4",
        lambda p, rs: sum(mod.clipped_matches(p, rs, n)[0] for n in range(1, 5)),
        pairs)
    return results


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--length", type=int, default=400,
                        help="tokens per sequence (default 400)")
    parser.add_argument("--pairs", type=int, default=200,
                        help="number of (pred, 3 refs) pairs (default 200)")
    parser.add_argument("--vocab", type=int, default=3000,
                        help="token-id vocabulary size (default 3000)")
    parser.add_argument("--seed", type=int, default=12345)
    args = parser.parse_args()

    print(f"workload: {args.pairs} pairs, length {args.length}, "
          f"vocab {args.vocab}, seed {args.seed}")
    pairs = make_pairs(args.pairs, args.length, args.vocab, args.seed)

    pure_times = run("pure python", pure, pairs)
    if _fast is None:
        print("compiled extension not available; build it to compare")
        return 0
    fast_times = run("compiled", _fast, pairs)
    print("speedup (pure / compiled):")
    for key in pure_times:
        print(f"  {key:<22} {pure_times[key] / fast_times[key]:6.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
