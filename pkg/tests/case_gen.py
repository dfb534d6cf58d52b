"""Deterministic random (pred, refs) token-list cases for metric tests.

Shared by the oracle-equivalence tests and the acceptance suite so both
exercise the same distribution: lengths 0..50, alphabets of 2..20
symbols, 1..3 references (reference lengths may also be 0).
"""
from __future__ import annotations

import random


def random_cases(count: int, seed: int = 96187, max_len: int = 50,
                 max_vocab: int = 20, max_refs: int = 3):
    rng = random.Random(seed)
    for _ in range(count):
        vocab = [f"t{i}" for i in range(rng.randint(2, max_vocab))]
        pred = [rng.choice(vocab) for _ in range(rng.randint(0, max_len))]
        refs = [[rng.choice(vocab) for _ in range(rng.randint(0, max_len))]
                for _ in range(rng.randint(1, max_refs))]
        yield pred, refs
