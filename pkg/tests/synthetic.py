"""Deterministic toy parallel corpus for training-level tests.

The target sentence is the source read in reverse, and each source token
s<k> at source position i translates to t<k>, u<k>, or v<k> according to
i mod 3. Reproducing a sentence therefore needs both a non-monotone
alignment and genuine source-position information, which is what the
position-embedding ablation is meant to probe.
"""

import numpy as np

from crnmt.corpus import SentencePair

SRC_TYPES = 20
_FORMS = "tuv"


def synthetic_pairs(count: int, seed: int = 0, min_len: int = 3, max_len: int = 10):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        length = int(rng.integers(min_len, max_len + 1))
        ks = rng.integers(0, SRC_TYPES, size=length)
        source = [f"s{k}" for k in ks]
        target = [f"{_FORMS[i % 3]}{k}" for i, k in reversed(list(enumerate(ks)))]
        pairs.append(SentencePair(source=source, target=target))
    return pairs


def write_tsv(path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(" ".join(pair.target) + "\t" + " ".join(pair.source) + "\n")
