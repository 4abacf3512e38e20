"""Benchmark the jit-compiled kernels against their pure-numpy twins.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Each kernel is timed on two workloads: a cohort-scale batch (the shape seen
when scoring a full corpus) and a node-scale batch (the shape seen at a
single tree node during induction).  The script reports per-call timings for
both implementations plus the agreement between their outputs.  When numba
is unavailable, or disabled via SSIKIT_NO_NUMBA, only the numpy path runs.
"""

from __future__ import annotations

import time

import numpy as np

from ssikit import _kernels as K


def _time(fn, *args, repeat: int = 5, inner: int = 20) -> float:
    """Best-of-`repeat` mean seconds per call over `inner` calls."""
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        elapsed = (time.perf_counter() - start) / inner
        best = min(best, elapsed)
    return best


def _fmt(seconds: float) -> str:
    if seconds < 1e-3:
        return f"{seconds * 1e6:8.1f} us"
    return f"{seconds * 1e3:8.2f} ms"


def _report(name: str, np_time: float, nb_time: float | None, agree: str) -> None:
    if nb_time is None:
        print(f"{name:<24} numpy {_fmt(np_time)}   numba     (disabled)   {agree}")
        return
    speedup = np_time / nb_time if nb_time > 0 else float("inf")
    print(
        f"{name:<24} numpy {_fmt(np_time)}   numba {_fmt(nb_time)}"
        f"   x{speedup:5.1f}   {agree}"
    )


def bench_presence_matrix(rng: np.random.Generator) -> None:
    n_mentions, n_cases, n_concepts = 50_000, 1_200, 500
    case_idx = rng.integers(0, n_cases, size=n_mentions).astype(np.int64)
    concept_idx = rng.integers(0, n_concepts, size=n_mentions).astype(np.int64)

    np_time = _time(K._np_presence_matrix, case_idx, concept_idx, n_cases, n_concepts)
    nb_time = None
    agree = ""
    if K.USING_NUMBA:
        nb_time = _time(K._nb_presence_matrix, case_idx, concept_idx, n_cases, n_concepts)
        a = K._np_presence_matrix(case_idx, concept_idx, n_cases, n_concepts)
        b = K._nb_presence_matrix(case_idx, concept_idx, n_cases, n_concepts)
        agree = "exact" if np.array_equal(a, b) else "MISMATCH"
    _report("presence_matrix", np_time, nb_time, agree)


def bench_count_matrix(rng: np.random.Generator) -> None:
    n_mentions, n_concepts = 50_000, 500
    concept_idx = rng.integers(0, n_concepts, size=n_mentions).astype(np.int64)
    day_idx = rng.integers(0, 31, size=n_mentions).astype(np.int64)

    np_time = _time(K._np_count_matrix, concept_idx, day_idx, n_concepts, 31)
    nb_time = None
    agree = ""
    if K.USING_NUMBA:
        nb_time = _time(K._nb_count_matrix, concept_idx, day_idx, n_concepts, 31)
        a = K._np_count_matrix(concept_idx, day_idx, n_concepts, 31)
        b = K._nb_count_matrix(concept_idx, day_idx, n_concepts, 31)
        agree = "exact" if np.array_equal(a, b) else "MISMATCH"
    _report("count_matrix", np_time, nb_time, agree)


def bench_node_split_counts(rng: np.random.Generator, n_rows: int, tag: str) -> None:
    n_feats = 30
    X = rng.integers(0, 2, size=(n_rows, n_feats)).astype(np.uint8)
    y = rng.integers(0, 2, size=n_rows).astype(np.uint8)
    idx = np.arange(n_rows, dtype=np.int64)
    feats = np.arange(n_feats, dtype=np.int64)

    np_time = _time(K._np_node_split_counts, X, y, idx, feats)
    nb_time = None
    agree = ""
    if K.USING_NUMBA:
        nb_time = _time(K._nb_node_split_counts, X, y, idx, feats)
        a = K._np_node_split_counts(X, y, idx, feats)
        b = K._nb_node_split_counts(X, y, idx, feats)
        agree = "exact" if np.array_equal(a, b) else "MISMATCH"
    _report(f"node_split_counts {tag}", np_time, nb_time, agree)


def bench_split_gains(rng: np.random.Generator) -> None:
    counts = rng.integers(0, 200, size=(512, 4)).astype(np.int64)

    np_time = _time(K._np_split_gains, counts)
    nb_time = None
    agree = ""
    if K.USING_NUMBA:
        nb_time = _time(K._nb_split_gains, counts)
        a = K._np_split_gains(counts)
        b = K._nb_split_gains(counts)
        diff = float(np.max(np.abs(a - b))) if len(a) else 0.0
        agree = f"max diff {diff:.2e}"
    _report("split_gains", np_time, nb_time, agree)


def main() -> None:
    rng = np.random.default_rng(12345)
    print(f"numba active: {K.USING_NUMBA}")
    if K.USING_NUMBA:
        K.warmup()
    print()
    bench_presence_matrix(rng)
    bench_count_matrix(rng)
    bench_node_split_counts(rng, 1_200, "(cohort)")
    bench_node_split_counts(rng, 64, "(node)")
    bench_split_gains(rng)


if __name__ == "__main__":
    main()
