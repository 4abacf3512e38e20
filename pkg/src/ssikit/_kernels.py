"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

The jitted path is the default. Set ``SSIKIT_NO_NUMBA=1`` (or any value other
than "0") before import to force the numpy fallback; the fallback also
engages automatically when numba is unavailable. Both paths are exercised by
the test suite and compared by ``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("SSIKIT_NO_NUMBA", "").strip()
_DISABLED = _flag not in ("", "0")

if not _DISABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _DISABLED = True

USING_NUMBA = not _DISABLED


# -- split statistics for decision-tree induction ---------------------------

def _np_node_split_counts(X: np.ndarray, y: np.ndarray, idx: np.ndarray,
                          feats: np.ndarray) -> np.ndarray:
    """counts[j, 2*v + c] = |{i in idx : X[i, feats[j]] == v and y[i] == c}|"""
    sub = X[idx][:, feats].astype(np.int64)
    ysub = y[idx].astype(np.int64)
    enc = sub * 2 + ysub[:, None]
    out = np.zeros((len(feats), 4), dtype=np.int64)
    for j in range(enc.shape[1]):
        out[j] = np.bincount(enc[:, j], minlength=4)
    return out


def _np_split_gains(counts: np.ndarray) -> np.ndarray:
    """Information gain per row of (v0&neg, v0&pos, v1&neg, v1&pos) counts."""
    c = counts.astype(np.float64)
    n0 = c[:, 0] + c[:, 1]
    n1 = c[:, 2] + c[:, 3]
    n = n0 + n1
    pos = c[:, 1] + c[:, 3]
    neg = c[:, 0] + c[:, 2]

    def _xlog2x(p: np.ndarray) -> np.ndarray:
        out = np.zeros_like(p)
        nz = p > 0
        out[nz] = p[nz] * np.log2(p[nz])
        return out

    def _ent(a: np.ndarray, b: np.ndarray, tot: np.ndarray) -> np.ndarray:
        safe = np.where(tot > 0, tot, 1.0)
        return -(_xlog2x(a / safe) + _xlog2x(b / safe))

    gain = _ent(pos, neg, n) - (n0 / np.where(n > 0, n, 1.0)) * _ent(
        c[:, 1], c[:, 0], n0
    ) - (n1 / np.where(n > 0, n, 1.0)) * _ent(c[:, 3], c[:, 2], n1)
    return np.where(n > 0, gain, 0.0)


def _np_presence_matrix(row_idx: np.ndarray, col_idx: np.ndarray,
                        n_rows: int, n_cols: int) -> np.ndarray:
    out = np.zeros((n_rows, n_cols), dtype=np.uint8)
    out[row_idx, col_idx] = 1
    return out


def _np_count_matrix(row_idx: np.ndarray, col_idx: np.ndarray,
                     n_rows: int, n_cols: int) -> np.ndarray:
    out = np.zeros((n_rows, n_cols), dtype=np.int64)
    np.add.at(out, (row_idx, col_idx), 1)
    return out


if USING_NUMBA:

    @njit(cache=True)
    def _nb_node_split_counts(X, y, idx, feats):
        out = np.zeros((feats.shape[0], 4), dtype=np.int64)
        for j in range(feats.shape[0]):
            f = feats[j]
            for k in range(idx.shape[0]):
                i = idx[k]
                out[j, 2 * X[i, f] + y[i]] += 1
        return out

    @njit(cache=True)
    def _nb_entropy2(a, b):
        n = a + b
        if n <= 0.0 or a <= 0.0 or b <= 0.0:
            return 0.0
        pa = a / n
        pb = b / n
        return -(pa * np.log2(pa) + pb * np.log2(pb))

    @njit(cache=True)
    def _nb_split_gains(counts):
        out = np.zeros(counts.shape[0], dtype=np.float64)
        for j in range(counts.shape[0]):
            a0 = float(counts[j, 0])
            p0 = float(counts[j, 1])
            a1 = float(counts[j, 2])
            p1 = float(counts[j, 3])
            n0 = a0 + p0
            n1 = a1 + p1
            n = n0 + n1
            if n <= 0.0:
                continue
            h_parent = _nb_entropy2(p0 + p1, a0 + a1)
            out[j] = h_parent - (n0 / n) * _nb_entropy2(p0, a0) \
                - (n1 / n) * _nb_entropy2(p1, a1)
        return out

    @njit(cache=True)
    def _nb_presence_matrix(row_idx, col_idx, n_rows, n_cols):
        out = np.zeros((n_rows, n_cols), dtype=np.uint8)
        for k in range(row_idx.shape[0]):
            out[row_idx[k], col_idx[k]] = 1
        return out

    @njit(cache=True)
    def _nb_count_matrix(row_idx, col_idx, n_rows, n_cols):
        out = np.zeros((n_rows, n_cols), dtype=np.int64)
        for k in range(row_idx.shape[0]):
            out[row_idx[k], col_idx[k]] += 1
        return out

    node_split_counts = _nb_node_split_counts
    split_gains = _nb_split_gains
    presence_matrix = _nb_presence_matrix
    count_matrix = _nb_count_matrix
else:
    node_split_counts = _np_node_split_counts
    split_gains = _np_split_gains
    presence_matrix = _np_presence_matrix
    count_matrix = _np_count_matrix


def warmup() -> None:
    """Trigger JIT compilation so timings exclude compile overhead."""
    X = np.zeros((2, 1), dtype=np.uint8)
    y = np.zeros(2, dtype=np.uint8)
    idx = np.arange(2, dtype=np.int64)
    feats = np.zeros(1, dtype=np.int64)
    split_gains(node_split_counts(X, y, idx, feats))
    presence_matrix(idx, feats.repeat(2), 2, 1)
    count_matrix(idx, feats.repeat(2), 2, 1)
