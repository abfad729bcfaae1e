"""Chunked numpy Monte Carlo kernel.

Mirrors the compiled kernel operation for operation: the same splitmix64
draw stream, the same binary-search table lookup, the same truncating
offset arithmetic. Both kernels therefore return bit-identical integer
outputs for a given seed; everything downstream of the integers lives in
simulate.py and is shared.
"""

from __future__ import annotations

import numpy as np

_U = np.uint64
_GAMMA = _U(0x9E3779B97F4A7C15)
_INV53 = 2.0**-53


def _mix_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


def _unit_vec(z: np.ndarray) -> np.ndarray:
    return (z >> _U(11)).astype(np.float64) * _INV53


def _draw_vec(u, cum, bstart, blen, bpms, lo, hi):
    """Vectorized table draw: block via binary search, offset within it."""
    j = lo + np.searchsorted(cum[lo:hi], u, side="right")
    np.minimum(j, hi - 1, out=j)
    prev = np.where(j > lo, cum[np.maximum(j - 1, lo)], 0.0)
    off = ((u - prev) / bpms[j]).astype(np.int64)
    np.clip(off, 0, blen[j] - 1, out=off)
    return bstart[j] + off


def run_trials(
    seed: int,
    n: int,
    trials: int,
    cum,
    bstart,
    blen,
    bpms,
    cptr,
    icum,
    ibstart,
    iblen,
    ibpms,
    class_of,
    block_of,
    n_blocks: int,
    block_sizes,
    chunk: int | None = None,
):
    """Sample `trials` length-n paths; count singletons and unseen states.

    Returns (phi1[trials], unseen[trials, n_blocks]), both int64. Results
    do not depend on `chunk`, which only caps the path-history buffer.
    """
    phi1 = np.zeros(trials, dtype=np.int64)
    unseen = np.empty((trials, n_blocks), dtype=np.int64)
    if chunk is None:
        chunk = max(1, min(trials, (1 << 21) // max(n, 1)))
    n_classes = len(cptr) - 1
    for lo_t in range(0, trials, chunk):
        hi_t = min(trials, lo_t + chunk)
        t_ids = np.arange(lo_t + 1, hi_t + 1, dtype=np.uint64)
        s = _mix_vec(_U(seed) + t_ids * _GAMMA)
        seq = np.empty((hi_t - lo_t, n), dtype=np.int64)
        s = s + _GAMMA
        state = _draw_vec(_unit_vec(_mix_vec(s)), icum, ibstart, iblen, ibpms, 0, len(icum))
        seq[:, 0] = state
        for i in range(1, n):
            s += _GAMMA
            u = _unit_vec(_mix_vec(s))
            if n_classes == 1:
                state = _draw_vec(u, cum, bstart, blen, bpms, int(cptr[0]), int(cptr[1]))
            else:
                cls = class_of[state]
                nxt = np.empty_like(state)
                for c in np.unique(cls):
                    m = cls == c
                    nxt[m] = _draw_vec(
                        u[m], cum, bstart, blen, bpms, int(cptr[c]), int(cptr[c + 1])
                    )
                state = nxt
            seq[:, i] = state
        for t in range(hi_t - lo_t):
            uniq, counts = np.unique(seq[t], return_counts=True)
            phi1[lo_t + t] = int((counts == 1).sum())
            blocks = block_of[uniq]
            seen = np.bincount(blocks[blocks >= 0], minlength=n_blocks)
            unseen[lo_t + t] = block_sizes - seen
    return phi1, unseen
