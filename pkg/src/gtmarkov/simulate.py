"""Seeded Monte Carlo estimation of the missing-mass estimator's error.

Sampling walks the chain through per-class cumulative block tables
(O(log #blocks) per step) driven by a splitmix64 stream. Trial i of a run
seeded with s uses the stream seed mix_seed(s, i), so any single trial can
be replayed in isolation with sample_chain. Two interchangeable kernels
produce bit-identical integer outputs: a compiled one (gtmarkov._mc,
preferred) and a chunked numpy fallback (gtmarkov._mc_py). Selection
happens at import time; set GTMARKOV_BACKEND=cython|python to force one.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .chains import Distribution, RowClassChain

_MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def _load_kernel():
    forced = os.environ.get("GTMARKOV_BACKEND", "").strip().lower()
    if forced not in ("", "cython", "python"):
        raise ValueError(
            f"GTMARKOV_BACKEND must be 'cython' or 'python', got {forced!r}"
        )
    if forced == "python":
        from . import _mc_py

        return _mc_py, "python"
    try:
        from . import _mc

        return _mc, "cython"
    except ImportError:
        if forced == "cython":
            raise
        from . import _mc_py

        return _mc_py, "python"


_kernel, _BACKEND = _load_kernel()


def active_backend() -> str:
    """Name of the Monte Carlo kernel in use: 'cython' or 'python'."""
    return _BACKEND


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit word."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix_seed(seed: int, trial: int) -> int:
    """Stream seed of one trial, so a run's trial i can be replayed alone."""
    return mix64((seed + (trial + 1) * GAMMA) & _MASK)


@dataclass(frozen=True, eq=False)
class _Tables:
    """Flattened sampling tables: one cumulative block table per row class
    (CSR layout over cptr), one for the initial distribution, and the
    nonzero-mass blocks of pi for unseen-state accounting."""

    cum: np.ndarray
    bstart: np.ndarray
    blen: np.ndarray
    bpms: np.ndarray
    cptr: np.ndarray
    icum: np.ndarray
    ibstart: np.ndarray
    iblen: np.ndarray
    ibpms: np.ndarray
    class_of: np.ndarray
    block_of: np.ndarray
    block_sizes: np.ndarray
    block_pms: np.ndarray


def _table_of(dist: Distribution):
    """Cumulative mass over a distribution's positive blocks."""
    blocks = [b for b in dist.blocks if b[2] > 0.0]
    starts = np.array([b[0] for b in blocks], dtype=np.int64)
    lens = np.array([b[1] for b in blocks], dtype=np.int64)
    pms = np.array([b[2] for b in blocks], dtype=np.float64)
    return np.cumsum(lens * pms), starts, lens, pms


def _build_tables(chain: RowClassChain, pi: Distribution) -> _Tables:
    if not isinstance(pi, Distribution) or pi.K != chain.K:
        raise ValueError("pi must be a Distribution over the chain's states")
    cums, starts, lens, pms = [], [], [], []
    cptr = [0]
    for dist in chain.row_classes:
        c, s, l, p = _table_of(dist)
        cums.append(c)
        starts.append(s)
        lens.append(l)
        pms.append(p)
        cptr.append(cptr[-1] + len(c))
    icum, ibstart, iblen, ibpms = _table_of(pi)
    block_of = np.full(chain.K, -1, dtype=np.int64)
    for i, (start, length, _) in enumerate(
        b for b in pi.blocks if b[2] > 0.0
    ):
        block_of[start : start + length] = i
    return _Tables(
        cum=np.concatenate(cums),
        bstart=np.concatenate(starts),
        blen=np.concatenate(lens),
        bpms=np.concatenate(pms),
        cptr=np.array(cptr, dtype=np.int64),
        icum=icum,
        ibstart=ibstart,
        iblen=iblen,
        ibpms=ibpms,
        class_of=chain.assignment,
        block_of=block_of,
        block_sizes=iblen.copy(),
        block_pms=ibpms.copy(),
    )


@dataclass(frozen=True, eq=False)
class SampleRun:
    """One sampled path with its occupancy statistics.

    occupancy maps each visited state to its count; phi1 is the number of
    states visited exactly once.
    """

    seq: np.ndarray
    occupancy: dict
    phi1: int

    def phi(self, count: int) -> int:
        """Number of states visited exactly `count` >= 1 times."""
        if count < 1:
            raise ValueError("count must be >= 1; unseen states live in pi")
        return sum(1 for c in self.occupancy.values() if c == count)


def _draw_scalar(u, cum, bstart, blen, bpms, lo, hi):
    j = lo + int(np.searchsorted(cum[lo:hi], u, side="right"))
    if j == hi:
        j = hi - 1
    prev = float(cum[j - 1]) if j > lo else 0.0
    off = int((u - prev) / float(bpms[j]))
    off = min(max(off, 0), int(blen[j]) - 1)
    return int(bstart[j]) + off


def sample_chain(chain: RowClassChain, pi: Distribution, n: int, seed: int) -> SampleRun:
    """Sample X_1 ~ pi, then n - 1 transitions by row class.

    The stream seed is used directly: sample_chain(chain, pi, n,
    mix_seed(s, i)) replays trial i of estimate_bias_mse(..., seed=s).
    The sequence depends only on the arguments, never on thread count or
    the active kernel.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    t = _build_tables(chain, pi)
    seq = np.empty(n, dtype=np.int64)
    s = seed & _MASK
    s = (s + GAMMA) & _MASK
    state = _draw_scalar(
        (mix64(s) >> 11) * 2.0**-53, t.icum, t.ibstart, t.iblen, t.ibpms, 0, len(t.icum)
    )
    seq[0] = state
    for i in range(1, n):
        c = int(t.class_of[state])
        s = (s + GAMMA) & _MASK
        state = _draw_scalar(
            (mix64(s) >> 11) * 2.0**-53,
            t.cum,
            t.bstart,
            t.blen,
            t.bpms,
            int(t.cptr[c]),
            int(t.cptr[c + 1]),
        )
        seq[i] = state
    uniq, counts = np.unique(seq, return_counts=True)
    occupancy = {int(x): int(c) for x, c in zip(uniq, counts)}
    return SampleRun(seq=seq, occupancy=occupancy, phi1=int((counts == 1).sum()))


def good_turing(run: SampleRun, n: int | None = None) -> float:
    """Fraction of singleton states, phi_1 / n."""
    if n is None:
        n = len(run.seq)
    if n < 1:
        raise ValueError("n must be >= 1")
    return run.phi1 / n


def _mass_sum(products: np.ndarray) -> np.ndarray:
    """Sum per-block mass contributions smallest-first along the last axis."""
    products = np.sort(products, axis=-1)
    return products.sum(axis=-1)


def missing_mass(run: SampleRun, pi: Distribution) -> float:
    """Mass of pi on the states the run never visited."""
    if len(run.seq) and (pi.K <= int(run.seq.max())):
        raise ValueError("pi does not cover the run's states")
    unseen = []
    for start, length, mass in pi.blocks:
        if mass <= 0.0:
            continue
        seen = sum(1 for x in run.occupancy if start <= x < start + length)
        unseen.append((length - seen) * mass)
    if not unseen:
        return 0.0
    return float(_mass_sum(np.array(unseen, dtype=np.float64)))


@dataclass(frozen=True)
class SimResult:
    """Monte Carlo estimate of the estimator's mean error and MSE.

    mean_error estimates E[G0 - M0]; mse is the plain mean of squared
    errors (no variance correction); stderrs are sample std / sqrt(trials).
    """

    n: int
    trials: int
    seed: int
    mean_error: float
    mse: float
    stderr_me: float
    stderr_mse: float


def estimate_bias_mse(
    chain: RowClassChain, pi: Distribution, n: int, trials: int, seed: int
) -> SimResult:
    """Run seeded trials of length n and aggregate the estimator's error.

    Trial i draws from the stream seeded with mix_seed(seed, i); the
    aggregation order is fixed, so the result is a pure function of
    (chain, pi, n, trials, seed) on either kernel.
    """
    if trials < 2:
        raise ValueError("need at least 2 trials")
    if n < 1:
        raise ValueError("n must be >= 1")
    t = _build_tables(chain, pi)
    phi1, unseen = _kernel.run_trials(
        int(seed) & _MASK,
        int(n),
        int(trials),
        t.cum,
        t.bstart,
        t.blen,
        t.bpms,
        t.cptr,
        t.icum,
        t.ibstart,
        t.iblen,
        t.ibpms,
        t.class_of,
        t.block_of,
        len(t.block_sizes),
        t.block_sizes,
    )
    g0 = phi1.astype(np.float64) / float(n)
    m0 = _mass_sum(unseen.astype(np.float64) * t.block_pms)
    err = g0 - m0
    sq = err * err
    return SimResult(
        n=int(n),
        trials=int(trials),
        seed=int(seed) & _MASK,
        mean_error=float(err.mean()),
        mse=float(sq.mean()),
        stderr_me=float(err.std(ddof=1) / math.sqrt(trials)),
        stderr_mse=float(sq.std(ddof=1) / math.sqrt(trials)),
    )


def rate_fit(points) -> tuple[float, float, float]:
    """Least-squares fit of log(value) against log(n).

    Returns (slope, intercept, r2); needs at least 3 points, all positive.
    """
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a rate")
    ns = np.array([p[0] for p in pts], dtype=np.float64)
    vals = np.array([p[1] for p in pts], dtype=np.float64)
    if np.any(ns <= 0.0) or np.any(vals <= 0.0):
        raise ValueError("rate fits need positive n and values")
    res = stats.linregress(np.log(ns), np.log(vals))
    return float(res.slope), float(res.intercept), float(res.rvalue) ** 2
