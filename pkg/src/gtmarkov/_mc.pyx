# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo kernel.

Operation-for-operation mirror of the numpy fallback (_mc_py): the same
splitmix64 draw stream, the same right-biased binary search over the
cumulative block tables, the same truncating offset arithmetic. Integer
outputs are bit-identical across the two kernels.
"""

import numpy as np


cdef unsigned long long _GAMMA = 0x9E3779B97F4A7C15ULL
cdef double _INV53 = 1.0 / 9007199254740992.0


cdef inline unsigned long long _mix(unsigned long long z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _unit(unsigned long long z) nogil:
    return <double> (z >> 11) * _INV53


cdef inline long long _draw(double u, const double[::1] cum,
                            const long long[::1] bstart,
                            const long long[::1] blen,
                            const double[::1] bpms,
                            long long lo, long long hi) nogil:
    cdef long long left = lo, right = hi, mid, j, off
    cdef double prev
    while left < right:
        mid = (left + right) >> 1
        if u >= cum[mid]:
            left = mid + 1
        else:
            right = mid
    j = left
    if j == hi:
        j = hi - 1
    prev = cum[j - 1] if j > lo else 0.0
    off = <long long> ((u - prev) / bpms[j])
    if off >= blen[j]:
        off = blen[j] - 1
    if off < 0:
        off = 0
    return bstart[j] + off


def run_trials(seed, long long n, long long trials,
               const double[::1] cum, const long long[::1] bstart,
               const long long[::1] blen, const double[::1] bpms,
               const long long[::1] cptr,
               const double[::1] icum, const long long[::1] ibstart,
               const long long[::1] iblen, const double[::1] ibpms,
               const long long[::1] class_of,
               const long long[::1] block_of, long long n_blocks,
               const long long[::1] block_sizes):
    """Sample `trials` length-n paths; count singletons and unseen states.

    Returns (phi1[trials], unseen[trials, n_blocks]), both int64.
    """
    cdef unsigned long long master = <unsigned long long> seed
    cdef long long K = class_of.shape[0]
    phi1_arr = np.zeros(trials, dtype=np.int64)
    unseen_arr = np.empty((trials, n_blocks), dtype=np.int64)
    occ_arr = np.zeros(K, dtype=np.int64)
    touched_arr = np.empty(n, dtype=np.int64)
    seen_arr = np.zeros(n_blocks, dtype=np.int64)
    cdef long long[::1] phi1 = phi1_arr
    cdef long long[:, ::1] unseen = unseen_arr
    cdef long long[::1] occ = occ_arr
    cdef long long[::1] touched = touched_arr
    cdef long long[::1] seen = seen_arr
    cdef unsigned long long s
    cdef long long t, i, st, cls, ntouch, b, count
    cdef double u
    with nogil:
        for t in range(trials):
            s = _mix(master + (<unsigned long long> (t + 1)) * _GAMMA)
            ntouch = 0
            s = s + _GAMMA
            u = _unit(_mix(s))
            st = _draw(u, icum, ibstart, iblen, ibpms, 0, icum.shape[0])
            if occ[st] == 0:
                touched[ntouch] = st
                ntouch += 1
            occ[st] += 1
            for i in range(n - 1):
                cls = class_of[st]
                s = s + _GAMMA
                u = _unit(_mix(s))
                st = _draw(u, cum, bstart, blen, bpms, cptr[cls], cptr[cls + 1])
                if occ[st] == 0:
                    touched[ntouch] = st
                    ntouch += 1
                occ[st] += 1
            count = 0
            for i in range(ntouch):
                st = touched[i]
                if occ[st] == 1:
                    count += 1
                b = block_of[st]
                if b >= 0:
                    seen[b] += 1
                occ[st] = 0
            phi1[t] = count
            for b in range(n_blocks):
                unseen[t, b] = block_sizes[b] - seen[b]
                seen[b] = 0
    return phi1_arr, unseen_arr
