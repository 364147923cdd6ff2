# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled array kernel: indexes the skewed schedule directly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int8_t, int64_t, uint8_t

cnp.import_array()

# indices into the counter vector; keep in step with counters.COUNTER_NAMES
cdef enum:
    CYC = 0
    MAC_ACT = 1
    MAC_GACT = 2
    MAC_GPAD = 3
    EDGE_ACT = 4
    EDGE_WT = 5
    EDGE_MASK = 6
    TPE_ACT = 7
    TPE_WT = 8
    TPE_MASK = 9
    ACC_W = 10
    BLOCKS = 11
    NCOUNT = 12


def run(const int8_t[:, ::1] act, const int8_t[:, :, ::1] wval,
        const uint8_t[:, :, ::1] widx, const uint8_t[:, :, ::1] wpad,
        int a, int b, int c, int m, int n, int per_cycle, int occ,
        int tm_count, int tn_count, bint gating, bint has_mask, trace=None):
    if trace is not None:
        raise ValueError("tracing is only available in the python backend")
    cdef int kblocks = wval.shape[0]
    cdef int64_t pass_len = <int64_t>kblocks * occ
    cdef int64_t total_steps = <int64_t>tm_count * tn_count * pass_len
    cdef int64_t ncycles = total_steps + m + n - 2
    out_arr = np.zeros((act.shape[0], wval.shape[2]), dtype=np.int64)
    acc_arr = np.zeros((m, n, a, c), dtype=np.int64)
    cnt_arr = np.zeros(NCOUNT, dtype=np.int64)
    cdef int64_t[:, ::1] out = out_arr
    cdef int64_t[:, :, :, ::1] acc = acc_arr
    cdef int64_t[::1] cnt = cnt_arr

    cdef int64_t t, u, p, rem, x, w
    cdef int i, j, kb, r, q, s, ci, ai, row0, col0, col, k
    cdef int64_t active = 0, gact = 0, gpad = 0

    for t in range(ncycles):
        for i in range(m):
            for j in range(n):
                u = t - i - j
                if u < 0 or u >= total_steps:
                    continue
                p = u // pass_len
                rem = u - p * pass_len
                kb = rem // occ
                r = rem - kb * occ
                row0 = ((p // tn_count) * m + i) * a
                col0 = ((p % tn_count) * n + j) * c
                if r == 0:
                    cnt[BLOCKS] += 1
                    cnt[TPE_ACT] += a * b
                    if has_mask:
                        cnt[TPE_MASK] += b * c
                    if j == 0:
                        cnt[EDGE_ACT] += a * b
                    if i == 0 and has_mask:
                        cnt[EDGE_MASK] += b * c
                cnt[TPE_WT] += per_cycle * c
                if i == 0:
                    cnt[EDGE_WT] += per_cycle * c
                for q in range(per_cycle):
                    s = r * per_cycle + q
                    for ci in range(c):
                        col = col0 + ci
                        w = wval[kb, s, col]
                        k = kb * b + widx[kb, s, col]
                        for ai in range(a):
                            x = act[row0 + ai, k]
                            acc[i, j, ai, ci] += x * w
                            if gating:
                                if wpad[kb, s, col]:
                                    gpad += 1
                                elif x == 0:
                                    gact += 1
                                else:
                                    active += 1
                            else:
                                active += 1
                if rem == pass_len - 1:
                    for ai in range(a):
                        for ci in range(c):
                            out[row0 + ai, col0 + ci] = acc[i, j, ai, ci]
                            acc[i, j, ai, ci] = 0
                    cnt[ACC_W] += a * c
    cnt[CYC] = ncycles
    cnt[MAC_ACT] = active
    cnt[MAC_GACT] = gact
    cnt[MAC_GPAD] = gpad
    return out_arr, cnt_arr
