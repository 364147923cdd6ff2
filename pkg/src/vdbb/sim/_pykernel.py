"""Pure numpy array kernel: explicit register pipeline.

Activation tiles shift right one TPE per cycle and weight slots shift down
one TPE per cycle; each TPE computes on whatever its registers hold. The
compiled kernel indexes the same schedule directly, so agreement between
the two backends also checks the skew bookkeeping.
"""

from __future__ import annotations

import numpy as np

from .counters import COUNTER_NAMES

_IDX = {name: i for i, name in enumerate(COUNTER_NAMES)}


def run(act, wval, widx, wpad, a, b, c, m, n, per_cycle, occ, tm_count, tn_count,
        gating, has_mask, trace=None):
    kblocks = wval.shape[0]
    pass_len = kblocks * occ
    total_steps = tm_count * tn_count * pass_len
    out = np.zeros((act.shape[0], wval.shape[2]), dtype=np.int64)
    cnt = np.zeros(len(COUNTER_NAMES), dtype=np.int64)

    act_reg = np.zeros((m, n, a, b), dtype=np.int64)
    act_tag = np.full((m, n), -1, dtype=np.int64)
    w_val = np.zeros((m, n, per_cycle, c), dtype=np.int64)
    w_idx = np.zeros((m, n, per_cycle, c), dtype=np.int64)
    w_pad = np.zeros((m, n, per_cycle, c), dtype=bool)
    w_tag = np.full((m, n), -1, dtype=np.int64)
    acc = np.zeros((m, n, a, c), dtype=np.int64)
    rows_i = np.arange(m)
    cols_j = np.arange(n)

    for t in range(total_steps + m + n - 2):
        cnt[_IDX["cycles_run"]] += 1
        # shift registers one TPE along their flow direction
        act_reg[:, 1:] = act_reg[:, :-1].copy()
        act_tag[:, 1:] = act_tag[:, :-1].copy()
        w_val[1:] = w_val[:-1].copy()
        w_idx[1:] = w_idx[:-1].copy()
        w_pad[1:] = w_pad[:-1].copy()
        w_tag[1:] = w_tag[:-1].copy()

        # left edge: row i sees step t - i
        for i in rows_i:
            u = t - i
            if not 0 <= u < total_steps:
                act_tag[i, 0] = -1
                continue
            p, rem = divmod(u, pass_len)
            kb, r = divmod(rem, occ)
            row0 = ((p // tn_count) * m + i) * a
            act_reg[i, 0] = act[row0 : row0 + a, kb * b : (kb + 1) * b]
            act_tag[i, 0] = u
            if r == 0:
                cnt[_IDX["edge_act"]] += a * b
        # top edge: column j sees step t - j
        for j in cols_j:
            u = t - j
            if not 0 <= u < total_steps:
                w_tag[0, j] = -1
                continue
            p, rem = divmod(u, pass_len)
            kb, r = divmod(rem, occ)
            col0 = ((p % tn_count) * n + j) * c
            sl = slice(r * per_cycle, (r + 1) * per_cycle)
            w_val[0, j] = wval[kb, sl, col0 : col0 + c]
            w_idx[0, j] = widx[kb, sl, col0 : col0 + c]
            w_pad[0, j] = wpad[kb, sl, col0 : col0 + c]
            w_tag[0, j] = u
            cnt[_IDX["edge_wt"]] += per_cycle * c
            if r == 0 and has_mask:
                cnt[_IDX["edge_mask_bits"]] += b * c

        valid = act_tag >= 0
        if not valid.any():
            continue
        if not np.array_equal(act_tag[valid], w_tag[valid]) or not (w_tag[valid] >= 0).all():
            raise AssertionError(f"operand skew mismatch at cycle {t}")

        steps = np.where(valid, act_tag, 0)
        rem = steps % pass_len
        r = rem % occ
        nvalid = int(valid.sum())
        new_block = valid & (r == 0)
        nblk = int(new_block.sum())
        cnt[_IDX["blocks"]] += nblk
        cnt[_IDX["tpe_act"]] += nblk * a * b
        cnt[_IDX["tpe_wt"]] += nvalid * per_cycle * c
        if has_mask:
            cnt[_IDX["tpe_mask_bits"]] += nblk * b * c

        # mux: x[i, j, a, q, c] = act_reg[i, j, a, w_idx[i, j, q, c]]
        sel = np.broadcast_to(w_idx.reshape(m, n, 1, per_cycle * c), (m, n, a, per_cycle * c))
        x = np.take_along_axis(act_reg, sel, axis=3).reshape(m, n, a, per_cycle, c)
        prod = x * w_val[:, :, None, :, :]
        acc += np.where(valid[:, :, None, None], prod.sum(axis=3), 0)

        lanes = valid[:, :, None, None, None]
        total = nvalid * a * per_cycle * c
        if gating:
            pad = np.broadcast_to(w_pad[:, :, None, :, :], x.shape) & lanes
            zero = (x == 0) & ~pad & lanes
            npad = int(pad.sum())
            nzero = int(zero.sum())
            cnt[_IDX["mac_gated_pad"]] += npad
            cnt[_IDX["mac_gated_act"]] += nzero
            cnt[_IDX["mac_active"]] += total - npad - nzero
        else:
            cnt[_IDX["mac_active"]] += total

        done = valid & (rem == pass_len - 1)
        for i, j in zip(*np.nonzero(done)):
            p = steps[i, j] // pass_len
            row0 = ((p // tn_count) * m + i) * a
            col0 = ((p % tn_count) * n + j) * c
            out[row0 : row0 + a, col0 : col0 + c] = acc[i, j]
            acc[i, j] = 0
            cnt[_IDX["acc_writes"]] += a * c

        if trace is not None:
            for i, j in zip(*np.nonzero(valid)):
                if new_block[i, j]:
                    trace.append((t, int(i), int(j), "act_load"))
                trace.append((t, int(i), int(j), "mac"))
                if done[i, j]:
                    trace.append((t, int(i), int(j), "acc_write"))
    return out, cnt
