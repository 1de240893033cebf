"""JIT kernels for collision search on explicit abelian groups of order < 2^62.

These mirror ``collision_search._solve_reference`` step for step (same random
stream, same hash rounds, same lockstep schedule), so both paths return
identical reports for identical inputs.  Elements are int64 coordinate rows;
the store is keyed by the mixed-radix index of the node.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange, types
from numba.typed import Dict

U64 = np.uint64
_GAMMA = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_FOLD_MUL = U64(0x9E3779B97F4A7C15)
_DIST_SALT = U64(0xD6E8FEB86659FD93)
_MASK32 = U64(0xFFFFFFFF)

STATUS_SOLVED = 0
STATUS_BUDGET = 1


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def _wang(k):
    k = (~k) + (k << U64(18))
    k = k ^ (k >> U64(31))
    k = k * U64(21)
    k = k ^ (k >> U64(11))
    k = k + (k << U64(6))
    k = k ^ (k >> U64(22))
    return k & _MASK32


@njit(cache=True)
def _bitlen(x):
    n = 0
    while x > 0:
        x >>= 1
        n += 1
    return n


@njit(cache=True)
def _randbelow(state, n):
    """Returns (value, new_state); same rejection rule as SplitMix64.randbelow."""
    if n == 1:
        return 0, state
    k = _bitlen(n - 1)
    mask = (U64(1) << U64(k)) - U64(1)
    while True:
        state = state + _GAMMA
        x = _mix(state) & mask
        if x < U64(n):
            return np.int64(x), state


@njit(cache=True)
def _node_key(z, widths, rank):
    acc = U64(0)
    cur = U64(0)
    pos = 0
    for i in range(rank):
        v = U64(z[i])
        for byte in range(widths[i]):
            cur |= ((v >> U64(8 * byte)) & U64(0xFF)) << U64(8 * pos)
            pos += 1
            if pos == 8:
                acc = (acc ^ cur) * _FOLD_MUL
                cur = U64(0)
                pos = 0
    if pos > 0:
        acc = (acc ^ cur) * _FOLD_MUL
    return acc


@njit(cache=True)
def _index(z, moduli, rank):
    idx = np.int64(0)
    scale = np.int64(1)
    for i in range(rank):
        idx += z[i] * scale
        scale *= moduli[i]
    return idx


@njit(cache=True)
def _spawn(zs, accs, sides, counts, w, side, x_side, moduli, rank, master, counter):
    state = _mix(U64(master) + U64(counter + 1) * _GAMMA)
    for i in range(rank):
        h, state = _randbelow(state, moduli[i])
        accs[w, i] = h
        v = h + x_side[i]
        if v >= moduli[i]:
            v -= moduli[i]
        zs[w, i] = v
    sides[w] = side
    counts[w] = 0


@njit(cache=True, nogil=True)
def solve_kernel(moduli, widths, rank, gens, thresholds, modulus, cmax, x0, x1, t, master,
                 max_nodes, out_g, stats):
    """Algorithm A with 2t lockstep walkers.

    stats (int64[6]) receives alpha, walks, stored, collisions, good, abandoned.
    Returns a status code.
    """
    nw = 2 * t
    zs = np.zeros((nw, rank), dtype=np.int64)
    accs = np.zeros((nw, rank), dtype=np.int64)
    sides = np.zeros(nw, dtype=np.int64)
    counts = np.zeros(nw, dtype=np.int64)
    r = gens.shape[0]
    counter = 0
    for i in range(t):
        _spawn(zs, accs, sides, counts, 2 * i, 0, x0, moduli, rank, master, counter)
        counter += 1
        _spawn(zs, accs, sides, counts, 2 * i + 1, 1, x1, moduli, rank, master, counter)
        counter += 1
    alpha = np.int64(nw)

    store = Dict.empty(key_type=types.int64, value_type=types.int64)
    cap = 256
    st_acc = np.zeros((cap, rank), dtype=np.int64)
    st_side = np.zeros(cap, dtype=np.int64)
    n_stored = 0
    n_coll = 0
    n_good = 0
    n_aband = 0
    umod = U64(modulus)

    while True:
        for w in range(nw):
            key = _node_key(zs[w], widths, rank)
            if _wang(key ^ _DIST_SALT) % umod == U64(0):
                idx = _index(zs[w], moduli, rank)
                side = sides[w]
                if idx in store:
                    slot = store[idx]
                    n_coll += 1
                    if st_side[slot] != side:
                        n_good += 1
                        # g = a^{1-2s} b^{2s-1}: incoming a, stored b
                        ok = True
                        for i in range(rank):
                            if side == 0:
                                g = accs[w, i] - st_acc[slot, i]
                            else:
                                g = st_acc[slot, i] - accs[w, i]
                            if g < 0:
                                g += moduli[i]
                            out_g[i] = g
                            v = g + x0[i]
                            if v >= moduli[i]:
                                v -= moduli[i]
                            if v != x1[i]:
                                ok = False
                        if ok:
                            stats[0] = alpha
                            stats[1] = counter
                            stats[2] = n_stored
                            stats[3] = n_coll
                            stats[4] = n_good
                            stats[5] = n_aband
                            return STATUS_SOLVED
                else:
                    if n_stored == cap:
                        cap *= 2
                        grown = np.zeros((cap, rank), dtype=np.int64)
                        grown[:n_stored] = st_acc[:n_stored]
                        st_acc = grown
                        grown_side = np.zeros(cap, dtype=np.int64)
                        grown_side[:n_stored] = st_side[:n_stored]
                        st_side = grown_side
                    for i in range(rank):
                        st_acc[n_stored, i] = accs[w, i]
                    st_side[n_stored] = side
                    store[idx] = n_stored
                    n_stored += 1
                if side == 0:
                    _spawn(zs, accs, sides, counts, w, 0, x0, moduli, rank, master, counter)
                else:
                    _spawn(zs, accs, sides, counts, w, 1, x1, moduli, rank, master, counter)
                counter += 1
                alpha += 1
            else:
                h = _wang(key)
                slot = 0
                while slot < r - 1 and h >= thresholds[slot]:
                    slot += 1
                for i in range(rank):
                    v = zs[w, i] + gens[slot, i]
                    if v >= moduli[i]:
                        v -= moduli[i]
                    zs[w, i] = v
                    v = accs[w, i] + gens[slot, i]
                    if v >= moduli[i]:
                        v -= moduli[i]
                    accs[w, i] = v
                counts[w] += 1
                alpha += 1
                if counts[w] > cmax:
                    n_aband += 1
                    if sides[w] == 0:
                        _spawn(zs, accs, sides, counts, w, 0, x0, moduli, rank, master, counter)
                    else:
                        _spawn(zs, accs, sides, counts, w, 1, x1, moduli, rank, master, counter)
                    counter += 1
                    alpha += 1
        if max_nodes > 0 and alpha > max_nodes:
            stats[0] = alpha
            stats[1] = counter
            stats[2] = n_stored
            stats[3] = n_coll
            stats[4] = n_good
            stats[5] = n_aband
            return STATUS_BUDGET


@njit(cache=True, parallel=True)
def solve_batch_kernel(moduli, widths, ranks, gens, thresholds, moduli_d, cmaxes, x0s, x1s, t,
                       seeds, max_nodes, out_g, stats, status):
    """Independent solves, one per row, each with its own node budget; results do not depend on scheduling."""
    k = moduli.shape[0]
    for j in prange(k):
        rank = ranks[j]
        status[j] = solve_kernel(moduli[j, :rank], widths[j, :rank], rank, gens[j, :, :rank],
                                 thresholds, moduli_d[j], cmaxes[j], x0s[j, :rank], x1s[j, :rank],
                                 t, seeds[j], max_nodes[j], out_g[j, :rank], stats[j])
