"""Compiled inner loops: sum tree, event loop, trajectory replay, canonical DP."""
import math

import numba
import numpy as np

# status codes returned by run_chunk
DONE = 0
NEED_UNIFORMS = 1
RECORD_FULL = 2
CAPACITY = 3
BROKEN = 4
MAX_EVENTS = 5


@numba.njit(cache=True)
def tree_build(tree, P, weights):
    tree[:] = 0.0
    for i in range(weights.size):
        tree[P + i] = weights[i]
    for p in range(P - 1, 0, -1):
        tree[p] = tree[2 * p] + tree[2 * p + 1]


@numba.njit(cache=True, inline="always")
def _tree_set(tree, P, i, w):
    p = P + i
    tree[p] = w
    p >>= 1
    while p >= 1:
        tree[p] = tree[2 * p] + tree[2 * p + 1]
        p >>= 1


@numba.njit(cache=True, inline="always")
def _tree_find(tree, P, r):
    p = 1
    while p < P:
        left = tree[2 * p]
        if (r < left and left > 0.0) or tree[2 * p + 1] <= 0.0:
            p = 2 * p
        else:
            r -= left
            p = 2 * p + 1
    return p - P


@numba.njit(cache=True)
def run_chunk(occ, tree, P, g, nbr, scale, clock, t_end, unif, rec_src, rec_dst, rec_t,
              rec_pos, record, audit_total, max_events):
    """Advance the process until ``t_end`` or until a buffer runs out.

    ``clock = [t, t_next]``; ``t_next`` is NaN when no waiting time is pending.
    Returns ``(status, uniforms_used, events_done)``.
    """
    n2d = nbr.shape[1]
    kmax = g.size - 1
    used = 0
    events = 0
    nu = unif.size
    while True:
        if math.isnan(clock[1]):
            if used >= nu:
                return NEED_UNIFORMS, used, events
            rs = tree[1]
            u = unif[used]
            used += 1
            if rs <= 0.0:
                clock[1] = np.inf
            else:
                clock[1] = clock[0] - math.log1p(-u) / (scale * rs)
        if clock[1] > t_end or math.isinf(clock[1]):
            clock[0] = t_end
            return DONE, used, events
        if events >= max_events:
            return MAX_EVENTS, used, events
        if used + 2 > nu:
            return NEED_UNIFORMS, used, events
        if record and rec_pos[0] >= rec_src.size:
            return RECORD_FULL, used, events
        x = _tree_find(tree, P, unif[used] * tree[1])
        k = int(unif[used + 1] * n2d)
        if k >= n2d:
            k = n2d - 1
        y = nbr[x, k]
        if occ[x] <= 0:
            return BROKEN, used, events
        if occ[y] >= kmax:
            return CAPACITY, used, events
        used += 2
        occ[x] -= 1
        occ[y] += 1
        _tree_set(tree, P, x, g[occ[x]])
        _tree_set(tree, P, y, g[occ[y]])
        clock[0] = clock[1]
        clock[1] = np.nan
        events += 1
        if record:
            j = rec_pos[0]
            rec_src[j] = x
            rec_dst[j] = y
            rec_t[j] = clock[0]
            rec_pos[0] = j + 1
        if audit_total >= 0:
            s = 0
            for i in range(occ.size):
                s += occ[i]
            if s != audit_total:
                return BROKEN, used, events


@numba.njit(cache=True, inline="always")
def _flush(i, I, val, lastC, Cnow):
    I[i] += val[i] * (Cnow - lastC[i])
    lastC[i] = Cnow


@numba.njit(cache=True)
def _block_value(i, S, B, wvol, F, hasF):
    v = B[i] / wvol
    if hasF:
        v += F[S[i]]
    return v


@numba.njit(cache=True)
def _rebuild_blocks(occ, win, psi, S, B):
    for i in range(win.shape[0]):
        s = 0
        b = 0.0
        for m in range(win.shape[1]):
            v = occ[win[i, m]]
            s += v
            b += psi[v]
        S[i] = s
        B[i] = b


@numba.njit(cache=True)
def replay(occ0, src, dst, tl_kind, tl_da, win, psi, F, wvol, want_snaps, want_integrals,
           rebuild_every, snaps, out_I):
    """Replay recorded events and integrate block observables.

    The timeline merges events (``tl_kind >= 0``: event index) and sample
    points (``tl_kind < 0``: sample ``-kind-1``) in time order; ``tl_da`` is
    the weighted length ``a(mid) * (t_k - t_{k-1})`` of the interval ending
    at each point. Each site carries ``val = B/|window| + F[S]`` where ``S``
    and ``B`` are the window sums of occupancies and of ``psi``; its time
    integral is accumulated lazily.
    """
    n = occ0.size
    occ = occ0.copy()
    S = np.zeros(n, dtype=np.int64)
    B = np.zeros(n)
    val = np.zeros(n)
    I = np.zeros(n)
    lastC = np.zeros(n)
    hasF = F.size > 0
    if want_integrals:
        _rebuild_blocks(occ, win, psi, S, B)
        for i in range(n):
            val[i] = _block_value(i, S, B, wvol, F, hasF)
    Cnow = 0.0
    since = 0
    for k in range(tl_kind.size):
        Cnow += tl_da[k]
        kind = tl_kind[k]
        if kind < 0:
            si = -kind - 1
            if want_snaps:
                snaps[si, :] = occ
            if want_integrals:
                for i in range(n):
                    _flush(i, I, val, lastC, Cnow)
                out_I[si, :] = I
            continue
        x = src[kind]
        y = dst[kind]
        if want_integrals:
            for m in range(win.shape[1]):
                w = win[x, m]
                _flush(w, I, val, lastC, Cnow)
                S[w] -= 1
                B[w] += psi[occ[x] - 1] - psi[occ[x]]
            for m in range(win.shape[1]):
                w = win[y, m]
                _flush(w, I, val, lastC, Cnow)
                S[w] += 1
                B[w] += psi[occ[y] + 1] - psi[occ[y]]
        occ[x] -= 1
        occ[y] += 1
        if want_integrals:
            since += 1
            if since >= rebuild_every:
                for i in range(n):
                    _flush(i, I, val, lastC, Cnow)
                _rebuild_blocks(occ, win, psi, S, B)
                for i in range(n):
                    val[i] = _block_value(i, S, B, wvol, F, hasF)
                since = 0
            else:
                for m in range(win.shape[1]):
                    w = win[x, m]
                    val[w] = _block_value(w, S, B, wvol, F, hasF)
                    w = win[y, m]
                    val[w] = _block_value(w, S, B, wvol, F, hasF)


@numba.njit(cache=True)
def canonical_dp(logw, n, K):
    """``out[m, k] = log sum over m-site configurations of mass k of prod w(eta_x)``."""
    out = np.full((n + 1, K + 1), -np.inf)
    out[0, 0] = 0.0
    for m in range(1, n + 1):
        prev = out[m - 1]
        for k in range(K + 1):
            mx = -np.inf
            for j in range(k + 1):
                v = logw[j] + prev[k - j]
                if v > mx:
                    mx = v
            if mx == -np.inf:
                continue
            s = 0.0
            for j in range(k + 1):
                s += math.exp(logw[j] + prev[k - j] - mx)
            out[m, k] = mx + math.log(s)
    return out


@numba.njit(cache=True)
def canonical_sample(logZ, logw, n, K, unif, out):
    """Sequential conditional sampling; ``unif`` has shape ``(samples, n)``."""
    for s in range(unif.shape[0]):
        k = K
        for i in range(n):
            m = n - i
            if m == 1:
                out[s, i] = k
                break
            u = unif[s, i]
            base = logZ[m, k]
            acc = 0.0
            j = 0
            while j < k:
                acc += math.exp(logw[j] + logZ[m - 1, k - j] - base)
                if u < acc:
                    break
                j += 1
            out[s, i] = j
            k -= j
