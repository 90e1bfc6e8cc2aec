"""Pure-numpy versions of the hot kernels, vectorised across streams.

Each function works on a batch of stream states (``states``: uint64[n, 313],
``spares``: float64[n, 2]) and a vector of row indices that should advance.
Per-row draw order matches :mod:`nambd._kernels` exactly, so uniform draws
are bit-identical between the backends; normals can differ in the last ulp
because numpy's ``log`` is not guaranteed to round like libm's.
"""
import numpy as np

from ._kernels import (BRIDGE_CUTOFF, DET_STEPPED, MT_M, MT_N, OUT_ESCAPED, OUT_REACTED,
                       OUT_STEP_LIMIT, POT_NONE, POT_SCREENED_COULOMB, RNG_MT, STATE_WORDS)

_MATRIX_A = np.uint64(0xB5026F5AA96619E9)
_UPPER = np.uint64(0xFFFFFFFF80000000)
_LOWER = np.uint64(0x7FFFFFFF)
_INIT_MULT = np.uint64(6364136223846793005)
_LCG_MULT = np.uint64(0x5DEECE66D)
_LCG_ADD = np.uint64(0xB)
_LCG_MASK = np.uint64((1 << 48) - 1)
_INV_2_53 = 1.0 / 9007199254740992.0


def seed_streams(kind, seeds):
    seeds = np.asarray(seeds, dtype=np.uint64)
    n = seeds.shape[0]
    states = np.zeros((n, STATE_WORDS), dtype=np.uint64)
    spares = np.zeros((n, 2))
    if kind == RNG_MT:
        states[:, 0] = seeds
        for i in range(1, MT_N):
            prev = states[:, i - 1]
            states[:, i] = _INIT_MULT * (prev ^ (prev >> np.uint64(62))) + np.uint64(i)
        states[:, MT_N] = MT_N
    else:
        states[:, 0] = (seeds ^ _LCG_MULT) & _LCG_MASK
    return states, spares


def _mix(x, y):
    z = (x & _UPPER) | (y & _LOWER)
    return (z >> np.uint64(1)) ^ np.where(z & np.uint64(1), _MATRIX_A, np.uint64(0))


def _twist(mt):
    """Regenerate a (rows, 312) block in place."""
    k = MT_N - MT_M
    mt[:, :k] = mt[:, MT_M:] ^ _mix(mt[:, :k], mt[:, 1:k + 1])
    mt[:, k:MT_N - 1] = mt[:, :MT_M - 1] ^ _mix(mt[:, k:MT_N - 1], mt[:, k + 1:MT_N])
    mt[:, MT_N - 1] = mt[:, MT_M - 1] ^ _mix(mt[:, MT_N - 1], mt[:, 0])


def _temper(x):
    x = x ^ ((x >> np.uint64(29)) & np.uint64(0x5555555555555555))
    x = x ^ ((x << np.uint64(17)) & np.uint64(0x71D67FFFEDA60000))
    x = x ^ ((x << np.uint64(37)) & np.uint64(0xFFF7EEE000000000))
    return x ^ (x >> np.uint64(43))


def mt_u64_rows(states, rows):
    idx = states[rows, MT_N]
    stale = idx >= MT_N
    if stale.any():
        r = rows[stale]
        block = states[r, :MT_N]
        _twist(block)
        states[r, :MT_N] = block
        idx = np.where(stale, np.uint64(0), idx)
    x = states[rows, idx.astype(np.intp)]
    states[rows, MT_N] = idx + np.uint64(1)
    return _temper(x)


def _lcg_bits_rows(states, rows, bits):
    s = (states[rows, 0] * _LCG_MULT + _LCG_ADD) & _LCG_MASK
    states[rows, 0] = s
    return s >> np.uint64(48 - bits)


def uniform_rows(states, kind, rows):
    if kind == RNG_MT:
        return (mt_u64_rows(states, rows) >> np.uint64(11)).astype(np.float64) * _INV_2_53
    hi = _lcg_bits_rows(states, rows, 26)
    lo = _lcg_bits_rows(states, rows, 27)
    return ((hi << np.uint64(27)) + lo).astype(np.float64) * _INV_2_53


def normal_rows(states, spares, kind, rows):
    out = np.empty(rows.shape[0])
    cached = spares[rows, 0] != 0.0
    if cached.any():
        out[cached] = spares[rows[cached], 1]
        spares[rows[cached], 0] = 0.0
    pos = np.flatnonzero(~cached)
    pending = rows[pos]
    while pending.size:
        v1 = 2.0 * uniform_rows(states, kind, pending) - 1.0
        v2 = 2.0 * uniform_rows(states, kind, pending) - 1.0
        s = v1 * v1 + v2 * v2
        ok = (s < 1.0) & (s != 0.0)
        if ok.any():
            so = s[ok]
            mult = np.sqrt(-2.0 * np.log(so) / so)
            out[pos[ok]] = v1[ok] * mult
            spares[pending[ok], 0] = 1.0
            spares[pending[ok], 1] = v2[ok] * mult
        pos = pos[~ok]
        pending = pending[~ok]
    return out


# --- single-stream bulk generation (used by RandomStream in numpy mode) ---

def mt_u64_bulk(state, count):
    """Advance one MT stream by ``count`` words, returning them."""
    out = np.empty(count, dtype=np.uint64)
    filled = 0
    block = state[None, :MT_N]
    while filled < count:
        idx = int(state[MT_N])
        if idx >= MT_N:
            _twist(block)
            idx = 0
        take = min(MT_N - idx, count - filled)
        out[filled:filled + take] = _temper(state[idx:idx + take])
        state[MT_N] = idx + take
        filled += take
    return out


def _lcg_bulk(state, count):
    # jump-ahead: s_k = A_k * s_0 + C_k (mod 2**48), with A_k, C_k built by doubling
    out = np.empty(count, dtype=np.uint64)
    mult = np.empty(count, dtype=np.uint64)
    add = np.empty(count, dtype=np.uint64)
    mult[0], add[0] = _LCG_MULT, _LCG_ADD
    n = 1
    while n < count:
        m = min(n, count - n)
        mult[n:n + m] = (mult[:m] * mult[n - 1]) & _LCG_MASK
        add[n:n + m] = (add[:m] * mult[n - 1] + add[n - 1]) & _LCG_MASK
        n += m
    out[:] = (mult * state[0] + add) & _LCG_MASK
    state[0] = out[-1]
    return out


def uniform_bulk(state, kind, count):
    if count == 0:
        return np.empty(0)
    if kind == RNG_MT:
        return (mt_u64_bulk(state, count) >> np.uint64(11)).astype(np.float64) * _INV_2_53
    raw = _lcg_bulk(state, 2 * count)
    hi = raw[0::2] >> np.uint64(22)
    lo = raw[1::2] >> np.uint64(21)
    return ((hi << np.uint64(27)) + lo).astype(np.float64) * _INV_2_53


def normal_bulk(state, spare, kind, count):
    out = np.empty(count)
    filled = 0
    if count and spare[0] != 0.0:
        out[0] = spare[1]
        spare[0] = 0.0
        filled = 1
    while filled < count:
        need = count - filled
        pairs = int(need * 0.65) + 8
        probe = state.copy()
        u = uniform_bulk(probe, kind, 2 * pairs)
        v1 = 2.0 * u[0::2] - 1.0
        v2 = 2.0 * u[1::2] - 1.0
        s = v1 * v1 + v2 * v2
        ok = np.flatnonzero((s < 1.0) & (s != 0.0))
        if ok.size * 2 < need:
            last = pairs - 1
            use = ok
        else:
            use = ok[:(need + 1) // 2]
            last = int(use[-1])
        mult = np.sqrt(-2.0 * np.log(s[use]) / s[use])
        vals = np.empty(2 * use.size)
        vals[0::2] = v1[use] * mult
        vals[1::2] = v2[use] * mult
        k = min(need, vals.size)
        out[filled:filled + k] = vals[:k]
        filled += k
        if vals.size > k:
            spare[0] = 1.0
            spare[1] = vals[-1]
        # replay exactly the uniforms that were consumed
        uniform_bulk(state, kind, 2 * (last + 1))
    return out


# --- trajectories ---

def simulate_batch(seeds, kind, start_radius, a, q, D, detector, adaptive, dt_base, dt_min,
                   frac, bridge, max_steps, pot_kind, pot_q, pot_kappa,
                   outcome, steps, model_time, final_distance):
    n = len(seeds)
    states, spares = seed_streams(kind, seeds)
    rows = np.arange(n)
    g = np.stack([normal_rows(states, spares, kind, rows) for _ in range(3)], axis=1)
    pos = g * (start_radius / np.sqrt((g * g).sum(axis=1)))[:, None]
    dist = np.sqrt((pos * pos).sum(axis=1))
    t = np.zeros(n)
    steps[:] = 1
    model_time[:] = 0.0
    final_distance[:] = dist
    outcome[:] = np.where(dist <= a, OUT_REACTED, OUT_ESCAPED)
    active = np.flatnonzero((dist > a) & (dist < q))
    steps[active] = 0
    count = 0
    while active.size and count < max_steps:
        count += 1
        steps[active] += 1
        p = pos[active]
        d = dist[active]
        if adaptive:
            gap = np.minimum(d - a, q - d)
            dt = np.clip(frac * frac * gap * gap / (6.0 * D), dt_min, dt_base)
            dt = np.where(gap <= 0.0, dt_min, dt)
        else:
            dt = np.full(active.size, dt_base)
        sigma = np.sqrt(2.0 * D * dt)
        disp = np.empty_like(p)
        for c in range(3):
            disp[:, c] = sigma * normal_rows(states, spares, kind, active)
        if pot_kind == POT_SCREENED_COULOMB:
            e = pot_q * np.exp(-pot_kappa * d) / d
            dedr = -e * (pot_kappa * d + 1.0) / d
            shift = -dedr * D * dt
            disp += (shift / d)[:, None] * p
        elif pot_kind != POT_NONE:
            raise ValueError(f"unknown potential kind {pot_kind}")
        newp = p + disp
        nd = np.sqrt((newp * newp).sum(axis=1))
        done = np.zeros(active.size, dtype=bool)
        ends = np.empty(active.size, dtype=np.int8)
        end_t = t[active] + dt
        end_d = nd.copy()
        if detector == DET_STEPPED:
            hit = nd <= a
            out = ~hit & (nd >= q)
            ends[hit] = OUT_REACTED
            ends[out] = OUT_ESCAPED
            done = hit | out
        else:
            s_hit = _entry_fraction(p, disp, a)
            s_hit = np.where((nd <= a) & (s_hit > 1.0), 1.0, s_hit)
            s_exit = _exit_fraction(p, disp, q)
            s_exit = np.where((nd >= q) & (s_exit > 1.0), 1.0, s_exit)
            hit = (s_hit <= 1.0) & (s_hit <= s_exit)
            out = ~hit & (s_exit <= 1.0)
            ends[hit] = OUT_REACTED
            ends[out] = OUT_ESCAPED
            end_t[hit] = t[active][hit] + s_hit[hit] * dt[hit]
            end_t[out] = t[active][out] + s_exit[out] * dt[out]
            end_d[hit] = a
            end_d[out] = q
            done = hit | out
            if bridge:
                var = 2.0 * D * dt
                for boundary, code, h0, h1 in ((a, OUT_REACTED, d - a, nd - a),
                                               (q, OUT_ESCAPED, q - d, q - nd)):
                    lp = -2.0 * h0 * h1 / var
                    cand = np.flatnonzero(~done & (lp > -BRIDGE_CUTOFF))
                    if cand.size:
                        u = uniform_rows(states, kind, active[cand])
                        crossed = cand[u < np.exp(lp[cand])]
                        ends[crossed] = code
                        end_t[crossed] = (t[active][crossed]
                                          + dt[crossed] * h0[crossed] / (h0[crossed] + h1[crossed]))
                        end_d[crossed] = boundary
                        done[crossed] = True
        fin = active[done]
        outcome[fin] = ends[done]
        model_time[fin] = end_t[done]
        final_distance[fin] = end_d[done]
        live = ~done
        keep = active[live]
        pos[keep] = newp[live]
        dist[keep] = nd[live]
        t[keep] += dt[live]
        active = keep
    if active.size:
        outcome[active] = OUT_STEP_LIMIT
        model_time[active] = t[active]
        final_distance[active] = dist[active]


def _entry_fraction(p, disp, radius):
    A = (disp * disp).sum(axis=1)
    half_b = (p * disp).sum(axis=1)
    c = (p * p).sum(axis=1) - radius * radius
    disc = half_b * half_b - A * c
    ok = (A != 0.0) & (half_b < 0.0) & (disc >= 0.0)
    res = np.full(p.shape[0], np.inf)
    res[ok] = c[ok] / (-half_b[ok] + np.sqrt(disc[ok]))
    return res


def _exit_fraction(p, disp, radius):
    A = (disp * disp).sum(axis=1)
    half_b = (p * disp).sum(axis=1)
    c = (p * p).sum(axis=1) - radius * radius
    root = np.sqrt(np.maximum(half_b * half_b - A * c, 0.0))
    res = np.full(p.shape[0], np.inf)
    pos = (A != 0.0) & (half_b > 0.0)
    neg = (A != 0.0) & ~pos
    res[pos] = -c[pos] / (half_b[pos] + root[pos])
    res[neg] = (root[neg] - half_b[neg]) / A[neg]
    return res
