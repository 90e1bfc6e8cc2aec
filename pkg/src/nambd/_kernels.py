"""numba kernels: random streams and the trajectory loop.

Stream state lives in two small arrays so kernels can run with ``nogil``:

* ``state``: uint64[STATE_WORDS].  Mersenne Twister uses words 0..311 plus
  the cursor in word 312; the 48-bit LCG keeps its seed in word 0.
* ``spare``: float64[2] holding the cached second polar-method normal
  (``spare[0]`` is a has-value flag).

:mod:`nambd._numpy_backend` mirrors every kernel here over batches of
streams; the two are checked against each other in the test-suite.
"""
import math

import numpy as np

from ._jit import njit

# Kernels below never allocate, so they are compiled without NRT reference
# counting; otherwise every call pays atomic incref/decref on the state arrays.
kernel = njit(cache=True, nogil=True, _nrt=False)

STATE_WORDS = 313
MT_N = 312
MT_M = 156

RNG_MT = 0
RNG_LCG = 1

DET_STEPPED = 0
DET_EVENT = 1

POT_NONE = 0
POT_SCREENED_COULOMB = 1

OUT_REACTED = 0
OUT_ESCAPED = 1
OUT_STEP_LIMIT = 2

# bridge crossing probabilities below exp(-BRIDGE_CUTOFF) are treated as 0
BRIDGE_CUTOFF = 40.0

_MATRIX_A = np.uint64(0xB5026F5AA96619E9)
_UPPER = np.uint64(0xFFFFFFFF80000000)
_LOWER = np.uint64(0x7FFFFFFF)
_INIT_MULT = np.uint64(6364136223846793005)
_TEMPER_D = np.uint64(0x5555555555555555)
_TEMPER_B = np.uint64(0x71D67FFFEDA60000)
_TEMPER_C = np.uint64(0xFFF7EEE000000000)

_LCG_MULT = np.uint64(0x5DEECE66D)
_LCG_ADD = np.uint64(0xB)
_LCG_MASK = np.uint64((1 << 48) - 1)

_ZERO = np.uint64(0)
_ONE = np.uint64(1)
_INV_2_53 = 1.0 / 9007199254740992.0


@kernel
def seed_stream(state, spare, kind, seed):
    seed = np.uint64(seed)
    spare[0] = 0.0
    spare[1] = 0.0
    if kind == RNG_MT:
        state[0] = seed
        for i in range(1, MT_N):
            prev = state[i - 1]
            state[i] = _INIT_MULT * (prev ^ (prev >> np.uint64(62))) + np.uint64(i)
        state[MT_N] = np.uint64(MT_N)
    else:
        state[0] = (seed ^ _LCG_MULT) & _LCG_MASK
        for i in range(1, STATE_WORDS):
            state[i] = _ZERO


@kernel
def _mt_twist(state):
    for i in range(MT_N - MT_M):
        x = (state[i] & _UPPER) | (state[i + 1] & _LOWER)
        mag = _MATRIX_A if (x & _ONE) else _ZERO
        state[i] = state[i + MT_M] ^ (x >> _ONE) ^ mag
    for i in range(MT_N - MT_M, MT_N - 1):
        x = (state[i] & _UPPER) | (state[i + 1] & _LOWER)
        mag = _MATRIX_A if (x & _ONE) else _ZERO
        state[i] = state[i + MT_M - MT_N] ^ (x >> _ONE) ^ mag
    x = (state[MT_N - 1] & _UPPER) | (state[0] & _LOWER)
    mag = _MATRIX_A if (x & _ONE) else _ZERO
    state[MT_N - 1] = state[MT_M - 1] ^ (x >> _ONE) ^ mag
    state[MT_N] = _ZERO


@kernel
def mt_next_u64(state):
    if state[MT_N] >= np.uint64(MT_N):
        _mt_twist(state)
    idx = state[MT_N]
    x = state[idx]
    state[MT_N] = idx + _ONE
    x ^= (x >> np.uint64(29)) & _TEMPER_D
    x ^= (x << np.uint64(17)) & _TEMPER_B
    x ^= (x << np.uint64(37)) & _TEMPER_C
    x ^= x >> np.uint64(43)
    return x


@kernel
def lcg_next_bits(state, bits):
    s = (state[0] * _LCG_MULT + _LCG_ADD) & _LCG_MASK
    state[0] = s
    return s >> np.uint64(48 - bits)


@kernel
def next_uniform(state, kind):
    if kind == RNG_MT:
        return float(np.int64(mt_next_u64(state) >> np.uint64(11))) * _INV_2_53
    hi = lcg_next_bits(state, 26)
    lo = lcg_next_bits(state, 27)
    return float(np.int64((hi << np.uint64(27)) + lo)) * _INV_2_53


@kernel
def next_normal(state, spare, kind):
    # Marsaglia polar method; the second variate of each accepted pair is cached
    if spare[0] != 0.0:
        spare[0] = 0.0
        return spare[1]
    while True:
        v1 = 2.0 * next_uniform(state, kind) - 1.0
        v2 = 2.0 * next_uniform(state, kind) - 1.0
        s = v1 * v1 + v2 * v2
        if s < 1.0 and s != 0.0:
            break
    mult = math.sqrt(-2.0 * math.log(s) / s)
    spare[0] = 1.0
    spare[1] = v2 * mult
    return v1 * mult


@kernel
def fill_uniform(state, kind, out):
    for i in range(out.shape[0]):
        out[i] = next_uniform(state, kind)


@kernel
def fill_normal(state, spare, kind, out):
    for i in range(out.shape[0]):
        out[i] = next_normal(state, spare, kind)


@kernel
def fill_u64(state, out):
    for i in range(out.shape[0]):
        out[i] = mt_next_u64(state)


@kernel
def sphere_point(state, spare, kind, radius):
    x = next_normal(state, spare, kind)
    y = next_normal(state, spare, kind)
    z = next_normal(state, spare, kind)
    scale = radius / math.sqrt(x * x + y * y + z * z)
    return x * scale, y * scale, z * scale


@kernel
def fill_sphere(state, spare, kind, radius, out):
    for i in range(out.shape[0]):
        x, y, z = sphere_point(state, spare, kind, radius)
        out[i, 0] = x
        out[i, 1] = y
        out[i, 2] = z


@kernel
def adaptive_dt(d, a, q, D, dt_max, dt_min, frac):
    gap = min(d - a, q - d)
    if gap <= 0.0:
        return dt_min
    dt = frac * frac * gap * gap / (6.0 * D)
    if dt > dt_max:
        return dt_max
    if dt < dt_min:
        return dt_min
    return dt


@kernel
def entry_fraction(px, py, pz, dx, dy, dz, radius):
    """Smallest s in (0, inf) with |p + s*d| = radius for |p| > radius, else inf."""
    A = dx * dx + dy * dy + dz * dz
    half_b = px * dx + py * dy + pz * dz
    c = px * px + py * py + pz * pz - radius * radius
    if A == 0.0 or half_b >= 0.0:
        return np.inf
    disc = half_b * half_b - A * c
    if disc < 0.0:
        return np.inf
    return c / (-half_b + math.sqrt(disc))


@kernel
def exit_fraction(px, py, pz, dx, dy, dz, radius):
    """Positive s with |p + s*d| = radius for |p| < radius (inf for d = 0)."""
    A = dx * dx + dy * dy + dz * dz
    if A == 0.0:
        return np.inf
    half_b = px * dx + py * dy + pz * dz
    c = px * px + py * py + pz * pz - radius * radius
    disc = half_b * half_b - A * c
    if disc < 0.0:
        disc = 0.0
    root = math.sqrt(disc)
    if half_b > 0.0:
        return -c / (half_b + root)
    return (root - half_b) / A


@kernel
def bridge_log_crossing(h0, h1, var):
    """log-probability that a 1D Brownian bridge between heights h0, h1 > 0
    with per-component variance ``var`` touches zero (flat-boundary form)."""
    return -2.0 * h0 * h1 / var


@kernel
def radial_drift(px, py, pz, d, D, dt, pot_kind, pot_q, pot_kappa):
    """Radial drift length D*F*dt, F = -dE/dr, energy in units of kT."""
    if pot_kind == POT_SCREENED_COULOMB:
        e = pot_q * math.exp(-pot_kappa * d) / d
        dedr = -e * (pot_kappa * d + 1.0) / d
        return -dedr * D * dt
    return 0.0


@kernel
def trajectory(state, spare, kind, x, y, z, a, q, D, detector, adaptive,
               dt_base, dt_min, frac, bridge, max_steps, pot_kind, pot_q, pot_kappa, out):
    """Run one trajectory from (x, y, z).

    ``out`` receives (outcome code, steps, model time, final distance).
    """
    t = 0.0
    d = math.sqrt(x * x + y * y + z * z)
    if d <= a or d >= q:
        out[0] = OUT_REACTED if d <= a else OUT_ESCAPED
        out[1] = 1.0
        out[2] = 0.0
        out[3] = d
        return
    steps = 0
    while steps < max_steps:
        steps += 1
        dt = dt_base
        if adaptive:
            dt = adaptive_dt(d, a, q, D, dt_base, dt_min, frac)
        sigma = math.sqrt(2.0 * D * dt)
        dx = sigma * next_normal(state, spare, kind)
        dy = sigma * next_normal(state, spare, kind)
        dz = sigma * next_normal(state, spare, kind)
        if pot_kind != POT_NONE:
            shift = radial_drift(x, y, z, d, D, dt, pot_kind, pot_q, pot_kappa)
            dx += shift * x / d
            dy += shift * y / d
            dz += shift * z / d
        nx = x + dx
        ny = y + dy
        nz = z + dz
        nd = math.sqrt(nx * nx + ny * ny + nz * nz)
        if detector == DET_STEPPED:
            if nd <= a:
                out[0] = OUT_REACTED
                out[1] = steps
                out[2] = t + dt
                out[3] = nd
                return
            if nd >= q:
                out[0] = OUT_ESCAPED
                out[1] = steps
                out[2] = t + dt
                out[3] = nd
                return
        else:
            s_hit = entry_fraction(x, y, z, dx, dy, dz, a)
            if nd <= a and s_hit > 1.0:
                s_hit = 1.0
            s_exit = exit_fraction(x, y, z, dx, dy, dz, q)
            if nd >= q and s_exit > 1.0:
                s_exit = 1.0
            if s_hit <= 1.0 and s_hit <= s_exit:
                out[0] = OUT_REACTED
                out[1] = steps
                out[2] = t + s_hit * dt
                out[3] = a
                return
            if s_exit <= 1.0:
                out[0] = OUT_ESCAPED
                out[1] = steps
                out[2] = t + s_exit * dt
                out[3] = q
                return
            if bridge:
                var = 2.0 * D * dt
                h0 = d - a
                h1 = nd - a
                lp = bridge_log_crossing(h0, h1, var)
                if lp > -BRIDGE_CUTOFF:
                    if next_uniform(state, kind) < math.exp(lp):
                        out[0] = OUT_REACTED
                        out[1] = steps
                        out[2] = t + dt * h0 / (h0 + h1)
                        out[3] = a
                        return
                h0 = q - d
                h1 = q - nd
                lp = bridge_log_crossing(h0, h1, var)
                if lp > -BRIDGE_CUTOFF:
                    if next_uniform(state, kind) < math.exp(lp):
                        out[0] = OUT_ESCAPED
                        out[1] = steps
                        out[2] = t + dt * h0 / (h0 + h1)
                        out[3] = q
                        return
        x = nx
        y = ny
        z = nz
        d = nd
        t += dt
    out[0] = OUT_STEP_LIMIT
    out[1] = steps
    out[2] = t
    out[3] = d


@kernel
def trajectory_from_sphere(state, spare, kind, start_radius, a, q, D, detector, adaptive,
                           dt_base, dt_min, frac, bridge, max_steps, pot_kind, pot_q,
                           pot_kappa, out):
    x, y, z = sphere_point(state, spare, kind, start_radius)
    trajectory(state, spare, kind, x, y, z, a, q, D, detector, adaptive,
               dt_base, dt_min, frac, bridge, max_steps, pot_kind, pot_q, pot_kappa, out)


@njit(cache=True, nogil=True)
def simulate_batch(seeds, kind, start_radius, a, q, D, detector, adaptive, dt_base, dt_min,
                   frac, bridge, max_steps, pot_kind, pot_q, pot_kappa,
                   outcome, steps, model_time, final_distance):
    """One independent stream per seed; results land in the output arrays."""
    state = np.empty(STATE_WORDS, dtype=np.uint64)
    spare = np.empty(2)
    out = np.empty(4)
    for i in range(seeds.shape[0]):
        seed_stream(state, spare, kind, seeds[i])
        trajectory_from_sphere(state, spare, kind, start_radius, a, q, D, detector, adaptive,
                               dt_base, dt_min, frac, bridge, max_steps, pot_kind, pot_q,
                               pot_kappa, out)
        outcome[i] = np.int8(out[0])
        steps[i] = np.int64(out[1])
        model_time[i] = out[2]
        final_distance[i] = out[3]
