"""JIT-compiled hot loops: table trials, Euler integrators, level chains.

Everything here mirrors the pure-Python reference implementations
bit-for-bit (same PRF constants, same update order); the test suite pins
the equivalence on small instances.  Keep the two sides in lockstep when
editing.

Conventions: tail vectors are 0-indexed arrays whose slot ``i`` holds the
tail of age ``i+1``; level vectors likewise.  All kernels release the GIL
so trials can run on a thread pool.
"""

import numpy as np
from numba import njit

from . import probing

U64 = np.uint64

_GAMMA = U64(probing.GAMMA)
_MUL1 = U64(probing.MIX_MUL1)
_MUL2 = U64(probing.MIX_MUL2)
_S30 = U64(30)
_S27 = U64(27)
_S31 = U64(31)
_PROBE_TAG = U64(probing.PROBE_STREAM_TAG)
_DELETE_TAG = U64(probing.DELETE_STREAM_TAG)
_DH_START_TAG = U64(probing.DH_START_TAG)
_DH_STEP_TAG = U64(probing.DH_STEP_TAG)
_ONE = U64(1)
_F53 = U64(11)  # shift producing a 53-bit mantissa for uniform floats

# Table modes / probe modes as ints for the kernels.
MODE_INSERT_ONLY = 0
MODE_TOMBSTONE = 1
MODE_NO_TOMBSTONE = 2
PROBE_RANDOM = 0
PROBE_DOUBLE = 1

# Cell sentinels (keys used by kernels are always >= 0).
EMPTY = np.int64(-1)
TOMB = np.int64(-2)

# Trial/integrator status codes.
OK = 0
REACHED = 0
BUDGET = 1
TAIL_ALARM = 2
FP_FAIL = 3
AGE_OVERFLOW = 4

_jit = njit(cache=True, nogil=True)


@_jit
def _mix(z):
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


@_jit
def _key_base(probe_seed, key):
    return _mix(probe_seed + U64(key) * _GAMMA)


@_jit
def _uniform01(base, counter):
    return (_mix(base + U64(counter) * _GAMMA) >> _F53) * 1.1102230246251565e-16


# ---------------------------------------------------------------------------
# Discrete table trials
# ---------------------------------------------------------------------------


@_jit
def _hand_setup(probe_seed, key, n, probe_mode):
    """Per-key probe parameters: (counter base, dh start, dh step)."""
    base = _key_base(probe_seed, key)
    if probe_mode == PROBE_DOUBLE:
        start = int(_mix(base ^ _DH_START_TAG) % U64(n))
        step = int(_mix(base ^ _DH_STEP_TAG) | _ONE)
        return base, start, step
    return base, 0, 0


@_jit
def _probe_pos(base, start, step, age, n, probe_mode):
    if probe_mode == PROBE_DOUBLE:
        return int((U64(start) + U64(age - 1) * U64(step)) % U64(n))
    return int(_mix(base + U64(age) * _GAMMA) % U64(n))


@_jit
def _insert(
    cell_key,
    cell_age,
    key_cell,
    age_counts,
    counters,
    probe_seed,
    key,
    n,
    probe_mode,
    tombstone_mode,
    age_cap,
):
    """One Robin Hood insertion; returns probe steps or -1 on age overflow.

    counters: [live_count, max_age, step_count], mutated in place.
    """
    hand = key
    age = np.int64(1)
    base, start, step = _hand_setup(probe_seed, hand, n, probe_mode)
    steps = np.int64(0)
    while True:
        steps += 1
        pos = _probe_pos(base, start, step, age, n, probe_mode)
        resident = cell_key[pos]
        if resident == EMPTY:
            cell_key[pos] = hand
            cell_age[pos] = age
            key_cell[hand] = pos
            age_counts[age] += 1
            if age > counters[1]:
                counters[1] = age
            break
        if resident == TOMB:
            if cell_age[pos] <= age:
                cell_key[pos] = hand
                cell_age[pos] = age
                key_cell[hand] = pos
                age_counts[age] += 1
                if age > counters[1]:
                    counters[1] = age
                break
            age += 1
        elif cell_age[pos] < age:
            displaced = resident
            displaced_age = cell_age[pos]
            age_counts[displaced_age] -= 1
            cell_key[pos] = hand
            cell_age[pos] = age
            key_cell[hand] = pos
            age_counts[age] += 1
            if age > counters[1]:
                counters[1] = age
            hand = displaced
            age = displaced_age + 1
            base, start, step = _hand_setup(probe_seed, hand, n, probe_mode)
        else:
            age += 1
        if age > age_cap:
            return np.int64(-1)
    counters[2] += steps
    return steps


@_jit
def _refresh_max_age(age_counts, counters):
    if counters[1] > 0 and age_counts[counters[1]] == 0:
        m = np.int64(0)
        for a in range(counters[1], 0, -1):
            if age_counts[a] > 0:
                m = a
                break
        counters[1] = m


@_jit
def _delete_random(
    cell_key,
    cell_age,
    key_cell,
    live_ids,
    live_pos,
    age_counts,
    counters,
    delete_base,
    delete_counter,
    tombstone_mode,
):
    live = counters[0]
    idx = int(_mix(delete_base + U64(delete_counter) * _GAMMA) % U64(live))
    key = live_ids[idx]
    last = live_ids[live - 1]
    live_ids[idx] = last
    live_pos[last] = idx
    counters[0] = live - 1

    pos = key_cell[key]
    age_counts[cell_age[pos]] -= 1
    _refresh_max_age(age_counts, counters)
    if tombstone_mode:
        cell_key[pos] = TOMB  # marker keeps the age
    else:
        cell_key[pos] = EMPTY
        cell_age[pos] = 0
    return key


@_jit
def _absent_search_probes(
    cell_key, cell_age, probe_seed, key, n, probe_mode, mode, max_age
):
    """Probes examined by an unsuccessful search for a never-inserted key."""
    base, start, step = _hand_setup(probe_seed, key, n, probe_mode)
    probes = np.int64(0)
    j = np.int64(1)
    while j <= max_age:
        pos = _probe_pos(base, start, step, j, n, probe_mode)
        probes += 1
        if mode != MODE_NO_TOMBSTONE:
            if cell_key[pos] == EMPTY or cell_age[pos] < j:
                break
        j += 1
    return probes


@_jit
def run_trial(
    n, fill_count, total_inserts, mode, probe_mode, seed, search_samples, age_cap
):
    """One seeded experiment: fill to the target load, then alternate
    uniform deletions with fresh insertions until ``total_inserts`` keys
    have been placed.

    Returns (age_counts, max_age, steps, mean unsuccessful probes, status).
    """
    cell_key = np.full(n, EMPTY, np.int64)
    cell_age = np.zeros(n, np.int64)
    key_cell = np.zeros(total_inserts, np.int64)
    live_ids = np.empty(n, np.int64)
    live_pos = np.zeros(total_inserts, np.int64)
    age_counts = np.zeros(age_cap + 1, np.int64)
    counters = np.zeros(3, np.int64)  # live, max_age, steps

    probe_seed = _mix(U64(seed) ^ _PROBE_TAG)
    delete_base = _mix(U64(seed) ^ _DELETE_TAG)
    delete_counter = np.int64(0)
    tombstone_mode = mode == MODE_TOMBSTONE

    for key in range(fill_count):
        if _insert(
            cell_key, cell_age, key_cell, age_counts, counters,
            probe_seed, np.int64(key), n, probe_mode, tombstone_mode, age_cap,
        ) < 0:
            return age_counts, counters[1], counters[2], 0.0, AGE_OVERFLOW
        live_ids[counters[0]] = key
        live_pos[key] = counters[0]
        counters[0] += 1

    for key in range(fill_count, total_inserts):
        _delete_random(
            cell_key, cell_age, key_cell, live_ids, live_pos, age_counts,
            counters, delete_base, delete_counter, tombstone_mode,
        )
        delete_counter += 1
        if _insert(
            cell_key, cell_age, key_cell, age_counts, counters,
            probe_seed, np.int64(key), n, probe_mode, tombstone_mode, age_cap,
        ) < 0:
            return age_counts, counters[1], counters[2], 0.0, AGE_OVERFLOW
        live_ids[counters[0]] = key
        live_pos[key] = counters[0]
        counters[0] += 1

    total_probes = np.int64(0)
    for i in range(search_samples):
        total_probes += _absent_search_probes(
            cell_key, cell_age, probe_seed, np.int64(total_inserts + i),
            n, probe_mode, mode, counters[1],
        )
    mean_unsuccessful = total_probes / search_samples if search_samples > 0 else 0.0

    return age_counts, counters[1], counters[2], mean_unsuccessful, OK


# ---------------------------------------------------------------------------
# Euler integrators for the limiting tail equations
# ---------------------------------------------------------------------------
#
# clock layout: [t, inserted_mass, max_clamp_excursion, max_monotone_gap]


@_jit
def euler_insert_only(tails, alpha, dt, max_steps, clock):
    """Advance d s_i/dt = (1 - s_i) * prod_{j<i} s_j until s_1 >= alpha.

    Products of the pre-step tails play the role of the level-process
    equilibrium, so one pass per step suffices.
    """
    depth = tails.shape[0]
    steps = 0
    while steps < max_steps:
        if tails[0] >= alpha:
            return REACHED
        clock[1] += dt * (1.0 - tails[0])  # pre-step rate keeps mass == s_1
        prod = 1.0
        prev = 1.0
        for i in range(depth):
            si = tails[i]
            grow = prod * (1.0 - si)
            prod *= si
            si += dt * grow
            if si > prev:
                gap = si - prev
                if gap > clock[3]:
                    clock[3] = gap
                si = prev
            tails[i] = si
            prev = si
        clock[0] += dt
        steps += 1
    return BUDGET


@_jit
def euler_no_tombstone(tails, alpha, level1, delete_prob, dt, mass_target, max_steps, clock):
    """Churn without tombstones: d s_i/dt = p_i (1-alpha) - q s_i/alpha,
    with p_1 fixed and p_i = p_{i-1} s_{i-1}.  Stops once the integrated
    completed-insertion mass reaches ``mass_target``.
    """
    depth = tails.shape[0]
    grow_rate = 1.0 - alpha
    steps = 0
    while steps < max_steps:
        if clock[1] >= mass_target:
            return REACHED
        level = level1
        prev = 1.0
        for i in range(depth):
            si = tails[i]
            ds = level * grow_rate - delete_prob * si / alpha
            level *= si
            si += dt * ds
            if si < 0.0:
                if -si > clock[2]:
                    clock[2] = -si
                si = 0.0
            if si > prev:
                gap = si - prev
                if gap > clock[3]:
                    clock[3] = gap
                si = prev
            tails[i] = si
            prev = si
        clock[0] += dt
        clock[1] += dt * delete_prob
        steps += 1
    return BUDGET


@_jit
def level_sweep(level_new, level, tails, tomb, s1):
    """One update of the level process with tombstones; returns max change.

    level[i] ~ probability the key in hand has age >= i+1; the deletion
    state's probability is 1 - level[0].  In 1-based terms the update is

        p_1 <- 1 - Sum_{j>=1} (p_j - p_{j+1}) (1 - s_1 - u_{j+1})
        p_i <- p_{i-1} s_{i-1} + Sum_{j>=i-1} (p_j - p_{j+1}) u_{j+1}

    with sums truncated at the vector depth (p and u vanish beyond it).
    A hand key of exact age j completes its placement on an empty cell or
    a marker no older than itself, hence the (1 - s_1 - u_{j+1}) factor;
    it walks past an older marker, hence the claim sums.
    """
    depth = level.shape[0]
    acc_completed = 0.0
    acc_claim = 0.0
    for j in range(depth, 0, -1):  # 1-based hand age j, deep end first
        k = j - 1
        p_j = level[k]
        p_next = level[k + 1] if k + 1 < depth else 0.0
        u_next = tomb[k + 1] if k + 1 < depth else 0.0
        mass = p_j - p_next
        acc_completed += mass * (1.0 - s1 - u_next)
        acc_claim += mass * u_next
        if j < depth:
            # slot j holds p_{j+1}; its claim sum starts at this j
            level_new[j] = level[k] * tails[k] + acc_claim
    level_new[0] = 1.0 - acc_completed
    maxdiff = 0.0
    for i in range(depth):
        d = abs(level_new[i] - level[i])
        if d > maxdiff:
            maxdiff = d
        level[i] = level_new[i]
    return maxdiff


@_jit
def solve_level(level, scratch, tails, tomb, s1, tol, max_iter):
    """Iterate the level update to its fixed point; returns iterations or -1."""
    for it in range(max_iter):
        if level_sweep(scratch, level, tails, tomb, s1) < tol:
            return it + 1
    return -1


@_jit
def euler_tombstone(
    tails,
    tomb,
    level,
    scratch,
    alpha,
    dt,
    mass_target,
    max_steps,
    clock,
    as_written,
    fp_tol,
    fp_max_iter,
    tail_tol,
):
    """Churn with tombstone markers.

    Live tails gain mass where the hand key lands (empty cells, claimable
    markers, and -- in the as-written variant -- swaps against younger
    residents) and lose it to uniform deletions; marker tails mirror the
    deletions and erode when claimed.  The level equilibrium is re-solved
    every step from a warm start.
    """
    depth = tails.shape[0]
    grow = np.empty(depth)
    erode = np.empty(depth)
    steps = 0
    while steps < max_steps:
        if clock[1] >= mass_target:
            return REACHED
        if tails[depth - 1] + tomb[depth - 1] > tail_tol:
            return TAIL_ALARM
        if solve_level(level, scratch, tails, tomb, tails[0], fp_tol, fp_max_iter) < 0:
            return FP_FAIL
        s1 = tails[0]
        # suffix sums over exact hand ages j: completed-placement factor and
        # marker-claim factor, as in level_sweep
        acc_completed = 0.0
        acc_claim = 0.0
        for i in range(depth - 1, -1, -1):
            p_i = level[i]
            p_next = level[i + 1] if i + 1 < depth else 0.0
            u_next = tomb[i + 1] if i + 1 < depth else 0.0
            mass = p_i - p_next
            acc_completed += mass * (1.0 - s1 - u_next)
            grow[i] = acc_completed
            if as_written:
                # landing on a younger live resident also creates an
                # age->=i cell: add (s1 - s_i) * p_i
                grow[i] += (s1 - tails[i]) * p_i
        delete_prob = 1.0 - level[0]
        acc_erode = 0.0
        for i in range(depth - 1, -1, -1):
            u_i = tomb[i]
            u_next = tomb[i + 1] if i + 1 < depth else 0.0
            acc_erode += level[i] * (u_i - u_next)
            erode[i] = acc_erode
        prev_s = 1.0
        prev_u = 1.0
        for i in range(depth):
            si = tails[i] + dt * (grow[i] - delete_prob * tails[i] / s1)
            ui = tomb[i] + dt * (delete_prob * tails[i] / s1 - erode[i])
            if si < 0.0:
                if -si > clock[2]:
                    clock[2] = -si
                si = 0.0
            if ui < 0.0:
                if -ui > clock[2]:
                    clock[2] = -ui
                ui = 0.0
            if si > prev_s:
                if si - prev_s > clock[3]:
                    clock[3] = si - prev_s
                si = prev_s
            if ui > prev_u:
                if ui - prev_u > clock[3]:
                    clock[3] = ui - prev_u
                ui = prev_u
            tails[i] = si
            tomb[i] = ui
            prev_s = si
            prev_u = ui
        clock[0] += dt
        clock[1] += dt * delete_prob
        steps += 1
    return BUDGET


# ---------------------------------------------------------------------------
# Direct simulation of the level chain (test oracle)
# ---------------------------------------------------------------------------


@_jit
def level_chain_occupancy(tails, tomb, steps, seed, max_level):
    """Simulate the age-of-key-in-hand chain against a frozen table state.

    Returns (counts of steps at each level 1..max_level, steps in the
    deletion state).  Levels above max_level saturate.
    """
    depth = tails.shape[0]
    base = _mix(U64(seed) ^ _PROBE_TAG)
    counts = np.zeros(max_level + 1, np.int64)
    deletions = np.int64(0)
    state = np.int64(1)  # 0 = deletion state
    s1 = tails[0]
    u1 = tomb[0]
    for k in range(steps):
        if state == 0:
            deletions += 1
            state = 1
            continue
        counts[min(state, max_level)] += 1
        r = _uniform01(base, k)
        # cell categories: empty, marker (claimable or older), live by age
        if r < 1.0 - s1 - u1:
            state = 0  # placed in an empty cell
            continue
        r -= 1.0 - s1 - u1
        u_above = tomb[state] if state < depth else 0.0
        if r < u1 - u_above:
            state = 0  # claimed a marker of age <= state
            continue
        r -= u1 - u_above
        if r < u_above:
            state += 1  # older marker: move on
            continue
        r -= u_above
        # live resident of exact age c: swap if c < state else move on
        for c in range(1, depth + 1):
            s_c = tails[c - 1]
            s_next = tails[c] if c < depth else 0.0
            if r < s_c - s_next or c == depth:
                if c < state:
                    state = c + 1
                else:
                    state += 1
                break
            r -= s_c - s_next
    return counts, deletions
