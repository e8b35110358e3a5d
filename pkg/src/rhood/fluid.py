"""Mean-field models of the age distribution.

As the table grows, the scaled system concentrates around a deterministic
trajectory: tail fractions ``s_i(t)`` (cells holding a live key of age at
least ``i``) evolve under differential equations driven by the fast
"level" chain that tracks the age of the key currently being placed.
This module integrates those systems with fixed-step forward Euler and
evaluates the closed-form recurrences they admit:

* insert-only fill from the empty table to a target load;
* churn with hard deletions (uniform delete + fresh insert at constant
  load), including its closed-form equilibrium;
* churn with tombstone markers, whose level equilibrium must be re-solved
  every step because markers alter placement probabilities.

Conventions: a tail vector is a float array where slot ``i`` holds the
tail of age ``i+1``; entries beyond the truncation depth are treated as
zero.  Time ``t`` is scaled so one unit equals one placement attempt per
cell; during fill the load is ``1 - exp(-t)``.  ``inserted_mass`` counts
completed insertions per cell and is the stop condition for churn runs
("run until 2n keys have been inserted" == mass 2.0).
"""

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import _kernels
from .errors import ConvergenceError, InvalidArgumentError, TailTruncationWarning

DEFAULT_DEPTH = 64


class TailUpdateVariant(Enum):
    """Growth factor used for live tails in the tombstone-churn equations.

    AS_WRITTEN counts every landing that creates a cell of age >= i: empty
    cells, claimable markers, and swaps against younger live residents --
    the factor (1 - s_i - u_{j+1}).  CONSERVATION counts only completed
    placements (empty or claimable marker), factor (1 - s_1 - u_{j+1}).
    The two coincide at i = 1, so both hold the load constant during
    churn; they differ in how deeper tails grow.  AS_WRITTEN is the
    default: it is the exact cell-transition rate and reproduces the
    golden churn distributions (see README).
    """

    AS_WRITTEN = "as-written"
    CONSERVATION = "conservation"


@dataclass
class SolverConfig:
    """Integrator settings.

    ``dt`` is the Euler step (golden values were produced at 1e-6; a
    coarser step scales the error linearly).  ``depth`` is the tail
    truncation; it doubles automatically whenever the deepest tracked
    tail exceeds ``tail_tol`` (tombstone churn pushes ages upward without
    bound).  ``fixed_point_tol`` bounds the level-equilibrium residual.
    """

    dt: float = 1e-6
    depth: int = DEFAULT_DEPTH
    tail_tol: float = 1e-12
    fixed_point_tol: float = 1e-12
    fixed_point_max_iter: int = 100_000
    variant: TailUpdateVariant = TailUpdateVariant.AS_WRITTEN
    auto_extend: bool = True
    max_depth: int = 4096
    chunk_steps: int = 250_000

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidArgumentError("dt must be positive")
        if self.depth < 2:
            raise InvalidArgumentError("depth must be >= 2")


@dataclass
class LevelDistribution:
    """Equilibrium of the level chain: tail probabilities plus the
    probability ``q`` of sitting in the deletion state (0 when there are
    no deletions)."""

    p: np.ndarray
    q: float


@dataclass
class FluidState:
    """A point on the limiting trajectory."""

    t: float
    s: np.ndarray
    u: np.ndarray | None = None
    inserted_mass: float = 0.0

    def copy(self) -> "FluidState":
        return FluidState(
            t=self.t,
            s=self.s.copy(),
            u=None if self.u is None else self.u.copy(),
            inserted_mass=self.inserted_mass,
        )


@dataclass
class DecayCheck:
    """Result of the doubly-exponential envelope test."""

    passed: bool
    crossover: int | None = None
    base: float | None = None
    degenerate: bool = False
    detail: str = ""


def _check_load(value: float, name: str = "alpha", allow_zero: bool = True) -> float:
    value = float(value)
    if not (value < 1.0) or math.isnan(value):
        raise InvalidArgumentError(f"{name} must be < 1 (got {value})")
    if value < 0.0 or (value == 0.0 and not allow_zero):
        raise InvalidArgumentError(f"{name} must be positive (got {value})")
    return value


def validate_tail(s: np.ndarray, name: str = "tail") -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise InvalidArgumentError(f"{name} must be a non-empty 1-d vector")
    if np.any(s < 0) or np.any(s > 1):
        raise InvalidArgumentError(f"{name} entries must lie in [0, 1]")
    if np.any(np.diff(s) > 1e-12):
        raise InvalidArgumentError(f"{name} must be non-increasing")
    return s


# ---------------------------------------------------------------------------
# Level-process equilibria
# ---------------------------------------------------------------------------


def level_insert_only(s: np.ndarray) -> LevelDistribution:
    """Insert-only level equilibrium: p_1 = 1 and p_i = p_{i-1} s_{i-1}."""
    s = validate_tail(s)
    p = np.empty_like(s)
    p[0] = 1.0
    if s.size > 1:
        p[1:] = np.cumprod(s[:-1])
    return LevelDistribution(p=p, q=0.0)


def no_tombstone_level(alpha: float) -> LevelDistribution:
    """Closed-form two-state balance for hard-delete churn.

    A placement completes with probability 1 - alpha, after which one
    deletion step follows, giving q = (1-alpha)/(2-alpha) and
    p_1 = 1/(2-alpha).
    """
    alpha = _check_load(alpha)
    q = (1.0 - alpha) / (2.0 - alpha)
    p1 = 1.0 / (2.0 - alpha)
    return LevelDistribution(p=np.array([p1]), q=q)


def tombstone_level_equilibrium(
    s: np.ndarray,
    u: np.ndarray,
    cfg: SolverConfig | None = None,
    warm: np.ndarray | None = None,
) -> LevelDistribution:
    """Fixed point of the level chain against a frozen (s, u) table state.

    Solved by iterating the chain's one-step distribution update (warm
    start supported) until the largest change falls below the configured
    tolerance.
    """
    cfg = cfg or SolverConfig()
    s = validate_tail(s, "s")
    u = validate_tail(u, "u")
    if s.size != u.size:
        raise InvalidArgumentError("s and u must have equal depth")
    if s[0] + u[0] > 1.0 + 1e-12:
        raise InvalidArgumentError("s[1] + u[1] must not exceed 1")
    if warm is not None and warm.size == s.size:
        p = warm.astype(float).copy()
    else:
        p = np.empty_like(s)
        p[0] = 1.0 / (2.0 - s[0])
        p[1:] = p[0] * np.cumprod(s[:-1])
    scratch = np.empty_like(p)
    iters = _kernels.solve_level(
        p, scratch, s, u, float(s[0]), cfg.fixed_point_tol, cfg.fixed_point_max_iter
    )
    if iters < 0:
        raise ConvergenceError(
            f"level equilibrium did not converge within {cfg.fixed_point_max_iter} sweeps"
        )
    return LevelDistribution(p=p, q=1.0 - float(p[0]))


def level_residual(dist: LevelDistribution, s: np.ndarray, u: np.ndarray) -> float:
    """Largest violation of the level-equilibrium equations (test hook)."""
    p = dist.p
    scratch = np.empty_like(p)
    return float(_kernels.level_sweep(scratch, p.copy(), s, u, float(s[0])))


# ---------------------------------------------------------------------------
# Closed-form recurrences
# ---------------------------------------------------------------------------


def recurrence_tails(beta: float, depth: int = DEFAULT_DEPTH) -> np.ndarray:
    """Insert-only tails at load ``beta`` via the closed-form recurrence

        s_1 = beta,   s_{i+1} = 1 - (1 - beta) exp(s_1 + ... + s_i),

    clamped at zero once the tail dies out (it only decreases from there).
    """
    beta = _check_load(beta, "beta")
    s = np.zeros(depth)
    if beta == 0.0:
        return s
    s[0] = beta
    acc = beta
    one_minus = 1.0 - beta
    for i in range(1, depth):
        value = 1.0 - one_minus * math.exp(acc)
        if value <= 0.0:
            break
        s[i] = value
        acc += value
    return s


def no_tombstone_equilibrium(alpha: float, depth: int = DEFAULT_DEPTH) -> np.ndarray:
    """Stationary tails of hard-delete churn:

        s_i = p_i / (p_i + (1-alpha)/(alpha (2-alpha))),  p_i = p_{i-1} s_{i-1}

    with p_1 = 1/(2-alpha); the recurrence reproduces s_1 = alpha exactly.
    """
    alpha = _check_load(alpha, allow_zero=False)
    z = (1.0 - alpha) / (alpha * (2.0 - alpha))
    s = np.zeros(depth)
    p = 1.0 / (2.0 - alpha)
    for i in range(depth):
        value = p / (p + z)
        if value <= 0.0:
            break
        s[i] = value
        p *= value
    return s


# ---------------------------------------------------------------------------
# Euler evolutions
# ---------------------------------------------------------------------------


def _extend(vec: np.ndarray, new_depth: int) -> np.ndarray:
    out = np.zeros(new_depth)
    out[: vec.size] = vec
    return out


def _tail_alarm(cfg: SolverConfig, s: np.ndarray, u: np.ndarray | None) -> bool:
    deep = s[-1] + (u[-1] if u is not None else 0.0)
    return deep > cfg.tail_tol


def _finalize(cfg: SolverConfig, s: np.ndarray, u: np.ndarray | None, clock):
    if _tail_alarm(cfg, s, u):
        warnings.warn(
            "tail mass reached the truncation depth; increase depth",
            TailTruncationWarning,
            stacklevel=3,
        )
    # Clamp excursions and monotonicity gaps the kernels absorbed must be
    # round-off sized; anything larger indicates a real defect.
    assert clock[2] < 1e-9, f"clamp excursion {clock[2]:.3e}"
    assert clock[3] < 1e-9, f"monotonicity gap {clock[3]:.3e}"


def insert_only_evolve(
    alpha: float, cfg: SolverConfig | None = None, progress=None
) -> FluidState:
    """Integrate the insert-only system from the empty table until the
    load s_1 reaches ``alpha``; the stop time approximates -ln(1-alpha).

    ``progress(t, s)`` is invoked between integration chunks (trajectory
    sampling / invariant hooks for tests).
    """
    cfg = cfg or SolverConfig()
    alpha = _check_load(alpha)
    s = np.zeros(cfg.depth)
    clock = np.zeros(4)
    while True:
        status = _kernels.euler_insert_only(s, alpha, cfg.dt, cfg.chunk_steps, clock)
        if progress is not None:
            progress(clock[0], s)
        if status == _kernels.REACHED:
            break
        if cfg.auto_extend and s.size < cfg.max_depth and _tail_alarm(cfg, s, None):
            s = _extend(s, min(2 * s.size, cfg.max_depth))
    _finalize(cfg, s, None, clock)
    return FluidState(t=float(clock[0]), s=s, inserted_mass=float(clock[1]))


def no_tombstone_evolve(
    start: FluidState,
    target_inserted_mass: float,
    alpha: float,
    cfg: SolverConfig | None = None,
    progress=None,
) -> FluidState:
    """Churn with hard deletions from a full-load state until the
    integrated completed-insertion mass reaches the target.

    The load term of the system vanishes at s_1 = alpha, so the leading
    tail holds still while deeper tails relax toward the closed-form
    equilibrium.
    """
    cfg = cfg or SolverConfig()
    alpha = _check_load(alpha, allow_zero=False)
    s = np.asarray(start.s, dtype=float).copy()
    if abs(s[0] - alpha) > max(20 * cfg.dt, 1e-7):
        raise InvalidArgumentError(
            f"churn must start at full load: s[1]={s[0]:.8f} != alpha={alpha}"
        )
    if s.size < cfg.depth:
        s = _extend(s, cfg.depth)
    level = no_tombstone_level(alpha)
    p1, q = float(level.p[0]), level.q
    clock = np.zeros(4)
    clock[0] = start.t
    clock[1] = start.inserted_mass
    while True:
        status = _kernels.euler_no_tombstone(
            s, alpha, p1, q, cfg.dt, target_inserted_mass, cfg.chunk_steps, clock
        )
        if progress is not None:
            progress(clock[0], s)
        if status == _kernels.REACHED:
            break
        if cfg.auto_extend and s.size < cfg.max_depth and _tail_alarm(cfg, s, None):
            s = _extend(s, min(2 * s.size, cfg.max_depth))
    _finalize(cfg, s, None, clock)
    return FluidState(t=float(clock[0]), s=s, inserted_mass=float(clock[1]))


def tombstone_evolve(
    start: FluidState,
    target_inserted_mass: float,
    alpha: float,
    cfg: SolverConfig | None = None,
    progress=None,
) -> FluidState:
    """Churn with tombstone markers from a full-load state.

    Marker tails start at zero unless the starting state carries some.
    The level equilibrium is re-solved each step (warm started, so a step
    of 1e-6 typically converges in one sweep); the truncation depth
    doubles whenever tail mass reaches it, since marker ages grow without
    bound under this scheme.
    """
    cfg = cfg or SolverConfig()
    alpha = _check_load(alpha, allow_zero=False)
    s = np.asarray(start.s, dtype=float).copy()
    if abs(s[0] - alpha) > max(20 * cfg.dt, 1e-7):
        raise InvalidArgumentError(
            f"churn must start at full load: s[1]={s[0]:.8f} != alpha={alpha}"
        )
    u = (
        np.asarray(start.u, dtype=float).copy()
        if start.u is not None
        else np.zeros(s.size)
    )
    if u.size != s.size:
        raise InvalidArgumentError("start.u depth must match start.s")
    if s.size < cfg.depth:
        s, u = _extend(s, cfg.depth), _extend(u, cfg.depth)
    # cold-start level guess; kern keeps it warm afterwards
    p = np.empty_like(s)
    p[0] = 1.0 / (2.0 - s[0])
    p[1:] = p[0] * np.cumprod(s[:-1])
    scratch = np.empty_like(p)
    as_written = cfg.variant is TailUpdateVariant.AS_WRITTEN
    clock = np.zeros(4)
    clock[0] = start.t
    clock[1] = start.inserted_mass
    while True:
        status = _kernels.euler_tombstone(
            s, u, p, scratch, alpha, cfg.dt, target_inserted_mass,
            cfg.chunk_steps, clock, as_written, cfg.fixed_point_tol,
            cfg.fixed_point_max_iter, cfg.tail_tol,
        )
        if progress is not None:
            progress(clock[0], s, u)
        if status == _kernels.REACHED:
            break
        if status == _kernels.FP_FAIL:
            raise ConvergenceError("level equilibrium diverged during churn")
        if status == _kernels.TAIL_ALARM:
            if cfg.auto_extend and s.size < cfg.max_depth:
                new_depth = min(2 * s.size, cfg.max_depth)
                s, u = _extend(s, new_depth), _extend(u, new_depth)
                p, scratch = _extend(p, new_depth), np.empty(new_depth)
            else:
                warnings.warn(
                    "tail mass reached the truncation depth; results clipped",
                    TailTruncationWarning,
                    stacklevel=2,
                )
                break
    _finalize(cfg, s, u, clock)
    return FluidState(
        t=float(clock[0]), s=s, u=u, inserted_mass=float(clock[1])
    )


def fill_then_churn(
    alpha: float,
    target_inserted_mass: float,
    mode: str,
    cfg: SolverConfig | None = None,
) -> FluidState:
    """Convenience pipeline: insert-only fill to ``alpha``, then churn in
    the requested deletion scheme until the total inserted mass (fill
    included) reaches the target."""
    cfg = cfg or SolverConfig()
    filled = insert_only_evolve(alpha, cfg)
    filled.inserted_mass = alpha  # exact: every fill insertion lands
    if target_inserted_mass <= alpha:
        return filled
    if mode == "tombstone":
        return tombstone_evolve(filled, target_inserted_mass, alpha, cfg)
    if mode == "no-tombstone":
        return no_tombstone_evolve(filled, target_inserted_mass, alpha, cfg)
    raise InvalidArgumentError(f"unknown churn mode {mode!r}")


# ---------------------------------------------------------------------------
# Derived quantities
# ---------------------------------------------------------------------------


def unsuccessful_search_cost(s: np.ndarray) -> float:
    """Expected probes of a short-circuited unsuccessful search.

    The search survives probe k only if it sees a cell of age >= k, so
    P(probes >= j) = prod_{k<j} s_k and the expectation telescopes to
    1 + s_1 + s_1 s_2 + ...  (This equals the mean hand age under the
    insert-only level equilibrium; see README for the identity.)
    """
    s = validate_tail(s)
    return 1.0 + float(np.sum(np.cumprod(s)))


def decay_envelope_check(
    s: np.ndarray, ratio_min: float = 1.5, min_run: int = 2
) -> DecayCheck:
    """Test a tail for the doubly-exponential envelope c1 * c2^(2^i).

    In log space doubly-exponential decay doubles: log s_{i+1} ~ 2 log s_i.
    The check finds the earliest crossover index from which the log-ratio
    stays >= ``ratio_min`` all the way to the end of the representable
    tail (a geometric tail has ratios -> 1 and fails).  The fitted base
    is read off the deepest positive entry as s_m ** (2^-m).
    """
    s = validate_tail(s)
    if s[0] <= 0:
        raise InvalidArgumentError("tail must have positive leading mass")
    positive = np.nonzero(s > 0)[0]
    last = int(positive[-1])  # slot of deepest positive tail (age last+1)
    if last == 0:
        return DecayCheck(
            passed=True, degenerate=True, detail="no mass beyond age 1"
        )
    below = np.nonzero(s[: last + 1] < 1.0)[0]
    if below.size == 0:
        return DecayCheck(passed=False, detail="tail never drops below 1")
    first = int(below[0])
    logs = np.log(s[first : last + 1])
    ratios = logs[1:] / logs[:-1]
    dead_beyond = last + 1 < s.size  # the tail truly dies inside the vector
    if ratios.size == 0:
        if dead_beyond:
            return DecayCheck(
                passed=True, degenerate=True, detail="single sub-unit entry"
            )
        return DecayCheck(passed=False, detail="no ratios to test")
    qualifying = ratios >= ratio_min
    # longest qualifying suffix
    run = 0
    for ok in qualifying[::-1]:
        if not ok:
            break
        run += 1
    effective = run + (1 if dead_beyond else 0)
    if run == ratios.size and effective >= min_run:
        crossover = first + 1  # 1-based age where doubling starts
    elif run > 0 and effective >= min_run:
        crossover = first + 1 + (ratios.size - run)
    else:
        return DecayCheck(
            passed=False,
            detail=f"log-ratio run too short (run={run}, need >= {min_run})",
        )
    base = float(s[last] ** (2.0 ** -(last + 1)))
    return DecayCheck(
        passed=True,
        crossover=crossover,
        base=base,
        detail=f"log-ratios >= {ratio_min} from age {crossover}",
    )
