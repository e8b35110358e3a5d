"""Deterministic probe-sequence generation.

Every key carries a conceptually infinite probe sequence of cell indices.
Rather than storing sequences, positions are produced by a counter-mode
pseudo-random function of ``(seed, key, probe_index)`` built on the
splitmix64 finalizer, so replaying a sequence needs O(1) memory and is
bit-reproducible across runs, platforms, and the JIT kernels.

Two modes are supported:

* fully random -- every probe index is an independent uniform draw over
  ``[0, n-1]``;
* double hashing -- the sequence is an arithmetic progression
  ``start, start+step, start+2*step, ...`` (mod n) with a per-key uniform
  ``start`` and odd ``step``.  Table sizes must be powers of two so that an
  odd step is automatically a unit mod n and the first n probes visit every
  cell.

The integer arithmetic here is the reference implementation; the compiled
kernels in ``_kernels`` mirror it exactly (tests pin the equivalence).
Changing any constant breaks replay compatibility of stored seeds.
"""

from dataclasses import dataclass
from enum import Enum

from .errors import InvalidArgumentError

MASK64 = (1 << 64) - 1

# splitmix64 increment and finalizer multipliers
GAMMA = 0x9E3779B97F4A7C15
MIX_MUL1 = 0xBF58476D1CE4E5B9
MIX_MUL2 = 0x94D049BB133111EB

# Stream tags keep the probe, deletion, and trial-seed streams disjoint.
PROBE_STREAM_TAG = 0xD1B54A32D192ED03
DELETE_STREAM_TAG = 0x8CB92BA72F3D8DD7
TRIAL_STREAM_TAG = 0xEB44ACCAB455D165
DH_START_TAG = 0x2545F4914F6CDD1D
DH_STEP_TAG = 0x9FB21C651E98DF25


def mix64(z: int) -> int:
    """splitmix64 finalizer: a 64-bit permutation with strong avalanche."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_MUL2) & MASK64
    return z ^ (z >> 31)


def derive_stream(seed: int, tag: int) -> int:
    """Base value of an independent substream of ``seed``."""
    return mix64((seed ^ tag) & MASK64)


def stream_value(base: int, counter: int) -> int:
    """``counter``-th 64-bit value of the stream rooted at ``base``."""
    return mix64((base + counter * GAMMA) & MASK64)


def trial_seed(master_seed: int, trial_index: int) -> int:
    """Per-trial seed: a keyed function of (master seed, trial index).

    Trials can therefore run in any order, or in parallel, and still see
    identical randomness.
    """
    return stream_value(derive_stream(master_seed, TRIAL_STREAM_TAG), trial_index)


class ProbeMode(Enum):
    FULLY_RANDOM = "random"
    DOUBLE_HASHING = "double"


@dataclass(frozen=True)
class ProbeParams:
    """Probe configuration: PRF seed plus table size ``n``."""

    seed: int
    table_size: int

    def __post_init__(self):
        if self.table_size < 1:
            raise InvalidArgumentError("table_size must be >= 1")


def _key_base(seed: int, key: int) -> int:
    probe_seed = derive_stream(seed, PROBE_STREAM_TAG)
    return mix64((probe_seed + (key & MASK64) * GAMMA) & MASK64)


def _double_hash_params(key_base: int, n: int) -> tuple[int, int]:
    start = mix64(key_base ^ DH_START_TAG) % n
    step = mix64(key_base ^ DH_STEP_TAG) | 1
    return start, step


def probe_at(key: int, j: int, params: ProbeParams, mode: ProbeMode) -> int:
    """Cell index probed by ``key`` at position ``j`` (1-based) of its sequence.

    Deterministic in (key, j, seed, table size, mode).  Double hashing
    requires a power-of-two table size.
    """
    if j < 1:
        raise InvalidArgumentError("probe index j must be >= 1")
    n = params.table_size
    base = _key_base(params.seed, key)
    if mode is ProbeMode.FULLY_RANDOM:
        return stream_value(base, j) % n
    if n & (n - 1):
        raise InvalidArgumentError(
            "double hashing requires a power-of-two table size"
        )
    start, step = _double_hash_params(base, n)
    return (start + (j - 1) * step) % n
