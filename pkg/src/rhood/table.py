"""Robin Hood open-addressing hash table with exact age bookkeeping.

The *age* of a key is the 1-based index of the probe-sequence position at
which it currently resides; a standard search therefore examines exactly
``age`` cells to find it.  On a collision the resident with the larger age
keeps the cell and the younger key continues down its own probe sequence,
its age growing by one per attempted position.

Three modes are supported:

* insert-only -- no deletions;
* tombstone deletion -- a deleted key leaves a marker carrying its age.
  Markers behave like residents for placement and search, except that an
  inserting key whose age is at least the marker's age claims the cell and
  the marker is discarded;
* no-tombstone (hard) deletion -- the cell simply becomes empty again.
  Empty cells and younger residents then stop being search witnesses, so
  unsuccessful searches can only stop once the probe index passes the
  largest live age, which the table tracks via per-age counters.

Keys are opaque integers; no payloads are stored.  Placement, deletion
sampling, and search consume randomness from seeded streams defined in
:mod:`rhood.probing`, so any run replays exactly.  This class is the
readable reference implementation; large experiments use the compiled
kernels, which are held bit-for-bit equivalent by the test suite.
"""

from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    DuplicateKeyError,
    EmptyTableError,
    InvalidArgumentError,
    TableFullError,
    UnsupportedOperationError,
)
from .probing import (
    DELETE_STREAM_TAG,
    ProbeMode,
    ProbeParams,
    _double_hash_params,
    _key_base,
    derive_stream,
    stream_value,
)
from enum import Enum


class TableMode(Enum):
    INSERT_ONLY = "insert-only"
    TOMBSTONE = "tombstone"
    NO_TOMBSTONE = "no-tombstone"


class _Tombstone:
    __slots__ = ()

    def __repr__(self):
        return "<tombstone>"


TOMBSTONE = _Tombstone()


class DeletionStream:
    """Counter-mode stream used solely for uniform deletion sampling.

    Kept independent of the probe randomness so probe sequences replay
    identically whether or not deletions happen.
    """

    def __init__(self, seed: int):
        self._base = derive_stream(seed, DELETE_STREAM_TAG)
        self._counter = 0

    def next_below(self, bound: int) -> int:
        value = stream_value(self._base, self._counter)
        self._counter += 1
        return value % bound


@dataclass
class PlacementReport:
    """Outcome of one insertion.

    ``steps`` counts every probe attempt of the whole displacement chain,
    including the final successful one.  ``final_ages`` maps each key whose
    cell changed to its new age; ``inserted_age`` is the new key's own age.
    """

    steps: int
    final_ages: dict[int, int]
    inserted_age: int


@dataclass
class SearchResult:
    found: bool
    probes: int


class TableState:
    """A Robin Hood hash table of ``n`` cells (no resizing)."""

    def __init__(
        self,
        n: int,
        seed: int,
        mode: TableMode = TableMode.INSERT_ONLY,
        probe_mode: ProbeMode = ProbeMode.FULLY_RANDOM,
    ):
        if n < 1:
            raise InvalidArgumentError("table size must be >= 1")
        if probe_mode is ProbeMode.DOUBLE_HASHING and n & (n - 1):
            raise InvalidArgumentError(
                "double hashing requires a power-of-two table size"
            )
        self.n = n
        self.mode = mode
        self.probe_params = ProbeParams(seed=seed, table_size=n)
        self.probe_mode = probe_mode
        # cell_key[i]: None (empty), TOMBSTONE, or the resident key.
        self.cell_key: list = [None] * n
        # cell_age[i]: age of the live key or tombstone at i, 0 if empty.
        self.cell_age: list[int] = [0] * n
        # Dense live-key registry with O(1) uniform sampling and removal.
        self.live_ids: list[int] = []
        self._live_index: dict[int, int] = {}
        self._key_cell: dict[int, int] = {}
        self.age_counts: dict[int, int] = {}
        self.max_age = 0
        self.step_count = 0
        self._delete_stream = DeletionStream(seed)

    # -- internal helpers -------------------------------------------------

    def _positions(self, key: int):
        """Probe-position generator for ``key``, identical to probe_at."""
        base = _key_base(self.probe_params.seed, key)
        n = self.n
        if self.probe_mode is ProbeMode.FULLY_RANDOM:
            j = 1
            while True:
                yield stream_value(base, j) % n
                j += 1
        else:
            start, step = _double_hash_params(base, n)
            pos = start
            while True:
                yield pos
                pos = (pos + step) % n

    def _count_age(self, age: int, delta: int):
        c = self.age_counts.get(age, 0) + delta
        if c:
            self.age_counts[age] = c
        else:
            self.age_counts.pop(age, None)
            if age == self.max_age:
                self.max_age = max(self.age_counts, default=0)
        if delta > 0 and age > self.max_age:
            self.max_age = age

    @property
    def live_count(self) -> int:
        return len(self.live_ids)

    # -- operations --------------------------------------------------------

    def insert(self, key: int) -> PlacementReport:
        """Insert a fresh key, displacing younger residents as it goes."""
        if key in self._live_index:
            raise DuplicateKeyError(f"key {key!r} is already live")
        if self.live_count >= self.n:
            raise TableFullError("no empty cells remain for live keys")

        hand = key
        age = 1
        steps = 0
        final_ages: dict[int, int] = {}
        positions = self._positions(hand)
        while True:
            steps += 1
            self.step_count += 1
            pos = next(positions)
            resident = self.cell_key[pos]
            if resident is None:
                self._place(hand, pos, age, final_ages)
                break
            if resident is TOMBSTONE:
                # Only reachable in tombstone mode.  An equal or younger
                # marker is claimed and discarded; an older one makes the
                # hand key move on.
                if self.cell_age[pos] <= age:
                    self._place(hand, pos, age, final_ages)
                    break
                age += 1
            elif self.cell_age[pos] < age:
                # Robin Hood swap: the younger resident is displaced and
                # continues from its next probe position.
                displaced, displaced_age = resident, self.cell_age[pos]
                self._count_age(displaced_age, -1)
                self._place(hand, pos, age, final_ages)
                hand, age = displaced, displaced_age + 1
                positions = self._positions(hand)
                for _ in range(displaced_age):
                    next(positions)
            else:
                age += 1

        self.live_ids.append(key)
        self._live_index[key] = len(self.live_ids) - 1
        return PlacementReport(
            steps=steps, final_ages=final_ages, inserted_age=final_ages[key]
        )

    def _place(self, hand: int, pos: int, age: int, final_ages: dict[int, int]):
        self.cell_key[pos] = hand
        self.cell_age[pos] = age
        self._key_cell[hand] = pos
        self._count_age(age, +1)
        final_ages[hand] = age

    def delete_random(self, stream: DeletionStream | None = None) -> int:
        """Remove a uniformly random live key; returns its id."""
        if self.mode is TableMode.INSERT_ONLY:
            raise UnsupportedOperationError("insert-only tables do not delete")
        if not self.live_ids:
            raise EmptyTableError("no live keys to delete")
        stream = stream or self._delete_stream
        idx = stream.next_below(self.live_count)
        key = self.live_ids[idx]
        last = self.live_ids[-1]
        self.live_ids[idx] = last
        self._live_index[last] = idx
        self.live_ids.pop()
        del self._live_index[key]

        pos = self._key_cell.pop(key)
        age = self.cell_age[pos]
        self._count_age(age, -1)
        if self.mode is TableMode.TOMBSTONE:
            self.cell_key[pos] = TOMBSTONE  # marker keeps the key's age
        else:
            self.cell_key[pos] = None
            self.cell_age[pos] = 0
        return key

    def search(self, key: int) -> SearchResult:
        """Probe for ``key``; both outcomes report cells examined.

        Stopping rules for a miss depend on the mode: insert-only stops on
        an empty cell or a resident younger than the probe index; tombstone
        mode treats markers like residents for that test; hard deletion has
        no cell-local witnesses at all.  All modes stop once the probe index
        exceeds the largest live age.
        """
        probes = 0
        j = 1
        positions = self._positions(key)
        while j <= self.max_age:
            pos = next(positions)
            probes += 1
            resident = self.cell_key[pos]
            if resident == key:
                return SearchResult(found=True, probes=probes)
            if self.mode is not TableMode.NO_TOMBSTONE:
                # Live or marker ages below the probe index witness a miss;
                # so does any empty cell.
                if resident is None or self.cell_age[pos] < j:
                    break
            j += 1
        return SearchResult(found=False, probes=probes)

    def age_histogram(self) -> dict[int, Fraction]:
        """Exact fraction of live keys at each age (sums to 1)."""
        total = self.live_count
        if not total:
            raise EmptyTableError("age histogram of an empty table")
        return {
            age: Fraction(count, total) for age, count in sorted(self.age_counts.items())
        }

    def successful_search_cost(self) -> float:
        """Mean probes to find a live key, i.e. the mean age."""
        total = self.live_count
        if not total:
            raise EmptyTableError("search cost of an empty table")
        weighted = sum(age * count for age, count in self.age_counts.items())
        return float(Fraction(weighted, total))

    # -- diagnostics -------------------------------------------------------

    def check_invariants(self):
        """Structure checks used by the test suite; cost O(n * max_age)."""
        live_cells = sum(
            1 for c in self.cell_key if c is not None and c is not TOMBSTONE
        )
        assert live_cells == self.live_count == sum(self.age_counts.values())
        assert self.max_age == max(self.age_counts, default=0)
        if self.mode is TableMode.NO_TOMBSTONE:
            return
        # Placement never skips an empty cell: every earlier probe position
        # of a placed entry (live or marker) is non-empty.
        for pos in range(self.n):
            resident = self.cell_key[pos]
            if resident is None or resident is TOMBSTONE:
                continue
            j = self.cell_age[pos]
            positions = self._positions(resident)
            for j_prev in range(1, j):
                earlier = next(positions)
                assert self.cell_key[earlier] is not None, (
                    f"empty cell at probe {j_prev} below placed age {j}"
                )
