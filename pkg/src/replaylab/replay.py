"""Growing replay buffer with sum-tree weighted sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np

from . import kernels
from .errors import OrderingError, ParameterError, SamplingError
from .weighting import SchemeKind, WeightScheme, scheme_weight

SeedLike = Union[int, np.random.Generator, None]


@dataclass(frozen=True)
class Transition:
    state: int
    action: int
    reward: float
    next_state: int
    episode: int
    step: int
    global_time: int


class SumTree:
    """Binary prefix-sum tree in 1-based heap layout.

    ``tree[1]`` holds the total; leaf ``j`` lives at ``tree[capacity + j]``.
    The capacity doubles on demand, so appends stay O(log n) amortized.
    """

    def __init__(self, capacity: int = 1):
        self.capacity = 1
        while self.capacity < capacity:
            self.capacity *= 2
        self.tree = np.zeros(2 * self.capacity)
        self.size = 0

    @property
    def total(self) -> float:
        return float(self.tree[1])

    @property
    def leaves(self) -> np.ndarray:
        return self.tree[self.capacity : self.capacity + self.size]

    def _grow(self, needed: int) -> None:
        cap = self.capacity
        while cap < needed:
            cap *= 2
        if cap == self.capacity:
            return
        old = self.leaves.copy()
        self.capacity = cap
        self.tree = np.zeros(2 * cap)
        self.tree[cap : cap + old.size] = old
        self._rebuild_internal()

    def _rebuild_internal(self) -> None:
        width = self.capacity // 2
        while width >= 1:
            self.tree[width : 2 * width] = (
                self.tree[2 * width : 4 * width : 2] + self.tree[2 * width + 1 : 4 * width : 2]
            )
            width //= 2

    def rebuild(self, weights) -> None:
        """Replace every leaf and recompute all internal sums in O(n)."""
        w = np.asarray(weights, dtype=np.float64)
        self._grow(max(w.size, 1))
        self.tree[:] = 0.0
        self.tree[self.capacity : self.capacity + w.size] = w
        self.size = w.size
        self._rebuild_internal()

    def update(self, index: int, value: float) -> None:
        if not 0 <= index < self.size:
            raise IndexError(index)
        node = self.capacity + index
        change = value - self.tree[node]
        self.tree[node] = value
        node //= 2
        while node >= 1:
            self.tree[node] += change
            node //= 2

    def append(self, value: float) -> None:
        self._grow(self.size + 1)
        self.size += 1
        self.update(self.size - 1, value)

    def find(self, mass) -> np.ndarray:
        """Leaf indices selected by target masses in ``[0, total)``."""
        u = np.ascontiguousarray(mass, dtype=np.float64)
        idx = kernels.tree_sample(self.tree, self.capacity, u)
        return np.minimum(np.asarray(idx, dtype=np.int64), self.size - 1)

    def selection_probabilities(self) -> np.ndarray:
        """Probability of each leaf under :meth:`find` with uniform mass.

        Computed from the internal sums alone: leaf ``j`` is chosen for masses
        in ``[offset_j, offset_{j+1})`` where offsets accumulate left-sibling
        subtotals along the root-to-leaf path.
        """
        offset = np.zeros(2 * self.capacity)
        width = 1
        while width < self.capacity:
            parents = np.arange(width, 2 * width)
            offset[2 * parents] = offset[parents]
            offset[2 * parents + 1] = offset[parents] + self.tree[2 * parents]
            width *= 2
        bounds = np.append(offset[self.capacity : self.capacity + self.size], self.tree[1])
        if self.capacity == 1:
            bounds = np.array([0.0, self.tree[1]])
        return np.diff(bounds) / self.tree[1]


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class _Columns:
    names = ("state", "action", "reward", "next_state", "episode", "step", "global_time")
    dtypes = (np.int64, np.int64, np.float64, np.int64, np.int64, np.int64, np.int64)

    def __init__(self):
        self.data = {n: np.zeros(16, dtype=d) for n, d in zip(self.names, self.dtypes)}
        self.size = 0

    def append(self, t: Transition) -> None:
        if self.size == self.data["state"].size:
            for n in self.names:
                self.data[n] = np.concatenate([self.data[n], np.zeros_like(self.data[n])])
        for n in self.names:
            self.data[n][self.size] = getattr(t, n)
        self.size += 1

    def drop_front(self, count: int) -> None:
        for n in self.names:
            self.data[n][: self.size - count] = self.data[n][count : self.size]
        self.size -= count

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[name][: self.size]


class ReplayBuffer:
    """Insertion-ordered transitions with per-entry sampling weights.

    Index 0 is the oldest entry.  Weights change only through :meth:`push`,
    :meth:`reweight` and :meth:`set_priority`; the sum tree mirrors them so a
    batch of ``b`` draws costs O(b log n).
    """

    def __init__(self, capacity: Optional[int] = None):
        if capacity is not None and capacity < 1:
            raise ParameterError("capacity must be a positive integer")
        self.capacity = capacity
        self._cols = _Columns()
        self._weights = np.zeros(16)
        self._priorities = np.zeros(16)
        self._tree = SumTree()
        self._last_time = 0
        self._frozen = False

    def __len__(self) -> int:
        return self._cols.size

    def __getitem__(self, index: int) -> Transition:
        if not -len(self) <= index < len(self):
            raise IndexError(index)
        index %= len(self)
        return Transition(*(self._cols[n][index].item() for n in _Columns.names))

    def __iter__(self) -> Iterator[Transition]:
        return (self[i] for i in range(len(self)))

    def column(self, name: str) -> np.ndarray:
        return self._cols[name]

    @property
    def weights(self) -> np.ndarray:
        return self._weights[: len(self)]

    @property
    def total_weight(self) -> float:
        return self._tree.total if len(self) else 0.0

    @property
    def last_time(self) -> int:
        return self._last_time

    @property
    def tree(self) -> SumTree:
        return self._tree

    def _check_mutable(self):
        if self._frozen:
            raise RuntimeError("snapshot buffers are read-only")

    def push(self, transition: Transition, weight: float = 1.0, priority: float = 1.0) -> None:
        self._check_mutable()
        if transition.global_time != self._last_time + 1:
            raise OrderingError(
                f"global_time {transition.global_time} does not follow {self._last_time}"
            )
        n = len(self)
        if n == self._weights.size:
            self._weights = np.concatenate([self._weights, np.zeros_like(self._weights)])
            self._priorities = np.concatenate([self._priorities, np.zeros_like(self._priorities)])
        self._cols.append(transition)
        self._weights[n] = weight
        self._priorities[n] = priority
        self._last_time = transition.global_time
        if self.capacity is not None and len(self) > self.capacity:
            excess = len(self) - self.capacity
            self._cols.drop_front(excess)
            m = len(self)
            self._weights[:m] = self._weights[excess : m + excess]
            self._priorities[:m] = self._priorities[excess : m + excess]
            self._tree.rebuild(self.weights)
        else:
            self._tree.append(weight)

    def reweight(self, scheme: WeightScheme, now: Optional[int] = None) -> None:
        """Recompute every weight from the entry's age at global time ``now``."""
        self._check_mutable()
        if not len(self):
            raise SamplingError("cannot reweight an empty buffer")
        now = self._last_time if now is None else int(now)
        ages = now - self._cols["global_time"] + 1
        if ages.min() < 1:
            raise ParameterError(f"now={now} precedes stored transitions")
        if scheme.kind is SchemeKind.PRIORITY:
            w = scheme_weight(scheme, ages, priority=self._priorities[: len(self)])
        else:
            w = scheme_weight(scheme, ages)
        self._weights[: len(self)] = w
        self._tree.rebuild(self.weights)

    def set_weights(self, weights) -> None:
        """Replace every weight at once, oldest entry first."""
        self._check_mutable()
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(self),):
            raise ParameterError(f"need {len(self)} weights, got shape {w.shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ParameterError("weights must be finite and non-negative")
        self._weights[: len(self)] = w
        self._tree.rebuild(self.weights)

    def set_priority(self, index: int, priority: float, scheme: WeightScheme) -> None:
        """Store a new priority and update that entry's weight in O(log n)."""
        self._check_mutable()
        if scheme.kind is not SchemeKind.PRIORITY:
            raise ParameterError("set_priority needs the priority baseline scheme")
        self._priorities[index] = priority
        w = float(scheme_weight(scheme, 1, priority=priority))
        self._weights[index] = w
        self._tree.update(index, w)

    def probabilities(self) -> np.ndarray:
        total = self.weights.sum()
        if total <= 0:
            raise SamplingError("total weight is zero")
        return self.weights / total

    def sample_batch(self, batch_size: int, seed: SeedLike = None) -> np.ndarray:
        """Draw ``batch_size`` indices i.i.d. proportional to the weights."""
        if not len(self):
            raise SamplingError("cannot sample from an empty buffer")
        total = self._tree.total
        if not total > 0:
            raise SamplingError("total weight is zero")
        u = _rng(seed).random(int(batch_size)) * total
        return self._tree.find(u)

    def snapshot(self) -> "ReplayBuffer":
        """Read-only copy safe to sample from in another worker."""
        snap = ReplayBuffer.__new__(ReplayBuffer)
        snap.capacity = self.capacity
        snap._cols = _Columns()
        snap._cols.data = {n: a[: len(self)].copy() for n, a in self._cols.data.items()}
        snap._cols.size = len(self)
        snap._weights = self.weights.copy()
        snap._priorities = self._priorities[: len(self)].copy()
        snap._tree = SumTree(self._tree.capacity)
        snap._tree.tree = self._tree.tree.copy()
        snap._tree.size = self._tree.size
        snap._last_time = self._last_time
        snap._frozen = True
        for arr in (snap._weights, snap._priorities, snap._tree.tree, *snap._cols.data.values()):
            arr.flags.writeable = False
        return snap
