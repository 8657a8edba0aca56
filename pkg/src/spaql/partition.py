"""Adaptive covering tree over the standard state-action space.

Balls are axis-aligned boxes of the infinity metric.  A ball of depth n has
radius 2**-n and covers ``[c - r, c + r)`` along every coordinate (closed at
the global upper boundary +1), so the leaves always tile the space exactly
and a leaf's domain is the whole ball.

Nodes are stored struct-of-arrays in a :class:`Nodes` pool so the episode
loops in :mod:`spaql.agents` can run compiled.  A pool may hold several
roots; the per-timestep partitions of adaptive Q-learning share one pool.
Children of a ball are stored contiguously, ordered by state orthant and
then by action half (continuous) or action (categorical), which makes the
relevant-ball lookup a direct index computation.
"""
from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from numba import njit

from .metric_space import SpaceSpec


class Nodes(NamedTuple):
    center: np.ndarray  # float64 (cap, n_coords)
    depth: np.ndarray  # int64 (cap,)
    child: np.ndarray  # int64 (cap,) index of first child, -1 for leaves
    nchild: np.ndarray  # int64 (cap,)
    amask: np.ndarray  # int64 (cap,) bitmask of categorical actions
    q: np.ndarray  # float64 (cap,)
    visits: np.ndarray  # int64 (cap,)
    order: np.ndarray  # int64 (cap,) creation index, used for tie-breaks
    counts: np.ndarray  # int64: [n_nodes, next_order, leaf count per root...]
    stack: np.ndarray  # int64 (cap,) traversal workspace
    out: np.ndarray  # int64 (cap,) traversal workspace


def _alloc(cap: int, n_coords: int, n_roots: int) -> Nodes:
    return Nodes(
        center=np.zeros((cap, n_coords)),
        depth=np.zeros(cap, dtype=np.int64),
        child=np.full(cap, -1, dtype=np.int64),
        nchild=np.zeros(cap, dtype=np.int64),
        amask=np.zeros(cap, dtype=np.int64),
        q=np.zeros(cap),
        visits=np.zeros(cap, dtype=np.int64),
        order=np.zeros(cap, dtype=np.int64),
        counts=np.zeros(2 + n_roots, dtype=np.int64),
        stack=np.zeros(cap, dtype=np.int64),
        out=np.zeros(cap, dtype=np.int64),
    )


def _grow(nodes: Nodes, cap: int) -> Nodes:
    n = int(nodes.counts[0])
    new = _alloc(cap, nodes.center.shape[1], len(nodes.counts) - 2)
    for name in ("center", "depth", "child", "nchild", "amask", "q", "visits", "order"):
        getattr(new, name)[:n] = getattr(nodes, name)[:n]
    new.counts[:] = nodes.counts
    return new


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def collect_leaves(nodes, root, x, S):
    """Write every leaf under ``root`` whose state cell contains ``x`` into
    ``nodes.out`` in ascending child order; returns how many."""
    stack = nodes.stack
    out = nodes.out
    n = 0
    stack[0] = root
    top = 1
    while top > 0:
        top -= 1
        b = stack[top]
        k = nodes.nchild[b]
        if k == 0:
            out[n] = b
            n += 1
            continue
        s = 0
        for i in range(S):
            if x[i] >= nodes.center[b, i]:
                s |= 1 << i
        per = k >> S
        base = nodes.child[b] + s * per
        for j in range(per - 1, -1, -1):
            stack[top] = base + j
            top += 1
    return n


@njit(cache=True)
def greedy_leaf(nodes, root, x, S):
    """Relevant leaf with the largest Q estimate; ties go to the earliest created."""
    n = collect_leaves(nodes, root, x, S)
    out = nodes.out
    best = out[0]
    for i in range(1, n):
        b = out[i]
        if nodes.q[b] > nodes.q[best] or (nodes.q[b] == nodes.q[best] and nodes.order[b] < nodes.order[best]):
            best = b
    return best


@njit(cache=True)
def max_q(nodes, root, x, S):
    n = collect_leaves(nodes, root, x, S)
    m = -np.inf
    for i in range(n):
        v = nodes.q[nodes.out[i]]
        if v > m:
            m = v
    return m


@njit(cache=True)
def value_upper_kernel(nodes, root, x, S, H):
    return min(float(H), max_q(nodes, root, x, S))


@njit(cache=True)
def sample_action_kernel(nodes, b, S, rng):
    """Uniform action inside leaf ``b``: a value in [-1, 1] for continuous
    spaces, an action index for categorical ones."""
    m = nodes.amask[b]
    if m == 0:
        r = math.ldexp(1.0, -nodes.depth[b])
        return nodes.center[b, S] - r + 2.0 * r * rng.random()
    cnt = 0
    t = m
    while t:
        cnt += t & 1
        t >>= 1
    pick = int(rng.random() * cnt)
    if pick >= cnt:
        pick = cnt - 1
    idx = 0
    while True:
        if (m >> idx) & 1:
            if pick == 0:
                return float(idx)
            pick -= 1
        idx += 1


@njit(cache=True)
def split_kernel(nodes, b, S, slot):
    """Replace leaf ``b`` by its dyadic children.  Caller guarantees capacity."""
    n = nodes.counts[0]
    h = 0.5 * math.ldexp(1.0, -nodes.depth[b])
    m = nodes.amask[b]
    if m == 0:
        per = 2
    else:
        per = 0
        t = m
        while t:
            per += t & 1
            t >>= 1
    k = (1 << S) * per
    nodes.child[b] = n
    nodes.nchild[b] = k
    for s in range(1 << S):
        a = 0
        for j in range(per):
            idx = n + s * per + j
            for i in range(S):
                if (s >> i) & 1:
                    nodes.center[idx, i] = nodes.center[b, i] + h
                else:
                    nodes.center[idx, i] = nodes.center[b, i] - h
            if m == 0:
                nodes.center[idx, S] = nodes.center[b, S] + (h if j == 1 else -h)
                nodes.amask[idx] = 0
            else:
                while not (m >> a) & 1:
                    a += 1
                nodes.amask[idx] = 1 << a
                a += 1
            nodes.depth[idx] = nodes.depth[b] + 1
            nodes.q[idx] = nodes.q[b]
            nodes.visits[idx] = nodes.visits[b]
            nodes.child[idx] = -1
            nodes.nchild[idx] = 0
            nodes.order[idx] = nodes.counts[1]
            nodes.counts[1] += 1
    nodes.counts[0] = n + k
    nodes.counts[2 + slot] += k - 1


@njit(cache=True)
def split_due(nodes, b):
    d = nodes.depth[b]
    if d >= 31:
        return False
    return nodes.visits[b] >= (1 << (2 * d))


def split_threshold(depth: int) -> int:
    """Visits a ball of the given depth needs before it splits: (d_max / r)^2 = 4**depth."""
    return 4**depth


def max_children(spec: SpaceSpec) -> int:
    return (1 << spec.state_dims) * (spec.n_actions if spec.categorical else 2)


# ---------------------------------------------------------------------------
# Python surface


class Ball:
    """View of one node of a :class:`PartitionTree`."""

    __slots__ = ("tree", "index")

    def __init__(self, tree: "PartitionTree", index: int):
        self.tree = tree
        self.index = int(index)

    def __eq__(self, other):
        return isinstance(other, Ball) and other.tree is self.tree and other.index == self.index

    def __hash__(self):
        return hash((id(self.tree), self.index))

    def __repr__(self):
        return f"Ball(index={self.index}, depth={self.depth}, q={self.q_estimate:.6g}, visits={self.visit_count})"

    @property
    def _nodes(self) -> Nodes:
        return self.tree.nodes

    @property
    def depth(self) -> int:
        return int(self._nodes.depth[self.index])

    @property
    def radius(self) -> float:
        return math.ldexp(1.0, -self.depth)

    @property
    def center(self) -> np.ndarray:
        return self._nodes.center[self.index].copy()

    @property
    def q_estimate(self) -> float:
        return float(self._nodes.q[self.index])

    @q_estimate.setter
    def q_estimate(self, value: float):
        self._nodes.q[self.index] = value

    @property
    def visit_count(self) -> int:
        return int(self._nodes.visits[self.index])

    @property
    def creation_index(self) -> int:
        return int(self._nodes.order[self.index])

    @property
    def is_leaf(self) -> bool:
        return self._nodes.nchild[self.index] == 0

    @property
    def children(self) -> list["Ball"]:
        first = self._nodes.child[self.index]
        return [Ball(self.tree, first + j) for j in range(int(self._nodes.nchild[self.index]))]

    @property
    def action_cell(self):
        """(lo, hi) action interval for continuous spaces, otherwise the tuple
        of action indices available in this ball."""
        spec = self.tree.spec
        if spec.categorical:
            m = int(self._nodes.amask[self.index])
            return tuple(i for i in range(spec.n_actions) if (m >> i) & 1)
        c = self._nodes.center[self.index, spec.state_dims]
        return (c - self.radius, c + self.radius)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = self._nodes.center[self.index]
        return c - self.radius, c + self.radius

    def contains(self, state: Sequence[float], action=None) -> bool:
        """Half-open cell membership; the action is ignored when ``None``."""
        spec = self.tree.spec
        lo, hi = self.bounds()
        S = spec.state_dims
        coords = list(state)
        if action is not None and not spec.categorical:
            coords.append(float(action))
        for i, v in enumerate(coords):
            if v < lo[i] or (v >= hi[i] and not (hi[i] == 1.0 and v == 1.0)):
                return False
        if action is not None and spec.categorical:
            return int(action) in self.action_cell
        return len(coords) >= S

    def record_visit(self) -> int:
        self._nodes.visits[self.index] += 1
        return self.visit_count


class PartitionTree:
    """One adaptive partition: a root ball covering the whole standard space.

    Several trees may share one node pool (see :class:`Forest`); ``slot``
    identifies this tree's leaf counter in the pool.
    """

    def __init__(self, spec: SpaceSpec, H: int, *, capacity: int = 1024, forest=None, slot: int = 0):
        if H < 1:
            raise ValueError("horizon must be at least 1")
        self.spec = spec
        self.H = H
        self.slot = slot
        self._forest = forest
        if forest is None:
            self._nodes = _alloc(max(capacity, 1 + max_children(spec)), spec.n_coords, 1)
            self.root_index = _add_root(self._nodes, spec, H, 0)
        else:
            self.root_index = forest.roots[slot]

    @property
    def nodes(self) -> Nodes:
        return self._forest.nodes if self._forest is not None else self._nodes

    @property
    def root(self) -> Ball:
        return Ball(self, self.root_index)

    @property
    def S(self) -> int:
        return self.spec.state_dims

    def reserve(self, extra_nodes: int):
        """Make room for at least ``extra_nodes`` more nodes."""
        if self._forest is not None:
            self._forest.reserve(extra_nodes)
            return
        n = int(self._nodes.counts[0])
        cap = len(self._nodes.q)
        if n + extra_nodes > cap:
            self._nodes = _grow(self._nodes, max(2 * cap, n + extra_nodes))

    def copy(self) -> "PartitionTree":
        if self._forest is not None:
            raise ValueError("trees inside a shared pool cannot be copied individually")
        new = PartitionTree.__new__(PartitionTree)
        new.spec, new.H, new.slot, new._forest = self.spec, self.H, 0, None
        new.root_index = self.root_index
        n = int(self._nodes.counts[0])
        new._nodes = _grow(self._nodes, max(len(self._nodes.q), n + 1))
        return new

    def copy_from(self, other: "PartitionTree"):
        """Overwrite this tree with a copy of ``other`` (same space)."""
        n = int(other.nodes.counts[0])
        if len(self._nodes.q) < n + 1 + max_children(self.spec):
            self._nodes = _grow(other.nodes, len(other.nodes.q))
            return
        for name in ("center", "depth", "child", "nchild", "amask", "q", "visits", "order"):
            getattr(self._nodes, name)[:n] = getattr(other.nodes, name)[:n]
        self._nodes.counts[:] = other.nodes.counts

    # -- lookups ---------------------------------------------------------

    def _state(self, state) -> np.ndarray:
        x = np.asarray(getattr(state, "coords", state), dtype=float)
        if x.shape != (self.S,):
            raise ValueError(f"state must have {self.S} coordinates")
        return np.clip(x, -1.0, 1.0)

    def relevant_leaves(self, state) -> list[Ball]:
        n = collect_leaves(self.nodes, self.root_index, self._state(state), self.S)
        return [Ball(self, i) for i in self.nodes.out[:n]]

    def greedy(self, state) -> Ball:
        return Ball(self, greedy_leaf(self.nodes, self.root_index, self._state(state), self.S))

    def value_upper(self, state, H: int | None = None) -> float:
        H = self.H if H is None else H
        return float(value_upper_kernel(self.nodes, self.root_index, self._state(state), self.S, H))

    def leaf_containing(self, state, action) -> Ball:
        for ball in self.relevant_leaves(state):
            if ball.contains(self._state(state), action):
                return ball
        raise AssertionError("partition does not cover the point")

    # -- structure -------------------------------------------------------

    def arm_count(self) -> int:
        return int(self.nodes.counts[2 + self.slot])

    @property
    def leaf_count(self) -> int:
        return self.arm_count()

    def leaves(self) -> list[Ball]:
        """All leaves, ordered by creation index."""
        out, stack = [], [self.root_index]
        nodes = self.nodes
        while stack:
            b = stack.pop()
            k = int(nodes.nchild[b])
            if k == 0:
                out.append(b)
            else:
                stack.extend(range(int(nodes.child[b]), int(nodes.child[b]) + k))
        out.sort(key=lambda i: nodes.order[i])
        return [Ball(self, i) for i in out]

    def split(self, ball: Ball):
        if not ball.is_leaf:
            raise ValueError("only leaves can be split")
        self.reserve(max_children(self.spec))
        split_kernel(self.nodes, ball.index, self.S, self.slot)

    def split_if_due(self, ball: Ball) -> bool:
        if not ball.is_leaf:
            raise ValueError("only leaves can be split")
        if not split_due(self.nodes, ball.index):
            return False
        self.split(ball)
        return True

    # -- policy tables ---------------------------------------------------

    def to_policy_table(self) -> list[tuple]:
        """One row per leaf: (lo, hi, action cell, q, visits) in creation order."""
        rows = []
        S = self.S
        for ball in self.leaves():
            lo, hi = ball.bounds()
            rows.append((lo[:S].copy(), hi[:S].copy(), ball.action_cell, ball.q_estimate, ball.visit_count))
        return rows

    @classmethod
    def from_policy_table(cls, spec: SpaceSpec, H: int, rows: Iterable[tuple]) -> "PartitionTree":
        """Rebuild a tree whose leaves match ``rows`` (as produced by
        :meth:`to_policy_table`); leaf creation order follows row order."""
        tree = cls(spec, H)
        rows = list(rows)
        leaf_rows = []
        for lo, hi, cell, q, visits in rows:
            lo = np.asarray(lo, dtype=float)
            hi = np.asarray(hi, dtype=float)
            radius = float(hi[0] - lo[0]) / 2
            depth = int(round(-math.log2(radius)))
            target = (lo + hi) / 2
            if spec.categorical:
                act = cell[0]
            else:
                act = (cell[0] + cell[1]) / 2
            b = tree.root_index
            nodes = tree.nodes
            while nodes.depth[b] < depth or (spec.categorical and nodes.nchild[b] == 0 and len(cell) < _popcount(nodes.amask[b])):
                if nodes.nchild[b] == 0:
                    tree.split(Ball(tree, b))
                    nodes = tree.nodes
                b = _descend(tree, b, target, act)
            while nodes.nchild[b] != 0:
                b = _descend(tree, b, target, act)
            leaf_rows.append((b, q, visits))
        nodes = tree.nodes
        seen = set()
        for rank, (b, q, visits) in enumerate(leaf_rows):
            if b in seen:
                raise ValueError("policy table rows overlap")
            seen.add(b)
            nodes.q[b] = q
            nodes.visits[b] = visits
            nodes.order[b] = -len(leaf_rows) + rank
        if len(seen) != tree.arm_count():
            raise ValueError("policy table rows do not tile the space")
        return tree


def _popcount(m) -> int:
    return bin(int(m)).count("1")


def _descend(tree: PartitionTree, b: int, target: np.ndarray, act) -> int:
    nodes = tree.nodes
    S = tree.S
    s = 0
    for i in range(S):
        if target[i] >= nodes.center[b, i]:
            s |= 1 << i
    k = int(nodes.nchild[b])
    per = k >> S
    base = int(nodes.child[b]) + s * per
    for j in range(per):
        c = base + j
        m = int(nodes.amask[c])
        if m == 0:
            if (act >= nodes.center[b, S]) == (nodes.center[c, S] > nodes.center[b, S]):
                return c
        elif (m >> int(act)) & 1:
            return c
    raise ValueError("policy table row does not match the partition")


def _add_root(nodes: Nodes, spec: SpaceSpec, H: int, slot: int) -> int:
    i = int(nodes.counts[0])
    nodes.center[i] = 0.0
    nodes.depth[i] = 0
    nodes.child[i] = -1
    nodes.nchild[i] = 0
    nodes.amask[i] = (1 << spec.n_actions) - 1 if spec.categorical else 0
    nodes.q[i] = float(H)
    nodes.visits[i] = 0
    nodes.order[i] = nodes.counts[1]
    nodes.counts[1] += 1
    nodes.counts[0] = i + 1
    nodes.counts[2 + slot] = 1
    return i


class Forest:
    """Several independent partitions sharing one node pool."""

    def __init__(self, spec: SpaceSpec, H: int, n_trees: int, capacity: int | None = None):
        self.spec = spec
        self.H = H
        cap = capacity or n_trees * (1 + max_children(spec))
        self.nodes = _alloc(max(cap, n_trees + max_children(spec)), spec.n_coords, n_trees)
        self.roots = np.array([_add_root(self.nodes, spec, H, h) for h in range(n_trees)], dtype=np.int64)
        self.trees = [PartitionTree(spec, H, forest=self, slot=h) for h in range(n_trees)]

    def reserve(self, extra_nodes: int):
        n = int(self.nodes.counts[0])
        cap = len(self.nodes.q)
        if n + extra_nodes > cap:
            self.nodes = _grow(self.nodes, max(2 * cap, n + extra_nodes))

    def arm_count(self) -> int:
        return int(self.nodes.counts[2:].sum())


def new_tree(spec: SpaceSpec, H: int) -> PartitionTree:
    return PartitionTree(spec, H)


def relevant_leaves(tree: PartitionTree, state) -> list[Ball]:
    return tree.relevant_leaves(state)


def select_greedy(leaves: Sequence[Ball]) -> Ball:
    """Leaf with the largest Q estimate; ties go to the smallest creation index."""
    if not leaves:
        raise ValueError("no leaves to select from")
    return max(leaves, key=lambda b: (b.q_estimate, -b.creation_index))


def sample_action(ball: Ball, rng: np.random.Generator):
    a = sample_action_kernel(ball.tree.nodes, ball.index, ball.tree.S, rng)
    return int(a) if ball.tree.spec.categorical else float(a)


def value_upper(tree: PartitionTree, state, H: int) -> float:
    return tree.value_upper(state, H)


def arm_count(tree: PartitionTree) -> int:
    return tree.arm_count()


def record_visit(ball: Ball) -> int:
    return ball.record_visit()


# ---------------------------------------------------------------------------
# tab-separated policy tables


def _fmt(x: float, digits: int = 9) -> str:
    return format(float(x), f".{digits}g")


def table_header(spec: SpaceSpec) -> list[str]:
    cols = []
    for i in range(spec.state_dims):
        cols += [f"dim{i}_lo", f"dim{i}_hi"]
    cols += ["action_set"] if spec.categorical else ["action_lo", "action_hi"]
    return cols + ["q", "visits"]


def format_policy_rows(spec: SpaceSpec, rows: Iterable[tuple], digits: int = 9) -> list[str]:
    lines = ["\t".join(table_header(spec))]
    for lo, hi, cell, q, visits in rows:
        fields = []
        for a, b in zip(lo, hi):
            fields += [_fmt(a), _fmt(b)]
        if spec.categorical:
            fields.append(",".join(str(i) for i in cell))
        else:
            fields += [_fmt(cell[0]), _fmt(cell[1])]
        fields += [_fmt(q, digits), str(int(visits))]
        lines.append("\t".join(fields))
    return lines


def parse_policy_rows(spec: SpaceSpec, lines: Iterable[str]) -> list[tuple]:
    """Inverse of :func:`format_policy_rows`; the header line must come first."""
    it = iter(lines)
    header = next(it).rstrip("\n").split("\t")
    if header != table_header(spec):
        raise ValueError("policy table header does not match the space")
    S = spec.state_dims
    rows = []
    for line in it:
        line = line.rstrip("\n")
        if not line:
            continue
        f = line.split("\t")
        lo = np.array([float(f[2 * i]) for i in range(S)])
        hi = np.array([float(f[2 * i + 1]) for i in range(S)])
        if spec.categorical:
            cell = tuple(int(a) for a in f[2 * S].split(","))
            rest = f[2 * S + 1:]
        else:
            cell = (float(f[2 * S]), float(f[2 * S + 1]))
            rest = f[2 * S + 2:]
        rows.append((lo, hi, cell, float(rest[0]), int(rest[1])))
    return rows
