"""Group structures for structured-sparsity penalties.

A group structure is a collection of (possibly overlapping) index subsets of
``{1..p}``, each with a positive weight.  It is the combinatorial input shared
by the penalty evaluation, the proximal operators and the flow graphs.

Indices are 1-based in the public API and in file formats; they are converted
to 0-based arrays internally.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

#: Pairwise nesting auto-detection is O(|G|^2); skip it above this many groups.
NESTING_DETECTION_CAP = 2000


class GroupStructureError(ValueError):
    """Raised when a group structure violates one of its invariants."""


@dataclass(frozen=True)
class GroupStructure:
    """Weighted groups of indices over an ambient dimension ``p``.

    Attributes
    ----------
    p : int
        Ambient dimension; valid indices are 1..p.
    groups : tuple of tuples
        One tuple of sorted 1-based indices per group.
    weights : ndarray
        Positive weight per group.
    nesting : tuple of (int, int)
        Declared containment pairs ``(parent, child)`` as 0-based positions
        into ``groups``, with ``groups[child]`` a strict subset of
        ``groups[parent]``.
    """

    p: int
    groups: tuple[tuple[int, ...], ...]
    weights: np.ndarray
    nesting: tuple[tuple[int, int], ...] = ()

    # Internal 0-based CSR view of the membership lists, built once.
    _ptr: np.ndarray = field(init=False, repr=False, compare=False)
    _members: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", weights)
        groups = tuple(tuple(sorted(int(j) for j in g)) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        _validate_invariants(self.p, groups, weights, self.nesting)
        ptr = np.zeros(len(groups) + 1, dtype=np.int64)
        for i, g in enumerate(groups):
            ptr[i + 1] = ptr[i] + len(g)
        members = np.empty(ptr[-1], dtype=np.int64)
        for i, g in enumerate(groups):
            members[ptr[i]:ptr[i + 1]] = np.asarray(g, dtype=np.int64) - 1
        object.__setattr__(self, "_ptr", ptr)
        object.__setattr__(self, "_members", members)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def member_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """0-based CSR view ``(ptr, members)`` of the membership lists."""
        return self._ptr, self._members

    def group_counts(self) -> np.ndarray:
        """For each index j, the number of groups containing j."""
        counts = np.zeros(self.p, dtype=np.int64)
        np.add.at(counts, self._members, 1)
        return counts

    def weight_sums(self) -> np.ndarray:
        """For each index j, the sum of weights of groups containing j."""
        sums = np.zeros(self.p, dtype=np.float64)
        np.add.at(sums, self._members, np.repeat(self.weights, np.diff(self._ptr)))
        return sums

    def is_partition(self) -> bool:
        """True when the groups are disjoint and cover {1..p}."""
        counts = self.group_counts()
        return bool(np.all(counts == 1))

    def is_tree_structured(self) -> bool:
        """True when every pair of groups is disjoint or nested.

        Only pairs sharing at least one index are checked, so the test stays
        cheap for deep hierarchies.
        """
        sets = [frozenset(g) for g in self.groups]
        by_index: dict[int, list[int]] = {}
        for gi, g in enumerate(self.groups):
            for j in g:
                by_index.setdefault(j, []).append(gi)
        checked: set[tuple[int, int]] = set()
        for shared in by_index.values():
            shared = sorted(shared, key=lambda gi: len(sets[gi]))
            for a, b in zip(shared[:-1], shared[1:]):
                key = (a, b)
                if key in checked:
                    continue
                checked.add(key)
                if not sets[a] <= sets[b]:
                    return False
        return True

    def detect_nesting(self, cap: int = NESTING_DETECTION_CAP) -> tuple[tuple[int, int], ...]:
        """Direct containment pairs (parent, child), found by subset tests.

        Returns the declared hints when present.  Otherwise runs an O(|G|^2)
        scan, skipped (returning ``()``) when there are more than ``cap``
        groups.  Only *direct* containments are reported: a pair is dropped
        when an intermediate group sits strictly between its two members.
        """
        if self.nesting:
            return self.nesting
        m = self.n_groups
        if m > cap:
            return ()
        sets = [frozenset(g) for g in self.groups]
        contains = [[False] * m for _ in range(m)]
        for a in range(m):
            for b in range(m):
                if a != b and sets[b] < sets[a]:
                    contains[a][b] = True
        pairs = []
        for a in range(m):
            for b in range(m):
                if not contains[a][b]:
                    continue
                direct = True
                for c in range(m):
                    if contains[a][c] and contains[c][b]:
                        direct = False
                        break
                if direct:
                    pairs.append((a, b))
        return tuple(pairs)


def _validate_invariants(p, groups, weights, nesting):
    if p < 1:
        raise GroupStructureError(f"ambient dimension must be >= 1, got {p}")
    if len(weights) != len(groups):
        raise GroupStructureError(
            f"{len(groups)} groups but {len(weights)} weights")
    for i, g in enumerate(groups):
        if len(g) == 0:
            raise GroupStructureError(f"group {i + 1} is empty")
        if g[0] < 1 or g[-1] > p:
            raise GroupStructureError(
                f"group {i + 1} has indices outside 1..{p}: {g}")
        if len(set(g)) != len(g):
            raise GroupStructureError(f"group {i + 1} has repeated indices")
    if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
        bad = int(np.argmin(weights))
        raise GroupStructureError(
            f"group weights must be positive and finite; weight {bad + 1} "
            f"is {weights[bad]}")
    sets = [frozenset(g) for g in groups]
    for parent, child in nesting:
        if not (0 <= parent < len(groups) and 0 <= child < len(groups)):
            raise GroupStructureError(
                f"nesting pair ({parent}, {child}) out of range")
        if not sets[child] < sets[parent]:
            raise GroupStructureError(
                f"nesting pair ({parent}, {child}): group {child} is not a "
                f"strict subset of group {parent}")


def validate(gs: GroupStructure) -> list[str]:
    """Re-check all invariants of an existing structure.

    Raises :class:`GroupStructureError` on any violation.  Returns a list of
    warnings (currently: duplicated groups, which are legal -- their weights
    effectively add -- but often unintended).
    """
    _validate_invariants(gs.p, gs.groups, gs.weights, gs.nesting)
    warnings = []
    seen: dict[tuple[int, ...], int] = {}
    for i, g in enumerate(gs.groups):
        if g in seen:
            warnings.append(
                f"group {i + 1} duplicates group {seen[g] + 1}; "
                "their weights add")
        else:
            seen[g] = i
    return warnings


def make_singletons(p: int) -> GroupStructure:
    """One group {j} per index, unit weights: the l1 norm."""
    if p < 1:
        raise GroupStructureError(f"p must be >= 1, got {p}")
    return GroupStructure(p, tuple((j,) for j in range(1, p + 1)),
                          np.ones(p))


def make_partition(blocks: Sequence[Iterable[int]], p: int) -> GroupStructure:
    """Disjoint blocks covering {1..p} (classic non-overlapping groups)."""
    blocks = [tuple(sorted(int(j) for j in b)) for b in blocks]
    covered = np.zeros(p + 1, dtype=np.int64)
    for b in blocks:
        for j in b:
            if not 1 <= j <= p:
                raise GroupStructureError(f"index {j} outside 1..{p}")
            covered[j] += 1
    if np.any(covered[1:] > 1):
        j = int(np.argmax(covered[1:] > 1)) + 1
        raise GroupStructureError(f"blocks overlap at index {j}")
    if np.any(covered[1:] == 0):
        j = int(np.argmax(covered[1:] == 0)) + 1
        raise GroupStructureError(f"index {j} not covered by any block")
    return GroupStructure(p, tuple(blocks), np.ones(len(blocks)))


def make_sliding_windows(p: int, width: int) -> GroupStructure:
    """All contiguous index windows of a fixed width, unit weights."""
    if not 1 <= width <= p:
        raise GroupStructureError(
            f"window width must be in 1..{p}, got {width}")
    groups = tuple(tuple(range(s, s + width)) for s in range(1, p - width + 2))
    return GroupStructure(p, groups, np.ones(len(groups)))


def make_grid_squares(h: int, w: int, k: int, cyclic: bool = False) -> GroupStructure:
    """All k-by-k neighborhoods of an h-by-w grid in row-major indexing.

    With ``cyclic=True`` the neighborhoods wrap at the borders, giving one
    group per grid cell; otherwise there are (h-k+1)*(w-k+1) groups.
    """
    if k < 1 or k > min(h, w):
        raise GroupStructureError(
            f"square size {k} exceeds grid {h}x{w}")
    p = h * w
    groups = []
    row_starts = range(h) if cyclic else range(h - k + 1)
    col_starts = range(w) if cyclic else range(w - k + 1)
    for r0 in row_starts:
        for c0 in col_starts:
            g = []
            for dr in range(k):
                for dc in range(k):
                    r = (r0 + dr) % h if cyclic else r0 + dr
                    c = (c0 + dc) % w if cyclic else c0 + dc
                    g.append(r * w + c + 1)
            groups.append(tuple(sorted(g)))
    return GroupStructure(p, tuple(groups), np.ones(len(groups)))


def make_tree(parent: Sequence[int]) -> GroupStructure:
    """One group per node of a forest: the node plus all its descendants.

    ``parent[j-1]`` is the 1-based parent of node j, or 0 for a root.
    Nesting hints are populated from the tree edges, so the flow graph of the
    resulting structure simplifies to one arc per edge.
    """
    p = len(parent)
    if p < 1:
        raise GroupStructureError("parent array is empty")
    parent = [int(q) for q in parent]
    children: list[list[int]] = [[] for _ in range(p + 1)]
    for j, q in enumerate(parent, start=1):
        if not 0 <= q <= p:
            raise GroupStructureError(f"parent of node {j} out of range: {q}")
        if q == j:
            raise GroupStructureError(f"node {j} is its own parent")
        if q > 0:
            children[q].append(j)

    # Iterative post-order; a node left unvisited afterwards means a cycle.
    descendants: list[set[int] | None] = [None] * (p + 1)
    roots = [j for j in range(1, p + 1) if parent[j - 1] == 0]
    for root in roots:
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                acc = {node}
                for c in children[node]:
                    acc |= descendants[c]  # type: ignore[operator]
                descendants[node] = acc
            else:
                stack.append((node, True))
                for c in children[node]:
                    stack.append((c, False))
    if any(descendants[j] is None for j in range(1, p + 1)):
        j = next(j for j in range(1, p + 1) if descendants[j] is None)
        raise GroupStructureError(
            f"parent array contains a cycle through node {j}")

    groups = tuple(tuple(sorted(descendants[j])) for j in range(1, p + 1))
    nesting = tuple((q - 1, j - 1) for j, q in enumerate(parent, start=1) if q > 0)
    return GroupStructure(p, groups, np.ones(p), nesting)


# ---------------------------------------------------------------------------
# Group file format: one group per line, "weight idx1 idx2 ...", whitespace
# separated, 1-based, with an optional first line "p=<N>".


class GroupFileError(ValueError):
    """Raised on malformed group files; carries the offending line number."""

    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


def write_group_file(path_or_buf, gs: GroupStructure) -> None:
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf, "w") if own else path_or_buf
    try:
        f.write(f"p={gs.p}\n")
        for g, eta in zip(gs.groups, gs.weights):
            f.write("%.17g %s\n" % (eta, " ".join(str(j) for j in g)))
    finally:
        if own:
            f.close()


def read_group_file(path_or_buf, p: int | None = None) -> GroupStructure:
    """Parse a group file; ``p`` overrides / supplies the header dimension."""
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf, "r") if own else path_or_buf
    try:
        return _parse_group_lines(f, p)
    finally:
        if own:
            f.close()


def _parse_group_lines(f: io.TextIOBase, p: int | None) -> GroupStructure:
    groups: list[tuple[int, ...]] = []
    weights: list[float] = []
    header_p = None
    for lineno, raw in enumerate(f, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("p="):
            try:
                header_p = int(line[2:])
            except ValueError:
                raise GroupFileError(lineno, f"bad dimension header {line!r}")
            continue
        parts = line.split()
        try:
            eta = float(parts[0])
        except ValueError:
            raise GroupFileError(lineno, f"bad weight {parts[0]!r}")
        if len(parts) < 2:
            raise GroupFileError(lineno, "group has no indices")
        try:
            idx = tuple(int(s) for s in parts[1:])
        except ValueError:
            raise GroupFileError(lineno, f"bad index in {line!r}")
        groups.append(idx)
        weights.append(eta)
    if p is None:
        p = header_p
    if p is None:
        p = max((max(g) for g in groups), default=0)
    if p == 0:
        raise GroupFileError(0, "empty group file and no dimension given")
    try:
        return GroupStructure(p, tuple(groups), np.asarray(weights))
    except GroupStructureError as e:
        raise GroupFileError(0, str(e)) from e
