"""Partially directed acyclic graphs and their orientation machinery.

A :class:`Pdag` holds a graph whose edges are either directed or undirected,
with no directed cycle.  A :class:`Mpdag` is a Pdag that is additionally
closed under the four orientation rules R1-R4 (checked at construction).
DAGs and CPDAGs are both valid Mpdags, so every operation below applies to
them unchanged.

Vertices carry stable string labels.  All public functions speak labels;
dense integer indices are an internal detail.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

from .errors import GraphValidationError, InconsistentKnowledgeError

__all__ = [
    "Pdag",
    "Mpdag",
    "BucketDecomposition",
    "meek_closure",
    "rule_violations",
    "construct_mpdag",
    "cpdag_from_dag",
    "bucket_decomposition",
    "ancestors_in_subgraph",
    "possible_descendants",
    "exists_proper_possibly_causal_undirected_start",
    "saturated_mpdag",
    "graph_to_dict",
    "graph_from_dict",
    "load_graph",
    "save_graph",
]


class Pdag:
    """Partially directed acyclic graph over labelled vertices.

    Parameters
    ----------
    vertices:
        Sequence of unique string labels.
    directed:
        Iterable of (tail, head) label pairs, one per directed edge.
    undirected:
        Iterable of label pairs, one per undirected edge (order irrelevant).

    Every vertex pair may carry at most one edge, self loops are rejected,
    and the directed part must be acyclic.
    """

    __slots__ = ("vertices", "_idx", "_pa", "_ch", "_nb")

    def __init__(
        self,
        vertices: Sequence[str],
        directed: Iterable[tuple[str, str]] = (),
        undirected: Iterable[tuple[str, str]] = (),
    ):
        vertices = tuple(vertices)
        if any(not isinstance(v, str) for v in vertices):
            raise GraphValidationError("vertex labels must be strings")
        if len(set(vertices)) != len(vertices):
            raise GraphValidationError("duplicate vertex labels")
        self.vertices = vertices
        self._idx = {v: i for i, v in enumerate(vertices)}
        p = len(vertices)
        self._pa: list[set[int]] = [set() for _ in range(p)]
        self._ch: list[set[int]] = [set() for _ in range(p)]
        self._nb: list[set[int]] = [set() for _ in range(p)]

        def resolve(u, v):
            try:
                i, j = self._idx[u], self._idx[v]
            except KeyError as e:
                raise GraphValidationError(f"unknown vertex label {e.args[0]!r}") from None
            if i == j:
                raise GraphValidationError(f"self loop at {u!r}")
            return i, j

        for u, v in directed:
            i, j = resolve(u, v)
            if j in self._ch[i] or i in self._ch[j] or j in self._nb[i]:
                raise GraphValidationError(f"more than one edge between {u!r} and {v!r}")
            self._ch[i].add(j)
            self._pa[j].add(i)
        for u, v in undirected:
            i, j = resolve(u, v)
            if j in self._ch[i] or i in self._ch[j] or j in self._nb[i]:
                raise GraphValidationError(f"more than one edge between {u!r} and {v!r}")
            self._nb[i].add(j)
            self._nb[j].add(i)
        if self._directed_cycle():
            raise GraphValidationError("directed part contains a cycle")

    def _directed_cycle(self) -> bool:
        indeg = [len(s) for s in self._pa]
        queue = deque(i for i, d in enumerate(indeg) if d == 0)
        seen = 0
        while queue:
            i = queue.popleft()
            seen += 1
            for j in self._ch[i]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    queue.append(j)
        return seen != len(self.vertices)

    # -- label-level queries -------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def index(self, label: str) -> int:
        try:
            return self._idx[label]
        except KeyError:
            raise GraphValidationError(f"unknown vertex label {label!r}") from None

    @property
    def directed_edges(self) -> tuple[tuple[str, str], ...]:
        lab = self.vertices
        out = [(lab[i], lab[j]) for i in range(len(lab)) for j in sorted(self._ch[i])]
        return tuple(sorted(out))

    @property
    def undirected_edges(self) -> tuple[tuple[str, str], ...]:
        lab = self.vertices
        out = [
            (lab[i], lab[j])
            for i in range(len(lab))
            for j in sorted(self._nb[i])
            if i < j
        ]
        return tuple(sorted(out))

    @property
    def is_dag(self) -> bool:
        return all(not s for s in self._nb)

    def has_directed(self, u: str, v: str) -> bool:
        return self.index(v) in self._ch[self.index(u)]

    def has_undirected(self, u: str, v: str) -> bool:
        return self.index(v) in self._nb[self.index(u)]

    def adjacent(self, u: str, v: str) -> bool:
        i, j = self.index(u), self.index(v)
        return j in self._ch[i] or i in self._ch[j] or j in self._nb[i]

    def parents_of(self, v: str) -> frozenset[str]:
        return frozenset(self.vertices[i] for i in self._pa[self.index(v)])

    def children_of(self, v: str) -> frozenset[str]:
        return frozenset(self.vertices[i] for i in self._ch[self.index(v)])

    def undirected_neighbors_of(self, v: str) -> frozenset[str]:
        return frozenset(self.vertices[i] for i in self._nb[self.index(v)])

    def __eq__(self, other):
        if not isinstance(other, Pdag):
            return NotImplemented
        return (
            self.vertices == other.vertices
            and self._ch == other._ch
            and self._nb == other._nb
        )

    def __hash__(self):
        return hash((self.vertices, self.directed_edges, self.undirected_edges))

    def __repr__(self):
        return (
            f"{type(self).__name__}(|V|={self.n_vertices}, "
            f"directed={len(self.directed_edges)}, undirected={len(self.undirected_edges)})"
        )


class Mpdag(Pdag):
    """Pdag that is closed under the orientation rules R1-R4.

    Construction verifies closure and raises :class:`GraphValidationError`
    naming the violated rule otherwise.  Internal callers that produce
    provably closed output skip the re-check via ``_trusted``.
    """

    def __init__(self, vertices, directed=(), undirected=(), *, _trusted: bool = False):
        super().__init__(vertices, directed, undirected)
        if not _trusted:
            viol = rule_violations(self)
            if viol:
                rule, vs = viol[0]
                raise GraphValidationError(
                    f"graph is not rule-closed: {rule} applies at {vs}"
                    + (f" (+{len(viol) - 1} more)" if len(viol) > 1 else "")
                )


# -- orientation rules -------------------------------------------------------


class _MutableGraph:
    """Adjacency scratch space for the orientation-rule fixpoint."""

    __slots__ = ("pa", "ch", "nb")

    def __init__(self, g: Pdag):
        self.pa = [set(s) for s in g._pa]
        self.ch = [set(s) for s in g._ch]
        self.nb = [set(s) for s in g._nb]

    def adjacent(self, i: int, j: int) -> bool:
        return j in self.pa[i] or j in self.ch[i] or j in self.nb[i]

    def orient(self, i: int, j: int, queue: deque) -> None:
        if j in self.ch[i]:
            return
        if j in self.pa[i]:
            raise GraphValidationError(
                "orientation rules conflict: edge forced in both directions "
                f"between vertex indices {i} and {j}"
            )
        self.nb[i].discard(j)
        self.nb[j].discard(i)
        self.ch[i].add(j)
        self.pa[j].add(i)
        queue.append((i, j))


def _close(m: _MutableGraph, queue: deque) -> None:
    """Drive R1-R4 to a fixpoint.

    The queue holds directed edges not yet examined.  Each rule consumes one
    or two directed edges plus undirected edges and non-adjacencies; since
    orienting only adds directed edges (queued here) and removes undirected
    ones, re-examining every popped edge in each directed role of each rule
    reaches the fixpoint.
    """
    while queue:
        a, b = queue.popleft()
        # R1:  a -> b - c, a and c non-adjacent         =>  b -> c
        for c in list(m.nb[b]):
            if c != a and not m.adjacent(a, c):
                m.orient(b, c, queue)
        # R2 with (a, b) as the first edge of a -> b -> c, a - c  =>  a -> c
        for c in list(m.ch[b]):
            if c in m.nb[a]:
                m.orient(a, c, queue)
        # R2 with (a, b) as the second edge: x -> a -> b, x - b   =>  x -> b
        for x in list(m.pa[a]):
            if b in m.nb[x]:
                m.orient(x, b, queue)
        # R3:  a -> b <- c, d - a, d - b, d - c, a and c non-adjacent  =>  d -> b
        for d in list(m.nb[b]):
            if d == a or d not in m.nb[a]:
                continue
            if any(
                c != a and c in m.nb[d] and not m.adjacent(a, c)
                for c in m.pa[b]
            ):
                m.orient(d, b, queue)
        # R4 with (a, b) as the first edge of a -> b -> c,
        #     d - a, d - b, d - c, a and c non-adjacent  =>  d -> c
        for c in list(m.ch[b]):
            if c == a or m.adjacent(a, c):
                continue
            for d in list(m.nb[c]):
                if d in m.nb[a] and d in m.nb[b]:
                    m.orient(d, c, queue)
        # R4 with (a, b) as the second edge: x -> a -> b
        for x in list(m.pa[a]):
            if x == b or m.adjacent(x, b):
                continue
            for d in list(m.nb[b]):
                if d in m.nb[x] and d in m.nb[a]:
                    m.orient(d, b, queue)


def _freeze(vertices: tuple[str, ...], m: _MutableGraph) -> Mpdag:
    directed = [
        (vertices[i], vertices[j]) for i in range(len(vertices)) for j in m.ch[i]
    ]
    undirected = [
        (vertices[i], vertices[j])
        for i in range(len(vertices))
        for j in m.nb[i]
        if i < j
    ]
    return Mpdag(vertices, directed, undirected, _trusted=True)


def meek_closure(g: Pdag) -> Mpdag:
    """Close ``g`` under R1-R4 and return the result.

    Orientation rules only direct existing undirected edges, so the skeleton
    is unchanged and (for any input whose orientations are consistent) the
    output stays acyclic; acyclicity is re-checked by construction.
    """
    m = _MutableGraph(g)
    queue = deque((i, j) for i in range(g.n_vertices) for j in m.ch[i])
    _close(m, queue)
    return _freeze(g.vertices, m)


def rule_violations(g: Pdag) -> list[tuple[str, tuple[str, ...]]]:
    """All places where an orientation rule fires but its conclusion is absent.

    Returns ``(rule_name, vertex_labels)`` tuples; empty when ``g`` is closed.
    Used by validation and by the ``graph validate`` command to report which
    rule a non-maximal graph violates.
    """
    out = []
    lab = g.vertices
    p = g.n_vertices
    adj = lambda i, j: j in g._ch[i] or i in g._ch[j] or j in g._nb[i]
    for b in range(p):
        for a in g._pa[b]:
            # R1: a -> b - c, a/c non-adjacent
            for c in g._nb[b]:
                if c != a and not adj(a, c):
                    out.append(("R1", (lab[a], lab[b], lab[c])))
            # R2: a -> b -> c, a - c
            for c in g._ch[b]:
                if c in g._nb[a]:
                    out.append(("R2", (lab[a], lab[b], lab[c])))
        # R3: a -> b <- c, d - a, d - b, d - c, a/c non-adjacent
        for d in g._nb[b]:
            for a, c in combinations(sorted(g._pa[b] & g._nb[d]), 2):
                if not adj(a, c):
                    out.append(("R3", (lab[a], lab[b], lab[c], lab[d])))
        # R4: a -> b -> c, d - a, d - b, d - c, a/c non-adjacent
        for a in g._pa[b]:
            for c in g._ch[b]:
                if c == a or adj(a, c):
                    continue
                for d in g._nb[c]:
                    if d in g._nb[a] and d in g._nb[b]:
                        out.append(("R4", (lab[a], lab[b], lab[c], lab[d])))
    return out


def construct_mpdag(g: Pdag, knowledge: Iterable[tuple[str, str]]) -> Mpdag:
    """Embed background knowledge edges into ``g`` and re-close.

    Each knowledge pair (x, y) asserts the direction x -> y.  Pairs are
    processed in order: a pair whose edge is already directed x -> y is a
    no-op, an undirected x - y is oriented and the rules are re-closed, and
    anything else (edge absent, or directed y -> x) raises
    :class:`InconsistentKnowledgeError`.  The final graph is independent of
    the processing order.
    """
    if not isinstance(g, Mpdag):
        g = Mpdag(g.vertices, g.directed_edges, g.undirected_edges)
    m = _MutableGraph(g)
    for x, y in knowledge:
        i, j = g.index(x), g.index(y)
        if j in m.ch[i]:
            continue
        if j in m.nb[i]:
            queue: deque = deque()
            m.orient(i, j, queue)
            _close(m, queue)
        else:
            reason = "oriented against it" if j in m.pa[i] else "not adjacent"
            raise InconsistentKnowledgeError(
                f"knowledge edge {x!r} -> {y!r} cannot be embedded: {reason}"
            )
    return _freeze(g.vertices, m)


def cpdag_from_dag(d: Pdag) -> Mpdag:
    """CPDAG of a DAG: skeleton plus the orientations shared by its
    Markov equivalence class (unshielded colliders, closed under the rules)."""
    if not d.is_dag:
        raise GraphValidationError("input must be a DAG (no undirected edges)")
    p = d.n_vertices
    pairs = {(min(i, j), max(i, j)) for i in range(p) for j in d._ch[i]}
    skel = Pdag(
        d.vertices,
        (),
        [(d.vertices[i], d.vertices[j]) for i, j in sorted(pairs)],
    )
    m = _MutableGraph(skel)
    queue: deque = deque()
    for b in range(p):
        for a, c in combinations(sorted(d._pa[b]), 2):
            if not (c in d._ch[a] or a in d._ch[c] or c in d._nb[a]):
                m.orient(a, b, queue)
                m.orient(c, b, queue)
    _close(m, queue)
    return _freeze(d.vertices, m)


# -- bucket decomposition ----------------------------------------------------


@dataclass(frozen=True)
class BucketDecomposition:
    """Ordered partition of the vertices into buckets.

    Buckets are the connected components of the undirected part, ordered so
    that every directed edge between two buckets points from the earlier to
    the later one.  ``external_parents[k]`` holds the parents of bucket k
    that lie outside it; for a valid Mpdag every member of a bucket has
    exactly this set as its out-of-bucket parents (restrictive property).
    """

    vertex_order: tuple[str, ...]
    buckets: tuple[tuple[str, ...], ...]
    external_parents: tuple[tuple[str, ...], ...]
    _bucket_index: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        index = {}
        for k, bucket in enumerate(self.buckets):
            for v in bucket:
                index[v] = k
        object.__setattr__(self, "_bucket_index", index)

    def __len__(self) -> int:
        return len(self.buckets)

    def bucket_of(self, label: str) -> int:
        return self._bucket_index[label]

    def prefix(self, k: int) -> tuple[str, ...]:
        """Labels of buckets 0..k-1, concatenated in order."""
        out: list[str] = []
        for bucket in self.buckets[:k]:
            out.extend(bucket)
        return tuple(out)


def bucket_decomposition(g: Pdag) -> BucketDecomposition:
    """Decompose ``g`` into its ordered buckets.

    Repeatedly peels a component of the undirected part all of whose edges
    to the not-yet-peeled rest point into it, prepending each peel; among
    equally peelable components the one with the largest leading vertex
    position goes first, so tied components appear in vertex order in the
    result.  Raises if no component can be peeled (only possible for graphs
    that are not valid Mpdags) or if the restrictive parent property fails.
    """
    p = g.n_vertices
    comp = [-1] * p
    n_comp = 0
    for s in range(p):
        if comp[s] != -1:
            continue
        stack = [s]
        comp[s] = n_comp
        while stack:
            i = stack.pop()
            for j in g._nb[i]:
                if comp[j] == -1:
                    comp[j] = n_comp
                    stack.append(j)
        n_comp += 1
    members: list[list[int]] = [[] for _ in range(n_comp)]
    for i in range(p):
        members[comp[i]].append(i)

    remaining = set(range(n_comp))
    order: deque[int] = deque()
    in_remaining = [True] * n_comp
    while remaining:
        eligible = [
            c
            for c in remaining
            if not any(
                in_remaining[comp[j]] and comp[j] != c
                for i in members[c]
                for j in g._ch[i]
            )
        ]
        if not eligible:
            raise GraphValidationError(
                "no bucket can be peeled: directed edges run in both directions "
                "between undirected components (graph is not a valid Mpdag)"
            )
        c = max(eligible, key=lambda c: members[c][0])
        remaining.remove(c)
        in_remaining[c] = False
        order.appendleft(c)

    lab = g.vertices
    buckets = []
    ext_parents = []
    for c in order:
        bucket = set(members[c])
        pa = set().union(*(g._pa[i] for i in bucket)) - bucket
        for i in bucket:
            if g._pa[i] - bucket != pa:
                raise GraphValidationError(
                    f"restrictive parent property fails in bucket "
                    f"{tuple(lab[v] for v in sorted(bucket))}: vertex {lab[i]!r} "
                    "does not share the bucket's external parents"
                )
        buckets.append(tuple(lab[i] for i in sorted(bucket)))
        ext_parents.append(tuple(lab[i] for i in sorted(pa)))
    return BucketDecomposition(lab, tuple(buckets), tuple(ext_parents))


# -- reachability and path queries -------------------------------------------


def ancestors_in_subgraph(g: Pdag, y: str, removed: Iterable[str] = ()) -> frozenset[str]:
    """Vertices with a directed path to ``y`` (including ``y``) in the graph
    induced on the vertices outside ``removed``.  Undirected edges do not
    contribute."""
    gone = {g.index(v) for v in removed}
    t = g.index(y)
    if t in gone:
        raise GraphValidationError(f"outcome {y!r} is among the removed vertices")
    seen = {t}
    stack = [t]
    while stack:
        j = stack.pop()
        for i in g._pa[j]:
            if i not in gone and i not in seen:
                seen.add(i)
                stack.append(i)
    return frozenset(g.vertices[i] for i in seen)


def _no_back_edge(g: Pdag, w: int, on_path: set[int]) -> bool:
    # a path stays possibly causal iff no appended vertex points back at it
    return not (g._ch[w] & on_path)


def possible_descendants(g: Pdag, sources: Iterable[str]) -> frozenset[str]:
    """All vertices reachable from ``sources`` by a possibly causal path.

    A path is possibly causal when no directed edge runs from a later path
    vertex to an earlier one; the test is pairwise over the whole path, so
    the search enumerates simple paths exactly rather than doing plain BFS.
    """
    src = [g.index(s) for s in sources]
    found = set(src)

    def walk(v: int, on_path: set[int]) -> None:
        for w in g._ch[v] | g._nb[v]:
            if w in on_path or not _no_back_edge(g, w, on_path):
                continue
            found.add(w)
            on_path.add(w)
            walk(w, on_path)
            on_path.remove(w)

    for s in src:
        walk(s, {s})
    return frozenset(g.vertices[i] for i in found)


def exists_proper_possibly_causal_undirected_start(
    g: Pdag, treatment: Iterable[str], outcome: str
) -> bool:
    """Is there a proper possibly causal path from ``treatment`` to
    ``outcome`` whose first edge is undirected?

    Proper means only the first vertex lies in the treatment set.  The
    search is an exact DFS over simple paths with the pairwise
    no-back-edge test; candidates are pre-filtered to vertices that can
    still reach the outcome through forward/undirected edges, which only
    discards provably hopeless extensions.
    """
    a_idx = {g.index(v) for v in treatment}
    t = g.index(outcome)
    if t in a_idx:
        raise GraphValidationError("outcome cannot be part of the treatment set")

    # relaxed reverse reachability: an over-approximation of "can reach t"
    reach = {t}
    stack = [t]
    while stack:
        j = stack.pop()
        for i in (g._pa[j] | g._nb[j]) - a_idx:
            if i not in reach:
                reach.add(i)
                stack.append(i)

    def walk(v: int, on_path: set[int]) -> bool:
        for w in g._ch[v] | g._nb[v]:
            if w == t and _no_back_edge(g, w, on_path):
                return True
            if w in on_path or w in a_idx or w not in reach:
                continue
            if not _no_back_edge(g, w, on_path):
                continue
            on_path.add(w)
            if walk(w, on_path):
                return True
            on_path.remove(w)
        return False

    for s in a_idx:
        for w in g._nb[s]:  # the first edge must be undirected
            if w == t:
                return True
            if w in a_idx or w not in reach:
                continue
            if walk(w, {s, w}):
                return True
    return False


def saturated_mpdag(g: Pdag) -> Mpdag:
    """Add directed edges so every bucket's external parents become the
    entire union of earlier buckets.  Buckets and their order are unchanged,
    and the result is again rule-closed."""
    dec = bucket_decomposition(g)
    directed = set(g.directed_edges)
    for k in range(1, len(dec)):
        for u in dec.prefix(k):
            for v in dec.buckets[k]:
                if not g.adjacent(u, v):
                    directed.add((u, v))
    return Mpdag(g.vertices, sorted(directed), g.undirected_edges)


# -- JSON input/output --------------------------------------------------------


def graph_to_dict(g: Pdag) -> dict:
    return {
        "vertices": list(g.vertices),
        "directed": [list(e) for e in g.directed_edges],
        "undirected": [list(e) for e in g.undirected_edges],
    }


def graph_from_dict(d: dict, strict: bool = False) -> Pdag:
    """Build a graph from the JSON structure
    ``{"vertices": [...], "directed": [[u, v], ...], "undirected": [[u, v], ...]}``.

    With ``strict=True`` the graph must additionally be rule-closed and an
    :class:`Mpdag` is returned; the error message names the violated rule.
    """
    if not isinstance(d, dict):
        raise GraphValidationError("graph JSON must be an object")
    for key in ("vertices", "directed", "undirected"):
        if key not in d:
            raise GraphValidationError(f"graph JSON is missing the {key!r} field")
    extras = set(d) - {"vertices", "directed", "undirected"}
    if extras:
        raise GraphValidationError(f"unknown graph JSON fields: {sorted(extras)}")

    def pairs(key):
        out = []
        for e in d[key]:
            if not (isinstance(e, (list, tuple)) and len(e) == 2):
                raise GraphValidationError(f"{key!r} entries must be [u, v] pairs")
            out.append((e[0], e[1]))
        return out

    cls = Mpdag if strict else Pdag
    return cls(d["vertices"], pairs("directed"), pairs("undirected"))


def load_graph(path, strict: bool = False) -> Pdag:
    with open(path, "r", encoding="utf-8") as fh:
        return graph_from_dict(json.load(fh), strict=strict)


def save_graph(g: Pdag, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_dict(g), fh, indent=2, sort_keys=True)
        fh.write("\n")
