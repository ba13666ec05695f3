"""Undirected graph container, edge-list IO and synthetic families.

Graphs are simple (no self-loops, no multi-edges) with nodes labelled by
dense indices 0..N-1. Edge-list input may use arbitrary non-negative
integer ids and directed/duplicated lines; loading canonicalizes to an
undirected simple graph and remembers the original ids in ``orig_ids``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ParseError, ValidationError
from .rng import make_rng


@dataclass(frozen=True)
class Graph:
    """Immutable undirected simple graph.

    adjacency[i] is the sorted tuple of neighbours of node i.
    orig_ids maps dense index -> original id of the source file, when known.
    """

    n: int
    adjacency: tuple[tuple[int, ...], ...]
    orig_ids: tuple[int, ...] | None = None
    edge_count: int = field(init=False)
    connected: bool = field(init=False)

    def __post_init__(self):
        if self.n <= 0:
            raise ValidationError("empty graph")
        if len(self.adjacency) != self.n:
            raise ValidationError("adjacency length does not match node count")
        deg_total = 0
        for i, nbrs in enumerate(self.adjacency):
            prev = -1
            for j in nbrs:
                if not 0 <= j < self.n:
                    raise ValidationError(f"neighbour {j} of node {i} out of range")
                if j == i:
                    raise ValidationError(f"self-loop at node {i}")
                if j <= prev:
                    raise ValidationError(f"adjacency of node {i} not sorted/unique")
                if i not in self.adjacency[j]:
                    raise ValidationError(f"edge {i}-{j} not symmetric")
                prev = j
            deg_total += len(nbrs)
        object.__setattr__(self, "edge_count", deg_total // 2)
        object.__setattr__(self, "connected", len(_component(self, 0)) == self.n)

    def degree_array(self) -> np.ndarray:
        return np.array([len(nbrs) for nbrs in self.adjacency], dtype=np.int64)


def _component(g: Graph, start: int) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in g.adjacency[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return seen


def graph_from_edges(n: int, edges: Iterable[tuple[int, int]],
                     orig_ids: tuple[int, ...] | None = None) -> Graph:
    """Build a Graph from an iterable of (i, j) pairs on nodes 0..n-1.

    Self-loops are dropped, duplicates and reversed duplicates collapse.
    """
    nbrs: list[set[int]] = [set() for _ in range(n)]
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise ValidationError(f"edge ({i},{j}) out of range for n={n}")
        if i == j:
            continue
        nbrs[i].add(j)
        nbrs[j].add(i)
    return Graph(n, tuple(tuple(sorted(s)) for s in nbrs), orig_ids)


def load_edge_list(source) -> Graph:
    """Parse a whitespace-delimited edge list into a canonical Graph.

    ``source`` may be a str, bytes, or any iterable of lines (e.g. an open
    file). Lines starting with '#' are comments. Each data line holds two
    non-negative integer ids; ids are remapped to dense [0, N) in sorted
    order and the mapping is kept in ``orig_ids``.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = [ln.decode("utf-8") if isinstance(ln, bytes) else ln for ln in source]

    raw_edges: list[tuple[int, int]] = []
    ids: set[int] = set()
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != 2:
            raise ParseError(f"expected 2 tokens, got {len(tokens)}", lineno)
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ParseError(f"non-integer token in {tokens!r}", lineno) from None
        if u < 0 or v < 0:
            raise ParseError("negative node id", lineno)
        ids.add(u)
        ids.add(v)
        raw_edges.append((u, v))

    if not ids:
        raise ValidationError("empty graph")
    order = sorted(ids)
    dense = {orig: k for k, orig in enumerate(order)}
    return graph_from_edges(len(order), [(dense[u], dense[v]) for u, v in raw_edges],
                            orig_ids=tuple(order))


def serialize_edge_list(g: Graph) -> str:
    """Inverse of load_edge_list on canonical graphs: one 'i j' line per edge."""
    out = []
    for i in range(g.n):
        for j in g.adjacency[i]:
            if i < j:
                out.append(f"{i} {j}")
    return "\n".join(out) + ("\n" if out else "")


def largest_connected_component(g: Graph) -> Graph:
    """Restrict to the largest component, ids re-densified preserving order.

    Ties break toward the component containing the smallest node id.
    """
    remaining = set(range(g.n))
    best: set[int] = set()
    while remaining:
        comp = _component(g, min(remaining))
        remaining -= comp
        if len(comp) > len(best):  # first-found wins ties: smallest id seed
            best = comp
    keep = sorted(best)
    dense = {old: k for k, old in enumerate(keep)}
    edges = [(dense[i], dense[j]) for i in keep for j in g.adjacency[i] if i < j]
    orig = tuple(g.orig_ids[i] for i in keep) if g.orig_ids else tuple(keep)
    return graph_from_edges(len(keep), edges, orig_ids=orig)


def degrees(g: Graph) -> np.ndarray:
    """Degree vector of a connected graph; errors on isolated nodes."""
    d = g.degree_array()
    if int(d.min()) == 0:
        raise ValidationError("graph has an isolated node")
    if not g.connected:
        raise ValidationError("graph is not connected")
    return d


def is_bipartite(g: Graph) -> bool:
    color = [-1] * g.n
    for start in range(g.n):
        if color[start] != -1:
            continue
        color[start] = 0
        queue = deque([start])
        while queue:
            i = queue.popleft()
            for j in g.adjacency[i]:
                if color[j] == -1:
                    color[j] = 1 - color[i]
                    queue.append(j)
                elif color[j] == color[i]:
                    return False
    return True


def graph_info(g: Graph) -> dict:
    d = g.degree_array()
    return {
        "nodes": g.n,
        "edges": g.edge_count,
        "min_degree": int(d.min()),
        "max_degree": int(d.max()),
        "connected": g.connected,
    }


def path_graph(n: int) -> Graph:
    if n < 2:
        raise ValidationError("path graph needs n >= 2")
    return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise ValidationError("cycle graph needs n >= 3")
    return graph_from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def star_graph(n: int) -> Graph:
    """Hub node 0 connected to n-1 leaves."""
    if n < 2:
        raise ValidationError("star graph needs n >= 2")
    return graph_from_edges(n, [(0, i) for i in range(1, n)])


def complete_graph(n: int) -> Graph:
    if n < 2:
        raise ValidationError("complete graph needs n >= 2")
    return graph_from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def erdos_renyi(n: int, p: float, seed: int) -> Graph:
    """G(n, p) with Philox-seeded coin flips; may be disconnected."""
    if n < 2:
        raise ValidationError("erdos_renyi needs n >= 2")
    if not 0.0 <= p <= 1.0:
        raise ValidationError("edge probability must lie in [0, 1]")
    rng = make_rng(seed)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    coins = rng.random(len(pairs))
    return graph_from_edges(n, [e for e, c in zip(pairs, coins) if c < p])


def random_connected_graph(n: int, extra_edge_prob: float, seed: int) -> Graph:
    """Uniform random attachment tree plus independent extra edges.

    Always connected; used for randomized property checks.
    """
    if n < 2:
        raise ValidationError("random_connected_graph needs n >= 2")
    rng = make_rng(seed)
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    coins = rng.random(len(pairs))
    edges.extend(e for e, c in zip(pairs, coins) if c < extra_edge_prob)
    return graph_from_edges(n, edges)
