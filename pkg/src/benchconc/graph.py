"""Benchmark-author-institution graph and its centrality statistics.

The algorithms work on any :class:`Graph` (an undirected simple graph with
hashable nodes). :class:`TripartiteGraph` adds the typing rules for the
ecosystem projection: edges join benchmark-author or author-institution
pairs only.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Iterator, Optional, Sequence, Union

from . import metrics
from .records import BenchmarkRecord

BENCHMARK, AUTHOR, INSTITUTION = "benchmark", "author", "institution"
NODE_KINDS = (BENCHMARK, AUTHOR, INSTITUTION)
_ALLOWED_PAIRS = {frozenset((BENCHMARK, AUTHOR)), frozenset((AUTHOR, INSTITUTION))}


@dataclass(frozen=True, order=True)
class EcoNode:
    kind: str
    label: str

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if "\t" in self.label or "\n" in self.label or "\r" in self.label:
            raise ValueError(f"node label may not contain tabs or newlines: {self.label!r}")

    @property
    def id(self) -> str:
        return f"{self.kind}:{self.label}"

    def __str__(self) -> str:
        return self.id


class Graph:
    """Undirected simple graph; node iteration follows insertion order."""

    def __init__(self, edges: Iterable[tuple[Hashable, Hashable]] = (),
                 nodes: Iterable[Hashable] = ()):
        # neighbour dicts (not sets) keep iteration independent of string hashing
        self._adj: dict[Hashable, dict] = {}
        for v in nodes:
            self.add_node(v)
        for u, v in edges:
            self.add_edge(u, v)

    def add_node(self, v: Hashable) -> None:
        self._adj.setdefault(v, {})

    def add_edge(self, u: Hashable, v: Hashable) -> None:
        if u == v:
            raise ValueError(f"self-loop on {u!r}")
        self.add_node(u)
        self.add_node(v)
        self._adj[u][v] = None
        self._adj[v][u] = None

    def __contains__(self, v) -> bool:
        return v in self._adj

    def __len__(self) -> int:
        return len(self._adj)

    @property
    def nodes(self) -> list:
        return list(self._adj)

    def neighbors(self, v):
        return self._adj[v].keys()

    def degree(self, v) -> int:
        return len(self._adj[v])

    def number_of_nodes(self) -> int:
        return len(self._adj)

    def number_of_edges(self) -> int:
        return sum(len(n) for n in self._adj.values()) // 2

    def edges(self) -> Iterator[tuple]:
        seen = set()
        for u, nbrs in self._adj.items():
            seen.add(u)
            for v in nbrs:
                if v not in seen:
                    yield u, v

    def subgraph(self, keep: Iterable[Hashable]) -> "Graph":
        keep = set(keep)
        sub = type(self)()
        for v, nbrs in self._adj.items():
            if v in keep:
                sub._adj[v] = {w: None for w in nbrs if w in keep}
        return sub

    def connected_components(self) -> list[list]:
        seen: set = set()
        out = []
        for s in self._adj:
            if s in seen:
                continue
            comp = [s]
            seen.add(s)
            queue = deque([s])
            while queue:
                v = queue.popleft()
                for w in self._adj[v]:
                    if w not in seen:
                        seen.add(w)
                        comp.append(w)
                        queue.append(w)
            out.append(comp)
        return out


class TripartiteGraph(Graph):
    """Graph over :class:`EcoNode` with the two permitted edge kinds."""

    def add_node(self, v: EcoNode) -> None:
        if not isinstance(v, EcoNode):
            raise TypeError(f"TripartiteGraph nodes must be EcoNode, got {v!r}")
        super().add_node(v)

    def add_edge(self, u: EcoNode, v: EcoNode) -> None:
        if frozenset((u.kind, v.kind)) not in _ALLOWED_PAIRS:
            raise ValueError(f"edge {u} -- {v} joins disallowed kinds")
        super().add_edge(u, v)

    def nodes_of(self, kind: str) -> list[EcoNode]:
        return [v for v in self._adj if v.kind == kind]

    def degree_sequence(self) -> list[tuple[str, str, int]]:
        return sorted((v.kind, v.label, len(n)) for v, n in self._adj.items())


def build_graph(records: Sequence[BenchmarkRecord]) -> TripartiteGraph:
    """One node per benchmark, distinct author and distinct institution."""
    if not records:
        raise ValueError("build_graph needs at least one record")
    g = TripartiteGraph()
    seen: set[str] = set()
    for rec in records:
        if rec.id in seen:
            raise ValueError(f"duplicate benchmark id {rec.id!r}")
        seen.add(rec.id)
        bench = EcoNode(BENCHMARK, rec.id)
        g.add_node(bench)
        for name in rec.authors:
            g.add_edge(bench, EcoNode(AUTHOR, name))
        for aff in rec.affiliations:
            g.add_edge(EcoNode(AUTHOR, aff.author), EcoNode(INSTITUTION, aff.institution))
    return g


def degree_centrality(g: Graph) -> dict:
    n = g.number_of_nodes()
    if n < 2:
        raise ValueError("degree centrality needs at least two nodes")
    return {v: g.degree(v) / (n - 1) for v in g.nodes}


def core_numbers(g: Graph) -> dict:
    """Core number of every node, by bucket peeling."""
    degree = {v: g.degree(v) for v in g.nodes}
    if not degree:
        return {}
    buckets: list[set] = [set() for _ in range(max(degree.values()) + 1)]
    for v, d in degree.items():
        buckets[d].add(v)
    core = {}
    current = 0
    for _ in range(len(degree)):
        while not buckets[current]:
            current += 1
        v = buckets[current].pop()
        core[v] = current
        for w in g.neighbors(v):
            if w in core:
                continue
            d = degree[w]
            if d > current:
                buckets[d].discard(w)
                degree[w] = d - 1
                buckets[d - 1].add(w)
    return core


def k_core(g: Graph, k: int, largest_component: bool = True) -> Graph:
    """Maximal subgraph with minimum degree k.

    By default only the largest connected component of the core is returned;
    ties between equal-sized components go to the one discovered first.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    core = core_numbers(g)
    sub = g.subgraph(v for v, c in core.items() if c >= k)
    if not largest_component or len(sub) == 0:
        return sub
    comps = sub.connected_components()
    best = max(comps, key=len)
    return sub.subgraph(best)


def _brandes_raw(g: Graph) -> dict:
    nodes = g.nodes
    cb = dict.fromkeys(nodes, 0.0)
    for s in nodes:
        stack = []
        preds: dict = {v: [] for v in nodes}
        sigma = dict.fromkeys(nodes, 0)
        sigma[s] = 1
        dist = {s: 0}
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in g.neighbors(v):
                if w not in dist:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = dict.fromkeys(nodes, 0.0)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                cb[w] += delta[w]
    return cb


def betweenness(g: Graph) -> dict:
    """Shortest-path betweenness normalised by the (N-1)(N-2)/2 pair count."""
    n = g.number_of_nodes()
    if n < 3:
        return dict.fromkeys(g.nodes, 0.0)
    raw = _brandes_raw(g)
    # each unordered pair is counted from both endpoints
    scale = 1.0 / ((n - 1) * (n - 2))
    return {v: c * scale for v, c in raw.items()}


def degree_gini(g: Graph, kinds: Optional[Iterable[str]] = None) -> float:
    cent = degree_centrality(g)
    if kinds is not None:
        kinds = set(kinds)
        cent = {v: c for v, c in cent.items() if v.kind in kinds}
    try:
        return metrics.gini(list(cent.values()))
    except metrics.UndefinedMetricError:
        raise ValueError("degree gini undefined: graph has no edges") from None


# ---------------------------------------------------------------------------
# edge-list interchange: ``kind:label<TAB>kind:label`` per line


_KIND_ORDER = {k: i for i, k in enumerate(NODE_KINDS)}


def _edge_key(u: EcoNode, v: EcoNode) -> tuple[EcoNode, EcoNode]:
    return (u, v) if (_KIND_ORDER[u.kind], u.label) <= (_KIND_ORDER[v.kind], v.label) else (v, u)


def parse_node(token: str) -> EcoNode:
    kind, sep, label = token.partition(":")
    if not sep or not label:
        raise ValueError(f"malformed node token {token!r}")
    return EcoNode(kind, label)


def write_edgelist(g: TripartiteGraph, path: Union[str, Path]) -> None:
    edges = sorted((_edge_key(u, v) for u, v in g.edges()),
                   key=lambda e: (_KIND_ORDER[e[0].kind], e[0].label,
                                  _KIND_ORDER[e[1].kind], e[1].label))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, v in edges:
            fh.write(f"{u.id}\t{v.id}\n")


def read_edgelist(path: Union[str, Path]) -> TripartiteGraph:
    """Isolated nodes are not representable in the format and are not restored."""
    g = TripartiteGraph()
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two tab-separated nodes")
            g.add_edge(parse_node(parts[0]), parse_node(parts[1]))
    return g
