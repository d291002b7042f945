"""Linear signal-flow graphs, Mason rewrites and loop analysis.

A graph encodes the linear system ``x = B x``: edge ``l -> k`` carries the
transmission ``B[k, l]``. The *graph determinant*

    factor * (1 + sum_k (-1)^k q_k)

where ``q_k`` sums the transmission products over every unordered k-tuple of
node-disjoint simple loops, equals ``det(I - B)``. ``factor`` starts at 1 and
collects the ``(1 - s)`` terms removed when a self-loop of rate ``s`` is
absorbed or a node is eliminated, so every rewrite in this module leaves the
determinant unchanged.

Sign convention for residuals: ``det(I - B(rho))`` is positive for every rho
above the largest root, so it approaches the largest root from above.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Optional

import networkx as nx
import numpy as np
from scipy.optimize import bisect

from .errors import NumericalError
from .model import GlobalModel, r0_upper_bound

MAX_CYCLES = 10**6
SINGULAR_LOOP_TOL = 1e-12
SCAN_SUBDIVISIONS = 256


class SignalFlowGraph:
    """Immutable weighted digraph; rewrites return new graphs."""

    __slots__ = ("_nodes", "_edges", "factor")

    def __init__(self, nodes: Iterable[Hashable], edges=None, factor: float = 1.0):
        self._nodes = tuple(nodes)
        if len(set(self._nodes)) != len(self._nodes):
            raise ValueError("node labels must be unique")
        known = set(self._nodes)
        merged = merge_parallel(edges.items() if isinstance(edges, dict) else (edges or ()))
        for (u, v), rate in merged.items():
            if u not in known or v not in known:
                raise ValueError(f"edge {u!r} -> {v!r} references an unknown node")
            if not math.isfinite(rate):
                raise ValueError(f"edge {u!r} -> {v!r} has non-finite transmission")
        self._edges = merged
        self.factor = float(factor)

    @property
    def nodes(self) -> tuple:
        return self._nodes

    @property
    def edges(self) -> dict:
        return dict(self._edges)

    def rate(self, u, v) -> float:
        return self._edges.get((u, v), 0.0)

    def self_loop(self, v) -> float:
        return self._edges.get((v, v), 0.0)

    def in_edges(self, v):
        return {u: r for (u, w), r in self._edges.items() if w == v and u != v}

    def out_edges(self, v):
        return {w: r for (u, w), r in self._edges.items() if u == v and w != v}

    def to_matrix(self) -> np.ndarray:
        index = {v: i for i, v in enumerate(self._nodes)}
        B = np.zeros((len(self._nodes), len(self._nodes)))
        for (u, v), r in self._edges.items():
            B[index[v], index[u]] = r
        return B

    def __repr__(self):
        return f"SignalFlowGraph({len(self._nodes)} nodes, {len(self._edges)} edges, factor={self.factor:g})"


def from_matrix(B, labels=None) -> SignalFlowGraph:
    """Graph of ``x = B x``: an edge l -> k for every nonzero ``B[k, l]``."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("matrix must be square")
    labels = list(range(B.shape[0])) if labels is None else list(labels)
    rows, cols = np.nonzero(B)
    edges = [(labels[l], labels[k], float(B[k, l])) for k, l in zip(rows, cols)]
    return SignalFlowGraph(labels, edges)


def model_labels(m: int, n: int) -> list:
    """(stage, patch) labels, 1-based, in state-vector order."""
    return [(k + 1, i + 1) for i in range(n) for k in range(m)]


def z_transformed_graph(model: GlobalModel, rho: float) -> SignalFlowGraph:
    """Graph of ``rho^-1 D F + D S``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    B = model.D @ model.F / rho + model.D @ model.S
    return from_matrix(B, model_labels(model.m, model.n))


# -- Mason equivalence rules ---------------------------------------------------

def merge_parallel(edges) -> dict:
    """Rule 1: parallel edges u -> v with rates a, b become one edge a + b.

    ``edges`` is an iterable of ``(u, v, rate)`` or ``((u, v), rate)`` items.
    """
    out = {}
    for item in edges:
        if len(item) == 2:
            (u, v), rate = item
        else:
            u, v, rate = item
        out[(u, v)] = out.get((u, v), 0.0) + float(rate)
    return out


def chain_serial(g: SignalFlowGraph, v) -> SignalFlowGraph:
    """Rule 2: ``u -a-> v -b-> w`` with v a pure pass-through becomes ``u -ab-> w``."""
    ins, outs = g.in_edges(v), g.out_edges(v)
    if g.self_loop(v) != 0.0 or len(ins) != 1 or len(outs) != 1:
        raise ValueError(f"node {v!r} is not a pass-through node (one in-edge, one out-edge, no self-loop)")
    return eliminate_node(g, v)


def absorb_self_loop(g: SignalFlowGraph, v) -> SignalFlowGraph:
    """Rule 3: a self-loop ``s`` on v divides each incoming rate by ``1 - s``."""
    s = g.self_loop(v)
    if abs(1.0 - s) <= SINGULAR_LOOP_TOL:
        raise NumericalError(f"self-loop on {v!r} has transmission 1; cannot absorb")
    if s == 0.0:
        return g
    edges = {}
    for (a, b), r in g._edges.items():
        if a == b == v:
            continue
        edges[(a, b)] = r / (1.0 - s) if b == v else r
    return SignalFlowGraph(g.nodes, edges, g.factor * (1.0 - s))


def eliminate_node(g: SignalFlowGraph, v) -> SignalFlowGraph:
    """Remove ``v``, routing every in-edge a and out-edge b through as ``a*b/(1-s)``.

    This is Gaussian elimination on the graph: absorb the self-loop, then
    chain every in/out pair, merging with existing parallel edges.
    """
    if v not in g.nodes:
        raise KeyError(v)
    g = absorb_self_loop(g, v)
    ins, outs = g.in_edges(v), g.out_edges(v)
    edges = [(a, b, r) for (a, b), r in g._edges.items() if a != v and b != v]
    edges += [(u, w, a * b) for u, a in ins.items() for w, b in outs.items()]
    nodes = [x for x in g.nodes if x != v]
    return SignalFlowGraph(nodes, [e for e in edges if e[2] != 0.0], g.factor)


def transmission(g: SignalFlowGraph, source, sink) -> float:
    """Overall source -> sink gain after eliminating every other node.

    ``source`` and ``sink`` act as phantom input/output nodes: they must
    have no incoming (respectively outgoing) edges.
    """
    if g.in_edges(source) or g.self_loop(source):
        raise ValueError("source node must have no incoming edges")
    if g.out_edges(sink) or g.self_loop(sink):
        raise ValueError("sink node must have no outgoing edges")
    for v in g.nodes:
        if v not in (source, sink):
            g = eliminate_node(g, v)
    return g.rate(source, sink)


# -- loop analysis -------------------------------------------------------------

@dataclass(frozen=True)
class Loop:
    nodes: tuple
    transmission: float


@dataclass(frozen=True)
class LoopInventory:
    loops: tuple
    disjoint_products: tuple  # q_1, q_2, ...

    @property
    def determinant(self) -> float:
        """1 + sum_k (-1)^k q_k."""
        return 1.0 + sum((-1) ** (k + 1) * q for k, q in enumerate(self.disjoint_products))


class LoopStructure:
    """Simple cycles and their node-disjoint collections for a fixed sparsity
    pattern, so that loop sums can be re-evaluated cheaply as rates change.
    """

    def __init__(self, pattern, max_cycles: int = MAX_CYCLES):
        pattern = np.asarray(pattern) != 0
        n = pattern.shape[0]
        G = nx.DiGraph()
        G.add_nodes_from(range(n))
        rows, cols = np.nonzero(pattern)
        G.add_edges_from((int(l), int(k)) for k, l in zip(rows, cols))

        cycles = []
        for cyc in nx.simple_cycles(G):
            cycles.append(tuple(cyc))
            if len(cycles) > max_cycles:
                raise NumericalError(f"more than {max_cycles} simple cycles; graph too dense for loop analysis")
        cycles.sort(key=lambda c: (len(c), c))
        self.n = n
        self.cycles = cycles
        # edge l -> k uses matrix entry B[k, l]
        self._rows = [np.array([c[(i + 1) % len(c)] for i in range(len(c))]) for c in cycles]
        self._cols = [np.array(c) for c in cycles]
        masks = [sum(1 << v for v in c) for c in cycles]
        self.collections = self._disjoint_collections(masks, max_cycles)

    @staticmethod
    def _disjoint_collections(masks, cap):
        """All nonempty sets of pairwise node-disjoint loops, as index tuples."""
        found = []

        def extend(start, used, chosen):
            for i in range(start, len(masks)):
                if masks[i] & used:
                    continue
                pick = chosen + (i,)
                found.append(pick)
                if len(found) > cap:
                    raise NumericalError("too many disjoint loop collections for loop analysis")
                extend(i + 1, used | masks[i], pick)

        extend(0, 0, ())
        return found

    def loop_values(self, B) -> np.ndarray:
        B = np.asarray(B, dtype=float)
        return np.array([np.prod(B[r, c]) for r, c in zip(self._rows, self._cols)])

    def disjoint_products(self, B) -> list:
        vals = self.loop_values(B)
        q = []
        for coll in self.collections:
            k = len(coll)
            while len(q) < k:
                q.append(0.0)
            q[k - 1] += math.prod(vals[i] for i in coll)
        return q

    def determinant(self, B) -> float:
        """1 + sum_k (-1)^k q_k for the graph of B (equals det(I - B))."""
        vals = self.loop_values(B)
        total = 1.0
        for coll in self.collections:
            p = 1.0
            for i in coll:
                p *= -vals[i]
            total += p
        return total


def loop_inventory(g: SignalFlowGraph, max_cycles: int = MAX_CYCLES) -> LoopInventory:
    B = g.to_matrix()
    structure = LoopStructure(B, max_cycles)
    vals = structure.loop_values(B)
    loops = tuple(
        Loop(tuple(g.nodes[i] for i in c), float(v)) for c, v in zip(structure.cycles, vals)
    )
    return LoopInventory(loops, tuple(structure.disjoint_products(B)))


def graph_determinant(g: SignalFlowGraph) -> float:
    """factor * (1 + sum_k (-1)^k q_k); invariant under every Mason rewrite."""
    B = g.to_matrix()
    return g.factor * LoopStructure(B).determinant(B)


# -- residuals and root finding ------------------------------------------------

class _Residual:
    """rho -> loop determinant of the graph of ``rho^-1 X + Y``."""

    def __init__(self, X, Y):
        self.X = np.asarray(X, dtype=float)
        self.Y = np.asarray(Y, dtype=float)
        self.structure = LoopStructure((self.X != 0) | (self.Y != 0))

    def __call__(self, rho: float) -> float:
        return self.structure.determinant(self.X / rho + self.Y)


def loop_transmission_residual(model: GlobalModel, rho: float) -> float:
    """Loop determinant of the z-transformed graph ``rho^-1 D F + D S``.

    Zero exactly when 1 is an eigenvalue of that matrix, i.e. when rho is a
    nonzero eigenvalue of the next-generation matrix.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    return _Residual(model.D @ model.F, model.D @ model.S)(rho)


def _rightmost_bracket(f, lo, hi, subdivisions, depth):
    xs = np.linspace(lo, hi, subdivisions + 1)
    fs = np.array([f(x) for x in xs])
    best = None
    for i in range(subdivisions - 1, -1, -1):
        if fs[i + 1] == 0.0:
            best = (xs[i + 1], xs[i + 1])
            break
        if fs[i] * fs[i + 1] < 0.0:
            best = (xs[i], xs[i + 1])
            break
    if depth == 0:
        return best
    # A pair of roots inside one cell leaves no sign change but shows up as a
    # sampled local minimum; refine those to the right of the current best.
    start = 0 if best is None else int(np.searchsorted(xs, best[1]))
    for i in range(subdivisions - 1, max(start, 1) - 1, -1):
        if 0 < fs[i] < fs[i - 1] and fs[i] <= fs[i + 1]:
            a, b = xs[i - 1], xs[i + 1]
            sub = _rightmost_bracket(f, a, b, subdivisions, depth - 1)
            if sub is not None and (best is None or sub[0] >= best[1]):
                return sub
    return best


def largest_root(f: Callable[[float], float], bracket, xtol: float = 1e-12,
                 subdivisions: int = SCAN_SUBDIVISIONS) -> float:
    """Largest root of ``f`` in ``bracket``: scan, keep the rightmost sign
    change, then bisect."""
    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    found = _rightmost_bracket(f, lo, hi, subdivisions, depth=2)
    if found is None:
        raise NumericalError(f"no sign change of the residual on [{lo:g}, {hi:g}]")
    a, b = found
    if a == b:
        return a
    return bisect(f, a, b, xtol=xtol, maxiter=500)


def _default_bracket(bound):
    return (1e-6, max(bound * (1.0 + 1e-6), 1e-6) + 1e-9)


def r0_by_graph_reduction(model: GlobalModel, bracket: Optional[tuple] = None) -> float:
    """R0 as the largest rho at which the graph of rho^-1 D F + D S has unit
    loop gain. The default bracket runs up to the fecundity/survival bound."""
    if not model.F.any():
        raise NumericalError("no fecundity: R0 = 0 has no positive root")
    if bracket is None:
        bracket = _default_bracket(r0_upper_bound(model))
    f = _Residual(model.D @ model.F, model.D @ model.S)
    return largest_root(f, bracket)


def growth_rate_by_graph_reduction(model: GlobalModel, bracket: Optional[tuple] = None) -> float:
    """r as the largest rho at which the graph of rho^-1 P has unit loop gain."""
    P = model.P
    if not P.any():
        raise NumericalError("zero projection matrix: r = 0 has no positive root")
    if bracket is None:
        bracket = _default_bracket(float(np.abs(P).sum(axis=0).max()))
    f = _Residual(P, np.zeros_like(P))
    return largest_root(f, bracket)


# -- export --------------------------------------------------------------------

def _label(v) -> str:
    if isinstance(v, tuple) and len(v) == 2:
        return f"stage {v[0]} / patch {v[1]}"
    return str(v)


def to_adjacency_text(g: SignalFlowGraph) -> str:
    lines = [f"# {len(g.nodes)} nodes, {len(g.edges)} edges"]
    for (u, v), r in sorted(g.edges.items(), key=lambda e: (g.nodes.index(e[0][0]), g.nodes.index(e[0][1]))):
        lines.append(f"{_label(u)} -> {_label(v)} : {r:.6g}")
    return "\n".join(lines) + "\n"


def to_dot(g: SignalFlowGraph, name: str = "G") -> str:
    ids = {v: f"n{i}" for i, v in enumerate(g.nodes)}
    quoted = name.replace("\\", "\\\\").replace('"', '\\"')
    lines = [f'digraph "{quoted}" {{']
    for v in g.nodes:
        lines.append(f'  {ids[v]} [label="{_label(v)}"];')
    for (u, v), r in sorted(g.edges.items(), key=lambda e: (g.nodes.index(e[0][0]), g.nodes.index(e[0][1]))):
        lines.append(f'  {ids[u]} -> {ids[v]} [label="{r:.6g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
