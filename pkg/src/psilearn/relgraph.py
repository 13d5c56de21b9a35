"""Object-relation graphs and the similarity functions over aligned graphs.

A graph represents one scene: each node is a feature vector for one object,
and every ordered pair of distinct nodes carries a directed edge holding a
7-vector of relation values. Direction encodes role (sender vs receiver), so
edge (a, b) and edge (b, a) are independent values.

Similarity between two graphs is only defined relative to a node mapping: a
binary one-to-one matrix whose rows index the first graph's nodes and whose
columns index the second's. Node similarity averages cosine similarity over
mapped node pairs; edge similarity averages cosine similarity over edge pairs
whose sender and receiver nodes both map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

# Fixed component order of every relation vector.
RELATION_NAMES = (
    "inside",
    "touching",
    "sameShape",
    "normalizedDistance",
    "mirrored",
    "sameSize",
    "reflection",
)
NUM_RELATIONS = 7

REL_INSIDE = 0
REL_TOUCHING = 1
REL_SAME_SHAPE = 2
REL_DISTANCE = 3
REL_MIRRORED = 4
REL_SAME_SIZE = 5
REL_REFLECTION = 6

# Cosine similarity treats vectors with a norm below this as zero vectors.
NORM_EPSILON = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RelationVector:
    """Seven relation values, each clamped into [0, 1] at construction."""

    values: np.ndarray

    def __init__(self, values) -> None:
        v = np.asarray(values, dtype=float)
        if v.shape != (NUM_RELATIONS,):
            raise ValueError(f"relation vector must have length {NUM_RELATIONS}, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("relation vector contains non-finite values")
        object.__setattr__(self, "values", _frozen(np.clip(v, 0.0, 1.0)))

    def __getitem__(self, idx: int) -> float:
        return float(self.values[idx])


@dataclass(frozen=True)
class EdgeWeights:
    """Seven non-negative relation weights summing to 1."""

    values: np.ndarray

    def __init__(self, values) -> None:
        v = np.asarray(values, dtype=float)
        if v.shape != (NUM_RELATIONS,):
            raise ValueError(f"edge weights must have length {NUM_RELATIONS}")
        if np.any(v < 0):
            raise ValueError("edge weights must be non-negative")
        if abs(float(v.sum()) - 1.0) > 1e-9:
            raise ValueError(f"edge weights must sum to 1, got {v.sum()!r}")
        object.__setattr__(self, "values", _frozen(v.copy()))

    @classmethod
    def uniform(cls) -> "EdgeWeights":
        return cls(np.full(NUM_RELATIONS, 1.0 / NUM_RELATIONS))

    @classmethod
    def from_logits(cls, logits) -> "EdgeWeights":
        z = np.asarray(logits, dtype=float)
        z = z - z.max()
        e = np.exp(z)
        return cls(e / e.sum())


class ObjectGraph:
    """Directed attributed graph over a scene's objects.

    nodes: (n, D) array, one feature row per object, all rows finite.
    edges: (n, n, NUM_RELATIONS) array with zero diagonal; entry [s, r]
        holds the relation vector of the directed edge sender s -> receiver r.
        May be None for node-only graphs (used by the patch-grid variant).
    """

    __slots__ = ("nodes", "edges")

    def __init__(self, nodes, edges=None) -> None:
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[0] < 1:
            raise ValueError("nodes must be a (n, D) array with n >= 1")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("node features contain non-finite values")
        n = nodes.shape[0]
        if edges is not None:
            edges = np.asarray(edges, dtype=float)
            if edges.shape != (n, n, NUM_RELATIONS):
                raise ValueError(
                    f"edges must have shape ({n}, {n}, {NUM_RELATIONS}), got {edges.shape}"
                )
            if not np.all(np.isfinite(edges)):
                raise ValueError("edge values contain non-finite values")
            diag = edges[np.arange(n), np.arange(n)]
            if np.any(diag != 0.0):
                raise ValueError("self-edges are not allowed (diagonal must be zero)")
            edges = _frozen(edges.copy())
        self.nodes = _frozen(nodes.copy())
        self.edges = edges

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def node_dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def has_edges(self) -> bool:
        return self.edges is not None

    def edge(self, sender: int, receiver: int) -> np.ndarray:
        if sender == receiver:
            raise ValueError("graphs have no self-edges")
        if self.edges is None:
            raise ValueError("graph has no edges")
        return self.edges[sender, receiver]

    def edge_items(self) -> Iterator[tuple[tuple[int, int], np.ndarray]]:
        """Directed edges in (sender, receiver) lexicographic order."""
        if self.edges is None:
            return
        n = self.node_count
        for s in range(n):
            for r in range(n):
                if s != r:
                    yield (s, r), self.edges[s, r]

    @classmethod
    def from_edge_dict(
        cls, nodes, edge_dict: Mapping[tuple[int, int], "RelationVector | np.ndarray"]
    ) -> "ObjectGraph":
        nodes = np.asarray(nodes, dtype=float)
        n = nodes.shape[0]
        expected = {(s, r) for s in range(n) for r in range(n) if s != r}
        if set(edge_dict.keys()) != expected:
            raise ValueError(
                f"edge dict must contain exactly the {n * (n - 1)} ordered pairs of distinct nodes"
            )
        edges = np.zeros((n, n, NUM_RELATIONS))
        for (s, r), v in edge_dict.items():
            edges[s, r] = v.values if isinstance(v, RelationVector) else np.asarray(v, float)
        return cls(nodes, edges)

    def to_dict(self) -> dict:
        d: dict = {"nodes": [[float(x) for x in row] for row in self.nodes]}
        if self.edges is not None:
            d["edges"] = [
                {"s": s, "r": r, "v": [float(x) for x in v]} for (s, r), v in self.edge_items()
            ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectGraph":
        nodes = np.asarray(d["nodes"], dtype=float)
        if "edges" not in d:
            return cls(nodes, None)
        n = nodes.shape[0]
        edges = np.zeros((n, n, NUM_RELATIONS))
        seen = set()
        for e in d["edges"]:
            s, r = int(e["s"]), int(e["r"])
            if s == r or not (0 <= s < n and 0 <= r < n):
                raise ValueError(f"invalid edge endpoints ({s}, {r})")
            if (s, r) in seen:
                raise ValueError(f"duplicate edge ({s}, {r})")
            seen.add((s, r))
            edges[s, r] = np.asarray(e["v"], dtype=float)
        if len(seen) != n * (n - 1):
            raise ValueError(f"expected {n * (n - 1)} edges, got {len(seen)}")
        return cls(nodes, edges)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ObjectGraph":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Episode:
    """One few-shot trial: labeled support graphs plus a target to classify."""

    positives: tuple[ObjectGraph, ...]
    negatives: tuple[ObjectGraph, ...]
    target: ObjectGraph
    true_label: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.positives or not self.negatives:
            raise ValueError("episode needs at least one exemplar per class")
        if self.true_label not in ("positive", "negative"):
            raise ValueError(f"invalid label {self.true_label!r}")
        graphs = [*self.positives, *self.negatives, self.target]
        n = graphs[0].node_count
        dim = graphs[0].node_dim
        edged = graphs[0].has_edges
        for g in graphs[1:]:
            if g.node_count != n:
                raise ValueError(
                    f"all graphs in an episode must share one node count; got {g.node_count} vs {n}"
                )
            if g.node_dim != dim:
                raise ValueError("all graphs in an episode must share one node dimension")
            if g.has_edges != edged:
                raise ValueError("episode mixes edged and edgeless graphs")

    @property
    def node_count(self) -> int:
        return self.positives[0].node_count


def cosine_similarity(a, b) -> float:
    """a.b / (|a||b|), or 0 if either norm is below NORM_EPSILON."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < NORM_EPSILON or nb < NORM_EPSILON:
        return 0.0
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def _mapped_pairs(mapping: np.ndarray) -> list[tuple[int, int]]:
    """Mapped (row, column) pairs in row-major order.

    Row-major ordering makes the similarity means bitwise invariant under
    consistent relabeling of the exemplar's nodes.
    """
    rows, cols = np.nonzero(mapping)
    order = np.argsort(rows, kind="stable")
    return list(zip(rows[order].tolist(), cols[order].tolist()))


def _check_mapping(schema: ObjectGraph, exemplar: ObjectGraph, mapping: np.ndarray) -> np.ndarray:
    mapping = np.asarray(mapping)
    if mapping.shape != (schema.node_count, exemplar.node_count):
        raise ValueError(
            f"mapping shape {mapping.shape} does not match graphs "
            f"({schema.node_count} x {exemplar.node_count})"
        )
    return mapping


def node_similarity(schema: ObjectGraph, exemplar: ObjectGraph, mapping: np.ndarray) -> float:
    """Mean cosine similarity over mapped node pairs."""
    mapping = _check_mapping(schema, exemplar, mapping)
    pairs = _mapped_pairs(mapping)
    if not pairs:
        raise ValueError("mapping has zero mapped pairs")
    total = 0.0
    for i, j in pairs:
        total += cosine_similarity(schema.nodes[i], exemplar.nodes[j])
    return total / len(pairs)


def edge_similarity(
    schema: ObjectGraph, exemplar: ObjectGraph, mapping: np.ndarray, w: EdgeWeights
) -> float:
    """Mean cosine similarity over aligned directed edge pairs.

    An edge (a, b) of the schema aligns with exemplar edge (c, d) only when
    both endpoints map: mapping[a, c] = mapping[b, d] = 1. Exemplar edges are
    weighted element-wise by w before comparison; schema edges are expected to
    be weighted already (schemas are built from weighted exemplars).
    """
    mapping = _check_mapping(schema, exemplar, mapping)
    if not schema.has_edges or not exemplar.has_edges:
        raise ValueError("edge similarity requires edged graphs")
    pairs = _mapped_pairs(mapping)
    total = 0.0
    count = 0
    for a, c in pairs:
        for b, d in pairs:
            if a == b:
                continue
            total += cosine_similarity(schema.edges[a, b], w.values * exemplar.edges[c, d])
            count += 1
    if count < 1:
        raise ValueError("fewer than one aligned edge pair")
    return total / count


def graph_similarity(alpha: float, g_nodes: float, g_edges: float) -> float:
    """Convex combination alpha * g_nodes + (1 - alpha) * g_edges."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * g_nodes + (1.0 - alpha) * g_edges
