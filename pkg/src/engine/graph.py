"""
Partially directed graphs, the PC algorithm with a Fisher-z test, and DAG metrics.

Adjacency convention: adj[i, j] and not adj[j, i] is the directed edge i -> j;
adj[i, j] and adj[j, i] is the undirected edge i -- j.
"""
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Set, Tuple

import networkx as nx
import numpy as np
from scipy.stats import norm

from ..errors import DegenerateDataError, DimensionError, ParameterError

logger = logging.getLogger(__name__)


class EdgeStatus(str, Enum):
    DIRECTED = "directed"
    UNDIRECTED = "undirected"
    ABSENT = "absent"


@dataclass
class Dag:
    adjacency: np.ndarray

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=bool).copy()
        if self.adjacency.ndim != 2 or self.adjacency.shape[0] != self.adjacency.shape[1]:
            raise DimensionError("adjacency must be square")
        if np.any(np.diag(self.adjacency)):
            raise ParameterError("self-loops are not allowed")

    @classmethod
    def empty(cls, d: int) -> "Dag":
        return cls(np.zeros((d, d), dtype=bool))

    @classmethod
    def from_edges(cls, d: int, directed=(), undirected=()) -> "Dag":
        adj = np.zeros((d, d), dtype=bool)
        for i, j in directed:
            adj[i, j] = True
        for i, j in undirected:
            adj[i, j] = adj[j, i] = True
        return cls(adj)

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]

    def status(self, i: int, j: int) -> EdgeStatus:
        forward, backward = self.adjacency[i, j], self.adjacency[j, i]
        if forward and backward:
            return EdgeStatus.UNDIRECTED
        if forward or backward:
            return EdgeStatus.DIRECTED
        return EdgeStatus.ABSENT

    def directed_edges(self) -> List[Tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency & ~self.adjacency.T))]

    def undirected_edges(self) -> List[Tuple[int, int]]:
        both = np.triu(self.adjacency & self.adjacency.T, k=1)
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(both))]

    def adjacent(self, i: int, j: int) -> bool:
        return bool(self.adjacency[i, j] or self.adjacency[j, i])

    def orient(self, i: int, j: int):
        """Make i -> j."""
        self.adjacency[i, j] = True
        self.adjacency[j, i] = False

    def unorient(self, i: int, j: int):
        self.adjacency[i, j] = self.adjacency[j, i] = True

    def remove(self, i: int, j: int):
        self.adjacency[i, j] = self.adjacency[j, i] = False

    def directed_graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.d))
        graph.add_edges_from(self.directed_edges())
        return graph

    def is_acyclic(self) -> bool:
        return nx.is_directed_acyclic_graph(self.directed_graph())

    def copy(self) -> "Dag":
        return Dag(self.adjacency)

    def to_dict(self) -> Dict:
        return {
            "d": self.d,
            "dag": self.adjacency.tolist(),
            "directed": [list(e) for e in self.directed_edges()],
            "undirected": [list(e) for e in self.undirected_edges()],
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "Dag":
        return cls(np.asarray(payload["dag"], dtype=bool))

    def to_edge_list(self) -> str:
        lines = [f"{i} -> {j}" for i, j in self.directed_edges()]
        lines += [f"{i} -- {j}" for i, j in self.undirected_edges()]
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class DagMetrics:
    f1: float
    hamming: int


def dag_metrics(estimated: Dag, truth: Dag) -> DagMetrics:
    """Ordered-pair F1 (undirected estimates earn half credit) and Hamming distance."""
    if estimated.d != truth.d:
        raise DimensionError(f"graphs have {estimated.d} and {truth.d} nodes")
    true_edges = truth.directed_edges() + [e for u in truth.undirected_edges() for e in (u, u[::-1])]
    predicted = len(estimated.directed_edges()) + len(estimated.undirected_edges())
    hits = 0.0
    for i, j in true_edges:
        status = estimated.status(i, j)
        if status is EdgeStatus.UNDIRECTED:
            hits += 0.5
        elif status is EdgeStatus.DIRECTED and estimated.adjacency[i, j]:
            hits += 1.0
    denominator = predicted + len(true_edges)
    f1 = 1.0 if denominator == 0 else 2.0 * hits / denominator
    hamming = int(np.sum(estimated.adjacency != truth.adjacency))
    return DagMetrics(float(f1), hamming)


class FisherZ:
    """Gaussian conditional-independence test on partial correlations."""

    def __init__(self, X: np.ndarray):
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        if np.any(std == 0):
            raise DegenerateDataError(f"constant columns {np.flatnonzero(std == 0).tolist()} break the CI test")
        self.n = X.shape[0]
        self.corr = np.corrcoef(X, rowvar=False)

    def partial_correlation(self, i: int, j: int, cond: Tuple[int, ...]) -> float:
        if not cond:
            return float(self.corr[i, j])
        idx = [i, j, *cond]
        precision = np.linalg.pinv(self.corr[np.ix_(idx, idx)])
        r = -precision[0, 1] / np.sqrt(precision[0, 0] * precision[1, 1])
        return float(r)

    def p_value(self, i: int, j: int, cond: Tuple[int, ...] = ()) -> float:
        r = np.clip(self.partial_correlation(i, j, cond), -1 + 1e-12, 1 - 1e-12)
        dof = self.n - len(cond) - 3
        if dof <= 0:
            return 1.0
        z = 0.5 * np.log1p(2 * r / (1 - r)) * np.sqrt(dof)
        return float(2.0 * norm.sf(abs(z)))


def _pc_skeleton(test: FisherZ, d: int, alpha: float, max_cond: Optional[int]):
    adj = ~np.eye(d, dtype=bool)
    sepsets: Dict[Tuple[int, int], Tuple[int, ...]] = {}
    level = 0
    while max_cond is None or level <= max_cond:
        # order-independent removal: neighbourhoods frozen for the whole level
        neighbours = {i: set(np.flatnonzero(adj[i]).tolist()) for i in range(d)}
        if all(len(neighbours[i]) - 1 < level for i in range(d)):
            break
        removals = []
        removed: Set[frozenset] = set()
        for i, j in itertools.permutations(range(d), 2):
            if not adj[i, j] or frozenset((i, j)) in removed:
                continue
            for cond in itertools.combinations(sorted(neighbours[i] - {j}), level):
                if test.p_value(i, j, cond) > alpha:
                    removals.append((i, j, cond))
                    removed.add(frozenset((i, j)))
                    break
        for i, j, cond in removals:
            if adj[i, j]:
                adj[i, j] = adj[j, i] = False
                sepsets[(i, j)] = sepsets[(j, i)] = cond
        level += 1
    return adj, sepsets


def _orient_v_structures(dag: Dag, sepsets) -> None:
    d = dag.d
    for k in range(d):
        around = [i for i in range(d) if dag.adjacent(i, k)]
        for i, j in itertools.combinations(around, 2):
            if dag.adjacent(i, j):
                continue
            if k in sepsets.get((i, j), ()):
                continue
            # k -> i or k -> j already fixed by another collider: leave both
            if dag.adjacency[i, k] and dag.adjacency[j, k]:
                dag.orient(i, k)
                dag.orient(j, k)


def _apply_meek_rules(dag: Dag) -> None:
    d = dag.d
    changed = True
    while changed:
        changed = False
        for a, b in dag.undirected_edges():
            for x, y in ((a, b), (b, a)):
                if dag.status(x, y) is not EdgeStatus.UNDIRECTED:
                    continue
                # R1: z -> x -- y, z and y non-adjacent  =>  x -> y
                if any(dag.status(z, x) is EdgeStatus.DIRECTED and dag.adjacency[z, x]
                       and not dag.adjacent(z, y) for z in range(d) if z not in (x, y)):
                    dag.orient(x, y)
                    changed = True
                    continue
                # R2: x -> z -> y and x -- y  =>  x -> y
                if any(dag.adjacency[x, z] and not dag.adjacency[z, x]
                       and dag.adjacency[z, y] and not dag.adjacency[y, z] for z in range(d)):
                    dag.orient(x, y)
                    changed = True
                    continue
                # R3: x -- z1 -> y, x -- z2 -> y, z1 and z2 non-adjacent  =>  x -> y
                into_y = [z for z in range(d) if z not in (x, y)
                          and dag.status(x, z) is EdgeStatus.UNDIRECTED
                          and dag.adjacency[z, y] and not dag.adjacency[y, z]]
                if any(not dag.adjacent(z1, z2) for z1, z2 in itertools.combinations(into_y, 2)):
                    dag.orient(x, y)
                    changed = True


def pc_skeleton_orient(X: np.ndarray, ci_alpha: float = 0.05, max_cond: Optional[int] = None) -> Dag:
    """PC: skeleton by Fisher-z CI tests, v-structures, then Meek rules."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError("PC needs a data matrix")
    d = X.shape[1]
    if d < 3:
        raise ParameterError(f"PC needs d >= 3, got {d}")
    if not 0.0 < ci_alpha < 1.0:
        raise ParameterError(f"ci_alpha must lie in (0, 1), got {ci_alpha}")
    test = FisherZ(X)
    adj, sepsets = _pc_skeleton(test, d, ci_alpha, max_cond)
    dag = Dag(adj)
    _orient_v_structures(dag, sepsets)
    _apply_meek_rules(dag)
    logger.info(
        "PC: %d directed, %d undirected edges", len(dag.directed_edges()), len(dag.undirected_edges())
    )
    return dag
