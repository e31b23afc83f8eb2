import numpy as np
import pytest

from src.engine.graph import Dag, EdgeStatus, FisherZ, dag_metrics, pc_skeleton_orient
from src.errors import DegenerateDataError, ParameterError


def _orthogonal_to(rng, n, *columns):
    """Centred noise with zero sample correlation to the given columns."""
    e = rng.standard_normal(n)
    basis = np.column_stack([np.ones(n), *columns])
    coef, *_ = np.linalg.lstsq(basis, e, rcond=None)
    return e - basis @ coef


def test_dag_edges_and_status():
    dag = Dag.from_edges(3, directed=[(0, 1)], undirected=[(1, 2)])
    assert dag.status(0, 1) is EdgeStatus.DIRECTED
    assert dag.status(2, 1) is EdgeStatus.UNDIRECTED
    assert dag.status(0, 2) is EdgeStatus.ABSENT
    assert dag.directed_edges() == [(0, 1)]
    assert dag.undirected_edges() == [(1, 2)]
    assert dag.to_edge_list() == "0 -> 1\n1 -- 2\n"
    dag.orient(2, 1)
    assert dag.directed_edges() == [(0, 1), (2, 1)]
    dag.unorient(0, 1)
    dag.remove(1, 2)
    assert dag.undirected_edges() == [(0, 1)]
    assert not dag.adjacent(1, 2)


def test_dag_round_trip_and_checks():
    dag = Dag.from_edges(3, directed=[(0, 2)], undirected=[(0, 1)])
    assert np.array_equal(Dag.from_dict(dag.to_dict()).adjacency, dag.adjacency)
    with pytest.raises(ParameterError):
        Dag(np.eye(2, dtype=bool))


def test_cycle_detection():
    assert Dag.from_edges(3, directed=[(0, 1), (1, 2)]).is_acyclic()
    assert not Dag.from_edges(3, directed=[(0, 1), (1, 2), (2, 0)]).is_acyclic()
    assert Dag.from_edges(2, undirected=[(0, 1)]).is_acyclic()


def test_metrics_oracle():
    truth = Dag.from_edges(2, directed=[(0, 1)])
    same = dag_metrics(truth, truth)
    assert (same.f1, same.hamming) == (1.0, 0)
    reversed_edge = dag_metrics(Dag.from_edges(2, directed=[(1, 0)]), truth)
    assert (reversed_edge.f1, reversed_edge.hamming) == (0.0, 2)
    undirected = dag_metrics(Dag.from_edges(2, undirected=[(0, 1)]), truth)
    assert (undirected.f1, undirected.hamming) == (0.5, 1)


def test_metrics_edge_cases():
    empty = Dag.empty(3)
    assert dag_metrics(empty, empty).f1 == 1.0
    a = Dag.from_edges(3, directed=[(0, 1), (1, 2)])
    b = Dag.from_edges(3, directed=[(0, 1)], undirected=[(0, 2)])
    assert dag_metrics(a, b).hamming == dag_metrics(b, a).hamming
    assert dag_metrics(a, empty).f1 == 0.0


def test_fisher_z(rng):
    x = rng.standard_normal(500)
    y = x + 0.1 * rng.standard_normal(500)
    z = _orthogonal_to(rng, 500, x, y)
    test = FisherZ(np.column_stack([x, y, z]))
    assert test.p_value(0, 1) < 1e-10
    assert test.p_value(0, 2) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(DegenerateDataError):
        FisherZ(np.column_stack([x, np.ones(500)]))


def test_pc_orients_a_collider(rng):
    n = 2000
    x0 = rng.standard_normal(n)
    x1 = _orthogonal_to(rng, n, x0)
    x2 = x0 + x1 + 0.5 * rng.standard_normal(n)
    dag = pc_skeleton_orient(np.column_stack([x0, x1, x2]))
    assert sorted(dag.directed_edges()) == [(0, 2), (1, 2)]
    assert dag.undirected_edges() == []


def test_pc_leaves_a_chain_undirected(rng):
    n = 2000
    x0 = rng.standard_normal(n)
    x1 = x0 + rng.standard_normal(n)
    x2 = x1 + _orthogonal_to(rng, n, x0, x1)
    dag = pc_skeleton_orient(np.column_stack([x0, x1, x2]))
    assert dag.directed_edges() == []
    assert dag.undirected_edges() == [(0, 1), (1, 2)]


def test_pc_propagates_orientation_past_a_collider(rng):
    n = 2000
    x0 = rng.standard_normal(n)
    x1 = _orthogonal_to(rng, n, x0)
    x2 = x0 + x1 + 0.5 * rng.standard_normal(n)
    x3 = x2 + _orthogonal_to(rng, n, x0, x1, x2)
    dag = pc_skeleton_orient(np.column_stack([x0, x1, x2, x3]))
    assert sorted(dag.directed_edges()) == [(0, 2), (1, 2), (2, 3)]


def test_pc_argument_checks(rng):
    with pytest.raises(ParameterError):
        pc_skeleton_orient(rng.standard_normal((50, 2)))
    with pytest.raises(ParameterError):
        pc_skeleton_orient(rng.standard_normal((50, 3)), ci_alpha=0.0)


def test_metrics_oracle_on_six_nodes():
    truth = Dag.from_edges(6, directed=[(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 5)])
    same = dag_metrics(truth, truth)
    assert (same.f1, same.hamming) == (1.0, 0)
    empty = dag_metrics(Dag.empty(6), truth)
    assert (empty.f1, empty.hamming) == (0.0, 6)

    five = Dag.from_edges(6, directed=[(0, 1), (0, 2), (1, 3), (2, 4), (3, 5)])
    one_reversed = Dag.from_edges(6, directed=[(0, 1), (0, 2), (1, 3), (2, 4), (5, 3)])
    flipped = dag_metrics(one_reversed, five)
    assert flipped.f1 == pytest.approx(0.8)
    assert flipped.hamming == 2
