import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mstcar.graph import (
    AdjacencyFormatError,
    SpatialGraph,
    graph_spectrum,
    lattice_graph,
    load_adjacency,
)


def _graph_from_text(text, labels):
    return load_adjacency(io.StringIO(text), labels)


def test_two_node_edge():
    g = _graph_from_text("A B\n", ["A", "B"])
    assert g.n_edges == 1
    assert list(g.degrees) == [1, 1]
    assert g.n_components == 1


def test_four_node_path():
    g = _graph_from_text("A B\nB C\nC D\n", ["A", "B", "C", "D"])
    assert list(g.degrees) == [1, 2, 2, 1]
    assert g.n_components == 1


def test_disjoint_edges_two_components():
    g = _graph_from_text("A B\nC D\n", ["A", "B", "C", "D"])
    assert g.n_components == 2
    spec = graph_spectrum(g)
    assert spec.null_count == 2
    # rank of the Laplacian via a dense eigensolve oracle
    eigs = np.linalg.eigvalsh(g.laplacian())
    assert np.sum(eigs > 1e-10) == 4 - 2


def test_duplicate_edges_collapse():
    g = _graph_from_text("A B\nB A\nA B\n", ["A", "B"])
    assert g.n_edges == 1


def test_comments_and_blank_lines():
    g = _graph_from_text("# counties\nA B  # pair\n\nB C\n", ["A", "B", "C"])
    assert g.n_edges == 2


def test_unknown_label_error():
    with pytest.raises(AdjacencyFormatError, match="unknown region label 'X'"):
        _graph_from_text("A X\n", ["A", "B"])


def test_self_edge_error():
    with pytest.raises(AdjacencyFormatError, match="self-edge"):
        _graph_from_text("A A\n", ["A", "B"])


def test_empty_stream_error():
    with pytest.raises(AdjacencyFormatError, match="empty"):
        _graph_from_text("# nothing\n", ["A", "B"])


def test_bad_field_count_error():
    with pytest.raises(AdjacencyFormatError, match="expected two labels"):
        _graph_from_text("A B C\n", ["A", "B", "C"])


def test_spectrum_two_node():
    g = _graph_from_text("A B\n", ["A", "B"])
    spec = graph_spectrum(g)
    assert np.allclose(spec.eigenvalues, [0.0, 2.0])
    r = 1 / np.sqrt(2)
    assert np.allclose(np.abs(spec.eigenvectors[:, 0]), [r, r])
    assert np.allclose(np.abs(spec.eigenvectors[:, 1] * np.sign(spec.eigenvectors[0, 1])),
                       [r, r])
    assert np.allclose(spec.eigenvectors[:, 1] @ spec.eigenvectors[:, 0], 0.0)


def test_spectrum_three_node_path():
    g = _graph_from_text("A B\nB C\n", ["A", "B", "C"])
    spec = graph_spectrum(g)
    assert np.allclose(spec.eigenvalues, [0.0, 1.0, 3.0], atol=1e-10)


def test_spectrum_requires_two_nodes():
    g = SpatialGraph.from_edges(1, [])
    with pytest.raises(ValueError, match="at least 2"):
        graph_spectrum(g)


def test_spectrum_size_cap():
    g, _ = lattice_graph(2, 3)
    with pytest.raises(ValueError, match="cap"):
        graph_spectrum(g, size_cap=5)


def test_lattice_graph_shape():
    g, labels = lattice_graph(3, 4)
    assert g.node_count == 12
    assert len(labels) == 12
    assert g.n_edges == 3 * 3 + 2 * 4  # horizontal + vertical
    assert g.n_components == 1


def test_greedy_coloring_is_proper():
    g, _ = lattice_graph(4, 5)
    colors = g.greedy_coloring()
    for i, j in g.edges:
        assert colors[i] != colors[j]


@st.composite
def random_graphs(draw):
    n = draw(st.integers(min_value=2, max_value=12))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    edges = [p for p, keep in zip(pairs, mask) if keep]
    return SpatialGraph.from_edges(n, edges)


@given(random_graphs())
@settings(max_examples=60, deadline=None)
def test_trace_identity(g):
    eigs = np.linalg.eigvalsh(g.laplacian())
    assert abs(eigs.sum() - g.degrees.sum()) < 1e-8


@given(random_graphs())
@settings(max_examples=60, deadline=None)
def test_spectrum_reconstruction_and_nullity(g):
    spec = graph_spectrum(g)
    lap = g.laplacian()
    q, lam = spec.eigenvectors, spec.eigenvalues
    assert np.max(np.abs(q @ np.diag(lam) @ q.T - lap)) < 1e-8
    assert spec.null_count == g.n_components
    # orthonormality of eigenvectors
    assert np.max(np.abs(q.T @ q - np.eye(g.node_count))) < 1e-10
    # eigenpair residuals
    assert np.max(np.abs(lap @ q - q * lam[None, :])) < 1e-8


def test_degrees_match_incidence():
    g, _ = lattice_graph(3, 3)
    counts = np.zeros(9, dtype=int)
    for i, j in g.edges:
        counts[i] += 1
        counts[j] += 1
    assert np.array_equal(counts, g.degrees)
