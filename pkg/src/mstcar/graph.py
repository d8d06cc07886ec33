"""Spatial adjacency structures: undirected region graphs and their spectra.

The graph stores the 0/1 neighbor relation as an explicit edge set plus
per-node degrees and connected components.  A full eigendecomposition of
the graph Laplacian (degree matrix minus adjacency) is only materialized
on request: prior simulation needs it, posterior inference does not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# Eigendecomposition cost is cubic; refuse silently huge graphs unless the
# caller raises the cap explicitly.
DEFAULT_SPECTRUM_CAP = 2000


class AdjacencyFormatError(ValueError):
    """Raised for malformed edge-list input (with line context)."""


@dataclass(frozen=True)
class SpatialGraph:
    """Undirected adjacency on ``node_count`` regions.

    ``edges`` is a canonical sorted tuple of (i, j) pairs with i < j;
    ``component_labels[i]`` numbers the connected component of node i.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    degrees: np.ndarray
    component_labels: np.ndarray
    n_components: int

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[tuple[int, int]]) -> "SpatialGraph":
        if node_count < 1:
            raise ValueError("graph needs at least one node")
        canon = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-edge at node {i}")
            if not (0 <= i < node_count and 0 <= j < node_count):
                raise ValueError(f"edge ({i}, {j}) out of range for {node_count} nodes")
            canon.add((min(i, j), max(i, j)))
        edge_tuple = tuple(sorted(canon))
        degrees = np.zeros(node_count, dtype=np.int64)
        for i, j in edge_tuple:
            degrees[i] += 1
            degrees[j] += 1
        labels, n_comp = _connected_components(node_count, edge_tuple)
        return cls(node_count, edge_tuple, degrees, labels, n_comp)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbor_lists(self) -> list[np.ndarray]:
        """Per-node arrays of neighbor indices."""
        nbrs: list[list[int]] = [[] for _ in range(self.node_count)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return [np.asarray(n, dtype=np.int64) for n in nbrs]

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Edge endpoints as two aligned index arrays."""
        if not self.edges:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        arr = np.asarray(self.edges, dtype=np.int64)
        return arr[:, 0], arr[:, 1]

    def laplacian(self) -> np.ndarray:
        """Dense D - W."""
        lap = np.diag(self.degrees.astype(float))
        for i, j in self.edges:
            lap[i, j] -= 1.0
            lap[j, i] -= 1.0
        return lap

    def greedy_coloring(self) -> np.ndarray:
        """Greedy proper coloring (same-color nodes are never adjacent)."""
        nbrs = self.neighbor_lists()
        colors = np.full(self.node_count, -1, dtype=np.int64)
        for node in range(self.node_count):
            used = {colors[j] for j in nbrs[node] if colors[j] >= 0}
            color = 0
            while color in used:
                color += 1
            colors[node] = color
        return colors


def _connected_components(node_count: int, edges) -> tuple[np.ndarray, int]:
    nbrs: list[list[int]] = [[] for _ in range(node_count)]
    for i, j in edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    labels = np.full(node_count, -1, dtype=np.int64)
    current = 0
    for start in range(node_count):
        if labels[start] >= 0:
            continue
        stack = [start]
        labels[start] = current
        while stack:
            node = stack.pop()
            for nxt in nbrs[node]:
                if labels[nxt] < 0:
                    labels[nxt] = current
                    stack.append(nxt)
        current += 1
    return labels, current


@dataclass(frozen=True)
class GraphSpectrum:
    """Eigendecomposition of D - W, eigenvalues in nondecreasing order.

    The leading ``null_count`` eigenvalues are the (theoretically zero)
    component modes; the remaining pairs drive the latent-field transforms.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # column ι pairs with eigenvalues[ι]
    null_count: int

    @property
    def positive_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[self.null_count:]

    @property
    def positive_eigenvectors(self) -> np.ndarray:
        return self.eigenvectors[:, self.null_count:]


def graph_spectrum(graph: SpatialGraph, size_cap: int = DEFAULT_SPECTRUM_CAP) -> GraphSpectrum:
    """Dense symmetric eigendecomposition of the graph Laplacian.

    The number of zero eigenvalues is fixed from the known component count
    rather than a floating-point threshold.
    """
    if graph.node_count < 2:
        raise ValueError("spectrum requires at least 2 nodes")
    if graph.node_count > size_cap:
        raise ValueError(
            f"graph has {graph.node_count} nodes, above the spectrum cap {size_cap}; "
            "raise size_cap explicitly if the cubic cost is acceptable"
        )
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(graph.laplacian())
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed on {graph.node_count}-node graph: {exc}") from exc
    null_count = graph.n_components
    if np.any(np.abs(eigenvalues[:null_count]) > 1e-8):
        raise RuntimeError("Laplacian null space inconsistent with component count")
    eigenvalues = eigenvalues.copy()
    eigenvalues[:null_count] = 0.0
    return GraphSpectrum(eigenvalues, eigenvectors, null_count)


def load_adjacency(source: Iterable[str], labels: Sequence[str]) -> SpatialGraph:
    """Parse an edge-list text stream against a known region-label list.

    Format: one edge per line, two whitespace-separated labels; ``#``
    starts a comment; blank lines ignored.  Unknown labels, self-edges and
    a stream with no edges are reported as distinct parse errors.
    """
    positions = {label: idx for idx, label in enumerate(labels)}
    if len(positions) != len(labels):
        raise ValueError("region labels must be unique")
    edges: list[tuple[int, int]] = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise AdjacencyFormatError(
                f"line {lineno}: expected two labels, got {len(parts)}: {line!r}"
            )
        a, b = parts
        if a not in positions:
            raise AdjacencyFormatError(f"line {lineno}: unknown region label {a!r}")
        if b not in positions:
            raise AdjacencyFormatError(f"line {lineno}: unknown region label {b!r}")
        if a == b:
            raise AdjacencyFormatError(f"line {lineno}: self-edge at {a!r}")
        edges.append((positions[a], positions[b]))
    if not edges:
        raise AdjacencyFormatError("edge list is empty")
    return SpatialGraph.from_edges(len(labels), edges)


def lattice_edges(rows: int, cols: int) -> tuple[list[str], list[tuple[str, str]]]:
    """Labels and 4-neighbor edges of a rows x cols lattice (test graphs)."""
    if rows < 1 or cols < 1:
        raise ValueError("lattice dimensions must be positive")
    labels = [f"r{r}c{c}" for r in range(rows) for c in range(cols)]
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((labels[r * cols + c], labels[r * cols + c + 1]))
            if r + 1 < rows:
                edges.append((labels[r * cols + c], labels[(r + 1) * cols + c]))
    return labels, edges


def lattice_graph(rows: int, cols: int) -> tuple[SpatialGraph, list[str]]:
    labels, edges = lattice_edges(rows, cols)
    positions = {lab: i for i, lab in enumerate(labels)}
    graph = SpatialGraph.from_edges(len(labels), [(positions[a], positions[b]) for a, b in edges])
    return graph, labels
