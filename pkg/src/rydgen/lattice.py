"""Atom geometries, unit-disk graphs and graph matrices."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyArrayError

DIST_ATOL = 1e-9


@dataclass(frozen=True)
class AtomArray:
    """Atoms on a (possibly defective) square grid.

    Site ``k`` sits at row ``k // cols`` and column ``k % cols``; its
    position is ``(col * spacing, row * spacing)`` in micrometres.
    """

    positions: np.ndarray
    spacing: float
    rows: int
    cols: int
    defect_mask: np.ndarray
    sites: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return int(self.positions.shape[0])

    def __len__(self) -> int:
        return self.n

    def translated(self, offset) -> "AtomArray":
        pos = self.positions + np.asarray(offset, dtype=float)
        return AtomArray(pos, self.spacing, self.rows, self.cols, self.defect_mask, self.sites)


def parse_defect_mask(mask: str) -> np.ndarray:
    """Parse a row-major string of '0'/'1' (1 = atom removed)."""
    mask = mask.strip()
    if any(ch not in "01" for ch in mask):
        raise ValueError(f"defect mask must contain only '0' and '1', got {mask!r}")
    return np.array([ch == "1" for ch in mask], dtype=bool)


def build_king_subgraph(rows, cols, spacing, defect_mask=None, seed=None, density=0.0):
    """Place atoms on a ``rows x cols`` grid, removing defective sites.

    ``defect_mask`` may be a boolean sequence or a '0'/'1' string.  When it
    is omitted and ``seed`` is given, each site is removed independently with
    probability ``density``.
    """
    rows, cols = int(rows), int(cols)
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    size = rows * cols
    if defect_mask is None:
        if seed is not None:
            rng = np.random.Generator(np.random.Philox(seed))
            mask = rng.random(size) < density
        else:
            mask = np.zeros(size, dtype=bool)
    else:
        if isinstance(defect_mask, str):
            mask = parse_defect_mask(defect_mask)
        else:
            mask = np.asarray(defect_mask, dtype=bool).ravel()
        if mask.size != size:
            raise ValueError(f"defect mask has length {mask.size}, expected {size}")
    keep = np.flatnonzero(~mask)
    if keep.size == 0:
        raise EmptyArrayError("every site is defective")
    r, c = np.divmod(keep, cols)
    positions = np.column_stack([c, r]).astype(float) * float(spacing)
    return AtomArray(positions, float(spacing), rows, cols, mask.copy(), keep)


def pair_distances(atoms: AtomArray) -> np.ndarray:
    diff = atoms.positions[:, None, :] - atoms.positions[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


@dataclass(frozen=True)
class InteractionGraph:
    n: int
    edges: frozenset
    radius: float

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.int64)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1
        return a

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def edge_array(self) -> np.ndarray:
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(self.edges), dtype=np.int64)


def unit_disk_graph(atoms: AtomArray, radius: float) -> InteractionGraph:
    if radius <= 0:
        raise ValueError("radius must be positive")
    d = pair_distances(atoms)
    i, j = np.nonzero(np.triu(d <= radius + DIST_ATOL, 1))
    edges = frozenset(zip(i.tolist(), j.tolist()))
    return InteractionGraph(atoms.n, edges, float(radius))


def graph_from_edges(n, edges) -> InteractionGraph:
    """Build a graph directly from an edge list (radius recorded as nan)."""
    norm = set()
    for i, j in edges:
        if i == j:
            raise ValueError("self-loops are not allowed")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
        norm.add((min(i, j), max(i, j)))
    return InteractionGraph(int(n), frozenset(norm), float("nan"))


def blockade_radius(c6: float, omega: float) -> float:
    if c6 <= 0 or omega <= 0:
        raise ValueError("C6 and omega must be positive")
    return (c6 / omega) ** (1.0 / 6.0)


def violation_count(graph: InteractionGraph, z) -> int:
    """Number of edges with both endpoints excited (0 iff z is independent)."""
    z = np.asarray(z)
    if z.shape != (graph.n,):
        raise ValueError(f"bitstring length {z.size} does not match graph size {graph.n}")
    e = graph.edge_array()
    if e.size == 0:
        return 0
    return int((z[e[:, 0]].astype(np.int64) * z[e[:, 1]]).sum())


def laplacian(graph: InteractionGraph) -> np.ndarray:
    a = graph.adjacency()
    return np.diag(a.sum(axis=1)) - a
