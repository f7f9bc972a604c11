"""Divergences, cost binning and distances between bitstrings."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .bits import as_bits
from .errors import DivergenceError
from .lattice import AtomArray, DIST_ATOL, pair_distances

DEFAULT_BINS = 20
DEFAULT_ALPHA = 0.999


@dataclass(frozen=True)
class BinnedDistribution:
    edges: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
            raise ValueError("bin edges must be strictly increasing with at least one bin")
        if p.shape != (e.size - 1,):
            raise ValueError("need one mass per bin")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("bin masses must be non-negative and sum to 1")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "probs", p)

    @property
    def bins(self) -> int:
        return self.probs.size


def _masses(p, q):
    if isinstance(p, BinnedDistribution) and isinstance(q, BinnedDistribution):
        if p.edges.shape != q.edges.shape or not np.array_equal(p.edges, q.edges):
            raise ValueError("distributions must share bin edges")
    pa = p.probs if isinstance(p, BinnedDistribution) else np.asarray(p, dtype=float)
    qa = q.probs if isinstance(q, BinnedDistribution) else np.asarray(q, dtype=float)
    if pa.shape != qa.shape:
        raise ValueError("distributions must have the same number of bins")
    return pa, qa


def _support_check(p, q):
    bad = np.nonzero((p > 0) & (q <= 0))[0]
    if bad.size:
        raise DivergenceError(f"target has zero mass in bins {bad.tolist()} where the sample has mass", bad)


def renyi_divergence(p, q, alpha: float = DEFAULT_ALPHA) -> float:
    """Order-alpha Renyi divergence D_alpha(p || q) in nats.

    Uses the 1/(alpha - 1) prefactor so the value is non-negative and tends
    to the KL divergence as alpha -> 1.
    """
    if alpha == 1:
        raise ValueError("alpha = 1 is the KL divergence; use kl_divergence")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    p, q = _masses(p, q)
    _support_check(p, q)
    keep = p > 0
    s = np.sum(p[keep] ** alpha * q[keep] ** (1.0 - alpha))
    return float(np.log(s) / (alpha - 1.0))


def kl_divergence(p, q) -> float:
    p, q = _masses(p, q)
    _support_check(p, q)
    keep = p > 0
    return float(np.sum(p[keep] * np.log(p[keep] / q[keep])))


def total_variation(p, q) -> float:
    p, q = _masses(p, q)
    return 0.5 * float(np.abs(p - q).sum())


def equal_width_edges(lo: float, hi: float, bins: int) -> np.ndarray:
    if bins < 1:
        raise ValueError("need at least one bin")
    if hi <= lo:
        return np.array([lo - 0.5, lo + 0.5])
    return np.linspace(lo, hi, bins + 1)


def bin_index(values, edges) -> np.ndarray:
    """Bin of each value; bins are left-closed except the last, which is closed."""
    values = np.asarray(values, dtype=float)
    k = np.searchsorted(edges, values, side="right") - 1
    k = np.where(values == edges[-1], edges.size - 2, k)
    if np.any((k < 0) | (k > edges.size - 2)):
        raise ValueError("values fall outside the bin range")
    return k


def bin_costs(values, weights=None, bins: int = DEFAULT_BINS, edges=None) -> BinnedDistribution:
    """Histogram of costs with equal-width bins over [min, max].

    When every value is equal the result is one degenerate bin of mass 1.
    Pass ``edges`` to reuse another distribution's bins.
    """
    values = np.asarray(values, dtype=float).ravel()
    w = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != values.shape:
        raise ValueError("weights and values must have the same length")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be non-negative with at least one positive entry")
    if edges is None:
        edges = equal_width_edges(values.min(), values.max(), bins)
    edges = np.asarray(edges, dtype=float)
    mass = np.bincount(bin_index(values, edges), weights=w, minlength=edges.size - 1)
    return BinnedDistribution(edges, mass / mass.sum())


def hamming(z_a, z_b) -> int:
    a, b = as_bits(z_a), as_bits(z_b)
    if a.size != b.size:
        raise ValueError("bitstrings must have equal length")
    return int(np.count_nonzero(a != b))


def _site_distances(atoms: AtomArray) -> np.ndarray:
    d = pair_distances(atoms)
    off = ~np.eye(atoms.n, dtype=bool)
    if np.any(d[off] <= DIST_ATOL):
        raise ValueError("lattice sites must be distinct")
    return d


def quadratic_hamming(atoms: AtomArray, z_a, z_b) -> float:
    """Pair-product Hamming distance weighted by inverse site distance.

    The pair sum runs over ordered pairs i != j, then plain Hamming is added.
    """
    n = atoms.n
    if n < 2:
        raise ValueError("the lattice metric needs at least two sites")
    a = as_bits(z_a, n).astype(float)
    b = as_bits(z_b, n).astype(float)
    d = _site_distances(atoms)
    diff = np.outer(a, a) - np.outer(b, b)
    np.fill_diagonal(diff, 0.0)
    inv = np.zeros_like(d)
    off = ~np.eye(n, dtype=bool)
    inv[off] = 1.0 / d[off]
    return float((diff**2 * inv).sum() + ((a - b) ** 2).sum())


def quadratic_hamming_matrix(atoms: AtomArray, points) -> np.ndarray:
    """All pairwise lattice distances between the rows of ``points``."""
    pts = np.asarray(points, dtype=float)
    n = atoms.n
    d = _site_distances(atoms)
    iu = np.triu_indices(n, 1)
    w = 2.0 / d[iu]
    prods = pts[:, iu[0]] * pts[:, iu[1]]
    pair = np.abs(prods[:, None, :] - prods[None, :, :]) @ w
    single = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=-1)
    return pair + single


@dataclass
class AxiomReport:
    points: int
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return f"all metric axioms hold on {self.points} points"
        return "; ".join(f"{axiom} violated at {witness}" for axiom, witness in self.violations[:10])


def check_metric_axioms(dist, points, atol: float = 1e-12, matrix=None, max_witnesses: int = 10) -> AxiomReport:
    """Check identity, positivity, symmetry and the triangle inequality.

    ``dist(a, b)`` is evaluated on every ordered pair unless a precomputed
    ``matrix`` of pairwise values is supplied.  Violations are returned with
    witnesses rather than raised.
    """
    pts = list(points)
    m = len(pts)
    if m < 2:
        raise ValueError("need at least two points")
    if matrix is None:
        d = np.array([[float(dist(a, b)) for b in pts] for a in pts])
    else:
        d = np.asarray(matrix, dtype=float)
    report = AxiomReport(m)

    def add(axiom, idx):
        if sum(1 for a, _ in report.violations if a == axiom) < max_witnesses:
            report.violations.append((axiom, tuple(_label(pts[i]) for i in idx)))

    for i in np.nonzero(np.abs(np.diag(d)) > atol)[0]:
        add("identity", (i, i))
    off = ~np.eye(m, dtype=bool)
    for i, j in zip(*np.nonzero(off & (d <= atol))):
        add("positivity", (i, j))
    for i, j in zip(*np.nonzero(np.abs(d - d.T) > atol)):
        add("symmetry", (i, j))
    for j in range(m):
        # d[i, k] <= d[i, j] + d[j, k] for every i, k with j as the midpoint
        slack = d[:, j][:, None] + d[j, :][None, :] - d
        bad = np.argwhere(slack < -atol * (1 + np.abs(d)))
        for i, k in bad[:max_witnesses]:
            add("triangle", (i, j, k))
    return report


def _label(p):
    arr = np.asarray(p)
    if arr.ndim == 1 and arr.size and np.isin(arr, (0, 1)).all() and arr.dtype != float:
        return "".join(str(int(x)) for x in arr)
    return p.item() if isinstance(p, np.generic) else p


def mean_abs_pixel_distance(x_a, x_b) -> float:
    return float(np.mean(np.abs(np.asarray(x_a, dtype=float) - np.asarray(x_b, dtype=float))))


def expected_isometry_gap(pairs, d_z=hamming, d_x=mean_abs_pixel_distance, scale=None) -> float:
    """Mean over pairs of |d_Z(z_i, z_j) - scale * E[d_X(x_mu, x_nu)]|.

    Each pair is ``(z_i, z_j, samples_i, samples_j)`` where the sample lists
    hold decoded designs for each latent.  ``scale`` defaults to the ratio of
    mean latent distance to mean design distance over the supplied pairs.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one pair")
    dz = np.empty(len(pairs))
    dx = np.empty(len(pairs))
    for k, (zi, zj, xs_i, xs_j) in enumerate(pairs):
        xs_i, xs_j = list(xs_i), list(xs_j)
        if not xs_i or not xs_j:
            raise ValueError("every pair needs at least one design sample per side")
        dz[k] = d_z(zi, zj)
        dx[k] = np.mean([d_x(a, b) for a in xs_i for b in xs_j])
    if scale is None:
        scale = dz.mean() / dx.mean() if dx.mean() > 0 else 1.0
    if scale <= 0:
        raise ValueError("distance scale must be positive")
    return float(np.mean(np.abs(dz - scale * dx)))


def all_pairs(items):
    return list(combinations(range(len(items)), 2))
