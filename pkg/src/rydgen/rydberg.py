"""Classical Rydberg energies, exact Boltzmann distributions and the Ising basis change."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .bits import all_bitstrings, as_bits, to_index
from .errors import CapacityError
from .lattice import AtomArray, pair_distances

MAX_ENUM_N = 24


@dataclass(frozen=True)
class RydbergParams:
    """Atom positions and drive parameters (rad/us, um).

    There is deliberately no default for ``c6``.
    """

    atoms: AtomArray
    omega: float
    delta: float
    c6: float
    delta_local: np.ndarray = None
    _pair: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.atoms.n
        if self.omega < 0:
            raise ValueError("omega must be non-negative")
        if self.c6 <= 0:
            raise ValueError("C6 must be positive")
        loc = np.zeros(n) if self.delta_local is None else np.asarray(self.delta_local, dtype=float)
        if loc.shape != (n,):
            raise ValueError(f"delta_local has length {loc.size}, expected {n}")
        object.__setattr__(self, "delta_local", loc)
        d = pair_distances(self.atoms)
        off = ~np.eye(n, dtype=bool)
        if n > 1 and np.any(d[off] <= 0):
            raise ValueError("atom positions must be distinct")
        pair = np.zeros((n, n))
        pair[off] = self.c6 / d[off] ** 6
        object.__setattr__(self, "_pair", pair)

    @property
    def n(self) -> int:
        return self.atoms.n

    def interaction_matrix(self) -> np.ndarray:
        """Symmetric V_ij with a zero diagonal."""
        return self._pair.copy()


def interaction(params: RydbergParams, i: int, j: int) -> float:
    if i == j:
        raise ValueError("interaction needs two distinct atoms")
    n = params.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"atom index out of range for {n} atoms")
    return float(params._pair[i, j])


def classical_energy(params: RydbergParams, z, sign: int = 1) -> float:
    """E(z) = sign * sum_i (delta + delta_local_i) z_i + sum_{i<j} V_ij z_i z_j."""
    z = as_bits(z, params.n).astype(float)
    lin = sign * (params.delta + params.delta_local)
    return float(lin @ z + z @ np.triu(params._pair, 1) @ z)


class ClassicalEnergy:
    """Callable energy model with a cached table over all 2**n bitstrings.

    ``offset`` shifts every energy by a constant; it leaves Boltzmann weights
    and Metropolis decisions unchanged but moves where zero sits, which
    matters when energies are compared with design costs.
    """

    def __init__(self, params: RydbergParams, sign: int = 1, offset: float = 0.0):
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        self.params = params
        self.sign = sign
        self.offset = float(offset)
        self.n = params.n
        self._table = None

    def __call__(self, z) -> float:
        return classical_energy(self.params, z, self.sign) + self.offset

    def linear(self) -> np.ndarray:
        return self.sign * (self.params.delta + self.params.delta_local)

    def pair(self) -> np.ndarray:
        return self.params.interaction_matrix()

    def table(self) -> np.ndarray:
        if self._table is None:
            if self.n > MAX_ENUM_N:
                raise CapacityError(f"cannot tabulate energies for n={self.n} > {MAX_ENUM_N}")
            self._table = kernels.diag_energies(self.n, self.linear(), self.pair()) + self.offset
        return self._table

    def ground_shifted(self) -> "ClassicalEnergy":
        """Copy whose minimum energy is exactly zero."""
        return ClassicalEnergy(self.params, self.sign, self.offset - float(self.table().min()))


class TableEnergy:
    """Energy given by a lookup table indexed by little-endian bitstring index."""

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        n = int(round(np.log2(values.size)))
        if values.ndim != 1 or (1 << n) != values.size:
            raise ValueError("energy table length must be a power of two")
        self.n = n
        self._table = values

    def __call__(self, z) -> float:
        return float(self._table[to_index(as_bits(z, self.n))])

    def table(self) -> np.ndarray:
        return self._table


def energy_table(energy, n: int) -> np.ndarray:
    """Energies of all 2**n bitstrings for a callable, table object or array."""
    if n > MAX_ENUM_N:
        raise CapacityError(f"exact enumeration limited to n <= {MAX_ENUM_N}, got {n}")
    if isinstance(energy, np.ndarray):
        if energy.shape != (1 << n,):
            raise ValueError("energy table has the wrong length")
        return energy.astype(float)
    tab = getattr(energy, "table", None)
    if callable(tab):
        out = np.asarray(tab(), dtype=float)
        if out.shape != (1 << n,):
            raise ValueError("energy table has the wrong length")
        return out
    return np.array([float(energy(z)) for z in all_bitstrings(n)])


@dataclass(frozen=True)
class DiscreteDistribution:
    probs: np.ndarray
    log_partition: float

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)


def boltzmann(energy_fn, n: int, tau: float) -> DiscreteDistribution:
    if tau <= 0:
        raise ValueError("temperature must be positive")
    if n > MAX_ENUM_N:
        raise CapacityError(f"exact enumeration limited to n <= {MAX_ENUM_N}, got {n}")
    e = energy_table(energy_fn, n)
    logw = -e / tau
    log_z = float(logsumexp(logw))
    p = np.exp(logw - log_z)
    p /= p.sum()
    return DiscreteDistribution(p, log_z)


def ising_coefficients(linear, quadratic):
    """Rewrite sum a_i z_i + sum_{i<j} b_ij z_i z_j in spins s = 2z - 1.

    ``quadratic`` is either a dict keyed by pairs or an ``n x n`` matrix whose
    upper triangle is used.  Returns ``(h, J, offset)`` with ``J`` in the same
    form as the input, such that the binary energy equals
    ``h @ s + sum_{i<j} J_ij s_i s_j + offset``.
    """
    a = np.asarray(linear, dtype=float)
    n = a.size
    h = a / 2.0
    offset = a.sum() / 2.0
    if isinstance(quadratic, dict):
        items = [((min(i, j), max(i, j)), float(b)) for (i, j), b in quadratic.items()]
        spin_j = {}
        for (i, j), b in items:
            if i == j:
                raise ValueError("quadratic terms must couple distinct sites")
            spin_j[(i, j)] = spin_j.get((i, j), 0.0) + b / 4.0
            h[i] += b / 4.0
            h[j] += b / 4.0
            offset += b / 4.0
        return h, spin_j, float(offset)
    b = np.triu(np.asarray(quadratic, dtype=float), 1)
    if b.shape != (n, n):
        raise ValueError("quadratic matrix must be n x n")
    h += (b.sum(axis=1) + b.sum(axis=0)) / 4.0
    offset += b.sum() / 4.0
    return h, b / 4.0, float(offset)


def binary_energy(linear, quadratic, z) -> float:
    z = np.asarray(z, dtype=float)
    return float(np.asarray(linear) @ z + z @ np.triu(quadratic, 1) @ z)


def spin_energy(h, j, offset, s) -> float:
    s = np.asarray(s, dtype=float)
    return float(h @ s + s @ np.triu(j, 1) @ s + offset)
