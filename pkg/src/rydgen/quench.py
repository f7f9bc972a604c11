"""Exact Rydberg quench dynamics at desk scale.

The Hamiltonian is applied matrix free (see :mod:`rydgen.kernels`) and time
evolution uses a Chebyshev expansion of ``exp(-iHt)`` with Bessel-function
coefficients, truncated once the neglected tail falls below ``tol``.
"""
from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import jv

from . import kernels
from .bits import as_bits, index_label, to_index
from .errors import CapacityError, IndependenceWarning, PropagationError
from .lattice import blockade_radius, unit_disk_graph, violation_count
from .rydberg import RydbergParams

MAX_STATE_N = 14
MAX_KERNEL_N = 12
DEFAULT_TOL = 1e-10
MAX_TERMS = 1_000_000


@dataclass(frozen=True)
class QuantumState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        dim = amp.size
        if amp.ndim != 1 or dim == 0 or dim & (dim - 1):
            raise ValueError("state dimension must be a power of two")
        if abs(np.linalg.norm(amp) - 1.0) > 1e-9:
            raise ValueError("state must be normalized")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def n(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @classmethod
    def basis(cls, z) -> "QuantumState":
        z = as_bits(z)
        amp = np.zeros(1 << z.size, dtype=complex)
        amp[to_index(z)] = 1.0
        return cls(amp)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class QuenchSpec:
    params: RydbergParams
    t: float
    phase: float = 0.0
    mask: np.ndarray = None

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("evolution time must be non-negative")
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=float)
            if m.shape != (self.params.n,):
                raise ValueError(f"mask has length {m.size}, expected {self.params.n}")
            object.__setattr__(self, "mask", m)

    @property
    def n(self) -> int:
        return self.params.n

    def detuning(self) -> np.ndarray:
        d = self.params.delta + self.params.delta_local
        if self.mask is not None:
            d = d + self.mask
        return d

    def is_real(self) -> bool:
        return self.phase % (2 * np.pi) == 0.0


class RydbergOperator:
    """Matrix-free Rydberg Hamiltonian on the full 2**n basis.

    Diagonal: ``-sum_i detuning_i n_i + sum_{i<j} V_ij n_i n_j``; each site
    carries the drive ``(omega/2)(e^{-i phase}|1><0| + h.c.)``.
    """

    def __init__(self, spec: QuenchSpec):
        self.n = spec.n
        self.dim = 1 << self.n
        self.omega = spec.params.omega
        self.diag = kernels.diag_energies(self.n, -spec.detuning(), spec.params.interaction_matrix())
        self.up = complex(0.5 * self.omega * np.exp(-1j * spec.phase))
        self.shape = (self.dim, self.dim)

    def matmat(self, x):
        x = np.ascontiguousarray(x, dtype=complex)
        if x.ndim == 1:
            return kernels.apply_h(self.diag, self.up, self.n, x[:, None])[:, 0]
        return kernels.apply_h(self.diag, self.up, self.n, x)

    def __matmul__(self, x):
        return self.matmat(x)

    def spectral_bounds(self):
        r = self.n * abs(self.up)
        return float(self.diag.min() - r), float(self.diag.max() + r)

    def tocsr(self) -> sp.csr_matrix:
        dim, n = self.dim, self.n
        idx = np.arange(dim, dtype=np.int64)
        rows = [idx]
        cols = [idx]
        vals = [self.diag.astype(complex)]
        if self.omega != 0.0:
            for i in range(n):
                src = idx ^ (1 << i)
                rows.append(idx)
                cols.append(src)
                vals.append(np.where((idx >> i) & 1, self.up, np.conj(self.up)))
        h = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
        )
        h.eliminate_zeros()
        return h


def _check_cap(n, cap, what):
    if n > cap:
        raise CapacityError(f"{what} limited to n <= {cap}, got n={n}")


def hamiltonian_operator(spec: QuenchSpec, cap: int = MAX_STATE_N) -> RydbergOperator:
    _check_cap(spec.n, cap, "Hamiltonian assembly")
    return RydbergOperator(spec)


def build_hamiltonian(spec: QuenchSpec, cap: int = MAX_STATE_N) -> sp.csr_matrix:
    """Sparse Hermitian Hamiltonian (little-endian basis)."""
    return hamiltonian_operator(spec, cap).tocsr()


def _bounds(h):
    if isinstance(h, RydbergOperator):
        return h.spectral_bounds()
    if sp.issparse(h):
        h = h.tocsr()
        d = h.diagonal().real
        radius = np.asarray(abs(h).sum(axis=1)).ravel() - np.abs(h.diagonal())
    else:
        h = np.asarray(h)
        d = np.diag(h).real
        radius = np.abs(h).sum(axis=1) - np.abs(np.diag(h))
    return float((d - radius).min()), float((d + radius).max())


def chebyshev_coefficients(scaled_time: float, tol: float):
    """Coefficients c_k = (2 - [k=0]) (-i)^k J_k(x) and the neglected tail."""
    x = abs(scaled_time)
    kmax = int(1.5 * x + 40 + 8 * x ** (1 / 3))
    if kmax > MAX_TERMS:
        raise PropagationError(f"Chebyshev expansion needs more than {MAX_TERMS} terms", float("inf"))
    k = np.arange(kmax + 1)
    j = jv(k, x)
    weight = 2.0 * np.abs(j)
    weight[0] = abs(j[0])
    # tail[k] = sum of |c_m| for m >= k
    tail = np.cumsum(weight[::-1])[::-1]
    above = np.nonzero(tail > tol * 1e-2)[0]
    nterms = int(above[-1]) + 1 if above.size else 1
    if nterms > kmax:
        raise PropagationError("Chebyshev series did not converge", float(tail[-1]))
    residual = float(tail[nterms]) if nterms <= kmax else 0.0
    phase = (-1j) ** (k[:nterms] % 4)
    coef = phase * j[:nterms]
    coef[1:] *= 2.0
    return coef, residual


def propagate(h, psi0, t: float, tol: float = DEFAULT_TOL):
    """Return exp(-i H t) psi0.

    ``psi0`` may be a :class:`QuantumState`, a vector or a block of column
    vectors; the result has the same kind.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    as_state = isinstance(psi0, QuantumState)
    x = psi0.amplitudes if as_state else np.asarray(psi0, dtype=complex)
    vector = x.ndim == 1
    block = np.ascontiguousarray(x[:, None] if vector else x, dtype=complex)
    if t == 0:
        out = block.copy()
    else:
        lo, hi = _bounds(h)
        shift = 0.5 * (hi + lo)
        scale = 0.5 * (hi - lo)
        scale = scale * (1.0 + 1e-6) + 1e-12
        coef, _ = chebyshev_coefficients(scale * t, tol)
        out = _chebyshev_sum(h, block, coef, scale, shift)
        out *= np.exp(-1j * shift * t)
    if vector:
        out = out[:, 0]
    return QuantumState(out) if as_state else out


def _chebyshev_sum(h, block, coef, scale, shift):
    acc = coef[0] * block
    if coef.size == 1:
        return acc
    if isinstance(h, RydbergOperator):
        def step(tk, tkm1):
            return kernels.cheb_step(h.diag, h.up, h.n, tk, tkm1, scale, shift)

        t1 = (h.matmat(block) - shift * block) / scale
    else:
        def step(tk, tkm1):
            return (2.0 / scale) * (h @ tk - shift * tk) - tkm1

        t1 = (h @ block - shift * block) / scale
    acc += coef[1] * t1
    tkm1, tk = block, t1
    for c in coef[2:]:
        tkm1, tk = tk, step(tk, tkm1)
        acc += c * tk
    return acc


def propagate_eigh(h, psi0, t: float) -> np.ndarray:
    """Dense eigendecomposition reference for small systems."""
    if isinstance(h, RydbergOperator):
        h = h.tocsr()
    dense = h.toarray() if sp.issparse(h) else np.asarray(h)
    w, v = np.linalg.eigh(dense)
    x = np.asarray(psi0, dtype=complex)
    phase = np.exp(-1j * w * t)
    if x.ndim == 2:
        phase = phase[:, None]
    return v @ (phase * (v.conj().T @ x))


def proposal_row(spec: QuenchSpec, z_prime, tol: float = DEFAULT_TOL, cap: int = MAX_STATE_N) -> np.ndarray:
    """r_q(z | z') = |<z|U|z'>|^2 for every z."""
    z_prime = as_bits(z_prime, spec.n)
    h = hamiltonian_operator(spec, cap)
    psi = np.zeros(h.dim, dtype=complex)
    psi[to_index(z_prime)] = 1.0
    return np.abs(propagate(h, psi, spec.t, tol)) ** 2


def transition_kernel(
    spec: QuenchSpec,
    tol: float = DEFAULT_TOL,
    cap: int = MAX_KERNEL_N,
    method: str = "eigh",
    chunk: int = 256,
    threads: int = 1,
) -> np.ndarray:
    """Column-stochastic matrix K[z, z'] = |<z|U|z'>|^2.

    ``method="eigh"`` diagonalizes the dense Hamiltonian once;
    ``method="chebyshev"`` propagates basis columns in blocks of ``chunk``.
    Below the kernel cap the dense route is much faster because the
    Chebyshev term count grows with the interaction energy scale.
    """
    _check_cap(spec.n, cap, "full transition kernel")
    h = hamiltonian_operator(spec, cap)
    dim = h.dim
    if method == "eigh":
        w, v = np.linalg.eigh(h.tocsr().toarray())
        u = (v * np.exp(-1j * w * spec.t)) @ v.conj().T
        return np.abs(u) ** 2
    if method != "chebyshev":
        raise ValueError(f"unknown method {method!r}")
    starts = list(range(0, dim, chunk))

    def run(start):
        stop = min(start + chunk, dim)
        block = np.zeros((dim, stop - start), dtype=complex)
        block[np.arange(start, stop), np.arange(stop - start)] = 1.0
        return np.abs(propagate(h, block, spec.t, tol)) ** 2

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.hstack(parts)


@dataclass(frozen=True)
class PreparedState:
    state: QuantumState
    target: np.ndarray
    fidelity: float
    independent: bool


def _independent_of_blockade(params: RydbergParams, target) -> bool:
    if params.n < 2 or params.omega <= 0:
        return True
    graph = unit_disk_graph(params.atoms, blockade_radius(params.c6, params.omega))
    return violation_count(graph, target) == 0


def prepare_masked_state(params: RydbergParams, target, delta_l: float, tol: float = DEFAULT_TOL) -> PreparedState:
    """Resonant pi pulse from |0...0> with atoms whose target bit is 0 masked.

    The global and per-atom detunings are switched off during preparation so
    that the unmasked atoms are driven on resonance.
    """
    if delta_l <= 0:
        raise ValueError("mask detuning must be positive")
    if params.omega <= 0:
        raise ValueError("preparation needs a non-zero Rabi frequency")
    target = as_bits(target, params.n)
    independent = _independent_of_blockade(params, target)
    if not independent:
        warnings.warn(
            f"target {''.join(map(str, target))} violates the blockade; only independent sets can be prepared",
            IndependenceWarning,
            stacklevel=2,
        )
    resonant = RydbergParams(params.atoms, params.omega, 0.0, params.c6, None)
    spec = QuenchSpec(resonant, np.pi / params.omega, 0.0, delta_l * (1 - target.astype(float)))
    state = propagate(hamiltonian_operator(spec), QuantumState.basis(np.zeros(params.n, dtype=np.uint8)), spec.t, tol)
    fid = float(state.probabilities()[to_index(target)])
    return PreparedState(state, target, fid, independent)


def diffuse(params: RydbergParams, prepared: PreparedState, omega_t: float = np.pi / 2, tol: float = DEFAULT_TOL) -> QuantumState:
    """Evolve a prepared state under the unmasked drive for ``omega * t = omega_t``."""
    if omega_t == 0:
        return prepared.state
    spec = QuenchSpec(params, omega_t / params.omega)
    return propagate(hamiltonian_operator(spec), prepared.state, spec.t, tol)


def write_kernel_csv(path, matrix, n: int) -> None:
    """Rows ``z, z_prime, probability`` with little-endian bitstring labels."""
    matrix = np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "z_prime", "probability"])
        for a in range(matrix.shape[0]):
            la = index_label(a, n)
            for b in range(matrix.shape[1]):
                w.writerow([la, index_label(b, n), repr(float(matrix[a, b]))])


def read_kernel_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = len(rows[0]["z"])
    out = np.zeros((1 << n, 1 << n))
    for r in rows:
        out[to_index(as_bits(r["z"])), to_index(as_bits(r["z_prime"]))] = float(r["probability"])
    return out
