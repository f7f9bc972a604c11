"""Proposal samplers, Metropolis-Hastings channels and their transition matrices.

Matrices follow the column convention ``P[z, z'] = Gamma(z | z')``: column
``z'`` is the distribution of the next state given the current one, so
columns sum to one.  Bitstrings are addressed by their little-endian index
(see :mod:`rydgen.bits`).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .bits import as_bits, from_index, index_label, to_index
from .errors import CapacityError
from .quench import MAX_KERNEL_N, QuenchSpec, transition_kernel
from .rydberg import DiscreteDistribution, energy_table

SAMPLERS = {"quantum": kernels.QUANTUM, "bitflip": kernels.BITFLIP, "uniform": kernels.UNIFORM}
MEMO_N = 20
CLASSICAL_MATRIX_N = 16


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; stream ``k`` of a seed uses key ``seed ^ k``."""
    return np.random.Generator(np.random.Philox(key=(int(seed) ^ int(stream)) & (2**64 - 1)))


@dataclass(frozen=True, eq=False)
class Channel:
    """Metropolis-Hastings channel Gamma_f with a symmetric proposal sampler.

    ``energy`` is a callable on bitstrings, an object with ``table()`` or a
    length ``2**n`` array.
    """

    sampler: str
    tau: float
    energy: object
    n: int
    depth: int = 1
    quench: Optional[QuenchSpec] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}; choose from {sorted(SAMPLERS)}")
        if not self.tau > 0:
            raise ValueError("temperature must be positive")
        if self.depth < 1:
            raise ValueError("channel depth must be at least 1")
        if self.n < 1:
            raise ValueError("bitstring length must be at least 1")
        if self.sampler == "quantum":
            if self.quench is None:
                raise ValueError("the quantum sampler needs a QuenchSpec")
            if self.quench.n != self.n:
                raise ValueError("quench size does not match channel size")

    @property
    def code(self) -> int:
        return SAMPLERS[self.sampler]

    def with_(self, **changes) -> "Channel":
        kw = dict(sampler=self.sampler, tau=self.tau, energy=self.energy, n=self.n, depth=self.depth, quench=self.quench)
        kw.update(changes)
        out = Channel(**kw)
        if kw["energy"] is self.energy and "table" in self._cache:
            out._cache["table"] = self._cache["table"]
        if kw["quench"] is self.quench and "kernel" in self._cache:
            out._cache["kernel"] = self._cache["kernel"]
            out._cache["cdf"] = self._cache["cdf"]
        return out

    def energy_table(self) -> np.ndarray:
        if "table" not in self._cache:
            if self.n > MEMO_N:
                raise CapacityError(f"energy memoization limited to n <= {MEMO_N}")
            self._cache["table"] = energy_table(self.energy, self.n)
        return self._cache["table"]

    def energy_of(self, z) -> float:
        return float(self.energy_table()[to_index(z)])

    def quantum_kernel(self) -> np.ndarray:
        if "kernel" not in self._cache:
            if self.n > MAX_KERNEL_N:
                raise CapacityError(f"quantum proposals limited to n <= {MAX_KERNEL_N}")
            k = transition_kernel(self.quench)
            self._cache["kernel"] = k
            self._cache["cdf"] = np.ascontiguousarray(np.cumsum(k.T, axis=1))
        return self._cache["kernel"]

    def proposal_cdf(self) -> np.ndarray:
        if self.sampler != "quantum":
            return np.zeros((1, 1))
        self.quantum_kernel()
        return self._cache["cdf"]


def _draws(rng, n, shape):
    u_prop = rng.random(shape)
    bits = rng.integers(0, 1 << n, size=shape, dtype=np.int64)
    u_acc = rng.random(shape)
    return u_prop, bits, u_acc


def propose(channel: Channel, z_prime, rng) -> np.ndarray:
    """Draw z ~ r(z | z') from the channel's proposal sampler."""
    z_prime = as_bits(z_prime, channel.n)
    u, b, _ = _draws(rng, channel.n, 1)
    if channel.sampler == "bitflip":
        k = min(int(u[0] * channel.n), channel.n - 1)
        out = z_prime.copy()
        out[k] ^= 1
        return out
    if channel.sampler == "uniform":
        return from_index(b[0], channel.n)
    row = channel.proposal_cdf()[to_index(z_prime)]
    k = min(int(np.searchsorted(row, u[0] * row[-1], side="right")), row.size - 1)
    return from_index(k, channel.n)


def acceptance_probability(delta_cost: float, tau: float) -> float:
    if tau <= 0:
        raise ValueError("temperature must be positive")
    if delta_cost <= 0:
        return 1.0
    return float(np.exp(-delta_cost / tau))


def mh_accept(delta_cost: float, tau: float, rng) -> bool:
    """Accept with probability min(1, exp(-delta_cost / tau))."""
    p = acceptance_probability(delta_cost, tau)
    return bool(rng.random() < p) if p < 1.0 else True


def xor_noise(z_prime, z) -> np.ndarray:
    a = as_bits(z_prime)
    b = as_bits(z)
    if a.size != b.size:
        raise ValueError("bitstrings must have equal length")
    return a ^ b


def _final_states(channel: Channel, starts: np.ndarray, depth: int, rng) -> np.ndarray:
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    u_prop, bits, u_acc = _draws(rng, channel.n, (starts.size, depth))
    return kernels.mh_final(
        channel.energy_table(), channel.code, channel.proposal_cdf(), channel.n, starts, float(channel.tau), u_prop, bits, u_acc
    )


def channel_step(channel: Channel, z_prime, rng) -> np.ndarray:
    """One propose/accept application of Gamma."""
    z_prime = as_bits(z_prime, channel.n)
    out = _final_states(channel, np.array([to_index(z_prime)]), 1, rng)
    return from_index(out[0], channel.n)


def apply_channel(channel: Channel, z0, rng) -> np.ndarray:
    """Apply Gamma ``channel.depth`` times."""
    z0 = as_bits(z0, channel.n)
    out = _final_states(channel, np.array([to_index(z0)]), channel.depth, rng)
    return from_index(out[0], channel.n)


def apply_channel_batch(channel: Channel, starts, rng, depth: Optional[int] = None) -> np.ndarray:
    """Run independent depth-f channels from each start index; returns final indices."""
    return _final_states(channel, np.asarray(starts), channel.depth if depth is None else depth, rng)


def proposal_matrix(channel: Channel) -> np.ndarray:
    """R[z, z'] = r(z | z') for the channel's sampler."""
    n = channel.n
    dim = 1 << n
    if channel.sampler == "uniform":
        return np.full((dim, dim), 1.0 / dim)
    if channel.sampler == "bitflip":
        r = np.zeros((dim, dim))
        idx = np.arange(dim)
        for i in range(n):
            r[idx ^ (1 << i), idx] = 1.0 / n
        return r
    return channel.quantum_kernel().copy()


def channel_matrix(channel: Channel) -> np.ndarray:
    """Exact single-step MH kernel including the rejection self-loop."""
    cap = MAX_KERNEL_N if channel.sampler == "quantum" else CLASSICAL_MATRIX_N
    if channel.n > cap:
        raise CapacityError(f"{channel.sampler} channel matrix limited to n <= {cap}")
    r = proposal_matrix(channel)
    e = channel.energy_table()
    uphill = np.maximum(e[:, None] - e[None, :], 0.0)
    p = r * np.exp(-uphill / channel.tau)
    np.fill_diagonal(p, 0.0)
    p[np.diag_indices_from(p)] = 1.0 - p.sum(axis=0)
    return p


def _check_stochastic(p, atol=1e-9):
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("transition matrix must be square")
    if np.any(p < -atol) or np.max(np.abs(p.sum(axis=0) - 1.0)) > atol:
        raise ValueError("matrix is not column-stochastic")
    return p


def telescope(p, f: int) -> np.ndarray:
    """P^f by repeated composition Gamma_{k+1} = Gamma Gamma_k."""
    if f < 1:
        raise ValueError("depth must be at least 1")
    p = _check_stochastic(p)
    out = p.copy()
    for _ in range(f - 1):
        out = p @ out
    return out


def detailed_balance_residual(p, mu) -> float:
    """max over pairs of |P(z|z') mu(z') - P(z'|z) mu(z)|."""
    p = np.asarray(p, dtype=float)
    mu = mu.probs if isinstance(mu, DiscreteDistribution) else np.asarray(mu, dtype=float)
    if p.shape != (mu.size, mu.size):
        raise ValueError("matrix and distribution dimensions disagree")
    flow = p * mu[None, :]
    return float(np.max(np.abs(flow - flow.T)))


def eigenvalue_moduli(p, mu=None) -> np.ndarray:
    """Eigenvalue moduli in descending order.

    With a distribution that ``p`` is reversible against, the similarity
    transform D^{-1/2} P D^{1/2} is symmetric and a Hermitian solver is used.
    """
    p = np.asarray(p, dtype=float)
    if mu is not None:
        m = mu.probs if isinstance(mu, DiscreteDistribution) else np.asarray(mu, dtype=float)
        if np.all(m > 0) and detailed_balance_residual(p, m) <= 1e-10:
            s = np.sqrt(m)
            sym = p * s[None, :] / s[:, None]
            lam = np.linalg.eigvalsh(0.5 * (sym + sym.T))
            return np.sort(np.abs(lam))[::-1]
    lam = np.linalg.eigvals(p)
    return np.sort(np.abs(lam))[::-1]


def spectral_gap(p, mu=None) -> float:
    """delta = 1 - (second largest eigenvalue modulus), clamped to [0, 1].

    Exactly one copy of the leading eigenvalue is discarded, so a kernel with
    a degenerate eigenvalue 1 (e.g. the identity) has gap 0.
    """
    _check_stochastic(p)
    mods = eigenvalue_moduli(p, mu)
    if mods.size < 2:
        return 1.0
    return float(min(1.0, max(0.0, 1.0 - mods[1])))


@dataclass
class ChainRecord:
    n: int
    seed: int
    states: np.ndarray
    energies: np.ndarray
    proposals: np.ndarray
    accepted: np.ndarray
    start: int = 0

    def __len__(self):
        return self.states.size

    def __eq__(self, other):
        if not isinstance(other, ChainRecord):
            return NotImplemented
        return (
            self.n == other.n
            and self.seed == other.seed
            and self.start == other.start
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.energies, other.energies)
            and np.array_equal(self.proposals, other.proposals)
            and np.array_equal(self.accepted, other.accepted)
        )

    def empirical(self, burn_in: int = 0) -> np.ndarray:
        counts = np.bincount(self.states[burn_in:], minlength=1 << self.n).astype(float)
        return counts / counts.sum()

    def rows(self):
        for k in range(self.states.size):
            yield (
                k + 1,
                index_label(self.states[k], self.n),
                repr(float(self.energies[k])),
                index_label(self.proposals[k], self.n),
                int(self.accepted[k]),
            )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "state", "energy", "proposal", "accepted"])
            w.writerows(self.rows())


def run_chain(channel: Channel, z0, steps: int, seed: int, chain_index: int = 0) -> ChainRecord:
    """Run ``steps`` single MH steps and record every proposal."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    z0 = as_bits(z0, channel.n)
    rng = make_rng(seed, chain_index)
    u_prop, bits, u_acc = _draws(rng, channel.n, steps)
    start = to_index(z0)
    if channel.n <= MEMO_N:
        table = channel.energy_table()
        states, proposals, accepted = kernels.mh_trajectory(
            table, channel.code, channel.proposal_cdf(), channel.n, start, float(channel.tau), u_prop, bits, u_acc
        )
        energies = table[states]
    else:
        states, proposals, accepted, energies = _trajectory_unmemoized(channel, start, u_prop, bits, u_acc)
    return ChainRecord(channel.n, int(seed), states, energies, proposals, accepted, start)


def _trajectory_unmemoized(channel, start, u_prop, bits, u_acc):
    if channel.sampler == "quantum":
        raise CapacityError("quantum chains need n within the kernel cap")
    n = channel.n
    cache = {}

    def energy(idx):
        if idx not in cache:
            cache[idx] = float(channel.energy(from_index(idx, n)))
        return cache[idx]

    steps = u_prop.size
    states = np.empty(steps, dtype=np.int64)
    proposals = np.empty(steps, dtype=np.int64)
    accepted = np.zeros(steps, dtype=bool)
    energies = np.empty(steps)
    z = start
    for s in range(steps):
        zp = z ^ (1 << min(int(u_prop[s] * n), n - 1)) if channel.sampler == "bitflip" else int(bits[s])
        de = energy(zp) - energy(z)
        if de <= 0 or u_acc[s] < np.exp(-de / channel.tau):
            z = zp
            accepted[s] = True
        states[s], proposals[s], energies[s] = z, zp, energy(z)
    return states, proposals, accepted, energies


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())
