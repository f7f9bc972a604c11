import numpy as np
import pytest
from hypothesis import given, strategies as st

from rydgen import mcmc
from rydgen.bits import all_bitstrings, to_index
from rydgen.lattice import build_king_subgraph
from rydgen.metrics import hamming
from rydgen.quench import QuenchSpec
from rydgen.rydberg import RydbergParams, TableEnergy, boltzmann


def quench(n, t=1.0, spacing=7.0):
    atoms = build_king_subgraph(1, n, spacing)
    return QuenchSpec(RydbergParams(atoms, 2 * np.pi, 2 * np.pi, 862690.0 * 2 * np.pi), t)


def flat(n):
    return TableEnergy(np.zeros(1 << n))


def random_energy(n, seed):
    return TableEnergy(np.random.default_rng(seed).normal(size=1 << n))


def test_bitflip_proposal_is_hamming_one(rng):
    ch = mcmc.Channel("bitflip", 1.0, flat(3), 3)
    for _ in range(200):
        assert hamming(mcmc.propose(ch, [0, 0, 0], rng), [0, 0, 0]) == 1


def test_uniform_proposal_frequencies(rng):
    ch = mcmc.Channel("uniform", 1.0, flat(2), 2)
    m = 100_000
    counts = np.bincount([to_index(mcmc.propose(ch, [0, 0], rng)) for _ in range(m)], minlength=4)
    sigma = np.sqrt(m * 0.25 * 0.75)
    assert np.all(np.abs(counts - m / 4) <= 3 * sigma)


def test_quantum_t0_never_moves(rng):
    ch = mcmc.Channel("quantum", 1.0, flat(3), 3, quench=quench(3, t=0.0))
    for z in all_bitstrings(3):
        np.testing.assert_array_equal(mcmc.propose(ch, z, rng), z)


def test_acceptance_rule(rng):
    assert mcmc.acceptance_probability(0.0, 1.0) == 1.0
    assert mcmc.acceptance_probability(-3.0, 1.0) == 1.0
    tau = 0.4
    m = 100_000
    hits = sum(mcmc.mh_accept(tau * np.log(2), tau, rng) for _ in range(m))
    assert abs(hits - m / 2) <= 3 * np.sqrt(m / 4)


def test_channel_step_cold_uphill_rejected(rng):
    e = TableEnergy([0.0, 1.0])
    ch = mcmc.Channel("bitflip", 1e-12, e, 1)
    for _ in range(50):
        np.testing.assert_array_equal(mcmc.channel_step(ch, [0], rng), [0])


def test_empirical_step_matches_matrix():
    e = TableEnergy([0.0, 1.0, 1.0, 2.0])
    ch = mcmc.Channel("bitflip", 1.0, e, 2)
    p = mcmc.channel_matrix(ch)
    rng = mcmc.make_rng(3)
    m = 100_000
    finals = mcmc.apply_channel_batch(ch, np.zeros(m, dtype=np.int64), rng, depth=1)
    counts = np.bincount(finals, minlength=4)
    sigma = np.sqrt(m * p[:, 0] * (1 - p[:, 0]))
    assert np.all(np.abs(counts - m * p[:, 0]) <= 3 * sigma + 1e-9)


def test_xor_noise():
    np.testing.assert_array_equal(mcmc.xor_noise([1, 0, 1], [1, 0, 1]), [0, 0, 0])
    np.testing.assert_array_equal(mcmc.xor_noise([1, 0, 1], [0, 0, 1]), [1, 0, 0])
    with pytest.raises(ValueError):
        mcmc.xor_noise([1], [1, 0])


@given(st.lists(st.integers(0, 1), min_size=1, max_size=12), st.integers(0, 2**12 - 1))
def test_xor_involution(zp, k):
    z = [(k >> i) & 1 for i in range(len(zp))]
    np.testing.assert_array_equal(mcmc.xor_noise(zp, mcmc.xor_noise(zp, z)), z)


def test_channel_matrix_examples():
    np.testing.assert_allclose(mcmc.channel_matrix(mcmc.Channel("uniform", 1.0, flat(3), 3)), 1 / 8)
    np.testing.assert_allclose(mcmc.channel_matrix(mcmc.Channel("bitflip", 1.0, flat(1), 1)), [[0, 1], [1, 0]])


@pytest.mark.parametrize("sampler", ["quantum", "bitflip", "uniform"])
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_detailed_balance(sampler, n):
    e = random_energy(n, n)
    ch = mcmc.Channel(sampler, 0.8, e, n, quench=quench(n))
    p = mcmc.channel_matrix(ch)
    np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-12)
    assert mcmc.detailed_balance_residual(p, boltzmann(e, n, 0.8)) <= 1e-12


@pytest.mark.parametrize("sampler", ["quantum", "bitflip", "uniform"])
def test_proposals_symmetric(sampler):
    for n in (1, 2, 3):
        r = mcmc.proposal_matrix(mcmc.Channel(sampler, 1.0, flat(n), n, quench=quench(n, t=1.7)))
        assert np.max(np.abs(r - r.T)) <= 1e-8


def test_telescope():
    p = mcmc.channel_matrix(mcmc.Channel("bitflip", 1.0, flat(1), 1))
    np.testing.assert_array_equal(mcmc.telescope(p, 1), p)
    np.testing.assert_allclose(mcmc.telescope(p, 2), np.eye(2))
    np.testing.assert_array_equal(mcmc.telescope(np.eye(4), 7), np.eye(4))
    with pytest.raises(ValueError):
        mcmc.telescope(np.array([[1.0, 0.2], [0.5, 0.5]]), 2)


def test_telescope_matches_channel_depth():
    e = random_energy(3, 11)
    ch = mcmc.Channel("bitflip", 0.7, e, 3, depth=3)
    p3 = mcmc.telescope(mcmc.channel_matrix(ch), 3)
    m = 100_000
    rng = mcmc.make_rng(4)
    for start in (0, 5):
        counts = np.bincount(mcmc.apply_channel_batch(ch, np.full(m, start), rng), minlength=8)
        col = p3[:, start]
        assert np.all(np.abs(counts - m * col) <= 3 * np.sqrt(m * col * (1 - col)) + 1e-9)


def test_spectral_gap_examples():
    u = mcmc.channel_matrix(mcmc.Channel("uniform", 1.0, flat(3), 3))
    assert mcmc.spectral_gap(u) == pytest.approx(1.0, abs=1e-10)
    b = mcmc.channel_matrix(mcmc.Channel("bitflip", 1.0, flat(1), 1))
    assert mcmc.spectral_gap(b) == pytest.approx(0.0, abs=1e-10)
    assert mcmc.spectral_gap(np.eye(4)) == 0.0


def test_spectral_gap_symmetrized_matches_general():
    e = random_energy(4, 2)
    p = mcmc.channel_matrix(mcmc.Channel("bitflip", 0.5, e, 4))
    mu = boltzmann(e, 4, 0.5)
    assert mcmc.spectral_gap(p, mu) == pytest.approx(mcmc.spectral_gap(p), abs=1e-10)


def test_balance_residual_examples():
    assert mcmc.detailed_balance_residual(np.eye(3), np.array([0.2, 0.3, 0.5])) == 0.0
    p = np.array([[1.0, 0.5], [0.0, 0.5]])
    assert mcmc.detailed_balance_residual(p, np.array([0.5, 0.5])) == pytest.approx(0.25)


def test_run_chain_determinism_and_record():
    e = random_energy(4, 7)
    ch = mcmc.Channel("quantum", 0.9, e, 4, quench=quench(4))
    a = mcmc.run_chain(ch, [0, 1, 0, 0], 300, seed=12)
    b = mcmc.run_chain(ch, [0, 1, 0, 0], 300, seed=12)
    assert a == b
    assert a != mcmc.run_chain(ch, [0, 1, 0, 0], 300, seed=13)
    np.testing.assert_allclose(a.energies, e.table()[a.states], atol=1e-12)
    prev = np.concatenate([[a.start], a.states[:-1]])
    assert np.all(a.states[~a.accepted] == prev[~a.accepted])
    assert np.all(a.states[a.accepted] == a.proposals[a.accepted])


def test_run_chain_uniform_flat():
    ch = mcmc.Channel("uniform", 1.0, flat(3), 3)
    rec = mcmc.run_chain(ch, [0, 0, 0], 100_000, seed=1)
    assert mcmc.total_variation(rec.empirical(), np.full(8, 1 / 8)) <= 0.02


def test_run_chain_mixes_to_boltzmann():
    n = 6
    e = random_energy(n, 21)
    ch = mcmc.Channel("bitflip", 1.0, e, n)
    mu = boltzmann(e, n, 1.0).probs
    gap = mcmc.spectral_gap(mcmc.channel_matrix(ch), mu)
    burn = int(np.ceil(10 / gap))
    steps = max(int(np.ceil(50 / gap)), 200_000) + burn
    rec = mcmc.run_chain(ch, [0] * n, steps, seed=2)
    assert mcmc.total_variation(rec.empirical(burn), mu) <= 0.05


def test_run_chain_large_n_unmemoized():
    ch = mcmc.Channel("bitflip", 1.0, lambda z: float(np.sum(z)), 22)
    rec = mcmc.run_chain(ch, [0] * 22, 50, seed=0)
    np.testing.assert_allclose(rec.energies, [bin(s).count("1") for s in rec.states])


def test_chain_csv(tmp_path):
    ch = mcmc.Channel("bitflip", 1.0, flat(3), 3)
    rec = mcmc.run_chain(ch, [1, 0, 0], 5, seed=0)
    path = tmp_path / "c.csv"
    rec.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,state,energy,proposal,accepted"
    assert len(lines) == 6


def test_channel_validation():
    with pytest.raises(ValueError):
        mcmc.Channel("gibbs", 1.0, flat(2), 2)
    with pytest.raises(ValueError):
        mcmc.Channel("bitflip", 0.0, flat(2), 2)
    with pytest.raises(ValueError):
        mcmc.Channel("bitflip", 1.0, flat(2), 2, depth=0)
    with pytest.raises(ValueError):
        mcmc.Channel("quantum", 1.0, flat(2), 2)
