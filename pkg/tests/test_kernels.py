"""numba and numpy kernels must agree exactly on identical inputs."""
import os
import subprocess
import sys

import numpy as np
import pytest

from rydgen import kernels
from rydgen._accel import HAVE_NUMBA

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")


def _inputs(n=5, chains=40, depth=4, seed=0):
    r = np.random.default_rng(seed)
    dim = 1 << n
    linear = r.normal(size=n)
    pair = np.abs(r.normal(size=(n, n)))
    pair = pair + pair.T
    np.fill_diagonal(pair, 0.0)
    k = r.random((dim, dim))
    cdf = np.ascontiguousarray(np.cumsum(k / k.sum(axis=0), axis=0).T)
    return dict(
        n=n,
        linear=linear,
        pair=pair,
        cdf=cdf,
        block=r.normal(size=(dim, 3)) + 1j * r.normal(size=(dim, 3)),
        prev=r.normal(size=(dim, 3)) + 1j * r.normal(size=(dim, 3)),
        z0=r.integers(0, dim, chains).astype(np.int64),
        u=(r.random((chains, depth)), r.integers(0, dim, (chains, depth)).astype(np.int64), r.random((chains, depth))),
        t=(r.random(200), r.integers(0, dim, 200).astype(np.int64), r.random(200)),
    )


@needs_numba
def test_diag_energies_agree():
    d = _inputs()
    a = kernels.diag_energies_numpy(d["n"], d["linear"], d["pair"])
    b = kernels.diag_energies_numba(d["n"], d["linear"], d["pair"])
    np.testing.assert_array_equal(a, b)


@needs_numba
def test_apply_h_and_cheb_step_agree():
    d = _inputs()
    diag = kernels.diag_energies_numpy(d["n"], d["linear"], d["pair"])
    up = 0.4 * np.exp(-0.2j)
    np.testing.assert_allclose(
        kernels.apply_h_numpy(diag, up, d["n"], d["block"]), kernels.apply_h_numba(diag, up, d["n"], d["block"]), atol=1e-12
    )
    args = (diag, up, d["n"], d["block"], d["prev"], 7.0, 0.3)
    np.testing.assert_allclose(kernels.cheb_step_numpy(*args), kernels.cheb_step_numba(*args), atol=1e-12)


def test_apply_h_matches_dense():
    from rydgen.lattice import build_king_subgraph
    from rydgen.quench import QuenchSpec, build_hamiltonian, hamiltonian_operator
    from rydgen.rydberg import RydbergParams

    p = RydbergParams(build_king_subgraph(1, 3, 1.0), 1.3, 0.4, 2.0)
    spec = QuenchSpec(p, 1.0, phase=0.7)
    x = np.random.default_rng(1).normal(size=(8, 2)) + 0j
    np.testing.assert_allclose(hamiltonian_operator(spec) @ x, build_hamiltonian(spec) @ x, atol=1e-12)


@needs_numba
@pytest.mark.parametrize("kind", [kernels.QUANTUM, kernels.BITFLIP, kernels.UNIFORM])
def test_mh_kernels_agree(kind):
    d = _inputs()
    e = kernels.diag_energies_numpy(d["n"], d["linear"], d["pair"])
    a = kernels.mh_final_numpy(e, kind, d["cdf"], d["n"], d["z0"], 0.7, *d["u"])
    b = kernels.mh_final_numba(e, kind, d["cdf"], d["n"], d["z0"], 0.7, *d["u"])
    np.testing.assert_array_equal(a, b)
    ta = kernels.mh_trajectory_numpy(e, kind, d["cdf"], d["n"], 3, 0.7, *d["t"])
    tb = kernels.mh_trajectory_numba(e, kind, d["cdf"], d["n"], 3, 0.7, *d["t"])
    for x, y in zip(ta, tb):
        np.testing.assert_array_equal(x, y)


def test_env_flag_selects_numpy_path():
    code = (
        "from rydgen import kernels, USE_NUMBA;"
        "assert not USE_NUMBA;"
        "assert kernels.mh_final is kernels.mh_final_numpy;"
        "from rydgen import checks;"
        "assert checks.balance_suite().ok"
    )
    env = dict(os.environ, RYDGEN_DISABLE_NUMBA="1")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr


def test_chain_identical_across_backends():
    code = (
        "import numpy as np;"
        "from rydgen import mcmc;"
        "from rydgen.rydberg import TableEnergy;"
        "e = TableEnergy(np.random.default_rng(5).normal(size=32));"
        "r = mcmc.run_chain(mcmc.Channel('bitflip', 0.6, e, 5), [0]*5, 500, 9);"
        "print(','.join(map(str, r.states.tolist())))"
    )
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, RYDGEN_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        outs.append(res.stdout)
    assert outs[0] == outs[1]
