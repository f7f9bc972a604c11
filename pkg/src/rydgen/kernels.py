"""Hot inner loops.

Every kernel exists twice: a numba-compiled loop and a vectorized numpy
equivalent.  The public names at the bottom of the module are bound to one
or the other by :mod:`rydgen._accel`.  Both variants consume identical
inputs (including pre-drawn random numbers) and must return identical
results; ``tests/test_kernels.py`` holds them to that.

Sampler codes: 0 = quantum (column CDF lookup), 1 = single bit flip,
2 = uniform.
"""
import numpy as np

from ._accel import njit, pick

QUANTUM, BITFLIP, UNIFORM = 0, 1, 2


# --------------------------------------------------------------------------
# diagonal energies over the full basis


def _diag_energies_py(n, linear, pair):
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    on = [((idx >> i) & 1).astype(bool) for i in range(n)]
    out = np.zeros(dim)
    # same accumulation order as the loop kernel, so results are bit-identical
    for i in range(n):
        out += np.where(on[i], linear[i], 0.0)
        for j in range(i + 1, n):
            out += np.where(on[i] & on[j], pair[i, j], 0.0)
    return out


def _diag_energies_nb(n, linear, pair):
    dim = 1 << n
    out = np.zeros(dim)
    for z in range(dim):
        e = 0.0
        for i in range(n):
            if (z >> i) & 1:
                e += linear[i]
                for j in range(i + 1, n):
                    if (z >> j) & 1:
                        e += pair[i, j]
        out[z] = e
    return out


# --------------------------------------------------------------------------
# Rydberg Hamiltonian applied to a block of vectors, matrix free.
# up = <1|h|0> on every site, the opposite matrix element is conj(up).


def _apply_h_py(diag, up, n, x):
    y = diag[:, None] * x
    idx = np.arange(diag.shape[0], dtype=np.int64)
    down = np.conj(up)
    for i in range(n):
        src = idx ^ (1 << i)
        coef = np.where((idx >> i) & 1, up, down)
        y += coef[:, None] * x[src]
    return y


def _apply_h_nb(diag, up, n, x):
    dim, m = x.shape
    y = np.empty_like(x)
    down = np.conj(up)
    for z in range(dim):
        d = diag[z]
        for c in range(m):
            y[z, c] = d * x[z, c]
        for i in range(n):
            src = z ^ (1 << i)
            coef = up if (z >> i) & 1 else down
            for c in range(m):
                y[z, c] += coef * x[src, c]
    return y


def _cheb_step_py(diag, up, n, tk, tkm1, scale, shift):
    """Return 2 * (H - shift) / scale @ tk - tkm1."""
    hx = _apply_h_py(diag, up, n, tk)
    return (2.0 / scale) * (hx - shift * tk) - tkm1


def _cheb_step_nb(diag, up, n, tk, tkm1, scale, shift):
    dim, m = tk.shape
    out = np.empty_like(tk)
    down = np.conj(up)
    f = 2.0 / scale
    for z in range(dim):
        d = diag[z] - shift
        for c in range(m):
            out[z, c] = d * tk[z, c]
        for i in range(n):
            src = z ^ (1 << i)
            coef = up if (z >> i) & 1 else down
            for c in range(m):
                out[z, c] += coef * tk[src, c]
        for c in range(m):
            out[z, c] = f * out[z, c] - tkm1[z, c]
    return out


# --------------------------------------------------------------------------
# Metropolis-Hastings chains over integer-encoded bitstrings


def _propose_py(kind, cdf, n, z, u, b):
    if kind == BITFLIP:
        k = min(int(u * n), n - 1)
        return z ^ (1 << k)
    if kind == UNIFORM:
        return int(b)
    row = cdf[z]
    k = int(np.searchsorted(row, u * row[-1], side="right"))
    return min(k, row.shape[0] - 1)


def _mh_trajectory_py(energy, kind, cdf, n, z0, tau, u_prop, bits, u_acc):
    steps = u_prop.shape[0]
    states = np.empty(steps, dtype=np.int64)
    proposals = np.empty(steps, dtype=np.int64)
    accepted = np.zeros(steps, dtype=np.bool_)
    z = int(z0)
    for s in range(steps):
        zp = _propose_py(kind, cdf, n, z, u_prop[s], bits[s])
        de = energy[zp] - energy[z]
        if de <= 0.0 or u_acc[s] < np.exp(-de / tau):
            z = zp
            accepted[s] = True
        states[s] = z
        proposals[s] = zp
    return states, proposals, accepted


def _search_right(row, x):
    lo = 0
    hi = row.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if row[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    if lo > row.shape[0] - 1:
        lo = row.shape[0] - 1
    return lo


_search_right_nb = njit(_search_right)


def _mh_trajectory_nb(energy, kind, cdf, n, z0, tau, u_prop, bits, u_acc):
    steps = u_prop.shape[0]
    states = np.empty(steps, dtype=np.int64)
    proposals = np.empty(steps, dtype=np.int64)
    accepted = np.zeros(steps, dtype=np.bool_)
    z = z0
    for s in range(steps):
        if kind == 1:
            k = int(u_prop[s] * n)
            if k > n - 1:
                k = n - 1
            zp = z ^ (1 << k)
        elif kind == 2:
            zp = bits[s]
        else:
            row = cdf[z]
            zp = _search_right_nb(row, u_prop[s] * row[row.shape[0] - 1])
        de = energy[zp] - energy[z]
        if de <= 0.0 or u_acc[s] < np.exp(-de / tau):
            z = zp
            accepted[s] = True
        states[s] = z
        proposals[s] = zp
    return states, proposals, accepted


def _mh_final_py(energy, kind, cdf, n, z0, tau, u_prop, bits, u_acc):
    z = np.array(z0, dtype=np.int64, copy=True)
    chains, depth = u_prop.shape
    for s in range(depth):
        u = u_prop[:, s]
        if kind == BITFLIP:
            k = np.minimum((u * n).astype(np.int64), n - 1)
            zp = z ^ (np.int64(1) << k)
        elif kind == UNIFORM:
            zp = bits[:, s].astype(np.int64)
        else:
            rows = cdf[z]
            thresh = u * rows[:, -1]
            zp = np.minimum((rows <= thresh[:, None]).sum(axis=1), cdf.shape[1] - 1)
        de = energy[zp] - energy[z]
        with np.errstate(over="ignore"):
            ok = (de <= 0.0) | (u_acc[:, s] < np.exp(-de / tau))
        z = np.where(ok, zp, z)
    return z


def _mh_final_nb(energy, kind, cdf, n, z0, tau, u_prop, bits, u_acc):
    chains, depth = u_prop.shape
    out = np.empty(chains, dtype=np.int64)
    for c in range(chains):
        z = z0[c]
        for s in range(depth):
            if kind == 1:
                k = int(u_prop[c, s] * n)
                if k > n - 1:
                    k = n - 1
                zp = z ^ (1 << k)
            elif kind == 2:
                zp = bits[c, s]
            else:
                row = cdf[z]
                zp = _search_right_nb(row, u_prop[c, s] * row[row.shape[0] - 1])
            de = energy[zp] - energy[z]
            if de <= 0.0 or u_acc[c, s] < np.exp(-de / tau):
                z = zp
        out[c] = z
    return out


diag_energies_numba = njit(_diag_energies_nb)
apply_h_numba = njit(_apply_h_nb)
cheb_step_numba = njit(_cheb_step_nb)
mh_trajectory_numba = njit(_mh_trajectory_nb)
mh_final_numba = njit(_mh_final_nb)

diag_energies_numpy = _diag_energies_py
apply_h_numpy = _apply_h_py
cheb_step_numpy = _cheb_step_py
mh_trajectory_numpy = _mh_trajectory_py
mh_final_numpy = _mh_final_py

diag_energies = pick(diag_energies_numba, diag_energies_numpy)
apply_h = pick(apply_h_numba, apply_h_numpy)
cheb_step = pick(cheb_step_numba, cheb_step_numpy)
mh_trajectory = pick(mh_trajectory_numba, mh_trajectory_numpy)
mh_final = pick(mh_final_numba, mh_final_numpy)
