"""Property-check suites shared by the command line and the test-suite.

Each suite returns a ``CheckResult`` with a pass flag and a JSON-friendly
detail dict; failures carry a witness.  ``inject_fault`` deliberately
corrupts the object under test so the failure path itself can be exercised.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autoenc, mcmc
from .bits import all_bitstrings, index_label
from .designspace import synthetic_objective
from .lattice import build_king_subgraph, graph_from_edges
from .metrics import check_metric_axioms, expected_isometry_gap, hamming, quadratic_hamming_matrix
from .quench import QuenchSpec
from .rydberg import ClassicalEnergy, RydbergParams, TableEnergy, boltzmann

SUITES = ("metric", "balance", "isometry", "gradient")


@dataclass
class CheckResult:
    suite: str
    ok: bool
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"suite": self.suite, "ok": self.ok, **self.detail}


def metric_suite(atoms=None, n_hamming: int = 4, inject_fault: bool = False) -> CheckResult:
    """Metric axioms for Hamming (all n-bit strings) and the lattice metric."""
    pts = list(all_bitstrings(n_hamming))
    if inject_fault:
        # break symmetry on one ordered pair
        a0, b0 = pts[1].tobytes(), pts[2].tobytes()

        def dist(a, b):
            return hamming(a, b) + (0.5 if (a.tobytes(), b.tobytes()) == (a0, b0) else 0.0)
    else:
        dist = hamming
    reports = {"hamming": check_metric_axioms(dist, pts)}
    atoms = build_king_subgraph(2, 3, 1.0) if atoms is None else atoms
    lattice_pts = all_bitstrings(atoms.n)
    reports["quadratic_hamming"] = check_metric_axioms(
        None, list(lattice_pts), matrix=quadratic_hamming_matrix(atoms, lattice_pts), atol=1e-9
    )
    ok = all(r.ok for r in reports.values())
    return CheckResult("metric", ok, {name: r.summary() for name, r in reports.items()})


def _balance_witness(p, mu):
    flow = p * mu[None, :]
    r = np.abs(flow - flow.T)
    i, j = np.unravel_index(np.argmax(r), r.shape)
    return int(i), int(j), float(r[i, j])


def balance_suite(n: int = 3, seed: int = 0, atol: float = 1e-12, quench=None, inject_fault: bool = False) -> CheckResult:
    """Detailed balance of the exact MH kernel for every sampler, random energies."""
    rng = np.random.Generator(np.random.Philox(seed))
    energy = TableEnergy(rng.normal(0.0, 1.0, 1 << n))
    tau = 0.7
    if quench is None:
        atoms = build_king_subgraph(1, n, 7.0)
        quench = QuenchSpec(RydbergParams(atoms, 2 * np.pi, 2 * np.pi, 862690.0 * 2 * np.pi), 1.0)
    mu = boltzmann(energy, n, tau).probs
    detail, ok = {}, True
    for sampler in ("quantum", "bitflip", "uniform"):
        ch = mcmc.Channel(sampler, tau, energy, n, depth=1, quench=quench)
        p = mcmc.channel_matrix(ch)
        if inject_fault and sampler == "bitflip":
            p = p.copy()
            p[1, 0] += 1e-3
            p[0, 0] -= 1e-3
        i, j, res = _balance_witness(p, mu)
        good = res <= atol
        ok &= good
        detail[sampler] = {"residual": res} if good else {"residual": res, "witness": [index_label(i, n), index_label(j, n)]}
    return CheckResult("balance", bool(ok), detail)


def isometry_suite(n: int = 4, atol: float = 1e-12, model=None, inject_fault: bool = False) -> CheckResult:
    """The expected isometry gap vanishes for the identity embedding.

    Latent bits are used directly as pixels, so d_X is Hamming / n and the
    gap at scale n must be zero.  A trained ``model`` is reported but not
    judged, since no threshold applies to it.
    """
    pts = all_bitstrings(n)
    decoded = {i: [pts[i].astype(float)] for i in range(len(pts))}
    if inject_fault:
        decoded[1] = [1.0 - pts[1].astype(float)]
    pairs = [(pts[i], pts[j], decoded[i], decoded[j]) for i in range(len(pts)) for j in range(i + 1, len(pts))]
    gap = expected_isometry_gap(pairs, scale=float(n))
    detail = {"identity_gap": gap}
    if model is not None:
        lat = all_bitstrings(model.latent_n)
        xs = autoenc.binarize(autoenc.decode(model, lat.astype(float)))
        m_pairs = [(lat[i], lat[j], [xs[i]], [xs[j]]) for i in range(len(lat)) for j in range(i + 1, len(lat))]
        detail["model_gap"] = expected_isometry_gap(m_pairs)
    return CheckResult("isometry", gap <= atol, detail)


def _toy_problem(seed: int):
    """8-pixel, 2-layer model with every loss term switched on."""
    rng = np.random.Generator(np.random.Philox(seed))
    model = autoenc.init_model(8, hidden=(6,), latent_n=4, seed=seed)
    x = (rng.random((5, 8)) < 0.5).astype(float)
    eps = (rng.random((5, 4)) < 0.3).astype(float)
    atoms = build_king_subgraph(2, 2, 1.0)
    energy = ClassicalEnergy(RydbergParams(atoms, 1.0, 1.0, 2.0), sign=-1)
    channel = mcmc.Channel("bitflip", 1.0, energy, 4)
    objective = synthetic_objective((2, 4), seed=seed)
    graph = graph_from_edges(4, [(0, 1), (1, 3), (2, 3), (0, 2)])
    # a fixed distance scale: the per-batch default is a stop-gradient constant
    cfg = autoenc.TrainConfig(w_rec=1.0, w_energy=0.1, w_is=0.2, w_dist=0.3, distance_scale=1.0)
    return model, x, eps, cfg, channel, objective, graph


def gradient_suite(probes: int = 20, seed: int = 0, rtol: float = 1e-4, h: float = 1e-5, inject_fault: bool = False) -> CheckResult:
    """Straight-through gradients vs central differences on the frozen surrogate.

    Channel noise and quantizer noise are frozen so the loss is a smooth
    function of the weights.  Also checks the distance-loss subgradient
    against differences in the decoded pixels.
    """
    model, x, eps, cfg, channel, objective, graph = _toy_problem(seed)
    _, grads, extras = autoenc.loss_and_grad(model, x, eps, cfg, channel, objective, graph, None)
    noise, scale = extras["noise"], extras["energy_scale"]

    def total():
        return autoenc.loss_and_grad(model, x, eps, cfg, channel, objective, graph, scale, frozen_noise=noise)[0].total

    rng = np.random.Generator(np.random.Philox(seed + 1))
    params = model.params()
    worst, witness = 0.0, None
    for _ in range(probes):
        k = int(rng.integers(len(params)))
        idx = tuple(int(rng.integers(s)) for s in params[k].shape)
        old = params[k][idx]
        params[k][idx] = old + h
        up = total()
        params[k][idx] = old - h
        down = total()
        params[k][idx] = old
        fd = (up - down) / (2 * h)
        an = grads[k][idx] * (1.5 if inject_fault else 1.0)
        err = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
        if err > worst:
            worst, witness = err, {"param": k, "index": list(idx), "analytic": float(an), "numeric": float(fd)}

    # distance-loss subgradient in pixel space
    prng = np.random.Generator(np.random.Philox(seed + 2))
    lat = list((prng.random((4, 5)) < 0.5).astype(np.uint8))
    dec = prng.random((4, 6))
    _, g = autoenc.distance_match_loss(lat, dec, scale=1.7)
    dist_worst = 0.0
    for i in range(dec.shape[0]):
        for j in range(dec.shape[1]):
            d = dec.copy()
            d[i, j] += h
            up = autoenc.distance_match_loss(lat, d, scale=1.7)[0]
            d[i, j] -= 2 * h
            down = autoenc.distance_match_loss(lat, d, scale=1.7)[0]
            fd = (up - down) / (2 * h)
            dist_worst = max(dist_worst, abs(g[i, j] - fd) / max(abs(g[i, j]), abs(fd), 1e-8))
    ok = worst <= rtol and dist_worst <= rtol
    detail = {"max_rel_error": worst, "distance_max_rel_error": dist_worst}
    if not ok:
        detail["witness"] = witness
    return CheckResult("gradient", bool(ok), detail)


def run_suite(name: str, inject_fault: bool = False, **kw) -> CheckResult:
    runners = {"metric": metric_suite, "balance": balance_suite, "isometry": isometry_suite, "gradient": gradient_suite}
    if name not in runners:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return runners[name](inject_fault=inject_fault, **kw)
