import numpy as np
import pytest

from rydgen import mcmc
from rydgen.autoenc import init_model
from rydgen.designspace import (
    Design,
    boltzmann_bins,
    decoder_boltzmann_target,
    design_hash,
    evaluate,
    evaluate_many,
    fnv1a64,
    latent_costs,
    load_dataset,
    load_external_table,
    renyi_benchmark,
    synthetic_designs,
    synthetic_objective,
    validation_accept,
    write_csv_design,
    write_external_table,
    write_pgm,
)
from rydgen.errors import CapacityError
from rydgen.rydberg import TableEnergy


def scalar_cost(obj, pixels):
    """Independent loop implementation of the filter figure of merit."""
    x = [float(v) for v in np.asarray(pixels).ravel()]
    p = len(x)
    total = 0.0
    for k in range(len(obj.angles)):
        a = sum(obj.weights[k][i] * x[i] for i in range(p)) / p
        t = 1.0 / (1.0 + np.exp(-a))
        ideal = 1.0 if obj.angles[k] < 0.14 * np.pi else 0.0
        total += (ideal - t) / len(obj.angles)
    return 1.0 - total


def test_design_validation():
    with pytest.raises(ValueError):
        Design(np.array([[0, 2]]))
    with pytest.raises(ValueError):
        Design(np.zeros(4))


def test_fnv_reference_values():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C


def test_load_dataset(tmp_path):
    assert load_dataset(tmp_path) == []
    (tmp_path / "a.csv").write_text("1,0\n0,1\n")
    d = load_dataset(tmp_path)
    np.testing.assert_array_equal(d[0].pixels, [[1, 0], [0, 1]])


def test_load_dataset_order_and_formats(tmp_path):
    designs = synthetic_designs(50, (4, 6), seed=3)
    for k, des in enumerate(designs):
        (write_pgm if k % 2 else write_csv_design)(tmp_path / f"d{k:02d}.{'pgm' if k % 2 else 'csv'}", des)
    a = load_dataset(tmp_path)
    b = load_dataset(tmp_path)
    assert len(a) == 50
    for x, y, z in zip(a, b, designs):
        np.testing.assert_array_equal(x.pixels, z.pixels)
        np.testing.assert_array_equal(x.pixels, y.pixels)


def test_load_dataset_errors(tmp_path):
    (tmp_path / "a.csv").write_text("1,0\n0,1\n")
    (tmp_path / "b.csv").write_text("1,0,1\n")
    with pytest.raises(ValueError, match="b.csv"):
        load_dataset(tmp_path)
    (tmp_path / "b.csv").write_text("1,2\n0,1\n")
    with pytest.raises(ValueError, match="b.csv"):
        load_dataset(tmp_path)


def test_all_zero_cost_regression():
    obj = synthetic_objective((8, 8), angles=16, theta_star=0.14 * np.pi, seed=7)
    assert evaluate(obj, np.zeros((8, 8), dtype=np.uint8)) == pytest.approx(1.25, abs=1e-12)


def test_cost_matches_scalar_reimplementation():
    obj = synthetic_objective((8, 8), seed=7)
    for d in synthetic_designs(5, (8, 8), seed=2):
        assert evaluate(obj, d) == pytest.approx(scalar_cost(obj, d.pixels), abs=1e-12)


def test_cost_range_and_determinism():
    obj = synthetic_objective((8, 8), seed=7)
    designs = np.array([d.pixels for d in synthetic_designs(20, (8, 8), seed=4)])
    c = evaluate_many(obj, designs)
    assert np.all((c >= 0) & (c <= 2))
    first = evaluate(obj, designs[0])
    assert all(evaluate(obj, designs[0]) == first for _ in range(10_000))
    # traversal order: the weights permute with the pixels
    perm = np.random.default_rng(0).permutation(64)
    shuffled = synthetic_objective((8, 8), seed=7)
    object.__setattr__(shuffled, "weights", obj.weights[:, perm])
    assert evaluate(shuffled, designs[0].ravel()[perm].reshape(8, 8)) == pytest.approx(first, abs=1e-12)


def test_external_table(tmp_path):
    obj = synthetic_objective((3, 3), seed=1)
    designs = [d.pixels for d in synthetic_designs(4, (3, 3), seed=1)]
    designs = list({design_hash(d): d for d in designs}.values())
    path = tmp_path / "t.csv"
    # a table whose transmissivities equal the ideal has zero integral term
    write_external_table(path, designs, [1.0] * len(designs))
    ext = load_external_table(path, (3, 3))
    for d in designs:
        assert evaluate(ext, d) == 1.0
    missing = np.eye(3, dtype=np.uint8)
    assert design_hash(missing) not in ext.table
    with pytest.raises(KeyError):
        evaluate(ext, missing)
    with pytest.raises(ValueError):
        evaluate(obj, np.zeros((2, 2)))


def test_target_examples():
    model = init_model(16, (8,), 3, seed=0)
    obj = synthetic_objective((4, 4), seed=0)
    hot = decoder_boltzmann_target(model, obj, 1e9, bins=4)
    costs = latent_costs(model, obj)
    np.testing.assert_allclose(hot.probs, np.bincount(np.searchsorted(hot.edges, costs, "right").clip(1, 4) - 1, minlength=4) / 8, atol=1e-8)
    const = decoder_boltzmann_target(None, obj, 0.5, costs=np.full(8, 0.3))
    assert const.bins == 1 and const.probs[0] == 1.0


def test_target_hand_enumeration():
    tau = 0.6
    costs = np.array([0, 1, 1, 0, 1, 0, 1, 1], dtype=float)
    t = decoder_boltzmann_target(None, None, tau, bins=2, costs=costs)
    w = np.array([3.0, 5.0 * np.exp(-1 / tau)])
    np.testing.assert_allclose(t.probs, w / w.sum(), atol=1e-12)
    shifted = decoder_boltzmann_target(None, None, tau, bins=2, costs=costs + 17.0)
    np.testing.assert_allclose(shifted.probs, t.probs, atol=1e-12)
    assert abs(t.probs.sum() - 1) <= 1e-12


def test_target_capacity():
    with pytest.raises(CapacityError):
        decoder_boltzmann_target(init_model(4, (2,), 17), synthetic_objective((2, 2)), 1.0)


def test_validation_accept(rng):
    assert validation_accept(1.0, 1.0, 0.3, rng)
    assert validation_accept(1.0, 0.2, 0.3, rng)
    m = 100_000
    tau = 0.3
    hits = sum(validation_accept(0.0, tau * np.log(2), tau, rng) for _ in range(m))
    assert abs(hits - m / 2) <= 3 * np.sqrt(m / 4)


def _bench_setup():
    model = init_model(64, (32,), 6, seed=1)
    obj = synthetic_objective((8, 8), seed=7)
    ch = mcmc.Channel("bitflip", 1.0, TableEnergy(np.zeros(64)), 6, depth=3)
    return model, obj, ch


def test_oracle_benchmark_small():
    model, obj, ch = _bench_setup()
    rep = renyi_benchmark(model, ch, obj, 1.0, n_samples=5000, oracle=True)
    assert rep.renyi <= 0.01
    assert rep.alpha == 0.999 and rep.sampler == "oracle"


def test_oracle_benchmark_shrinks_with_samples():
    model, obj, ch = _bench_setup()
    vals = [np.mean([renyi_benchmark(model, ch, obj, 0.5, n_samples=m, oracle=True, seed=s).kl for s in range(5)]) for m in (500, 5000, 50_000)]
    assert vals[0] > vals[1] > vals[2]


def test_benchmark_deterministic(tmp_path):
    model, obj, ch = _bench_setup()
    data = synthetic_designs(8, (8, 8), seed=1)
    a = renyi_benchmark(model, ch, obj, 0.3, n_samples=400, seed=5, dataset=data)
    b = renyi_benchmark(model, ch, obj, 0.3, n_samples=400, seed=5, dataset=data)
    assert a.renyi == b.renyi and np.array_equal(a.p_hat, b.p_hat)
    assert a.depth == 3 and a.sampler == "bitflip"
    a.write_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().startswith("bin_lo,bin_hi,p_hat,mu_hat")
    with pytest.raises(ValueError):
        renyi_benchmark(model, ch, obj, 0.3, n_samples=50)
    with pytest.raises(ValueError):
        renyi_benchmark(model, ch, obj, 0.3, alpha=1.0)


def test_boltzmann_bins_matches_bin_costs():
    from rydgen.metrics import bin_costs

    c = np.random.default_rng(0).random(32)
    a = boltzmann_bins(c, 0.4, 5)
    b = bin_costs(c, np.exp(-c / 0.4), 5)
    np.testing.assert_allclose(a.probs, b.probs, atol=1e-12)
