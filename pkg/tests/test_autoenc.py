import numpy as np
import pytest
from hypothesis import given, strategies as st

from rydgen import autoenc, mcmc
from rydgen.checks import _toy_problem
from rydgen.designspace import synthetic_designs, synthetic_objective
from rydgen.lattice import build_king_subgraph, graph_from_edges
from rydgen.quench import QuenchSpec
from rydgen.rydberg import ClassicalEnergy, RydbergParams


def test_init_model():
    a = autoenc.init_model(16, (8,), 12, seed=3)
    b = autoenc.init_model(16, (8,), 12, seed=3)
    for x, y in zip(a.params(), b.params()):
        np.testing.assert_array_equal(x, y)
    out = autoenc.decode(a, np.zeros(12))
    assert out.shape == (16,) and np.all((out > 0) & (out < 1))
    with pytest.raises(ValueError):
        autoenc.init_model(16, (0,), 4)


def test_encode_decode_contracts():
    m = autoenc.init_model(9, (5,), 3, seed=0)
    x = np.ones(9)
    z1 = autoenc.encode(m, x)
    assert z1.shape == (3,) and np.all(np.isfinite(z1))
    np.testing.assert_array_equal(z1, autoenc.encode(m, x))
    with pytest.raises(ValueError):
        autoenc.encode(m, np.ones(8))
    with pytest.raises(ValueError):
        autoenc.decode(m, np.ones(4))


def test_quantizer_examples():
    q = autoenc.quantize([0.3])
    assert q.spin[0] == 1.0
    assert q.relaxed[0] == pytest.approx(0.29131, abs=1e-5)
    assert q.noise[0] == pytest.approx(0.70869, abs=1e-5)
    assert autoenc.quantize([-2.0]).spin[0] == -1.0
    assert autoenc.quantize([0.0]).spin[0] == 1.0
    g = autoenc.quantizer_grad(0.3)
    assert g == pytest.approx(0.91513, abs=1e-5)
    h = 1e-6
    assert g == pytest.approx((np.tanh(0.3 + h) - np.tanh(0.3 - h)) / (2 * h), abs=1e-6)


@given(st.lists(st.floats(-20, 20), min_size=1, max_size=16))
def test_quantizer_identity(zeta):
    q = autoenc.quantize(zeta)
    np.testing.assert_array_equal(q.spin, q.relaxed + q.noise)
    assert np.all(np.abs(q.spin) == 1)


@given(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=16))
def test_spin_binary_round_trip(s):
    z = autoenc.spin_to_binary(s)
    np.testing.assert_array_equal(autoenc.binary_to_spin(z), s)


def test_spin_binary_examples():
    np.testing.assert_array_equal(autoenc.spin_to_binary([-1, 1]), [0, 1])
    np.testing.assert_array_equal(autoenc.spin_to_binary([-1, -1, -1]), [0, 0, 0])


def test_reconstruction_loss():
    chi = np.array([1, 0, 1, 1])
    loss, flag = autoenc.reconstruction_loss(chi, chi.astype(float), return_flag=True)
    assert flag and loss == pytest.approx(1e-7, rel=1e-3)
    assert autoenc.reconstruction_loss(chi, np.full(4, 0.5)) == pytest.approx(np.log(2))
    x = np.array([0.3, 0.6, 0.2, 0.9])
    base = autoenc.reconstruction_loss(chi, x)
    for k in range(4):
        y = x.copy()
        y[k] += 0.05 if chi[k] else -0.05
        assert autoenc.reconstruction_loss(chi, y) < base


def test_energy_match_loss():
    assert autoenc.energy_match_loss(2.0, [1.0, 1.0], 2.0) == 0.0
    assert autoenc.energy_match_loss(1.0, [0.0, 2.0], 1.0) == pytest.approx(1.0)
    base = autoenc.energy_match_loss(1.3, [0.2, 0.9], 0.7)
    assert autoenc.energy_match_loss(3 * 1.3, [0.6, 2.7], 0.7) == pytest.approx(9 * base)
    with pytest.raises(ValueError):
        autoenc.energy_match_loss(1.0, [], 1.0)


def test_is_penalty():
    tri = graph_from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert autoenc.is_penalty_loss(tri, [0, 0, 0]) == 0
    assert autoenc.is_penalty_loss(graph_from_edges(2, [(0, 1)]), [1, 1]) == 1
    assert autoenc.is_penalty_loss(tri, [1, 1, 1]) == 3


def test_distance_match_loss():
    z = [np.array([0, 0]), np.array([0, 0]), np.array([0, 0])]
    x = np.full((3, 4), 0.3)
    loss, g = autoenc.distance_match_loss(z, x)
    assert loss == 0.0 and np.all(g == 0)
    # residuals +0.2 (d_Z 1 vs 0.8) and -0.4 (d_Z 1 vs 1.4)
    lat = [np.array([0]), np.array([1])]
    loss_a, _ = autoenc.distance_match_loss(lat, np.array([[0.0], [0.8]]), scale=1.0)
    loss_b, _ = autoenc.distance_match_loss(lat, np.array([[0.0], [1.4]]), scale=1.0)
    assert (loss_a + loss_b) / 2 == pytest.approx(0.3)
    with pytest.raises(ValueError):
        autoenc.distance_match_loss(lat[:1], np.zeros((1, 1)))


def test_distance_subgradient_fd():
    r = np.random.default_rng(0)
    lat = list((r.random((4, 5)) < 0.5).astype(np.uint8))
    dec = r.random((4, 6))
    _, g = autoenc.distance_match_loss(lat, dec, scale=1.3)
    h = 1e-6
    for i in range(4):
        for j in range(6):
            d = dec.copy()
            d[i, j] += h
            up = autoenc.distance_match_loss(lat, d, scale=1.3)[0]
            d[i, j] -= 2 * h
            down = autoenc.distance_match_loss(lat, d, scale=1.3)[0]
            fd = (up - down) / (2 * h)
            assert g[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_breakdown_total_is_weighted_sum():
    model, x, eps, cfg, channel, objective, graph = _toy_problem(0)
    loss, _, _ = autoenc.loss_and_grad(model, x, eps, cfg, channel, objective, graph, None)
    expect = cfg.w_rec * loss.reconstruction + cfg.w_energy * loss.energy_match + cfg.w_is * loss.is_penalty + cfg.w_dist * loss.distance_match
    assert loss.total == pytest.approx(expect, abs=1e-10)


def test_gradient_matches_finite_differences():
    model, x, eps, cfg, channel, objective, graph = _toy_problem(1)
    _, grads, extras = autoenc.loss_and_grad(model, x, eps, cfg, channel, objective, graph, None)
    noise, scale = extras["noise"], extras["energy_scale"]
    params = model.params()
    r = np.random.default_rng(2)
    h = 1e-5
    for _ in range(20):
        k = int(r.integers(len(params)))
        idx = tuple(int(r.integers(s)) for s in params[k].shape)
        old = params[k][idx]
        vals = []
        for step in (h, -h):
            params[k][idx] = old + step
            vals.append(autoenc.loss_and_grad(model, x, eps, cfg, channel, objective, graph, scale, frozen_noise=noise)[0].total)
        params[k][idx] = old
        fd = (vals[0] - vals[1]) / (2 * h)
        assert grads[k][idx] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def _small_setup(sampler="bitflip", t=1.0):
    atoms = build_king_subgraph(2, 2, 1.0)
    params = RydbergParams(atoms, 1.0, 1.0, 2.0)
    energy = ClassicalEnergy(params, sign=-1).ground_shifted()
    quench = QuenchSpec(params, t) if sampler == "quantum" else None
    channel = mcmc.Channel(sampler, 1.0, energy, 4, depth=3, quench=quench)
    data = synthetic_designs(6, (3, 3), seed=0)
    obj = synthetic_objective((3, 3), seed=0)
    graph = graph_from_edges(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
    return autoenc.init_model(9, (6,), 4, seed=0), data, channel, obj, graph


def test_zero_weights_leave_model_unchanged():
    model, data, channel, obj, graph = _small_setup()
    before = [p.copy() for p in model.params()]
    cfg = autoenc.TrainConfig(learning_rate=0.5, w_rec=0, w_energy=0, w_is=0, w_dist=0)
    loss = autoenc.train_epoch(model, data, channel, obj, graph, cfg, mcmc.make_rng(0))
    assert loss.total == 0.0
    for a, b in zip(before, model.params()):
        np.testing.assert_array_equal(a, b)


def test_zero_learning_rate_leaves_model_unchanged():
    model, data, channel, obj, graph = _small_setup()
    before = [p.copy() for p in model.params()]
    cfg = autoenc.TrainConfig(learning_rate=0.0, w_is=1.0, w_dist=1.0)
    autoenc.train_epoch(model, data, channel, obj, graph, cfg, mcmc.make_rng(0))
    for a, b in zip(before, model.params()):
        np.testing.assert_array_equal(a, b)


def test_quantum_t0_noise_is_zero(monkeypatch):
    model, data, channel, obj, graph = _small_setup("quantum", t=0.0)
    seen = []
    orig = autoenc.loss_and_grad

    def spy(model, x, eps, *a, **k):
        seen.append(np.asarray(eps).copy())
        return orig(model, x, eps, *a, **k)

    monkeypatch.setattr(autoenc, "loss_and_grad", spy)
    autoenc.train(model, data, channel, obj, graph, autoenc.TrainConfig(learning_rate=0.1, epochs=3))
    assert seen and all(np.all(e == 0) for e in seen)


def test_training_deterministic():
    runs = []
    for _ in range(2):
        model, data, channel, obj, graph = _small_setup()
        hist = autoenc.train(model, data, channel, obj, graph, autoenc.TrainConfig(learning_rate=0.2, epochs=5, seed=4))
        runs.append([h.as_row() for h in hist])
    assert runs[0] == runs[1]


def test_is_penalty_descends():
    model, data, channel, obj, graph = _small_setup()
    cfg = autoenc.TrainConfig(learning_rate=0.05, w_rec=0, w_energy=0, w_is=1.0)
    x = np.vstack([d.flat for d in data]).astype(float)
    rng = mcmc.make_rng(0)
    state = autoenc.TrainState()
    pen = []
    for _ in range(50):
        z = autoenc.spin_to_binary(autoenc.quantize(autoenc.encode(model, x)).spin)
        pen.append(np.mean([autoenc.is_penalty_loss(graph, zz) for zz in z]))
        autoenc.train_epoch(model, data, channel, obj, graph, cfg, rng, state)
    assert pen[-1] <= pen[0]
    assert all(b <= a for a, b in zip(pen, pen[1:]))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_loss_raises():
    from rydgen.errors import TrainingError

    model, data, channel, obj, graph = _small_setup()
    model.dec_w[0][:] = np.nan
    with pytest.raises(TrainingError):
        autoenc.train_epoch(model, data, channel, obj, graph, autoenc.TrainConfig(), mcmc.make_rng(0))


def test_model_persistence(tmp_path):
    model = autoenc.init_model(9, (6, 5), 4, seed=2)
    path = tmp_path / "m.json"
    autoenc.save_model(model, path)
    back = autoenc.load_model(path)
    for a, b in zip(model.params(), back.params()):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        autoenc.load_model(path, expect_pixels=10)
    text = path.read_text().replace("tanh-sign-st", "other")
    path.write_text(text)
    with pytest.raises(ValueError):
        autoenc.load_model(path)
